//! Blue-to-red pseudo-color lookup table used for difference maps.
//!
//! 256 entries, linearly interpolated between these control points
//! (gray value -> RGB):
//!
//! | gray  | color       |
//! |-------|-------------|
//! | 0.000 | (0, 0, 0.5) |
//! | 0.125 | (0, 0, 1)   |
//! | 0.375 | (0, 1, 1)   |
//! | 0.625 | (1, 1, 0)   |
//! | 0.875 | (1, 0, 0)   |
//! | 1.000 | (0.5, 0, 0) |
//!
//! A gray value `g` maps to entry `round(g * 255)`.

use std::sync::OnceLock;

const STOPS: [(f64, [f64; 3]); 6] = [
    (0.0, [0.0, 0.0, 0.5]),
    (0.125, [0.0, 0.0, 1.0]),
    (0.375, [0.0, 1.0, 1.0]),
    (0.625, [1.0, 1.0, 0.0]),
    (0.875, [1.0, 0.0, 0.0]),
    (1.0, [0.5, 0.0, 0.0]),
];

fn interpolate(t: f64) -> [f64; 3] {
    for pair in STOPS.windows(2) {
        let (t0, c0) = pair[0];
        let (t1, c1) = pair[1];
        if t <= t1 {
            let f = (t - t0) / (t1 - t0);
            return [0, 1, 2].map(|k| c0[k] + f * (c1[k] - c0[k]));
        }
    }
    STOPS[STOPS.len() - 1].1
}

pub fn lookup_table() -> &'static [[f64; 3]; 256] {
    static TABLE: OnceLock<[[f64; 3]; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|i| interpolate(i as f64 / 255.0)))
}

/// Pseudo-color of a gray value in `[0, 1]`.
pub fn colorize(gray: f64) -> [f64; 3] {
    let idx = (gray.clamp(0.0, 1.0) * 255.0).round() as usize;
    lookup_table()[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        assert_eq!(colorize(0.0), [0.0, 0.0, 0.5]);
        assert_eq!(colorize(1.0), [0.5, 0.0, 0.0]);
        let t = lookup_table();
        assert!(t.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}
