//! Connected components of binary masks and small-region removal.

use crate::raster::BinaryMask;

/// Labels the 8-connected components of pixels equal to `value`.
/// Returns per-pixel labels (`u32::MAX` for other pixels) and component areas.
pub fn label_components(mask: &BinaryMask, value: bool) -> (Vec<u32>, Vec<usize>) {
    let (h, w) = mask.dims();
    let target = value as u8;
    let vals = mask.values();
    let mut labels = vec![u32::MAX; h * w];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if vals[start] != target || labels[start] != u32::MAX {
            continue;
        }
        let label = areas.len() as u32;
        labels[start] = label;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (r, c) = (i / w, i % w);
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if vals[j] == target && labels[j] == u32::MAX {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    (labels, areas)
}

fn flip_small(mask: &mut BinaryMask, value: bool, min_area: f64) {
    let (labels, areas) = label_components(mask, value);
    let flipped = (!value) as u8;
    for (v, &l) in mask.values_mut().iter_mut().zip(&labels) {
        if l != u32::MAX && (areas[l as usize] as f64) < min_area {
            *v = flipped;
        }
    }
}

/// Flips every 8-connected component with area below `area_fraction * H * W`:
/// one pass over the 1-components, then one pass over the 0-components.
pub fn remove_small_regions(dm: &BinaryMask, area_fraction: f64) -> BinaryMask {
    let (h, w) = dm.dims();
    let min_area = area_fraction * (h * w) as f64;
    let mut out = dm.clone();
    flip_small(&mut out, true, min_area);
    flip_small(&mut out, false, min_area);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_pixels_connect() {
        let m = BinaryMask::new(3, 3, vec![1, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let (_, areas) = label_components(&m, true);
        assert_eq!(areas, vec![3]);
        let (_, zero_areas) = label_components(&m, false);
        assert_eq!(zero_areas.len(), 1);
    }

    #[test]
    fn all_ones_unchanged() {
        let m = BinaryMask::filled(10, 12, true).unwrap();
        assert_eq!(remove_small_regions(&m, 0.01), m);
    }

    #[test]
    fn hole_is_filled() {
        let m = BinaryMask::from_fn(100, 100, |r, c| !((40..45).contains(&r) && (60..65).contains(&c)));
        assert_eq!(m.count_ones(), 10_000 - 25);
        let out = remove_small_regions(&m, 0.01);
        assert_eq!(out.count_ones(), 10_000);
    }

    proptest! {
        #[test]
        fn idempotent(bits in proptest::collection::vec(0u8..2, 12 * 15), frac in 0.0f64..0.2) {
            let m = BinaryMask::new(12, 15, bits).unwrap();
            let once = remove_small_regions(&m, frac);
            prop_assert_eq!(remove_small_regions(&once, frac), once.clone());
            prop_assert_eq!(once.dims(), m.dims());
        }
    }
}
