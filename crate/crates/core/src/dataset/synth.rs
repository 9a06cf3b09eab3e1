//! Procedural textures and mattes, used for tests and as a stand-in corpus
//! when no natural images are available.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::Image;

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Multi-octave value noise normalized to `[0.05, 0.95]`. The finest octave
/// has one lattice cell per pixel so the texture carries detail everywhere.
pub fn value_noise(height: usize, width: usize, octaves: usize, rng: &mut impl Rng) -> Image {
    spectral_noise(height, width, octaves, 0.5, rng)
}

/// Value noise whose octave with cell size `s` has amplitude `s^slope`;
/// `slope = 1` approximates the 1/f spectrum of natural images.
pub fn spectral_noise(height: usize, width: usize, octaves: usize, slope: f64, rng: &mut impl Rng) -> Image {
    let mut acc = vec![0.0f64; height * width];
    for o in 0..octaves.max(1) {
        let cell = 1usize << o;
        let gh = height / cell + 2;
        let gw = width / cell + 2;
        let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random::<f64>()).collect();
        let amp = (cell as f64).powf(slope);
        for r in 0..height {
            let fr = r as f64 / cell as f64;
            let (r0, tr) = (fr.floor() as usize, smooth(fr.fract()));
            for c in 0..width {
                let fc = c as f64 / cell as f64;
                let (c0, tc) = (fc.floor() as usize, smooth(fc.fract()));
                let v00 = lattice[r0 * gw + c0];
                let v01 = lattice[r0 * gw + c0 + 1];
                let v10 = lattice[(r0 + 1) * gw + c0];
                let v11 = lattice[(r0 + 1) * gw + c0 + 1];
                let top = v00 + (v01 - v00) * tc;
                let bottom = v10 + (v11 - v10) * tc;
                acc[r * width + c] += amp * (top + (bottom - top) * tr);
            }
        }
    }
    let lo = acc.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    Image::from_fn(height, width, |r, c| 0.05 + 0.9 * (acc[r * width + c] - lo) / span)
}

/// RGB texture: three correlated noise fields, so luma stays textured.
pub fn color_noise(height: usize, width: usize, octaves: usize, rng: &mut impl Rng) -> Image {
    let base = value_noise(height, width, octaves, rng);
    let tints: Vec<Image> = (0..2).map(|_| value_noise(height, width, octaves, rng)).collect();
    let mut data = Vec::with_capacity(height * width * 3);
    for i in 0..height * width {
        let b = base.data()[i];
        data.push(b);
        data.push(0.6 * b + 0.4 * tints[0].data()[i]);
        data.push(0.6 * b + 0.4 * tints[1].data()[i]);
    }
    Image::new(height, width, 3, data).expect("convex combination stays in range")
}

/// Anti-aliased star-shaped blob: radius `R (1 + sum a_k cos(k theta + phi_k))`
/// around a jittered centre. Values above 0.5 are inside.
pub fn star_matte(height: usize, width: usize, rng: &mut impl Rng) -> Image {
    let (h, w) = (height as f64, width as f64);
    let cy = h * rng.random_range(0.35..0.65);
    let cx = w * rng.random_range(0.35..0.65);
    let base = h.min(w) * rng.random_range(0.18..0.3);
    let harmonics: Vec<(f64, f64, f64)> = (2..6)
        .map(|k| (k as f64, rng.random_range(0.0..0.15), rng.random_range(0.0..TAU)))
        .collect();
    Image::from_fn(height, width, |r, c| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        let theta = dy.atan2(dx);
        let radius = base * (1.0 + harmonics.iter().map(|&(k, a, phi)| a * (k * theta + phi).cos()).sum::<f64>());
        radius - dy.hypot(dx) + 0.5
    })
}

/// A foreground texture and matte at `height x width`, from one seed. Meant
/// to be halved before placement, so it carries one octave more than
/// [`synthetic_background`].
pub fn synthetic_foreground(height: usize, width: usize, seed: u64) -> (Image, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fg = value_noise(height, width, 6, &mut rng);
    let matte = star_matte(height, width, &mut rng);
    (fg, matte)
}

pub fn synthetic_background(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    value_noise(height, width, 5, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_in_range_and_deterministic() {
        let a = value_noise(33, 47, 4, &mut ChaCha8Rng::seed_from_u64(3));
        let b = value_noise(33, 47, 4, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.05 - 1e-12..=0.95 + 1e-12).contains(v)));
        let c = color_noise(8, 9, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(c.channels(), 3);
    }

    #[test]
    fn matte_has_interior_and_exterior() {
        let m = star_matte(64, 64, &mut ChaCha8Rng::seed_from_u64(11));
        let inside = m.data().iter().filter(|&&v| v >= 0.5).count();
        assert!(inside > 64 * 64 / 20 && inside < 64 * 64 / 2);
        assert!(m.get(0, 0, 0) < 0.5);
    }
}
