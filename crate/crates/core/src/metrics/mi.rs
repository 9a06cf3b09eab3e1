use crate::error::Result;
use crate::raster::Image;

use super::gray_triple;

/// Histogram bin of every pixel: `round(x * (bins - 1))`.
pub fn quantize(img: &Image, bins: usize) -> Vec<usize> {
    let top = (bins - 1) as f64;
    img.data().iter().map(|&v| (v * top).round() as usize).collect()
}

fn entropy_of_counts(counts: &[u64], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

/// Shannon entropy (bits) of a quantized image.
pub fn entropy(levels: &[usize], bins: usize) -> f64 {
    let mut counts = vec![0u64; bins];
    for &l in levels {
        counts[l] += 1;
    }
    entropy_of_counts(&counts, levels.len() as f64)
}

/// `(I(X;Y), H(X), H(Y))` in bits from the joint histogram.
pub fn mutual_information(x: &[usize], y: &[usize], bins: usize) -> (f64, f64, f64) {
    let mut joint = vec![0u64; bins * bins];
    let mut cx = vec![0u64; bins];
    let mut cy = vec![0u64; bins];
    for (&a, &b) in x.iter().zip(y) {
        joint[a * bins + b] += 1;
        cx[a] += 1;
        cy[b] += 1;
    }
    let n = x.len() as f64;
    let (hx, hy) = (entropy_of_counts(&cx, n), entropy_of_counts(&cy, n));
    let hxy = entropy_of_counts(&joint, n);
    (hx + hy - hxy, hx, hy)
}

fn normalized_term(src: &[usize], fused: &[usize], bins: usize) -> f64 {
    let (i, hs, hf) = mutual_information(src, fused, bins);
    let denom = hs + hf;
    if denom == 0.0 {
        0.0
    } else {
        i / denom
    }
}

/// `2 [ I(A;F) / (H(A) + H(F)) + I(B;F) / (H(B) + H(F)) ]`, log base 2.
/// A term whose entropies are both zero contributes 0.
pub fn q_mi(a: &Image, b: &Image, f: &Image, bins: usize) -> Result<f64> {
    let [a, b, f] = gray_triple(a, b, f)?;
    let (qa, qb, qf) = (quantize(&a, bins), quantize(&b, bins), quantize(&f, bins));
    Ok(2.0 * (normalized_term(&qa, &qf, bins) + normalized_term(&qb, &qf, bins)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_images_contribute_zero() {
        let c = Image::filled(8, 8, 1, 0.4).unwrap();
        assert_eq!(q_mi(&c, &c, &c, 256).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_two_levels() {
        assert!((entropy(&[0, 1, 0, 1], 2) - 1.0).abs() < 1e-15);
        let (i, hx, hy) = mutual_information(&[0, 1, 0, 1], &[1, 0, 1, 0], 2);
        assert!((i - 1.0).abs() < 1e-15 && hx == 1.0 && hy == 1.0);
    }

    #[test]
    fn translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = |rng: &mut ChaCha8Rng| Image::new(16, 16, 1, (0..256).map(|_| rng.random()).collect()).unwrap();
        let (a, b, f) = (img(&mut rng), img(&mut rng), img(&mut rng));
        let shift = |x: &Image| Image::from_fn(16, 16, |r, c| x.get((r + 5) % 16, (c + 3) % 16, 0));
        let q0 = q_mi(&a, &b, &f, 256).unwrap();
        let q1 = q_mi(&shift(&a), &shift(&b), &shift(&f), 256).unwrap();
        assert!((q0 - q1).abs() < 1e-12);
    }
}
