//! Separable linear filters with reflect boundaries.

use crate::error::{Error, Result};
use crate::raster::{reflect_index, Image};

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

/// Convolves a single plane with `taps` along rows then columns.
pub(crate) fn separable_plane(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let radius = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    let mut padded = Vec::with_capacity(w + 2 * radius as usize);
    for r in 0..h {
        let row = &plane[r * w..(r + 1) * w];
        padded.clear();
        padded.extend((-radius..w as isize + radius).map(|c| row[reflect_index(c, w)]));
        for c in 0..w {
            tmp[r * w + c] = taps.iter().zip(&padded[c..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    let rows: Vec<usize> = (-radius..h as isize + radius).map(|r| reflect_index(r, h)).collect();
    for r in 0..h {
        let src = &rows[r..r + taps.len()];
        let dst = &mut out[r * w..(r + 1) * w];
        for (k, &sr) in taps.iter().zip(src) {
            let srow = &tmp[sr * w..(sr + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += k * s;
            }
        }
    }
    out
}

/// Gaussian blur applied independently to every channel.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let taps = gaussian_kernel(sigma)?;
    let (h, w) = img.dims();
    let ch = img.channels();
    let mut data = vec![0.0; h * w * ch];
    for (k, plane) in img.split_channels().into_iter().enumerate() {
        let blurred = separable_plane(plane.data(), h, w, &taps);
        for (i, v) in blurred.into_iter().enumerate() {
            data[i * ch + k] = v.clamp(0.0, 1.0);
        }
    }
    Ok(Image::from_raw(h, w, ch, data))
}

/// Sum over every `size x size` window. Output entry `(r, c)` covers rows
/// `r..r+size` and columns `c..c+size` of the input; the output is
/// `(h - size + 1) x (w - size + 1)`.
pub(crate) fn window_sums(plane: &[f64], h: usize, w: usize, size: usize) -> Vec<f64> {
    debug_assert!(size >= 1 && size <= h && size <= w);
    let (oh, ow) = (h - size + 1, w - size + 1);
    let mut horiz = vec![0.0; h * ow];
    for r in 0..h {
        let row = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            horiz[r * ow + c] = row[c..c + size].iter().sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        let dst = &mut out[r * ow..(r + 1) * ow];
        for k in 0..size {
            let src = &horiz[(r + k) * ow..(r + k + 1) * ow];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}
