use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::filter::{gaussian_kernel, separable_plane};
use crate::raster::Image;

use super::gray_triple;

/// Parameters of the perceptual contrast-preservation metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChenBlumParams {
    /// Divisor mapping an integer frequency index to the filter's radial
    /// frequency (`r = |k| / frequency_scale` per axis).
    pub frequency_scale: f64,
    /// Centre and surround blur of the local band-limited contrast.
    pub sigma_center: f64,
    pub sigma_surround: f64,
    /// Masking `C' = k |C|^p / (h |C|^q + z)`.
    pub k: f64,
    pub h: f64,
    pub p: f64,
    pub q: f64,
    pub z: f64,
}

impl Default for ChenBlumParams {
    fn default() -> Self {
        Self {
            frequency_scale: 4.0,
            sigma_center: 2.0,
            sigma_surround: 4.0,
            k: 1.0,
            h: 1.0,
            p: 3.0,
            q: 2.0,
            z: 1e-4,
        }
    }
}

impl ChenBlumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_scale > 0.0 && self.sigma_center > 0.0 && self.sigma_surround > 0.0 && self.z > 0.0) {
            return Err(Error::invalid("contrast metric scales must be positive"));
        }
        Ok(())
    }
}

/// Mannos–Sakrison contrast sensitivity at radial frequency `r`.
fn mannos_sakrison(r: f64) -> f64 {
    2.6 * (0.0192 + 0.114 * r) * (-(0.114 * r).powf(1.1)).exp()
}

fn fft_rows(data: &mut [Complex<f64>], h: usize, w: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let fft = if inverse { planner.plan_fft_inverse(w) } else { planner.plan_fft_forward(w) };
    for row in data.chunks_exact_mut(w).take(h) {
        fft.process(row);
    }
}

fn transpose(data: &[Complex<f64>], h: usize, w: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); h * w];
    for r in 0..h {
        for c in 0..w {
            out[c * h + r] = data[r * w + c];
        }
    }
    out
}

fn fft2(data: Vec<Complex<f64>>, h: usize, w: usize, planner: &mut FftPlanner<f64>, inverse: bool) -> Vec<Complex<f64>> {
    let mut data = data;
    fft_rows(&mut data, h, w, planner, inverse);
    let mut t = transpose(&data, h, w);
    fft_rows(&mut t, w, h, planner, inverse);
    transpose(&t, w, h)
}

/// Filters a plane by the contrast sensitivity function in the frequency domain.
pub fn contrast_sensitivity_filter(plane: &[f64], h: usize, w: usize, params: &ChenBlumParams) -> Vec<f64> {
    let mut planner = FftPlanner::new();
    let spectrum = fft2(plane.iter().map(|&v| Complex::new(v, 0.0)).collect(), h, w, &mut planner, false);
    let freq = |i: usize, n: usize| i.min(n - i) as f64 / params.frequency_scale;
    let filtered: Vec<Complex<f64>> = spectrum
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let (u, v) = (freq(i % w, w), freq(i / w, h));
            z * mannos_sakrison(u.hypot(v))
        })
        .collect();
    let norm = 1.0 / (h * w) as f64;
    fft2(filtered, h, w, &mut planner, true).into_iter().map(|z| z.re * norm).collect()
}

/// Masked local contrast `C'` of a CSF-filtered plane.
fn masked_contrast(plane: &[f64], h: usize, w: usize, params: &ChenBlumParams) -> Result<Vec<f64>> {
    let center = separable_plane(plane, h, w, &gaussian_kernel(params.sigma_center)?);
    let surround = separable_plane(plane, h, w, &gaussian_kernel(params.sigma_surround)?);
    Ok(center
        .iter()
        .zip(&surround)
        .map(|(&c, &s)| {
            let contrast = if s.abs() < 1e-12 { 0.0 } else { (c / s - 1.0).abs() };
            params.k * contrast.powf(params.p) / (params.h * contrast.powf(params.q) + params.z)
        })
        .collect())
}

/// `min / max` of two non-negative contrasts; 1 when both vanish.
#[inline]
fn preservation(x: f64, y: f64) -> f64 {
    if x == y {
        1.0
    } else if x < y {
        x / y
    } else {
        y / x
    }
}

/// Global mean of the saliency-weighted contrast preservation of each source
/// in the fused image. Flat inputs give 1.
pub fn q_cb(a: &Image, b: &Image, f: &Image, params: &ChenBlumParams) -> Result<f64> {
    params.validate()?;
    let [a, b, f] = gray_triple(a, b, f)?;
    let (h, w) = a.dims();
    let contrast = |img: &Image| masked_contrast(&contrast_sensitivity_filter(img.data(), h, w, params), h, w, params);
    let (ca, cb, cf) = (contrast(&a)?, contrast(&b)?, contrast(&f)?);
    let mut total = 0.0;
    for i in 0..h * w {
        let (sa, sb) = (ca[i] * ca[i], cb[i] * cb[i]);
        let s = sa + sb;
        let (la, lb) = if s > 0.0 { (sa / s, sb / s) } else { (0.5, 0.5) };
        total += la * preservation(ca[i], cf[i]) + lb * preservation(cb[i], cf[i]);
    }
    Ok(total / (h * w) as f64)
}
