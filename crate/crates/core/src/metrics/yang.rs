use crate::error::{Error, Result};
use crate::filter::window_sums;
use crate::raster::Image;

use super::gray_triple;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YangParams {
    /// Side of the square sliding window (stride 1, fully inside the image).
    pub window: usize,
    /// Windows whose source similarity reaches this use the weighted blend.
    pub similarity_threshold: f64,
    /// SSIM stabilizers for a unit dynamic range: `(0.01)^2` and `(0.03)^2`.
    pub c1: f64,
    pub c2: f64,
}

impl Default for YangParams {
    fn default() -> Self {
        Self {
            window: 8,
            similarity_threshold: 0.75,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

impl YangParams {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("structural window must be at least 1 pixel"));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::invalid("SSIM stabilizers must be positive"));
        }
        Ok(())
    }
}

/// Local first and second moments of one image or image pair.
struct Moments {
    mean: Vec<f64>,
    second: Vec<f64>,
}

fn moments(x: &[f64], y: &[f64], h: usize, w: usize, win: usize) -> Moments {
    let n = (win * win) as f64;
    let prod: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    Moments {
        mean: window_sums(x, h, w, win).into_iter().map(|s| s / n).collect(),
        second: window_sums(&prod, h, w, win).into_iter().map(|s| s / n).collect(),
    }
}

/// SSIM from window means and (co)variances.
#[inline]
pub fn ssim_window(mx: f64, my: f64, vx: f64, vy: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean over sliding windows of: `wa SSIM(A,F) + wb SSIM(B,F)` with
/// variance weights `wa = var A / (var A + var B)` where the sources are
/// similar (`SSIM(A,B) >= threshold`), otherwise `max(SSIM(A,F), SSIM(B,F))`.
pub fn q_y(a: &Image, b: &Image, f: &Image, params: &YangParams) -> Result<f64> {
    params.validate()?;
    let [a, b, f] = gray_triple(a, b, f)?;
    let (h, w) = a.dims();
    let win = params.window.min(h).min(w);
    let (da, db, df) = (a.data(), b.data(), f.data());
    let aa = moments(da, da, h, w, win);
    let bb = moments(db, db, h, w, win);
    let ff = moments(df, df, h, w, win);
    let ab = moments(da, db, h, w, win).second;
    let af = moments(da, df, h, w, win).second;
    let bf = moments(db, df, h, w, win).second;
    let (c1, c2) = (params.c1, params.c2);
    let mut total = 0.0;
    let count = aa.mean.len();
    for i in 0..count {
        let (ma, mb, mf) = (aa.mean[i], bb.mean[i], ff.mean[i]);
        let va = aa.second[i] - ma * ma;
        let vb = bb.second[i] - mb * mb;
        let vf = ff.second[i] - mf * mf;
        let s_ab = ssim_window(ma, mb, va, vb, ab[i] - ma * mb, c1, c2);
        let s_af = ssim_window(ma, mf, va, vf, af[i] - ma * mf, c1, c2);
        let s_bf = ssim_window(mb, mf, vb, vf, bf[i] - mb * mf, c1, c2);
        total += if s_ab >= params.similarity_threshold {
            let (pa, pb) = (va.max(0.0), vb.max(0.0));
            let s = pa + pb;
            let (wa, wb) = if s > 0.0 { (pa / s, pb / s) } else { (0.5, 0.5) };
            wa * s_af + wb * s_bf
        } else {
            s_af.max(s_bf)
        };
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}
