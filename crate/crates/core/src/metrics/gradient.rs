use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::raster::{reflect_index, Image};

use super::gray_triple;

/// Sigmoid constants of the edge-preservation model. `Q = Gamma / (1 + exp(kappa (x - sigma)))`
/// for relative strength (`_g`) and orientation (`_a`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientParams {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
    /// Exponent of the edge-strength weights.
    pub weight_exponent: f64,
    /// Divide each sigmoid by its value at perfect preservation so that
    /// `q_g(A, A, A) = 1`. With the raw constants the maximum is about 0.975.
    pub normalize: bool,
}

impl Default for GradientParams {
    fn default() -> Self {
        Self {
            gamma_g: 0.9994,
            kappa_g: -15.0,
            sigma_g: 0.5,
            gamma_a: 0.9879,
            kappa_a: -22.0,
            sigma_a: 0.8,
            weight_exponent: 1.0,
            normalize: true,
        }
    }
}

/// Sobel responses `(gx, gy)` with reflect borders; `gx` responds to
/// horizontal intensity change.
pub fn sobel(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |r: isize, c: isize| plane[reflect_index(r, h) * w + reflect_index(c, w)];
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            gx.push(
                (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1)),
            );
            gy.push(
                (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1)),
            );
        }
    }
    (gx, gy)
}

/// Strength and orientation (`atan(gy / gx)`, `pi/2` where `gx = 0`).
fn edge_field(img: &Image) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = img.dims();
    let (gx, gy) = sobel(img.data(), h, w);
    let strength = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let angle = gx
        .iter()
        .zip(&gy)
        .map(|(&x, &y)| if x == 0.0 { FRAC_PI_2 } else { (y / x).atan() })
        .collect();
    (strength, angle)
}

struct Sigmoids {
    p: GradientParams,
    scale_g: f64,
    scale_a: f64,
}

impl Sigmoids {
    fn new(p: GradientParams) -> Self {
        let (scale_g, scale_a) = if p.normalize {
            (
                1.0 / (p.gamma_g / (1.0 + (p.kappa_g * (1.0 - p.sigma_g)).exp())),
                1.0 / (p.gamma_a / (1.0 + (p.kappa_a * (1.0 - p.sigma_a)).exp())),
            )
        } else {
            (1.0, 1.0)
        };
        Self { p, scale_g, scale_a }
    }

    /// Preservation of a source edge `(gs, as_)` in the fused edge `(gf, af)`.
    fn preservation(&self, gs: f64, a_s: f64, gf: f64, af: f64) -> f64 {
        let g = if gs == gf {
            1.0
        } else if gs > gf {
            gf / gs
        } else {
            gs / gf
        };
        // orientations are equivalent modulo pi
        let a = ((a_s - af).abs() - FRAC_PI_2).abs() / FRAC_PI_2;
        let p = &self.p;
        let qg = self.scale_g * p.gamma_g / (1.0 + (p.kappa_g * (g - p.sigma_g)).exp());
        let qa = self.scale_a * p.gamma_a / (1.0 + (p.kappa_a * (a - p.sigma_a)).exp());
        qg * qa
    }
}

/// Edge-strength-weighted preservation of source edges in the fused image.
/// Returns 0 when neither source has any gradient.
pub fn q_g(a: &Image, b: &Image, f: &Image, params: &GradientParams) -> Result<f64> {
    let [a, b, f] = gray_triple(a, b, f)?;
    let (ga, aa) = edge_field(&a);
    let (gb, ab) = edge_field(&b);
    let (gf, af) = edge_field(&f);
    let s = Sigmoids::new(*params);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..ga.len() {
        let wa = ga[i].powf(params.weight_exponent);
        let wb = gb[i].powf(params.weight_exponent);
        if wa == 0.0 && wb == 0.0 {
            continue;
        }
        num += s.preservation(ga[i], aa[i], gf[i], af[i]) * wa + s.preservation(gb[i], ab[i], gf[i], af[i]) * wb;
        den += wa + wb;
    }
    Ok(if den == 0.0 { 0.0 } else { (num / den).clamp(0.0, 1.0) })
}
