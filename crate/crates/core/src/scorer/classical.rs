//! Hand-crafted focus scorer: compares the sharpness of the two channels.
//!
//! The score is `s_a / (s_a + s_b)`, snapped to a dyadic grid so that
//! swapping the channels yields exactly `1 - score`.

use crate::error::Result;
use crate::filter::window_sums;
use crate::raster::{check_patch_inputs, reflect_index, Image, PatchPair};

use super::FocusScorer;

/// Below this combined sharpness a patch pair carries no focus evidence.
pub const SHARPNESS_EPSILON: f64 = 1e-12;

const RATIO_GRID: f64 = (1u64 << 40) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FocusMeasure {
    /// Sum over the patch interior of the squared modified Laplacian
    /// `|2x - l - r| + |2x - u - d|`.
    SumModifiedLaplacian,
    /// Intensity variance over the whole patch.
    LocalVariance,
}

impl std::str::FromStr for FocusMeasure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sml" | "sum-modified-laplacian" => Ok(FocusMeasure::SumModifiedLaplacian),
            "variance" | "local-variance" => Ok(FocusMeasure::LocalVariance),
            other => Err(format!("unknown focus measure '{other}'")),
        }
    }
}

#[inline]
fn modified_laplacian_sq(x: f64, left: f64, right: f64, up: f64, down: f64) -> f64 {
    let ml = (2.0 * x - left - right).abs() + (2.0 * x - up - down).abs();
    ml * ml
}

/// Sharpness of one `p x p` channel.
pub fn sharpness(channel: &[f64], p: usize, measure: FocusMeasure) -> f64 {
    debug_assert_eq!(channel.len(), p * p);
    match measure {
        FocusMeasure::SumModifiedLaplacian => {
            let mut total = 0.0;
            for r in 1..p.saturating_sub(1) {
                for c in 1..p - 1 {
                    let i = r * p + c;
                    total += modified_laplacian_sq(
                        channel[i],
                        channel[i - 1],
                        channel[i + 1],
                        channel[i - p],
                        channel[i + p],
                    );
                }
            }
            total
        }
        FocusMeasure::LocalVariance => {
            let n = channel.len() as f64;
            let mean = channel.iter().sum::<f64>() / n;
            channel.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        }
    }
}

fn snap(x: f64) -> f64 {
    (x * RATIO_GRID).round() / RATIO_GRID
}

/// `s_a / (s_a + s_b)` with exact antisymmetry: `focus_ratio(b, a) == 1 - focus_ratio(a, b)`.
pub fn focus_ratio(s_a: f64, s_b: f64) -> f64 {
    let total = s_a + s_b;
    if !(total >= SHARPNESS_EPSILON) {
        return 0.5;
    }
    if s_a <= s_b {
        snap(s_a / total)
    } else {
        1.0 - snap(s_b / total)
    }
}

/// Focus score of a patch pair under a classical sharpness measure.
pub fn classical_score(patch: &PatchPair, measure: FocusMeasure) -> f64 {
    let p = patch.size();
    focus_ratio(
        sharpness(patch.channel_a(), p, measure),
        sharpness(patch.channel_b(), p, measure),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalScorer {
    pub measure: FocusMeasure,
    pub patch_size: usize,
}

impl ClassicalScorer {
    pub fn new(measure: FocusMeasure, patch_size: usize) -> Self {
        Self { measure, patch_size }
    }

    /// Sharpness of the window centred at every pixel, computed densely.
    fn dense_sharpness(&self, img: &Image) -> Vec<f64> {
        let p = self.patch_size;
        let (h, w) = img.dims();
        let half = (p / 2) as isize;
        // padded[i][j] = img[reflect(i - p/2)][reflect(j - p/2)]; the window
        // centred at (r, c) is padded[r..r+p][c..c+p].
        let (ph, pw) = (h + p, w + p);
        let cols: Vec<usize> = (0..pw as isize).map(|j| reflect_index(j - half, w)).collect();
        let mut padded = Vec::with_capacity(ph * pw);
        for i in 0..ph as isize {
            let r = reflect_index(i - half, h);
            padded.extend(cols.iter().map(|&c| img.get(r, c, 0)));
        }
        match self.measure {
            FocusMeasure::SumModifiedLaplacian => {
                if p < 3 {
                    return vec![0.0; h * w];
                }
                let (eh, ew) = (ph - 2, pw - 2);
                let mut energy = Vec::with_capacity(eh * ew);
                for i in 1..ph - 1 {
                    for j in 1..pw - 1 {
                        let k = i * pw + j;
                        energy.push(modified_laplacian_sq(
                            padded[k],
                            padded[k - 1],
                            padded[k + 1],
                            padded[k - pw],
                            padded[k + pw],
                        ));
                    }
                }
                let sums = window_sums(&energy, eh, ew, p - 2);
                let ow = ew - (p - 2) + 1;
                let mut out = Vec::with_capacity(h * w);
                for r in 0..h {
                    out.extend_from_slice(&sums[r * ow..r * ow + w]);
                }
                out
            }
            FocusMeasure::LocalVariance => {
                let sq: Vec<f64> = padded.iter().map(|v| v * v).collect();
                let s1 = window_sums(&padded, ph, pw, p);
                let s2 = window_sums(&sq, ph, pw, p);
                let ow = pw - p + 1;
                let n = (p * p) as f64;
                let mut out = Vec::with_capacity(h * w);
                for r in 0..h {
                    for c in 0..w {
                        let (a, b) = (s1[r * ow + c], s2[r * ow + c]);
                        out.push(((b - a * a / n) / n).max(0.0));
                    }
                }
                out
            }
        }
    }
}

impl FocusScorer for ClassicalScorer {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn score(&self, patch: &PatchPair) -> f64 {
        classical_score(patch, self.measure)
    }

    fn score_positions(&self, img_a: &Image, img_b: &Image, positions: &[(usize, usize)]) -> Result<Vec<f64>> {
        check_patch_inputs(img_a, img_b, self.patch_size)?;
        let w = img_a.width();
        let sa = self.dense_sharpness(img_a);
        let sb = self.dense_sharpness(img_b);
        Ok(positions
            .iter()
            .map(|&(r, c)| focus_ratio(sa[r * w + c], sb[r * w + c]))
            .collect())
    }
}
