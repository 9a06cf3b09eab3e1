//! Objective fusion quality metrics. Each maps (source A, source B, fused F)
//! to a scalar where larger is better, and is symmetric in the two sources.
//!
//! * [`q_mi`]: normalized mutual information between each source and F.
//! * [`q_g`]: edge (Sobel gradient) strength and orientation preservation.
//! * [`q_y`]: structural similarity, switching between a variance-weighted
//!   blend and the best source depending on how similar the sources are.
//! * [`q_cb`]: perceptual contrast preservation after contrast-sensitivity
//!   filtering.
//!
//! Color inputs are converted to gray with the crate's luma weights.

mod chen_blum;
mod gradient;
mod mi;
mod suite;
mod yang;

use crate::error::Result;
use crate::raster::{to_grayscale, Image};

pub use chen_blum::{contrast_sensitivity_filter, q_cb, ChenBlumParams};
pub use gradient::{q_g, sobel, GradientParams};
pub use mi::{entropy, mutual_information, q_mi, quantize};
pub use suite::{evaluate_suite, SuiteRow, SuiteTable};
pub use yang::{q_y, ssim_window, YangParams};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricConfig {
    /// Histogram bins for `q_mi`; intensities are quantized to `round(x * (bins - 1))`.
    pub bins: usize,
    pub gradient: GradientParams,
    pub yang: YangParams,
    pub chen_blum: ChenBlumParams,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            bins: 256,
            gradient: GradientParams::default(),
            yang: YangParams::default(),
            chen_blum: ChenBlumParams::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(crate::Error::invalid("histograms need at least 2 bins"));
        }
        self.yang.validate()?;
        self.chen_blum.validate()
    }
}

/// Gray versions of the three inputs, checked for equal dimensions.
fn gray_triple(a: &Image, b: &Image, f: &Image) -> Result<[Image; 3]> {
    let (h, w) = a.dims();
    b.ensure_dims((h, w))?;
    f.ensure_dims((h, w))?;
    Ok([to_grayscale(a)?, to_grayscale(b)?, to_grayscale(f)?])
}
