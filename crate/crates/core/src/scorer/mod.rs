//! Focus scorers: map a two-channel patch pair to the probability that the
//! centre pixel is focused in channel A.

mod checkpoint;
mod classical;
mod network;
mod tensor;

use rayon::prelude::*;

use crate::error::Result;
use crate::raster::{check_patch_inputs, extract_patch, Image, PatchPair};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use classical::{classical_score, focus_ratio, sharpness, ClassicalScorer, FocusMeasure, SHARPNESS_EPSILON};
pub use network::{Architecture, Gradients, NormMode, ScorerModel};
pub use tensor::{Real, Tensor};

/// Number of patches materialized per batch when scoring image positions.
const POSITION_CHUNK: usize = 256;

/// Anything that assigns a focus score in `[0, 1]` to a patch pair.
pub trait FocusScorer: Send + Sync {
    /// Side length of the patches this scorer consumes.
    fn patch_size(&self) -> usize;

    fn score(&self, patch: &PatchPair) -> f64;

    fn score_batch(&self, patches: &[PatchPair]) -> Vec<f64> {
        patches.iter().map(|p| self.score(p)).collect()
    }

    /// Scores the patches centred at `positions` of two aligned gray images.
    fn score_positions(&self, img_a: &Image, img_b: &Image, positions: &[(usize, usize)]) -> Result<Vec<f64>> {
        let p = self.patch_size();
        check_patch_inputs(img_a, img_b, p)?;
        let chunks: Vec<Result<Vec<f64>>> = positions
            .par_chunks(POSITION_CHUNK)
            .map(|chunk| {
                let patches = chunk
                    .iter()
                    .map(|&c| extract_patch(img_a, img_b, c, p))
                    .collect::<Result<Vec<_>>>()?;
                Ok(self.score_batch(&patches))
            })
            .collect();
        let mut out = Vec::with_capacity(positions.len());
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }
}

impl<S: FocusScorer + ?Sized> FocusScorer for &S {
    fn patch_size(&self) -> usize {
        (**self).patch_size()
    }

    fn score(&self, patch: &PatchPair) -> f64 {
        (**self).score(patch)
    }

    fn score_batch(&self, patches: &[PatchPair]) -> Vec<f64> {
        (**self).score_batch(patches)
    }

    fn score_positions(&self, img_a: &Image, img_b: &Image, positions: &[(usize, usize)]) -> Result<Vec<f64>> {
        (**self).score_positions(img_a, img_b, positions)
    }
}

impl<S: FocusScorer + ?Sized> FocusScorer for Box<S> {
    fn patch_size(&self) -> usize {
        (**self).patch_size()
    }

    fn score(&self, patch: &PatchPair) -> f64 {
        (**self).score(patch)
    }

    fn score_batch(&self, patches: &[PatchPair]) -> Vec<f64> {
        (**self).score_batch(patches)
    }

    fn score_positions(&self, img_a: &Image, img_b: &Image, positions: &[(usize, usize)]) -> Result<Vec<f64>> {
        (**self).score_positions(img_a, img_b, positions)
    }
}

/// Returns the same score for every patch. Useful as a stand-in scorer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer {
    pub value: f64,
    pub patch_size: usize,
}

impl ConstantScorer {
    pub fn new(value: f64, patch_size: usize) -> Self {
        assert!((0.0..=1.0).contains(&value), "constant score must lie in [0, 1]");
        Self { value, patch_size }
    }
}

impl FocusScorer for ConstantScorer {
    fn patch_size(&self) -> usize {
        self.patch_size
    }

    fn score(&self, _patch: &PatchPair) -> f64 {
        self.value
    }
}
