//! Boundary-aware multi-focus image fusion.
//!
//! Two aligned source images focused at different depths are fused into one
//! all-in-focus image:
//!
//! 1. a focus scorer assigns every pixel the probability that source A is
//!    focused there ([`pipeline::generate_score_map`]);
//! 2. pixels whose neighbourhood-average score falls inside the uncertainty
//!    band are re-scored by a second, boundary-specialised scorer
//!    ([`pipeline::detect_boundary`], [`pipeline::refine`]);
//! 3. the refined map is binarized, small regions are cleared and the
//!    decision map selects pixels from the two sources ([`pipeline::fuse`]).
//!
//! Scorers are either classical sharpness comparisons
//! ([`scorer::ClassicalScorer`]) or a two-channel residual network
//! ([`scorer::ScorerModel`]) trained from scratch on synthetic composites
//! ([`dataset`], [`training`]). [`metrics`] provides objective fusion quality
//! measures.

pub mod dataset;
pub mod error;
pub mod filter;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scorer;
pub mod training;

pub use error::{Error, Result};
pub use raster::{BinaryMask, BoundaryMask, DecisionMap, GroundTruthMask, Image, PatchPair, ScoreMap};
pub use scorer::{ClassicalScorer, FocusMeasure, FocusScorer, ScorerModel};
