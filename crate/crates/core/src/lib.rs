//! Multi-scale residual token sequence modeling.
//!
//! The crate implements a full desk-scale pipeline for conditional generation
//! of temporally continuous sequences:
//!
//! - `corpus` — synthetic condition programs, waveform rendering, and an
//!   analytic decoding oracle used for semantic-alignment evaluation;
//! - `tokenizer` — a residual VQ-VAE with a shared EMA codebook that encodes
//!   a sequence into `K` token groups at increasing temporal resolutions;
//! - `backbone` — a scale-causal transformer predicting each token group from
//!   all coarser groups and a pooled/cross-attended condition;
//! - `trainer` — teacher forcing with cross-scale corruption (recomputed
//!   residual targets) and in-scale mask sampling;
//! - `sampler` — coarse-to-fine generation with classifier-free guidance and
//!   cosine-scheduled mask-and-repredict refinement within each scale;
//! - `editor` — zero-shot inpainting/outpainting/continuation by retaining
//!   tokens outside the edited frame region at every scale;
//! - `checkpoint`/`config`/`metrics` — persistence, presets, and proxy
//!   evaluation metrics.

pub mod error;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
