//! Measurement layer for the gmsd codec: PSNR and MS-SSIM, BD-rate with
//! monotone piecewise-cubic interpolation, degeneracy diagnostics, and
//! corpus evaluation over real bitstreams.

pub mod bdrate;
pub mod corpus;
pub mod degeneracy;
pub mod error;
pub mod metrics;

pub use bdrate::{bd_rate, pchip_eval, RdCurve, RdPoint};
pub use corpus::{evaluate_corpus, CorpusEval, ImageEval};
pub use degeneracy::{diagnose_degeneracy, DegeneracyReport, DEGENERACY_THRESHOLD};
pub use error::{EvalError, Result};
pub use metrics::{ms_ssim, ms_ssim_images, psnr, usable_scales, MSSSIM_WEIGHTS};
