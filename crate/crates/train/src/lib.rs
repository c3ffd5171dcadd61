//! Rate-distortion training for the gmsd codec: the noisy-proxy loss,
//! Adam-based training loop, synthetic data generation, and the
//! mixed-vs-separate mode comparison experiment.

pub mod compare;
pub mod data;
pub mod distortion;
pub mod error;
pub mod loss;
pub mod trainer;

pub use compare::{compare_modes, median, Arm, ArmRun, ModeComparison};
pub use data::{load_image_dir, parse_synthetic_spec, synthetic_images};
pub use distortion::{distortion_t, gaussian_window, ms_ssim_t, mse_t, usable_scales, MSSSIM_WEIGHTS};
pub use error::{Result, TrainError};
pub use loss::{rd_loss, validation_loss, RdOutcome, RdParts, MSE_SCALE};
pub use trainer::{history_to_csv, train, HistoryRow, TrainConfig, TrainOutcome, FINAL_PHASE_FRACTION};
