//! Metrics, evaluation driver and report emission.

pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod report;

pub use error::{ErrorKind, EvalError, Result};
pub use evaluate::{evaluate, EvaluateOptions};
pub use metrics::{mask_metrics, psnr, psnr_frames, psnr_from_mse, ssim, ssim_frames, PSNR_CAP_DB};
pub use report::{sha256_hex, AggregateRecord, ClipRecord, MetricsReport};
