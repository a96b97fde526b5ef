//! Discrimination and calibration metrics, fold statistics and the experiment matrix.

mod metrics;
mod protocol;

pub use metrics::{
    auroc, calibration_curve, isotonic_fit, mean_abs_calibration_error, mean_se, midranks, quantile, wilcoxon_paired,
    CalibrationBin, IsotonicModel,
};
pub use protocol::{plan_matrix, EvalReport, Protocol, Setting, TrainingJob};
