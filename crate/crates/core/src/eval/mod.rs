//! Matting metrics, dataset evaluation, detector accuracy and the
//! transparency-correction ablation.

mod ablation;
mod accuracy;
mod dataset;
mod metrics;
mod predictor;
pub mod synthetic;

pub use ablation::{run_ablation, AblationImage, AblationReport, AblationRow, BASELINE, WITH_DETECTOR, WITH_USER};
pub use accuracy::{detector_accuracy, predict_dataset_transparency};
pub use dataset::{
    evaluate_dataset, format_labels, parse_labels, score_sample, write_sample, AggregateRow, AlphaPredictor,
    DatasetLayout, EvalReport, ImageResult, RegionConvention, Sample, ALPHAS_DIR, IMAGES_DIR, LABELS_FILE, MASKS_DIR,
    TRIMAPS_DIR,
};
pub use metrics::{
    conn_error, evaluate, gaussian_derivative_taps, gaussian_half_size, grad_error, gradient_magnitude, mse, sad,
    EvalRegion, MetricsReport, CONN_STEP, GRAD_SIGMA,
};
pub use predictor::{gt_support, GuidanceSource, PipelinePredictor, TransparencyPolicy};
