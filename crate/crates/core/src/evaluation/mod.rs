//! Segmentation metrics (pixel confusion, precision/recall/F-measure, Hoover
//! region classes) and biometric metrics (dissimilarity matrices,
//! FAR/FRR/EER, Top-N).

mod biometric;
mod hoover;
mod matrix;
mod pixel;
mod summary;

pub use biometric::{
    far_frr, far_frr_exact, far_frr_exact_scores, far_frr_scores, n_rank, roc_at_thresholds, sibling_ranks,
    RocCurves, DEFAULT_STEPS,
};
pub use hoover::{default_tolerances, hoover, HooverCounts, HooverCurves, HooverPoint};
pub use matrix::{build_dissimilarity_matrix, DissimilarityMatrix};
pub use pixel::{confusion, prf, ConfusionMatrix2x2, Prf};
pub use summary::{
    evaluate_identification, evaluate_segmentation, Calibration, HooverSummaryPoint, IdentificationReport,
    ImageEvaluation, SegmentationReport, Stat, CALIBRATION_FILE,
};
