use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::BinaryMask;
use crate::matching::MatchMethod;

use super::biometric::{far_frr, n_rank, RocCurves};
use super::hoover::{hoover, HooverCurves};
use super::matrix::DissimilarityMatrix;
use super::pixel::{confusion, prf, ConfusionMatrix2x2, Prf};

/// Mean and population standard deviation over the defined values of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEvaluation {
    pub name: String,
    pub confusion: ConfusionMatrix2x2,
    pub prf: Prf,
    pub hoover: HooverCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HooverSummaryPoint {
    pub tolerance: f64,
    pub correct_detected: Option<Stat>,
    pub over_segmented: Option<Stat>,
    pub under_segmented: Option<Stat>,
    pub missed: Option<Stat>,
    pub noise: Option<Stat>,
}

/// Corpus-level segmentation summary: per-image metrics plus mean ± std of
/// the confusion percentages, precision, recall, F-measure and Hoover fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub images: Vec<ImageEvaluation>,
    pub x11: Option<Stat>,
    pub x12: Option<Stat>,
    pub x21: Option<Stat>,
    pub x22: Option<Stat>,
    pub precision: Option<Stat>,
    pub recall: Option<Stat>,
    pub f_measure: Option<Stat>,
    pub hoover: Vec<HooverSummaryPoint>,
}

/// Evaluates `(name, ground truth, segmentation)` triples.
pub fn evaluate_segmentation(
    pairs: &[(String, BinaryMask, BinaryMask)],
    tolerances: &[f64],
) -> Result<SegmentationReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no image pairs to evaluate".into()));
    }
    let images = pairs
        .par_iter()
        .map(|(name, gt, seg)| {
            let c = confusion(gt, seg).map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
            Ok(ImageEvaluation {
                name: name.clone(),
                confusion: c,
                prf: prf(&c),
                hoover: hoover(gt, seg, tolerances)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let hoover = (0..tolerances.len())
        .map(|k| {
            let pts = || images.iter().map(move |im| im.hoover.points[k]);
            HooverSummaryPoint {
                tolerance: tolerances[k],
                correct_detected: Stat::of(pts().map(|p| p.correct_detected)),
                over_segmented: Stat::of(pts().map(|p| p.over_segmented)),
                under_segmented: Stat::of(pts().map(|p| p.under_segmented)),
                missed: Stat::of(pts().map(|p| p.missed)),
                noise: Stat::of(pts().map(|p| p.noise)),
            }
        })
        .collect();
    Ok(SegmentationReport {
        x11: Stat::of(images.iter().map(|i| i.confusion.x11)),
        x12: Stat::of(images.iter().map(|i| i.confusion.x12)),
        x21: Stat::of(images.iter().map(|i| i.confusion.x21)),
        x22: Stat::of(images.iter().map(|i| i.confusion.x22)),
        precision: Stat::of(images.iter().map(|i| i.prf.precision)),
        recall: Stat::of(images.iter().map(|i| i.prf.recall)),
        f_measure: Stat::of(images.iter().map(|i| i.prf.f_measure)),
        hoover,
        images,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub scales: usize,
    pub eer: f64,
    pub eer_threshold: f64,
    pub top1: f64,
    pub top5: f64,
    pub roc: RocCurves,
}

pub fn evaluate_identification(matrix: &DissimilarityMatrix, steps: usize) -> Result<IdentificationReport> {
    let roc = far_frr(matrix, steps)?;
    Ok(IdentificationReport {
        scales: matrix.len(),
        eer: roc.eer,
        eer_threshold: roc.eer_threshold,
        top1: n_rank(matrix, 1)?,
        top5: n_rank(matrix, 5)?,
        roc,
    })
}

/// File written into a gallery directory by a calibration run.
pub const CALIBRATION_FILE: &str = "evaluation.json";

/// Operating point from an identification evaluation, stored next to a
/// gallery so the service can attach the EER threshold as advisory metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub method: MatchMethod,
    pub eer: f64,
    pub eer_threshold: f64,
    pub top1: f64,
    pub top5: f64,
    pub steps: usize,
    pub scales: usize,
}

impl Calibration {
    pub fn from_report(report: &IdentificationReport, method: MatchMethod) -> Self {
        Self {
            method,
            eer: report.eer,
            eer_threshold: report.eer_threshold,
            top1: report.top1,
            top5: report.top5,
            steps: report.roc.thresholds.len(),
            scales: report.scales,
        }
    }

    pub fn save(&self, gallery_dir: &Path) -> Result<()> {
        let path = gallery_dir.join(CALIBRATION_FILE);
        let tmp = gallery_dir.join(format!(".{CALIBRATION_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// `Ok(None)` when the gallery has never been calibrated.
    pub fn load(gallery_dir: &Path) -> Result<Option<Self>> {
        let path = gallery_dir.join(CALIBRATION_FILE);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}
