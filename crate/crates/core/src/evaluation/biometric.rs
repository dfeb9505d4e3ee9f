use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matrix::DissimilarityMatrix;

/// Default number of thresholds in the uniform FAR/FRR sweep.
pub const DEFAULT_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurves {
    pub thresholds: Vec<f64>,
    pub far: Vec<f64>,
    pub frr: Vec<f64>,
    pub eer: f64,
    pub eer_threshold: f64,
    pub genuine_pairs: usize,
    pub impostor_pairs: usize,
}

fn check_sets(genuine: &[f64], impostor: &[f64]) -> Result<()> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::InvalidInput(format!(
            "FAR/FRR needs genuine and impostor pairs (got {} genuine, {} impostor)",
            genuine.len(),
            impostor.len()
        )));
    }
    if let Some(v) = genuine.iter().chain(impostor).find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidInput(format!("invalid score {v}")));
    }
    Ok(())
}

/// Evaluates FAR (impostor score `<= θ`) and FRR (genuine score `> θ`) at the
/// given ascending thresholds and locates the equal error rate.
///
/// The EER is taken where `FAR − FRR` first becomes non-negative, linearly
/// interpolated between the bracketing thresholds. If the curves never
/// meet (possible when unscorable pairs are present) the point of smallest
/// gap is used and the EER is the mean of FAR and FRR there.
pub fn roc_at_thresholds(genuine: &[f64], impostor: &[f64], thresholds: Vec<f64>) -> Result<RocCurves> {
    check_sets(genuine, impostor)?;
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidParameter("thresholds must be non-empty and ascending".into()));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let far: Vec<f64> = thresholds
        .iter()
        .map(|&t| im.partition_point(|&s| s <= t) as f64 / ni)
        .collect();
    let frr: Vec<f64> = thresholds
        .iter()
        .map(|&t| (g.len() - g.partition_point(|&s| s <= t)) as f64 / ng)
        .collect();

    let (eer, eer_threshold) = match (0..thresholds.len()).find(|&k| far[k] >= frr[k]) {
        Some(0) => ((far[0] + frr[0]) / 2.0, thresholds[0]),
        Some(k) => {
            let (d0, d1) = (far[k - 1] - frr[k - 1], far[k] - frr[k]);
            let t = -d0 / (d1 - d0);
            (
                far[k - 1] + t * (far[k] - far[k - 1]),
                thresholds[k - 1] + t * (thresholds[k] - thresholds[k - 1]),
            )
        }
        None => {
            let k = (0..thresholds.len())
                .min_by(|&a, &b| (frr[a] - far[a]).total_cmp(&(frr[b] - far[b])))
                .unwrap_or(0);
            ((far[k] + frr[k]) / 2.0, thresholds[k])
        }
    };
    Ok(RocCurves {
        thresholds,
        far,
        frr,
        eer,
        eer_threshold,
        genuine_pairs: genuine.len(),
        impostor_pairs: impostor.len(),
    })
}

/// `steps` uniform thresholds over `[0, max finite score]`.
pub fn far_frr_scores(genuine: &[f64], impostor: &[f64], steps: usize) -> Result<RocCurves> {
    check_sets(genuine, impostor)?;
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("FAR/FRR sweep needs at least 2 steps, got {steps}")));
    }
    let max = genuine
        .iter()
        .chain(impostor)
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let thresholds = (0..steps).map(|k| max * k as f64 / (steps - 1) as f64).collect();
    roc_at_thresholds(genuine, impostor, thresholds)
}

/// Exact sweep: a threshold at 0 and at every distinct finite score.
pub fn far_frr_exact_scores(genuine: &[f64], impostor: &[f64]) -> Result<RocCurves> {
    check_sets(genuine, impostor)?;
    let mut thresholds: Vec<f64> = std::iter::once(0.0)
        .chain(genuine.iter().chain(impostor).copied().filter(|v| v.is_finite()))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    roc_at_thresholds(genuine, impostor, thresholds)
}

/// FAR/FRR over directed genuine/impostor pairs of `matrix` with `steps`
/// uniform thresholds from 0 to the largest finite dissimilarity.
pub fn far_frr(matrix: &DissimilarityMatrix, steps: usize) -> Result<RocCurves> {
    let (g, i) = matrix.split_scores();
    far_frr_scores(&g, &i, steps)
}

pub fn far_frr_exact(matrix: &DissimilarityMatrix) -> Result<RocCurves> {
    let (g, i) = matrix.split_scores();
    far_frr_exact_scores(&g, &i)
}

fn check_rank_preconditions(matrix: &DissimilarityMatrix, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("rank N must be at least 1".into()));
    }
    if matrix.is_empty() {
        return Err(Error::InvalidInput("dissimilarity matrix is empty".into()));
    }
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for l in matrix.labels() {
        *per.entry(l.individual_id.as_str()).or_insert(0) += 1;
    }
    let lonely: Vec<&str> = per.into_iter().filter(|&(_, c)| c < 2).map(|(k, _)| k).collect();
    if !lonely.is_empty() {
        return Err(Error::InvalidInput(format!(
            "individuals with fewer than 2 scales cannot be ranked: {}",
            lonely.join(", ")
        )));
    }
    Ok(())
}

/// Rank (1-based) of the best-placed sibling scale for every query row.
/// Candidates are ordered by ascending dissimilarity, ties by label.
pub fn sibling_ranks(matrix: &DissimilarityMatrix) -> Result<Vec<usize>> {
    check_rank_preconditions(matrix, 1)?;
    let labels = matrix.labels();
    let n = labels.len();
    Ok((0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (matrix.get(i, j).unwrap_or(f64::INFINITY), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| labels[a.1].cmp(&labels[b.1])));
            cand.iter()
                .position(|&(_, j)| labels[j].individual_id == labels[i].individual_id)
                .map_or(usize::MAX, |p| p + 1)
        })
        .collect())
}

/// Fraction of query scales whose individual appears among the `n` most
/// similar other scales.
pub fn n_rank(matrix: &DissimilarityMatrix, n: usize) -> Result<f64> {
    check_rank_preconditions(matrix, n)?;
    let ranks = sibling_ranks(matrix)?;
    Ok(ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64)
}
