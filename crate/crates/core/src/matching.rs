//! Identification pipelines: resize the query mask to each gallery record,
//! extract spot centroids, register with ICP (optionally followed by
//! one-to-one pairing and Procrustes analysis) and rank the gallery.
//!
//! The query is always the ICP source and the gallery record the target.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gallery::{Gallery, GalleryRecord, ScaleKey};
use crate::imaging::BinaryMask;
use crate::labeling;
use crate::registration::{icp, one_to_one_assign, procrustes, IcpParams, Point, RigidTransform, SpotCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchMethod {
    #[serde(rename = "icp")]
    Icp,
    #[serde(rename = "icp-procrustes")]
    IcpProcrustes,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMethod::Icp => "icp",
            MatchMethod::IcpProcrustes => "icp-procrustes",
        })
    }
}

impl FromStr for MatchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icp" => Ok(MatchMethod::Icp),
            "icp-procrustes" | "icp_procrustes" => Ok(MatchMethod::IcpProcrustes),
            other => Err(Error::InvalidParameter(format!(
                "unknown match method `{other}` (expected icp or icp-procrustes)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    pub icp: IcpParams,
    /// Divide the ICP objective by the query spot count so records with
    /// different spot counts rank on a common scale.
    pub normalize_by_count: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            icp: IcpParams::default(),
            normalize_by_count: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub individual_id: String,
    pub scale_id: String,
    pub dissimilarity: f64,
    pub method: MatchMethod,
}

impl MatchScore {
    /// Ascending dissimilarity, ties broken by `(individual_id, scale_id)`.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.dissimilarity
            .total_cmp(&other.dissimilarity)
            .then_with(|| self.individual_id.cmp(&other.individual_id))
            .then_with(|| self.scale_id.cmp(&other.scale_id))
    }
}

/// A score plus the alignment that produced it, for overlays and audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub score: MatchScore,
    pub transform: RigidTransform,
    /// Query centroids after normalization and the final ICP transform.
    pub aligned_query: SpotCloud,
    /// One-to-one `(query_index, record_index)` pairs fed to Procrustes
    /// (empty for plain ICP).
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub individual_id: String,
    pub scale_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidates {
    pub query_id: String,
    pub scores: Vec<MatchScore>,
    /// Records skipped because a cloud had too few spots.
    pub unmatchable: Vec<Unmatched>,
}

/// One centroid per 8-connected spot, ordered by each spot's topmost-leftmost pixel.
pub fn extract_centroids(mask: &BinaryMask) -> SpotCloud {
    let points = labeling::label(mask)
        .centroids()
        .into_iter()
        .map(|(x, y)| Point::new(x, y))
        .collect();
    SpotCloud { points }
}

/// Nearest-neighbour resampling of a mask to `target_width × target_height`.
pub fn normalize_mask(mask: &BinaryMask, target_width: usize, target_height: usize) -> Result<BinaryMask> {
    if target_width == 0 || target_height == 0 {
        return Err(Error::InvalidParameter(format!(
            "target dimensions must be positive, got {target_width}x{target_height}"
        )));
    }
    if mask.width() == target_width && mask.height() == target_height {
        return Ok(mask.clone());
    }
    let sx = mask.width() as f64 / target_width as f64;
    let sy = mask.height() as f64 / target_height as f64;
    let src_x: Vec<usize> = (0..target_width)
        .map(|x| (((x as f64 + 0.5) * sx) as usize).min(mask.width() - 1))
        .collect();
    BinaryMask::from_fn(target_width, target_height, |x, y| {
        let yy = (((y as f64 + 0.5) * sy) as usize).min(mask.height() - 1);
        mask.get(src_x[x], yy)
    })
}

fn unmatchable(record: &GalleryRecord, reason: String) -> Error {
    Error::Unmatchable {
        record: record.key().to_string(),
        reason,
    }
}

fn query_cloud(query: &BinaryMask, record: &GalleryRecord) -> Result<SpotCloud> {
    let resized = normalize_mask(query, record.width, record.height)?;
    let cloud = extract_centroids(&resized);
    if cloud.len() < 2 {
        return Err(unmatchable(record, format!("query has {} spot(s), need at least 2", cloud.len())));
    }
    if record.cloud.len() < 2 {
        return Err(unmatchable(
            record,
            format!("record has {} spot(s), need at least 2", record.cloud.len()),
        ));
    }
    Ok(cloud)
}

pub fn match_detailed(
    query: &BinaryMask,
    record: &GalleryRecord,
    method: MatchMethod,
    params: &MatchParams,
) -> Result<MatchOutcome> {
    let source = query_cloud(query, record)?;
    let reg = icp(&source, &record.cloud, &params.icp)?;
    let aligned = source.transformed(&reg.transform);
    let (dissimilarity, pairs) = match method {
        MatchMethod::Icp => {
            let d = if params.normalize_by_count {
                reg.objective / source.len() as f64
            } else {
                reg.objective
            };
            (d, Vec::new())
        }
        MatchMethod::IcpProcrustes => {
            let pairs = one_to_one_assign(&aligned, &record.cloud)?;
            let ys: Vec<Point> = pairs.iter().map(|&(i, _)| aligned.points[i]).collect();
            let xs: Vec<Point> = pairs.iter().map(|&(_, j)| record.cloud.points[j]).collect();
            let fit = procrustes(&xs, &ys).map_err(|e| unmatchable(record, e.to_string()))?;
            (fit.dissimilarity, pairs)
        }
    };
    Ok(MatchOutcome {
        score: MatchScore {
            individual_id: record.individual_id.clone(),
            scale_id: record.scale_id.clone(),
            dissimilarity,
            method,
        },
        transform: reg.transform,
        aligned_query: aligned,
        pairs,
    })
}

/// ICP matching; the score is the final objective per query spot (see [`MatchParams`]).
pub fn match_icp(query: &BinaryMask, record: &GalleryRecord, params: &MatchParams) -> Result<MatchScore> {
    Ok(match_detailed(query, record, MatchMethod::Icp, params)?.score)
}

/// ICP alignment, one-to-one closest pairs, then the Procrustes dissimilarity.
pub fn match_icp_procrustes(query: &BinaryMask, record: &GalleryRecord, params: &MatchParams) -> Result<MatchScore> {
    Ok(match_detailed(query, record, MatchMethod::IcpProcrustes, params)?.score)
}

/// Scores the query against every gallery scale except `exclude` and ranks
/// the results by ascending dissimilarity.
pub fn identify(
    query: &BinaryMask,
    query_id: &str,
    gallery: &Gallery,
    method: MatchMethod,
    params: &MatchParams,
    exclude: Option<&ScaleKey>,
) -> Result<RankedCandidates> {
    if gallery.is_empty() {
        return Err(Error::InvalidInput("cannot identify against an empty gallery".into()));
    }
    let results: Vec<(usize, Result<MatchScore>)> = gallery
        .records()
        .par_iter()
        .enumerate()
        .filter(|(_, r)| exclude.is_none_or(|k| r.key() != *k))
        .map(|(i, r)| (i, match_detailed(query, r, method, params).map(|o| o.score)))
        .collect();

    let mut scores = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (i, res) in results {
        match res {
            Ok(s) => scores.push(s),
            Err(Error::Unmatchable { reason, .. }) => {
                let r = &gallery.records()[i];
                skipped.push(Unmatched {
                    individual_id: r.individual_id.clone(),
                    scale_id: r.scale_id.clone(),
                    reason,
                });
            }
            Err(e) => return Err(e),
        }
    }
    scores.sort_by(MatchScore::rank_cmp);
    Ok(RankedCandidates {
        query_id: query_id.to_string(),
        scores,
        unmatchable: skipped,
    })
}
