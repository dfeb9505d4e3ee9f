//! JSON wire types. Images and masks travel as base64-encoded PNG (or JPEG
//! for photographs) strings.

use serde::{Deserialize, Serialize};
use spotid_core::evaluation::Calibration;
use spotid_core::gallery::{GalleryRecord, LightCondition, Provenance, RecordMetadata, ScaleKey};
use spotid_core::matching::{MatchMethod, RankedCandidates};
use spotid_core::registration::{RigidTransform, SpotCloud};
use spotid_core::segmentation::SegmentationParams;

pub const DEFAULT_TOP_N: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentRequest {
    /// Base64 PNG or JPEG of the cropped, upright scale.
    pub image: String,
    /// Missing fields take their defaults.
    #[serde(default)]
    pub params: SegmentationParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub width: usize,
    pub height: usize,
    pub spots: usize,
    pub mask_png: String,
    pub dark_thread_png: String,
    pub bright_thread_png: String,
    pub params_used: SegmentationParams,
}

fn default_method() -> MatchMethod {
    MatchMethod::IcpProcrustes
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifyRequest {
    pub mask_png: String,
    #[serde(default = "default_method")]
    pub method: MatchMethod,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    #[serde(default)]
    pub query_id: Option<String>,
    /// When false the request returns 202 at once and the session is
    /// polled through `GET /sessions/{id}`.
    #[serde(default = "default_true")]
    pub wait: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    PendingReview,
    Confirmed,
    EnrolledNew,
}

/// Alignment of the query onto one candidate, for side-by-side overlays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOverlay {
    pub individual_id: String,
    pub scale_id: String,
    pub dissimilarity: f64,
    pub rotation_deg: f64,
    pub transform: RigidTransform,
    /// Query centroids in the candidate's pixel frame after alignment.
    pub aligned_query: SpotCloud,
    pub record_cloud: SpotCloud,
    /// `(query_index, record_index)` pairs used by Procrustes.
    pub pairs: Vec<(usize, usize)>,
    pub record_width: usize,
    pub record_height: usize,
}

/// EER operating point from the gallery's last calibration run. Advisory
/// only; the reviewer makes the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advisory {
    pub method: MatchMethod,
    pub eer: f64,
    pub eer_threshold: f64,
    pub best_dissimilarity: Option<f64>,
    /// Best candidate scores above the threshold (or nothing was scorable).
    pub likely_new_individual: bool,
}

impl Advisory {
    pub fn for_candidates(cal: &Calibration, method: MatchMethod, candidates: &RankedCandidates) -> Option<Self> {
        if cal.method != method {
            return None;
        }
        let best = candidates.scores.first().map(|s| s.dissimilarity);
        Some(Self {
            method,
            eer: cal.eer,
            eer_threshold: cal.eer_threshold,
            best_dissimilarity: best,
            likely_new_individual: best.is_none_or(|b| b > cal.eer_threshold),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifySession {
    pub session_id: String,
    pub status: SessionStatus,
    pub query_id: String,
    pub query_mask_png: String,
    pub method: MatchMethod,
    pub top_n: usize,
    /// Manifest version of the gallery the candidates were computed against.
    pub gallery_version: u64,
    pub candidates: RankedCandidates,
    pub overlays: Vec<CandidateOverlay>,
    pub advisory: Option<Advisory>,
    pub decided_individual: Option<String>,
    /// Scale created when the decision enrolled a new individual.
    pub enrolled: Option<ScaleKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Match(String),
    NewIndividual(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfirmRequest {
    #[serde(flatten)]
    pub decision: Decision,
    /// Stored with the record when the decision enrolls a new individual.
    #[serde(default = "automatic")]
    pub metadata: RecordMetadata,
}

fn automatic() -> RecordMetadata {
    RecordMetadata {
        light_condition: LightCondition::Normal,
        provenance: Provenance::Automatic,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnrollRequest {
    pub individual_id: String,
    /// Next free `s<n>` when omitted.
    #[serde(default)]
    pub scale_id: Option<String>,
    pub mask_png: String,
    #[serde(default)]
    pub metadata: RecordMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub individual_id: String,
    pub scale_id: String,
    pub width: usize,
    pub height: usize,
    pub spots: usize,
    pub light_condition: LightCondition,
    pub provenance: Provenance,
}

impl From<&GalleryRecord> for RecordSummary {
    fn from(r: &GalleryRecord) -> Self {
        Self {
            individual_id: r.individual_id.clone(),
            scale_id: r.scale_id.clone(),
            width: r.width,
            height: r.height,
            spots: r.cloud.len(),
            light_condition: r.light_condition,
            provenance: r.provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualView {
    pub individual_id: String,
    pub scales: Vec<RecordSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryView {
    pub manifest_version: u64,
    pub scale_count: usize,
    pub individuals: Vec<IndividualView>,
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingSession {
    pub session_id: String,
    pub state: String,
}
