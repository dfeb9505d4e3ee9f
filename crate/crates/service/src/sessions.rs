use std::path::PathBuf;

use crate::api::IdentifySession;
use crate::error::{ApiError, ApiResult};

/// One JSON file per session, written atomically.
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: PathBuf) -> Self {
        Self { dir }
    }

    /// Session ids are UUIDs; anything else cannot name a file here.
    fn path(&self, id: &str) -> Option<PathBuf> {
        let uuid = uuid::Uuid::parse_str(id).ok()?;
        Some(self.dir.join(format!("{}.json", uuid.hyphenated())))
    }

    pub fn save(&self, session: &IdentifySession) -> ApiResult<()> {
        let path = self
            .path(&session.session_id)
            .ok_or_else(|| ApiError::internal(format!("bad session id {}", session.session_id)))?;
        let io = |e: std::io::Error| ApiError::internal(format!("cannot persist session: {e}"));
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let bytes = serde_json::to_vec_pretty(session).map_err(|e| ApiError::internal(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)
    }

    pub fn load(&self, id: &str) -> ApiResult<Option<IdentifySession>> {
        let Some(path) = self.path(id) else {
            return Ok(None);
        };
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ApiError::internal(format!("session {id} is corrupt: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ApiError::internal(format!("cannot read session {id}: {e}"))),
        }
    }
}
