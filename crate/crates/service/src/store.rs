use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use uuid::Uuid;

use crate::session::{Session, SessionError};

/// One JSON document per session, replaced atomically on every save.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Ids are UUIDs; anything else cannot name a stored session.
    fn path(&self, id: &str) -> Option<PathBuf> {
        let id = Uuid::parse_str(id).ok()?;
        Some(self.dir.join(format!("{}.json", id.hyphenated())))
    }

    pub fn load(&self, id: &str) -> Result<Option<Session>, SessionError> {
        let Some(path) = self.path(id) else { return Ok(None) };
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(SessionError::Storage(format!("{}: {e}", path.display()))),
        };
        serde_json::from_str(&text).map(Some).map_err(|e| SessionError::Storage(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, session: &Session) -> Result<(), SessionError> {
        let path = self.path(&session.id).ok_or_else(|| SessionError::Internal(format!("bad id {}", session.id)))?;
        let tmp = path.with_extension("json.tmp");
        let storage = |e: io::Error| SessionError::Storage(format!("{}: {e}", path.display()));
        let text = serde_json::to_string_pretty(session).map_err(|e| SessionError::Internal(e.to_string()))?;
        let mut file = fs::File::create(&tmp).map_err(storage)?;
        file.write_all(text.as_bytes()).map_err(storage)?;
        file.write_all(b"\n").map_err(storage)?;
        file.sync_all().map_err(storage)?;
        fs::rename(&tmp, &path).map_err(storage)
    }
}
