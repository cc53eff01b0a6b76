use serde::{Deserialize, Serialize};

use super::{DayStamp, MediaKind, MediaRecord};

/// One manifest line as it appears on disk. Unknown fields are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestLine {
    pub id: String,
    pub kind: MediaKind,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: u32,
    pub uri: String,
}

impl From<&MediaRecord> for ManifestLine {
    fn from(m: &MediaRecord) -> Self {
        Self {
            id: m.id.clone(),
            kind: m.kind,
            lat: m.lat,
            lon: m.lon,
            timestamp: m.timestamp.value(),
            uri: m.uri.clone(),
        }
    }
}

impl ManifestLine {
    pub fn into_record(self) -> Result<MediaRecord, String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        let ts = DayStamp::new(self.timestamp).map_err(|e| e.to_string())?;
        MediaRecord::new(self.id, self.kind, self.lat, self.lon, ts, self.uri).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InvalidLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MediaIngestReport {
    pub added: usize,
    pub invalid: Vec<InvalidLine>,
}
