use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use log::warn;

use super::{
    parse_osm_xml, FactTable, GeoFact, ManifestLine, MediaIngestReport, MediaRecord, MediaTable,
    InvalidLine, OsmIngestReport, UserContext, WorldError, WorldSnapshot,
};

/// Mutable home of the world. Writers need `&mut self`; `snapshot` only
/// needs `&self`, so the store is normally kept behind an `RwLock`.
///
/// Tables are copy-on-write: a snapshot holds `Arc`s that later writes never
/// touch.
#[derive(Debug, Default)]
pub struct WorldStore {
    facts: Arc<FactTable>,
    media: Arc<MediaTable>,
    contexts: HashMap<String, UserContext>,
    version: AtomicU64,
}

impl WorldStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn bump(&self) -> u64 {
        self.version.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    pub fn facts(&self) -> &FactTable {
        &self.facts
    }

    pub fn media(&self) -> &MediaTable {
        &self.media
    }

    pub fn context(&self, user_id: &str) -> Option<&UserContext> {
        self.contexts.get(user_id)
    }

    pub fn ingest_osm_xml<R: BufRead>(&mut self, input: R) -> Result<OsmIngestReport, WorldError> {
        let parsed = parse_osm_xml(input)?;
        let mut report = OsmIngestReport::default();
        let table = Arc::make_mut(&mut self.facts);
        for fact in parsed {
            match fact {
                None => report.nodes_skipped += 1,
                Some(f) => {
                    let key = format!("{}:{}", f.kind, f.name);
                    if table.insert(f) {
                        report.facts_added += 1;
                    } else {
                        warn!("duplicate fact {key}; keeping first occurrence");
                        report.duplicates += 1;
                    }
                }
            }
        }
        self.bump();
        Ok(report)
    }

    /// Inserts one fact directly; returns false for a duplicate `(kind, name)`.
    pub fn insert_fact(&mut self, fact: GeoFact) -> bool {
        let added = Arc::make_mut(&mut self.facts).insert(fact);
        self.bump();
        added
    }

    pub fn add_alias(&mut self, kind: &str, name: &str, alias_raw: &str) -> Result<GeoFact, WorldError> {
        let fact = Arc::make_mut(&mut self.facts).add_alias(kind, name, alias_raw)?;
        self.bump();
        Ok(fact)
    }

    pub fn ingest_media_manifest<R: BufRead>(&mut self, input: R) -> Result<MediaIngestReport, WorldError> {
        let mut report = MediaIngestReport::default();
        let mut accepted = Vec::new();
        let mut seen = HashSet::new();
        let mut nonblank = 0usize;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            nonblank += 1;
            let parsed = serde_json::from_str::<ManifestLine>(&line)
                .map_err(|e| e.to_string())
                .and_then(ManifestLine::into_record)
                .and_then(|r| {
                    if self.media.contains(&r.id) || !seen.insert(r.id.clone()) {
                        Err(format!("duplicate media id {:?}", r.id))
                    } else {
                        Ok(r)
                    }
                });
            match parsed {
                Ok(r) => accepted.push(r),
                Err(reason) => report.invalid.push(InvalidLine { line: i + 1, reason }),
            }
        }
        if nonblank > 0 && accepted.is_empty() {
            return Err(WorldError::AllLinesInvalid(nonblank));
        }
        report.added = accepted.len();
        self.extend_media(accepted);
        Ok(report)
    }

    /// Adds already-validated records, skipping ids that are present.
    pub fn extend_media(&mut self, records: impl IntoIterator<Item = MediaRecord>) -> usize {
        let table = Arc::make_mut(&mut self.media);
        let mut n = 0;
        for r in records {
            debug_assert_eq!(r.month, r.timestamp.month());
            if !table.contains(&r.id) {
                table.push(r);
                n += 1;
            }
        }
        self.bump();
        n
    }

    /// Replaces the user's context; returns the accepted version.
    pub fn set_user_context(&mut self, ctx: UserContext) -> Result<u64, WorldError> {
        let ctx = ctx.validated()?;
        self.contexts.insert(ctx.user_id.clone(), ctx);
        Ok(self.bump())
    }

    pub fn snapshot(&self, user_id: &str) -> Result<WorldSnapshot, WorldError> {
        let context = self
            .contexts
            .get(user_id)
            .cloned()
            .ok_or_else(|| WorldError::UnknownUser(user_id.to_string()))?;
        Ok(WorldSnapshot {
            facts: Arc::clone(&self.facts),
            media: Arc::clone(&self.media),
            context,
            version: self.bump(),
        })
    }
}
