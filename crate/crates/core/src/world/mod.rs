//! Static geographic facts, dynamic media metadata and per-user query
//! context, served to the interpreter as immutable snapshots.

mod media;
mod normalize;
mod osm;
mod store;
mod time;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, LatLon};

pub use media::{InvalidLine, MediaIngestReport, ManifestLine};
pub use normalize::{is_canonical_name, normalize_name};
pub use osm::{parse_osm_xml, OsmIngestReport, KIND_TAGS};
pub use store::WorldStore;
pub use time::DayStamp;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("name {0:?} is empty after normalization")]
    EmptyName(String),
    #[error("malformed XML at byte {offset}: {message}")]
    MalformedXml { offset: u64, message: String },
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),
    #[error("invalid heading {0}")]
    InvalidHeading(f64),
    #[error("invalid day stamp {0} (expected a real YYYYMMDD date)")]
    InvalidTimestamp(u32),
    #[error("no fact {kind}:{name}")]
    UnknownFact { kind: String, name: String },
    #[error("alias {alias:?} already names {owner}")]
    AliasCollision { alias: String, owner: String },
    #[error("all {0} manifest lines are invalid")]
    AllLinesInvalid(usize),
    #[error("no context for user {0:?}")]
    UnknownUser(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A named entity of the static world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoFact {
    pub kind: String,
    pub name: String,
    pub aliases: BTreeSet<String>,
    pub lat: f64,
    pub lon: f64,
}

impl GeoFact {
    pub fn new(kind: &str, name: &str, lat: f64, lon: f64) -> Result<Self, WorldError> {
        if !geo::valid_coordinate(lat, lon) {
            return Err(WorldError::InvalidCoordinate(format!("({lat}, {lon})")));
        }
        let name = normalize_name(name)?;
        Ok(Self {
            kind: normalize_name(kind)?,
            aliases: BTreeSet::from([name.clone()]),
            name,
            lat,
            lon,
        })
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    pub fn key(&self) -> (String, String) {
        (self.kind.clone(), self.name.clone())
    }
}

impl fmt::Display for GeoFact {
    /// Prolog-style fact rendering, e.g. `bus_stop('universitaet_mensa',49.2562752,7.0436771)`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}('{}',{},{})", self.kind, self.name, self.lat, self.lon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Image,
    Video,
}

impl fmt::Display for MediaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MediaKind::Image => "image",
            MediaKind::Video => "video",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRecord {
    pub id: String,
    pub kind: MediaKind,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: DayStamp,
    pub month: u8,
    pub uri: String,
}

impl MediaRecord {
    pub fn new(
        id: impl Into<String>,
        kind: MediaKind,
        lat: f64,
        lon: f64,
        timestamp: DayStamp,
        uri: impl Into<String>,
    ) -> Result<Self, WorldError> {
        if !geo::valid_coordinate(lat, lon) {
            return Err(WorldError::InvalidCoordinate(format!("({lat}, {lon})")));
        }
        Ok(Self {
            id: id.into(),
            kind,
            lat,
            lon,
            month: timestamp.month(),
            timestamp,
            uri: uri.into(),
        })
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Position, heading and clock of the user issuing a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub user_id: String,
    pub lat: f64,
    pub lon: f64,
    /// Degrees clockwise from geographic north, in `[0, 360)`.
    pub heading_deg: f64,
    pub query_time: DayStamp,
}

impl UserContext {
    pub fn new(
        user_id: impl Into<String>,
        lat: f64,
        lon: f64,
        heading_deg: f64,
        query_time: DayStamp,
    ) -> Result<Self, WorldError> {
        if !geo::valid_coordinate(lat, lon) {
            return Err(WorldError::InvalidCoordinate(format!("({lat}, {lon})")));
        }
        if !heading_deg.is_finite() {
            return Err(WorldError::InvalidHeading(heading_deg));
        }
        Ok(Self {
            user_id: user_id.into(),
            lat,
            lon,
            heading_deg: geo::normalize_degrees(heading_deg),
            query_time,
        })
    }

    /// Re-validates a context that may have come from deserialization.
    pub fn validated(self) -> Result<Self, WorldError> {
        Self::new(self.user_id, self.lat, self.lon, self.heading_deg, self.query_time)
    }

    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Facts plus a lookup from every name and alias to the first fact carrying it.
#[derive(Debug, Clone, Default)]
pub struct FactTable {
    facts: Vec<GeoFact>,
    by_name: HashMap<String, usize>,
}

impl FactTable {
    pub fn facts(&self) -> &[GeoFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Resolves a name or alias.
    pub fn resolve(&self, name: &str) -> Option<&GeoFact> {
        self.by_name.get(name).map(|&i| &self.facts[i])
    }

    fn index_of(&self, kind: &str, name: &str) -> Option<usize> {
        self.facts.iter().position(|f| f.kind == kind && f.name == name)
    }

    /// Inserts unless a fact with the same `(kind, name)` exists.
    fn insert(&mut self, fact: GeoFact) -> bool {
        if self.index_of(&fact.kind, &fact.name).is_some() {
            return false;
        }
        let idx = self.facts.len();
        for alias in &fact.aliases {
            self.by_name.entry(alias.clone()).or_insert(idx);
        }
        self.facts.push(fact);
        true
    }

    fn add_alias(&mut self, kind: &str, name: &str, alias_raw: &str) -> Result<GeoFact, WorldError> {
        let idx = self.index_of(kind, name).ok_or_else(|| WorldError::UnknownFact {
            kind: kind.to_string(),
            name: name.to_string(),
        })?;
        let alias = normalize_name(alias_raw)?;
        match self.by_name.get(&alias) {
            Some(&owner) if owner != idx => {
                let o = &self.facts[owner];
                return Err(WorldError::AliasCollision {
                    alias,
                    owner: format!("{}:{}", o.kind, o.name),
                });
            }
            Some(_) => {}
            None => {
                self.by_name.insert(alias.clone(), idx);
            }
        }
        self.facts[idx].aliases.insert(alias);
        Ok(self.facts[idx].clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct MediaTable {
    media: Vec<MediaRecord>,
    by_id: HashMap<String, usize>,
}

impl MediaTable {
    pub fn records(&self) -> &[MediaRecord] {
        &self.media
    }

    pub fn len(&self) -> usize {
        self.media.len()
    }

    pub fn is_empty(&self) -> bool {
        self.media.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MediaRecord> {
        self.by_id.get(id).map(|&i| &self.media[i])
    }

    fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    fn push(&mut self, record: MediaRecord) {
        self.by_id.insert(record.id.clone(), self.media.len());
        self.media.push(record);
    }
}

/// Everything a logical form is interpreted against.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub facts: Arc<FactTable>,
    pub media: Arc<MediaTable>,
    pub context: UserContext,
    pub version: u64,
}

impl WorldSnapshot {
    /// Builds a free-standing snapshot, mainly for tests and simulations.
    pub fn from_parts(
        facts: impl IntoIterator<Item = GeoFact>,
        media: impl IntoIterator<Item = MediaRecord>,
        context: UserContext,
    ) -> Self {
        let mut ft = FactTable::default();
        for f in facts {
            ft.insert(f);
        }
        let mut mt = MediaTable::default();
        for m in media {
            if !mt.contains(&m.id) {
                mt.push(m);
            }
        }
        Self {
            facts: Arc::new(ft),
            media: Arc::new(mt),
            context,
            version: 0,
        }
    }

    /// Same world, different user context.
    pub fn with_context(&self, context: UserContext) -> Self {
        Self {
            facts: Arc::clone(&self.facts),
            media: Arc::clone(&self.media),
            context,
            version: self.version,
        }
    }
}
