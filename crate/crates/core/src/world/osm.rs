//! OSM XML node extraction.
//!
//! Only `<node>` elements are read. A node becomes a fact when it carries a
//! `name` tag and one of [`KIND_TAGS`]; the tag's value is the fact kind.

use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{GeoFact, WorldError};
use crate::geo;

/// Tag keys whose value names the entity category, in priority order.
pub const KIND_TAGS: [&str; 5] = ["amenity", "shop", "leisure", "highway", "building"];

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct OsmIngestReport {
    pub facts_added: usize,
    pub nodes_skipped: usize,
    pub duplicates: usize,
}

#[derive(Default)]
struct PendingNode {
    id: String,
    lat: f64,
    lon: f64,
    name: Option<String>,
    kind_tags: Vec<(String, String)>,
}

impl PendingNode {
    fn kind(&self) -> Option<String> {
        KIND_TAGS.iter().find_map(|key| {
            self.kind_tags.iter().find(|(k, _)| k == key).map(|(k, v)| {
                // building=yes only says "this is a building"
                if k == "building" && v == "yes" {
                    "building".to_string()
                } else {
                    v.clone()
                }
            })
        })
    }

    fn into_fact(self) -> Option<GeoFact> {
        let kind = self.kind()?;
        let name = self.name.as_deref()?;
        GeoFact::new(&kind, name, self.lat, self.lon).ok()
    }
}

/// Parses every node into a candidate fact (`None` for skipped nodes).
/// Fails atomically: nothing is returned when any node is malformed.
pub fn parse_osm_xml<R: BufRead>(input: R) -> Result<Vec<Option<GeoFact>>, WorldError> {
    let mut reader = Reader::from_reader(input);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut out = Vec::new();
    let mut current: Option<PendingNode> = None;

    let malformed = |reader: &Reader<R>, message: String| WorldError::MalformedXml {
        offset: reader.error_position().max(reader.buffer_position()),
        message,
    };

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| malformed(&reader, e.to_string()))?;
        match event {
            Event::Start(e) if e.name().as_ref() == b"node" => {
                current = Some(start_node(&e).map_err(|m| attr_error(&reader, m))?);
            }
            Event::Empty(e) if e.name().as_ref() == b"node" => {
                let node = start_node(&e).map_err(|m| attr_error(&reader, m))?;
                out.push(node.into_fact());
            }
            Event::Empty(e) | Event::Start(e) if e.name().as_ref() == b"tag" => {
                if let Some(node) = current.as_mut() {
                    let (k, v) = read_tag(&e).map_err(|m| malformed(&reader, m))?;
                    if k == "name" {
                        node.name = Some(v);
                    } else if KIND_TAGS.contains(&k.as_str()) {
                        node.kind_tags.push((k, v));
                    }
                }
            }
            Event::End(e) if e.name().as_ref() == b"node" => {
                if let Some(node) = current.take() {
                    out.push(node.into_fact());
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if current.is_some() {
        return Err(malformed(&reader, "unterminated <node>".into()));
    }
    Ok(out)
}

enum AttrError {
    Malformed(String),
    Coordinate(String),
}

fn attr_error<R>(reader: &Reader<R>, e: AttrError) -> WorldError {
    match e {
        AttrError::Malformed(message) => WorldError::MalformedXml {
            offset: reader.buffer_position(),
            message,
        },
        AttrError::Coordinate(m) => WorldError::InvalidCoordinate(m),
    }
}

fn start_node(e: &BytesStart<'_>) -> Result<PendingNode, AttrError> {
    let mut node = PendingNode::default();
    let (mut lat, mut lon) = (None, None);
    for attr in e.attributes() {
        let attr = attr.map_err(|e| AttrError::Malformed(e.to_string()))?;
        let value = attr
            .unescape_value()
            .map_err(|e| AttrError::Malformed(e.to_string()))?
            .into_owned();
        match attr.key.as_ref() {
            b"id" => node.id = value,
            b"lat" => lat = Some(value),
            b"lon" => lon = Some(value),
            _ => {}
        }
    }
    let parse = |v: Option<String>, what: &str| -> Result<f64, AttrError> {
        let v = v.ok_or_else(|| AttrError::Coordinate(format!("node {} has no {what}", node.id)))?;
        v.trim()
            .parse::<f64>()
            .map_err(|_| AttrError::Coordinate(format!("node {}: {what}={v:?}", node.id)))
    };
    node.lat = parse(lat, "lat")?;
    node.lon = parse(lon, "lon")?;
    if !geo::valid_coordinate(node.lat, node.lon) {
        return Err(AttrError::Coordinate(format!(
            "node {}: ({}, {}) out of range",
            node.id, node.lat, node.lon
        )));
    }
    Ok(node)
}

fn read_tag(e: &BytesStart<'_>) -> Result<(String, String), String> {
    let (mut k, mut v) = (None, None);
    for attr in e.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let value = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        match attr.key.as_ref() {
            b"k" => k = Some(value),
            b"v" => v = Some(value),
            _ => {}
        }
    }
    match (k, v) {
        (Some(k), Some(v)) => Ok((k, v)),
        _ => Err("<tag> needs both k and v".into()),
    }
}
