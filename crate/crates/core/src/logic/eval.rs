use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::form::{EntityRef, LogicalForm, Node, Predicate, Relation};
use super::LogicError;
use crate::geo::{haversine_m, initial_bearing_deg, LatLon};
use crate::world::{DayStamp, GeoFact, WorldSnapshot};

/// Distance thresholds for relation and deixis predicates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub max_radius_m: f64,
    pub near_radius_m: f64,
    pub here_radius_m: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            max_radius_m: 500.0,
            near_radius_m: 100.0,
            here_radius_m: 100.0,
        }
    }
}

/// Cone test for `rel`, with the anchor as origin.
///
/// Cardinal cones are 90° wide around N/E/S/W; a bearing of exactly
/// 45°/135°/225°/315° belongs to the north or south cone.
pub fn eval_spatial(rel: Relation, anchor: LatLon, candidate: LatLon, cfg: &GeometryConfig) -> bool {
    let d = haversine_m(anchor, candidate);
    if d <= 0.0 {
        return false;
    }
    if rel == Relation::Near {
        return d <= cfg.near_radius_m;
    }
    if d > cfg.max_radius_m {
        return false;
    }
    let b = initial_bearing_deg(anchor, candidate);
    match rel {
        Relation::FrontOf => b >= 315.0 || b <= 45.0,
        Relation::Behind => (135.0..=225.0).contains(&b),
        Relation::RightOf => b > 45.0 && b < 135.0,
        Relation::LeftOf => b > 225.0 && b < 315.0,
        Relation::Near => unreachable!(),
    }
}

/// Media ids ordered by distance to the form's anchor, then id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denotation {
    pub media_ids: Vec<String>,
}

impl Denotation {
    pub fn as_set(&self) -> BTreeSet<&str> {
        self.media_ids.iter().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.media_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.media_ids.is_empty()
    }
}

/// The query shapes the interpreter understands.
#[derive(Debug, Clone, PartialEq)]
pub enum FormShape<'a> {
    Spatial {
        rel: Relation,
        entity: &'a EntityRef,
        kind: Option<&'a str>,
    },
    ViewOf(&'a EntityRef),
    Day(DayStamp),
    Month(u8),
    All,
}

fn malformed(msg: impl Into<String>) -> LogicError {
    LogicError::MalformedForm(msg.into())
}

pub fn classify(form: &LogicalForm) -> Result<FormShape<'_>, LogicError> {
    form.validate()?;
    let root = form.root();
    let edge = &root.children[0];
    if (edge.parent_arg, edge.child_arg) != (1, 1) {
        return Err(malformed("head must join the answer variable on its first slot"));
    }
    let head: &Node = &edge.node;
    match &head.pred {
        Predicate::Spatial(rel) => {
            let mut entity = None;
            let mut kind = None;
            for e in &head.children {
                if (e.parent_arg, e.child_arg) != (2, 1) || !e.node.children.is_empty() {
                    return Err(malformed("spatial restriction must hang off the second slot"));
                }
                match &e.node.pred {
                    Predicate::Const(c) if entity.is_none() => entity = Some(c),
                    Predicate::Kind(k) if kind.is_none() => kind = Some(k.as_str()),
                    other => return Err(malformed(format!("unexpected {} under {rel}", other.symbol()))),
                }
            }
            let entity = entity.ok_or_else(|| malformed(format!("{rel} needs a const anchor")))?;
            Ok(FormShape::Spatial { rel: *rel, entity, kind })
        }
        Predicate::View => match head.children.as_slice() {
            [] => Ok(FormShape::All),
            [e] if (e.parent_arg, e.child_arg) == (1, 1) && e.node.children.is_empty() => match &e.node.pred {
                Predicate::Const(c) => Ok(FormShape::ViewOf(c)),
                Predicate::Day(d) => Ok(FormShape::Day(*d)),
                Predicate::MonthIs(m) => Ok(FormShape::Month(*m)),
                other => Err(malformed(format!("unexpected {} under view", other.symbol()))),
            },
            _ => Err(malformed("view takes at most one restriction")),
        },
        other => Err(malformed(format!("{} cannot head a query", other.symbol()))),
    }
}

fn resolve_fact<'w>(w: &'w WorldSnapshot, name: &str) -> Result<&'w GeoFact, LogicError> {
    w.facts.resolve(name).ok_or_else(|| LogicError::UnknownEntity(name.to_string()))
}

/// Index of the fact nearest to `p` (first in table order on ties).
fn nearest_fact(facts: &[GeoFact], p: LatLon) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, f) in facts.iter().enumerate() {
        let d = haversine_m(f.position(), p);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best
}

/// Interprets `form` against `world`.
pub fn evaluate(form: &LogicalForm, world: &WorldSnapshot, cfg: &GeometryConfig) -> Result<Denotation, LogicError> {
    let here = world.context.position();
    let media = world.media.records();
    let (anchor, selected): (LatLon, Vec<usize>) = match classify(form)? {
        FormShape::Spatial { rel, entity, kind } => {
            let (anchor, fact_kind) = match entity {
                EntityRef::Here => (here, None),
                EntityRef::Named(n) => {
                    let f = resolve_fact(world, n)?;
                    (f.position(), Some(f.kind.as_str()))
                }
            };
            if kind.is_some() && kind != fact_kind {
                return Ok(Denotation::default());
            }
            let hits = (0..media.len())
                .filter(|&i| eval_spatial(rel, anchor, media[i].position(), cfg))
                .collect();
            (anchor, hits)
        }
        FormShape::ViewOf(EntityRef::Here) => {
            let hits = (0..media.len())
                .filter(|&i| haversine_m(here, media[i].position()) <= cfg.here_radius_m)
                .collect();
            (here, hits)
        }
        FormShape::ViewOf(EntityRef::Named(n)) => {
            let target = resolve_fact(world, n)?;
            let facts = world.facts.facts();
            let target_idx = facts
                .iter()
                .position(|f| std::ptr::eq(f, target))
                .expect("resolved fact lives in the table");
            let hits = (0..media.len())
                .filter(|&i| {
                    matches!(nearest_fact(facts, media[i].position()),
                        Some((fi, d)) if fi == target_idx && d <= cfg.max_radius_m)
                })
                .collect();
            (target.position(), hits)
        }
        FormShape::Day(day) => (here, (0..media.len()).filter(|&i| media[i].timestamp == day).collect()),
        FormShape::Month(m) => {
            let hits = (0..media.len())
                .filter(|&i| media[i].month == m && haversine_m(here, media[i].position()) <= cfg.here_radius_m)
                .collect();
            (here, hits)
        }
        FormShape::All => (here, (0..media.len()).collect()),
    };

    let mut keyed: Vec<(f64, &str)> = selected
        .into_iter()
        .map(|i| (haversine_m(anchor, media[i].position()), media[i].id.as_str()))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(Denotation {
        media_ids: keyed.into_iter().map(|(_, id)| id.to_string()).collect(),
    })
}
