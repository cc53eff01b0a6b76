//! Egocentric preprocessing: heading quantization, reference-frame rewriting
//! of spatial phrases, and resolution of deictic place and time expressions.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{normalize_degrees, LatLon};
use crate::lexicon::{Lexicon, TimeUnit, UserRelation};
use crate::world::{DayStamp, UserContext};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("empty query")]
    EmptyQuery,
    #[error("query names both a day offset ({day}) and a month ({month})")]
    ConflictingTemporal { day: String, month: String },
    #[error("temporal offset {0:?} falls outside the calendar")]
    OffsetOutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinal {
    North,
    East,
    South,
    West,
}

impl Cardinal {
    pub const ALL: [Cardinal; 4] = [Cardinal::North, Cardinal::East, Cardinal::South, Cardinal::West];

    /// Clockwise quarter turns from north.
    pub fn quarter_turns(self) -> usize {
        self as usize
    }

    pub fn degrees(self) -> f64 {
        90.0 * self.quarter_turns() as f64
    }
}

impl fmt::Display for Cardinal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cardinal::North => "north",
            Cardinal::East => "east",
            Cardinal::South => "south",
            Cardinal::West => "west",
        })
    }
}

/// Which convention spatial phrases follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// "in front of" means north of, regardless of heading.
    #[default]
    Geomagnetic,
    /// "in front of" means in the direction the user faces.
    UserCentric,
}

/// Nearest cardinal; exact midpoints go clockwise (45 -> east).
pub fn quantize_heading(heading_deg: f64) -> Cardinal {
    let h = normalize_degrees(heading_deg);
    let q = ((h + 45.0) / 90.0).floor() as usize % 4;
    Cardinal::ALL[q]
}

/// Rotates a user-relative relation into the geomagnetic frame for a user
/// facing `facing`. `near` has no direction and is returned as is.
pub fn rewrite_relation(rel: UserRelation, facing: Cardinal) -> UserRelation {
    const CYCLE: [UserRelation; 4] = UserRelation::DIRECTIONAL;
    match CYCLE.iter().position(|&r| r == rel) {
        Some(i) => CYCLE[(i + facing.quarter_turns()) % 4],
        None => rel,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedQuery {
    pub text: String,
    pub anchor_override: Option<LatLon>,
    pub day_stamp: Option<DayStamp>,
    pub month: Option<u8>,
    pub frame: Frame,
}

fn offset_from(t: DayStamp, n: u32, unit: TimeUnit) -> Option<DayStamp> {
    match unit {
        TimeUnit::Day => t.minus_days(n as u64),
        TimeUnit::Week => t.minus_days(7 * n as u64),
        TimeUnit::Month => t.minus_months(n),
        TimeUnit::Year => t.minus_months(n.checked_mul(12)?),
    }
}

/// Rewrites spatial phrases for the chosen frame and resolves deixis.
pub fn resolve(text: &str, ctx: &UserContext, frame: Frame, lexicon: &Lexicon) -> Result<ResolvedQuery, ContextError> {
    if text.trim().is_empty() {
        return Err(ContextError::EmptyQuery);
    }

    let rewritten = match frame {
        Frame::Geomagnetic => text.to_string(),
        Frame::UserCentric => {
            let facing = quantize_heading(ctx.heading_deg);
            lexicon
                .spatial_regex()
                .replace_all(text, |caps: &regex::Captures<'_>| {
                    let found = &caps[0];
                    let Some(phrase) = lexicon.spatial_phrase(found) else {
                        return found.to_string();
                    };
                    let rotated = rewrite_relation(phrase.relation, facing);
                    if rotated == phrase.relation {
                        found.to_string()
                    } else {
                        lexicon.rewrite_phrase(rotated).unwrap_or(found).to_string()
                    }
                })
                .into_owned()
        }
    };

    let anchor_override = lexicon.deixis_regex().is_match(&rewritten).then(|| ctx.position());

    let ago = lexicon.ago_regex().captures(&rewritten);
    let month_hit = lexicon.month_regex().find(&rewritten);
    if let (Some(a), Some(m)) = (&ago, &month_hit) {
        return Err(ContextError::ConflictingTemporal {
            day: a[0].to_string(),
            month: m.as_str().to_string(),
        });
    }

    let mut day_stamp = None;
    if let Some(c) = &ago {
        let n = lexicon
            .number_value(&c["n"])
            .ok_or_else(|| ContextError::OffsetOutOfRange(c[0].to_string()))?;
        let unit = lexicon
            .time_unit(&c["unit"])
            .ok_or_else(|| ContextError::OffsetOutOfRange(c[0].to_string()))?;
        day_stamp =
            Some(offset_from(ctx.query_time, n, unit).ok_or_else(|| ContextError::OffsetOutOfRange(c[0].to_string()))?);
    }
    let month = month_hit.and_then(|m| lexicon.month_number(&m.as_str().to_lowercase()));

    Ok(ResolvedQuery {
        text: rewritten,
        anchor_override,
        day_stamp,
        month,
        frame,
    })
}
