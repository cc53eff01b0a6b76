//! Seeded synthetic worlds, template question corpora, and scripted
//! relevance annotators.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{quantize_heading, rewrite_relation, Cardinal, Frame};
use crate::engine::{Engine, EngineError};
use crate::geo::{destination, haversine_m, LatLon};
use crate::lexicon::UserRelation;
use crate::learner::TrainingPair;
use crate::logic::{to_canonical_text, EntityRef, LogicalForm};
use crate::parser::Sense;
use crate::world::{DayStamp, GeoFact, MediaKind, MediaRecord, UserContext, WorldSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could only draw {got} of {wanted} pairs with non-empty gold")]
    ExhaustedSampling { wanted: usize, got: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

const PLACES: &[(&str, &str)] = &[
    ("building", "campus_center"),
    ("bus_station", "bus_terminal"),
    ("bus_stop", "universitaet_mensa"),
    ("building", "mpi_inf"),
    ("building", "mpi_sws"),
    ("library", "central_library"),
    ("bank", "postbank"),
    ("cafe", "cafe_europa"),
    ("restaurant", "mensa_garden"),
    ("building", "computer_science_building"),
    ("building", "lecture_hall_one"),
    ("sports_centre", "sports_hall"),
    ("building", "student_dorm"),
    ("atm", "sparkasse_atm"),
    ("fast_food", "pizza_corner"),
    ("building", "chemistry_lab"),
    ("parking", "north_car_park"),
    ("post_office", "campus_post"),
    ("pharmacy", "uni_pharmacy"),
    ("bar", "student_pub"),
    ("building", "physics_tower"),
    ("kindergarten", "campus_kita"),
    ("building", "guest_house"),
    ("theatre", "aula"),
    ("building", "conference_center"),
    ("cafe", "coffee_lab"),
    ("building", "visitor_center"),
    ("swimming_pool", "swimming_pool"),
    ("building", "biology_annex"),
    ("restaurant", "bistro_west"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthWorldConfig {
    pub seed: u64,
    pub n_facts: usize,
    pub n_media: usize,
    pub center: LatLon,
    /// Half the side of the square the world occupies, meters.
    pub half_extent_m: f64,
    pub query_time: DayStamp,
    /// Where "here" and "this place" point.
    pub fixed_here: LatLon,
    pub heading_deg: f64,
    pub user_id: String,
}

impl Default for SynthWorldConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_facts: 24,
            n_media: 300,
            center: LatLon::new(49.2567, 7.0430),
            half_extent_m: 600.0,
            query_time: DayStamp::new(20150516).expect("valid"),
            fixed_here: LatLon::new(49.2560, 7.0420),
            heading_deg: 0.0,
            user_id: "synth".into(),
        }
    }
}

fn offset(origin: LatLon, east_m: f64, north_m: f64) -> LatLon {
    let p = destination(origin, 0.0, north_m);
    destination(p, 90.0, east_m)
}

fn days_before(rng: &mut ChaCha8Rng, t: DayStamp, lo: u64, hi: u64) -> DayStamp {
    t.minus_days(rng.random_range(lo..=hi)).expect("recent dates exist")
}

/// A campus-sized world: named facts scattered in a square, media clustered
/// around facts and around the fixed "here" point, with a recent-heavy
/// timeline.
pub fn synthetic_world(cfg: &SynthWorldConfig) -> WorldSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = cfg.half_extent_m;
    let mut facts: Vec<GeoFact> = Vec::new();
    let mut tries = 0;
    for &(kind, name) in PLACES.iter().take(cfg.n_facts) {
        loop {
            tries += 1;
            let p = offset(cfg.center, rng.random_range(-h..h), rng.random_range(-h..h));
            // spacing keeps cones of neighbouring facts from coinciding
            if tries > 10_000 || facts.iter().all(|f| haversine_m(f.position(), p) >= 80.0) {
                facts.push(GeoFact::new(kind, name, p.lat, p.lon).expect("valid fact"));
                break;
            }
        }
    }

    let mut media = Vec::with_capacity(cfg.n_media);
    let cluster = cfg.n_media / 5;
    for i in 0..cfg.n_media {
        let (pos, ts) = if i < cluster {
            // around "here", one year of history
            let p = destination(cfg.fixed_here, rng.random_range(0.0..360.0), rng.random_range(5.0..90.0));
            (p, days_before(&mut rng, cfg.query_time, 1, 365))
        } else {
            let p = if !facts.is_empty() && rng.random_bool(0.6) {
                let f = facts.choose(&mut rng).expect("non-empty");
                destination(f.position(), rng.random_range(0.0..360.0), rng.random_range(20.0..300.0))
            } else {
                offset(cfg.center, rng.random_range(-h..h), rng.random_range(-h..h))
            };
            let ts = if rng.random_bool(0.6) {
                days_before(&mut rng, cfg.query_time, 1, 45)
            } else {
                days_before(&mut rng, cfg.query_time, 46, 365)
            };
            (p, ts)
        };
        let (kind, ext) = if rng.random_bool(0.85) { (MediaKind::Image, "jpg") } else { (MediaKind::Video, "mp4") };
        let id = format!("{kind}{i}");
        media.push(MediaRecord::new(&id, kind, pos.lat, pos.lon, ts, format!("{id}.{ext}")).expect("valid media"));
    }

    let ctx = UserContext::new(&cfg.user_id, cfg.fixed_here.lat, cfg.fixed_here.lon, cfg.heading_deg, cfg.query_time)
        .expect("valid context");
    WorldSnapshot::from_parts(facts, media, ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// what is there <relation> of X?
    Spatial,
    /// what happened here Y days/weeks/months/years ago?
    Ago,
    /// what did this place look like in Z?
    Month,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 3] = [TemplateKind::Spatial, TemplateKind::Ago, TemplateKind::Month];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub kind: TemplateKind,
    pub relation: Option<UserRelation>,
    pub entity: Option<String>,
    pub number: Option<u32>,
    pub unit: Option<String>,
    pub month: Option<u8>,
    /// Spell the number as digits instead of words.
    #[serde(default)]
    pub digits: bool,
}

const RELATION_PHRASES: [(UserRelation, &str); 4] = [
    (UserRelation::FrontOf, "in front"),
    (UserRelation::Behind, "behind"),
    (UserRelation::RightOf, "on the right"),
    (UserRelation::LeftOf, "on the left"),
];

const MONTH_NAMES: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September", "October", "November",
    "December",
];

const NUMBER_WORDS: [&str; 31] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty", "twenty one",
    "twenty two", "twenty three", "twenty four", "twenty five", "twenty six", "twenty seven", "twenty eight",
    "twenty nine", "thirty",
];

impl Template {
    pub fn render(&self) -> String {
        match self.kind {
            TemplateKind::Spatial => {
                let rel = self.relation.expect("spatial template has a relation");
                let phrase = RELATION_PHRASES.iter().find(|(r, _)| *r == rel).map(|(_, p)| *p).unwrap_or("near");
                format!("what is there {phrase} of {}?", self.entity.as_deref().unwrap_or_default().replace('_', " "))
            }
            TemplateKind::Ago => {
                let n = self.number.expect("ago template has a number");
                let unit = self.unit.as_deref().unwrap_or("day");
                let plural = if n == 1 { "" } else { "s" };
                let amount = if self.digits { n.to_string() } else { NUMBER_WORDS[n as usize].to_string() };
                format!("what happened here {amount} {unit}{plural} ago?")
            }
            TemplateKind::Month => {
                let m = self.month.expect("month template has a month");
                format!("what did this place look like in {}?", MONTH_NAMES[m as usize - 1])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub frame: Frame,
    pub fixed_here: Option<LatLon>,
    /// Restrict to these templates; empty means all three.
    pub templates: Vec<TemplateKind>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 200,
            seed: 1,
            frame: Frame::Geomagnetic,
            fixed_here: None,
            templates: Vec::new(),
        }
    }
}

/// A generated pair with the template it came from and its gold form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthPair {
    #[serde(flatten)]
    pub pair: TrainingPair,
    pub template: Template,
    pub logical_form: String,
}

fn draw_template(rng: &mut ChaCha8Rng, kinds: &[TemplateKind], world: &WorldSnapshot) -> Option<Template> {
    let kind = *kinds.choose(rng)?;
    let mut t = Template {
        kind,
        relation: None,
        entity: None,
        number: None,
        unit: None,
        month: None,
        digits: false,
    };
    match kind {
        TemplateKind::Spatial => {
            let f = world.facts.facts().choose(rng)?;
            t.relation = Some(RELATION_PHRASES.choose(rng)?.0);
            t.entity = Some(f.name.clone());
        }
        TemplateKind::Ago => {
            t.number = Some(rng.random_range(1..=30));
            t.unit = Some((*["day", "week", "month", "year"].choose(rng)?).to_string());
            t.digits = rng.random_bool(0.5);
        }
        TemplateKind::Month => t.month = Some(rng.random_range(1..=12)),
    }
    Some(t)
}

/// The form a template means under `frame` for a user facing `facing`.
pub fn template_form(t: &Template, frame: Frame, facing: Cardinal, query_time: DayStamp) -> Option<LogicalForm> {
    match t.kind {
        TemplateKind::Spatial => {
            let rel = match frame {
                Frame::Geomagnetic => t.relation?,
                Frame::UserCentric => rewrite_relation(t.relation?, facing),
            };
            Some(LogicalForm::spatial(rel.canonical_predicate(), EntityRef::Named(t.entity.clone()?)))
        }
        TemplateKind::Ago => {
            let n = t.number?;
            let d = match t.unit.as_deref()? {
                "day" => query_time.minus_days(n as u64),
                "week" => query_time.minus_days(7 * n as u64),
                "month" => query_time.minus_months(n),
                "year" => query_time.minus_months(12 * n),
                _ => None,
            }?;
            Some(LogicalForm::on_day(d))
        }
        TemplateKind::Month => Some(LogicalForm::in_month(t.month?)),
    }
}

/// Draws `cfg.n` template pairs whose gold is the rule-derived retrieval,
/// redrawing whenever the gold is empty.
pub fn generate_dataset(world: &WorldSnapshot, engine: &Engine, cfg: &SynthConfig) -> Result<Vec<SynthPair>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kinds: Vec<TemplateKind> = if cfg.templates.is_empty() { TemplateKind::ALL.to_vec() } else { cfg.templates.clone() };
    let mut ctx = world.context.clone();
    if let Some(h) = cfg.fixed_here {
        ctx.lat = h.lat;
        ctx.lon = h.lon;
    }
    let w = world.with_context(ctx.clone());
    let facing = quantize_heading(ctx.heading_deg);
    let mut out = Vec::with_capacity(cfg.n);
    let max_attempts = 100 * cfg.n.max(1);
    for _ in 0..max_attempts {
        if out.len() == cfg.n {
            break;
        }
        let Some(t) = draw_template(&mut rng, &kinds, &w) else { continue };
        let Some(form) = template_form(&t, cfg.frame, facing, ctx.query_time) else { continue };
        let gold = engine.denotation(&form, &w)?;
        if gold.is_empty() {
            continue;
        }
        out.push(SynthPair {
            pair: TrainingPair {
                query_text: t.render(),
                context: ctx.clone(),
                gold_ids: gold.media_ids.into_iter().collect(),
                frame: cfg.frame,
            },
            logical_form: to_canonical_text(&form),
            template: t,
        });
    }
    if out.len() < cfg.n {
        return Err(SynthError::ExhaustedSampling {
            wanted: cfg.n,
            got: out.len(),
        });
    }
    Ok(out)
}

/// Which reading of spatial phrases an annotator holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// "in front of" is north of.
    Geomagnetic,
    /// "in front of" is the direction the annotator faces.
    UserCentric,
}

/// Deterministic relevance judge applying one convention's geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptedAnnotator {
    pub convention: Convention,
    pub heading: Cardinal,
}

pub fn scripted_annotator(convention: Convention, heading: Cardinal) -> ScriptedAnnotator {
    ScriptedAnnotator { convention, heading }
}

impl ScriptedAnnotator {
    /// The form the annotator has in mind for `query`, read off the raw
    /// phrases rather than the learned parser.
    pub fn intended_form(&self, query: &str, world: &WorldSnapshot, engine: &Engine) -> Option<LogicalForm> {
        let resolved = engine.resolve(query, world, Frame::Geomagnetic).ok()?;
        let tokens = engine.parser().tokenize(&resolved, &engine.entities(world)).ok()?;
        let mut rel = None;
        let mut entity = None;
        for t in &tokens {
            match &t.sense {
                Sense::Spatial { .. } if rel.is_none() => {
                    rel = engine.lexicon().spatial_phrase(&t.surface).map(|p| p.relation);
                }
                Sense::Entity(e) if entity.is_none() => entity = Some(e.clone()),
                _ => {}
            }
        }
        if let (Some(rel), Some(e)) = (rel, entity.clone()) {
            let rel = match self.convention {
                Convention::Geomagnetic => rel,
                Convention::UserCentric => rewrite_relation(rel, self.heading),
            };
            return Some(LogicalForm::spatial(rel.canonical_predicate(), e));
        }
        if let Some(d) = resolved.day_stamp {
            return Some(LogicalForm::on_day(d));
        }
        if let Some(m) = resolved.month {
            return Some(LogicalForm::in_month(m));
        }
        entity.map(LogicalForm::view_of)
    }

    /// Media the annotator would accept as answers to `query`.
    pub fn relevant_set(&self, query: &str, world: &WorldSnapshot, engine: &Engine) -> BTreeSet<String> {
        self.intended_form(query, world, engine)
            .and_then(|f| engine.denotation(&f, world).ok())
            .map(|d| d.media_ids.into_iter().collect())
            .unwrap_or_default()
    }

    pub fn relevant(&self, query: &str, media_id: &str, world: &WorldSnapshot, engine: &Engine) -> bool {
        self.relevant_set(query, world, engine).contains(media_id)
    }

    /// Marks for a shown list: the shown items the annotator accepts.
    pub fn judge(&self, query: &str, shown: &[String], world: &WorldSnapshot, engine: &Engine) -> BTreeSet<String> {
        let rel = self.relevant_set(query, world, engine);
        shown.iter().filter(|m| rel.contains(*m)).cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{eval_spatial, GeometryConfig, Relation};

    #[test]
    fn world_shape() {
        let w = synthetic_world(&SynthWorldConfig::default());
        assert_eq!(w.facts.len(), 24);
        assert_eq!(w.media.len(), 300);
        let again = synthetic_world(&SynthWorldConfig::default());
        assert_eq!(w.media.records(), again.media.records());
    }

    #[test]
    fn rendering() {
        let t = Template {
            kind: TemplateKind::Spatial,
            relation: Some(UserRelation::FrontOf),
            entity: Some("bus_terminal".into()),
            number: None,
            unit: None,
            month: None,
            digits: false,
        };
        assert_eq!(t.render(), "what is there in front of bus terminal?");
        let t = Template {
            kind: TemplateKind::Month,
            month: Some(12),
            relation: None,
            entity: None,
            number: None,
            unit: None,
            digits: false,
        };
        assert_eq!(t.render(), "what did this place look like in December?");
        let t = Template {
            kind: TemplateKind::Ago,
            number: Some(5),
            unit: Some("day".into()),
            relation: None,
            entity: None,
            month: None,
            digits: false,
        };
        assert_eq!(t.render(), "what happened here five days ago?");
    }

    #[test]
    fn front_template_gold_is_north_cone() {
        let e = Engine::default();
        let w = synthetic_world(&SynthWorldConfig::default());
        let data = generate_dataset(&w, &e, &SynthConfig { n: 60, ..Default::default() }).unwrap();
        let cfg = GeometryConfig::default();
        for p in data.iter().filter(|p| p.template.relation == Some(UserRelation::FrontOf)) {
            let anchor = w.facts.resolve(p.template.entity.as_deref().unwrap()).unwrap().position();
            let expect: BTreeSet<String> = w
                .media
                .records()
                .iter()
                .filter(|m| eval_spatial(Relation::FrontOf, anchor, m.position(), &cfg))
                .map(|m| m.id.clone())
                .collect();
            assert_eq!(p.pair.gold_ids, expect);
        }
    }

    #[test]
    fn no_media_exhausts() {
        let w = synthetic_world(&SynthWorldConfig { n_media: 0, ..Default::default() });
        let r = generate_dataset(&w, &Engine::default(), &SynthConfig { n: 5, ..Default::default() });
        assert_eq!(r, Err(SynthError::ExhaustedSampling { wanted: 5, got: 0 }));
    }

    #[test]
    fn annotators_disagree_due_east() {
        let e = Engine::default();
        let x = LatLon::new(49.2567, 7.0430);
        let east = destination(x, 90.0, 100.0);
        let w = WorldSnapshot::from_parts(
            [GeoFact::new("building", "campus_center", x.lat, x.lon).unwrap()],
            [MediaRecord::new("m", MediaKind::Image, east.lat, east.lon, DayStamp::new(20150510).unwrap(), "m.jpg").unwrap()],
            UserContext::new("u", 49.25, 7.04, 90.0, DayStamp::new(20150516).unwrap()).unwrap(),
        );
        let q = "what is there in front of campus center?";
        let geo = scripted_annotator(Convention::Geomagnetic, Cardinal::East);
        let uc = scripted_annotator(Convention::UserCentric, Cardinal::East);
        assert!(!geo.relevant(q, "m", &w, &e));
        assert!(uc.relevant(q, "m", &w, &e));
    }
}
