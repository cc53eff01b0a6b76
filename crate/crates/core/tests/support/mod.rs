//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use egomedia_core::geo::LatLon;
use egomedia_core::logic::{EntityRef, GeometryConfig, LogicalForm, Relation};
use egomedia_core::world::{DayStamp, GeoFact, MediaKind, MediaRecord, UserContext, WorldSnapshot};
use rand::{Rng, RngCore};

const R: f64 = 6_371_000.0;

fn unit(p: LatLon) -> [f64; 3] {
    let (phi, lam) = (p.lat.to_radians(), p.lon.to_radians());
    [phi.cos() * lam.cos(), phi.cos() * lam.sin(), phi.sin()]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Great-circle distance from the angle between position vectors.
pub fn distance(a: LatLon, b: LatLon) -> f64 {
    let (u, v) = (unit(a), unit(b));
    let c = cross(u, v);
    R * dot(c, c).sqrt().atan2(dot(u, v))
}

/// Compass bearing of `b` seen from `a`: the chord projected on the local
/// east and north axes.
pub fn bearing(a: LatLon, b: LatLon) -> f64 {
    let (phi, lam) = (a.lat.to_radians(), a.lon.to_radians());
    let north = [-phi.sin() * lam.cos(), -phi.sin() * lam.sin(), phi.cos()];
    let east = [-lam.sin(), lam.cos(), 0.0];
    let (u, v) = (unit(a), unit(b));
    let d = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
    dot(d, east).atan2(dot(d, north)).to_degrees().rem_euclid(360.0)
}

pub fn related(rel: Relation, anchor: LatLon, m: LatLon, cfg: &GeometryConfig) -> bool {
    let d = distance(anchor, m);
    if d == 0.0 {
        return false;
    }
    let b = bearing(anchor, m);
    match rel {
        Relation::Near => d <= cfg.near_radius_m,
        _ if d > cfg.max_radius_m => false,
        Relation::FrontOf => b <= 45.0 || b >= 315.0,
        Relation::Behind => (135.0..=225.0).contains(&b),
        Relation::RightOf => b > 45.0 && b < 135.0,
        Relation::LeftOf => b > 225.0 && b < 315.0,
    }
}

/// Brute-force answer set for the query shapes the engine produces.
pub fn oracle(form: &Shape, w: &WorldSnapshot, cfg: &GeometryConfig) -> BTreeSet<String> {
    let here = LatLon::new(w.context.lat, w.context.lon);
    let facts = w.facts.facts();
    let anchor_of = |e: &EntityRef| match e {
        EntityRef::Here => here,
        EntityRef::Named(n) => {
            let f = facts.iter().find(|f| &f.name == n).expect("known fact");
            LatLon::new(f.lat, f.lon)
        }
    };
    let mut out = BTreeSet::new();
    for m in w.media.records() {
        let p = LatLon::new(m.lat, m.lon);
        let keep = match form {
            Shape::Spatial(rel, e) => related(*rel, anchor_of(e), p, cfg),
            Shape::ViewOf(EntityRef::Here) => distance(here, p) <= cfg.here_radius_m,
            Shape::ViewOf(EntityRef::Named(n)) => {
                let mut best = (usize::MAX, f64::INFINITY);
                for (i, f) in facts.iter().enumerate() {
                    let d = distance(LatLon::new(f.lat, f.lon), p);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
                best.0 != usize::MAX && &facts[best.0].name == n && best.1 <= cfg.max_radius_m
            }
            Shape::Day(d) => m.timestamp.value() == *d,
            Shape::Month(mo) => m.timestamp.value() / 100 % 100 == *mo as u32 && distance(here, p) <= cfg.here_radius_m,
            Shape::All => true,
        };
        if keep {
            out.insert(m.id.clone());
        }
    }
    out
}

#[derive(Debug, Clone)]
pub enum Shape {
    Spatial(Relation, EntityRef),
    ViewOf(EntityRef),
    Day(u32),
    Month(u8),
    All,
}

impl Shape {
    pub fn form(&self) -> LogicalForm {
        match self {
            Shape::Spatial(r, e) => LogicalForm::spatial(*r, e.clone()),
            Shape::ViewOf(e) => LogicalForm::view_of(e.clone()),
            Shape::Day(d) => LogicalForm::on_day(DayStamp::new(*d).unwrap()),
            Shape::Month(m) => LogicalForm::in_month(*m),
            Shape::All => LogicalForm::view_all(),
        }
    }
}

const DAYS: [u32; 6] = [20150110, 20150301, 20150511, 20150512, 20150630, 20151224];

/// A world of up to 30 facts and 100 media inside a 2 km box.
pub fn random_world(rng: &mut impl RngCore) -> WorldSnapshot {
    let (lat0, lon0) = (rng.random_range(-55.0..55.0), rng.random_range(-170.0..170.0));
    // 2 km expressed in degrees at this latitude
    let dlat = 2000.0 / 111_195.0;
    let dlon = dlat / f64::cos(f64::to_radians(lat0));
    let pt = |rng: &mut dyn RngCore| (lat0 + rng.random::<f64>() * dlat, lon0 + rng.random::<f64>() * dlon);
    let nf = rng.random_range(1..=30);
    let facts: Vec<GeoFact> = (0..nf)
        .map(|i| {
            let (la, lo) = pt(rng);
            GeoFact::new("amenity", &format!("place_{i}"), la, lo).unwrap()
        })
        .collect();
    let nm = rng.random_range(0..=100);
    let media: Vec<MediaRecord> = (0..nm)
        .map(|i| {
            // some media sit on a fact to exercise the coincident case
            let (la, lo) = if rng.random_bool(0.05) {
                let f = &facts[rng.random_range(0..facts.len())];
                (f.lat, f.lon)
            } else {
                pt(rng)
            };
            let ts = DAYS[rng.random_range(0..DAYS.len())];
            MediaRecord::new(format!("m{i}"), MediaKind::Image, la, lo, DayStamp::new(ts).unwrap(), format!("m{i}.jpg")).unwrap()
        })
        .collect();
    let (hla, hlo) = pt(rng);
    let ctx = UserContext::new("u", hla, hlo, rng.random_range(0.0..360.0), DayStamp::new(20150516).unwrap()).unwrap();
    WorldSnapshot::from_parts(facts, media, ctx)
}

pub fn random_shape(rng: &mut impl RngCore, w: &WorldSnapshot) -> Shape {
    let facts = w.facts.facts();
    let entity = |rng: &mut dyn RngCore| {
        if rng.random_bool(0.2) {
            EntityRef::Here
        } else {
            EntityRef::Named(facts[rng.random_range(0..facts.len())].name.clone())
        }
    };
    match rng.random_range(0..10) {
        0..=5 => Shape::Spatial(Relation::ALL[rng.random_range(0..Relation::ALL.len())], entity(rng)),
        6 => Shape::ViewOf(entity(rng)),
        7 => Shape::Day(DAYS[rng.random_range(0..DAYS.len())]),
        8 => Shape::Month(rng.random_range(1..=12)),
        _ => Shape::All,
    }
}
