mod support;

use egomedia_core::geo::{destination, LatLon};
use egomedia_core::logic::{eval_spatial, evaluate, GeometryConfig, Relation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const CARDINAL: [Relation; 4] = [Relation::FrontOf, Relation::RightOf, Relation::Behind, Relation::LeftOf];

#[test]
fn evaluate_matches_vector_oracle() {
    let cfg = GeometryConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..200 {
        let w = support::random_world(&mut rng);
        let shape = support::random_shape(&mut rng, &w);
        let got = evaluate(&shape.form(), &w, &cfg).unwrap();
        let got: std::collections::BTreeSet<String> = got.media_ids.into_iter().collect();
        assert_eq!(got, support::oracle(&shape, &w, &cfg), "instance {i}: {shape:?}");
    }
}

#[test]
fn oracle_geometry_agrees_on_known_points() {
    let a = LatLon::new(49.256, 7.043);
    let b = LatLon::new(49.257, 7.043);
    assert!((support::distance(a, b) - 111.19).abs() < 0.01);
    assert!(support::bearing(a, b) < 1e-9 || support::bearing(a, b) > 360.0 - 1e-9);
    let e = destination(a, 90.0, 200.0);
    assert!((support::bearing(a, e) - 90.0).abs() < 1e-6);
}

fn away_from_boundaries(b: f64) -> bool {
    [45.0, 135.0, 225.0, 315.0].iter().all(|x| (b - x).abs() > 1e-6)
}

proptest! {
    #[test]
    fn one_cardinal_cone_holds(
        lat in -60.0..60.0f64,
        lon in -179.0..179.0f64,
        brg in 0.0..360.0f64,
        dist in 0.5..499.0f64,
    ) {
        prop_assume!(away_from_boundaries(brg));
        let a = LatLon::new(lat, lon);
        let c = destination(a, brg, dist);
        let cfg = GeometryConfig::default();
        let n = CARDINAL.iter().filter(|&&r| eval_spatial(r, a, c, &cfg)).count();
        prop_assert_eq!(n, 1);
    }

    #[test]
    fn opposite_cones(
        lat in -60.0..60.0f64,
        lon in -179.0..179.0f64,
        brg in 0.0..360.0f64,
        dist in 1.0..490.0f64,
    ) {
        // bearings within 0.5° of a cone edge may land either side after the turn-around
        prop_assume!([45.0f64, 135.0, 225.0, 315.0].iter().all(|x| (brg - x).abs() > 0.5));
        let a = LatLon::new(lat, lon);
        let c = destination(a, brg, dist);
        let cfg = GeometryConfig::default();
        if eval_spatial(Relation::FrontOf, a, c, &cfg) {
            prop_assert!(eval_spatial(Relation::Behind, c, a, &cfg));
        }
        if eval_spatial(Relation::RightOf, a, c, &cfg) {
            prop_assert!(eval_spatial(Relation::LeftOf, c, a, &cfg));
        }
    }

    #[test]
    fn evaluate_is_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = support::random_world(&mut rng);
        let shape = support::random_shape(&mut rng, &w);
        let cfg = GeometryConfig::default();
        prop_assert_eq!(evaluate(&shape.form(), &w, &cfg).unwrap(), evaluate(&shape.form(), &w, &cfg).unwrap());
    }
}

#[test]
fn coincident_point_is_unrelated() {
    let a = LatLon::new(49.2567, 7.043);
    let cfg = GeometryConfig::default();
    for r in Relation::ALL {
        assert!(!eval_spatial(r, a, a, &cfg));
    }
}
