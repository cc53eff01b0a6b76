mod support;

use std::collections::BTreeSet;

use egomedia_core::context::Frame;
use egomedia_core::engine::Engine;
use egomedia_core::eval::{expected_accuracy, learning_curve, prepare_examples};
use egomedia_core::learner::{
    feedback_update, grad_step, log_marginal, train, train_examples, Example, FeedbackEvent, LearnerConfig, ParamStore,
    TrainingPair,
};
use egomedia_core::logic::{classify, parse_canonical_text, FormShape};
use egomedia_core::params::{Owner, ParamVector};
use egomedia_core::parser::{scores, softmax};
use egomedia_core::synth::{generate_dataset, synthetic_world, SynthConfig, SynthPair, SynthWorldConfig, TemplateKind};
use egomedia_core::world::WorldSnapshot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(n: usize, seed: u64) -> (WorldSnapshot, Engine, Vec<SynthPair>) {
    let world = synthetic_world(&SynthWorldConfig::default());
    let engine = Engine::default();
    let cfg = SynthConfig { n, seed, ..Default::default() };
    let pairs = generate_dataset(&world, &engine, &cfg).unwrap();
    (world, engine, pairs)
}

fn pairs_of(s: &[SynthPair]) -> Vec<TrainingPair> {
    s.iter().map(|p| p.pair.clone()).collect()
}

fn to_shape(form: &egomedia_core::logic::LogicalForm) -> support::Shape {
    match classify(form).unwrap() {
        FormShape::Spatial { rel, entity, kind: None } => support::Shape::Spatial(rel, entity.clone()),
        FormShape::ViewOf(e) => support::Shape::ViewOf(e.clone()),
        FormShape::Day(d) => support::Shape::Day(d.value()),
        FormShape::Month(m) => support::Shape::Month(m),
        FormShape::All => support::Shape::All,
        other => panic!("synthetic corpus produced {other:?}"),
    }
}

#[test]
fn gold_is_the_oracle_answer_of_the_gold_form() {
    let (world, engine, pairs) = setup(200, 3);
    for p in &pairs {
        let w = world.with_context(p.pair.context.clone());
        let form = parse_canonical_text(&p.logical_form).unwrap();
        let want = support::oracle(&to_shape(&form), &w, &engine.geometry);
        assert_eq!(p.pair.gold_ids, want, "{}", p.pair.query_text);
        assert!(!want.is_empty());
    }
}

#[test]
fn every_template_appears() {
    let (_, _, pairs) = setup(100, 1);
    let kinds: BTreeSet<_> = pairs.iter().map(|p| format!("{:?}", p.template.kind)).collect();
    assert_eq!(kinds.len(), 3, "{kinds:?}");
    let rels: BTreeSet<_> = pairs
        .iter()
        .filter(|p| p.template.kind == TemplateKind::Spatial)
        .map(|p| format!("{:?}", p.template.relation))
        .collect();
    assert_eq!(rels.len(), 4, "{rels:?}");
}

#[test]
fn corpus_is_seeded() {
    let (_, _, a) = setup(50, 9);
    let (_, _, b) = setup(50, 9);
    assert_eq!(a, b);
}

/// Central differences of the beam log-marginal, coordinate by coordinate.
pub fn finite_difference(ex: &Example, theta: &ParamVector, key: &str, h: f64) -> f64 {
    let mut up = theta.clone();
    up.set(key, theta.get(key) + h);
    let mut down = theta.clone();
    down.set(key, theta.get(key) - h);
    (log_marginal(ex, &up).unwrap() - log_marginal(ex, &down).unwrap()) / (2.0 * h)
}

#[test]
fn grad_step_matches_finite_differences() {
    let (world, engine, pairs) = setup(40, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for p in pairs.iter().take(15) {
        let ex = p.pair.example(&engine, &world).unwrap();
        let keys: BTreeSet<String> = ex.candidates.iter().flat_map(|c| c.features.keys().map(String::from)).collect();
        assert!(keys.len() <= 50);
        let mut theta = ParamVector::zero(Owner::Shared);
        for k in &keys {
            theta.set(k.clone(), rng.random_range(-1.0..1.0));
        }
        let eta = 0.5;
        let next = grad_step(&p.pair, &engine, &world, &theta, eta).unwrap();
        assert!(!next.skipped);
        for k in &keys {
            let g = (next.theta.get(k) - theta.get(k)) / eta;
            let fd = finite_difference(&ex, &theta, k, 1e-5);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-4, "{k}: analytic {g} numeric {fd}");
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn duplicated_data_with_half_step_follows_the_same_path() {
    let (world, engine, pairs) = setup(30, 4);
    let ex: Vec<Example> = prepare_examples(&pairs_of(&pairs), &engine, &world).unwrap().into_iter().flatten().collect();
    let twice: Vec<Example> = ex.iter().flat_map(|e| [e.clone(), e.clone()]).collect();
    let base = LearnerConfig { batch_size: 0, l2: 0.0, ..Default::default() };
    let half = LearnerConfig { eta: base.eta / 2.0, ..base.clone() };
    for epochs in 1..=4 {
        let a = train_examples(&ex, &LearnerConfig { epochs, ..base.clone() }, ParamVector::zero(Owner::Shared)).0;
        let b = train_examples(&twice, &LearnerConfig { epochs, ..half.clone() }, ParamVector::zero(Owner::Shared)).0;
        let keys: BTreeSet<&str> = a.iter().chain(b.iter()).map(|(k, _)| k).collect();
        for k in keys {
            assert!((a.get(k) - b.get(k)).abs() < 1e-9, "epoch {epochs} {k}: {} vs {}", a.get(k), b.get(k));
        }
    }
}

#[test]
fn training_is_seeded_and_monotone() {
    let (world, engine, pairs) = setup(80, 6);
    let cfg = LearnerConfig::default();
    let (a, report) = train(&pairs_of(&pairs), &engine, &world, &cfg).unwrap();
    let (b, _) = train(&pairs_of(&pairs), &engine, &world, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(report.epochs.len(), 10);
    for e in &report.epochs {
        assert!(e.objective >= e.objective_start, "{e:?}");
    }
    for w in report.epochs.windows(2) {
        assert!(w[1].objective >= w[0].objective);
    }
    assert_eq!(a.config_hash, cfg.hash());
}

#[test]
fn untrained_curve_point_is_uniform_choice() {
    let (world, engine, pairs) = setup(30, 8);
    let set = pairs_of(&pairs);
    let curve = learning_curve(&set, &set, &[0], &engine, &world, &LearnerConfig::default()).unwrap();
    let ex = prepare_examples(&set, &engine, &world).unwrap();
    let uniform: f64 = ex
        .iter()
        .map(|e| e.as_ref().map_or(0.0, |e| e.consistent.iter().filter(|&&c| c).count() as f64 / e.candidates.len() as f64))
        .sum::<f64>()
        / ex.len() as f64;
    assert!((curve[0].accuracy - uniform).abs() < 1e-12);
    assert!((expected_accuracy(&ex, &ParamVector::zero(Owner::Shared)) - uniform).abs() < 1e-12);
}

fn event(user: &str, p: &TrainingPair, shown: Vec<String>, marked: BTreeSet<String>) -> FeedbackEvent {
    FeedbackEvent {
        user_id: user.into(),
        query_text: p.query_text.clone(),
        context: p.context.clone(),
        frame: Frame::Geomagnetic,
        shown,
        marked_relevant: marked,
        timestamp: 1,
    }
}

#[test]
fn forks_do_not_see_each_other() {
    let (world, engine, pairs) = setup(20, 2);
    let cfg = LearnerConfig::default();
    let mut store = ParamStore::new(ParamVector::zero(Owner::Shared));
    store.fork_params("ann").unwrap();
    store.fork_params("bob").unwrap();
    let p = &pairs[0].pair;
    let shown: Vec<String> = p.gold_ids.iter().cloned().collect();
    let before_shared = store.shared();
    let before_bob = store.fork("bob").unwrap();
    store.feedback(&event("ann", p, shown.clone(), p.gold_ids.clone()), &engine, &world, &cfg).unwrap();
    assert_eq!(*store.shared(), *before_shared);
    assert_eq!(*store.fork("bob").unwrap(), *before_bob);
    assert_ne!(*store.fork("ann").unwrap(), *before_bob);
}

#[test]
fn opposite_feedback_splits_the_argmax() {
    let (world, engine, pairs) = setup(20, 2);
    let cfg = LearnerConfig { eta: 1.0, ..Default::default() };
    let p = pairs.iter().find(|p| p.template.kind == TemplateKind::Spatial).unwrap();
    let shown: Vec<String> = p.pair.gold_ids.iter().cloned().collect();
    let zero = ParamVector::zero(Owner::Shared);
    let yes = feedback_update(&event("a", &p.pair, shown.clone(), p.pair.gold_ids.clone()), &engine, &world, &zero, &cfg).unwrap();
    let no = feedback_update(&event("b", &p.pair, shown, BTreeSet::new()), &engine, &world, &zero, &cfg).unwrap();
    let w = world.with_context(p.pair.context.clone());
    let top = |th: &ParamVector| engine.answer(&p.pair.query_text, &w, Frame::Geomagnetic, th, 1).unwrap().logical_form().to_string();
    assert_ne!(top(&yes), top(&no));
    assert_eq!(yes.version, 1);
    assert_eq!(no.version, 1);
}

#[test]
fn confirming_the_argmax_does_not_lower_it() {
    let (world, engine, pairs) = setup(20, 2);
    let cfg = LearnerConfig::default();
    for p in pairs.iter().take(10) {
        let w = world.with_context(p.pair.context.clone());
        let mut theta = ParamVector::zero(Owner::Shared);
        theta.set("count:nodes", 0.3);
        let a = engine.answer(&p.pair.query_text, &w, Frame::Geomagnetic, &theta, 1).unwrap();
        let shown = a.denotation.media_ids.clone();
        if shown.is_empty() {
            continue;
        }
        let marked: BTreeSet<String> = shown.iter().cloned().collect();
        let next = feedback_update(&event("u", &p.pair, shown, marked), &engine, &world, &theta, &cfg).unwrap();
        let ex = egomedia_core::learner::prepare_example(
            &engine,
            &w,
            &p.pair.query_text,
            Frame::Geomagnetic,
            &a.denotation.media_ids.iter().cloned().collect(),
        )
        .unwrap();
        let i = ex.candidates.iter().position(|c| c.text == a.logical_form()).unwrap();
        assert!(scores(&ex.candidates, &next)[i] >= scores(&ex.candidates, &theta)[i] - 1e-12);
        assert!(softmax(&scores(&ex.candidates, &next))[i] >= softmax(&scores(&ex.candidates, &theta))[i] - 1e-12);
    }
}

#[test]
fn user_centric_feedback_is_learned() {
    use egomedia_core::eval::{simulate_personalization, PersonalizationConfig};
    let world = synthetic_world(&SynthWorldConfig::default());
    let out =
        simulate_personalization(&world, &Engine::default(), &ParamVector::zero(Owner::Shared), &PersonalizationConfig::default())
            .unwrap();
    // second convention is user-centric
    assert!(out.agreement_before[1] <= 0.5, "{:?}", out.agreement_before);
    assert!(out.agreement_after[1] >= 0.7, "{:?}", out.agreement_after);
    assert!(out.models.iter().all(|m| m.version == 100));
}
