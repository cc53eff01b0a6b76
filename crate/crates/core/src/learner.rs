//! Parameter estimation from question/retrieval pairs and from relevance
//! feedback, with per-user parameter forks.
//!
//! Training maximizes `Σ log Σ_{z: ⟦z⟧ = y} p(z|x, θ) − (l2/2)‖θ‖²` by
//! stochastic gradient ascent, marginalizing over the candidate beam.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::Frame;
use crate::engine::{Engine, EngineError};
use crate::params::{config_hash, FeatureVector, Owner, ParamVector};
use crate::parser::{ranking, scores, softmax, Candidate, ScoredForm};
use crate::world::{UserContext, WorldSnapshot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("user {0:?} already has a parameter fork")]
    AlreadyForked(String),
    #[error("invalid feedback: {0}")]
    InvalidEvent(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query_text: String,
    pub context: UserContext,
    pub gold_ids: BTreeSet<String>,
    #[serde(default)]
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub user_id: String,
    pub query_text: String,
    pub context: UserContext,
    #[serde(default)]
    pub frame: Frame,
    pub shown: Vec<String>,
    pub marked_relevant: BTreeSet<String>,
    /// Seconds since the epoch.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub eta: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Pairs per update; 0 means the whole dataset.
    pub batch_size: usize,
    pub max_halvings: u32,
    /// Feedback with nothing marked pushes the shown parse down.
    pub demote_on_empty: bool,
    /// Feedback whose marked set no candidate reproduces pushes the shown parse down.
    pub demote_on_inconsistent: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            l2: 1e-4,
            epochs: 10,
            seed: 0,
            batch_size: 1,
            max_halvings: 10,
            demote_on_empty: true,
            demote_on_inconsistent: true,
        }
    }
}

impl LearnerConfig {
    pub fn hash(&self) -> String {
        config_hash(&serde_json::to_string(self).expect("config serializes"))
    }
}

/// A query's candidates and which of them reproduce the gold retrieval.
#[derive(Debug, Clone)]
pub struct Example {
    pub candidates: Vec<Candidate>,
    pub consistent: Vec<bool>,
}

impl Example {
    pub fn has_consistent(&self) -> bool {
        self.consistent.iter().any(|&c| c)
    }
}

/// Interprets every candidate for `query_text` and compares it with `gold`.
pub fn prepare_example(
    engine: &Engine,
    world: &WorldSnapshot,
    query_text: &str,
    frame: Frame,
    gold: &BTreeSet<String>,
) -> Result<Example, EngineError> {
    let (_, prepared) = engine.prepare(query_text, world, frame)?;
    let mut consistent = Vec::with_capacity(prepared.candidates.len());
    for c in &prepared.candidates {
        let d = engine.denotation(&c.form, world)?;
        consistent.push(d.media_ids.len() == gold.len() && d.media_ids.iter().all(|id| gold.contains(id)));
    }
    Ok(Example {
        candidates: prepared.candidates,
        consistent,
    })
}

impl TrainingPair {
    pub fn example(&self, engine: &Engine, world: &WorldSnapshot) -> Result<Example, EngineError> {
        prepare_example(engine, &world.with_context(self.context.clone()), &self.query_text, self.frame, &self.gold_ids)
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_{consistent} p(z|x, θ)`, or `None` when nothing is consistent.
pub fn log_marginal(ex: &Example, theta: &ParamVector) -> Option<f64> {
    if !ex.has_consistent() {
        return None;
    }
    let s = scores(&ex.candidates, theta);
    let all = log_sum_exp(s.iter().copied());
    let cons = log_sum_exp(s.iter().zip(&ex.consistent).filter(|(_, &c)| c).map(|(x, _)| *x));
    Some(cons - all)
}

/// `E_{p(z|x,θ,consistent)}[φ] − E_{p(z|x,θ)}[φ]`, or `None` when nothing is consistent.
pub fn gradient(ex: &Example, theta: &ParamVector) -> Option<FeatureVector> {
    if !ex.has_consistent() {
        return None;
    }
    let s = scores(&ex.candidates, theta);
    let p = softmax(&s);
    let cons_scores: Vec<f64> = s.iter().zip(&ex.consistent).filter(|(_, &c)| c).map(|(x, _)| *x).collect();
    let q = softmax(&cons_scores);
    let mut g = FeatureVector::new();
    for (c, qi) in ex.candidates.iter().zip(&ex.consistent).filter(|(_, &c)| c).map(|(c, _)| c).zip(q) {
        g.add_scaled(&c.features, qi);
    }
    for (c, pi) in ex.candidates.iter().zip(p) {
        g.add_scaled(&c.features, -pi);
    }
    Some(g)
}

/// `−(φ(argmax) − E_p[φ])`: the ascent direction that lowers the top parse.
pub fn demotion(ex: &Example, theta: &ParamVector) -> FeatureVector {
    let s = scores(&ex.candidates, theta);
    let p = softmax(&s);
    let top = ranking(&ex.candidates, &s)[0];
    let mut g = FeatureVector::new();
    for (c, pi) in ex.candidates.iter().zip(p) {
        g.add_scaled(&c.features, pi);
    }
    g.add_scaled(&ex.candidates[top].features, -1.0);
    g
}

/// Regularized objective over the examples that have a consistent form.
pub fn objective<'a>(examples: impl IntoIterator<Item = &'a Example>, theta: &ParamVector, l2: f64) -> f64 {
    let data: f64 = examples.into_iter().filter_map(|e| log_marginal(e, theta)).sum();
    data - 0.5 * l2 * theta.squared_norm()
}

/// Beam members whose denotation equals the gold set.
pub fn consistent_forms(
    pair: &TrainingPair,
    engine: &Engine,
    world: &WorldSnapshot,
    theta: &ParamVector,
) -> Result<Vec<ScoredForm>, LearnerError> {
    let ex = pair.example(engine, world)?;
    let s = scores(&ex.candidates, theta);
    let p = softmax(&s);
    Ok(ranking(&ex.candidates, &s)
        .into_iter()
        .filter(|&i| ex.consistent[i])
        .map(|i| ScoredForm {
            form: ex.candidates[i].form.clone(),
            text: ex.candidates[i].text.clone(),
            score: s[i],
            prob: p[i],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub theta: ParamVector,
    /// No candidate reproduced the gold set; θ is unchanged.
    pub skipped: bool,
}

/// One unregularized ascent step on a single pair.
pub fn grad_step(
    pair: &TrainingPair,
    engine: &Engine,
    world: &WorldSnapshot,
    theta: &ParamVector,
    eta: f64,
) -> Result<StepOutcome, LearnerError> {
    let ex = pair.example(engine, world)?;
    let mut next = theta.clone();
    match gradient(&ex, theta) {
        Some(g) => {
            next.add_scaled(&g, eta);
            Ok(StepOutcome { theta: next, skipped: false })
        }
        None => Ok(StepOutcome { theta: next, skipped: true }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub eta: f64,
    pub halvings: u32,
    /// Even the smallest step lowered the objective, so θ was left as it was.
    pub reverted: bool,
    pub objective_start: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pairs: usize,
    /// Pairs whose gold no candidate reproduces.
    pub skipped_pairs: usize,
    /// Pairs the parser could not interpret at all.
    pub unparsed_pairs: usize,
    pub epochs: Vec<EpochReport>,
}

fn run_epoch(active: &[&Example], order: &[usize], theta: &ParamVector, eta: f64, cfg: &LearnerConfig) -> ParamVector {
    let mut th = theta.clone();
    let n = active.len() as f64;
    let bs = if cfg.batch_size == 0 { order.len().max(1) } else { cfg.batch_size };
    for chunk in order.chunks(bs) {
        let mut g = FeatureVector::new();
        for &i in chunk {
            if let Some(gi) = gradient(active[i], &th) {
                g.add_scaled(&gi, 1.0);
            }
        }
        if cfg.l2 != 0.0 {
            th.scale(1.0 - eta * cfg.l2 * chunk.len() as f64 / n);
        }
        th.add_scaled(&g, eta);
    }
    th
}

/// Step-halving gradient ascent over prepared examples, starting from `init`.
pub fn train_examples(examples: &[Example], cfg: &LearnerConfig, init: ParamVector) -> (ParamVector, TrainReport) {
    let active: Vec<&Example> = examples.iter().filter(|e| e.has_consistent()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut theta = init;
    let mut eta = cfg.eta;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.shuffle(&mut rng);
        let j0 = objective(active.iter().copied(), &theta, cfg.l2);
        let mut halvings = 0;
        let mut reverted = false;
        let mut j1;
        loop {
            let cand = run_epoch(&active, &order, &theta, eta, cfg);
            j1 = objective(active.iter().copied(), &cand, cfg.l2);
            if j1 >= j0 {
                theta = cand;
                break;
            }
            if halvings == cfg.max_halvings {
                reverted = true;
                j1 = j0;
                break;
            }
            eta /= 2.0;
            halvings += 1;
        }
        log::debug!("epoch {epoch}: objective {j0:.6} -> {j1:.6}, eta {eta}, halvings {halvings}");
        epochs.push(EpochReport {
            epoch,
            eta,
            halvings,
            reverted,
            objective_start: j0,
            objective: j1,
        });
    }
    theta.version += 1;
    theta.config_hash = cfg.hash();
    let report = TrainReport {
        pairs: examples.len(),
        skipped_pairs: examples.len() - active.len(),
        unparsed_pairs: 0,
        epochs,
    };
    (theta, report)
}

/// Trains shared parameters from scratch.
pub fn train(
    dataset: &[TrainingPair],
    engine: &Engine,
    world: &WorldSnapshot,
    cfg: &LearnerConfig,
) -> Result<(ParamVector, TrainReport), LearnerError> {
    train_from(dataset, engine, world, cfg, ParamVector::zero(Owner::Shared))
}

pub fn train_from(
    dataset: &[TrainingPair],
    engine: &Engine,
    world: &WorldSnapshot,
    cfg: &LearnerConfig,
    init: ParamVector,
) -> Result<(ParamVector, TrainReport), LearnerError> {
    if dataset.is_empty() {
        return Err(LearnerError::EmptyDataset);
    }
    let mut examples = Vec::with_capacity(dataset.len());
    let mut unparsed = 0;
    for p in dataset {
        match p.example(engine, world) {
            Ok(e) => examples.push(e),
            Err(EngineError::Parse(_)) | Err(EngineError::Context(_)) => unparsed += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let (theta, mut report) = train_examples(&examples, cfg, init);
    report.pairs = dataset.len();
    report.unparsed_pairs = unparsed;
    Ok((theta, report))
}

/// One online update from a user's relevance marks.
pub fn feedback_update(
    event: &FeedbackEvent,
    engine: &Engine,
    world: &WorldSnapshot,
    theta: &ParamVector,
    cfg: &LearnerConfig,
) -> Result<ParamVector, LearnerError> {
    let shown: BTreeSet<&str> = event.shown.iter().map(String::as_str).collect();
    if let Some(stray) = event.marked_relevant.iter().find(|m| !shown.contains(m.as_str())) {
        return Err(LearnerError::InvalidEvent(format!("{stray:?} was not shown")));
    }
    let w = world.with_context(event.context.clone());
    let ex = prepare_example(engine, &w, &event.query_text, event.frame, &event.marked_relevant)?;
    let mut next = theta.clone();
    let step = if event.marked_relevant.is_empty() {
        cfg.demote_on_empty.then(|| demotion(&ex, theta))
    } else {
        match gradient(&ex, theta) {
            Some(g) => Some(g),
            None => cfg.demote_on_inconsistent.then(|| demotion(&ex, theta)),
        }
    };
    if let Some(g) = step {
        next.add_scaled(&g, cfg.eta);
    }
    next.version += 1;
    Ok(next)
}

/// Shared parameters plus one independent fork per personalized user.
/// Values are immutable snapshots; updates swap in a new `Arc`.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    shared: Arc<ParamVector>,
    forks: HashMap<String, Arc<ParamVector>>,
}

impl ParamStore {
    pub fn new(shared: ParamVector) -> Self {
        Self {
            shared: Arc::new(shared),
            forks: HashMap::new(),
        }
    }

    pub fn shared(&self) -> Arc<ParamVector> {
        Arc::clone(&self.shared)
    }

    pub fn set_shared(&mut self, mut theta: ParamVector) {
        theta.owner = Owner::Shared;
        self.shared = Arc::new(theta);
    }

    pub fn fork(&self, user: &str) -> Option<Arc<ParamVector>> {
        self.forks.get(user).cloned()
    }

    /// The user's fork, or the shared parameters when there is none.
    pub fn params_for(&self, user: &str) -> Arc<ParamVector> {
        self.fork(user).unwrap_or_else(|| self.shared())
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.forks.keys().map(String::as_str)
    }

    /// Copies the shared parameters into a new fork owned by `user`.
    pub fn fork_params(&mut self, user: &str) -> Result<Arc<ParamVector>, LearnerError> {
        if self.forks.contains_key(user) {
            return Err(LearnerError::AlreadyForked(user.to_string()));
        }
        let f = Arc::new(self.shared.fork_as(Owner::User(user.to_string())));
        self.forks.insert(user.to_string(), Arc::clone(&f));
        Ok(f)
    }

    /// Installs a fork read back from storage.
    pub fn insert_fork(&mut self, user: &str, mut theta: ParamVector) {
        theta.owner = Owner::User(user.to_string());
        self.forks.insert(user.to_string(), Arc::new(theta));
    }

    /// Applies feedback to the event user's fork and returns its new version.
    pub fn feedback(
        &mut self,
        event: &FeedbackEvent,
        engine: &Engine,
        world: &WorldSnapshot,
        cfg: &LearnerConfig,
    ) -> Result<u64, LearnerError> {
        let current = self
            .forks
            .get(&event.user_id)
            .ok_or_else(|| LearnerError::UnknownUser(event.user_id.clone()))?;
        let next = feedback_update(event, engine, world, current, cfg)?;
        let v = next.version;
        self.forks.insert(event.user_id.clone(), Arc::new(next));
        Ok(v)
    }
}
