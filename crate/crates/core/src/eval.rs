//! Retrieval metrics, learning curves and cross-user evaluation.
//!
//! A retrieval is one query's non-empty result list. Precision divides the
//! relevant retrievals by the retrievals made; recall divides them by the
//! number of queries asked. Standard item-level recall is reported
//! separately when gold sets are available.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{Cardinal, Frame};
use crate::engine::{Engine, EngineError};
use crate::learner::{feedback_update, train_examples, Example, FeedbackEvent, LearnerConfig, LearnerError, TrainingPair};
use crate::params::{Owner, ParamVector};
use crate::parser::scores;
use crate::synth::{generate_dataset, Convention, ScriptedAnnotator, SynthConfig, SynthError, TemplateKind};
use crate::world::WorldSnapshot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{labels} relevance labels for {queries} queries")]
    LabelMismatch { labels: usize, queries: usize },
    #[error("{gold} gold sets for {queries} queries")]
    GoldMismatch { gold: usize, queries: usize },
    #[error("training-set sizes must ascend")]
    UnsortedSizes,
    #[error("need at least two users")]
    TooFewUsers,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Harmonic mean; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Rates are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_queries: usize,
    pub n_retrievals: usize,
    pub n_relevant: usize,
    /// Retrieved gold items over all gold items.
    pub standard_recall: Option<f64>,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |x: f64| format!("{:.2}", 100.0 * x);
        write!(
            f,
            "queries {} retrievals {} relevant {} precision {} recall {} f1 {}",
            self.n_queries,
            self.n_retrievals,
            self.n_relevant,
            pct(self.precision),
            pct(self.recall),
            pct(self.f1)
        )?;
        if let Some(a) = self.accuracy {
            write!(f, " accuracy {}", pct(a))?;
        }
        if let Some(r) = self.standard_recall {
            write!(f, " item-recall {}", pct(r))?;
        }
        Ok(())
    }
}

/// Scores one run.
///
/// `relevance[i]` judges query `i`'s retrieval; it is ignored when that
/// query retrieved nothing. With `gold`, accuracy is the share of queries
/// whose retrieval equals the gold set exactly.
pub fn score_run(
    predictions: &[Vec<String>],
    relevance: &[bool],
    n_queries: usize,
    gold: Option<&[BTreeSet<String>]>,
) -> Result<EvalReport, EvalError> {
    if relevance.len() != predictions.len() {
        return Err(EvalError::LabelMismatch {
            labels: relevance.len(),
            queries: predictions.len(),
        });
    }
    let n_retrievals = predictions.iter().filter(|p| !p.is_empty()).count();
    let n_relevant = predictions.iter().zip(relevance).filter(|(p, &r)| r && !p.is_empty()).count();
    let precision = if n_retrievals == 0 { 0.0 } else { n_relevant as f64 / n_retrievals as f64 };
    let recall = if n_queries == 0 { 0.0 } else { n_relevant as f64 / n_queries as f64 };
    let (accuracy, standard_recall) = match gold {
        None => (None, None),
        Some(g) => {
            if g.len() != predictions.len() {
                return Err(EvalError::GoldMismatch {
                    gold: g.len(),
                    queries: predictions.len(),
                });
            }
            let exact = predictions
                .iter()
                .zip(g)
                .filter(|(p, g)| p.len() == g.len() && p.iter().all(|id| g.contains(id)))
                .count();
            let hit: usize = predictions.iter().zip(g).map(|(p, g)| p.iter().filter(|id| g.contains(*id)).count()).sum();
            let total: usize = g.iter().map(BTreeSet::len).sum();
            let acc = if predictions.is_empty() { 0.0 } else { exact as f64 / predictions.len() as f64 };
            (Some(acc), Some(if total == 0 { 0.0 } else { hit as f64 / total as f64 }))
        }
    };
    Ok(EvalReport {
        accuracy,
        precision,
        recall,
        f1: f1(precision, recall),
        n_queries,
        n_retrievals,
        n_relevant,
        standard_recall,
    })
}

/// Expected exact-match accuracy of the argmax parse when ties among the
/// top-scoring candidates are broken uniformly at random. Queries the
/// parser cannot handle (`None`) count as misses.
pub fn expected_accuracy(examples: &[Option<Example>], theta: &ParamVector) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let credit: f64 = examples
        .iter()
        .flatten()
        .map(|ex| {
            let s = scores(&ex.candidates, theta);
            let best = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-12 * best.abs().max(1.0);
            let tied: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= best - tol).collect();
            tied.iter().filter(|&&i| ex.consistent[i]).count() as f64 / tied.len() as f64
        })
        .sum();
    credit / examples.len() as f64
}

/// Prepares evaluation examples; unparseable queries become `None`.
pub fn prepare_examples(pairs: &[TrainingPair], engine: &Engine, world: &WorldSnapshot) -> Result<Vec<Option<Example>>, EvalError> {
    pairs
        .iter()
        .map(|p| match p.example(engine, world) {
            Ok(e) => Ok(Some(e)),
            Err(EngineError::Parse(_)) | Err(EngineError::Context(_)) => Ok(None),
            Err(e) => Err(e.into()),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub accuracy: f64,
}

/// Trains a fresh model on the first `size` pairs of `pool` for each size
/// and measures accuracy on `eval_set`. Size 0 is the untrained model.
pub fn learning_curve(
    pool: &[TrainingPair],
    eval_set: &[TrainingPair],
    sizes: &[usize],
    engine: &Engine,
    world: &WorldSnapshot,
    cfg: &LearnerConfig,
) -> Result<Vec<CurvePoint>, EvalError> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedSizes);
    }
    let held_out = prepare_examples(eval_set, engine, world)?;
    let train_pool: Vec<Example> = prepare_examples(pool, engine, world)?.into_iter().flatten().collect();
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let theta = if size == 0 {
            ParamVector::zero(Owner::Shared)
        } else {
            let n = size.min(train_pool.len());
            train_examples(&train_pool[..n], cfg, ParamVector::zero(Owner::Shared)).0
        };
        out.push(CurvePoint {
            size,
            accuracy: expected_accuracy(&held_out, &theta),
        });
    }
    Ok(out)
}

/// A probe query asked under a fixed context.
pub type Probe = TrainingPair;

/// Per-query retrievals of one model over the probes.
pub fn retrievals(
    theta: &ParamVector,
    probes: &[Probe],
    engine: &Engine,
    world: &WorldSnapshot,
) -> Result<Vec<Vec<String>>, EvalError> {
    probes
        .iter()
        .map(|p| {
            let w = world.with_context(p.context.clone());
            match engine.answer(&p.query_text, &w, p.frame, theta, 1) {
                Ok(a) => Ok(a.denotation.media_ids),
                Err(EngineError::Parse(_)) | Err(EngineError::Context(_)) => Ok(Vec::new()),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

/// A retrieval counts as relevant when at least half its items are.
pub fn judge_retrievals(
    annotator: &ScriptedAnnotator,
    probes: &[Probe],
    predicted: &[Vec<String>],
    engine: &Engine,
    world: &WorldSnapshot,
) -> Vec<bool> {
    probes
        .iter()
        .zip(predicted)
        .map(|(p, shown)| {
            if shown.is_empty() {
                return false;
            }
            let w = world.with_context(p.context.clone());
            let marked = annotator.judge(&p.query_text, shown, &w, engine);
            2 * marked.len() >= shown.len()
        })
        .collect()
}

/// Entry `(i, j)` scores model `i` under annotator `j`.
pub fn cross_user_matrix(
    models: &[ParamVector],
    annotators: &[ScriptedAnnotator],
    probes: &[Probe],
    engine: &Engine,
    world: &WorldSnapshot,
) -> Result<Vec<Vec<EvalReport>>, EvalError> {
    if models.len() < 2 || annotators.len() < 2 {
        return Err(EvalError::TooFewUsers);
    }
    let mut out = Vec::with_capacity(models.len());
    for m in models {
        let predicted = retrievals(m, probes, engine, world)?;
        let mut row = Vec::with_capacity(annotators.len());
        for a in annotators {
            let rel = judge_retrievals(a, probes, &predicted, engine, world);
            row.push(score_run(&predicted, &rel, probes.len(), None)?);
        }
        out.push(row);
    }
    Ok(out)
}

/// Share of probes where the model's retrieval equals what the annotator means.
pub fn agreement(
    theta: &ParamVector,
    annotator: &ScriptedAnnotator,
    probes: &[Probe],
    engine: &Engine,
    world: &WorldSnapshot,
) -> Result<f64, EvalError> {
    if probes.is_empty() {
        return Ok(0.0);
    }
    let predicted = retrievals(theta, probes, engine, world)?;
    let hits = probes
        .iter()
        .zip(&predicted)
        .filter(|(p, got)| {
            let w = world.with_context(p.context.clone());
            let want = annotator.relevant_set(&p.query_text, &w, engine);
            got.len() == want.len() && got.iter().all(|id| want.contains(id))
        })
        .count();
    Ok(hits as f64 / probes.len() as f64)
}

/// Settings for the simulated relevance-feedback study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PersonalizationConfig {
    pub conventions: Vec<Convention>,
    pub heading: Cardinal,
    pub rounds: usize,
    pub probes: usize,
    pub seed: u64,
    pub learner: LearnerConfig,
}

impl Default for PersonalizationConfig {
    fn default() -> Self {
        Self {
            conventions: vec![Convention::Geomagnetic, Convention::UserCentric],
            heading: Cardinal::East,
            rounds: 100,
            probes: 100,
            seed: 11,
            learner: LearnerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizationOutcome {
    pub models: Vec<ParamVector>,
    /// Row = model, column = annotator.
    pub matrix: Vec<Vec<EvalReport>>,
    pub agreement_before: Vec<f64>,
    pub agreement_after: Vec<f64>,
}

impl PersonalizationOutcome {
    /// Every model scores strictly highest F1 under its own annotator.
    pub fn diagonally_dominant(&self) -> bool {
        self.matrix
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, r)| i == j || row[i].f1 > r.f1))
    }
}

/// Each simulated user forks `init`, asks spatial template questions, and
/// marks the shown media with their own annotator; the resulting models are
/// then cross-evaluated on held-out probes.
pub fn simulate_personalization(
    world: &WorldSnapshot,
    engine: &Engine,
    init: &ParamVector,
    cfg: &PersonalizationConfig,
) -> Result<PersonalizationOutcome, EvalError> {
    if cfg.conventions.len() < 2 {
        return Err(EvalError::TooFewUsers);
    }
    let mut ctx = world.context.clone();
    ctx.heading_deg = cfg.heading.degrees();
    let w = world.with_context(ctx.clone());
    let spatial = |n: usize, seed: u64| -> Result<Vec<TrainingPair>, EvalError> {
        let sc = SynthConfig {
            n,
            seed,
            frame: Frame::Geomagnetic,
            fixed_here: None,
            templates: vec![TemplateKind::Spatial],
        };
        Ok(generate_dataset(&w, engine, &sc)?.into_iter().map(|p| p.pair).collect())
    };
    let rounds = spatial(cfg.rounds, cfg.seed)?;
    let probes = spatial(cfg.probes, cfg.seed.wrapping_add(1_000_003))?;
    let annotators: Vec<ScriptedAnnotator> =
        cfg.conventions.iter().map(|&c| ScriptedAnnotator { convention: c, heading: cfg.heading }).collect();

    let mut models = Vec::with_capacity(annotators.len());
    let mut before = Vec::with_capacity(annotators.len());
    let mut after = Vec::with_capacity(annotators.len());
    for (u, ann) in annotators.iter().enumerate() {
        let user = format!("user{}", u + 1);
        let mut theta = init.fork_as(Owner::User(user.clone()));
        before.push(agreement(&theta, ann, &probes, engine, &w)?);
        for q in &rounds {
            let shown = match engine.answer(&q.query_text, &w, q.frame, &theta, 1) {
                Ok(a) => a.denotation.media_ids,
                Err(_) => continue,
            };
            let marked = ann.judge(&q.query_text, &shown, &w, engine);
            let ev = FeedbackEvent {
                user_id: user.clone(),
                query_text: q.query_text.clone(),
                context: ctx.clone(),
                frame: q.frame,
                shown,
                marked_relevant: marked,
                timestamp: 0,
            };
            theta = feedback_update(&ev, engine, &w, &theta, &cfg.learner)?;
        }
        after.push(agreement(&theta, ann, &probes, engine, &w)?);
        models.push(theta);
    }
    let matrix = cross_user_matrix(&models, &annotators, &probes, engine, &w)?;
    Ok(PersonalizationOutcome {
        models,
        matrix,
        agreement_before: before,
        agreement_after: after,
    })
}
