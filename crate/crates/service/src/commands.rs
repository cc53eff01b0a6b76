//! Operator commands behind the `egomedia` subcommands.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use egomedia_core::engine::{Engine, EngineError};
use egomedia_core::eval::{
    expected_accuracy, learning_curve, prepare_examples, score_run, simulate_personalization, CurvePoint, EvalReport,
    PersonalizationConfig, PersonalizationOutcome,
};
use egomedia_core::learner::{train_from, LearnerConfig, TrainReport, TrainingPair};
use egomedia_core::params::{Owner, ParamVector};
use egomedia_core::synth::{generate_dataset, synthetic_world, SynthConfig, SynthWorldConfig};
use egomedia_core::world::{MediaIngestReport, OsmIngestReport, WorldSnapshot, WorldStore};
use serde::{Deserialize, Serialize};

use crate::persist::DataDir;

pub fn ingest_osm(data: &DataDir, file: &Path) -> anyhow::Result<OsmIngestReport> {
    let mut store = data.load_world()?;
    let input = BufReader::new(File::open(file).with_context(|| file.display().to_string())?);
    let rep = store.ingest_osm_xml(input)?;
    data.save_world(&store)?;
    Ok(rep)
}

pub fn ingest_media(data: &DataDir, manifest: &Path) -> anyhow::Result<MediaIngestReport> {
    let mut store = data.load_world()?;
    let input = BufReader::new(File::open(manifest).with_context(|| manifest.display().to_string())?);
    let rep = store.ingest_media_manifest(input)?;
    data.save_world(&store)?;
    Ok(rep)
}

pub fn read_corpus(path: &Path) -> anyhow::Result<Vec<TrainingPair>> {
    let r = BufReader::new(File::open(path).with_context(|| path.display().to_string())?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

/// `gen-synth` settings: the world to build and the corpus to sample from it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSynthConfig {
    pub world: SynthWorldConfig,
    pub corpus: SynthConfig,
    /// Corpus output; defaults to `<data_dir>/corpus.jsonl`.
    pub out: Option<PathBuf>,
}

/// Adds the synthetic world to the data directory and writes the corpus.
pub fn gen_synth(data: &DataDir, cfg: &GenSynthConfig, engine: &Engine) -> anyhow::Result<(usize, PathBuf)> {
    let world = synthetic_world(&cfg.world);
    let pairs = generate_dataset(&world, engine, &cfg.corpus)?;
    let mut store = data.load_world()?;
    for f in world.facts.facts() {
        store.insert_fact(f.clone());
    }
    store.extend_media(world.media.records().iter().cloned());
    data.save_world(&store)?;
    let out = cfg.out.clone().unwrap_or_else(|| data.root().join("corpus.jsonl"));
    let mut w = BufWriter::new(File::create(&out).with_context(|| out.display().to_string())?);
    for p in &pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok((pairs.len(), out))
}

/// The stored world under the first pair's context; each pair brings its own.
fn world_for(store: &WorldStore, pairs: &[TrainingPair]) -> anyhow::Result<WorldSnapshot> {
    let Some(first) = pairs.first() else { bail!("corpus is empty") };
    if store.facts().is_empty() {
        bail!("the data directory has no facts; run ingest-osm or gen-synth first");
    }
    Ok(WorldSnapshot::from_parts(
        store.facts().facts().to_vec(),
        store.media().records().to_vec(),
        first.context.clone(),
    ))
}

/// Trains the shared parameters from scratch and stores them.
pub fn train(data: &DataDir, corpus: &Path, cfg: &LearnerConfig, engine: &Engine) -> anyhow::Result<(ParamVector, TrainReport)> {
    let pairs = read_corpus(corpus)?;
    let world = world_for(&data.load_world()?, &pairs)?;
    let (theta, report) = train_from(&pairs, engine, &world, cfg, ParamVector::zero(Owner::Shared))?;
    data.save_params(&theta)?;
    Ok((theta, report))
}

/// Scores the shared parameters on a corpus with gold retrievals. A
/// retrieval is relevant when at least half of it is gold.
pub fn evaluate_corpus(data: &DataDir, corpus: &Path, engine: &Engine, standard_recall: bool) -> anyhow::Result<EvalReport> {
    let pairs = read_corpus(corpus)?;
    let world = world_for(&data.load_world()?, &pairs)?;
    let theta = data.load_params()?.shared();
    let mut preds = Vec::with_capacity(pairs.len());
    let mut relevant = Vec::with_capacity(pairs.len());
    for p in &pairs {
        let w = world.with_context(p.context.clone());
        let got = match engine.answer(&p.query_text, &w, p.frame, &theta, 1) {
            Ok(a) => a.denotation.media_ids,
            Err(EngineError::Parse(_)) | Err(EngineError::Context(_)) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let hits = got.iter().filter(|id| p.gold_ids.contains(*id)).count();
        relevant.push(!got.is_empty() && 2 * hits >= got.len());
        preds.push(got);
    }
    let gold: Vec<BTreeSet<String>> = pairs.iter().map(|p| p.gold_ids.clone()).collect();
    let mut report = score_run(&preds, &relevant, pairs.len(), Some(&gold))?;
    report.accuracy = Some(expected_accuracy(&prepare_examples(&pairs, engine, &world)?, &theta));
    if !standard_recall {
        report.standard_recall = None;
    }
    Ok(report)
}

/// `curve` settings. Self-contained: the world is synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveConfig {
    pub world: SynthWorldConfig,
    pub train: SynthConfig,
    pub eval: SynthConfig,
    pub sizes: Vec<usize>,
    pub learner: LearnerConfig,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            world: SynthWorldConfig::default(),
            train: SynthConfig { n: 200, seed: 1, ..Default::default() },
            eval: SynthConfig { n: 200, seed: 2, ..Default::default() },
            sizes: vec![0, 10, 25, 50, 100, 150, 200],
            learner: LearnerConfig::default(),
        }
    }
}

pub fn curve(cfg: &CurveConfig, engine: &Engine) -> anyhow::Result<Vec<CurvePoint>> {
    let world = synthetic_world(&cfg.world);
    let pool: Vec<TrainingPair> = generate_dataset(&world, engine, &cfg.train)?.into_iter().map(|p| p.pair).collect();
    let held: Vec<TrainingPair> = generate_dataset(&world, engine, &cfg.eval)?.into_iter().map(|p| p.pair).collect();
    Ok(learning_curve(&pool, &held, &cfg.sizes, engine, &world, &cfg.learner)?)
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("size,accuracy\n");
    for p in points {
        let _ = writeln!(s, "{},{:.6}", p.size, p.accuracy);
    }
    s
}

/// `crossuser` settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossUserConfig {
    pub world: SynthWorldConfig,
    pub personalization: PersonalizationConfig,
}

pub fn crossuser(cfg: &CrossUserConfig, engine: &Engine) -> anyhow::Result<PersonalizationOutcome> {
    let world = synthetic_world(&cfg.world);
    Ok(simulate_personalization(&world, engine, &ParamVector::zero(Owner::Shared), &cfg.personalization)?)
}

/// Rows are models, columns annotators; cells are precision/recall/F1 in percent.
pub fn matrix_table(out: &PersonalizationOutcome) -> String {
    let mut s = String::new();
    let n = out.matrix.len();
    let _ = write!(s, "{:<8}", "model");
    for j in 0..n {
        let _ = write!(s, "{:>22}", format!("annotator {}", j + 1));
    }
    s.push('\n');
    for (i, row) in out.matrix.iter().enumerate() {
        let _ = write!(s, "{:<8}", format!("M{}", i + 1));
        for r in row {
            let cell = format!("{:.2}/{:.2}/{:.2}", 100.0 * r.precision, 100.0 * r.recall, 100.0 * r.f1);
            let _ = write!(s, "{cell:>22}");
        }
        s.push('\n');
    }
    for (i, (b, a)) in out.agreement_before.iter().zip(&out.agreement_after).enumerate() {
        let _ = writeln!(s, "user {} agreement {:.2}% -> {:.2}%", i + 1, 100.0 * b, 100.0 * a);
    }
    let _ = writeln!(s, "diagonally dominant: {}", out.diagonally_dominant());
    s
}
