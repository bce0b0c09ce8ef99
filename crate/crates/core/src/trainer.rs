//! Stochastic variational EM over a corpus.
//!
//! Each iteration runs the per-document E-step for every document, records
//! the corpus evidence lower bound at the current parameters, then updates
//! the topic-word matrix in closed form and the prior by Adam ascent over
//! the frozen (side, xi) pairs the E-step produced. Training stops when the
//! bound stabilizes or an iteration cap is reached.
//!
//! Documents are processed in fixed-size chunks whose results are merged in
//! chunk order, so a fit is bit-for-bit reproducible for a given seed
//! regardless of how many threads the surrounding thread pool has.

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SideSchema, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{BetaStats, TopicWordMatrix, estep_document, mstep_beta};
use crate::numerics::DirichletParam;
use crate::prior::{AdamConfig, DmrPrior, PriorExample, PriorModel, init_neural};

/// Documents per parallel work unit. Fixed so the merge order, and with it
/// every floating-point sum, does not depend on the thread count.
const CHUNK_SIZE: usize = 64;

/// Absolute fallback threshold for the stopping rule when the bound is too
/// close to zero for a relative test.
const ABS_ELBO_TOL: f64 = 1e-8;

/// Which model produces the document prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// Symmetric constant prior; plain LDA.
    Fixed,
    /// Log-linear in the side vector.
    Dmr,
    /// Two-layer perceptron on the side vector.
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_topics: usize,
    pub prior: PriorKind,
    /// Symmetric concentration used by `PriorKind::Fixed`.
    pub fixed_alpha: f64,
    pub max_iterations: usize,
    /// Relative change in the bound below which EM stops.
    pub tolerance: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Adam steps per EM iteration; `None` runs one pass over all documents.
    pub gamma_steps_per_em: Option<usize>,
}

impl TrainConfig {
    pub fn new(num_topics: usize, prior: PriorKind) -> Self {
        Self {
            num_topics,
            prior,
            fixed_alpha: 1.0,
            max_iterations: 200,
            tolerance: 1e-4,
            seed: 0,
            adam: AdamConfig::default(),
            gamma_steps_per_em: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(Error::InvalidArgument(
                "num_topics must be at least 1".into(),
            ));
        }
        if !self.fixed_alpha.is_finite() || self.fixed_alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fixed_alpha must be positive, got {}",
                self.fixed_alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.gamma_steps_per_em == Some(0) {
            return Err(Error::InvalidArgument(
                "gamma_steps_per_em must be at least 1 when set".into(),
            ));
        }
        self.adam.validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(10, PriorKind::Neural)
    }
}

/// A trained topic model: the topic-word matrix, the prior, and the corpus
/// metadata needed to score new documents.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub beta: TopicWordMatrix,
    pub prior: PriorModel,
    pub vocab: Vocabulary,
    pub side: SideSchema,
    pub config: TrainConfig,
}

impl TopicModel {
    pub fn num_topics(&self) -> usize {
        self.beta.num_topics()
    }
}

/// What happened during a fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Corpus bound at the start of each EM iteration, before that
    /// iteration's parameter updates.
    pub elbo_trace: Vec<f64>,
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Documents whose inner loop hit its iteration cap during the final
    /// EM iteration.
    pub estep_nonconverged_docs: usize,
}

struct PassOutput {
    elbo: f64,
    nonconverged: usize,
    stats: BetaStats,
    /// (document index, xi) for every non-empty document, in corpus order.
    frozen: Vec<(usize, Array1<f64>)>,
}

/// Runs the E-step over the whole corpus at fixed parameters.
fn estep_pass(corpus: &Corpus, beta: &TopicWordMatrix, prior: &PriorModel) -> Result<PassOutput> {
    struct ChunkOutput {
        elbo: f64,
        nonconverged: usize,
        stats: BetaStats,
        frozen: Vec<(usize, Array1<f64>)>,
    }

    let k = beta.num_topics();
    let v = beta.vocab_size();
    let chunks: Vec<ChunkOutput> = corpus
        .docs
        .par_chunks(CHUNK_SIZE)
        .enumerate()
        .map(|(chunk_index, docs)| -> Result<ChunkOutput> {
            let base = chunk_index * CHUNK_SIZE;
            let mut out = ChunkOutput {
                elbo: 0.0,
                nonconverged: 0,
                stats: BetaStats::zeros(k, v),
                frozen: Vec::new(),
            };
            for (offset, doc) in docs.iter().enumerate() {
                if doc.is_empty() {
                    continue;
                }
                let alpha = prior.alpha_for(&doc.side)?;
                let fit = estep_document(&doc.words, &alpha, beta)?;
                out.elbo += fit.elbo;
                if !fit.converged {
                    out.nonconverged += 1;
                }
                out.stats.accumulate(&doc.words, &fit.phi);
                out.frozen.push((base + offset, fit.xi));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut pass = PassOutput {
        elbo: 0.0,
        nonconverged: 0,
        stats: BetaStats::zeros(k, v),
        frozen: Vec::new(),
    };
    for chunk in chunks {
        pass.elbo += chunk.elbo;
        pass.nonconverged += chunk.nonconverged;
        pass.stats.merge(&chunk.stats);
        pass.frozen.extend(chunk.frozen);
    }
    Ok(pass)
}

/// Adam ascent on the prior over the frozen pairs: one shuffled pass,
/// optionally capped at `config.gamma_steps_per_em` batches.
fn gamma_step(
    corpus: &Corpus,
    prior: &mut PriorModel,
    frozen: &[(usize, Array1<f64>)],
    config: &TrainConfig,
    adam: &AdamConfig,
    em_iteration: usize,
) -> Result<()> {
    use rand::SeedableRng;
    use rand::seq::SliceRandom;

    if !prior.is_trainable() || frozen.is_empty() {
        return Ok(());
    }
    let mut order: Vec<usize> = (0..frozen.len()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed + 2 + em_iteration as u64);
    order.shuffle(&mut rng);

    let step_cap = config.gamma_steps_per_em.unwrap_or(usize::MAX);
    for batch_ids in order.chunks(adam.batch_size).take(step_cap) {
        let batch: Vec<PriorExample<'_>> = batch_ids
            .iter()
            .map(|&i| {
                let (doc_index, xi) = &frozen[i];
                (corpus.docs[*doc_index].side.as_slice(), xi)
            })
            .collect();
        prior.backward_and_step(&batch, adam)?;
    }
    Ok(())
}

fn elbo_converged(prev: f64, current: f64, tolerance: f64) -> bool {
    let delta = (current - prev).abs();
    if prev.abs() >= 1.0 {
        delta / prev.abs() < tolerance
    } else {
        delta < ABS_ELBO_TOL
    }
}

fn validate_corpus(corpus: &Corpus, num_topics: usize, prior: &PriorModel) -> Result<()> {
    let _ = num_topics;
    if corpus.docs.iter().all(|d| d.words.is_empty()) {
        return Err(Error::AllDocumentsEmpty);
    }
    let v = corpus.vocab.len();
    let expected_side = prior.side_dim();
    for (i, doc) in corpus.docs.iter().enumerate() {
        if let Some(q) = expected_side
            && doc.side.len() != q
        {
            return Err(Error::DimensionMismatch(format!(
                "document {i} has a side vector of length {}, expected {q}",
                doc.side.len()
            )));
        }
        if let Some(&bad) = doc.side.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "document {i} has non-finite side value {bad}"
            )));
        }
        if let Some(&w) = doc.words.iter().find(|&&w| w >= v) {
            return Err(Error::IndexOutOfRange { index: w, limit: v });
        }
    }
    Ok(())
}

fn initial_prior(corpus: &Corpus, config: &TrainConfig) -> Result<PriorModel> {
    let k = config.num_topics;
    let q = corpus.side_dim();
    Ok(match config.prior {
        PriorKind::Fixed => PriorModel::fixed(DirichletParam::symmetric(k, config.fixed_alpha)?),
        PriorKind::Dmr => PriorModel::Dmr(DmrPrior::new(q, k)),
        PriorKind::Neural => PriorModel::Neural(init_neural(q, k, config.seed + 1)),
    })
}

/// Trains a topic model on the corpus.
///
/// The report's bound trace has one entry per EM iteration, evaluated
/// before that iteration's updates. When an iteration fails (a non-finite
/// prior update, for instance) the parameters are rolled back to the start
/// of that iteration and returned inside `Error::TrainingAborted`.
pub fn fit(corpus: &Corpus, config: &TrainConfig) -> Result<(TopicModel, TrainReport)> {
    config.validate()?;
    let start = Instant::now();

    let mut beta =
        TopicWordMatrix::random_init(config.num_topics, corpus.vocab.len(), config.seed)?;
    let mut prior = initial_prior(corpus, config)?;
    validate_corpus(corpus, config.num_topics, &prior)?;

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut nonconverged_docs = 0;

    for iteration in 0..config.max_iterations {
        let snapshot = (beta.clone(), prior.clone());
        let outcome = estep_pass(corpus, &beta, &prior).and_then(|pass| {
            beta = mstep_beta(&pass.stats)?;
            gamma_step(
                corpus,
                &mut prior,
                &pass.frozen,
                config,
                &config.adam,
                iteration,
            )?;
            Ok(pass)
        });
        match outcome {
            Ok(pass) => {
                trace.push(pass.elbo);
                nonconverged_docs = pass.nonconverged;
                if iteration > 0
                    && elbo_converged(trace[iteration - 1], pass.elbo, config.tolerance)
                {
                    converged = true;
                    break;
                }
            }
            Err(err) => {
                (beta, prior) = snapshot;
                let iterations = trace.len();
                let model = TopicModel {
                    beta,
                    prior,
                    vocab: corpus.vocab.clone(),
                    side: corpus.side.clone(),
                    config: config.clone(),
                };
                let report = TrainReport {
                    elbo_trace: trace,
                    seconds: start.elapsed().as_secs_f64(),
                    iterations,
                    converged: false,
                    estep_nonconverged_docs: nonconverged_docs,
                };
                return Err(Error::TrainingAborted {
                    iteration,
                    reason: err.to_string(),
                    model: Box::new(model),
                    report,
                });
            }
        }
    }

    let iterations = trace.len();
    let model = TopicModel {
        beta,
        prior,
        vocab: corpus.vocab.clone(),
        side: corpus.side.clone(),
        config: config.clone(),
    };
    let report = TrainReport {
        elbo_trace: trace,
        seconds: start.elapsed().as_secs_f64(),
        iterations,
        converged,
        estep_nonconverged_docs: nonconverged_docs,
    };
    Ok((model, report))
}

/// Corpus bound at the model's current parameters, without updating them.
pub fn evaluate_elbo(corpus: &Corpus, model: &TopicModel) -> Result<f64> {
    validate_corpus(corpus, model.num_topics(), &model.prior)?;
    if corpus.vocab.len() != model.beta.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "corpus vocabulary has {} tokens, model expects {}",
            corpus.vocab.len(),
            model.beta.vocab_size()
        )));
    }
    Ok(estep_pass(corpus, &model.beta, &model.prior)?.elbo)
}

/// Trains only the prior, holding the topic-word matrix fixed. Each round
/// is an E-step followed by one shuffled pass of Adam updates using the
/// given optimizer settings. Returns the bound at the start of each round.
pub fn train_gamma_only(
    corpus: &Corpus,
    model: &mut TopicModel,
    rounds: usize,
    adam: &AdamConfig,
) -> Result<Vec<f64>> {
    adam.validate()?;
    validate_corpus(corpus, model.num_topics(), &model.prior)?;
    let mut trace = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let pass = estep_pass(corpus, &model.beta, &model.prior)?;
        gamma_step(
            corpus,
            &mut model.prior,
            &pass.frozen,
            &model.config,
            adam,
            round,
        )?;
        trace.push(pass.elbo);
    }
    Ok(trace)
}

/// Writes the bound trace as a two-column CSV with 1-based iterations.
pub fn write_elbo_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["iteration", "elbo"])?;
    for (i, &elbo) in trace.iter().enumerate() {
        writer.serialize((i + 1, elbo))?;
    }
    writer.flush()?;
    Ok(())
}

/// Topic model serialization.
///
/// Checkpoints are a single JSON document carrying a schema tag, the
/// training configuration, the vocabulary, the side layout, the topic-word
/// rows, and the prior parameters (optimizer state included). Numbers
/// survive a save/load round trip bit for bit.
pub mod checkpoint {
    use std::fs;
    use std::path::Path;

    use serde::{Deserialize, Serialize};

    use super::{PriorKind, TopicModel, TrainConfig};
    use crate::corpus::{SideSchema, Vocabulary};
    use crate::error::{Error, Result};
    use crate::inference::TopicWordMatrix;
    use crate::numerics::DirichletParam;
    use crate::prior::{AdamState, DmrPrior, FixedPrior, NeuralPrior, PriorModel};

    pub const SCHEMA: &str = "nnlda-checkpoint-v1";

    #[derive(Serialize, Deserialize)]
    struct CheckpointFile {
        schema: String,
        config: TrainConfig,
        vocab: Vec<String>,
        side: SideSchema,
        /// Row-major topic-word matrix, one row per topic.
        beta: Vec<Vec<f64>>,
        prior: PriorCheckpoint,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(tag = "kind", rename_all = "snake_case")]
    enum PriorCheckpoint {
        Fixed {
            alpha: Vec<f64>,
        },
        Dmr {
            num_topics: usize,
            side_dim: usize,
            lambda: Vec<f64>,
            adam: AdamState,
        },
        Neural {
            num_topics: usize,
            side_dim: usize,
            hidden: usize,
            params: Vec<f64>,
            adam: AdamState,
        },
    }

    fn corrupt(reason: impl Into<String>) -> Error {
        Error::CorruptCheckpoint(reason.into())
    }

    pub fn to_json_string(model: &TopicModel) -> Result<String> {
        let file = CheckpointFile {
            schema: SCHEMA.to_owned(),
            config: model.config.clone(),
            vocab: model.vocab.tokens().to_vec(),
            side: model.side.clone(),
            beta: model
                .beta
                .beta()
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
            prior: match &model.prior {
                PriorModel::Fixed(p) => PriorCheckpoint::Fixed {
                    alpha: p.alpha.as_slice().to_vec(),
                },
                PriorModel::Dmr(p) => PriorCheckpoint::Dmr {
                    num_topics: p.num_topics,
                    side_dim: p.side_dim,
                    lambda: p.lambda.clone(),
                    adam: p.adam.clone(),
                },
                PriorModel::Neural(p) => PriorCheckpoint::Neural {
                    num_topics: p.num_topics,
                    side_dim: p.side_dim,
                    hidden: p.hidden,
                    params: p.params.clone(),
                    adam: p.adam.clone(),
                },
            },
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        Ok(text)
    }

    pub fn save_model(path: &Path, model: &TopicModel) -> Result<()> {
        fs::write(path, to_json_string(model)?)?;
        Ok(())
    }

    pub fn load_model(path: &Path) -> Result<TopicModel> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| corrupt(format!("not valid JSON: {e}")))?;

        let found = value
            .get("schema")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>");
        if found != SCHEMA {
            return Err(Error::SchemaVersionMismatch {
                expected: SCHEMA.to_owned(),
                found: found.to_owned(),
            });
        }

        let file: CheckpointFile =
            serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        file.config
            .validate()
            .map_err(|e| corrupt(format!("bad configuration: {e}")))?;

        let vocab = Vocabulary::from_tokens(file.vocab)
            .map_err(|e| corrupt(format!("bad vocabulary: {e}")))?;

        let k = file.config.num_topics;
        let v = vocab.len();
        if file.beta.len() != k {
            return Err(corrupt(format!(
                "expected {k} topic rows, found {}",
                file.beta.len()
            )));
        }
        let mut flat = Vec::with_capacity(k * v);
        for (i, row) in file.beta.iter().enumerate() {
            if row.len() != v {
                return Err(corrupt(format!(
                    "topic row {i} has {} entries for a {v}-token vocabulary",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        let beta = ndarray::Array2::from_shape_vec((k, v), flat)
            .map_err(|e| corrupt(e.to_string()))
            .and_then(|m| {
                TopicWordMatrix::new(m).map_err(|e| corrupt(format!("bad topic rows: {e}")))
            })?;

        let prior = rebuild_prior(file.prior, &file.config, &file.side)?;
        Ok(TopicModel {
            beta,
            prior,
            vocab,
            side: file.side,
            config: file.config,
        })
    }

    fn rebuild_prior(
        saved: PriorCheckpoint,
        config: &TrainConfig,
        side: &SideSchema,
    ) -> Result<PriorModel> {
        let k = config.num_topics;
        let adam_fits = |adam: &AdamState, len: usize| adam.m.len() == len && adam.v.len() == len;
        match (saved, config.prior) {
            (PriorCheckpoint::Fixed { alpha }, PriorKind::Fixed) => {
                if alpha.len() != k {
                    return Err(corrupt(format!(
                        "fixed prior has {} entries for {k} topics",
                        alpha.len()
                    )));
                }
                let alpha = DirichletParam::new(alpha)
                    .map_err(|e| corrupt(format!("bad fixed prior: {e}")))?;
                Ok(PriorModel::Fixed(FixedPrior { alpha }))
            }
            (
                PriorCheckpoint::Dmr {
                    num_topics,
                    side_dim,
                    lambda,
                    adam,
                },
                PriorKind::Dmr,
            ) => {
                let expected = num_topics * (side_dim + 1);
                if num_topics != k
                    || side_dim != side.width()
                    || lambda.len() != expected
                    || !adam_fits(&adam, expected)
                {
                    return Err(corrupt("log-linear prior dimensions are inconsistent"));
                }
                Ok(PriorModel::Dmr(DmrPrior {
                    num_topics,
                    side_dim,
                    lambda,
                    adam,
                }))
            }
            (
                PriorCheckpoint::Neural {
                    num_topics,
                    side_dim,
                    hidden,
                    params,
                    adam,
                },
                PriorKind::Neural,
            ) => {
                let expected = hidden * side_dim + hidden + num_topics * hidden + num_topics;
                if num_topics != k
                    || side_dim != side.width()
                    || hidden == 0
                    || params.len() != expected
                    || !adam_fits(&adam, expected)
                {
                    return Err(corrupt("neural prior dimensions are inconsistent"));
                }
                Ok(PriorModel::Neural(NeuralPrior {
                    side_dim,
                    num_topics,
                    hidden,
                    params,
                    adam,
                }))
            }
            _ => Err(corrupt("prior kind does not match the configuration")),
        }
    }
}
