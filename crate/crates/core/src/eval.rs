//! Model evaluation: log-perplexity, topic grouping against gold
//! categories, lift diagnostics, feature export, and comment generation.
//!
//! Evaluation corpora may use a different vocabulary than the model; words
//! are matched by token string and out-of-vocabulary words are skipped and
//! counted. All operations are read-only over the model.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::inference::estep_document;
use crate::numerics::ProbVector;
use crate::trainer::TopicModel;

/// Per-word evaluation summary behind `log_perplexity`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PerplexityStats {
    /// −(total bound) / (scored words); lower is better.
    pub log_perplexity: f64,
    pub total_elbo: f64,
    pub scored_words: usize,
    /// Words dropped because the model vocabulary lacks them.
    pub oov_words: usize,
    /// Documents with at least one scorable word.
    pub documents: usize,
    pub nonconverged_docs: usize,
}

/// Topic-grouping quality against gold categories.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupingReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Gold-category by predicted-topic counts; entries sum to the number
    /// of evaluated documents.
    pub confusion: Array2<u64>,
    /// Sorted distinct gold categories; the confusion row order.
    pub categories: Vec<String>,
    /// For each topic, the gold category it was matched to, if any.
    pub topic_assignment: Vec<Option<usize>>,
}

fn validate_sides(model: &TopicModel, corpus: &Corpus) -> Result<()> {
    if let Some(q) = model.prior.side_dim() {
        for (i, doc) in corpus.docs.iter().enumerate() {
            if doc.side.len() != q {
                return Err(Error::DimensionMismatch(format!(
                    "document {i} has a side vector of length {}, model expects {q}",
                    doc.side.len()
                )));
            }
        }
    }
    Ok(())
}

/// Word indices of every document translated into the model's vocabulary.
/// Returns the translated documents and the number of words dropped.
fn model_words(model: &TopicModel, corpus: &Corpus) -> Result<(Vec<Vec<usize>>, usize)> {
    if corpus.vocab == model.vocab {
        return Ok((corpus.docs.iter().map(|d| d.words.clone()).collect(), 0));
    }
    let mut dropped = 0;
    let mut out = Vec::with_capacity(corpus.docs.len());
    for doc in &corpus.docs {
        let mut words = Vec::with_capacity(doc.words.len());
        for &w in &doc.words {
            match model.vocab.index_of(corpus.vocab.token(w)?) {
                Some(i) => words.push(i),
                None => dropped += 1,
            }
        }
        out.push(words);
    }
    Ok((out, dropped))
}

fn theta_for_words(model: &TopicModel, words: &[usize], side: &[f64]) -> Result<ProbVector> {
    let alpha = model.prior.alpha_for(side)?;
    if words.is_empty() {
        return ProbVector::from_unnormalized(alpha.values().clone());
    }
    let fit = estep_document(words, &alpha, &model.beta)?;
    ProbVector::from_unnormalized(fit.xi)
}

/// Posterior topic mixture of one document: xi normalized to the simplex.
/// An empty document falls back to the normalized prior. `doc.words` must
/// index the model's vocabulary.
pub fn infer_theta(model: &TopicModel, doc: &Document) -> Result<ProbVector> {
    theta_for_words(model, &doc.words, &doc.side)
}

/// Detailed perplexity evaluation; see `log_perplexity`.
pub fn perplexity_stats(model: &TopicModel, corpus: &Corpus) -> Result<PerplexityStats> {
    validate_sides(model, corpus)?;
    let (words, oov_words) = model_words(model, corpus)?;

    let mut total_elbo = 0.0;
    let mut scored_words = 0;
    let mut documents = 0;
    let mut nonconverged_docs = 0;
    for (doc, words) in corpus.docs.iter().zip(&words) {
        if words.is_empty() {
            continue;
        }
        let alpha = model.prior.alpha_for(&doc.side)?;
        let fit = estep_document(words, &alpha, &model.beta)?;
        total_elbo += fit.elbo;
        scored_words += words.len();
        documents += 1;
        if !fit.converged {
            nonconverged_docs += 1;
        }
    }
    if scored_words == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(PerplexityStats {
        log_perplexity: -total_elbo / scored_words as f64,
        total_elbo,
        scored_words,
        oov_words,
        documents,
        nonconverged_docs,
    })
}

/// Negative average per-word bound over the corpus, from a fresh E-step per
/// document. Lower is better.
pub fn log_perplexity(model: &TopicModel, corpus: &Corpus) -> Result<f64> {
    Ok(perplexity_stats(model, corpus)?.log_perplexity)
}

/// Minimum-cost assignment of each row to a distinct column (rows <= cols),
/// by shortest augmenting paths over row/column potentials. Returns the
/// column chosen for each row.
fn assign_min_cost(cost: &Array2<i64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    debug_assert!(0 < n && n <= m);
    const INF: i64 = i64::MAX / 4;

    // 1-based arrays; p[j] is the row matched to column j, 0 when free.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

fn ratio(numerator: u64, denominator: u64) -> f64 {
    if denominator == 0 {
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Grouping metrics from already-computed topic predictions. Topics are
/// matched to gold categories by maximum-weight matching on the confusion
/// counts, so the result is invariant to topic relabeling.
pub fn grouping_from_predictions(
    gold: &[String],
    predicted: &[usize],
    num_topics: usize,
) -> Result<GroupingReport> {
    if gold.len() != predicted.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gold labels for {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if let Some(&t) = predicted.iter().find(|&&t| t >= num_topics) {
        return Err(Error::IndexOutOfRange {
            index: t,
            limit: num_topics,
        });
    }

    let categories: Vec<String> = gold
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect();
    let n_cats = categories.len();
    if n_cats > num_topics {
        return Err(Error::InvalidArgument(format!(
            "{n_cats} gold categories exceed the model's {num_topics} topics"
        )));
    }
    let cat_index: HashMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    let mut confusion = Array2::<u64>::zeros((n_cats, num_topics));
    for (label, &topic) in gold.iter().zip(predicted) {
        confusion[[cat_index[label.as_str()], topic]] += 1;
    }

    // Maximum-weight matching as min-cost with flipped counts.
    let top = *confusion.iter().max().expect("non-empty confusion") as i64;
    let cost = confusion.mapv(|c| top - c as i64);
    let cat_to_topic = assign_min_cost(&cost);
    let mut topic_assignment = vec![None; num_topics];
    for (cat, &topic) in cat_to_topic.iter().enumerate() {
        topic_assignment[topic] = Some(cat);
    }

    let row_totals: Vec<u64> = confusion
        .rows()
        .into_iter()
        .map(|r| r.iter().sum())
        .collect();
    let col_totals: Vec<u64> = confusion
        .columns()
        .into_iter()
        .map(|c| c.iter().sum())
        .collect();

    let mut macro_precision = 0.0;
    let mut macro_recall = 0.0;
    let mut macro_f1 = 0.0;
    let mut tp_total = 0;
    let mut fp_total = 0;
    let mut fn_total = 0;
    for (cat, &topic) in cat_to_topic.iter().enumerate() {
        let tp = confusion[[cat, topic]];
        let fp = col_totals[topic] - tp;
        let fn_ = row_totals[cat] - tp;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        macro_precision += precision;
        macro_recall += recall;
        macro_f1 += f1(precision, recall);
        tp_total += tp;
        fp_total += fp;
        fn_total += fn_;
    }
    macro_precision /= n_cats as f64;
    macro_recall /= n_cats as f64;
    macro_f1 /= n_cats as f64;
    let micro_f1 = f1(
        ratio(tp_total, tp_total + fp_total),
        ratio(tp_total, tp_total + fn_total),
    );

    Ok(GroupingReport {
        macro_precision,
        macro_recall,
        macro_f1,
        micro_f1,
        confusion,
        categories,
        topic_assignment,
    })
}

/// Predicts a topic per document (argmax of the posterior mixture, ties to
/// the lowest index) and scores the grouping against gold categories.
pub fn grouping_scores(model: &TopicModel, corpus: &Corpus) -> Result<GroupingReport> {
    validate_sides(model, corpus)?;
    let (words, _) = model_words(model, corpus)?;

    let mut gold = Vec::with_capacity(corpus.docs.len());
    let mut predicted = Vec::with_capacity(corpus.docs.len());
    for (i, (doc, words)) in corpus.docs.iter().zip(&words).enumerate() {
        let label = doc.category.clone().ok_or(Error::MissingGoldLabels(i))?;
        let theta = theta_for_words(model, words, &doc.side)?;
        let best = theta
            .as_slice()
            .iter()
            .enumerate()
            .reduce(|a, b| if b.1 > a.1 { b } else { a })
            .expect("theta is non-empty")
            .0;
        gold.push(label);
        predicted.push(best);
    }
    grouping_from_predictions(&gold, &predicted, model.num_topics())
}

/// Empirical word and word-given-side frequencies with add-one smoothing,
/// for lift scoring.
#[derive(Debug, Clone)]
pub struct LiftStats {
    vocab_size: usize,
    total_words: u64,
    word_counts: Vec<u64>,
    groups: HashMap<Vec<u64>, GroupCounts>,
}

#[derive(Debug, Clone)]
struct GroupCounts {
    total: u64,
    word_counts: Vec<u64>,
}

fn side_key(side: &[f64]) -> Vec<u64> {
    side.iter().map(|x| x.to_bits()).collect()
}

impl LiftStats {
    /// Counts word occurrences overall and within each distinct side
    /// vector. Fails with `EmptyEvaluation` on a wordless corpus.
    pub fn fit(corpus: &Corpus) -> Result<Self> {
        let vocab_size = corpus.vocab.len();
        let mut stats = Self {
            vocab_size,
            total_words: 0,
            word_counts: vec![0; vocab_size],
            groups: HashMap::new(),
        };
        for doc in &corpus.docs {
            let group = stats
                .groups
                .entry(side_key(&doc.side))
                .or_insert(GroupCounts {
                    total: 0,
                    word_counts: vec![0; vocab_size],
                });
            for &w in &doc.words {
                if w >= vocab_size {
                    return Err(Error::IndexOutOfRange {
                        index: w,
                        limit: vocab_size,
                    });
                }
                stats.word_counts[w] += 1;
                stats.total_words += 1;
                group.total += 1;
                group.word_counts[w] += 1;
            }
        }
        if stats.total_words == 0 {
            return Err(Error::EmptyEvaluation);
        }
        Ok(stats)
    }

    /// l(d) = prod_n P(w_n) / P(w_n | s_d), the document's word-side
    /// dependence. Values below 1 mean the words are more likely under the
    /// document's own side data than marginally. A side vector never seen
    /// in the fitted corpus gets the uniform smoothed conditional.
    pub fn lift(&self, doc: &Document) -> Result<f64> {
        let group = self.groups.get(&side_key(&doc.side));
        let v = self.vocab_size as f64;
        let mut log_lift = 0.0;
        for &w in &doc.words {
            if w >= self.vocab_size {
                return Err(Error::IndexOutOfRange {
                    index: w,
                    limit: self.vocab_size,
                });
            }
            let marginal = (self.word_counts[w] + 1) as f64 / (self.total_words as f64 + v);
            let (group_count, group_total) = match group {
                Some(g) => (g.word_counts[w], g.total),
                None => (0, 0),
            };
            let conditional = (group_count + 1) as f64 / (group_total as f64 + v);
            log_lift += marginal.ln() - conditional.ln();
        }
        Ok(log_lift.exp())
    }
}

/// Convenience form of `LiftStats`: fits the corpus and scores one
/// document. Use `LiftStats::fit` directly when scoring many documents.
pub fn lift(corpus: &Corpus, doc: &Document) -> Result<f64> {
    LiftStats::fit(corpus)?.lift(doc)
}

/// Lift of every document against its own corpus, in document order.
pub fn lift_all(corpus: &Corpus) -> Result<Vec<f64>> {
    let stats = LiftStats::fit(corpus)?;
    corpus.docs.iter().map(|doc| stats.lift(doc)).collect()
}

/// Writes one CSV row per document: the document index, its posterior
/// topic mixture, and its label when the corpus has any.
pub fn export_features(model: &TopicModel, corpus: &Corpus, path: &Path) -> Result<()> {
    validate_sides(model, corpus)?;
    let (words, _) = model_words(model, corpus)?;
    let k = model.num_topics();
    let has_labels = corpus.docs.iter().any(|d| d.label.is_some());

    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["doc_id".to_owned()];
    header.extend((1..=k).map(|i| format!("theta_{i}")));
    if has_labels {
        header.push("label".to_owned());
    }
    writer.write_record(&header)?;

    let mut row = Vec::with_capacity(header.len());
    for (i, (doc, words)) in corpus.docs.iter().zip(&words).enumerate() {
        row.clear();
        row.push(i.to_string());
        let theta = theta_for_words(model, words, &doc.side)?;
        row.extend(theta.as_slice().iter().map(|t| t.to_string()));
        if has_labels {
            row.push(doc.label.map(|l| l.to_string()).unwrap_or_default());
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn ranked_indices(scores: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(n.min(scores.len()));
    order
}

/// Generates a comment for a side vector alone: theta is the normalized
/// prior, each token is scored sum_i theta_i * beta_iv, and the top
/// `n_words` distinct tokens come back best first (ties by vocabulary
/// order, `n_words` clamped to the vocabulary size).
pub fn generate_comment(model: &TopicModel, side: &[f64], n_words: usize) -> Result<Vec<String>> {
    if n_words == 0 {
        return Err(Error::InvalidArgument("n_words must be at least 1".into()));
    }
    let alpha = model.prior.alpha_for(side)?;
    let alpha_total = alpha.sum();
    let theta = Array1::from_iter(alpha.values().iter().map(|a| a / alpha_total));

    let beta = model.beta.beta();
    let mut scores = vec![0.0; model.beta.vocab_size()];
    for (i, row) in beta.rows().into_iter().enumerate() {
        for (score, &b) in scores.iter_mut().zip(&row) {
            *score += theta[i] * b;
        }
    }
    ranked_indices(&scores, n_words)
        .into_iter()
        .map(|w| model.vocab.token(w).map(str::to_owned))
        .collect()
}

/// The topic's `n` highest-probability tokens, best first, ties by
/// vocabulary order; `n` is clamped to the vocabulary size.
pub fn top_words(model: &TopicModel, topic: usize, n: usize) -> Result<Vec<String>> {
    let k = model.num_topics();
    if topic >= k {
        return Err(Error::IndexOutOfRange {
            index: topic,
            limit: k,
        });
    }
    let row = model.beta.beta().row(topic);
    ranked_indices(row.as_slice().expect("contiguous row"), n)
        .into_iter()
        .map(|w| model.vocab.token(w).map(str::to_owned))
        .collect()
}
