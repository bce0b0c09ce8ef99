//! Variational inference for one document, and the topic-word update.
//!
//! The per-document posterior over topic mixture and assignments is
//! approximated by q(theta, z) = Dir(theta; xi) prod_n Mult(z_n; phi_n).
//! `estep_document` alternates the closed-form updates
//!
//!   phi_ni  proportional to  beta_{i,w_n} * exp(psi(xi_i))
//!   xi_i    = alpha_i + sum_n phi_ni
//!
//! until xi stabilizes, then reports the document's evidence lower bound.
//! `BetaStats` accumulates expected word counts across documents and
//! `mstep_beta` turns them into the next topic-word matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::numerics::{DirichletParam, digamma_raw, dirichlet_expectation_log, log_sum_exp};
use crate::prior::elbo_alpha_term;

/// Relative change in xi below which the inner loop stops.
pub const ESTEP_TOL: f64 = 1e-5;
/// Inner loop iteration cap.
pub const ESTEP_MAX_ITERS: usize = 100;
/// Added to every expected count before normalizing, so no topic assigns a
/// word probability zero.
pub const BETA_FLOOR: f64 = 1e-12;

/// Row-stochastic topic-word matrix with its elementwise logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordMatrix {
    beta: Array2<f64>,
    log_beta: Array2<f64>,
}

impl TopicWordMatrix {
    /// Wraps a matrix whose rows are distributions over the vocabulary.
    pub fn new(beta: Array2<f64>) -> Result<Self> {
        let (k, v) = beta.dim();
        if k == 0 || v == 0 {
            return Err(Error::Domain("topic-word matrix must be non-empty".into()));
        }
        for (i, row) in beta.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for &p in &row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::Domain(format!("topic {i} has entry {p}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "topic {i} sums to {sum}, expected 1"
                )));
            }
        }
        let log_beta = beta.mapv(f64::ln);
        Ok(Self { beta, log_beta })
    }

    /// Random initialization: each row is normalized from independent
    /// Exp(1) draws, so all entries are strictly positive.
    pub fn random_init(num_topics: usize, vocab_size: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Exp1};

        if num_topics == 0 || vocab_size == 0 {
            return Err(Error::Domain("topic-word matrix must be non-empty".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut beta = Array2::zeros((num_topics, vocab_size));
        for mut row in beta.rows_mut() {
            let mut sum = 0.0;
            for x in row.iter_mut() {
                let draw: f64 = Exp1.sample(&mut rng);
                *x = draw;
                sum += draw;
            }
            row.mapv_inplace(|x| x / sum);
        }
        Self::new(beta)
    }

    pub fn num_topics(&self) -> usize {
        self.beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.beta.ncols()
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    pub fn log_beta(&self) -> &Array2<f64> {
        &self.log_beta
    }
}

/// Converged variational state of one document.
#[derive(Debug, Clone)]
pub struct VariationalDoc {
    /// Word-topic responsibilities, one row per word position.
    pub phi: Array2<f64>,
    /// Dirichlet parameter of q(theta).
    pub xi: Array1<f64>,
    /// The document's evidence lower bound.
    pub elbo: f64,
    /// False when the loop hit the iteration cap first.
    pub converged: bool,
    /// Update sweeps performed.
    pub iterations: usize,
}

/// One sweep of the responsibility update, in log space.
pub fn update_phi(words: &[usize], xi: &Array1<f64>, topics: &TopicWordMatrix) -> Array2<f64> {
    let k = xi.len();
    let psi_xi: Vec<f64> = xi.iter().map(|&x| digamma_raw(x)).collect();
    let mut phi = Array2::zeros((words.len(), k));
    let mut logits = vec![0.0; k];
    for (n, &w) in words.iter().enumerate() {
        for i in 0..k {
            logits[i] = self::log_beta_at(topics, i, w) + psi_xi[i];
        }
        let norm = log_sum_exp(&logits);
        if norm.is_finite() {
            for i in 0..k {
                phi[[n, i]] = (logits[i] - norm).exp();
            }
        } else {
            // Every topic gives this word probability zero; the
            // responsibilities are unidentified, so fall back to uniform.
            for i in 0..k {
                phi[[n, i]] = 1.0 / k as f64;
            }
        }
    }
    phi
}

fn log_beta_at(topics: &TopicWordMatrix, topic: usize, word: usize) -> f64 {
    topics.log_beta[[topic, word]]
}

/// xi = alpha + column sums of phi.
pub fn update_xi(alpha: &DirichletParam, phi: &Array2<f64>) -> Array1<f64> {
    let mut xi = alpha.values().clone();
    for row in phi.rows() {
        xi += &row;
    }
    xi
}

fn mean_relative_change(prev: &Array1<f64>, next: &Array1<f64>) -> f64 {
    let total: f64 = prev
        .iter()
        .zip(next)
        .map(|(&p, &n)| (n - p).abs() / p.abs().max(1e-10))
        .sum();
    total / prev.len() as f64
}

/// Runs the inner variational loop for one document.
///
/// Starts from uniform responsibilities (xi = alpha + N/K) and stops when
/// the mean relative change in xi falls below `ESTEP_TOL` or after
/// `ESTEP_MAX_ITERS` sweeps, whichever comes first. Hitting the cap is
/// reported through `converged`, not as an error. An empty document has a
/// trivial posterior q(theta) = Dir(alpha) and a zero bound.
pub fn estep_document(
    words: &[usize],
    alpha: &DirichletParam,
    topics: &TopicWordMatrix,
) -> Result<VariationalDoc> {
    let k = topics.num_topics();
    if alpha.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries, topic-word matrix has {k} topics",
            alpha.len()
        )));
    }
    for &w in words {
        if w >= topics.vocab_size() {
            return Err(Error::IndexOutOfRange {
                index: w,
                limit: topics.vocab_size(),
            });
        }
    }

    if words.is_empty() {
        let xi = alpha.values().clone();
        let phi = Array2::zeros((0, k));
        let elbo = elbo_document(words, alpha, &phi, &xi, topics)?;
        return Ok(VariationalDoc {
            phi,
            xi,
            elbo,
            converged: true,
            iterations: 0,
        });
    }

    let n = words.len() as f64;
    let mut xi = alpha.values().mapv(|a| a + n / k as f64);
    let mut phi = Array2::from_elem((words.len(), k), 1.0 / k as f64);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < ESTEP_MAX_ITERS {
        phi = update_phi(words, &xi, topics);
        let next_xi = update_xi(alpha, &phi);
        let change = mean_relative_change(&xi, &next_xi);
        xi = next_xi;
        iterations += 1;
        if change < ESTEP_TOL {
            converged = true;
            break;
        }
    }

    let elbo = elbo_document(words, alpha, &phi, &xi, topics)?;
    Ok(VariationalDoc {
        phi,
        xi,
        elbo,
        converged,
        iterations,
    })
}

/// Evidence lower bound of one document at the given variational state:
///
///   E[log p(theta | alpha)] + E[log p(z | theta)] + E[log p(w | z, beta)]
///     - E[log q(theta)] - E[log q(z)].
pub fn elbo_document(
    words: &[usize],
    alpha: &DirichletParam,
    phi: &Array2<f64>,
    xi: &Array1<f64>,
    topics: &TopicWordMatrix,
) -> Result<f64> {
    let k = topics.num_topics();
    let phi_cols_ok = phi.ncols() == k || words.is_empty();
    if alpha.len() != k || xi.len() != k || !phi_cols_ok {
        return Err(Error::DimensionMismatch(format!(
            "elbo inputs disagree on topic count {k}"
        )));
    }
    if phi.nrows() != words.len() {
        return Err(Error::DimensionMismatch(format!(
            "phi has {} rows for {} words",
            phi.nrows(),
            words.len()
        )));
    }

    let xi_param = DirichletParam::from_array(xi.clone())?;
    let elog_theta = dirichlet_expectation_log(&xi_param);

    let mut bound = elbo_alpha_term(alpha, xi) - elbo_alpha_term(&xi_param, xi);
    for (n, &w) in words.iter().enumerate() {
        for i in 0..k {
            let p = phi[[n, i]];
            if p > 0.0 {
                bound += p * (elog_theta[i] + log_beta_at(topics, i, w) - p.ln());
            }
        }
    }
    Ok(bound)
}

/// Expected word counts per topic, accumulated across documents.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaStats {
    counts: Array2<f64>,
}

impl BetaStats {
    pub fn zeros(num_topics: usize, vocab_size: usize) -> Self {
        Self {
            counts: Array2::zeros((num_topics, vocab_size)),
        }
    }

    /// Adds one document's responsibilities: counts[i][w_n] += phi_ni.
    pub fn accumulate(&mut self, words: &[usize], phi: &Array2<f64>) {
        debug_assert_eq!(phi.nrows(), words.len());
        debug_assert_eq!(phi.ncols(), self.counts.nrows());
        for (n, &w) in words.iter().enumerate() {
            for i in 0..self.counts.nrows() {
                self.counts[[i, w]] += phi[[n, i]];
            }
        }
    }

    /// Adds another accumulator, entry by entry.
    pub fn merge(&mut self, other: &BetaStats) {
        debug_assert_eq!(self.counts.dim(), other.counts.dim());
        self.counts += &other.counts;
    }

    pub fn counts(&self) -> &Array2<f64> {
        &self.counts
    }
}

/// Topic-word update: floor the expected counts and normalize each row.
/// A topic that received no mass comes out uniform.
pub fn mstep_beta(stats: &BetaStats) -> Result<TopicWordMatrix> {
    let mut beta = stats.counts.clone();
    beta += BETA_FLOOR;
    for mut row in beta.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    TopicWordMatrix::new(beta)
}
