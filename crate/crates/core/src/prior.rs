//! Document-level Dirichlet priors.
//!
//! Three interchangeable models produce the per-document concentration
//! alpha_d from the side vector s_d:
//!
//! * `Fixed` — a constant alpha, ignoring side data (plain LDA).
//! * `Dmr` — log-linear: alpha_k = exp(lambda_k . [s; 1]).
//! * `Neural` — a two-layer perceptron with ReLU hidden units and a
//!   softplus output shifted by a small floor.
//!
//! The trainable models maximize the alpha-dependent part of the evidence
//! lower bound over frozen variational statistics, by Adam ascent with
//! decoupled weight decay.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DirichletParam, digamma_raw, log_gamma_raw};

/// Hidden layer width of the neural prior.
pub const HIDDEN_WIDTH: usize = 20;
/// Additive floor keeping neural prior outputs strictly positive.
pub const ALPHA_FLOOR: f64 = 1e-3;
/// DMR exponents are clipped here so alpha stays finite.
const DMR_EXPONENT_CLIP: f64 = 30.0;

/// One frozen training example: the side vector and the variational
/// Dirichlet parameter the E-step produced for that document.
pub type PriorExample<'a> = (&'a [f64], &'a Array1<f64>);

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    // Inverse of ln(1 + e^x): x = y + ln(1 - e^-y).
    y + (-(-y).exp()).ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The part of the per-document evidence lower bound that depends on alpha,
/// with the variational parameter xi held fixed:
///
/// ln Gamma(sum alpha) - sum ln Gamma(alpha_i)
///   + sum (alpha_i - 1) (psi(xi_i) - psi(sum xi)).
pub fn elbo_alpha_term(alpha: &DirichletParam, xi: &Array1<f64>) -> f64 {
    debug_assert_eq!(alpha.len(), xi.len());
    let psi_xi_total = digamma_raw(xi.sum());
    let mut value = log_gamma_raw(alpha.sum());
    for (&a, &x) in alpha.values().iter().zip(xi) {
        value -= log_gamma_raw(a);
        value += (a - 1.0) * (digamma_raw(x) - psi_xi_total);
    }
    value
}

/// Gradient of `elbo_alpha_term` with respect to alpha:
/// psi(sum alpha) - psi(alpha_i) + psi(xi_i) - psi(sum xi).
pub fn grad_elbo_wrt_alpha(alpha: &DirichletParam, xi: &Array1<f64>) -> Result<Array1<f64>> {
    if alpha.len() != xi.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries, xi has {}",
            alpha.len(),
            xi.len()
        )));
    }
    let psi_alpha_total = digamma_raw(alpha.sum());
    let psi_xi_total = digamma_raw(xi.sum());
    // Terms are paired so the gradient is exactly zero at xi = alpha.
    Ok(Array1::from_iter(alpha.values().iter().zip(xi).map(
        |(&a, &x)| (psi_alpha_total - psi_xi_total) + (digamma_raw(x) - digamma_raw(a)),
    )))
}

/// Adam hyperparameters. Weight decay is decoupled: it shrinks the
/// parameters directly instead of entering the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.1,
            batch_size: 64,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid Adam configuration".into()))
        }
    }
}

/// First/second moment buffers plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One ascent step: params += lr * m_hat / (sqrt(v_hat) + eps), followed
    /// by the decoupled decay params -= lr * wd * params (pre-step values).
    fn ascend(&mut self, params: &mut [f64], grad: &[f64], cfg: &AdamConfig) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let ascent = cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            let decay = cfg.learning_rate * cfg.weight_decay * params[i];
            params[i] += ascent;
            params[i] -= decay;
        }
    }
}

/// Constant prior shared by every document.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPrior {
    pub alpha: DirichletParam,
}

/// Log-linear prior: alpha_k = exp(lambda_k . [s; 1]).
/// `lambda` is row-major K x (q + 1); the last column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DmrPrior {
    pub num_topics: usize,
    pub side_dim: usize,
    pub lambda: Vec<f64>,
    pub adam: AdamState,
}

impl DmrPrior {
    pub fn new(side_dim: usize, num_topics: usize) -> Self {
        let len = num_topics * (side_dim + 1);
        Self {
            num_topics,
            side_dim,
            lambda: vec![0.0; len],
            adam: AdamState::new(len),
        }
    }

    fn exponents(&self, s: &[f64]) -> Vec<f64> {
        let cols = self.side_dim + 1;
        (0..self.num_topics)
            .map(|k| {
                let row = &self.lambda[k * cols..(k + 1) * cols];
                let dot: f64 = row[..self.side_dim]
                    .iter()
                    .zip(s)
                    .map(|(&l, &x)| l * x)
                    .sum::<f64>()
                    + row[self.side_dim];
                dot.clamp(-DMR_EXPONENT_CLIP, DMR_EXPONENT_CLIP)
            })
            .collect()
    }
}

/// Two-layer perceptron prior. Parameters are stored flat as
/// `[w1 (hidden x q) | b1 (hidden) | w2 (K x hidden) | b2 (K)]`, both for the
/// optimizer and for checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralPrior {
    pub side_dim: usize,
    pub num_topics: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
    pub adam: AdamState,
}

impl NeuralPrior {
    fn param_len(side_dim: usize, num_topics: usize, hidden: usize) -> usize {
        hidden * side_dim + hidden + num_topics * hidden + num_topics
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.side_dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.num_topics * self.hidden;
        (b1, w2, b2)
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.hidden * self.side_dim]
    }

    pub fn b1(&self) -> &[f64] {
        let (b1, w2, _) = self.offsets();
        &self.params[b1..w2]
    }

    pub fn w2(&self) -> &[f64] {
        let (_, w2, b2) = self.offsets();
        &self.params[w2..b2]
    }

    pub fn b2(&self) -> &[f64] {
        let (_, _, b2) = self.offsets();
        &self.params[b2..]
    }

    /// Forward pass returning the hidden pre-activation, the hidden
    /// activation, the output pre-activation, and alpha.
    fn forward(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Array1<f64>) {
        debug_assert_eq!(s.len(), self.side_dim);
        let (b1_off, w2_off, b2_off) = self.offsets();
        let q = self.side_dim;

        let mut z1 = vec![0.0; self.hidden];
        for (j, z) in z1.iter_mut().enumerate() {
            let row = &self.params[j * q..(j + 1) * q];
            *z = self.params[b1_off + j] + row.iter().zip(s).map(|(&w, &x)| w * x).sum::<f64>();
        }
        let h: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();

        let mut a = vec![0.0; self.num_topics];
        for (k, out) in a.iter_mut().enumerate() {
            let row = &self.params[w2_off + k * self.hidden..w2_off + (k + 1) * self.hidden];
            *out = self.params[b2_off + k] + row.iter().zip(&h).map(|(&w, &x)| w * x).sum::<f64>();
        }
        let alpha = Array1::from_iter(a.iter().map(|&x| softplus(x) + ALPHA_FLOOR));
        (z1, h, a, alpha)
    }
}

/// Kaiming-initialized neural prior: weights ~ N(0, 2 / fan_in), biases zero.
pub fn init_neural(side_dim: usize, num_topics: usize, seed: u64) -> NeuralPrior {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    let hidden = HIDDEN_WIDTH;
    let mut params = vec![0.0; NeuralPrior::param_len(side_dim, num_topics, hidden)];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    if side_dim > 0 {
        let dist = Normal::new(0.0, (2.0 / side_dim as f64).sqrt()).expect("valid std");
        for w in params.iter_mut().take(hidden * side_dim) {
            *w = dist.sample(&mut rng);
        }
    }
    let w2_off = hidden * side_dim + hidden;
    let dist = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("valid std");
    for w in params.iter_mut().skip(w2_off).take(num_topics * hidden) {
        *w = dist.sample(&mut rng);
    }

    let len = params.len();
    NeuralPrior {
        side_dim,
        num_topics,
        hidden,
        params,
        adam: AdamState::new(len),
    }
}

/// Neural prior that outputs `alpha_star` for every input: all weights zero,
/// output biases set to softplus^-1(alpha_star - floor). Each entry of
/// `alpha_star` must exceed the floor.
pub fn init_constant(side_dim: usize, alpha_star: &DirichletParam) -> Result<NeuralPrior> {
    let hidden = HIDDEN_WIDTH;
    let num_topics = alpha_star.len();
    let mut params = vec![0.0; NeuralPrior::param_len(side_dim, num_topics, hidden)];
    let b2_off = hidden * side_dim + hidden + num_topics * hidden;
    for (i, &a) in alpha_star.values().iter().enumerate() {
        if a <= ALPHA_FLOOR {
            return Err(Error::Domain(format!(
                "constant initialization needs alpha > {ALPHA_FLOOR}, got {a}"
            )));
        }
        params[b2_off + i] = softplus_inv(a - ALPHA_FLOOR);
    }
    let len = params.len();
    Ok(NeuralPrior {
        side_dim,
        num_topics,
        hidden,
        params,
        adam: AdamState::new(len),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorModel {
    Fixed(FixedPrior),
    Dmr(DmrPrior),
    Neural(NeuralPrior),
}

impl PriorModel {
    pub fn fixed(alpha: DirichletParam) -> Self {
        Self::Fixed(FixedPrior { alpha })
    }

    pub fn num_topics(&self) -> usize {
        match self {
            Self::Fixed(p) => p.alpha.len(),
            Self::Dmr(p) => p.num_topics,
            Self::Neural(p) => p.num_topics,
        }
    }

    /// Side dimension the model expects; `None` for the fixed prior, which
    /// ignores side data entirely.
    pub fn side_dim(&self) -> Option<usize> {
        match self {
            Self::Fixed(_) => None,
            Self::Dmr(p) => Some(p.side_dim),
            Self::Neural(p) => Some(p.side_dim),
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, Self::Fixed(_))
    }

    /// The document prior for side vector `s`. Strictly positive and finite
    /// for any finite input.
    pub fn alpha_for(&self, s: &[f64]) -> Result<DirichletParam> {
        if let Some(q) = self.side_dim()
            && s.len() != q
        {
            return Err(Error::DimensionMismatch(format!(
                "side vector has {} entries, prior expects {q}",
                s.len()
            )));
        }
        match self {
            Self::Fixed(p) => Ok(p.alpha.clone()),
            Self::Dmr(p) => DirichletParam::from_array(Array1::from_iter(
                p.exponents(s).iter().map(|&e| e.exp()),
            )),
            Self::Neural(p) => {
                let (_, _, _, alpha) = p.forward(s);
                DirichletParam::from_array(alpha)
            }
        }
    }

    /// Sum of `elbo_alpha_term` over a batch, without touching parameters.
    pub fn batch_objective(&self, batch: &[PriorExample<'_>]) -> Result<f64> {
        let mut total = 0.0;
        for &(s, xi) in batch {
            let alpha = self.alpha_for(s)?;
            if alpha.len() != xi.len() {
                return Err(Error::DimensionMismatch(format!(
                    "xi has {} entries, prior produces {}",
                    xi.len(),
                    alpha.len()
                )));
            }
            total += elbo_alpha_term(&alpha, xi);
        }
        Ok(total)
    }

    /// Batch objective and its gradient with respect to the flat parameter
    /// vector. The fixed prior has no parameters and returns an empty
    /// gradient.
    pub fn batch_gradient(&self, batch: &[PriorExample<'_>]) -> Result<(f64, Vec<f64>)> {
        match self {
            Self::Fixed(_) => Ok((self.batch_objective(batch)?, Vec::new())),
            Self::Dmr(p) => dmr_batch_gradient(p, batch),
            Self::Neural(p) => neural_batch_gradient(p, batch),
        }
    }

    /// One Adam ascent step on the batch objective. Returns the objective
    /// evaluated before the step. Parameters are left untouched when the
    /// gradient is non-finite.
    pub fn backward_and_step(
        &mut self,
        batch: &[PriorExample<'_>],
        cfg: &AdamConfig,
    ) -> Result<f64> {
        let (objective, grad) = self.batch_gradient(batch)?;
        match self {
            Self::Fixed(_) => {}
            Self::Dmr(p) => p.adam.ascend(&mut p.lambda, &grad, cfg),
            Self::Neural(p) => p.adam.ascend(&mut p.params, &grad, cfg),
        }
        Ok(objective)
    }
}

fn check_finite(grad: &[f64], what: &str) -> Result<()> {
    if grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteGradient(what.into()))
    }
}

fn dmr_batch_gradient(p: &DmrPrior, batch: &[PriorExample<'_>]) -> Result<(f64, Vec<f64>)> {
    let cols = p.side_dim + 1;
    let mut grad = vec![0.0; p.lambda.len()];
    let mut total = 0.0;

    for &(s, xi) in batch {
        if s.len() != p.side_dim {
            return Err(Error::DimensionMismatch(format!(
                "side vector has {} entries, prior expects {}",
                s.len(),
                p.side_dim
            )));
        }
        if xi.len() != p.num_topics {
            return Err(Error::DimensionMismatch(format!(
                "xi has {} entries, prior produces {}",
                xi.len(),
                p.num_topics
            )));
        }
        let exponents = p.exponents(s);
        let alpha_arr = Array1::from_iter(exponents.iter().map(|&e| e.exp()));
        let alpha = DirichletParam::from_array(alpha_arr.clone())?;
        total += elbo_alpha_term(&alpha, xi);
        let d_alpha = grad_elbo_wrt_alpha(&alpha, xi)?;
        for k in 0..p.num_topics {
            // d alpha_k / d lambda_kj = alpha_k * [s; 1]_j, zero past the clip.
            if exponents[k].abs() >= DMR_EXPONENT_CLIP {
                continue;
            }
            let scale = d_alpha[k] * alpha_arr[k];
            let row = &mut grad[k * cols..(k + 1) * cols];
            for (g, &x) in row[..p.side_dim].iter_mut().zip(s) {
                *g += scale * x;
            }
            row[p.side_dim] += scale;
        }
    }
    check_finite(&grad, "log-linear prior update")?;
    if !total.is_finite() {
        return Err(Error::NonFiniteGradient(
            "log-linear prior objective".into(),
        ));
    }
    Ok((total, grad))
}

fn neural_batch_gradient(p: &NeuralPrior, batch: &[PriorExample<'_>]) -> Result<(f64, Vec<f64>)> {
    let (b1_off, w2_off, b2_off) = p.offsets();
    let q = p.side_dim;
    let mut grad = vec![0.0; p.params.len()];
    let mut total = 0.0;

    for &(s, xi) in batch {
        if s.len() != q {
            return Err(Error::DimensionMismatch(format!(
                "side vector has {} entries, prior expects {q}",
                s.len()
            )));
        }
        if xi.len() != p.num_topics {
            return Err(Error::DimensionMismatch(format!(
                "xi has {} entries, prior produces {}",
                xi.len(),
                p.num_topics
            )));
        }
        let (z1, h, a, alpha_arr) = p.forward(s);
        let alpha = DirichletParam::from_array(alpha_arr)?;
        total += elbo_alpha_term(&alpha, xi);
        let d_alpha = grad_elbo_wrt_alpha(&alpha, xi)?;

        // Backprop: softplus'(a) = sigmoid(a); ReLU' taken as zero at zero.
        let mut d_h = vec![0.0; p.hidden];
        for k in 0..p.num_topics {
            let d_a = d_alpha[k] * sigmoid(a[k]);
            grad[b2_off + k] += d_a;
            let w2_row = &p.params[w2_off + k * p.hidden..w2_off + (k + 1) * p.hidden];
            let g2_row = &mut grad[w2_off + k * p.hidden..w2_off + (k + 1) * p.hidden];
            for j in 0..p.hidden {
                g2_row[j] += d_a * h[j];
                d_h[j] += d_a * w2_row[j];
            }
        }
        for j in 0..p.hidden {
            if z1[j] > 0.0 {
                grad[b1_off + j] += d_h[j];
                let g1_row = &mut grad[j * q..(j + 1) * q];
                for (g, &x) in g1_row.iter_mut().zip(s) {
                    *g += d_h[j] * x;
                }
            }
        }
    }
    check_finite(&grad, "neural prior update")?;
    if !total.is_finite() {
        return Err(Error::NonFiniteGradient("neural prior objective".into()));
    }
    Ok((total, grad))
}
