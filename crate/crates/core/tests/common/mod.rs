//! Independent oracles for integration tests.
//!
//! These deliberately use different algorithms from the library: digamma
//! and log-gamma by recurrence-shifting to x >= 100 with short asymptotic
//! tails and compensated summation, and exact likelihoods by tanh-sinh
//! quadrature. Agreement between the two code paths is the evidence.

#![allow(dead_code)]

use ndarray::Array2;

/// Compensated (Kahan) accumulator.
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self {
            sum: 0.0,
            carry: 0.0,
        }
    }

    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

/// Digamma by psi(x) = psi(x + n) - sum 1/(x + k), shifted to x >= 100
/// where a four-term asymptotic tail is accurate to ~1e-22.
pub fn digamma_oracle(x: f64) -> f64 {
    assert!(x > 0.0, "digamma oracle needs x > 0, got {x}");
    let mut shift = KahanSum::new();
    let mut y = x;
    while y < 100.0 {
        shift.add(1.0 / y);
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let tail =
        inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0))));
    y.ln() - 0.5 * inv - tail - shift.total()
}

/// Log-gamma by ln G(x) = ln G(x + n) - sum ln(x + k), shifted to x >= 100
/// where the Stirling series through x^-7 is accurate to ~1e-21.
pub fn log_gamma_oracle(x: f64) -> f64 {
    assert!(x > 0.0, "log-gamma oracle needs x > 0, got {x}");
    const HALF_LN_TWO_PI: f64 = 0.918938533204672741780329736405617639;
    let mut shift = KahanSum::new();
    let mut y = x;
    while y < 100.0 {
        shift.add(y.ln());
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let tail =
        inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0))));
    (y - 0.5) * y.ln() - y + HALF_LN_TWO_PI + tail - shift.total()
}

/// Tanh-sinh quadrature of `f` over (0, 1). The integrand receives both x
/// and 1-x, the smaller of which is computed without cancellation, so
/// integrable endpoint singularities stay accurate. Returns the estimate
/// and whether two successive refinements agreed to `rel_tol`.
pub fn tanh_sinh_01<F: Fn(f64, f64) -> f64>(f: F, rel_tol: f64) -> (f64, bool) {
    const U_MAX: f64 = 4.0;
    let mut h = 0.5;
    let mut previous = f64::NAN;
    for _ in 0..10 {
        let n = (U_MAX / h).ceil() as i64;
        let mut sum = KahanSum::new();
        for k in -n..=n {
            let u = k as f64 * h;
            let s = std::f64::consts::FRAC_PI_2 * u.sinh();
            // Distance from the nearer endpoint, exact even when x rounds to 1.
            let near = 1.0 / (1.0 + (2.0 * s.abs()).exp());
            let (x, complement) = if u >= 0.0 {
                (1.0 - near, near)
            } else {
                (near, 1.0 - near)
            };
            let weight = std::f64::consts::FRAC_PI_4 * u.cosh() / (s.cosh() * s.cosh());
            if near <= 0.0 || weight == 0.0 {
                continue;
            }
            sum.add(weight * f(x, complement));
        }
        let value = h * sum.total();
        if !previous.is_nan() && (value - previous).abs() <= rel_tol * value.abs().max(1e-300) {
            return (value, true);
        }
        previous = value;
        h *= 0.5;
    }
    (previous, false)
}

/// Exact log-likelihood of a two-topic document: the topic mixture
/// marginalized by quadrature over theta in (0, 1),
///
///   ln integral Dir(theta; a) prod_n (theta b_{1,w_n} + (1-theta) b_{2,w_n}).
pub fn true_log_likelihood_k2(words: &[usize], alpha: [f64; 2], beta: &Array2<f64>) -> f64 {
    assert_eq!(beta.nrows(), 2);
    let ln_beta_fn = log_gamma_oracle(alpha[0]) + log_gamma_oracle(alpha[1])
        - log_gamma_oracle(alpha[0] + alpha[1]);
    let integrand = |theta: f64, remainder: f64| {
        let mut p = theta.powf(alpha[0] - 1.0) * remainder.powf(alpha[1] - 1.0);
        for &w in words {
            p *= theta * beta[[0, w]] + remainder * beta[[1, w]];
        }
        p
    };
    let (integral, converged) = tanh_sinh_01(integrand, 1e-12);
    assert!(converged, "quadrature did not stabilize");
    integral.ln() - ln_beta_fn
}

/// Central finite differences of `f` at `params`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(params: &[f64], mut f: F, h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let saved = p[i];
        p[i] = saved + h;
        let above = f(&p);
        p[i] = saved - h;
        let below = f(&p);
        p[i] = saved;
        grad[i] = (above - below) / (2.0 * h);
    }
    grad
}

/// Relative disagreement between two gradients, as the L2 norm of the
/// difference over the larger of the two norms.
pub fn gradient_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    diff / norm(analytic).max(norm(numeric)).max(1e-12)
}
