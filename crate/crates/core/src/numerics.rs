//! Special functions and validated probability vectors.
//!
//! `digamma` and `log_gamma` are implemented in-repo so their accuracy is
//! pinned by this crate's own tests rather than by an external dependency.

use ndarray::Array1;

use crate::error::{Error, Result};

/// Digamma function for x > 0.
///
/// Uses the recurrence psi(x) = psi(x+1) - 1/x to shift the argument to
/// x >= 6, then the asymptotic series with Bernoulli terms through x^-12.
/// Absolute error is below 1e-10 on [1e-3, 1e3].
pub fn digamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_raw(x))
}

pub(crate) fn digamma_raw(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * inv - tail
}

// Lanczos approximation (g = 10.900511, 11 terms), accurate to ~1e-14
// relative over the positive axis.
const LANCZOS_R: f64 = 10.900511;
// Published table; keep the digits verbatim.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 11] = [
    2.48574089138753565546e-5,
    1.05142378581721974210,
    -3.45687097222016235469,
    4.51227709466894823700,
    -2.98285225323576655721,
    1.05639711577126713077,
    -1.95428773191645869583e-1,
    1.70970543404441224307e-2,
    -5.71926117404305781283e-4,
    4.63399473359905636708e-6,
    -2.71994908488607703910e-9,
];
// ln(2 * sqrt(e / pi))
const LN_2_SQRT_E_OVER_PI: f64 = 0.6207822376352452223455184457816472122518527279025978;

/// Natural log of the gamma function for x > 0. Relative error <= 1e-12.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(log_gamma_raw(x))
}

pub(crate) fn log_gamma_raw(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    // ln Gamma(x) = ln Gamma(x + 1) - ln x keeps the Lanczos core on x >= 0.5
    // where it is most accurate.
    if x < 0.5 {
        return log_gamma_raw(x + 1.0) - x.ln();
    }
    let mut s = LANCZOS[0];
    for (i, &d) in LANCZOS.iter().enumerate().skip(1) {
        s += d / (x - 1.0 + i as f64);
    }
    (x - 0.5) * ((x - 0.5 + LANCZOS_R) / std::f64::consts::E).ln() + LN_2_SQRT_E_OVER_PI + s.ln()
}

/// Max-shifted log of a sum of exponentials. Returns -inf for an input of
/// all -inf values.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Concentration parameter of a Dirichlet distribution: finite, strictly
/// positive entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParam(Array1<f64>);

impl DirichletParam {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_array(Array1::from_vec(values))
    }

    pub fn from_array(values: Array1<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain(
                "Dirichlet parameter must be non-empty".into(),
            ));
        }
        for &v in &values {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "Dirichlet parameter entries must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn symmetric(len: usize, value: f64) -> Result<Self> {
        Self::from_array(Array1::from_elem(len, value))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sum(&self) -> f64 {
        self.0.sum()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// A point on the probability simplex: non-negative entries summing to one
/// within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Array1<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::from_array(Array1::from_vec(values))
    }

    pub fn from_array(values: Array1<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("probability vector must be non-empty".into()));
        }
        let mut sum = 0.0;
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "probability entries must be finite and non-negative, got {v}"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "probabilities must sum to 1 (got {sum})"
            )));
        }
        Ok(Self(values))
    }

    /// Normalizes a non-negative vector with positive total mass.
    pub fn from_unnormalized(mut values: Array1<f64>) -> Result<Self> {
        let sum = values.sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::Domain(format!(
                "cannot normalize a vector with total mass {sum}"
            )));
        }
        values /= sum;
        Self::from_array(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("contiguous")
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// Log density of Dirichlet(alpha) at theta.
///
/// theta must lie on the simplex (sum within 1e-9 of one). A zero component
/// is allowed only when the matching concentration is >= 1; below 1 the
/// density diverges and the point is rejected.
pub fn log_dirichlet_density(theta: &[f64], alpha: &DirichletParam) -> Result<f64> {
    if theta.len() != alpha.len() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, alpha has {}",
            theta.len(),
            alpha.len()
        )));
    }
    let mut sum = 0.0;
    for &t in theta {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!(
                "theta entries must be finite and non-negative, got {t}"
            )));
        }
        sum += t;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("theta must sum to 1 (got {sum})")));
    }

    let total = alpha.sum();
    let mut log_density = log_gamma_raw(total);
    for (&t, &a) in theta.iter().zip(alpha.values()) {
        log_density -= log_gamma_raw(a);
        if t == 0.0 {
            if a < 1.0 {
                return Err(Error::Domain(
                    "density diverges at a zero component with concentration below one".into(),
                ));
            }
            if a > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            // a == 1: the factor is exactly 1, contributes nothing.
        } else {
            log_density += (a - 1.0) * t.ln();
        }
    }
    Ok(log_density)
}

/// E[log theta_i] under Dirichlet(alpha): psi(alpha_i) - psi(sum alpha).
pub fn dirichlet_expectation_log(alpha: &DirichletParam) -> Array1<f64> {
    let psi_total = digamma_raw(alpha.sum());
    alpha.values().mapv(|a| digamma_raw(a) - psi_total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const EULER: f64 = 0.5772156649015329;

    #[test]
    fn digamma_at_known_points() {
        // psi(1) = -gamma, psi(0.5) = -gamma - 2 ln 2.
        assert_relative_eq!(digamma(1.0).unwrap(), -EULER, epsilon = 1e-10);
        assert_relative_eq!(
            digamma(0.5).unwrap(),
            -EULER - 2.0 * std::f64::consts::LN_2,
            epsilon = 1e-10
        );
        // psi(2) = 1 - gamma.
        assert_relative_eq!(digamma(2.0).unwrap(), 1.0 - EULER, epsilon = 1e-10);
    }

    #[test]
    fn digamma_rejects_non_positive() {
        assert!(matches!(digamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(digamma(-3.5), Err(Error::Domain(_))));
        assert!(matches!(digamma(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn log_gamma_at_known_points() {
        assert_relative_eq!(log_gamma(1.0).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(log_gamma(2.0).unwrap(), 0.0, epsilon = 1e-12);
        // ln Gamma(0.5) = ln sqrt(pi).
        assert_relative_eq!(
            log_gamma(0.5).unwrap(),
            0.5 * std::f64::consts::PI.ln(),
            epsilon = 1e-12
        );
        // Gamma(10) = 9! = 362880 exactly representable.
        assert_relative_eq!(
            log_gamma(10.0).unwrap(),
            362880.0_f64.ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn log_gamma_rejects_non_positive() {
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn log_sum_exp_basics() {
        assert_relative_eq!(
            log_sum_exp(&[0.0, 0.0]),
            std::f64::consts::LN_2,
            epsilon = 1e-12
        );
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        assert_relative_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0, epsilon = 1e-12);
        // Large magnitudes must not overflow.
        assert_relative_eq!(
            log_sum_exp(&[1000.0, 1000.0]),
            1000.0 + std::f64::consts::LN_2,
            epsilon = 1e-9
        );
    }

    #[test]
    fn dirichlet_density_known_values() {
        // Uniform density over the K-simplex is Gamma(K): ln 2 for K = 3.
        let alpha = DirichletParam::new(vec![1.0, 1.0, 1.0]).unwrap();
        let v = log_dirichlet_density(&[0.2, 0.3, 0.5], &alpha).unwrap();
        assert_relative_eq!(v, 2.0_f64.ln(), epsilon = 1e-12);

        // Dir(2,2) at the midpoint: Gamma(4)/(Gamma(2)^2) * 0.25 = 1.5.
        let alpha = DirichletParam::new(vec![2.0, 2.0]).unwrap();
        let v = log_dirichlet_density(&[0.5, 0.5], &alpha).unwrap();
        assert_relative_eq!(v, 1.5_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dirichlet_density_boundary_and_validation() {
        let alpha = DirichletParam::new(vec![0.5, 2.0]).unwrap();
        assert!(matches!(
            log_dirichlet_density(&[0.0, 1.0], &alpha),
            Err(Error::Domain(_))
        ));

        // alpha_i = 1 tolerates a zero component.
        let alpha = DirichletParam::new(vec![1.0, 2.0]).unwrap();
        let v = log_dirichlet_density(&[0.0, 1.0], &alpha).unwrap();
        assert!(v.is_finite());

        // alpha_i > 1 gives zero density there.
        let alpha = DirichletParam::new(vec![2.0, 2.0]).unwrap();
        assert_eq!(
            log_dirichlet_density(&[0.0, 1.0], &alpha).unwrap(),
            f64::NEG_INFINITY
        );

        let alpha = DirichletParam::new(vec![1.0, 1.0]).unwrap();
        assert!(log_dirichlet_density(&[0.6, 0.6], &alpha).is_err());
        assert!(log_dirichlet_density(&[0.5], &alpha).is_err());
    }

    #[test]
    fn dirichlet_expectation_exact_values() {
        // psi(1) - psi(2) = -1 exactly.
        let alpha = DirichletParam::new(vec![1.0, 1.0]).unwrap();
        let e = dirichlet_expectation_log(&alpha);
        assert_relative_eq!(e[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(e[1], -1.0, epsilon = 1e-12);

        // For alpha = (2, 1): psi(2) - psi(3) = -1/2, psi(1) - psi(3) = -3/2.
        let alpha = DirichletParam::new(vec![2.0, 1.0]).unwrap();
        let e = dirichlet_expectation_log(&alpha);
        assert_relative_eq!(e[0], -0.5, epsilon = 1e-12);
        assert_relative_eq!(e[1], -1.5, epsilon = 1e-12);
    }

    #[test]
    fn param_validation() {
        assert!(DirichletParam::new(vec![]).is_err());
        assert!(DirichletParam::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParam::new(vec![1.0, -2.0]).is_err());
        assert!(DirichletParam::new(vec![1.0, f64::INFINITY]).is_err());

        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![0.6, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        let p = ProbVector::from_unnormalized(Array1::from_vec(vec![2.0, 6.0])).unwrap();
        assert_relative_eq!(p.values()[0], 0.25, epsilon = 1e-12);
    }

    fn log_uniform() -> impl Strategy<Value = f64> {
        // x in [1e-3, 1e3], log-uniform.
        (-3.0_f64..3.0).prop_map(|e| 10f64.powf(e))
    }

    proptest! {
        #[test]
        fn digamma_recurrence(x in log_uniform()) {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn log_gamma_recurrence(x in log_uniform()) {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = log_gamma(x).unwrap() + x.ln();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn digamma_is_monotone(x in log_uniform(), step in 1e-3_f64..10.0) {
            prop_assert!(digamma(x + step).unwrap() > digamma(x).unwrap());
        }

        #[test]
        fn log_sum_exp_shift_invariant(
            values in proptest::collection::vec(-50.0_f64..50.0, 1..8),
            shift in -100.0_f64..100.0,
        ) {
            let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
            let a = log_sum_exp(&values) + shift;
            let b = log_sum_exp(&shifted);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn dirichlet_expectation_is_negative(
            raw in proptest::collection::vec(0.05_f64..50.0, 2..6)
        ) {
            let alpha = DirichletParam::new(raw).unwrap();
            for &e in dirichlet_expectation_log(&alpha).iter() {
                // E[log theta] < 0 since theta < 1 almost surely.
                prop_assert!(e < 0.0);
            }
        }
    }
}
