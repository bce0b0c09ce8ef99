mod common;

use common::true_log_likelihood_k2;
use ndarray::Array2;
use nnlda_core::inference::{
    TopicWordMatrix, elbo_document, estep_document, update_phi, update_xi,
};
use nnlda_core::numerics::DirichletParam;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_alpha(rng: &mut ChaCha8Rng, k: usize) -> DirichletParam {
    DirichletParam::new((0..k).map(|_| rng.random_range(0.3..4.0)).collect()).unwrap()
}

fn random_doc(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<usize> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| rng.random_range(0..vocab)).collect()
}

/// Each coordinate sweep maximizes the bound in one block of variables, so
/// evaluating after every sweep must give a non-decreasing sequence.
#[test]
fn coordinate_sweeps_never_decrease_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let k = rng.random_range(2..=6);
        let vocab = rng.random_range(4..=15);
        let topics = TopicWordMatrix::random_init(k, vocab, 500 + case).unwrap();
        let alpha = random_alpha(&mut rng, k);
        let words = random_doc(&mut rng, vocab, 40);

        let n = words.len() as f64;
        let mut xi = alpha.values().mapv(|a| a + n / k as f64);
        let mut previous = f64::NEG_INFINITY;
        for _ in 0..20 {
            let phi = update_phi(&words, &xi, &topics);
            xi = update_xi(&alpha, &phi);
            let bound = elbo_document(&words, &alpha, &phi, &xi, &topics).unwrap();
            assert!(
                bound >= previous - 1e-10 * (1.0 + previous.abs()),
                "bound dropped from {previous} to {bound}"
            );
            previous = bound;
        }
    }
}

/// The variational bound can never exceed the exact marginal likelihood,
/// computed here by numerical quadrature for two topics.
#[test]
fn bound_never_exceeds_true_log_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..60 {
        let vocab = rng.random_range(2..=4);
        let mut beta = Array2::zeros((2, vocab));
        for mut row in beta.rows_mut() {
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = rng.random_range(0.05..1.0);
                total += *v;
            }
            row.mapv_inplace(|v| v / total);
        }
        let topics = TopicWordMatrix::new(beta.clone()).unwrap();
        let a = [rng.random_range(0.4..3.0), rng.random_range(0.4..3.0)];
        let alpha = DirichletParam::new(a.to_vec()).unwrap();
        let words = random_doc(&mut rng, vocab, 3);

        let doc = estep_document(&words, &alpha, &topics).unwrap();
        let exact = true_log_likelihood_k2(&words, a, &beta);
        assert!(
            doc.elbo <= exact + 1e-8,
            "bound {} above exact log-likelihood {exact}",
            doc.elbo
        );
    }
}

/// After the inner loop reports convergence, one more sweep should barely
/// move the bound.
#[test]
fn converged_state_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..30 {
        let k = rng.random_range(2..=5);
        let vocab = rng.random_range(5..=12);
        let topics = TopicWordMatrix::random_init(k, vocab, 900 + case).unwrap();
        let alpha = random_alpha(&mut rng, k);
        let words = random_doc(&mut rng, vocab, 25);

        let doc = estep_document(&words, &alpha, &topics).unwrap();
        assert!(doc.converged, "inner loop hit the sweep cap");

        let phi = update_phi(&words, &doc.xi, &topics);
        let xi = update_xi(&alpha, &phi);
        let refined = elbo_document(&words, &alpha, &phi, &xi, &topics).unwrap();
        assert!(refined >= doc.elbo - 1e-12);
        assert!((refined - doc.elbo).abs() < 1e-4 * (1.0 + doc.elbo.abs()));
    }
}

/// xi keeps total mass sum(alpha) + N through every sweep.
#[test]
fn xi_mass_is_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for case in 0..30 {
        let k = rng.random_range(2..=6);
        let vocab = rng.random_range(4..=10);
        let topics = TopicWordMatrix::random_init(k, vocab, 1300 + case).unwrap();
        let alpha = random_alpha(&mut rng, k);
        let words = random_doc(&mut rng, vocab, 30);

        let doc = estep_document(&words, &alpha, &topics).unwrap();
        let expected = alpha.sum() + words.len() as f64;
        assert!((doc.xi.sum() - expected).abs() < 1e-9 * expected);
    }
}
