//! Entropy objective and its diagnostic identities.
//!
//! The dataset embeds into a covariance operator whose spectrum equals that of
//! `(1/M) K_D`, so its Rényi-2 entropy is computable without an
//! eigendecomposition: `S2 = -ln ||(1/M) K_D||_F²`. The training loss is the
//! negated entropy (MDKE), optionally plus an `epsilon`-weighted negative
//! log-determinant that keeps small eigenvalues from collapsing (MDKE-R).
//!
//! The distributional variance `V = (1/M) tr G - (1/M²) ΣΣ G_ij` of the
//! mean-embedding Gram admits two more routes: the gap between the average
//! squared embedding norm and the squared mixture norm, and half the average
//! pairwise squared embedding distance. All three are computed through
//! different expression trees and checked against each other. For a Gaussian
//! distribution kernel with bandwidth `g2`, the entropy obeys
//! `S2 <= 2·g2·V` (natural log).

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{mean_inner, GramKind, GramMatrix, KernelFamily};
use crate::mat;

/// `ΣΣ (K_ij / M)²` accumulated in row-major order.
pub(crate) fn normalized_frobenius_sq(k: &DMatrix<f64>) -> f64 {
    let m = k.nrows() as f64;
    let mut acc = 0.0;
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let v = k[(i, j)];
            acc += v * v;
        }
    }
    acc / (m * m)
}

pub(crate) fn renyi2_raw(k: &DMatrix<f64>) -> f64 {
    -normalized_frobenius_sq(k).ln()
}

/// Rényi-2 entropy of `(1/M) K_D`, in nats.
pub fn renyi2_entropy(k: &GramMatrix) -> f64 {
    renyi2_raw(k.values())
}

/// The MDKE training loss: `ln ||(1/M) K_D||_F²`, the exact negation of
/// [`renyi2_entropy`].
pub fn mdke_loss(k: &GramMatrix) -> f64 {
    -renyi2_entropy(k)
}

/// Successful triangular factorization of `(1/M) K + jitter·I`.
pub(crate) struct Factorized {
    /// `-ln det((1/M) K + jitter·I)`.
    pub log_det_reg: f64,
    /// The jitter that actually succeeded.
    pub effective_jitter: f64,
    pub cholesky: nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>,
}

/// Factor `(1/M) K + jitter·I`, escalating the jitter by a factor of 10 up to
/// three times if the factorization fails (a zero jitter escalates from 1e-8).
pub(crate) fn factorize_normalized(k: &DMatrix<f64>, jitter: f64) -> Result<Factorized> {
    let m = k.nrows() as f64;
    let scaled = k / m;
    let mut attempt_jitter = jitter;
    for retry in 0..4 {
        let mut shifted = scaled.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += attempt_jitter;
        }
        if let Some(cholesky) = shifted.cholesky() {
            let mut log_det = 0.0;
            let l = cholesky.l_dirty();
            for i in 0..k.nrows() {
                log_det += l[(i, i)].ln();
            }
            return Ok(Factorized {
                log_det_reg: -2.0 * log_det,
                effective_jitter: attempt_jitter,
                cholesky,
            });
        }
        if retry < 3 {
            attempt_jitter = if attempt_jitter == 0.0 { 1e-8 } else { attempt_jitter * 10.0 };
        }
    }
    Err(Error::Factorization(format!(
        "gram matrix is numerically non-PSD even with jitter {attempt_jitter:.1e}"
    )))
}

/// Log-determinant regularizer `Ω = -ln det((1/M) K_D)`, computed through a
/// jittered triangular factorization.
pub fn logdet_regularizer(k: &GramMatrix, jitter: f64) -> Result<f64> {
    Ok(factorize_normalized(k.values(), jitter)?.log_det_reg)
}

/// Regularized loss `L = mdke_loss + epsilon·Ω`. Reduces to [`mdke_loss`] at
/// `epsilon = 0`.
pub fn mdke_r_loss(k: &GramMatrix, epsilon: f64, jitter: f64) -> Result<f64> {
    assert!(epsilon >= 0.0, "epsilon must be nonnegative");
    if epsilon == 0.0 {
        return Ok(mdke_loss(k));
    }
    Ok(mdke_loss(k) + epsilon * logdet_regularizer(k, jitter)?)
}

/// Distributional variance computed along three independent routes, plus the
/// norm terms of the gap decomposition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VarianceTriple {
    /// `(1/M) tr G - (1/M²) ΣΣ G_ij`.
    pub v_gram: f64,
    /// Average squared embedding norm minus squared mixture norm.
    pub v_gap: f64,
    /// Half the average pairwise squared embedding distance.
    pub j_half: f64,
    /// `(1/M) Σ G_ii`.
    pub avg_sq_norm: f64,
    /// `(1/M²) ΣΣ G_ij`.
    pub mixture_sq_norm: f64,
}

/// Compute the variance triple from a mean-embedding Gram.
pub fn distributional_variance(g: &GramMatrix) -> VarianceTriple {
    variance_from_raw(g.values())
}

pub(crate) fn variance_from_raw(gv: &DMatrix<f64>) -> VarianceTriple {
    let m = gv.nrows();
    let mf = m as f64;

    // route 1: trace and total sum in one pass
    let mut trace = 0.0;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            total += gv[(i, j)];
        }
        trace += gv[(i, i)];
    }
    let v_gram = trace / mf - total / (mf * mf);

    // route 2: norm-gap decomposition (mean of diagonal, mean of row means)
    let mut avg_sq_norm = 0.0;
    for i in 0..m {
        avg_sq_norm += gv[(i, i)] / mf;
    }
    let mut mixture_sq_norm = 0.0;
    for i in 0..m {
        let mut row_mean = 0.0;
        for j in 0..m {
            row_mean += gv[(i, j)];
        }
        mixture_sq_norm += row_mean / mf / mf;
    }
    let v_gap = avg_sq_norm - mixture_sq_norm;

    // route 3: half the mean pairwise squared distance
    let mut j_acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            j_acc += gv[(i, i)] + gv[(j, j)] - 2.0 * gv[(i, j)];
        }
    }
    let j_half = j_acc / (2.0 * mf * mf);

    VarianceTriple {
        v_gram,
        v_gap,
        j_half,
        avg_sq_norm,
        mixture_sq_norm,
    }
}

/// Entropy-vs-variance bound report: `lhs = S2/(2·g2)`, `rhs = V`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// Check `S2 <= 2·g2·V` for a Gaussian distribution kernel built from the
/// same mean-embedding Gram. Other families reject: the bound is proved for
/// the Gaussian family only.
pub fn entropy_bound_check(k: &GramMatrix, g: &GramMatrix, gamma2: f64) -> Result<BoundReport> {
    if k.kind() != GramKind::DistributionKernel(KernelFamily::Gaussian) {
        return Err(Error::FamilyMismatch(format!(
            "entropy bound requires a gaussian distribution kernel, got {:?}",
            k.kind()
        )));
    }
    if k.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{} but G is {}x{}",
            k.len(),
            k.len(),
            g.len(),
            g.len()
        )));
    }
    let lhs = renyi2_entropy(k) / (2.0 * gamma2);
    let rhs = distributional_variance(g).v_gram;
    Ok(BoundReport {
        lhs,
        rhs,
        slack: rhs - lhs,
    })
}

/// Generalized variance of one encoded distribution in the embedding RKHS,
/// along two routes that agree algebraically:
/// the kernel expansion of `E||phi(x) - mu||²`, and `1 - ||mu||²`.
pub fn generalized_variance(p_enc: &Array2<f64>, gamma1: f64) -> (f64, f64) {
    let n = p_enc.nrows();
    let nf = n as f64;
    let norm_sq = mean_inner(p_enc, p_enc, gamma1);

    // E||phi(x) - mu||² expanded per sample: k(x,x) - (2/N) Σ_b k(x, x_b),
    // then + ||mu||²
    let mut acc = 0.0;
    for a in 0..n {
        let za = mat::row(p_enc, a);
        let mut cross = 0.0;
        for b in 0..n {
            cross += crate::kernels::embedding_kernel(za, mat::row(p_enc, b), gamma1);
        }
        acc += crate::kernels::embedding_kernel(za, za, gamma1) - 2.0 * cross / nf;
    }
    let var_h = acc / nf + norm_sq;
    let one_minus_norm = 1.0 - norm_sq;
    (var_h, one_minus_norm)
}

/// Descending eigenvalues of `(1/M) K_D`.
pub fn spectrum_report(k: &GramMatrix) -> Vec<f64> {
    k.normalized_eigenvalues()
}

/// Full diagnostic bundle over a dataset's mean-embedding Gram `G` and
/// distribution-kernel Gram `K_D`.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    /// Rényi-2 entropy in nats.
    pub s2_nats: f64,
    /// The same entropy in bits (display only).
    pub s2_bits: f64,
    pub v_gram: f64,
    pub v_gap: f64,
    pub j_half: f64,
    /// `2·g2·V`; an upper bound on `s2_nats` for the Gaussian family.
    pub bound_rhs: f64,
    pub bound_slack: f64,
    pub avg_sq_norm: f64,
    pub mixture_sq_norm: f64,
    /// Descending spectrum of `(1/M) K_D`.
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
}

pub fn entropy_report(g: &GramMatrix, k: &GramMatrix, gamma2: f64) -> EntropyReport {
    let s2 = renyi2_entropy(k);
    let triple = distributional_variance(g);
    let eigenvalues = spectrum_report(k);
    let min_eigenvalue = *eigenvalues.last().expect("nonempty gram");
    let bound_rhs = 2.0 * gamma2 * triple.v_gram;
    EntropyReport {
        s2_nats: s2,
        s2_bits: s2 / std::f64::consts::LN_2,
        v_gram: triple.v_gram,
        v_gap: triple.v_gap,
        j_half: triple.j_half,
        bound_rhs,
        bound_slack: bound_rhs - s2,
        avg_sq_norm: triple.avg_sq_norm,
        mixture_sq_norm: triple.mixture_sq_norm,
        eigenvalues,
        min_eigenvalue,
    }
}
