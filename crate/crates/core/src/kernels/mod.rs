//! Two-level kernel computation.
//!
//! Level one: a Gaussian *embedding kernel* `k(z, z') = exp(-(g1/2)·||z-z'||²)`
//! on encoded samples. Averaging it over two encoded sample sets gives the
//! plug-in estimate of the mean-embedding inner product `<mu_P, mu_Q>`, from
//! which squared MMD follows. Level two: a *distribution kernel* maps squared
//! MMD through a family (gaussian, cauchy, inverse multiquadric) or uses the
//! inner product directly (linear). Sliced Wasserstein kernels operate on raw
//! samples instead and live in [`sliced`].
//!
//! Gram assembly first puts every distribution's samples into a canonical
//! (lexicographically sorted) order, so the matrix is bit-for-bit invariant
//! under permutation of the samples inside any distribution, and entries are
//! written to independent slots, so results do not depend on how pairs are
//! scheduled across threads.

mod bandwidth;
mod sliced;

pub use bandwidth::{bandwidth_heuristic, mean_nn_distance};
pub use sliced::{sliced_wasserstein, sw_kernel_gram, SwOrder};

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::mat;

/// Distribution-kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `K = <mu_P, mu_Q>` directly (not normalized: diagonal != 1).
    Linear,
    /// `K = exp(-(g2/2)·d²)`.
    Gaussian,
    /// `K = 1 / (1 + g2·d²)`.
    Cauchy,
    /// `K = (1 + g2·d²)^(-1/2)`.
    Imq,
    /// `K = exp(-lambda·SW_1)` on raw samples.
    Sw1,
    /// `K = exp(-lambda·SW_2²)` on raw samples.
    Sw2,
}

impl KernelFamily {
    /// Families with `K(P, P) = 1`.
    pub fn is_normalized(self) -> bool {
        !matches!(self, KernelFamily::Linear)
    }

    /// Families computed from squared MMD between mean embeddings.
    pub fn is_mmd_based(self) -> bool {
        matches!(
            self,
            KernelFamily::Linear | KernelFamily::Gaussian | KernelFamily::Cauchy | KernelFamily::Imq
        )
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelFamily::Linear),
            "gaussian" => Ok(KernelFamily::Gaussian),
            "cauchy" => Ok(KernelFamily::Cauchy),
            "imq" => Ok(KernelFamily::Imq),
            "sw1" => Ok(KernelFamily::Sw1),
            "sw2" => Ok(KernelFamily::Sw2),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

impl std::fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KernelFamily::Linear => "linear",
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Cauchy => "cauchy",
            KernelFamily::Imq => "imq",
            KernelFamily::Sw1 => "sw1",
            KernelFamily::Sw2 => "sw2",
        };
        f.write_str(s)
    }
}

/// A bandwidth that is either fixed or resolved later from the
/// nearest-neighbor heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    #[serde(with = "auto_str")]
    Auto,
    Fixed(f64),
}

mod auto_str {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(de::Error::custom(format!(
                "expected \"auto\" or a number, found \"{s}\""
            )))
        }
    }
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Auto
    }
}

impl Bandwidth {
    pub fn fixed(self) -> Option<f64> {
        match self {
            Bandwidth::Auto => None,
            Bandwidth::Fixed(v) => Some(v),
        }
    }
}

/// Kernel configuration before bandwidth resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Embedding-kernel bandwidth.
    #[serde(default)]
    pub gamma1: Bandwidth,
    /// Distribution-kernel family.
    #[serde(default = "default_family")]
    pub dist_kernel: KernelFamily,
    /// Distribution-kernel bandwidth (the sliced-Wasserstein `lambda` for the
    /// sw families).
    #[serde(default)]
    pub gamma2: Bandwidth,
    /// Projection count for the sliced-Wasserstein families.
    #[serde(default = "default_sw_projections")]
    pub sw_projections: usize,
    /// Base jitter for triangular factorizations.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_family() -> KernelFamily {
    KernelFamily::Gaussian
}

fn default_sw_projections() -> usize {
    100
}

fn default_jitter() -> f64 {
    1e-8
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            gamma1: Bandwidth::Auto,
            dist_kernel: default_family(),
            gamma2: Bandwidth::Auto,
            sw_projections: default_sw_projections(),
            jitter: default_jitter(),
        }
    }
}

/// Kernel configuration with all bandwidths resolved to positive values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedKernel {
    pub family: KernelFamily,
    pub gamma1: f64,
    pub gamma2: f64,
    pub jitter: f64,
}

impl ResolvedKernel {
    pub fn new(family: KernelFamily, gamma1: f64, gamma2: f64, jitter: f64) -> Result<Self> {
        if !(gamma1 > 0.0) || !(gamma2 > 0.0) {
            return Err(Error::Invalid(format!(
                "bandwidths must be strictly positive (gamma1={gamma1}, gamma2={gamma2})"
            )));
        }
        if !(jitter >= 0.0) {
            return Err(Error::Invalid(format!("jitter must be nonnegative ({jitter})")));
        }
        Ok(Self {
            family,
            gamma1,
            gamma2,
            jitter,
        })
    }
}

/// What a Gram matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GramKind {
    /// `G_ij = <mu_i, mu_j>`: mean-embedding inner products.
    MeanEmbedding,
    /// `K_ij = K_distr(mu_i, mu_j)` for the given family.
    DistributionKernel(KernelFamily),
}

/// Symmetric pairwise matrix over a dataset, with row/column ids.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    values: DMatrix<f64>,
    kind: GramKind,
    ids: Vec<String>,
}

impl GramMatrix {
    /// Wrap a matrix, validating squareness, finiteness, id count, and
    /// symmetry within 1e-10.
    pub fn new(values: DMatrix<f64>, kind: GramKind, ids: Vec<String>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Invalid(format!(
                "gram matrix must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if ids.len() != values.nrows() {
            return Err(Error::Invalid(format!(
                "{} ids for a {}x{} matrix",
                ids.len(),
                values.nrows(),
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gram matrix entry".to_string()));
        }
        for i in 0..values.nrows() {
            for j in (i + 1)..values.ncols() {
                if (values[(i, j)] - values[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Invalid(format!(
                        "gram matrix not symmetric at ({i},{j}): {} vs {}",
                        values[(i, j)],
                        values[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { values, kind, ids })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn kind(&self) -> GramKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Side length M.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Whether every diagonal entry is 1 within `tol`.
    pub fn has_unit_diagonal(&self, tol: f64) -> bool {
        (0..self.len()).all(|i| (self.values[(i, i)] - 1.0).abs() <= tol)
    }

    /// Eigenvalues of `(1/M) K`, descending.
    pub fn normalized_eigenvalues(&self) -> Vec<f64> {
        let m = self.len() as f64;
        let scaled = self.values.clone() / m;
        let mut eigs: Vec<f64> = scaled.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.total_cmp(a));
        eigs
    }

    /// Smallest eigenvalue of `(1/M) K`.
    pub fn min_normalized_eigenvalue(&self) -> f64 {
        *self
            .normalized_eigenvalues()
            .last()
            .expect("gram matrix is nonempty")
    }

    /// Row/column sub-block for prediction: rows are test points, columns
    /// training points.
    pub fn cross(&self, test: &[usize], train: &[usize]) -> CrossGram {
        let mut values = DMatrix::zeros(test.len(), train.len());
        for (r, &i) in test.iter().enumerate() {
            for (c, &j) in train.iter().enumerate() {
                values[(r, c)] = self.values[(i, j)];
            }
        }
        CrossGram {
            values,
            test_ids: test.iter().map(|&i| self.ids[i].clone()).collect(),
            train_ids: train.iter().map(|&j| self.ids[j].clone()).collect(),
        }
    }

    /// Principal sub-matrix over the given indices.
    pub fn submatrix(&self, idx: &[usize]) -> GramMatrix {
        let mut values = DMatrix::zeros(idx.len(), idx.len());
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                values[(r, c)] = self.values[(i, j)];
            }
        }
        GramMatrix {
            values,
            kind: self.kind,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}

/// Rectangular test-by-train kernel block.
#[derive(Debug, Clone)]
pub struct CrossGram {
    pub values: DMatrix<f64>,
    pub test_ids: Vec<String>,
    pub train_ids: Vec<String>,
}

/// One encoded distribution: latent samples (rows) plus optional weights
/// (finite-support data evaluated exactly). `None` means uniform.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub id: String,
    pub z: Array2<f64>,
    pub weights: Option<Vec<f64>>,
}

impl Encoded {
    pub fn uniform(id: impl Into<String>, z: Array2<f64>) -> Self {
        Self {
            id: id.into(),
            z,
            weights: None,
        }
    }
}

/// Gaussian embedding kernel `exp(-(g1/2)·||z - z'||²)`.
pub fn embedding_kernel(z: &[f64], z_prime: &[f64], gamma1: f64) -> f64 {
    (-(gamma1 / 2.0) * mat::sq_dist(z, z_prime)).exp()
}

/// Total order on sample blocks, used to orient the accumulation so that
/// `mean_inner(p, q)` and `mean_inner(q, p)` sum in the same order and agree
/// bit-for-bit.
fn block_precedes(
    p: &Array2<f64>,
    wp: Option<&[f64]>,
    q: &Array2<f64>,
    wq: Option<&[f64]>,
) -> bool {
    use std::cmp::Ordering;
    match p.nrows().cmp(&q.nrows()) {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    for (x, y) in p.iter().zip(q.iter()) {
        match x.total_cmp(y) {
            Ordering::Less => return true,
            Ordering::Greater => return false,
            Ordering::Equal => {}
        }
    }
    if let (Some(a), Some(b)) = (wp, wq) {
        for (x, y) in a.iter().zip(b.iter()) {
            match x.total_cmp(y) {
                Ordering::Less => return true,
                Ordering::Greater => return false,
                Ordering::Equal => {}
            }
        }
    }
    true
}

fn mean_inner_impl(
    p: &Array2<f64>,
    wp: Option<&[f64]>,
    q: &Array2<f64>,
    wq: Option<&[f64]>,
    gamma1: f64,
) -> f64 {
    let (p, wp, q, wq) = if block_precedes(p, wp, q, wq) {
        (p, wp, q, wq)
    } else {
        (q, wq, p, wp)
    };
    let np = p.nrows();
    let nq = q.nrows();
    let mut total = 0.0;
    for a in 0..np {
        let za = mat::row(p, a);
        let wa = wp.map_or(1.0, |w| w[a]);
        for b in 0..nq {
            let zb = mat::row(q, b);
            let wb = wq.map_or(1.0, |w| w[b]);
            total += wa * wb * embedding_kernel(za, zb, gamma1);
        }
    }
    match (wp, wq) {
        (None, None) => total / (np as f64 * nq as f64),
        (Some(_), None) => total / nq as f64,
        (None, Some(_)) => total / np as f64,
        (Some(_), Some(_)) => total,
    }
}

/// Reorder samples (and weights) lexicographically. Gram entries accumulated
/// in this canonical order do not depend on the order samples arrived in.
fn canonicalized(e: &Encoded) -> Encoded {
    let n = e.z.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        let ra = mat::row(&e.z, a);
        let rb = mat::row(&e.z, b);
        for (x, y) in ra.iter().zip(rb.iter()) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut z = Array2::zeros((n, e.z.ncols()));
    for (dst, &src) in order.iter().enumerate() {
        mat::row_mut(&mut z, dst).copy_from_slice(mat::row(&e.z, src));
    }
    let weights = e
        .weights
        .as_ref()
        .map(|w| order.iter().map(|&src| w[src]).collect());
    Encoded {
        id: e.id.clone(),
        z,
        weights,
    }
}

/// Plug-in estimate of `<mu_P, mu_Q>`: the mean of all pairwise embedding
/// kernel values (a V-statistic, same-index pairs included).
pub fn mean_inner(p_enc: &Array2<f64>, q_enc: &Array2<f64>, gamma1: f64) -> f64 {
    assert!(p_enc.nrows() > 0 && q_enc.nrows() > 0, "empty sample matrix");
    mean_inner_impl(p_enc, None, q_enc, None, gamma1)
}

/// Weighted variant for finite-support distributions evaluated exactly.
pub fn mean_inner_weighted(
    p_enc: &Array2<f64>,
    p_weights: Option<&[f64]>,
    q_enc: &Array2<f64>,
    q_weights: Option<&[f64]>,
    gamma1: f64,
) -> f64 {
    mean_inner_impl(p_enc, p_weights, q_enc, q_weights, gamma1)
}

/// Squared MMD `||mu_P - mu_Q||²`, clamped to zero from below.
pub fn mmd_sq(p_enc: &Array2<f64>, q_enc: &Array2<f64>, gamma1: f64) -> f64 {
    let pp = mean_inner(p_enc, p_enc, gamma1);
    let qq = mean_inner(q_enc, q_enc, gamma1);
    let pq = mean_inner(p_enc, q_enc, gamma1);
    (pp + qq - 2.0 * pq).max(0.0)
}

/// Map squared MMD through a distribution-kernel family.
///
/// The linear family consumes the inner product directly rather than `d²`,
/// and the sliced-Wasserstein families operate on raw samples; both are
/// rejected here.
pub fn distribution_kernel_value(d2: f64, family: KernelFamily, gamma2: f64) -> Result<f64> {
    debug_assert!(d2 >= 0.0);
    match family {
        KernelFamily::Gaussian => Ok((-(gamma2 / 2.0) * d2).exp()),
        KernelFamily::Cauchy => Ok(1.0 / (1.0 + gamma2 * d2)),
        KernelFamily::Imq => Ok((1.0 + gamma2 * d2).powf(-0.5)),
        KernelFamily::Linear => Err(Error::FamilyMismatch(
            "linear kernel uses the mean-embedding inner product, not d²".to_string(),
        )),
        KernelFamily::Sw1 | KernelFamily::Sw2 => Err(Error::FamilyMismatch(
            "sliced-Wasserstein kernels are computed from raw samples".to_string(),
        )),
    }
}

/// Mean-embedding Gram `G_ij = <mu_i, mu_j>` over encoded distributions.
pub fn mean_embedding_gram(encoded: &[Encoded], gamma1: f64) -> Result<GramMatrix> {
    mean_embedding_gram_impl(encoded, gamma1, true)
}

/// Sequential reference path for [`mean_embedding_gram`].
pub fn mean_embedding_gram_serial(encoded: &[Encoded], gamma1: f64) -> Result<GramMatrix> {
    mean_embedding_gram_impl(encoded, gamma1, false)
}

fn mean_embedding_gram_impl(
    encoded: &[Encoded],
    gamma1: f64,
    parallel: bool,
) -> Result<GramMatrix> {
    let m = encoded.len();
    if m == 0 {
        return Err(Error::Invalid("empty dataset".to_string()));
    }
    let d = encoded[0].z.ncols();
    for e in encoded {
        if e.z.nrows() == 0 {
            return Err(Error::Invalid(format!("distribution `{}` has no samples", e.id)));
        }
        if e.z.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "distribution `{}` has latent dimension {} but expected {}",
                e.id,
                e.z.ncols(),
                d
            )));
        }
    }
    let canonical: Vec<Encoded> = encoded.iter().map(canonicalized).collect();
    // upper triangle (including diagonal), pair index -> (i, j)
    let n_pairs = m * (m + 1) / 2;
    let pair = |k: usize| -> (usize, usize) {
        // row-major upper triangle walk
        let mut i = 0usize;
        let mut remaining = k;
        let mut row_len = m;
        while remaining >= row_len {
            remaining -= row_len;
            i += 1;
            row_len -= 1;
        }
        (i, i + remaining)
    };
    let compute = |k: usize| -> f64 {
        let (i, j) = pair(k);
        mean_inner_impl(
            &canonical[i].z,
            canonical[i].weights.as_deref(),
            &canonical[j].z,
            canonical[j].weights.as_deref(),
            gamma1,
        )
    };
    let entries = if parallel {
        exec::map_indexed(n_pairs, compute)
    } else {
        exec::map_indexed_serial(n_pairs, compute)
    };
    let mut values = DMatrix::zeros(m, m);
    for (k, v) in entries.into_iter().enumerate() {
        let (i, j) = pair(k);
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    GramMatrix::new(
        values,
        GramKind::MeanEmbedding,
        encoded.iter().map(|e| e.id.clone()).collect(),
    )
}

/// Derive the distribution-kernel Gram `K_D` from a mean-embedding Gram.
pub fn gram_apply_family(g: &GramMatrix, family: KernelFamily, gamma2: f64) -> Result<GramMatrix> {
    if g.kind() != GramKind::MeanEmbedding {
        return Err(Error::FamilyMismatch(
            "expected a mean-embedding gram matrix".to_string(),
        ));
    }
    let m = g.len();
    let values = match family {
        KernelFamily::Linear => g.values.clone(),
        KernelFamily::Gaussian | KernelFamily::Cauchy | KernelFamily::Imq => {
            let mut k = DMatrix::zeros(m, m);
            for i in 0..m {
                for j in 0..m {
                    let d2 = (g.values[(i, i)] + g.values[(j, j)] - 2.0 * g.values[(i, j)]).max(0.0);
                    k[(i, j)] = distribution_kernel_value(d2, family, gamma2)?;
                }
            }
            k
        }
        KernelFamily::Sw1 | KernelFamily::Sw2 => {
            return Err(Error::FamilyMismatch(
                "sliced-Wasserstein kernels are computed from raw samples".to_string(),
            ))
        }
    };
    GramMatrix::new(values, GramKind::DistributionKernel(family), g.ids.clone())
}

/// Full distribution-kernel Gram over encoded distributions: pairwise
/// mean-embedding blocks once, `d²` per pair, then the family map.
pub fn distribution_gram(encoded: &[Encoded], config: &ResolvedKernel) -> Result<GramMatrix> {
    let g = mean_embedding_gram(encoded, config.gamma1)?;
    gram_apply_family(&g, config.family, config.gamma2)
}

/// Sequential reference path for [`distribution_gram`]; bit-identical output.
pub fn distribution_gram_serial(encoded: &[Encoded], config: &ResolvedKernel) -> Result<GramMatrix> {
    let g = mean_embedding_gram_serial(encoded, config.gamma1)?;
    gram_apply_family(&g, config.family, config.gamma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit_rows(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut m = Array2::zeros((rows, d));
        for i in 0..rows {
            let row = crate::mat::row_mut(&mut m, i);
            loop {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let n = crate::mat::norm(row);
                if n > 1e-12 {
                    for v in row.iter_mut() {
                        *v /= n;
                    }
                    break;
                }
            }
        }
        m
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        let z = [0.6, 0.8];
        assert_eq!(embedding_kernel(&z, &z, 3.7), 1.0);
    }

    #[test]
    fn kernel_of_antipodal_unit_vectors() {
        let z = [1.0, 0.0];
        let w = [-1.0, 0.0];
        let k = embedding_kernel(&z, &w, 1.0);
        assert!((k - (-2.0f64).exp()).abs() < 1e-12, "k={k}");
        assert!((k - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn kernel_vanishes_at_large_bandwidth() {
        let z = [1.0, 0.0];
        let w = [0.0, 1.0];
        assert!(embedding_kernel(&z, &w, 1e6) < 1e-300);
    }

    #[test]
    fn mean_inner_of_singletons_reduces_to_kernel() {
        let p = array![[1.0, 0.0]];
        let q = array![[0.0, 1.0]];
        let gamma = 1.3;
        assert_eq!(
            mean_inner(&p, &q, gamma),
            embedding_kernel(&[1.0, 0.0], &[0.0, 1.0], gamma)
        );
        assert_eq!(mean_inner(&p, &p, gamma), 1.0);
    }

    #[test]
    fn mean_inner_ignores_sample_duplication() {
        let z = array![[0.6, 0.8]];
        let zz = array![[0.6, 0.8], [0.6, 0.8]];
        assert!((mean_inner(&zz, &z, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mean_inner_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = unit_rows(4, 3, &mut rng);
        let q = unit_rows(6, 3, &mut rng);
        assert_eq!(
            mean_inner(&p, &q, 0.7).to_bits(),
            mean_inner(&q, &p, 0.7).to_bits()
        );
    }

    #[test]
    fn mmd_of_identical_matrices_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = unit_rows(5, 3, &mut rng);
        assert_eq!(mmd_sq(&p, &p, 1.1), 0.0);
    }

    #[test]
    fn mmd_of_antipodal_singletons() {
        let p = array![[1.0, 0.0]];
        let q = array![[-1.0, 0.0]];
        let d2 = mmd_sq(&p, &q, 1.0);
        let expected = 2.0 - 2.0 * (-2.0f64).exp();
        assert!((d2 - expected).abs() < 1e-12);
        assert!((d2 - 1.729329).abs() < 1e-6);
    }

    #[test]
    fn mmd_triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = unit_rows(4, 3, &mut rng);
            let q = unit_rows(5, 3, &mut rng);
            let r = unit_rows(3, 3, &mut rng);
            let dpq = mmd_sq(&p, &q, 1.5).sqrt();
            let dpr = mmd_sq(&p, &r, 1.5).sqrt();
            let drq = mmd_sq(&r, &q, 1.5).sqrt();
            assert!(dpq <= dpr + drq + 1e-9);
        }
    }

    #[test]
    fn family_values() {
        assert!((distribution_kernel_value(1.0, KernelFamily::Gaussian, 2.0).unwrap()
            - (-1.0f64).exp())
        .abs()
            < 1e-12);
        assert_eq!(
            distribution_kernel_value(1.0, KernelFamily::Cauchy, 1.0).unwrap(),
            0.5
        );
        for family in [KernelFamily::Gaussian, KernelFamily::Cauchy, KernelFamily::Imq] {
            assert_eq!(distribution_kernel_value(0.0, family, 3.0).unwrap(), 1.0);
        }
        assert!(distribution_kernel_value(1.0, KernelFamily::Linear, 1.0).is_err());
    }

    #[test]
    fn gram_of_identical_distributions_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z = unit_rows(4, 3, &mut rng);
        let encoded: Vec<Encoded> = (0..3)
            .map(|i| Encoded::uniform(format!("p{i}"), z.clone()))
            .collect();
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, 1.0, 2.0, 1e-8).unwrap();
        let k = distribution_gram(&encoded, &rk).unwrap();
        for v in k.values().iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_of_distant_diracs_approaches_identity() {
        let dirs = [
            array![[1.0, 0.0, 0.0]],
            array![[0.0, 1.0, 0.0]],
            array![[0.0, 0.0, 1.0]],
        ];
        let encoded: Vec<Encoded> = dirs
            .iter()
            .enumerate()
            .map(|(i, z)| Encoded::uniform(format!("p{i}"), z.clone()))
            .collect();
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, 50.0, 30.0, 1e-8).unwrap();
        let k = distribution_gram(&encoded, &rk).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((k.values()[(i, j)] - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gram_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let encoded: Vec<Encoded> = (0..3)
            .map(|i| Encoded::uniform(format!("p{i}"), unit_rows(4 + i, 3, &mut rng)))
            .collect();
        let gamma1 = 1.7;
        let gamma2 = 0.9;
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, gamma1, gamma2, 1e-8).unwrap();
        let k = distribution_gram(&encoded, &rk).unwrap();
        // independent nested-loop oracle
        for i in 0..3 {
            for j in 0..3 {
                let (p, q) = (&encoded[i].z, &encoded[j].z);
                let mut acc = |a: &Array2<f64>, b: &Array2<f64>| -> f64 {
                    let mut s = 0.0;
                    for ra in a.rows() {
                        for rb in b.rows() {
                            let d2: f64 = ra
                                .iter()
                                .zip(rb.iter())
                                .map(|(x, y)| (x - y) * (x - y))
                                .sum();
                            s += (-(gamma1 / 2.0) * d2).exp();
                        }
                    }
                    s / (a.nrows() as f64 * b.nrows() as f64)
                };
                let d2 = acc(p, p) + acc(q, q) - 2.0 * acc(p, q);
                let expected = (-(gamma2 / 2.0) * d2.max(0.0)).exp();
                assert!(
                    (k.values()[(i, j)] - expected).abs() < 1e-12,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn gram_invariant_under_within_distribution_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = unit_rows(6, 3, &mut rng);
        let mut z_perm = Array2::zeros((6, 3));
        let order = [3usize, 0, 5, 1, 4, 2];
        for (dst, &src) in order.iter().enumerate() {
            crate::mat::row_mut(&mut z_perm, dst).copy_from_slice(crate::mat::row(&z, src));
        }
        let other = unit_rows(5, 3, &mut rng);
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, 1.3, 2.0, 1e-8).unwrap();
        let a = distribution_gram(
            &[
                Encoded::uniform("p", z),
                Encoded::uniform("q", other.clone()),
            ],
            &rk,
        )
        .unwrap();
        let b = distribution_gram(
            &[Encoded::uniform("p", z_perm), Encoded::uniform("q", other)],
            &rk,
        )
        .unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn parallel_and_serial_grams_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let encoded: Vec<Encoded> = (0..5)
            .map(|i| Encoded::uniform(format!("p{i}"), unit_rows(7, 4, &mut rng)))
            .collect();
        let rk = ResolvedKernel::new(KernelFamily::Cauchy, 0.8, 1.4, 1e-8).unwrap();
        let a = distribution_gram(&encoded, &rk).unwrap();
        let b = distribution_gram_serial(&encoded, &rk).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn dataset_permutation_permutes_gram_and_preserves_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let encoded: Vec<Encoded> = (0..4)
            .map(|i| Encoded::uniform(format!("p{i}"), unit_rows(5, 3, &mut rng)))
            .collect();
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, 1.0, 1.0, 1e-8).unwrap();
        let a = distribution_gram(&encoded, &rk).unwrap();
        let perm = [2usize, 0, 3, 1];
        let permuted: Vec<Encoded> = perm.iter().map(|&i| encoded[i].clone()).collect();
        let b = distribution_gram(&permuted, &rk).unwrap();
        for (r, &pr) in perm.iter().enumerate() {
            for (c, &pc) in perm.iter().enumerate() {
                assert_eq!(
                    b.values()[(r, c)].to_bits(),
                    a.values()[(pr, pc)].to_bits()
                );
            }
        }
        let ea = a.normalized_eigenvalues();
        let eb = b.normalized_eigenvalues();
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_entries_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let encoded: Vec<Encoded> = (0..4)
            .map(|i| Encoded::uniform(format!("p{i}"), unit_rows(6, 3, &mut rng)))
            .collect();
        let rk = ResolvedKernel::new(KernelFamily::Gaussian, 2.0, 3.0, 1e-8).unwrap();
        let k = distribution_gram(&encoded, &rk).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v = k.values()[(i, j)];
                assert!(v > 0.0 && v <= 1.0);
                if i == j {
                    assert_eq!(v, 1.0);
                }
            }
        }
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut values = DMatrix::zeros(2, 2);
        values[(0, 0)] = 1.0;
        values[(1, 1)] = 1.0;
        values[(0, 1)] = 0.5;
        values[(1, 0)] = 0.5 + 1e-6;
        let err = GramMatrix::new(
            values,
            GramKind::DistributionKernel(KernelFamily::Gaussian),
            vec!["a".into(), "b".into()],
        );
        assert!(err.is_err());
    }
}
