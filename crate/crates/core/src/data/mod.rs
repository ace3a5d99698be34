//! Datasets of empirical distributions.
//!
//! An [`EmpiricalDistribution`] is one input point: an N×d matrix of i.i.d.
//! samples, optionally labeled. A [`DistributionDataset`] is an ordered
//! collection of them sharing the same ambient dimension. Finite-support data
//! (histograms over a vocabulary of indices) use [`SupportIndexDataset`]
//! instead; its distributions are weighted index multisets that a table
//! encoder later maps onto the hypersphere.
//!
//! All types are immutable after construction and safe to share across
//! threads. Randomness is always an explicit, caller-seeded stream.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset, DatasetFormat};
pub use synth::{synth_sphere_mixture, synth_two_class_task};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mat;

/// One input distribution: `n` i.i.d. samples in `R^d`.
#[derive(Debug, Clone)]
pub struct EmpiricalDistribution {
    id: String,
    samples: Array2<f64>,
    label: Option<i64>,
}

impl EmpiricalDistribution {
    /// Build from a sample matrix. Requires at least one row and finite
    /// entries throughout.
    pub fn new(id: impl Into<String>, samples: Array2<f64>, label: Option<i64>) -> Result<Self> {
        let id = id.into();
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::Invalid(format!(
                "distribution `{id}` must have at least one sample and one coordinate"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("samples of distribution `{id}`")));
        }
        Ok(Self { id, samples, label })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    /// Number of samples `n`.
    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false // n >= 1 by construction
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Draw `s` samples. For `s <= n` this samples distinct rows without
    /// replacement; for `s > n` it samples rows uniformly with replacement.
    /// Deterministic given the rng state.
    pub fn subsample<R: Rng>(&self, s: usize, rng: &mut R) -> EmpiricalDistribution {
        assert!(s >= 1, "subsample size must be >= 1");
        let n = self.len();
        let d = self.dim();
        let indices: Vec<usize> = if s <= n {
            rand::seq::index::sample(rng, n, s).into_vec()
        } else {
            (0..s).map(|_| rng.random_range(0..n)).collect()
        };
        let mut out = Array2::zeros((s, d));
        for (k, &i) in indices.iter().enumerate() {
            mat::row_mut(&mut out, k).copy_from_slice(mat::row(&self.samples, i));
        }
        EmpiricalDistribution {
            id: self.id.clone(),
            samples: out,
            label: self.label,
        }
    }
}

/// Ordered collection of empirical distributions with a shared dimension.
#[derive(Debug, Clone)]
pub struct DistributionDataset {
    name: String,
    distributions: Vec<EmpiricalDistribution>,
    input_dim: usize,
}

impl DistributionDataset {
    pub fn new(name: impl Into<String>, distributions: Vec<EmpiricalDistribution>) -> Result<Self> {
        let name = name.into();
        let first = distributions
            .first()
            .ok_or_else(|| Error::Invalid(format!("dataset `{name}` is empty")))?;
        let input_dim = first.dim();
        let mut seen = std::collections::HashSet::new();
        for dist in &distributions {
            if dist.dim() != input_dim {
                return Err(Error::DimensionMismatch(format!(
                    "distribution `{}` has dimension {} but the dataset has {}",
                    dist.id(),
                    dist.dim(),
                    input_dim
                )));
            }
            if !seen.insert(dist.id().to_string()) {
                return Err(Error::DuplicateId(dist.id().to_string()));
            }
        }
        Ok(Self {
            name,
            distributions,
            input_dim,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Number of distributions `M`.
    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        false // M >= 1 by construction
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn get(&self, i: usize) -> &EmpiricalDistribution {
        &self.distributions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmpiricalDistribution> {
        self.distributions.iter()
    }

    pub fn ids(&self) -> Vec<String> {
        self.distributions.iter().map(|d| d.id().to_string()).collect()
    }

    pub fn labels(&self) -> Vec<Option<i64>> {
        self.distributions.iter().map(|d| d.label()).collect()
    }
}

/// One finite-support distribution: a weighted histogram over `[0, V)`.
#[derive(Debug, Clone)]
pub struct SupportDistribution {
    id: String,
    indices: Vec<usize>,
    weights: Vec<f64>,
    label: Option<i64>,
}

impl SupportDistribution {
    pub fn new(
        id: impl Into<String>,
        indices: Vec<usize>,
        weights: Vec<f64>,
        support_size: usize,
        label: Option<i64>,
    ) -> Result<Self> {
        let id = id.into();
        if indices.is_empty() || indices.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "distribution `{id}`: indices and weights must be nonempty and equal-length"
            )));
        }
        for &idx in &indices {
            if idx >= support_size {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    support_size,
                });
            }
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(format!(
                "distribution `{id}`: weights must be finite and nonnegative"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::WeightNormalization { id, sum });
        }
        Ok(Self {
            id,
            indices,
            weights,
            label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    /// Draw `s` support indices according to the histogram weights
    /// (with replacement; inverse-CDF over the cumulative weights).
    pub fn sample_indices<R: Rng>(&self, s: usize, rng: &mut R) -> Vec<usize> {
        assert!(s >= 1, "sample count must be >= 1");
        let mut cumulative = Vec::with_capacity(self.weights.len());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        let total = *cumulative.last().unwrap();
        (0..s)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                let pos = cumulative.partition_point(|&c| c <= u);
                self.indices[pos.min(self.indices.len() - 1)]
            })
            .collect()
    }
}

/// Ordered collection of finite-support distributions over a shared support.
#[derive(Debug, Clone)]
pub struct SupportIndexDataset {
    name: String,
    distributions: Vec<SupportDistribution>,
    support_size: usize,
}

impl SupportIndexDataset {
    pub fn new(
        name: impl Into<String>,
        distributions: Vec<SupportDistribution>,
        support_size: usize,
    ) -> Result<Self> {
        let name = name.into();
        if distributions.is_empty() {
            return Err(Error::Invalid(format!("dataset `{name}` is empty")));
        }
        let mut seen = std::collections::HashSet::new();
        for dist in &distributions {
            for &idx in dist.indices() {
                if idx >= support_size {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        support_size,
                    });
                }
            }
            if !seen.insert(dist.id().to_string()) {
                return Err(Error::DuplicateId(dist.id().to_string()));
            }
        }
        Ok(Self {
            name,
            distributions,
            support_size,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn support_size(&self) -> usize {
        self.support_size
    }

    pub fn get(&self, i: usize) -> &SupportDistribution {
        &self.distributions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SupportDistribution> {
        self.distributions.iter()
    }

    pub fn ids(&self) -> Vec<String> {
        self.distributions.iter().map(|d| d.id().to_string()).collect()
    }

    pub fn labels(&self) -> Vec<Option<i64>> {
        self.distributions.iter().map(|d| d.label()).collect()
    }
}

/// Either kind of dataset, as loaded from disk.
#[derive(Debug, Clone)]
pub enum Dataset {
    Empirical(DistributionDataset),
    Support(SupportIndexDataset),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Empirical(d) => d.len(),
            Dataset::Support(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ids(&self) -> Vec<String> {
        match self {
            Dataset::Empirical(d) => d.ids(),
            Dataset::Support(d) => d.ids(),
        }
    }

    pub fn labels(&self) -> Vec<Option<i64>> {
        match self {
            Dataset::Empirical(d) => d.labels(),
            Dataset::Support(d) => d.labels(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(id: &str, rows: Vec<Vec<f64>>) -> EmpiricalDistribution {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        EmpiricalDistribution::new(id, Array2::from_shape_vec((n, d), flat).unwrap(), None)
            .unwrap()
    }

    #[test]
    fn subsample_without_replacement_is_a_permutation() {
        let d = dist("a", vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sub = d.subsample(5, &mut rng);
        let mut got: Vec<f64> = sub.samples().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn subsample_never_repeats_when_s_le_n() {
        let d = dist(
            "a",
            (0..20).map(|i| vec![i as f64]).collect::<Vec<_>>(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 1..=20 {
            let sub = d.subsample(s, &mut rng);
            let mut vals: Vec<f64> = sub.samples().iter().copied().collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            assert_eq!(vals.len(), s, "repeated row at s={s}");
        }
    }

    #[test]
    fn subsample_with_replacement_when_s_gt_n() {
        let d = dist("a", vec![vec![0.0], vec![1.0], vec![2.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sub = d.subsample(10, &mut rng);
        assert_eq!(sub.len(), 10);
        for v in sub.samples().iter() {
            assert!([0.0, 1.0, 2.0].contains(v));
        }
    }

    #[test]
    fn subsample_is_deterministic() {
        let d = dist("a", (0..8).map(|i| vec![i as f64, -(i as f64)]).collect());
        let a = d.subsample(4, &mut ChaCha8Rng::seed_from_u64(42));
        let b = d.subsample(4, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn dataset_rejects_mixed_dims_and_duplicate_ids() {
        let a = dist("a", vec![vec![0.0, 1.0]]);
        let b = dist("b", vec![vec![0.0]]);
        assert!(matches!(
            DistributionDataset::new("x", vec![a.clone(), b]),
            Err(Error::DimensionMismatch(_))
        ));
        let a2 = dist("a", vec![vec![2.0, 3.0]]);
        assert!(matches!(
            DistributionDataset::new("x", vec![a, a2]),
            Err(Error::DuplicateId(_))
        ));
    }

    #[test]
    fn support_distribution_validates_weights() {
        let err = SupportDistribution::new("h", vec![0, 1], vec![0.5, 0.4], 4, None);
        assert!(matches!(err, Err(Error::WeightNormalization { .. })));
        let err = SupportDistribution::new("h", vec![0, 9], vec![0.5, 0.5], 4, None);
        assert!(matches!(err, Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn support_sampling_follows_weights() {
        let h = SupportDistribution::new("h", vec![3, 7], vec![0.9, 0.1], 10, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = h.sample_indices(5000, &mut rng);
        let frac3 = draws.iter().filter(|&&i| i == 3).count() as f64 / 5000.0;
        assert!((frac3 - 0.9).abs() < 0.03, "frac3={frac3}");
    }

    #[test]
    fn samples_are_immutable_via_api() {
        let d = dist("a", vec![vec![1.0, 2.0]]);
        let view = d.samples();
        assert_eq!(view, &array![[1.0, 2.0]]);
    }
}
