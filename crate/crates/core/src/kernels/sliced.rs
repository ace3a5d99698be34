//! Sliced Wasserstein distances and kernels on raw samples.
//!
//! `SW_p^p(P, Q)` is estimated by averaging, over `L` uniform random unit
//! directions, the one-dimensional `p`-Wasserstein distance (to the `p`-th
//! power) between the sorted projections of the two sample sets. When the
//! sample counts differ, both sides are resampled to `max(N_P, N_Q)`
//! equally-spaced quantiles by linear interpolation of the sorted values.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Encoded, GramKind, GramMatrix, KernelFamily};
use crate::data::DistributionDataset;
use crate::error::{Error, Result};
use crate::exec;
use crate::mat;

/// Wasserstein order for the sliced estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwOrder {
    One,
    Two,
}

impl SwOrder {
    fn pow(self, x: f64) -> f64 {
        match self {
            SwOrder::One => x.abs(),
            SwOrder::Two => x * x,
        }
    }

    pub fn family(self) -> KernelFamily {
        match self {
            SwOrder::One => KernelFamily::Sw1,
            SwOrder::Two => KernelFamily::Sw2,
        }
    }
}

impl TryFrom<KernelFamily> for SwOrder {
    type Error = Error;

    fn try_from(family: KernelFamily) -> Result<Self> {
        match family {
            KernelFamily::Sw1 => Ok(SwOrder::One),
            KernelFamily::Sw2 => Ok(SwOrder::Two),
            other => Err(Error::FamilyMismatch(format!(
                "`{other}` is not a sliced-Wasserstein family"
            ))),
        }
    }
}

fn unit_direction<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = mat::norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn sorted_projection(samples: &Array2<f64>, direction: &[f64]) -> Vec<f64> {
    let mut proj: Vec<f64> = (0..samples.nrows())
        .map(|i| mat::dot(mat::row(samples, i), direction))
        .collect();
    proj.sort_unstable_by(f64::total_cmp);
    proj
}

/// Empirical quantile of a sorted sample at position `k` of `n` equally
/// spaced levels (endpoints included), by linear interpolation on the index
/// scale. With `n == v.len()` this is the identity on order statistics.
fn quantile_at(v: &[f64], k: usize, n: usize) -> f64 {
    if v.len() == 1 || n == 1 {
        return v[0];
    }
    let t = k as f64 * (v.len() - 1) as f64 / (n - 1) as f64;
    let lo = t.floor() as usize;
    if lo + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = t - lo as f64;
    v[lo] + frac * (v[lo + 1] - v[lo])
}

/// One-dimensional `W_p^p` between two sorted samples.
fn wasserstein_1d_pow(a: &[f64], b: &[f64], order: SwOrder) -> f64 {
    let n = a.len().max(b.len());
    let mut acc = 0.0;
    if a.len() == b.len() {
        for (x, y) in a.iter().zip(b.iter()) {
            acc += order.pow(x - y);
        }
    } else {
        for k in 0..n {
            acc += order.pow(quantile_at(a, k, n) - quantile_at(b, k, n));
        }
    }
    acc / n as f64
}

/// Monte-Carlo estimate of `SW_p^p(P, Q)` with `l` random projections.
pub fn sliced_wasserstein<R: Rng>(
    p: &Array2<f64>,
    q: &Array2<f64>,
    order: SwOrder,
    l: usize,
    rng: &mut R,
) -> f64 {
    let (value, _) = sliced_wasserstein_with_se(p, q, order, l, rng);
    value
}

/// As [`sliced_wasserstein`], also returning the Monte-Carlo standard error
/// of the estimate across projections.
pub fn sliced_wasserstein_with_se<R: Rng>(
    p: &Array2<f64>,
    q: &Array2<f64>,
    order: SwOrder,
    l: usize,
    rng: &mut R,
) -> (f64, f64) {
    assert!(p.nrows() > 0 && q.nrows() > 0, "empty sample matrix");
    assert_eq!(p.ncols(), q.ncols(), "ambient dimensions differ");
    assert!(l >= 1, "need at least one projection");
    let d = p.ncols();
    let directions: Vec<Vec<f64>> = (0..l).map(|_| unit_direction(d, rng)).collect();
    let per_direction = exec::map_indexed(l, |i| {
        let a = sorted_projection(p, &directions[i]);
        let b = sorted_projection(q, &directions[i]);
        wasserstein_1d_pow(&a, &b, order)
    });
    let mean = per_direction.iter().sum::<f64>() / l as f64;
    let var = per_direction
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / l as f64;
    let se = if l > 1 { (var / l as f64).sqrt() } else { f64::INFINITY };
    (mean, se)
}

/// Sliced-Wasserstein kernel Gram `K_ij = exp(-lambda · SW_p^p(P_i, P_j))`.
///
/// All pairs share the same `l` projection directions, so the matrix is
/// exactly symmetric with a unit diagonal.
pub fn sw_kernel_gram<R: Rng>(
    dataset: &DistributionDataset,
    order: SwOrder,
    lambda: f64,
    l: usize,
    rng: &mut R,
) -> Result<GramMatrix> {
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("lambda must be positive ({lambda})")));
    }
    let m = dataset.len();
    let d = dataset.input_dim();
    let directions: Vec<Vec<f64>> = (0..l).map(|_| unit_direction(d, rng)).collect();

    // sorted projections per (direction, distribution)
    let projections = exec::map_indexed(l * m, |slot| {
        let dir = slot / m;
        let dist = slot % m;
        sorted_projection(dataset.get(dist).samples(), &directions[dir])
    });

    let n_pairs = m * (m - 1) / 2;
    let pair = |k: usize| -> (usize, usize) {
        let mut i = 0usize;
        let mut remaining = k;
        let mut row_len = m - 1;
        while remaining >= row_len {
            remaining -= row_len;
            i += 1;
            row_len -= 1;
        }
        (i, i + 1 + remaining)
    };
    let sw = exec::map_indexed(n_pairs, |k| {
        let (i, j) = pair(k);
        let mut acc = 0.0;
        for dir in 0..l {
            acc += wasserstein_1d_pow(&projections[dir * m + i], &projections[dir * m + j], order);
        }
        acc / l as f64
    });

    let mut values = nalgebra::DMatrix::zeros(m, m);
    for i in 0..m {
        values[(i, i)] = 1.0;
    }
    for (k, v) in sw.into_iter().enumerate() {
        let (i, j) = pair(k);
        let kernel = (-lambda * v).exp();
        values[(i, j)] = kernel;
        values[(j, i)] = kernel;
    }
    GramMatrix::new(
        values,
        GramKind::DistributionKernel(order.family()),
        dataset.ids(),
    )
}

/// Raw samples of a dataset wrapped for SW-side use of the encoded-gram API.
pub fn raw_encoded(dataset: &DistributionDataset) -> Vec<Encoded> {
    dataset
        .iter()
        .map(|d| Encoded::uniform(d.id(), d.samples().clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_sphere_mixture;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_samples_give_zero() {
        let p = array![[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sw = sliced_wasserstein(&p, &p.clone(), SwOrder::Two, 50, &mut rng);
        assert_eq!(sw, 0.0);
    }

    #[test]
    fn one_dimensional_singletons_reduce_to_absolute_difference() {
        let p = array![[1.5]];
        let q = array![[-2.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // in d=1 the direction is ±1, so SW_1 = |a - b| exactly
        let sw = sliced_wasserstein(&p, &q, SwOrder::One, 25, &mut rng);
        assert!((sw - 3.5).abs() < 1e-12, "sw={sw}");
    }

    #[test]
    fn matches_high_projection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = array![[0.0, 0.0], [1.0, 0.5], [0.5, 1.0], [0.2, 0.8]];
        let q = array![[2.0, 1.0], [3.0, 1.5], [2.5, 2.0]];
        let (estimate, se_est) =
            sliced_wasserstein_with_se(&p, &q, SwOrder::Two, 200, &mut rng);
        let (oracle, se_oracle) =
            sliced_wasserstein_with_se(&p, &q, SwOrder::Two, 10_000, &mut rng);
        let tolerance = 3.0 * (se_est * se_est + se_oracle * se_oracle).sqrt();
        assert!(
            (estimate - oracle).abs() <= tolerance,
            "estimate {estimate} vs oracle {oracle} (tol {tolerance})"
        );
    }

    #[test]
    fn unequal_counts_are_resampled() {
        // same underlying grid, different resolutions: distance stays small
        let p = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let q = array![[0.0], [2.0], [4.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sw = sliced_wasserstein(&p, &q, SwOrder::One, 10, &mut rng);
        assert!(sw < 0.3, "sw={sw}");
    }

    #[test]
    fn sw_gram_has_unit_diagonal_and_is_psd() {
        let ds = synth_sphere_mixture(4, 30, 3, 0.4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gram = sw_kernel_gram(&ds, SwOrder::One, 1.0, 60, &mut rng).unwrap();
        for i in 0..4 {
            assert_eq!(gram.values()[(i, i)], 1.0);
        }
        let min_eig = gram.min_normalized_eigenvalue();
        assert!(min_eig > -1e-8, "min eigenvalue {min_eig}");
    }

    #[test]
    fn identical_dataset_entries_give_all_ones_gram() {
        let base = synth_sphere_mixture(2, 10, 3, 0.2, 10);
        let copies: Vec<crate::data::EmpiricalDistribution> = (0..3)
            .map(|i| {
                crate::data::EmpiricalDistribution::new(
                    format!("copy{i}"),
                    base.get(0).samples().clone(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let ds = crate::data::DistributionDataset::new("copies", copies).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gram = sw_kernel_gram(&ds, SwOrder::Two, 2.0, 40, &mut rng).unwrap();
        for v in gram.values().iter() {
            assert_eq!(*v, 1.0);
        }
    }
}
