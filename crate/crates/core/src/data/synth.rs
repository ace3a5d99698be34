//! Synthetic dataset generators for experiments and tests.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DistributionDataset, EmpiricalDistribution};
use crate::mat;

fn unit_gaussian_vector<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = mat::norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Well-separated center directions on the unit sphere. For `m <= 2d` the
/// centers are the signed standard-basis axes (+e1, -e1, +e2, ...), which are
/// maximally separated; otherwise centers are drawn uniformly under a
/// minimum-angle constraint that relaxes if placement stalls.
fn sphere_centers<R: Rng>(m: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    if m <= 2 * d {
        (0..m)
            .map(|k| {
                let mut c = vec![0.0; d];
                c[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                c
            })
            .collect()
    } else {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut min_cos = (std::f64::consts::FRAC_PI_4).cos();
        let mut stalls = 0usize;
        while centers.len() < m {
            let candidate = unit_gaussian_vector(d, rng);
            let ok = centers.iter().all(|c| mat::dot(c, &candidate) < min_cos);
            if ok {
                centers.push(candidate);
                stalls = 0;
            } else {
                stalls += 1;
                if stalls > 200 {
                    // relax the separation constraint rather than loop forever
                    min_cos = 1.0 - (1.0 - min_cos) * 0.9;
                    stalls = 0;
                }
            }
        }
        centers
    }
}

/// `m` noisy clusters on the sphere `S^{d-1}`: per cluster, `n` points drawn
/// as `center + spread * gaussian`, renormalized to unit length. Labels are
/// the cluster index. `spread -> 0` degenerates each cluster to its center;
/// large `spread` approaches a uniform cloud.
pub fn synth_sphere_mixture(
    m: usize,
    n: usize,
    d: usize,
    spread: f64,
    seed: u64,
) -> DistributionDataset {
    assert!(m >= 2, "need at least two distributions");
    assert!(d >= 2, "need at least two dimensions");
    assert!(spread > 0.0, "spread must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = sphere_centers(m, d, &mut rng);

    let mut dists = Vec::with_capacity(m);
    for (k, center) in centers.iter().enumerate() {
        let mut samples = Array2::zeros((n, d));
        for i in 0..n {
            let row = mat::row_mut(&mut samples, i);
            for (j, r) in row.iter_mut().enumerate() {
                let g: f64 = rng.sample(StandardNormal);
                *r = center[j] + spread * g;
            }
            let norm = mat::norm(row);
            if norm == 0.0 {
                row[0] = 1e-12;
            }
            let norm = mat::norm(row);
            for r in row.iter_mut() {
                *r /= norm;
            }
        }
        dists.push(
            EmpiricalDistribution::new(format!("sphere-{k:03}"), samples, Some(k as i64))
                .expect("generated samples are finite"),
        );
    }
    DistributionDataset::new("sphere-mixture", dists).expect("generator invariants hold")
}

/// Balanced two-class task: class 0 distributions are unit-covariance
/// Gaussians whose means scatter around `+separation * e1`, class 1 around
/// `-separation * e1`. At `separation = 0` the two class-conditional laws
/// coincide.
pub fn synth_two_class_task(
    m_per_class: usize,
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> DistributionDataset {
    assert!(m_per_class >= 2, "need at least two distributions per class");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dists = Vec::with_capacity(2 * m_per_class);
    for class in 0..2usize {
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for k in 0..m_per_class {
            // per-distribution mean: class anchor plus unit-scale scatter
            let mut mean: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            mean[0] += sign * separation;
            let mut samples = Array2::zeros((n, d));
            for i in 0..n {
                let row = mat::row_mut(&mut samples, i);
                for (j, r) in row.iter_mut().enumerate() {
                    let g: f64 = rng.sample(StandardNormal);
                    *r = mean[j] + g;
                }
            }
            dists.push(
                EmpiricalDistribution::new(
                    format!("c{class}-{k:03}"),
                    samples,
                    Some(class as i64),
                )
                .expect("generated samples are finite"),
            );
        }
    }
    DistributionDataset::new("two-class", dists).expect("generator invariants hold")
}
