//! Nearest-neighbor bandwidth heuristic.
//!
//! Bandwidths are set from the idealized geometry of points on the latent
//! hypersphere: `1/gamma` is `multiplier` times the average distance to the
//! nearest neighbor among `n` points sampled uniformly on `S^{d-1}`,
//! Monte-Carlo averaged over independent draws. For the embedding kernel `n`
//! is the batch size times the samples per distribution; for the distribution
//! kernel it is the number of training distributions.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::exec;
use crate::mat;

/// Mean distance from each point (a row) to its nearest neighbor.
pub fn mean_nn_distance(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    assert!(n >= 2, "nearest neighbor needs at least two points");
    let per_point = exec::map_indexed(n, |i| {
        let a = mat::row(points, i);
        let mut best = f64::INFINITY;
        for j in 0..n {
            if i == j {
                continue;
            }
            let d2 = mat::sq_dist(a, mat::row(points, j));
            if d2 < best {
                best = d2;
            }
        }
        best.sqrt()
    });
    per_point.iter().sum::<f64>() / n as f64
}

fn uniform_sphere_points<R: Rng>(n: usize, d: usize, rng: &mut R) -> Array2<f64> {
    let mut points = Array2::zeros((n, d));
    for i in 0..n {
        let row = mat::row_mut(&mut points, i);
        loop {
            for v in row.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let norm = mat::norm(row);
            if norm > 1e-12 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
                break;
            }
        }
    }
    points
}

/// `gamma = 1 / (multiplier * meanNN)` where `meanNN` is the Monte-Carlo
/// average nearest-neighbor distance among `n_points` uniform points on
/// `S^{d-1}`, over `mc_draws` independent draws.
pub fn bandwidth_heuristic<R: Rng>(
    n_points: usize,
    d: usize,
    multiplier: f64,
    mc_draws: usize,
    rng: &mut R,
) -> f64 {
    assert!(n_points >= 2, "need at least two points");
    assert!(d >= 2, "need at least two dimensions");
    assert!(mc_draws >= 1, "need at least one draw");
    let mut acc = 0.0;
    for _ in 0..mc_draws {
        let points = uniform_sphere_points(n_points, d, rng);
        acc += mean_nn_distance(&points);
    }
    let mean_nn = acc / mc_draws as f64;
    1.0 / (multiplier * mean_nn)
}
