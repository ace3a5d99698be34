//! Sequential minimal optimization for the C-SVM dual on a precomputed
//! kernel.
//!
//! Minimizes `f(a) = (1/2) aᵀQa - eᵀa` subject to `0 <= a_i <= C` and
//! `yᵀa = 0`, where `Q_ij = y_i y_j K_ij`. Working pairs are chosen by
//! first-order maximal violation: `i = argmax_{I_up} -y_t ∇f_t`,
//! `j = argmin_{I_low} -y_t ∇f_t`, stopping when the gap closes below the
//! KKT tolerance. Each pair is solved analytically with box clipping, and the
//! gradient is maintained incrementally.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub kkt_gap: f64,
}

const TAU: f64 = 1e-12;

/// Solve the dual for binary labels `y in {-1, +1}` over the kernel block
/// `k` (train x train).
pub(crate) fn smo_solve(
    k: &DMatrix<f64>,
    y: &[f64],
    c: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<SmoSolution> {
    let n = y.len();
    debug_assert_eq!(k.nrows(), n);
    let mut alpha = vec![0.0; n];
    // dual gradient: grad_t = sum_j Q_tj a_j - 1
    let mut grad = vec![-1.0; n];

    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];

    let mut iterations = 0usize;
    let gap = loop {
        // maximal violating pair
        let mut i_up = None;
        let mut m_val = f64::NEG_INFINITY;
        let mut j_low = None;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let in_low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if in_up && v > m_val {
                m_val = v;
                i_up = Some(t);
            }
            if in_low && v < m_low {
                m_low = v;
                j_low = Some(t);
            }
        }
        let (i, j) = match (i_up, j_low) {
            (Some(i), Some(j)) => (i, j),
            _ => break 0.0, // no feasible pair left: optimal
        };
        let gap = m_val - m_low;
        if gap <= tol {
            break gap;
        }
        if iterations >= max_iterations {
            return Err(Error::NoConvergence {
                gap,
                iterations,
            });
        }
        iterations += 1;

        let old_i = alpha[i];
        let old_j = alpha[j];
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let delta_i = alpha[i] - old_i;
        let delta_j = alpha[j] - old_j;
        for t in 0..n {
            grad[t] += q(t, i) * delta_i + q(t, j) * delta_j;
        }
    };

    // bias from the KKT conditions: average -y*grad over free points, or the
    // midpoint of the bound-derived bracket when none are free
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (upper + lower) / 2.0
    };

    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        kkt_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_two_point_problem() {
        let k = DMatrix::identity(2, 2);
        let y = vec![1.0, -1.0];
        let sol = smo_solve(&k, &y, 1.0, 1e-3, 1000).unwrap();
        // decision values: f_t = sum_j a_j y_j K_tj - rho
        let f0 = sol.alpha[0] * 1.0 - sol.rho;
        let f1 = -sol.alpha[1] * 1.0 - sol.rho;
        assert!(f0 > 0.0, "f0 = {f0}");
        assert!(f1 < 0.0, "f1 = {f1}");
        assert!((sol.alpha[0] - sol.alpha[1]).abs() < 1e-9, "equality constraint");
    }

    #[test]
    fn orthogonal_kernel_makes_every_point_a_support_vector() {
        let n = 8;
        let k = DMatrix::identity(n, n);
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sol = smo_solve(&k, &y, 1.0, 1e-3, 10_000).unwrap();
        // analytic optimum: every alpha at min(C, 1) = 1
        for (t, a) in sol.alpha.iter().enumerate() {
            assert!((a - 1.0).abs() < 1e-3, "alpha[{t}] = {a}");
        }
        // 100% training accuracy
        for t in 0..n {
            let mut f = 0.0;
            for j in 0..n {
                f += sol.alpha[j] * y[j] * k[(t, j)];
            }
            f -= sol.rho;
            assert!(f * y[t] > 0.0, "point {t} misclassified");
        }
    }

    #[test]
    fn constraints_hold_after_convergence() {
        let n = 12;
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v = 0.9_f64.powi((i as i32 - j as i32).abs());
                k[(i, j)] = v;
            }
        }
        let y: Vec<f64> = (0..n).map(|i| if i < 6 { 1.0 } else { -1.0 }).collect();
        let c = 2.5;
        let sol = smo_solve(&k, &y, c, 1e-3, 100_000).unwrap();
        let mut balance = 0.0;
        for (a, yt) in sol.alpha.iter().zip(y.iter()) {
            assert!(*a >= -1e-8 && *a <= c + 1e-8, "box violated: {a}");
            balance += a * yt;
        }
        assert!(balance.abs() <= 1e-6, "equality constraint violated: {balance}");
        assert!(sol.kkt_gap <= 1e-3);
    }
}
