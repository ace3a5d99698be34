//! Analytic gradients of the training loss, with a finite-difference oracle.
//!
//! The loss of a batch of B encoded distributions (S samples each) is
//! assembled in fixed stages: encoder -> pairwise embedding-kernel blocks ->
//! block means (mean-embedding Gram G) -> squared MMD d² -> family map K ->
//! Frobenius / log-det scalars. Each stage has a closed-form Jacobian:
//!
//! * entropy term: `dL/dK_ij = 2 K_ij / ΣΣ K²`
//! * log-det term: `dΩ/dK = -(1/B) · inv((1/B)K + jitter·I)` (symmetrized)
//! * gaussian family: `dK/dd² = -(g2/2) K`; cauchy: `-g2 K²`; imq: `-(g2/2) K³`
//! * `d²_ij = G_ii + G_jj - 2 G_ij`
//! * embedding kernel: `dk(z,z')/dz = -g1 · k(z,z') · (z - z')`
//! * sphere normalization `y = u/||u||`: Jacobian `(I - y yᵀ)/||u||`
//!
//! The reverse sweep is hand-written against this fixed graph rather than a
//! general tape, and is checked coordinate-wise against central finite
//! differences of the identical loss expression.

use nalgebra::DMatrix;
use ndarray::Array2;

use super::{Encoder, EncoderInput, MlpCache};
use crate::error::{Error, Result};
use crate::exec;
use crate::kernels::{embedding_kernel, mean_inner, KernelFamily, ResolvedKernel};
use crate::mat;
use crate::objective::{factorize_normalized, normalized_frobenius_sq};

/// Flat per-parameter gradients (layout matches
/// [`Encoder::params_flat`](super::Encoder::params_flat)) plus the loss value.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// Everything the forward pass produced for one batch.
pub(crate) struct BatchForward {
    pub z: Vec<Array2<f64>>,
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub loss: f64,
    caches: Option<Vec<MlpCache>>,
    inverse: Option<DMatrix<f64>>,
}

fn validate(batch: &[EncoderInput], kernel: &ResolvedKernel, epsilon: f64) -> Result<usize> {
    if batch.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 distributions in a batch, got {}",
            batch.len()
        )));
    }
    let s = batch[0].len();
    if s == 0 {
        return Err(Error::Invalid("empty distribution in batch".to_string()));
    }
    if batch.iter().any(|b| b.len() != s) {
        return Err(Error::Invalid(
            "all batch distributions must have the same subsample size".to_string(),
        ));
    }
    match kernel.family {
        KernelFamily::Gaussian | KernelFamily::Cauchy | KernelFamily::Imq => {}
        KernelFamily::Linear => {
            return Err(Error::FamilyMismatch(
                "linear kernel lacks a unit diagonal and is excluded from training".to_string(),
            ))
        }
        KernelFamily::Sw1 | KernelFamily::Sw2 => {
            return Err(Error::FamilyMismatch(
                "sliced-Wasserstein kernels are not differentiable through the encoder".to_string(),
            ))
        }
    }
    if epsilon < 0.0 {
        return Err(Error::Invalid("epsilon must be nonnegative".to_string()));
    }
    Ok(s)
}

fn family_dk_dd2(family: KernelFamily, k_val: f64, gamma2: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => -(gamma2 / 2.0) * k_val,
        KernelFamily::Cauchy => -gamma2 * k_val * k_val,
        KernelFamily::Imq => -(gamma2 / 2.0) * k_val * k_val * k_val,
        _ => unreachable!("validated"),
    }
}

fn forward(
    encoder: &Encoder,
    batch: &[EncoderInput],
    kernel: &ResolvedKernel,
    epsilon: f64,
    keep_grad_state: bool,
) -> Result<BatchForward> {
    validate(batch, kernel, epsilon)?;
    let b = batch.len();

    let mut z = Vec::with_capacity(b);
    let mut caches = Vec::with_capacity(b);
    for input in batch {
        match (encoder, input) {
            (Encoder::Mlp(mlp), EncoderInput::Real(x)) => {
                let (zi, cache) = mlp.forward_with_cache(x)?;
                z.push(zi);
                if keep_grad_state {
                    caches.push(cache);
                }
            }
            _ => z.push(encoder.encode(input)?),
        }
    }

    // mean-embedding Gram over the batch
    let n_pairs = b * (b + 1) / 2;
    let pair = |k: usize| -> (usize, usize) {
        let mut i = 0usize;
        let mut remaining = k;
        let mut row_len = b;
        while remaining >= row_len {
            remaining -= row_len;
            i += 1;
            row_len -= 1;
        }
        (i, i + remaining)
    };
    let entries = exec::map_indexed(n_pairs, |idx| {
        let (i, j) = pair(idx);
        mean_inner(&z[i], &z[j], kernel.gamma1)
    });
    let mut g = DMatrix::zeros(b, b);
    for (idx, v) in entries.into_iter().enumerate() {
        let (i, j) = pair(idx);
        g[(i, j)] = v;
        g[(j, i)] = v;
    }

    let mut k_mat = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let d2 = (g[(i, i)] + g[(j, j)] - 2.0 * g[(i, j)]).max(0.0);
            k_mat[(i, j)] = match kernel.family {
                KernelFamily::Gaussian => (-(kernel.gamma2 / 2.0) * d2).exp(),
                KernelFamily::Cauchy => 1.0 / (1.0 + kernel.gamma2 * d2),
                KernelFamily::Imq => (1.0 + kernel.gamma2 * d2).powf(-0.5),
                _ => unreachable!("validated"),
            };
        }
    }

    let mut loss = normalized_frobenius_sq(&k_mat).ln();
    let mut inverse = None;
    if epsilon > 0.0 {
        let factorized = factorize_normalized(&k_mat, kernel.jitter)?;
        loss += epsilon * factorized.log_det_reg;
        if keep_grad_state {
            inverse = Some(factorized.cholesky.inverse());
        }
    }

    Ok(BatchForward {
        z,
        g,
        k: k_mat,
        loss,
        caches: if keep_grad_state && !caches.is_empty() {
            Some(caches)
        } else {
            None
        },
        inverse,
    })
}

/// The training loss alone, through the identical expression the gradient
/// differentiates.
pub fn loss_only(
    encoder: &Encoder,
    batch: &[EncoderInput],
    kernel: &ResolvedKernel,
    epsilon: f64,
) -> Result<f64> {
    Ok(forward(encoder, batch, kernel, epsilon, false)?.loss)
}

/// Loss and analytic parameter gradients for one batch.
pub fn loss_and_gradient(
    encoder: &Encoder,
    batch: &[EncoderInput],
    kernel: &ResolvedKernel,
    epsilon: f64,
) -> Result<GradientBundle> {
    Ok(loss_and_gradient_full(encoder, batch, kernel, epsilon)?.0)
}

/// As [`loss_and_gradient`], also returning the batch forward state so
/// callers can derive metrics without recomputation.
pub(crate) fn loss_and_gradient_full(
    encoder: &Encoder,
    batch: &[EncoderInput],
    kernel: &ResolvedKernel,
    epsilon: f64,
) -> Result<(GradientBundle, BatchForward)> {
    let fwd = forward(encoder, batch, kernel, epsilon, true)?;
    let b = batch.len();
    let s = batch[0].len();
    let dl = encoder.latent_dim();

    // dL/dK
    let mut frob_sum = 0.0;
    for i in 0..b {
        for j in 0..b {
            frob_sum += fwd.k[(i, j)] * fwd.k[(i, j)];
        }
    }
    let mut dk: DMatrix<f64> = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let mut v = 2.0 * fwd.k[(i, j)] / frob_sum;
            if epsilon > 0.0 {
                let inv = fwd.inverse.as_ref().expect("kept for gradient");
                let sym = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                v += epsilon * (-(1.0 / b as f64) * sym);
            }
            dk[(i, j)] = v;
        }
    }

    // through the family map to d², then to G
    let mut dg: DMatrix<f64> = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let p = dk[(i, j)] * family_dk_dd2(kernel.family, fwd.k[(i, j)], kernel.gamma2);
            dg[(i, i)] += p;
            dg[(j, j)] += p;
            dg[(i, j)] -= 2.0 * p;
        }
    }
    // combined weight for ordered pair sums over encoded samples
    let mut w: DMatrix<f64> = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            w[(i, j)] = dg[(i, j)] + dg[(j, i)];
        }
    }

    // dL/dz for every encoded sample
    let z = &fwd.z;
    let gamma1 = kernel.gamma1;
    let scale = 1.0 / (s as f64 * s as f64);
    let gz = exec::map_indexed(b * s, |slot| {
        let i = slot / s;
        let a = slot % s;
        let za = mat::row(&z[i], a);
        let mut acc: Vec<f64> = vec![0.0; dl];
        for j in 0..b {
            let weight: f64 = w[(i, j)];
            if weight == 0.0 {
                continue;
            }
            for bidx in 0..s {
                let zb = mat::row(&z[j], bidx);
                let kv = embedding_kernel(za, zb, gamma1);
                let coef: f64 = -gamma1 * weight * kv * scale;
                for (c, (x, y)) in za.iter().zip(zb.iter()).enumerate() {
                    acc[c] += coef * (x - y);
                }
            }
        }
        acc
    });

    // accumulate into parameter space
    let mut grads = vec![0.0; encoder.param_count()];
    match encoder {
        Encoder::Table(table) => {
            let d = table.table.ncols();
            for (i, input) in batch.iter().enumerate() {
                let indices = match input {
                    EncoderInput::Indices(v) => v,
                    EncoderInput::Real(_) => unreachable!("encode would have failed"),
                };
                for (a, &idx) in indices.iter().enumerate() {
                    let dz = &gz[i * s + a];
                    for c in 0..d {
                        grads[idx * d + c] += dz[c];
                    }
                }
            }
        }
        Encoder::Mlp(mlp) => {
            let caches = fwd.caches.as_ref().expect("kept for gradient");
            let h = mlp.w1.nrows();
            let d_in = mlp.w1.ncols();
            let (w1_off, b1_off) = (0usize, h * d_in);
            let (w2_off, b2_off) = (b1_off + h, b1_off + h + dl * h);
            let mut du = vec![0.0; dl];
            let mut dhpre = vec![0.0; h];
            let mut hidden = vec![0.0; h];
            for (i, input) in batch.iter().enumerate() {
                let x = match input {
                    EncoderInput::Real(m) => m,
                    EncoderInput::Indices(_) => unreachable!("encode would have failed"),
                };
                let cache = &caches[i];
                for a in 0..s {
                    let dz = &gz[i * s + a];
                    let y = mat::row(&z[i], a);
                    let unorm = cache.unorm[a];
                    let y_dot_dz = mat::dot(y, dz);
                    for c in 0..dl {
                        du[c] = (dz[c] - y[c] * y_dot_dz) / unorm;
                    }
                    let hpre = mat::row(&cache.hpre, a);
                    for (k, hp) in hpre.iter().enumerate() {
                        hidden[k] = hp.max(0.0);
                    }
                    // w2: d x h, row-major
                    for c in 0..dl {
                        let base = w2_off + c * h;
                        for k in 0..h {
                            grads[base + k] += du[c] * hidden[k];
                        }
                        grads[b2_off + c] += du[c];
                    }
                    for k in 0..h {
                        let mut acc = 0.0;
                        for c in 0..dl {
                            acc += mlp.w2[(c, k)] * du[c];
                        }
                        dhpre[k] = if hpre[k] > 0.0 { acc } else { 0.0 };
                    }
                    let xa = mat::row(x, a);
                    for k in 0..h {
                        if dhpre[k] == 0.0 {
                            continue;
                        }
                        let base = w1_off + k * d_in;
                        for e in 0..d_in {
                            grads[base + e] += dhpre[k] * xa[e];
                        }
                        grads[b1_off + k] += dhpre[k];
                    }
                }
            }
        }
    }

    if !fwd.loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(
            "loss or gradient (check bandwidth configuration)".to_string(),
        ));
    }

    Ok((
        GradientBundle {
            loss: fwd.loss,
            grads,
        },
        fwd,
    ))
}

/// Central finite differences of the identical loss expression, per
/// parameter coordinate. Intended for small encoders (≲ 10³ parameters).
pub fn finite_difference_gradient(
    encoder: &Encoder,
    batch: &[EncoderInput],
    kernel: &ResolvedKernel,
    epsilon: f64,
    step: f64,
) -> Result<GradientBundle> {
    assert!(step > 0.0, "step must be positive");
    let loss = loss_only(encoder, batch, kernel, epsilon)?;
    let base = encoder.params_flat();
    let mut probe = encoder.clone();
    let mut grads = vec![0.0; base.len()];
    let mut params = base.clone();
    for c in 0..base.len() {
        params[c] = base[c] + step;
        probe.set_params_flat(&params)?;
        let plus = loss_only(&probe, batch, kernel, epsilon)?;
        params[c] = base[c] - step;
        probe.set_params_flat(&params)?;
        let minus = loss_only(&probe, batch, kernel, epsilon)?;
        params[c] = base[c];
        grads[c] = (plus - minus) / (2.0 * step);
    }
    Ok(GradientBundle { loss, grads })
}
