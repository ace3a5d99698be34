//! Trainable encoders onto the unit hypersphere.
//!
//! Two parametrizations: a [`TableEncoder`] mapping finite-support indices to
//! learned points on the sphere (rows are parameters; a retraction after each
//! optimizer step keeps them unit-norm), and a two-layer ReLU [`MlpEncoder`]
//! whose output is L2-normalized inside the forward map, leaving its
//! parameters unconstrained.
//!
//! [`gradient::loss_and_gradient`] differentiates the full training loss with
//! closed-form stage Jacobians; [`gradient::finite_difference_gradient`] is
//! the central-difference oracle it is checked against.

pub mod gradient;

pub use gradient::{finite_difference_gradient, loss_and_gradient, loss_only, GradientBundle};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Table,
    Mlp,
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EncoderKind::Table => "table",
            EncoderKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(EncoderKind::Table),
            "mlp" => Ok(EncoderKind::Mlp),
            other => Err(Error::Invalid(format!("unknown encoder kind `{other}`"))),
        }
    }
}

/// Encoder shape: `input` is the support size (table) or input dimension
/// (mlp), `hidden` the MLP width (ignored for tables), `latent` the sphere
/// dimension d of `S^{d-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    pub input: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub latent: usize,
}

pub(crate) fn default_hidden() -> usize {
    64
}

/// Lookup table from support indices to points on the sphere.
#[derive(Debug, Clone)]
pub struct TableEncoder {
    /// V x d, rows unit-norm.
    pub(crate) table: Array2<f64>,
}

/// Two-layer ReLU network with L2-normalized output.
#[derive(Debug, Clone)]
pub struct MlpEncoder {
    pub(crate) w1: Array2<f64>, // h x d_in
    pub(crate) b1: Vec<f64>,    // h
    pub(crate) w2: Array2<f64>, // d x h
    pub(crate) b2: Vec<f64>,    // d
}

#[derive(Debug, Clone)]
pub enum Encoder {
    Table(TableEncoder),
    Mlp(MlpEncoder),
}

/// One distribution's samples as the encoder sees them.
#[derive(Debug, Clone)]
pub enum EncoderInput {
    /// Raw coordinates (rows), for the MLP.
    Real(Array2<f64>),
    /// Support indices, for the table.
    Indices(Vec<usize>),
}

impl EncoderInput {
    pub fn len(&self) -> usize {
        match self {
            EncoderInput::Real(m) => m.nrows(),
            EncoderInput::Indices(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Normalize every row to unit length. A zero row is nudged to `e1` first
/// (the same perturbation the MLP forward map applies).
pub fn project_rows_to_sphere(matrix: &mut Array2<f64>) {
    for i in 0..matrix.nrows() {
        let row = mat::row_mut(matrix, i);
        let mut norm = mat::norm(row);
        if norm == 0.0 {
            row[0] = 1e-12;
            norm = 1e-12;
        }
        for v in row.iter_mut() {
            *v /= norm;
        }
    }
}

fn matvec(w: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.ncols(), x.len());
    debug_assert_eq!(w.nrows(), out.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o = mat::dot(mat::row(w, i), x);
    }
}

/// Forward-pass intermediates for one MLP-encoded distribution, kept for the
/// backward pass.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    /// Pre-activation of the hidden layer, S x h.
    pub hpre: Array2<f64>,
    /// Pre-normalization output (after the zero-row nudge), S x d.
    pub u: Array2<f64>,
    /// Norms of the rows of `u`.
    pub unorm: Vec<f64>,
}

impl MlpEncoder {
    pub(crate) fn forward_with_cache(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let d_in = self.w1.ncols();
        if x.ncols() != d_in {
            return Err(Error::DimensionMismatch(format!(
                "mlp expects inputs of dimension {d_in}, got {}",
                x.ncols()
            )));
        }
        let s = x.nrows();
        let h = self.w1.nrows();
        let d = self.w2.nrows();
        let mut hpre = Array2::zeros((s, h));
        let mut u = Array2::zeros((s, d));
        let mut z = Array2::zeros((s, d));
        let mut unorm = vec![0.0; s];
        let mut hidden = vec![0.0; h];
        for a in 0..s {
            let xa = mat::row(x, a);
            let hp = mat::row_mut(&mut hpre, a);
            matvec(&self.w1, xa, hp);
            for (v, b) in hp.iter_mut().zip(self.b1.iter()) {
                *v += b;
            }
            for (dst, src) in hidden.iter_mut().zip(hp.iter()) {
                *dst = src.max(0.0);
            }
            let ua = mat::row_mut(&mut u, a);
            matvec(&self.w2, &hidden, ua);
            for (v, b) in ua.iter_mut().zip(self.b2.iter()) {
                *v += b;
            }
            let mut norm = mat::norm(ua);
            if norm == 0.0 {
                ua[0] = 1e-12;
                norm = 1e-12;
            }
            unorm[a] = norm;
            let za = mat::row_mut(&mut z, a);
            for (dst, src) in za.iter_mut().zip(ua.iter()) {
                *dst = src / norm;
            }
        }
        Ok((z, MlpCache { hpre, u, unorm }))
    }
}

impl Encoder {
    /// Initialize from a seeded stream: table rows are uniform on the sphere
    /// (normalized Gaussians), MLP weights are centered uniform with
    /// half-width `sqrt(6/(fan_in+fan_out))` and zero biases.
    pub fn init<R: Rng>(kind: EncoderKind, dims: EncoderDims, rng: &mut R) -> Result<Self> {
        if dims.latent < 1 || dims.input < 1 {
            return Err(Error::Invalid(format!("invalid encoder dims {dims:?}")));
        }
        match kind {
            EncoderKind::Table => {
                let mut table = Array2::zeros((dims.input, dims.latent));
                for i in 0..dims.input {
                    let row = mat::row_mut(&mut table, i);
                    for v in row.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                }
                project_rows_to_sphere(&mut table);
                Ok(Encoder::Table(TableEncoder { table }))
            }
            EncoderKind::Mlp => {
                if dims.hidden < 1 {
                    return Err(Error::Invalid("mlp hidden width must be >= 1".to_string()));
                }
                let (d_in, h, d) = (dims.input, dims.hidden, dims.latent);
                let a1 = (6.0 / (d_in + h) as f64).sqrt();
                let a2 = (6.0 / (h + d) as f64).sqrt();
                let mut w1 = Array2::zeros((h, d_in));
                for v in w1.iter_mut() {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * a1;
                }
                let mut w2 = Array2::zeros((d, h));
                for v in w2.iter_mut() {
                    *v = (rng.random::<f64>() * 2.0 - 1.0) * a2;
                }
                Ok(Encoder::Mlp(MlpEncoder {
                    w1,
                    b1: vec![0.0; h],
                    w2,
                    b2: vec![0.0; d],
                }))
            }
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Table(_) => EncoderKind::Table,
            Encoder::Mlp(_) => EncoderKind::Mlp,
        }
    }

    pub fn dims(&self) -> EncoderDims {
        match self {
            Encoder::Table(t) => EncoderDims {
                input: t.table.nrows(),
                hidden: 0,
                latent: t.table.ncols(),
            },
            Encoder::Mlp(m) => EncoderDims {
                input: m.w1.ncols(),
                hidden: m.w1.nrows(),
                latent: m.w2.nrows(),
            },
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.dims().latent
    }

    /// Named parameter blocks and their shapes, in flattening order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            Encoder::Table(t) => vec![(
                "table".to_string(),
                vec![t.table.nrows(), t.table.ncols()],
            )],
            Encoder::Mlp(m) => vec![
                ("w1".to_string(), vec![m.w1.nrows(), m.w1.ncols()]),
                ("b1".to_string(), vec![m.b1.len()]),
                ("w2".to_string(), vec![m.w2.nrows(), m.w2.ncols()]),
                ("b2".to_string(), vec![m.b2.len()]),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum()
    }

    /// All parameters flattened row-major in layout order.
    pub fn params_flat(&self) -> Vec<f64> {
        match self {
            Encoder::Table(t) => t.table.iter().copied().collect(),
            Encoder::Mlp(m) => {
                let mut out = Vec::with_capacity(self.param_count());
                out.extend(m.w1.iter());
                out.extend(m.b1.iter());
                out.extend(m.w2.iter());
                out.extend(m.b2.iter());
                out
            }
        }
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        match self {
            Encoder::Table(t) => {
                for (dst, src) in t.table.iter_mut().zip(flat.iter()) {
                    *dst = *src;
                }
            }
            Encoder::Mlp(m) => {
                let mut offset = 0usize;
                for (dst, src) in m.w1.iter_mut().zip(flat[offset..].iter()) {
                    *dst = *src;
                }
                offset += m.w1.len();
                for (dst, src) in m.b1.iter_mut().zip(flat[offset..].iter()) {
                    *dst = *src;
                }
                offset += m.b1.len();
                for (dst, src) in m.w2.iter_mut().zip(flat[offset..].iter()) {
                    *dst = *src;
                }
                offset += m.w2.len();
                for (dst, src) in m.b2.iter_mut().zip(flat[offset..].iter()) {
                    *dst = *src;
                }
            }
        }
        Ok(())
    }

    /// Encode one distribution's samples to unit-norm latent rows.
    pub fn encode(&self, input: &EncoderInput) -> Result<Array2<f64>> {
        match (self, input) {
            (Encoder::Table(t), EncoderInput::Indices(idx)) => {
                let v = t.table.nrows();
                let d = t.table.ncols();
                let mut z = Array2::zeros((idx.len(), d));
                for (k, &i) in idx.iter().enumerate() {
                    if i >= v {
                        return Err(Error::IndexOutOfRange {
                            index: i,
                            support_size: v,
                        });
                    }
                    mat::row_mut(&mut z, k).copy_from_slice(mat::row(&t.table, i));
                }
                Ok(z)
            }
            (Encoder::Mlp(m), EncoderInput::Real(x)) => Ok(m.forward_with_cache(x)?.0),
            (Encoder::Table(_), EncoderInput::Real(_)) => Err(Error::Invalid(
                "table encoder expects support indices, got raw samples".to_string(),
            )),
            (Encoder::Mlp(_), EncoderInput::Indices(_)) => Err(Error::Invalid(
                "mlp encoder expects raw samples, got support indices".to_string(),
            )),
        }
    }

    /// Retract table rows to the sphere after an optimizer step. No-op for
    /// the MLP (its forward map normalizes).
    pub fn retract(&mut self) {
        if let Encoder::Table(t) = self {
            project_rows_to_sphere(&mut t.table);
        }
    }

    pub fn table(&self) -> Option<&Array2<f64>> {
        match self {
            Encoder::Table(t) => Some(&t.table),
            Encoder::Mlp(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_lookup_returns_exact_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::init(
            EncoderKind::Table,
            EncoderDims {
                input: 5,
                hidden: 0,
                latent: 3,
            },
            &mut rng,
        )
        .unwrap();
        let z = enc.encode(&EncoderInput::Indices(vec![2, 2, 4])).unwrap();
        let table = enc.table().unwrap();
        assert_eq!(mat::row(&z, 0), mat::row(table, 2));
        assert_eq!(mat::row(&z, 1), mat::row(table, 2));
        assert_eq!(mat::row(&z, 2), mat::row(table, 4));
    }

    #[test]
    fn table_rejects_out_of_range_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let enc = Encoder::init(
            EncoderKind::Table,
            EncoderDims {
                input: 4,
                hidden: 0,
                latent: 2,
            },
            &mut rng,
        )
        .unwrap();
        assert!(matches!(
            enc.encode(&EncoderInput::Indices(vec![4])),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn constant_mlp_maps_everything_to_e1() {
        let enc = Encoder::Mlp(MlpEncoder {
            w1: Array2::zeros((3, 2)),
            b1: vec![0.0; 3],
            w2: Array2::zeros((3, 3)),
            b2: vec![1.0, 0.0, 0.0],
        });
        let z = enc
            .encode(&EncoderInput::Real(array![[0.3, -0.7], [5.0, 2.0]]))
            .unwrap();
        for i in 0..2 {
            assert_eq!(mat::row(&z, i), &[1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn mlp_outputs_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = Encoder::init(
            EncoderKind::Mlp,
            EncoderDims {
                input: 3,
                hidden: 8,
                latent: 4,
            },
            &mut rng,
        )
        .unwrap();
        let mut x = Array2::zeros((10, 3));
        for v in x.iter_mut() {
            *v = rng.random::<f64>() * 4.0 - 2.0;
        }
        let z = enc.encode(&EncoderInput::Real(x)).unwrap();
        for i in 0..z.nrows() {
            let norm = mat::norm(mat::row(&z, i));
            assert!((norm - 1.0).abs() < 1e-9, "row {i} norm {norm}");
        }
    }

    #[test]
    fn zero_preactivation_is_nudged_not_nan() {
        let enc = Encoder::Mlp(MlpEncoder {
            w1: Array2::zeros((2, 2)),
            b1: vec![0.0; 2],
            w2: Array2::zeros((2, 2)),
            b2: vec![0.0; 2],
        });
        let z = enc.encode(&EncoderInput::Real(array![[1.0, 1.0]])).unwrap();
        assert_eq!(mat::row(&z, 0), &[1.0, 0.0]);
    }

    #[test]
    fn projection_examples() {
        let mut m = array![[3.0, 4.0]];
        project_rows_to_sphere(&mut m);
        assert_eq!(mat::row(&m, 0), &[0.6, 0.8]);

        let mut unit = array![[0.6, 0.8]];
        project_rows_to_sphere(&mut unit);
        assert!((mat::row(&unit, 0)[0] - 0.6).abs() < 1e-15);
        assert!((mat::row(&unit, 0)[1] - 0.8).abs() < 1e-15);

        // idempotence
        let mut twice = array![[-2.5, 1.0, 7.0]];
        project_rows_to_sphere(&mut twice);
        let once: Vec<f64> = twice.iter().copied().collect();
        project_rows_to_sphere(&mut twice);
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_deterministic_given_seed() {
        let dims = EncoderDims {
            input: 6,
            hidden: 4,
            latent: 3,
        };
        for kind in [EncoderKind::Table, EncoderKind::Mlp] {
            let a = Encoder::init(kind, dims, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = Encoder::init(kind, dims, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a.params_flat(), b.params_flat());
        }
    }

    #[test]
    fn large_table_init_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = Encoder::init(
            EncoderKind::Table,
            EncoderDims {
                input: 10_000,
                hidden: 0,
                latent: 3,
            },
            &mut rng,
        )
        .unwrap();
        let table = enc.table().unwrap();
        let mut mean = [0.0; 3];
        for i in 0..table.nrows() {
            let row = mat::row(table, i);
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
            let norm = mat::norm(row);
            assert!((norm - 1.0).abs() < 1e-9);
        }
        for m in mean.iter_mut() {
            *m /= 10_000.0;
        }
        assert!(mat::norm(&mean) < 0.05, "mean norm {}", mat::norm(&mean));
    }

    #[test]
    fn params_roundtrip_through_flat_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = Encoder::init(
            EncoderKind::Mlp,
            EncoderDims {
                input: 3,
                hidden: 5,
                latent: 2,
            },
            &mut rng,
        )
        .unwrap();
        let flat = enc.params_flat();
        assert_eq!(flat.len(), enc.param_count());
        let mut bumped = flat.clone();
        bumped[7] += 0.5;
        enc.set_params_flat(&bumped).unwrap();
        assert_eq!(enc.params_flat(), bumped);
    }

    #[test]
    fn encode_is_a_pure_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let enc = Encoder::init(
            EncoderKind::Mlp,
            EncoderDims {
                input: 2,
                hidden: 4,
                latent: 3,
            },
            &mut rng,
        )
        .unwrap();
        let x = array![[0.5, -1.5], [2.0, 0.25]];
        let a = enc.encode(&EncoderInput::Real(x.clone())).unwrap();
        let b = enc.encode(&EncoderInput::Real(x)).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}
