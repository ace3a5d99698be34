//! Mini-batch training loop.
//!
//! Each step draws a batch of distributions without replacement, subsamples a
//! fixed number of points from each, evaluates the loss and its gradient, and
//! applies a bias-corrected Adam update; table-encoder rows are retracted to
//! the sphere after every step. Bandwidths marked `auto` are resolved once
//! from the nearest-neighbor heuristic before the loop and stay fixed
//! throughout. The whole run is a deterministic function of (dataset,
//! configs, seed).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::encoders::{
    gradient::loss_and_gradient_full, Encoder, EncoderDims, EncoderInput, EncoderKind,
};
use crate::error::{Error, Result};
use crate::kernels::{bandwidth_heuristic, Bandwidth, KernelConfig, ResolvedKernel};
use crate::objective;

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_distributions: usize,
    pub samples_per_distribution: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// Log-det regularization strength; 0 trains the plain entropy loss.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_lr() -> f64 {
    5e-4
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

fn default_log_every() -> usize {
    10
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_distributions < 2 {
            return Err(Error::Invalid("batch_distributions must be >= 2".to_string()));
        }
        if self.samples_per_distribution < 1 {
            return Err(Error::Invalid(
                "samples_per_distribution must be >= 1".to_string(),
            ));
        }
        if self.steps < 1 {
            return Err(Error::Invalid("steps must be >= 1".to_string()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Invalid("lr must be positive".to_string()));
        }
        if self.log_every < 1 {
            return Err(Error::Invalid("log_every must be >= 1".to_string()));
        }
        if self.epsilon < 0.0 {
            return Err(Error::Invalid("epsilon must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Adam moment estimates.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place. Rejects non-finite gradients.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient in adam update".to_string()));
    }
    state.t += 1;
    let t = state.t as i32;
    let correction1 = 1.0 - config.adam_beta1.powi(t);
    let correction2 = 1.0 - config.adam_beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = config.adam_beta1 * *m + (1.0 - config.adam_beta1) * g;
        *v = config.adam_beta2 * *v + (1.0 - config.adam_beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= config.lr * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("parameter after adam update".to_string()));
    }
    Ok(())
}

/// One logged row of training metrics, computed on the step's batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub s2_nats: f64,
    pub v_gram: f64,
    pub avg_sq_norm: f64,
    pub mixture_sq_norm: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Serialized encoder parameters plus everything needed to rebuild the
/// kernel configuration that trained them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: EncoderKind,
    pub dims: EncoderDims,
    pub gamma1: f64,
    pub gamma2: f64,
    pub family: crate::kernels::KernelFamily,
    pub epsilon: f64,
    pub seed: u64,
    pub step_count: usize,
    pub parameters: Vec<ParamBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_encoder(
        encoder: &Encoder,
        kernel: &ResolvedKernel,
        epsilon: f64,
        seed: u64,
        step_count: usize,
    ) -> Self {
        let flat = encoder.params_flat();
        let mut parameters = Vec::new();
        let mut offset = 0usize;
        for (name, shape) in encoder.param_layout() {
            let len: usize = shape.iter().product();
            parameters.push(ParamBlock {
                name,
                shape,
                data: flat[offset..offset + len].to_vec(),
            });
            offset += len;
        }
        Checkpoint {
            kind: encoder.kind(),
            dims: encoder.dims(),
            gamma1: kernel.gamma1,
            gamma2: kernel.gamma2,
            family: kernel.family,
            epsilon,
            seed,
            step_count,
            parameters,
        }
    }

    /// Rebuild the encoder these parameters belong to.
    pub fn build_encoder(&self) -> Result<Encoder> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut encoder = Encoder::init(self.kind, self.dims, &mut rng)?;
        let expected = encoder.param_layout();
        if expected.len() != self.parameters.len() {
            return Err(Error::Invalid(format!(
                "checkpoint has {} parameter blocks, encoder expects {}",
                self.parameters.len(),
                expected.len()
            )));
        }
        let mut flat = Vec::with_capacity(encoder.param_count());
        for ((name, shape), block) in expected.iter().zip(self.parameters.iter()) {
            if *name != block.name || *shape != block.shape {
                return Err(Error::Invalid(format!(
                    "checkpoint block `{}` {:?} does not match expected `{}` {:?}",
                    block.name, block.shape, name, shape
                )));
            }
            let len: usize = shape.iter().product();
            if block.data.len() != len {
                return Err(Error::DimensionMismatch(format!(
                    "block `{}` has {} values for shape {:?}",
                    block.name,
                    block.data.len(),
                    block.shape
                )));
            }
            flat.extend_from_slice(&block.data);
        }
        encoder.set_params_flat(&flat)?;
        Ok(encoder)
    }

    pub fn resolved_kernel(&self) -> Result<ResolvedKernel> {
        ResolvedKernel::new(self.family, self.gamma1, self.gamma2, 1e-8)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub encoder: Encoder,
    pub checkpoint: Checkpoint,
    pub log: Vec<MetricRow>,
    pub kernel: ResolvedKernel,
}

/// Resolve `auto` bandwidths: the embedding kernel sees `B*S` points per
/// batch, the distribution kernel sees `M` mean embeddings, both idealized as
/// uniform on `S^{latent-1}`.
pub fn resolve_bandwidths(
    kernel_config: &KernelConfig,
    train_config: &TrainConfig,
    dataset_len: usize,
    latent_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let gamma1 = match kernel_config.gamma1 {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Auto => {
            let n = train_config.batch_distributions * train_config.samples_per_distribution;
            bandwidth_heuristic(n.max(2), latent_dim, 10.0, 20, rng)
        }
    };
    let gamma2 = match kernel_config.gamma2 {
        Bandwidth::Fixed(v) => v,
        Bandwidth::Auto => bandwidth_heuristic(dataset_len.max(2), latent_dim, 10.0, 20, rng),
    };
    if !(gamma1 > 0.0 && gamma1.is_finite()) || !(gamma2 > 0.0 && gamma2.is_finite()) {
        return Err(Error::Invalid(format!(
            "resolved bandwidths must be positive and finite (gamma1={gamma1}, gamma2={gamma2})"
        )));
    }
    Ok((gamma1, gamma2))
}

fn subsample_input(dataset: &Dataset, index: usize, s: usize, rng: &mut ChaCha8Rng) -> EncoderInput {
    match dataset {
        Dataset::Empirical(ds) => EncoderInput::Real(ds.get(index).subsample(s, rng).samples().clone()),
        Dataset::Support(ds) => EncoderInput::Indices(ds.get(index).sample_indices(s, rng)),
    }
}

/// Run the training loop. The encoder input dimension is inferred from the
/// dataset (ambient dimension for the MLP, support size for the table).
pub fn train(
    dataset: &Dataset,
    encoder_kind: EncoderKind,
    latent_dim: usize,
    hidden_dim: usize,
    train_config: &TrainConfig,
    kernel_config: &KernelConfig,
) -> Result<TrainOutcome> {
    train_config.validate()?;
    let m = dataset.len();
    if train_config.batch_distributions > m {
        return Err(Error::Invalid(format!(
            "batch of {} exceeds dataset size {m}",
            train_config.batch_distributions
        )));
    }
    let input_dim = match (dataset, encoder_kind) {
        (Dataset::Empirical(ds), EncoderKind::Mlp) => ds.input_dim(),
        (Dataset::Support(ds), EncoderKind::Table) => ds.support_size(),
        (Dataset::Empirical(_), EncoderKind::Table) => {
            return Err(Error::Invalid(
                "table encoder requires finite-support (histogram) data".to_string(),
            ))
        }
        (Dataset::Support(_), EncoderKind::Mlp) => {
            return Err(Error::Invalid(
                "mlp encoder requires raw-sample data".to_string(),
            ))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);
    let (gamma1, gamma2) = resolve_bandwidths(
        kernel_config,
        train_config,
        m,
        latent_dim,
        &mut rng,
    )?;
    let kernel = ResolvedKernel::new(kernel_config.dist_kernel, gamma1, gamma2, kernel_config.jitter)?;

    let dims = EncoderDims {
        input: input_dim,
        hidden: hidden_dim,
        latent: latent_dim,
    };
    let mut encoder = Encoder::init(encoder_kind, dims, &mut rng)?;
    let mut params = encoder.params_flat();
    let mut adam = AdamState::new(params.len());
    let mut log = Vec::new();

    let b = train_config.batch_distributions;
    let s = train_config.samples_per_distribution;
    for step in 0..train_config.steps {
        let chosen = rand::seq::index::sample(&mut rng, m, b).into_vec();
        let batch: Vec<EncoderInput> = chosen
            .iter()
            .map(|&i| subsample_input(dataset, i, s, &mut rng))
            .collect();
        let (bundle, fwd) =
            loss_and_gradient_full(&encoder, &batch, &kernel, train_config.epsilon)
                .map_err(|e| Error::Invalid(format!("step {step}: {e}")))?;

        if step % train_config.log_every == 0 {
            let s2 = objective::renyi2_raw(&fwd.k);
            let triple = objective::variance_from_raw(&fwd.g);
            let scaled = &fwd.k / (b as f64);
            let eigs = scaled.symmetric_eigen().eigenvalues;
            let mut min_eig = f64::INFINITY;
            let mut max_eig = f64::NEG_INFINITY;
            for e in eigs.iter() {
                min_eig = min_eig.min(*e);
                max_eig = max_eig.max(*e);
            }
            log.push(MetricRow {
                step,
                loss: bundle.loss,
                s2_nats: s2,
                v_gram: triple.v_gram,
                avg_sq_norm: triple.avg_sq_norm,
                mixture_sq_norm: triple.mixture_sq_norm,
                min_eig,
                max_eig,
            });
        }

        adam_step(&mut params, &bundle.grads, &mut adam, train_config)
            .map_err(|e| Error::Invalid(format!("step {step}: {e}")))?;
        encoder.set_params_flat(&params)?;
        encoder.retract();
        params = encoder.params_flat();
    }

    let checkpoint = Checkpoint::from_encoder(
        &encoder,
        &kernel,
        train_config.epsilon,
        train_config.seed,
        train_config.steps,
    );
    Ok(TrainOutcome {
        encoder,
        checkpoint,
        log,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_sphere_mixture;

    fn small_config(steps: usize) -> TrainConfig {
        TrainConfig {
            steps,
            batch_distributions: 4,
            samples_per_distribution: 8,
            lr: 5e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epsilon: 0.0,
            seed: 17,
            log_every: 1,
        }
    }

    fn kernel_config() -> KernelConfig {
        KernelConfig {
            gamma1: Bandwidth::Fixed(2.0),
            gamma2: Bandwidth::Fixed(3.0),
            ..KernelConfig::default()
        }
    }

    #[test]
    fn first_adam_step_moves_by_about_lr() {
        let config = small_config(1);
        let mut params = vec![1.0, -2.0, 0.5];
        let grads = vec![0.3, -0.7, 1e4];
        let mut state = AdamState::new(3);
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        // at t=1 the bias-corrected update is sign(g)·lr up to adam_eps
        assert!((params[0] - (1.0 - config.lr)).abs() < 1e-6);
        assert!((params[1] - (-2.0 + config.lr)).abs() < 1e-6);
        assert!((params[2] - (0.5 - config.lr)).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let config = small_config(1);
        let mut params = vec![0.25, -1.5];
        let grads = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        assert_eq!(params, vec![0.25, -1.5]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let config = small_config(1);
        let mut params = vec![0.0];
        let mut state = AdamState::new(1);
        assert!(adam_step(&mut params, &[f64::NAN], &mut state, &config).is_err());
    }

    #[test]
    fn single_step_run_logs_step_zero() {
        let ds = Dataset::Empirical(synth_sphere_mixture(6, 20, 3, 0.4, 1));
        let outcome = train(&ds, EncoderKind::Mlp, 3, 8, &small_config(1), &kernel_config()).unwrap();
        assert_eq!(outcome.log.len(), 1);
        assert_eq!(outcome.log[0].step, 0);
        assert_eq!(outcome.checkpoint.step_count, 1);
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let ds = Dataset::Empirical(synth_sphere_mixture(6, 20, 3, 0.4, 2));
        let a = train(&ds, EncoderKind::Mlp, 3, 8, &small_config(12), &kernel_config()).unwrap();
        let b = train(&ds, EncoderKind::Mlp, 3, 8, &small_config(12), &kernel_config()).unwrap();
        let pa = serde_json::to_string(&a.checkpoint).unwrap();
        let pb = serde_json::to_string(&b.checkpoint).unwrap();
        assert_eq!(pa, pb);
        for (ra, rb) in a.log.iter().zip(b.log.iter()) {
            assert_eq!(ra.loss.to_bits(), rb.loss.to_bits());
            assert_eq!(ra.s2_nats.to_bits(), rb.s2_nats.to_bits());
        }
    }

    #[test]
    fn bound_holds_at_every_logged_step() {
        let ds = Dataset::Empirical(synth_sphere_mixture(6, 30, 3, 0.4, 3));
        let outcome = train(&ds, EncoderKind::Mlp, 3, 8, &small_config(25), &kernel_config()).unwrap();
        let gamma2 = outcome.kernel.gamma2;
        for row in &outcome.log {
            assert!(
                row.s2_nats <= 2.0 * gamma2 * row.v_gram + 1e-9,
                "step {}: s2 {} > 2*g2*v {}",
                row.step,
                row.s2_nats,
                2.0 * gamma2 * row.v_gram
            );
        }
    }

    #[test]
    fn table_training_keeps_rows_on_sphere() {
        use crate::data::{SupportDistribution, SupportIndexDataset};
        let mut dists = Vec::new();
        for i in 0..6 {
            let indices: Vec<usize> = (0..4).map(|k| (i * 3 + k * 2) % 10).collect();
            let weights = vec![0.25; 4];
            dists.push(SupportDistribution::new(format!("h{i}"), indices, weights, 10, None).unwrap());
        }
        let ds = Dataset::Support(SupportIndexDataset::new("toy", dists, 10).unwrap());
        let mut config = small_config(15);
        config.epsilon = 0.02;
        let outcome = train(&ds, EncoderKind::Table, 3, 0, &config, &kernel_config()).unwrap();
        let table = outcome.encoder.table().unwrap();
        for i in 0..table.nrows() {
            let norm: f64 = crate::mat::row(table, i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "row {i} norm {norm}");
        }
    }

    #[test]
    fn checkpoint_roundtrips_through_json() {
        let ds = Dataset::Empirical(synth_sphere_mixture(4, 10, 3, 0.4, 5));
        let outcome = train(&ds, EncoderKind::Mlp, 3, 4, &small_config(2), &kernel_config()).unwrap();
        let file = tempfile::NamedTempFile::new().unwrap();
        outcome.checkpoint.save(file.path()).unwrap();
        let loaded = Checkpoint::load(file.path()).unwrap();
        let rebuilt = loaded.build_encoder().unwrap();
        assert_eq!(rebuilt.params_flat(), outcome.encoder.params_flat());
        assert_eq!(loaded.gamma1, outcome.checkpoint.gamma1);
    }

    #[test]
    fn entropy_trends_upward_on_separable_clusters() {
        let ds = Dataset::Empirical(synth_sphere_mixture(6, 60, 3, 0.5, 7));
        let mut config = small_config(120);
        config.batch_distributions = 6;
        config.samples_per_distribution = 16;
        config.lr = 5e-3; // fast desk-scale check; the acceptance suite runs the paper rate
        let outcome = train(&ds, EncoderKind::Mlp, 3, 16, &config, &kernel_config()).unwrap();
        let first = outcome.log.first().unwrap().s2_nats;
        let last_mean: f64 = outcome.log[outcome.log.len() - 20..]
            .iter()
            .map(|r| r.s2_nats)
            .sum::<f64>()
            / 20.0;
        assert!(
            last_mean > first,
            "entropy should trend upward: first {first}, late mean {last_mean}"
        );
    }
}
