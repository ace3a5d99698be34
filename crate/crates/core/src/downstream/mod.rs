//! Precomputed-Gram classifiers and the evaluation protocol.
//!
//! Multiclass problems reduce one-vs-rest: one binary C-SVM (or one ridge
//! column) per class, predictions by argmax of decision values with ties
//! broken toward the lowest class index. Model selection runs a C grid of 50
//! log-spaced values in `[1e-7, 1e5]` over 5 stratified random 70/30 splits
//! of the training portion, refits the best C on the full training portion,
//! and scores on the caller-designated held-out set.

mod svm;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::kernels::{CrossGram, GramMatrix};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const KKT_TOLERANCE: f64 = 1e-3;
const MAX_SMO_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    SvmSmo,
    KernelRidge,
}

/// Per-class dual solution.
#[derive(Debug, Clone, Serialize)]
pub struct BinaryDual {
    /// `alpha_i * y_i` for the SVM, or the ridge dual weights.
    pub coeffs: Vec<f64>,
    pub bias: f64,
    /// Raw SVM alphas (empty for ridge), kept for invariant checks.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub classes: Vec<i64>,
    pub train_ids: Vec<String>,
    pub per_class: Vec<BinaryDual>,
    /// C for the SVM, lambda for ridge.
    pub regularization: f64,
}

fn sorted_classes(labels: &[i64]) -> Vec<i64> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Add `|min eigenvalue|` to the diagonal when the matrix dips below the PSD
/// tolerance.
fn psd_repaired(values: &DMatrix<f64>) -> DMatrix<f64> {
    let eigs = values.clone().symmetric_eigen().eigenvalues;
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut repaired = values.clone();
    if min_eig < -1e-8 {
        let shift = min_eig.abs();
        for i in 0..repaired.nrows() {
            repaired[(i, i)] += shift;
        }
    }
    repaired
}

/// Fit a one-vs-rest C-SVM on a precomputed training Gram.
pub fn svm_fit(gram: &GramMatrix, labels: &[i64], c: f64) -> Result<ClassifierModel> {
    if labels.len() != gram.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a {0}x{0} gram",
            labels.len()
        )));
    }
    if !(c > 0.0) {
        return Err(Error::Invalid(format!("C must be positive ({c})")));
    }
    let classes = sorted_classes(labels);
    if classes.len() < 2 {
        return Err(Error::Invalid("need at least two classes".to_string()));
    }
    let k = psd_repaired(gram.values());
    let mut per_class = Vec::with_capacity(classes.len());
    for &class in &classes {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let sol = svm::smo_solve(&k, &y, c, KKT_TOLERANCE, MAX_SMO_ITERATIONS)?;
        let coeffs: Vec<f64> = sol.alpha.iter().zip(y.iter()).map(|(a, yt)| a * yt).collect();
        per_class.push(BinaryDual {
            coeffs,
            bias: -sol.rho,
            alpha: sol.alpha,
        });
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::SvmSmo,
        classes,
        train_ids: gram.ids().to_vec(),
        per_class,
        regularization: c,
    })
}

/// Fit one-vs-rest kernel ridge regression on one-hot targets:
/// `coeffs = (K + lambda I)^{-1} Y`.
pub fn kernel_ridge_fit(gram: &GramMatrix, labels: &[i64], lambda: f64) -> Result<ClassifierModel> {
    if labels.len() != gram.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a {0}x{0} gram",
            labels.len()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("lambda must be positive ({lambda})")));
    }
    let classes = sorted_classes(labels);
    let n = gram.len();
    let mut shifted = gram.values().clone();
    for i in 0..n {
        shifted[(i, i)] += lambda;
    }
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Factorization("K + lambda I is not positive definite".to_string()))?;
    let mut per_class = Vec::with_capacity(classes.len());
    for &class in &classes {
        let y = nalgebra::DVector::from_iterator(
            n,
            labels.iter().map(|&l| if l == class { 1.0 } else { 0.0 }),
        );
        let coeffs = chol.solve(&y);
        per_class.push(BinaryDual {
            coeffs: coeffs.iter().copied().collect(),
            bias: 0.0,
            alpha: Vec::new(),
        });
    }
    Ok(ClassifierModel {
        kind: ClassifierKind::KernelRidge,
        classes,
        train_ids: gram.ids().to_vec(),
        per_class,
        regularization: lambda,
    })
}

/// Decision scores (rows: test points, one column per class).
pub fn decision_values(model: &ClassifierModel, cross: &CrossGram) -> Result<DMatrix<f64>> {
    if cross.train_ids != model.train_ids {
        return Err(Error::IdMismatch(
            "cross-gram columns do not match the training ids".to_string(),
        ));
    }
    let n_test = cross.values.nrows();
    let mut scores = DMatrix::zeros(n_test, model.classes.len());
    for t in 0..n_test {
        for (ci, dual) in model.per_class.iter().enumerate() {
            let mut s = dual.bias;
            for (j, coeff) in dual.coeffs.iter().enumerate() {
                s += coeff * cross.values[(t, j)];
            }
            scores[(t, ci)] = s;
        }
    }
    Ok(scores)
}

/// One-vs-rest prediction: argmax decision value, ties toward the lowest
/// class index.
pub fn predict(model: &ClassifierModel, cross: &CrossGram) -> Result<Vec<i64>> {
    let scores = decision_values(model, cross)?;
    let mut out = Vec::with_capacity(scores.nrows());
    for t in 0..scores.nrows() {
        let mut best = 0usize;
        for ci in 1..model.classes.len() {
            if scores[(t, ci)] > scores[(t, best)] {
                best = ci;
            }
        }
        out.push(model.classes[best]);
    }
    Ok(out)
}

/// The 50-value log-spaced C grid over `[1e-7, 1e5]`, endpoints exact.
pub fn c_grid() -> Vec<f64> {
    let mut grid = Vec::with_capacity(50);
    for k in 0..50 {
        let value = if k == 0 {
            1e-7
        } else if k == 49 {
            1e5
        } else {
            10f64.powf(-7.0 + 12.0 * k as f64 / 49.0)
        };
        grid.push(value);
    }
    grid
}

/// How the caller designates the held-out set.
#[derive(Debug, Clone)]
pub enum HeldoutSpec {
    /// Stratified random fraction of the dataset.
    Fraction(f64),
    /// Explicit ids.
    Ids(Vec<String>),
}

#[derive(Debug, Clone)]
pub struct GridProtocol {
    pub heldout: HeldoutSpec,
    pub n_splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for GridProtocol {
    fn default() -> Self {
        Self {
            heldout: HeldoutSpec::Fraction(0.3),
            n_splits: 5,
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

/// Evaluation summary for one Gram.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub best_c: f64,
    /// Validation accuracy of the best C on each internal split.
    pub split_accuracies: Vec<f64>,
    /// Accuracy of the refit model on the held-out set.
    pub heldout_accuracy: f64,
    pub mean_accuracy: f64,
    pub accuracy_variance: f64,
    /// Confusion counts on the held-out set, rows = actual class (sorted),
    /// columns = predicted.
    pub confusion: Vec<Vec<usize>>,
    pub classes: Vec<i64>,
}

fn indices_by_class(labels: &[i64], indices: &[usize]) -> Vec<(i64, Vec<usize>)> {
    let classes = sorted_classes(&indices.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    classes
        .into_iter()
        .map(|c| {
            (
                c,
                indices.iter().copied().filter(|&i| labels[i] == c).collect(),
            )
        })
        .collect()
}

/// Stratified random split of `indices` into (train, rest) with per-class
/// rounding; re-draws when a class ends up absent from either side.
fn stratified_split(
    labels: &[i64],
    indices: &[usize],
    train_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    for _attempt in 0..20 {
        let mut train = Vec::new();
        let mut rest = Vec::new();
        let mut degenerate = false;
        for (_, mut members) in indices_by_class(labels, indices) {
            members.shuffle(rng);
            let n_train = (train_fraction * members.len() as f64).round() as usize;
            if n_train == 0 || n_train == members.len() {
                degenerate = true;
            }
            train.extend_from_slice(&members[..n_train.min(members.len())]);
            rest.extend_from_slice(&members[n_train.min(members.len())..]);
        }
        if !degenerate {
            train.sort_unstable();
            rest.sort_unstable();
            return Ok((train, rest));
        }
    }
    Err(Error::DegenerateSplit(format!(
        "could not produce a stratified {:.0}/{:.0} split with every class on both sides",
        train_fraction * 100.0,
        (1.0 - train_fraction) * 100.0
    )))
}

fn accuracy(predicted: &[i64], actual: &[i64]) -> f64 {
    let correct = predicted
        .iter()
        .zip(actual.iter())
        .filter(|(p, a)| p == a)
        .count();
    correct as f64 / actual.len() as f64
}

/// Grid-search protocol over one labeled Gram: pick C by mean validation
/// accuracy over stratified splits of the training portion, refit, and score
/// on the held-out set.
pub fn grid_search_eval(
    gram: &GramMatrix,
    labels: &[i64],
    protocol: &GridProtocol,
) -> Result<EvalReport> {
    let m = gram.len();
    if labels.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for a {m}x{m} gram",
            labels.len()
        )));
    }
    if m < 10 {
        return Err(Error::Invalid(format!(
            "grid search needs at least 10 distributions, got {m}"
        )));
    }
    let classes = sorted_classes(labels);
    for &c in &classes {
        if labels.iter().filter(|&&l| l == c).count() < 2 {
            return Err(Error::Invalid(format!("class {c} has fewer than 2 members")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let all: Vec<usize> = (0..m).collect();
    let (train_idx, heldout_idx) = match &protocol.heldout {
        HeldoutSpec::Fraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::Invalid(format!("held-out fraction {f} out of (0,1)")));
            }
            let (heldout, train) = stratified_split(labels, &all, *f, &mut rng)?;
            (train, heldout)
        }
        HeldoutSpec::Ids(ids) => {
            let mut heldout = Vec::new();
            for id in ids {
                let pos = gram
                    .ids()
                    .iter()
                    .position(|g| g == id)
                    .ok_or_else(|| Error::IdMismatch(format!("held-out id `{id}` not in gram")))?;
                heldout.push(pos);
            }
            heldout.sort_unstable();
            heldout.dedup();
            let heldout_set: std::collections::HashSet<usize> = heldout.iter().copied().collect();
            let train: Vec<usize> = all.iter().copied().filter(|i| !heldout_set.contains(i)).collect();
            (train, heldout)
        }
    };
    if heldout_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::Invalid("empty train or held-out portion".to_string()));
    }

    // internal stratified splits of the training portion
    let mut splits = Vec::with_capacity(protocol.n_splits);
    for _ in 0..protocol.n_splits {
        splits.push(stratified_split(
            labels,
            &train_idx,
            protocol.train_fraction,
            &mut rng,
        )?);
    }

    let grid = c_grid();
    // grid cells (C, split) are independent; evaluate in parallel and
    // aggregate in index order
    let cells = exec::map_indexed(grid.len() * splits.len(), |cell| -> Result<f64> {
        let c = grid[cell / splits.len()];
        let (fit_idx, val_idx) = &splits[cell % splits.len()];
        let sub = gram.submatrix(fit_idx);
        let sub_labels: Vec<i64> = fit_idx.iter().map(|&i| labels[i]).collect();
        let model = svm_fit(&sub, &sub_labels, c)?;
        let cross = gram.cross(val_idx, fit_idx);
        let predicted = predict(&model, &cross)?;
        let actual: Vec<i64> = val_idx.iter().map(|&i| labels[i]).collect();
        Ok(accuracy(&predicted, &actual))
    });
    let mut mean_by_c = vec![0.0; grid.len()];
    let mut split_acc_by_c = vec![Vec::new(); grid.len()];
    for (cell, result) in cells.into_iter().enumerate() {
        let acc = result?;
        mean_by_c[cell / splits.len()] += acc / splits.len() as f64;
        split_acc_by_c[cell / splits.len()].push(acc);
    }

    // ties break toward the smaller C (stronger regularization)
    let mut best = 0usize;
    for k in 1..grid.len() {
        if mean_by_c[k] > mean_by_c[best] {
            best = k;
        }
    }
    let best_c = grid[best];

    // refit on the full training portion, score on the held-out set
    let train_gram = gram.submatrix(&train_idx);
    let train_labels: Vec<i64> = train_idx.iter().map(|&i| labels[i]).collect();
    let model = svm_fit(&train_gram, &train_labels, best_c)?;
    let cross = gram.cross(&heldout_idx, &train_idx);
    let predicted = predict(&model, &cross)?;
    let actual: Vec<i64> = heldout_idx.iter().map(|&i| labels[i]).collect();
    let heldout_accuracy = accuracy(&predicted, &actual);

    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for (p, a) in predicted.iter().zip(actual.iter()) {
        let pi = classes.iter().position(|c| c == p).expect("predicted class known");
        let ai = classes.iter().position(|c| c == a).expect("actual class known");
        confusion[ai][pi] += 1;
    }

    Ok(EvalReport {
        best_c,
        split_accuracies: split_acc_by_c[best].clone(),
        heldout_accuracy,
        mean_accuracy: heldout_accuracy,
        accuracy_variance: 0.0,
        confusion,
        classes,
    })
}

/// Aggregate reports from repeated Grams of the same dataset (subsampling
/// repeats): mean and sample variance of the held-out accuracies.
#[derive(Debug, Clone, Serialize)]
pub struct RepeatReport {
    pub repeats: Vec<EvalReport>,
    pub mean_accuracy: f64,
    pub accuracy_variance: f64,
}

pub fn aggregate_reports(reports: Vec<EvalReport>) -> Result<RepeatReport> {
    if reports.is_empty() {
        return Err(Error::Invalid("no reports to aggregate".to_string()));
    }
    let n = reports.len() as f64;
    let mean = reports.iter().map(|r| r.heldout_accuracy).sum::<f64>() / n;
    let variance = if reports.len() > 1 {
        reports
            .iter()
            .map(|r| (r.heldout_accuracy - mean) * (r.heldout_accuracy - mean))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(RepeatReport {
        repeats: reports,
        mean_accuracy: mean,
        accuracy_variance: variance,
    })
}
