//! Normalization, stratified cross-validation, adaptive exponential grid
//! search and evaluation metrics.
//!
//! The search runs on a small stratified subsample of the training set
//! (default 5%): a coarse pass over exponentially growing `C` and `gamma`
//! sequences, then a fine pass at quarter-step resolution around the coarse
//! argmax. Accuracy ties break toward smaller `C`, then smaller `gamma`,
//! which keeps selected models cheap and numerically tame.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::svm::{LabeledDataset, SmoParams, SvmModel, train_smo};

/// Per-feature z-score statistics fitted on a training set.
///
/// Standard deviations are population ones (divide by n). A feature with no
/// variance cannot be scaled, so its std is forced to 1 and the feature is
/// flagged degenerate.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    mean: Vec<f64>,
    std: Vec<f64>,
    degenerate: Vec<bool>,
}

impl Normalizer {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn degenerate(&self) -> &[bool] {
        &self.degenerate
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// The do-nothing normalizer (mean 0, std 1).
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            degenerate: vec![false; dim],
        }
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                what: "normalizer",
                expected: mean.len(),
                got: std.len(),
            });
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("normalizer std entries must be > 0"));
        }
        let degenerate = vec![false; mean.len()];
        Ok(Normalizer {
            mean,
            std,
            degenerate,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "normalizer input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `(x - mean) / std`, elementwise.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(k, &v)| (v - self.mean[k]) / self.std[k])
            .collect())
    }

    /// Inverse transform: `z * std + mean`.
    pub fn invert(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        Ok(z.iter()
            .enumerate()
            .map(|(k, &v)| v * self.std[k] + self.mean[k])
            .collect())
    }
}

/// Fit per-feature mean and population standard deviation; needs at least
/// two rows.
pub fn zscore_fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Normalizer> {
    if rows.len() < 2 {
        return Err(Error::invalid("z-score fit needs at least 2 rows"));
    }
    let dim = rows[0].as_ref().len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "feature row",
                expected: dim,
                got: row.len(),
            });
        }
        for (acc, &v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for (k, &v) in row.as_ref().iter().enumerate() {
            let d = v - mean[k];
            var[k] += d * d;
        }
    }
    let mut std = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);
    for (k, v) in var.iter().enumerate() {
        let s = (v / n).sqrt();
        if s <= 1e-12 * mean[k].abs().max(1.0) {
            std.push(1.0);
            degenerate.push(true);
        } else {
            std.push(s);
            degenerate.push(false);
        }
    }
    Ok(Normalizer {
        mean,
        std,
        degenerate,
    })
}

/// Shorthand: `zscore_apply(norm, x)` is `norm.apply(x)`.
pub fn zscore_apply(norm: &Normalizer, x: &[f64]) -> Result<Vec<f64>> {
    norm.apply(x)
}

/// Split indices into `m` stratified folds.
///
/// Every class is shuffled (seeded) and dealt round-robin, so per-class
/// counts across folds differ by at most one. Errors if any class has fewer
/// than `m` members.
pub fn stratified_kfold(data: &LabeledDataset, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if m < 2 {
        return Err(Error::invalid("fold count must be >= 2"));
    }
    let mut rng = SplitMix64::new(seed);
    let mut folds = vec![Vec::new(); m];
    for class in [1i8, -1] {
        let mut members: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == class).collect();
        if members.len() < m {
            return Err(Error::invalid(format!(
                "class {class} has {} members, fewer than {m} folds",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % m].push(idx);
        }
    }
    Ok(folds)
}

/// Exponential grid specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub log2c_range: (f64, f64),
    pub log2c_step: f64,
    pub log2gamma_range: (f64, f64),
    pub log2gamma_step: f64,
    /// Fine pass: +-radius around the coarse best at `fine_step` resolution.
    pub fine_radius: f64,
    pub fine_step: f64,
    pub folds: usize,
    /// Stratified subsample fraction of the input used for the search.
    pub fraction: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            log2c_range: (-5.0, 17.0),
            log2c_step: 2.0,
            log2gamma_range: (-15.0, 3.0),
            log2gamma_step: 2.0,
            fine_radius: 2.0,
            fine_step: 0.25,
            folds: 5,
            fraction: 0.05,
            seed: 42,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.log2c_step > 0.0 && self.log2gamma_step > 0.0 && self.fine_step > 0.0) {
            return Err(Error::invalid("grid steps must be > 0"));
        }
        if self.log2c_range.1 < self.log2c_range.0
            || self.log2gamma_range.1 < self.log2gamma_range.0
        {
            return Err(Error::invalid("grid ranges must be non-empty"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::invalid("subsample fraction must be in (0, 1]"));
        }
        Ok(())
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub log2c: f64,
    pub log2gamma: f64,
    pub cv_accuracy: f64,
    /// True when training failed in some fold; such cells score 0.
    pub failed: bool,
}

/// Grid-search outcome: the winning cell plus every evaluated cell in
/// deterministic order (coarse pass, then fine pass).
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_log2c: f64,
    pub best_log2gamma: f64,
    pub cells: Vec<GridCell>,
}

impl GridSearchResult {
    pub fn best_c(&self) -> f64 {
        self.best_log2c.exp2()
    }

    pub fn best_gamma(&self) -> f64 {
        self.best_log2gamma.exp2()
    }
}

fn axis(range: (f64, f64), step: f64) -> Vec<f64> {
    let mut values = Vec::new();
    let mut k = 0u32;
    loop {
        let v = range.0 + step * k as f64;
        if v > range.1 + 1e-9 {
            break;
        }
        values.push(v);
        k += 1;
    }
    values
}

/// Train on normalized data and attach the fitted normalizer, so the model
/// consumes raw feature vectors.
pub fn fit_normalized(data: &LabeledDataset, params: &SmoParams) -> Result<SvmModel> {
    let rows: Vec<&[f64]> = (0..data.len()).map(|i| data.feature(i)).collect();
    let normalizer = zscore_fit(&rows)?;
    let normalized = data.map_features(|r| normalizer.apply(r).expect("dim checked"));
    let mut model = train_smo(&normalized, params)?;
    model.normalizer = normalizer;
    Ok(model)
}

fn cv_accuracy(
    data: &LabeledDataset,
    folds: &[Vec<usize>],
    params: &SmoParams,
) -> (f64, bool) {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut failed = false;
    for held in 0..folds.len() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != held)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let train = data.subset(&train_idx);
        match fit_normalized(&train, params) {
            Ok(model) => {
                for &i in &folds[held] {
                    total += 1;
                    if model.predict_raw(data.feature(i)).expect("dim checked")
                        == data.label(i)
                    {
                        correct += 1;
                    }
                }
            }
            Err(_) => {
                failed = true;
                total += folds[held].len();
            }
        }
    }
    if failed {
        (0.0, true)
    } else {
        (correct as f64 / total.max(1) as f64, false)
    }
}

/// True when `a` beats `b`: higher accuracy, ties toward smaller C, then
/// smaller gamma.
fn better(a: &GridCell, b: &GridCell) -> bool {
    if a.cv_accuracy != b.cv_accuracy {
        return a.cv_accuracy > b.cv_accuracy;
    }
    if a.log2c != b.log2c {
        return a.log2c < b.log2c;
    }
    a.log2gamma < b.log2gamma
}

/// Cross-validation grid search over `(C, gamma)`.
///
/// Subsamples the input (stratified, seeded), scores every coarse cell by
/// mean CV accuracy, then refines around the argmax. Deterministic for a
/// fixed `(data, spec)`.
pub fn grid_search(data: &LabeledDataset, spec: &GridSpec) -> Result<GridSearchResult> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("grid search needs a nonempty dataset"));
    }

    // Stratified subsample.
    let mut rng = SplitMix64::new(spec.seed);
    let mut sample: Vec<usize> = Vec::new();
    for class in [1i8, -1] {
        let mut members: Vec<usize> =
            (0..data.len()).filter(|&i| data.label(i) == class).collect();
        rng.shuffle(&mut members);
        let want = ((spec.fraction * members.len() as f64).round() as usize)
            .max(spec.folds)
            .min(members.len());
        sample.extend(members.into_iter().take(want));
    }
    sample.sort_unstable();
    let subset = data.subset(&sample);
    let folds = stratified_kfold(&subset, spec.folds, spec.seed)?;

    let smo = |log2c: f64, log2gamma: f64| SmoParams {
        c: log2c.exp2(),
        gamma: log2gamma.exp2(),
        ..SmoParams::new(1.0, 1.0)
    };

    let mut cells: Vec<GridCell> = Vec::new();
    let mut visited: HashSet<(u64, u64)> = HashSet::new();
    let mut evaluate = |log2c: f64, log2gamma: f64, cells: &mut Vec<GridCell>| {
        if !visited.insert((log2c.to_bits(), log2gamma.to_bits())) {
            return;
        }
        let (cv, failed) = cv_accuracy(&subset, &folds, &smo(log2c, log2gamma));
        cells.push(GridCell {
            log2c,
            log2gamma,
            cv_accuracy: cv,
            failed,
        });
    };

    for &log2c in &axis(spec.log2c_range, spec.log2c_step) {
        for &log2gamma in &axis(spec.log2gamma_range, spec.log2gamma_step) {
            evaluate(log2c, log2gamma, &mut cells);
        }
    }
    let coarse_best = cells
        .iter()
        .fold(None::<GridCell>, |best, cell| match best {
            Some(b) if !better(cell, &b) => Some(b),
            _ => Some(cell.clone()),
        })
        .expect("grid is non-empty");

    let fine_c = (
        coarse_best.log2c - spec.fine_radius,
        coarse_best.log2c + spec.fine_radius,
    );
    let fine_gamma = (
        coarse_best.log2gamma - spec.fine_radius,
        coarse_best.log2gamma + spec.fine_radius,
    );
    for &log2c in &axis(fine_c, spec.fine_step) {
        for &log2gamma in &axis(fine_gamma, spec.fine_step) {
            evaluate(log2c, log2gamma, &mut cells);
        }
    }

    let best = cells
        .iter()
        .fold(None::<GridCell>, |acc, cell| match acc {
            Some(b) if !better(cell, &b) => Some(b),
            _ => Some(cell.clone()),
        })
        .expect("grid is non-empty");

    Ok(GridSearchResult {
        best_log2c: best.log2c,
        best_log2gamma: best.log2gamma,
        cells,
    })
}

/// Write the grid as CSV: `log2C,log2gamma,cv_accuracy`.
pub fn write_grid_csv<W: Write>(cells: &[GridCell], mut w: W) -> Result<()> {
    w.write_all(b"log2C,log2gamma,cv_accuracy\n")?;
    for cell in cells {
        w.write_all(format!("{},{},{}\n", cell.log2c, cell.log2gamma, cell.cv_accuracy).as_bytes())?;
    }
    Ok(())
}

/// Per-class recognition table plus overall accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMetrics {
    pub gamma_total: u64,
    pub gamma_recognized: u64,
    pub hadron_total: u64,
    pub hadron_recognized: u64,
}

impl ConfusionMetrics {
    pub fn from_counts(
        gamma_total: u64,
        gamma_recognized: u64,
        hadron_total: u64,
        hadron_recognized: u64,
    ) -> Result<Self> {
        if gamma_recognized > gamma_total || hadron_recognized > hadron_total {
            return Err(Error::invalid("recognized count exceeds total"));
        }
        Ok(ConfusionMetrics {
            gamma_total,
            gamma_recognized,
            hadron_total,
            hadron_recognized,
        })
    }

    pub fn gamma_ratio(&self) -> f64 {
        self.gamma_recognized as f64 / self.gamma_total.max(1) as f64
    }

    pub fn hadron_ratio(&self) -> f64 {
        self.hadron_recognized as f64 / self.hadron_total.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        (self.gamma_recognized + self.hadron_recognized) as f64
            / (self.gamma_total + self.hadron_total).max(1) as f64
    }

    /// Recognition table in the usual Total | Recognized | Ratio layout.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str("        | Total | Recognized | Ratio\n");
        out.push_str(&format!(
            "Gammas  | {:>5} | {:>10} | {:.1}%\n",
            self.gamma_total,
            self.gamma_recognized,
            percent_1dp(self.gamma_ratio())
        ));
        out.push_str(&format!(
            "Hadrons | {:>5} | {:>10} | {:.1}%\n",
            self.hadron_total,
            self.hadron_recognized,
            percent_1dp(self.hadron_ratio())
        ));
        out.push_str(&format!(
            "Overall accuracy: {:.1}%\n",
            percent_1dp(self.accuracy())
        ));
        out
    }

    /// Serialize as the metrics JSON document.
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct PerClass {
            total: u64,
            recognized: u64,
            ratio: f64,
        }
        #[derive(Serialize)]
        struct MetricsFile {
            per_class: PerClassMap,
            accuracy: f64,
        }
        #[derive(Serialize)]
        struct PerClassMap {
            gamma: PerClass,
            hadron: PerClass,
        }
        let file = MetricsFile {
            per_class: PerClassMap {
                gamma: PerClass {
                    total: self.gamma_total,
                    recognized: self.gamma_recognized,
                    ratio: self.gamma_ratio(),
                },
                hadron: PerClass {
                    total: self.hadron_total,
                    recognized: self.hadron_recognized,
                    ratio: self.hadron_ratio(),
                },
            },
            accuracy: self.accuracy(),
        };
        serde_json::to_writer(&mut w, &file)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Percentage rounded to one decimal, as reported in recognition tables.
pub fn percent_1dp(ratio: f64) -> f64 {
    (ratio * 1000.0).round() / 10.0
}

/// Evaluate a model on labeled raw feature vectors.
pub fn evaluate(model: &SvmModel, test: &LabeledDataset) -> Result<ConfusionMetrics> {
    if test.is_empty() {
        return Err(Error::invalid("evaluation needs a nonempty test set"));
    }
    let mut metrics = ConfusionMetrics {
        gamma_total: 0,
        gamma_recognized: 0,
        hadron_total: 0,
        hadron_recognized: 0,
    };
    for i in 0..test.len() {
        let predicted = model.predict_raw(test.feature(i))?;
        let actual = test.label(i);
        if actual == 1 {
            metrics.gamma_total += 1;
            if predicted == 1 {
                metrics.gamma_recognized += 1;
            }
        } else {
            metrics.hadron_total += 1;
            if predicted == -1 {
                metrics.hadron_recognized += 1;
            }
        }
    }
    Ok(metrics)
}
