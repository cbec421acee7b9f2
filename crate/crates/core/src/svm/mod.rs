//! Gaussian-kernel support vector machine.
//!
//! Training solves the dual problem
//!
//! ```text
//! max_a  sum a_i - 1/2 sum_ij a_i a_j y_i y_j k(x_i, x_j)
//! s.t.   0 <= a_i <= C,  sum a_i y_i = 0
//! ```
//!
//! with the RBF kernel `k(x, z) = exp(-gamma ||x - z||^2)` via sequential
//! minimal optimization ([`train_smo`]); [`brute_force_qp`] is an independent
//! projected-gradient oracle for small problems. The decision function is
//! `f(x) = sum_i a_i y_i k(sv_i, x) + b`; class +1 (gamma) wins ties at
//! `f = 0` so borderline events are kept rather than discarded.

mod qp;
mod smo;

pub use qp::{brute_force_qp, dual_objective};
pub use smo::{SmoParams, train_smo};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelsel::Normalizer;

/// Training rows: feature vectors with labels in {+1, -1}
/// (+1 = gamma, -1 = hadron).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<i8>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset labels",
                expected: features.len(),
                got: labels.len(),
            });
        }
        let dim = features.first().map_or(0, |f| f.len());
        for f in &features {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "dataset row",
                    expected: dim,
                    got: f.len(),
                });
            }
        }
        if labels.iter().any(|&y| y != 1 && y != -1) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn from_rows(rows: &[(&[f64], i8)]) -> Result<Self> {
        Self::new(
            rows.iter().map(|(f, _)| f.to_vec()).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&1) && self.labels.contains(&-1)
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Map every row through `f` (e.g. a fitted normalizer).
    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> LabeledDataset {
        LabeledDataset {
            features: self.features.iter().map(|r| f(r)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Squared Euclidean distance; callers guarantee equal lengths.
pub(crate) fn squared_distance(x: &[f64], z: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Gaussian RBF kernel `exp(-gamma ||x - z||^2)`, in (0, 1], equal to 1
/// iff x == z.
pub fn rbf_kernel(x: &[f64], z: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel arguments",
            expected: x.len(),
            got: z.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be > 0"));
    }
    Ok((-gamma * squared_distance(x, z)).exp())
}

/// Trained model: support vectors, dual coefficients `a_i y_i`, bias, kernel
/// width, and the normalizer fitted on the training features.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub gamma: f64,
    pub c: f64,
    pub tol: f64,
    pub bias: f64,
    pub normalizer: Normalizer,
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coeffs: Vec<f64>,
    pub converged: bool,
    pub seed: u64,
    /// Pair updates performed during training (not serialized).
    pub iterations: u64,
}

impl SvmModel {
    pub fn n_support_vectors(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, |sv| sv.len())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "decision input",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Decision value for an already-normalized input.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut acc = 0.0;
        for (sv, &coeff) in self.support_vectors.iter().zip(&self.dual_coeffs) {
            acc += coeff * (-self.gamma * squared_distance(sv, x)).exp();
        }
        Ok(acc + self.bias)
    }

    /// Decision value for a raw feature vector; applies the stored
    /// normalizer first.
    pub fn decision_value_raw(&self, x: &[f64]) -> Result<f64> {
        let normalized = self.normalizer.apply(x)?;
        self.decision_value(&normalized)
    }

    /// Class of a normalized input: sign of the decision value, with 0
    /// mapping to +1.
    pub fn predict(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_value(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Class of a raw feature vector.
    pub fn predict_raw(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.decision_value_raw(x)? >= 0.0 { 1 } else { -1 })
    }

    /// Serialize as the model JSON file.
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        let file = ModelFile {
            version: 1,
            kernel: "rbf".to_string(),
            gamma: self.gamma,
            c: self.c,
            tol: self.tol,
            bias: self.bias,
            normalizer: NormalizerFile {
                mean: self.normalizer.mean().to_vec(),
                std: self.normalizer.std().to_vec(),
            },
            support_vectors: self.support_vectors.clone(),
            dual_coeffs: self.dual_coeffs.clone(),
            converged: self.converged,
            seed: self.seed,
        };
        serde_json::to_writer(&mut w, &file)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    /// Read a model JSON file.
    pub fn read_json<R: Read>(r: R) -> Result<SvmModel> {
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.version != 1 {
            return Err(Error::format(
                "model file",
                format!("unsupported version {}", file.version),
            ));
        }
        if file.kernel != "rbf" {
            return Err(Error::format(
                "model file",
                format!("unsupported kernel `{}`", file.kernel),
            ));
        }
        if file.support_vectors.len() != file.dual_coeffs.len() {
            return Err(Error::format(
                "model file",
                "support vector / dual coefficient count mismatch",
            ));
        }
        Ok(SvmModel {
            gamma: file.gamma,
            c: file.c,
            tol: file.tol,
            bias: file.bias,
            normalizer: Normalizer::from_parts(file.normalizer.mean, file.normalizer.std)?,
            support_vectors: file.support_vectors,
            dual_coeffs: file.dual_coeffs,
            converged: file.converged,
            seed: file.seed,
            iterations: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    kernel: String,
    gamma: f64,
    #[serde(rename = "C")]
    c: f64,
    tol: f64,
    bias: f64,
    normalizer: NormalizerFile,
    support_vectors: Vec<Vec<f64>>,
    dual_coeffs: Vec<f64>,
    converged: bool,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct NormalizerFile {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(super) fn dataset(rows: &[(Vec<f64>, i8)]) -> LabeledDataset {
        LabeledDataset::new(
            rows.iter().map(|(f, _)| f.clone()).collect(),
            rows.iter().map(|&(_, y)| y).collect(),
        )
        .unwrap()
    }

    #[test]
    fn kernel_of_identical_points_is_one() {
        let x = vec![0.3, -1.5, 2.0];
        assert_eq!(rbf_kernel(&x, &x, 3.7).unwrap(), 1.0);
    }

    #[test]
    fn kernel_scalar_value_at_reference_gamma() {
        // ||x - z||^2 = 2, gamma = 1.07 -> e^{-2.14} ~ 0.11765.
        let x = vec![1.0, 0.0];
        let z = vec![0.0, 1.0];
        let k = rbf_kernel(&x, &z, 1.07).unwrap();
        assert_relative_eq!(k, 0.11765, epsilon = 1e-5);
    }

    #[test]
    fn kernel_is_symmetric() {
        let mut rng = crate::rng::SplitMix64::new(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let z: Vec<f64> = (0..4).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let g = rng.uniform(0.05, 5.0);
            assert_eq!(
                rbf_kernel(&x, &z, g).unwrap().to_bits(),
                rbf_kernel(&z, &x, g).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn kernel_rejects_mismatched_lengths() {
        assert!(rbf_kernel(&[1.0], &[1.0, 2.0], 1.0).is_err());
        assert!(rbf_kernel(&[1.0], &[1.0], 0.0).is_err());
    }

    /// Gram matrices of random datasets stay (numerically) positive
    /// semidefinite: smallest eigenvalue >= -1e-9, estimated by power
    /// iteration on the complement.
    #[test]
    fn gram_matrices_are_positive_semidefinite() {
        let mut rng = crate::rng::SplitMix64::new(21);
        for trial in 0..5 {
            let n = 30 + 4 * trial;
            let dim = 3;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .collect();
            let gamma = rng.uniform(0.05, 5.0);
            let mut gram = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    gram[i * n + j] = rbf_kernel(&rows[i], &rows[j], gamma).unwrap();
                }
            }
            let power = |mat: &dyn Fn(&[f64], &mut [f64])| -> f64 {
                let mut v = vec![1.0 / (n as f64).sqrt(); n];
                let mut lambda = 0.0;
                let mut out = vec![0.0; n];
                for _ in 0..500 {
                    mat(&v, &mut out);
                    lambda = out.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if lambda == 0.0 {
                        break;
                    }
                    for (a, b) in v.iter_mut().zip(&out) {
                        *a = b / lambda;
                    }
                }
                lambda
            };
            let gmax = power(&|v: &[f64], out: &mut [f64]| {
                for i in 0..n {
                    out[i] = (0..n).map(|j| gram[i * n + j] * v[j]).sum();
                }
            });
            // lambda_min(G) = gmax - lambda_max(gmax I - G).
            let shifted = power(&|v: &[f64], out: &mut [f64]| {
                for i in 0..n {
                    let gv: f64 = (0..n).map(|j| gram[i * n + j] * v[j]).sum();
                    out[i] = gmax * v[i] - gv;
                }
            });
            let lambda_min = gmax - shifted;
            assert!(lambda_min >= -1e-9, "trial {trial}: lambda_min {lambda_min}");
        }
    }

    #[test]
    fn model_json_roundtrip() {
        let model = SvmModel {
            gamma: 1.07,
            c: 28526.2,
            tol: 1e-3,
            bias: -0.25,
            normalizer: Normalizer::from_parts(vec![0.5, -1.0], vec![2.0, 3.0]).unwrap(),
            support_vectors: vec![vec![1.0, 2.0], vec![-0.5, 0.25]],
            dual_coeffs: vec![3.5, -3.5],
            converged: true,
            seed: 42,
            iterations: 17,
        };
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kernel\":\"rbf\""));
        assert!(text.contains("\"C\":28526.2"));
        let back = SvmModel::read_json(&buf[..]).unwrap();
        assert_eq!(back.gamma, model.gamma);
        assert_eq!(back.c, model.c);
        assert_eq!(back.bias, model.bias);
        assert_eq!(back.support_vectors, model.support_vectors);
        assert_eq!(back.dual_coeffs, model.dual_coeffs);
        assert_eq!(back.normalizer, model.normalizer);
        // Serialization is deterministic.
        let mut buf2 = Vec::new();
        back.write_json(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn predict_tie_break_is_gamma() {
        let model = SvmModel {
            gamma: 1.0,
            c: 1.0,
            tol: 1e-3,
            bias: 0.0,
            normalizer: Normalizer::identity(1),
            support_vectors: vec![vec![1.0], vec![-1.0]],
            dual_coeffs: vec![0.5, -0.5],
            converged: true,
            seed: 0,
            iterations: 0,
        };
        // Symmetric point: decision is exactly 0.
        assert_eq!(model.decision_value(&[0.0]).unwrap(), 0.0);
        assert_eq!(model.predict(&[0.0]).unwrap(), 1);
        assert_eq!(model.predict(&[1.0]).unwrap(), 1);
        assert_eq!(model.predict(&[-1.0]).unwrap(), -1);
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![vec![1.0], vec![2.0]], vec![1]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0], vec![2.0, 3.0]], vec![1, -1]).is_err());
        assert!(LabeledDataset::new(vec![vec![1.0], vec![2.0]], vec![1, 0]).is_err());
        let d = dataset(&[(vec![1.0], 1), (vec![2.0], 1)]);
        assert!(!d.has_both_classes());
    }
}
