//! Brute-force dual QP oracle for verifying the SMO trainer.
//!
//! Projected gradient ascent over the dual feasible set (box intersected
//! with the equality hyperplane), with backtracking step halving. Slow and
//! simple on purpose: it shares no code path with the SMO solver beyond the
//! kernel definition, so agreement between the two is evidence, not
//! tautology. Limited to 12 points.

use crate::error::{Error, Result};
use crate::svm::{LabeledDataset, squared_distance};

const MAX_POINTS: usize = 12;
const MAX_ITERATIONS: usize = 1_000_000;
const STEP_TOLERANCE: f64 = 1e-10;

fn build_q(data: &LabeledDataset, gamma: f64) -> Vec<f64> {
    let n = data.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = (-gamma * squared_distance(data.feature(i), data.feature(j))).exp();
            q[i * n + j] = data.label(i) as f64 * data.label(j) as f64 * k;
        }
    }
    q
}

/// Dual objective `sum a_i - 1/2 sum_ij a_i a_j y_i y_j k_ij`, computed
/// directly from the data.
pub fn dual_objective(data: &LabeledDataset, gamma: f64, alpha: &[f64]) -> f64 {
    let n = data.len();
    assert_eq!(alpha.len(), n);
    let q = build_q(data, gamma);
    let mut obj: f64 = alpha.iter().sum();
    for i in 0..n {
        for j in 0..n {
            obj -= 0.5 * alpha[i] * alpha[j] * q[i * n + j];
        }
    }
    obj
}

/// Euclidean projection onto `{0 <= a <= C, sum a_i y_i = 0}` by bisection
/// on the hyperplane multiplier.
fn project(v: &[f64], y: &[f64], c: f64, out: &mut [f64]) {
    let residual = |lambda: f64, out: &mut [f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..v.len() {
            out[i] = (v[i] - lambda * y[i]).clamp(0.0, c);
            s += y[i] * out[i];
        }
        s
    };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let mut lo = -bound;
    let mut hi = bound;
    // The residual is non-increasing in lambda.
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if residual(mid, out) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    residual(0.5 * (lo + hi), out);
}

/// Solve the dual by projected gradient ascent run to tight convergence.
///
/// Stops when an accepted step moves no coefficient by more than 1e-10, the
/// backtracked step size underflows (constrained stationary point), or after
/// 10^6 iterations. Returns the dual coefficients `a`.
pub fn brute_force_qp(data: &LabeledDataset, c: f64, gamma: f64) -> Result<Vec<f64>> {
    let n = data.len();
    if n > MAX_POINTS {
        return Err(Error::invalid(format!(
            "brute-force QP is limited to {MAX_POINTS} points, got {n}"
        )));
    }
    if n < 2 || !data.has_both_classes() {
        return Err(Error::SingleClass);
    }
    if !(c > 0.0 && gamma > 0.0) {
        return Err(Error::invalid("C and gamma must be > 0"));
    }

    let q = build_q(data, gamma);
    let y: Vec<f64> = (0..n).map(|i| data.label(i) as f64).collect();
    let objective = |a: &[f64]| -> f64 {
        let mut obj: f64 = a.iter().sum();
        for i in 0..n {
            for j in 0..n {
                obj -= 0.5 * a[i] * a[j] * q[i * n + j];
            }
        }
        obj
    };

    let mut alpha = vec![0.0; n];
    let mut obj = 0.0;
    let mut eta = 1.0;
    let mut trial_point = vec![0.0; n];
    let mut proposal = vec![0.0; n];

    for _ in 0..MAX_ITERATIONS {
        for i in 0..n {
            let qa: f64 = (0..n).map(|j| q[i * n + j] * alpha[j]).sum();
            trial_point[i] = alpha[i] + eta * (1.0 - qa);
        }
        project(&trial_point, &y, c, &mut proposal);
        let new_obj = objective(&proposal);
        if new_obj > obj {
            let step = alpha
                .iter()
                .zip(&proposal)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            alpha.copy_from_slice(&proposal);
            obj = new_obj;
            eta = (eta * 1.25).min(1e9);
            if step < STEP_TOLERANCE {
                break;
            }
        } else {
            eta *= 0.5;
            if eta < 1e-18 {
                break;
            }
        }
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_two_point_solution_is_symmetric() {
        let data = LabeledDataset::new(vec![vec![0.0], vec![2.0]], vec![1, -1]).unwrap();
        let alpha = brute_force_qp(&data, 10.0, 1.0).unwrap();
        assert_relative_eq!(alpha[0], alpha[1], epsilon = 1e-8);
        assert!(alpha[0] <= 10.0);
        // Analytic optimum: a = 1 / (1 - e^{-4}).
        let expect = 1.0 / (1.0 - (-4.0f64).exp());
        assert_relative_eq!(alpha[0], expect, epsilon = 1e-6);
    }

    #[test]
    fn vanishing_c_pins_all_coefficients() {
        let data = LabeledDataset::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, -1.0], vec![0.5, 0.25]],
            vec![1, -1, 1, -1],
        )
        .unwrap();
        let c = 1e-9;
        let alpha = brute_force_qp(&data, c, 1.0).unwrap();
        for &a in &alpha {
            assert!((0.0..=c).contains(&a));
        }
        // The kernel sum collapses, so the decision is the bias alone.
        for x in [vec![0.3, 0.4], vec![-1.0, 2.0]] {
            let kernel_sum: f64 = (0..data.len())
                .map(|i| {
                    alpha[i]
                        * data.label(i) as f64
                        * (-squared_distance(data.feature(i), &x)).exp()
                })
                .sum();
            assert!(kernel_sum.abs() <= 1e-7);
        }
    }

    #[test]
    fn projection_respects_constraints() {
        let y = [1.0, -1.0, 1.0, -1.0];
        let v = [5.0, -3.0, 0.2, 9.0];
        let mut out = [0.0; 4];
        project(&v, &y, 2.0, &mut out);
        let dot: f64 = out.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-9);
        assert!(out.iter().all(|&a| (0.0..=2.0).contains(&a)));
    }

    #[test]
    fn rejects_oversized_problems() {
        let rows: Vec<Vec<f64>> = (0..13).map(|i| vec![i as f64]).collect();
        let labels: Vec<i8> = (0..13).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let data = LabeledDataset::new(rows, labels).unwrap();
        assert!(brute_force_qp(&data, 1.0, 1.0).is_err());
    }
}
