//! Sequential minimal optimization.
//!
//! Working-set selection follows the maximal-violating-pair rule: with
//! `v_i = y_i - sum_j a_j y_j k_ij` the pair is the argmax of `v` over the
//! up-set and the argmin over the down-set, and training stops when the gap
//! drops to `tol`. If a floating-point corner case produces a pair that
//! cannot move, a seeded random sweep looks for any movable pair; `max_passes`
//! sweeps without progress flag the model as non-converged instead of
//! looping forever.
//!
//! The kernel matrix is cached in full at f64 below 8000 rows and at f32 up
//! to 20000 rows; larger problems fall back to rows computed on demand with
//! a small keep-recent cache, so training on tens of thousands of rows
//! stays in memory.

use crate::error::{Error, Result};
use crate::modelsel::Normalizer;
use crate::rng::SplitMix64;
use crate::svm::{LabeledDataset, SvmModel, squared_distance};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct SmoParams {
    pub c: f64,
    pub gamma: f64,
    /// KKT gap at which training stops; must be in (0, 1e-2].
    pub tol: f64,
    /// Consecutive no-progress sweeps tolerated before giving up.
    pub max_passes: u32,
    pub seed: u64,
}

impl SmoParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SmoParams {
            c,
            gamma,
            tol: 1e-3,
            max_passes: 50,
            seed: 42,
        }
    }
}

const F64_CACHE_MAX: usize = 8_000;
const F32_CACHE_MAX: usize = 20_000;
const LAZY_CACHE_ROWS: usize = 256;

enum GramCache<'a> {
    Full64(Vec<f64>),
    Full32(Vec<f32>),
    Lazy {
        data: &'a LabeledDataset,
        gamma: f64,
        slots: Vec<(usize, Vec<f64>)>,
        next_slot: usize,
    },
}

impl<'a> GramCache<'a> {
    fn new(data: &'a LabeledDataset, gamma: f64) -> Self {
        Self::with_limits(data, gamma, F64_CACHE_MAX, F32_CACHE_MAX)
    }

    fn with_limits(data: &'a LabeledDataset, gamma: f64, f64_max: usize, f32_max: usize) -> Self {
        let n = data.len();
        let kernel_row = |i: usize, out: &mut [f64]| {
            let xi = data.feature(i);
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = (-gamma * squared_distance(xi, data.feature(j))).exp();
            }
        };
        if n <= f64_max {
            let mut full = vec![0.0f64; n * n];
            for i in 0..n {
                kernel_row(i, &mut full[i * n..(i + 1) * n]);
            }
            GramCache::Full64(full)
        } else if n <= f32_max {
            let mut row = vec![0.0f64; n];
            let mut full = vec![0.0f32; n * n];
            for i in 0..n {
                kernel_row(i, &mut row);
                for (dst, &v) in full[i * n..(i + 1) * n].iter_mut().zip(&row) {
                    *dst = v as f32;
                }
            }
            GramCache::Full32(full)
        } else {
            GramCache::Lazy {
                data,
                gamma,
                slots: Vec::new(),
                next_slot: 0,
            }
        }
    }

    fn copy_row(&mut self, i: usize, n: usize, out: &mut [f64]) {
        match self {
            GramCache::Full64(full) => out.copy_from_slice(&full[i * n..(i + 1) * n]),
            GramCache::Full32(full) => {
                for (dst, &v) in out.iter_mut().zip(&full[i * n..(i + 1) * n]) {
                    *dst = v as f64;
                }
            }
            GramCache::Lazy {
                data,
                gamma,
                slots,
                next_slot,
            } => {
                if let Some((_, row)) = slots.iter().find(|(idx, _)| *idx == i) {
                    out.copy_from_slice(row);
                    return;
                }
                let xi = data.feature(i);
                for (j, slot) in out.iter_mut().enumerate() {
                    *slot = (-*gamma * squared_distance(xi, data.feature(j))).exp();
                }
                if slots.len() < LAZY_CACHE_ROWS {
                    slots.push((i, out.to_vec()));
                } else {
                    slots[*next_slot] = (i, out.to_vec());
                    *next_slot = (*next_slot + 1) % LAZY_CACHE_ROWS;
                }
            }
        }
    }
}

struct Solver<'a> {
    n: usize,
    c: f64,
    y: Vec<f64>,
    alpha: Vec<f64>,
    /// v_i = y_i - sum_j a_j y_j k_ij; KKT needs b in [max_up v, min_low v].
    v: Vec<f64>,
    cache: GramCache<'a>,
    row_i: Vec<f64>,
    row_j: Vec<f64>,
    iterations: u64,
}

impl<'a> Solver<'a> {
    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    fn select_up(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..self.n {
            if self.in_up(t) && best.is_none_or(|(_, m)| self.v[t] > m) {
                best = Some((t, self.v[t]));
            }
        }
        best
    }

    fn select_low(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..self.n {
            if self.in_low(t) && best.is_none_or(|(_, m)| self.v[t] < m) {
                best = Some((t, self.v[t]));
            }
        }
        best
    }

    /// Analytic two-variable update along a_i += y_i t, a_j -= y_j t.
    /// Returns false if the step was degenerate (no movement).
    fn step(&mut self, i: usize, j: usize) -> bool {
        let slope = self.v[i] - self.v[j];
        if !(slope > 0.0) {
            return false;
        }
        self.cache.copy_row(i, self.n, &mut self.row_i[..]);
        self.cache.copy_row(j, self.n, &mut self.row_j[..]);
        let quad = self.row_i[i] + self.row_j[j] - 2.0 * self.row_i[j];

        // Largest feasible t keeps both coefficients in the box.
        let limit_i = if self.y[i] > 0.0 {
            self.c - self.alpha[i]
        } else {
            self.alpha[i]
        };
        let limit_j = if self.y[j] > 0.0 {
            self.alpha[j]
        } else {
            self.c - self.alpha[j]
        };
        let t_hi = limit_i.min(limit_j);
        let t = if quad > 1e-12 {
            (slope / quad).min(t_hi)
        } else {
            t_hi
        };
        if !(t > 0.0) {
            return false;
        }

        let old_i = self.alpha[i];
        let old_j = self.alpha[j];
        self.alpha[i] = (old_i + self.y[i] * t).clamp(0.0, self.c);
        self.alpha[j] = (old_j - self.y[j] * t).clamp(0.0, self.c);
        let delta_i = self.alpha[i] - old_i;
        let delta_j = self.alpha[j] - old_j;
        if delta_i == 0.0 && delta_j == 0.0 {
            return false;
        }

        let gi = self.y[i] * delta_i;
        let gj = self.y[j] * delta_j;
        for t in 0..self.n {
            self.v[t] -= gi * self.row_i[t] + gj * self.row_j[t];
        }
        self.iterations += 1;
        true
    }
}

/// Train an SVM with sequential minimal optimization.
///
/// Deterministic under fixed `(data, params)`. A model that fails to reach
/// the `tol` gap is returned with `converged = false` rather than as an
/// error; the caller decides whether to use it. The returned model carries
/// an identity normalizer — callers that trained on normalized data attach
/// the fitted normalizer afterwards.
pub fn train_smo(data: &LabeledDataset, params: &SmoParams) -> Result<SvmModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::invalid("training needs at least 2 examples"));
    }
    if !data.has_both_classes() {
        return Err(Error::SingleClass);
    }
    if !(params.c > 0.0) {
        return Err(Error::invalid("C must be > 0"));
    }
    if !(params.gamma > 0.0) {
        return Err(Error::invalid("gamma must be > 0"));
    }
    if !(params.tol > 0.0 && params.tol <= 1e-2) {
        return Err(Error::invalid("tol must be in (0, 1e-2]"));
    }

    let y: Vec<f64> = (0..n).map(|i| data.label(i) as f64).collect();
    let mut solver = Solver {
        n,
        c: params.c,
        v: y.clone(),
        y,
        alpha: vec![0.0; n],
        cache: GramCache::new(data, params.gamma),
        row_i: vec![0.0; n],
        row_j: vec![0.0; n],
        iterations: 0,
    };

    let mut rng = SplitMix64::new(params.seed);
    let mut stalled_sweeps = 0u32;
    let hard_cap = 1_000_000u64.max(500 * n as u64);
    let mut converged = false;
    let (mut gap_hi, mut gap_lo) = (0.0, 0.0);

    loop {
        let (Some((i, hi)), Some((j, lo))) = (solver.select_up(), solver.select_low()) else {
            // One side empty: every coefficient pinned consistently, KKT holds.
            converged = true;
            break;
        };
        gap_hi = hi;
        gap_lo = lo;
        if hi - lo <= params.tol {
            converged = true;
            break;
        }
        if solver.iterations >= hard_cap {
            break;
        }
        if solver.step(i, j) {
            stalled_sweeps = 0;
            continue;
        }

        // Degenerate pair: sweep candidates in seeded random order.
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let mut progressed = false;
        'sweep: for &a in &order {
            if !solver.in_up(a) {
                continue;
            }
            for &b in &order {
                if a != b && solver.in_low(b) && solver.v[a] > solver.v[b] && solver.step(a, b) {
                    progressed = true;
                    break 'sweep;
                }
            }
        }
        if progressed {
            stalled_sweeps = 0;
        } else {
            stalled_sweeps += 1;
            if stalled_sweeps >= params.max_passes {
                break;
            }
        }
    }

    // Bias: average over free vectors, else midpoint of the feasible window.
    let free: Vec<usize> = (0..n)
        .filter(|&t| solver.alpha[t] > 0.0 && solver.alpha[t] < params.c)
        .collect();
    let bias = if !free.is_empty() {
        free.iter().map(|&t| solver.v[t]).sum::<f64>() / free.len() as f64
    } else {
        0.5 * (gap_hi + gap_lo)
    };

    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for t in 0..n {
        if solver.alpha[t] > 0.0 {
            support_vectors.push(data.feature(t).to_vec());
            dual_coeffs.push(solver.alpha[t] * solver.y[t]);
        }
    }

    Ok(SvmModel {
        gamma: params.gamma,
        c: params.c,
        tol: params.tol,
        bias,
        normalizer: Normalizer::identity(data.dim()),
        support_vectors,
        dual_coeffs,
        converged,
        seed: params.seed,
        iterations: solver.iterations,
    })
}

/// Dual coefficients `a_i` recovered per training row (0 for non-SVs is not
/// reconstructible from the model, so tests that need the full vector use
/// [`train_alphas`]).
#[cfg(test)]
pub(crate) fn train_alphas(data: &LabeledDataset, params: &SmoParams) -> Result<(Vec<f64>, SvmModel)> {
    let model = train_smo(data, params)?;
    let mut alphas = vec![0.0; data.len()];
    let mut sv = 0;
    for i in 0..data.len() {
        if sv < model.support_vectors.len() && model.support_vectors[sv] == data.feature(i) {
            alphas[i] = model.dual_coeffs[sv] * data.label(i) as f64;
            sv += 1;
        }
    }
    Ok((alphas, model))
}
