//! Support vector machine trained with a simplified SMO solver.
//!
//! Labels are +1/-1. Each sweep scans every training point; when a point
//! violates its KKT condition beyond `tol`, a random partner is drawn and
//! the pair's multipliers are optimized jointly in closed form. Training
//! stops once `max_passes` consecutive sweeps observe no violation at all
//! (so a converged model satisfies the KKT conditions within `tol` at
//! every training point), or at the `max_sweeps` hard cap, in which case
//! the model is still returned but flagged as not converged.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_training_inputs, ModelError};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
    Poly,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default)]
    pub coef0: f64,
}

fn default_gamma() -> f64 {
    1.0
}

fn default_degree() -> u32 {
    3
}

impl KernelSpec {
    pub fn linear() -> KernelSpec {
        KernelSpec { kind: KernelKind::Linear, gamma: 1.0, degree: 3, coef0: 0.0 }
    }

    pub fn rbf(gamma: f64) -> KernelSpec {
        KernelSpec { kind: KernelKind::Rbf, gamma, degree: 3, coef0: 0.0 }
    }

    pub fn poly(gamma: f64, degree: u32, coef0: f64) -> KernelSpec {
        KernelSpec { kind: KernelKind::Poly, gamma, degree, coef0 }
    }

    pub fn sigmoid(gamma: f64, coef0: f64) -> KernelSpec {
        KernelSpec { kind: KernelKind::Sigmoid, gamma, coef0, degree: 3 }
    }
}

pub fn kernel(u: &SparseVector, v: &SparseVector, spec: &KernelSpec) -> f64 {
    match spec.kind {
        KernelKind::Linear => u.dot(v),
        KernelKind::Rbf => (-spec.gamma * u.sq_distance(v)).exp(),
        KernelKind::Poly => (spec.gamma * u.dot(v) + spec.coef0).powi(spec.degree as i32),
        KernelKind::Sigmoid => (spec.gamma * u.dot(v) + spec.coef0).tanh(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    /// Box constraint; larger values penalize margin violations harder.
    pub c: f64,
    pub kernel: KernelSpec,
    /// KKT violation tolerance.
    pub tol: f64,
    /// Consecutive unchanged sweeps required to declare convergence.
    pub max_passes: u32,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: u32,
    pub seed: u64,
}

fn default_max_sweeps() -> u32 {
    10_000
}

impl Default for SvmParams {
    fn default() -> SvmParams {
        SvmParams {
            c: 1.0,
            kernel: KernelSpec::linear(),
            tol: 1e-3,
            max_passes: 10,
            max_sweeps: default_max_sweeps(),
            seed: 0,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(ModelError::InvalidParams("C must be a positive finite number".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ModelError::InvalidParams("tol must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(ModelError::InvalidParams("max_passes must be >= 1".into()));
        }
        if self.max_sweeps == 0 {
            return Err(ModelError::InvalidParams("max_sweeps must be >= 1".into()));
        }
        if !self.kernel.gamma.is_finite() || !self.kernel.coef0.is_finite() {
            return Err(ModelError::InvalidParams("kernel parameters must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub params: SvmParams,
    /// Training vectors with multiplier above 1e-12.
    pub support_vectors: Vec<SparseVector>,
    /// alpha_i * y_i per support vector.
    pub dual_coefs: Vec<f64>,
    /// Indices of the support vectors in the training set, ascending.
    pub support_indices: Vec<u32>,
    pub bias: f64,
    /// Dense primal weights, present for the linear kernel only.
    pub w: Option<Vec<f64>>,
    pub converged: bool,
    pub n_features: usize,
}

impl SvmModel {
    /// Signed margin; prediction is +1 iff this is >= 0.
    pub fn decision_function(&self, x: &SparseVector) -> f64 {
        match &self.w {
            Some(w) => {
                let mut acc = 0.0;
                for (idx, value) in x.iter() {
                    acc += w[idx as usize] * value;
                }
                acc + self.bias
            }
            None => self.kernel_decision_function(x),
        }
    }

    /// Margin computed from the dual form regardless of kernel.
    pub fn kernel_decision_function(&self, x: &SparseVector) -> f64 {
        let mut acc = 0.0;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coefs) {
            acc += coef * kernel(sv, x, &self.params.kernel);
        }
        acc + self.bias
    }

    pub fn predict_sign(&self, x: &SparseVector) -> i8 {
        if self.decision_function(x) >= 0.0 {
            1
        } else {
            -1
        }
    }

    /// Reconstruct the full multiplier vector for a training set of n rows.
    pub fn dense_alphas(&self, n: usize) -> Vec<f64> {
        let mut alphas = vec![0.0; n];
        for (idx, coef) in self.support_indices.iter().zip(&self.dual_coefs) {
            alphas[*idx as usize] = coef.abs();
        }
        alphas
    }
}

/// Dual objective W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
pub fn dual_objective(
    x: &[SparseVector],
    y: &[i8],
    alphas: &[f64],
    spec: &KernelSpec,
) -> f64 {
    let n = x.len();
    let mut value: f64 = alphas.iter().sum();
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alphas[j] == 0.0 {
                continue;
            }
            value -= 0.5
                * alphas[i]
                * alphas[j]
                * (y[i] as f64)
                * (y[j] as f64)
                * kernel(&x[i], &x[j], spec);
        }
    }
    value
}

pub fn train_svm(
    x: &[SparseVector],
    y: &[i8],
    params: &SvmParams,
) -> Result<SvmModel, ModelError> {
    let n_features = check_training_inputs(x, y.len())?;
    params.validate()?;
    for &label in y {
        if label != 1 && label != -1 {
            return Err(ModelError::InvalidParams(format!(
                "labels must be +1 or -1, got {label}"
            )));
        }
    }
    if !y.contains(&1) || !y.contains(&-1) {
        return Err(ModelError::SingleClass);
    }
    let n = x.len();
    let c = params.c;
    let tol = params.tol;
    let gram: Vec<f64> = {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel(&x[i], &x[j], &params.kernel);
                g[i * n + j] = k;
                g[j * n + i] = k;
            }
        }
        g
    };
    let mut alphas = vec![0.0f64; n];
    let mut bias = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let margin = |alphas: &[f64], bias: f64, i: usize| -> f64 {
        let mut acc = bias;
        for k in 0..n {
            if alphas[k] != 0.0 {
                acc += alphas[k] * (y[k] as f64) * gram[k * n + i];
            }
        }
        acc
    };
    let mut passes = 0u32;
    let mut sweeps = 0u32;
    while passes < params.max_passes && sweeps < params.max_sweeps {
        sweeps += 1;
        let mut violations = 0usize;
        for i in 0..n {
            let e_i = margin(&alphas, bias, i) - y[i] as f64;
            let r_i = (y[i] as f64) * e_i;
            if !((r_i < -tol && alphas[i] < c) || (r_i > tol && alphas[i] > 0.0)) {
                continue;
            }
            violations += 1;
            // Second choice: a seeded random partner first, then fall back
            // to scanning the remaining indices so a violating point is
            // never stranded on one unlucky draw.
            let start = rng.random_range(0..n - 1);
            for offset in 0..n - 1 {
                let mut j = start + offset;
                if j >= n - 1 {
                    j -= n - 1;
                }
                if j >= i {
                    j += 1;
                }
                let e_j = margin(&alphas, bias, j) - y[j] as f64;
                let (ai_old, aj_old) = (alphas[i], alphas[j]);
                let (lo, hi) = if y[i] != y[j] {
                    ((aj_old - ai_old).max(0.0), (c + aj_old - ai_old).min(c))
                } else {
                    ((ai_old + aj_old - c).max(0.0), (ai_old + aj_old).min(c))
                };
                if lo >= hi {
                    continue;
                }
                let eta = 2.0 * gram[i * n + j] - gram[i * n + i] - gram[j * n + j];
                if eta >= 0.0 {
                    continue;
                }
                let mut aj = aj_old - (y[j] as f64) * (e_i - e_j) / eta;
                aj = aj.clamp(lo, hi);
                let at_bound = aj == lo || aj == hi;
                if !at_bound && (aj - aj_old).abs() < 1e-5 {
                    continue;
                }
                let mut ai = ai_old + (y[i] as f64) * (y[j] as f64) * (aj_old - aj);
                // land exactly on the box: residual float dust here would
                // register as a sub-resolution KKT violation forever
                let snap = |a: f64| {
                    if a < 1e-12 {
                        0.0
                    } else if a > c - 1e-12 {
                        c
                    } else {
                        a
                    }
                };
                ai = snap(ai);
                aj = snap(aj);
                if ai == ai_old && aj == aj_old {
                    continue;
                }
                alphas[i] = ai;
                alphas[j] = aj;
                let d_i = (y[i] as f64) * (ai - ai_old);
                let d_j = (y[j] as f64) * (aj - aj_old);
                let b1 = bias - e_i - d_i * gram[i * n + i] - d_j * gram[i * n + j];
                let b2 = bias - e_j - d_i * gram[i * n + j] - d_j * gram[j * n + j];
                bias = if ai > 0.0 && ai < c {
                    b1
                } else if aj > 0.0 && aj < c {
                    b2
                } else {
                    (b1 + b2) / 2.0
                };
                break;
            }
        }
        if violations == 0 {
            passes += 1;
        } else {
            passes = 0;
        }
    }
    let converged = passes >= params.max_passes;
    if !converged {
        log::warn!(
            "SMO hit the {}-sweep cap before {} quiet passes; returning the current iterate",
            params.max_sweeps,
            params.max_passes
        );
    }
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    let mut support_indices = Vec::new();
    for i in 0..n {
        if alphas[i] > 1e-12 {
            support_vectors.push(x[i].clone());
            dual_coefs.push(alphas[i] * y[i] as f64);
            support_indices.push(i as u32);
        }
    }
    let w = if params.kernel.kind == KernelKind::Linear {
        let mut w = vec![0.0f64; n_features];
        for (sv, coef) in support_vectors.iter().zip(&dual_coefs) {
            for (idx, value) in sv.iter() {
                w[idx as usize] += coef * value;
            }
        }
        Some(w)
    } else {
        None
    };
    Ok(SvmModel {
        params: *params,
        support_vectors,
        dual_coefs,
        support_indices,
        bias,
        w,
        converged,
        n_features,
    })
}
