//! Limited-memory BFGS with a strong-Wolfe line search, and full-batch MLP
//! training on top of it.
//!
//! The search direction comes from the usual two-loop recursion over the last
//! `memory` curvature pairs `(s, y)`, with initial inverse-Hessian scaling
//! `sᵀy / yᵀy`. Step lengths are found by bracketing followed by a zoom phase
//! that uses safeguarded cubic interpolation.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{
    hidden_size, init_params, loss_grad_flat, Classifier, MlpDims, MlpFormat, MlpParams,
    Standardizer, TrainConfig, TrainingMeta, TrainingSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub c1: f64,
    pub c2: f64,
    /// Stop when the gradient infinity norm falls below this.
    pub grad_tol: f64,
    /// Stop after two consecutive iterations whose relative loss change is below this.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Objective evaluations allowed per line search.
    pub max_linesearch: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-6,
            rel_tol: 1e-12,
            max_iter: 10_000,
            max_linesearch: 25,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.memory < 1 || self.max_iter < 1 || self.max_linesearch < 2 {
            return Err(Error::Config(
                "memory and max_iter must be >= 1, max_linesearch >= 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIter,
    LineSearchFailure,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIter => "max-iter",
            Status::LineSearchFailure => "line-search-failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

/// A differentiable scalar function. `eval` writes the gradient into `grad`
/// and returns the value.
pub trait Objective {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: Fn(&[f64], &mut [f64]) -> f64> Objective for F {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `-H·g` from the two-loop recursion.
fn direction(history: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (i, p) in history.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alpha[i] = a;
        q.iter_mut().zip(&p.y).for_each(|(qi, yi)| *qi -= a * yi);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (i, p) in history.iter().enumerate() {
        let b = p.rho * dot(&p.y, &q);
        let a = alpha[i];
        q.iter_mut().zip(&p.s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizer of the cubic interpolating `(a, fa, da)` and `(b, fb, db)`.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

struct Trial {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vec<f64>,
    g: Vec<f64>,
}

struct LineSearch<'a, O: Objective + ?Sized> {
    obj: &'a O,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    d0: f64,
    c1: f64,
    c2: f64,
    budget: usize,
    evals: usize,
}

impl<O: Objective + ?Sized> LineSearch<'_, O> {
    fn probe(&mut self, alpha: f64) -> Trial {
        self.evals += 1;
        let x: Vec<f64> = self
            .x0
            .iter()
            .zip(self.dir)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        let mut g = vec![0.0; x.len()];
        let f = self.obj.eval(&x, &mut g);
        let d = if f.is_finite() && all_finite(&g) {
            dot(&g, self.dir)
        } else {
            f64::NAN
        };
        Trial { alpha, f, d, x, g }
    }

    fn armijo_fails(&self, t: &Trial) -> bool {
        t.f > self.f0 + self.c1 * t.alpha * self.d0
    }

    fn curvature_holds(&self, t: &Trial) -> bool {
        t.d.abs() <= -self.c2 * self.d0
    }

    fn run(&mut self, alpha0: f64) -> Option<Trial> {
        let mut prev = Trial {
            alpha: 0.0,
            f: self.f0,
            d: self.d0,
            x: self.x0.to_vec(),
            g: Vec::new(),
        };
        let mut alpha = alpha0;
        let mut first = true;
        while self.evals < self.budget {
            let t = self.probe(alpha);
            if !t.d.is_finite() {
                // Overshot into a non-finite region: pull back toward the last good point.
                alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
                continue;
            }
            if self.armijo_fails(&t) || (!first && t.f >= prev.f) {
                return self.zoom(prev, t);
            }
            if self.curvature_holds(&t) {
                return Some(t);
            }
            if t.d >= 0.0 {
                return self.zoom(t, prev);
            }
            let next = cubic_min(prev.alpha, prev.f, prev.d, t.alpha, t.f, t.d)
                .filter(|a| *a > 1.1 * t.alpha)
                .map_or(2.0 * t.alpha, |a| a.min(10.0 * t.alpha));
            first = false;
            prev = t;
            alpha = next;
        }
        None
    }

    /// `lo` satisfies sufficient decrease and has the lower value; the
    /// minimizer lies between `lo` and `hi`.
    fn zoom(&mut self, mut lo: Trial, mut hi: Trial) -> Option<Trial> {
        while self.evals < self.budget {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = (b - a).abs();
            if width <= f64::EPSILON * a.abs().max(b.abs()).max(1e-300) {
                return None;
            }
            let (left, right) = (a.min(b), a.max(b));
            let margin = 0.1 * width;
            let alpha = match cubic_min(a, lo.f, lo.d, b, hi.f, hi.d) {
                Some(t) if hi.d.is_finite() && t > left + margin && t < right - margin => t,
                _ => 0.5 * (a + b),
            };
            let t = self.probe(alpha);
            if !t.d.is_finite() || self.armijo_fails(&t) || t.f >= lo.f {
                hi = t;
            } else {
                if self.curvature_holds(&t) {
                    return Some(t);
                }
                if t.d * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
        None
    }
}

/// Minimizes `obj` from `x0`.
///
/// The returned value never exceeds the value at `x0`. A non-finite value at
/// `x0` is an error; non-finite values met during a line search end the run
/// with [`Status::LineSearchFailure`] at the last good iterate.
pub fn lbfgs_minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], cfg: &OptimConfig) -> Result<OptimResult> {
    cfg.validate()?;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut f = obj.eval(&x, &mut g);
    let mut evaluations = 1;
    if !(f.is_finite() && all_finite(&g)) {
        return Err(Error::Config("objective is not finite at the starting point".into()));
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut small_changes = 0;
    let finish = |x: Vec<f64>, f: f64, g: &[f64], iterations, evaluations, status| OptimResult {
        x,
        value: f,
        grad_inf_norm: inf_norm(g),
        iterations,
        evaluations,
        status,
    };

    if inf_norm(&g) <= cfg.grad_tol {
        return Ok(finish(x, f, &g, 0, evaluations, Status::Converged));
    }

    while iterations < cfg.max_iter {
        let mut dir = direction(&history, &g);
        let mut d0 = dot(&dir, &g);
        if !(d0 < 0.0) {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            d0 = -dot(&g, &g);
        }
        let alpha0 = if history.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };

        let mut search = LineSearch {
            obj,
            x0: &x,
            dir: &dir,
            f0: f,
            d0,
            c1: cfg.c1,
            c2: cfg.c2,
            budget: cfg.max_linesearch,
            evals: 0,
        };
        let outcome = search.run(alpha0);
        evaluations += search.evals;
        let Some(step) = outcome else {
            if history.is_empty() {
                return Ok(finish(x, f, &g, iterations, evaluations, Status::LineSearchFailure));
            }
            // Retry once from steepest descent before giving up.
            history.clear();
            continue;
        };
        iterations += 1;

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        let rel = (f - step.f).abs() / f.abs().max(step.f.abs()).max(1.0);
        small_changes = if rel < cfg.rel_tol { small_changes + 1 } else { 0 };
        x = step.x;
        f = step.f;
        g = step.g;

        if inf_norm(&g) <= cfg.grad_tol || small_changes >= 2 {
            return Ok(finish(x, f, &g, iterations, evaluations, Status::Converged));
        }
    }
    Ok(finish(x, f, &g, iterations, evaluations, Status::MaxIter))
}

/// Trains an MLP on a full batch by minimizing the regularized cross-entropy
/// from a seeded Glorot start. `train.max_iter` bounds the optimizer.
pub fn train_mlp(
    set: &TrainingSet,
    num_classes: usize,
    schema_id: &str,
    train: &TrainConfig,
    optim: &OptimConfig,
) -> Result<Classifier> {
    train.validate()?;
    if set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if let Some(&y) = set.labels().iter().find(|&&y| y >= num_classes) {
        return Err(Error::Config(format!("label {y} out of range for C = {num_classes}")));
    }
    let nf = set.n_features();
    let hidden = hidden_size(nf, num_classes, train.hidden_size_policy)?;
    let dims = MlpDims::new(nf, hidden, num_classes);

    let scaler = train.standardize.then(|| Standardizer::fit(set));
    let scaled;
    let data = match &scaler {
        Some(s) => {
            scaled = set.map_rows(|row| s.apply(row));
            &scaled
        }
        None => set,
    };

    let theta0 = init_params(dims, train.seed).to_flat();
    let lambda = train.l2_lambda;
    let objective = |theta: &[f64], grad: &mut [f64]| loss_grad_flat(dims, theta, data, lambda, grad);
    let cfg = OptimConfig {
        max_iter: train.max_iter,
        ..optim.clone()
    };
    let result = lbfgs_minimize(&objective, &theta0, &cfg)?;

    let first = set.labels()[0];
    let single_class_fold = set.labels().iter().all(|&y| y == first);
    Ok(Classifier {
        format: MlpFormat,
        schema_id: schema_id.to_string(),
        policy: train.hidden_size_policy,
        scaler,
        params: MlpParams::from_flat(dims, &result.x)?,
        training: Some(TrainingMeta {
            status: result.status.to_string(),
            iterations: result.iterations,
            final_loss: result.value,
            samples: set.len(),
            single_class_fold,
        }),
    })
}
