//! Derivative-free maximization: coarse grids, golden-section refinement in
//! one dimension and compass (pattern) search in several.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Grid density, multistart count and stopping tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    /// Points per dimension of the coarse grid (one and two dimensions).
    pub grid_points: usize,
    /// Points per dimension when there are more than two parameters.
    pub coarse_points: usize,
    /// Best grid points used as refinement starts.
    pub starts: usize,
    /// Stop once every step is below this.
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self { grid_points: 64, coarse_points: 6, starts: 4, tolerance: 1e-7, max_steps: 20_000 }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 || self.coarse_points < 2 {
            return Err(invalid("optimizer grids need at least 2 points per dimension"));
        }
        if self.starts == 0 {
            return Err(invalid("optimizer needs at least one start"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid(format!("optimizer tolerance {} must be positive", self.tolerance)));
        }
        Ok(())
    }

    fn points_for(&self, dims: usize) -> usize {
        if dims <= 2 {
            self.grid_points
        } else {
            self.coarse_points
        }
    }
}

/// Parameter box; grids place points at `lo + (i + 1/2) h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo < hi, "empty parameter range");
        Self { lo, hi }
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub params: Vec<f64>,
    pub value: f64,
    /// Flat index of the grid point the winning refinement started from,
    /// or `None` for a warm start.
    pub grid_index: Option<usize>,
    pub refine_steps: usize,
    pub evaluations: usize,
}

/// Evaluate `f` on the product grid and return `(flat index, point, value)`
/// for the best `keep` points, best first.
pub fn grid_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &[Bounds],
    points: usize,
    keep: usize,
) -> Vec<(usize, Vec<f64>, f64)> {
    let dims = bounds.len();
    let total = points.pow(dims as u32);
    let mut best: Vec<(usize, Vec<f64>, f64)> = Vec::with_capacity(keep + 1);
    let mut x = vec![0.0; dims];
    for flat in 0..total {
        let mut rem = flat;
        for (d, b) in bounds.iter().enumerate().rev() {
            let i = rem % points;
            rem /= points;
            x[d] = b.lo + (i as f64 + 0.5) * (b.hi - b.lo) / points as f64;
        }
        let v = f(&x);
        if v.is_nan() {
            continue;
        }
        if best.len() < keep || v > best[best.len() - 1].2 {
            let pos = best.iter().position(|e| v > e.2).unwrap_or(best.len());
            best.insert(pos, (flat, x.clone(), v));
            best.truncate(keep);
        }
    }
    best
}

/// Golden-section maximization of a unimodal bracket.
pub fn golden_section(f: &mut dyn FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64, usize) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut steps = 0;
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        steps += 1;
    }
    if fc >= fd {
        (c, fc, steps)
    } else {
        (d, fd, steps)
    }
}

/// Compass search from `x0` with initial per-coordinate steps `step0`.
pub fn pattern_search(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &[Bounds],
    x0: &[f64],
    step0: &[f64],
    tol: f64,
    max_steps: usize,
) -> (Vec<f64>, f64, usize) {
    let mut x: Vec<f64> = x0.iter().zip(bounds).map(|(v, b)| b.clamp(*v)).collect();
    let mut fx = f(&x);
    let mut step = step0.to_vec();
    let mut steps = 0;
    while step.iter().any(|s| *s > tol) && steps < max_steps {
        let mut improved = false;
        for d in 0..x.len() {
            if step[d] <= tol {
                continue;
            }
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = bounds[d].clamp(x[d] + dir * step[d]);
                if y[d] == x[d] {
                    continue;
                }
                let fy = f(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        steps += 1;
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    (x, fx, steps)
}

/// Grid over the box then local refinement from the best starts:
/// golden section for one parameter, pattern search otherwise.
pub fn maximize(f: &mut dyn FnMut(&[f64]) -> f64, bounds: &[Bounds], spec: &OptimizerSpec) -> Optimum {
    let points = spec.points_for(bounds.len());
    let mut evaluations = 0usize;
    let mut counted = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let starts = grid_search(&mut counted, bounds, points, spec.starts);
    let steps: Vec<f64> = bounds.iter().map(|b| (b.hi - b.lo) / points as f64).collect();
    let mut best: Option<Optimum> = None;
    for (flat, x0, v0) in starts {
        let (x, v, n) = if bounds.len() == 1 {
            let b = bounds[0];
            let (lo, hi) = ((x0[0] - steps[0]).max(b.lo), (x0[0] + steps[0]).min(b.hi));
            let (x, v, n) = golden_section(&mut |t| counted(&[t]), lo, hi, spec.tolerance);
            if v >= v0 {
                (vec![x], v, n)
            } else {
                (x0, v0, n)
            }
        } else {
            pattern_search(&mut counted, bounds, &x0, &steps, spec.tolerance, spec.max_steps)
        };
        if best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(Optimum { params: x, value: v, grid_index: Some(flat), refine_steps: n, evaluations: 0 });
        }
    }
    let mut out = best.unwrap_or(Optimum {
        params: bounds.iter().map(|b| 0.5 * (b.lo + b.hi)).collect(),
        value: f64::NAN,
        grid_index: None,
        refine_steps: 0,
        evaluations: 0,
    });
    out.evaluations = evaluations;
    out
}

/// Local refinement only, from known good points (e.g. a previous
/// optimum in a continuation sweep). Initial steps are `scale` times the
/// grid spacing.
pub fn refine_from(
    f: &mut dyn FnMut(&[f64]) -> f64,
    bounds: &[Bounds],
    starts: &[Vec<f64>],
    spec: &OptimizerSpec,
    scale: f64,
) -> Optimum {
    let points = spec.points_for(bounds.len());
    let mut evaluations = 0usize;
    let mut counted = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let steps: Vec<f64> = bounds.iter().map(|b| scale * (b.hi - b.lo) / points as f64).collect();
    let mut best: Option<Optimum> = None;
    for x0 in starts {
        let (x, v, n) = pattern_search(&mut counted, bounds, x0, &steps, spec.tolerance, spec.max_steps);
        if best.as_ref().is_none_or(|b| v > b.value) {
            best = Some(Optimum { params: x, value: v, grid_index: None, refine_steps: n, evaluations: 0 });
        }
    }
    let mut out = best.expect("refine_from needs at least one start");
    out.evaluations = evaluations;
    out
}

/// Largest `x` in `[lo, hi]` with `pred(x)` true, assuming `pred(lo)`
/// holds and the predicate switches once.
pub fn bisect_last_true(pred: &mut dyn FnMut(f64) -> bool, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}
