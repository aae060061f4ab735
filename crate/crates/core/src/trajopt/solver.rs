//! Quasi-Newton refinement of the control polygon: L-BFGS with Armijo
//! backtracking. Boundary control points (first and last `degree`) are
//! frozen to preserve the endpoint state; terrestrial points move in 2D
//! only, their z pinned to the ground plane.

use super::costs::{evaluate_objective, CostReport, CostWeights, Limits};
use super::spline::BSplineTrajectory;
use crate::envmap::Esdf;
use crate::{Error, Mode, Result};
use nalgebra::Vector3;
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub trajectory: BSplineTrajectory,
    pub report: CostReport,
    /// False when the iteration budget ran out before convergence; the
    /// trajectory is still the best iterate found.
    pub converged: bool,
    pub iterations: usize,
}

struct VarMap {
    // (control point index, axis)
    slots: Vec<(usize, usize)>,
}

impl VarMap {
    fn build(labels: &[Mode], degree: usize) -> Self {
        let n = labels.len();
        let mut slots = Vec::new();
        if n > 2 * degree {
            for i in degree..n - degree {
                let axes: &[usize] = match labels[i] {
                    Mode::Terrestrial => &[0, 1],
                    Mode::Aerial => &[0, 1, 2],
                };
                for &a in axes {
                    slots.push((i, a));
                }
            }
        }
        Self { slots }
    }

    fn pack(&self, q: &[Vector3<f64>]) -> Vec<f64> {
        self.slots.iter().map(|&(i, a)| q[i][a]).collect()
    }

    fn unpack(&self, x: &[f64], q: &mut [Vector3<f64>]) {
        for (s, &(i, a)) in self.slots.iter().enumerate() {
            q[i][a] = x[s];
        }
    }

    fn pack_grad(&self, g: &[Vector3<f64>]) -> Vec<f64> {
        self.slots.iter().map(|&(i, a)| g[i][a]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Refine the labeled trajectory against the weighted objective. Monotone:
/// only strictly improving iterates are accepted, so the returned f_total
/// never exceeds the input's.
#[allow(clippy::too_many_arguments)]
pub fn optimize(
    traj: &BSplineTrajectory,
    esdf: Option<&Esdf>,
    weights: &CostWeights,
    limits: &Limits,
    clearance: f64,
    c_max: f64,
    max_iterations: usize,
) -> Result<OptimizeOutcome> {
    if weights.smooth < 0.0 || weights.collision < 0.0 || weights.feasibility < 0.0 || weights.curvature < 0.0 {
        return Err(Error::InvalidInput("cost weights must be nonnegative".into()));
    }
    let labels = traj.labels.clone();
    let dt = traj.knot_interval;
    let mut q = traj.control_points.clone();
    let vmap = VarMap::build(&labels, traj.degree);

    let eval = |q: &[Vector3<f64>]| -> Result<CostReport> {
        evaluate_objective(q, &labels, esdf, dt, weights, limits, clearance, c_max)
    };

    let mut report = eval(&q)?;
    if !report.f_total.is_finite() {
        return Err(Error::Numerical("non-finite objective at initial trajectory".into()));
    }
    if vmap.slots.is_empty() {
        return Ok(OptimizeOutcome {
            trajectory: traj.clone(),
            report,
            converged: true,
            iterations: 0,
        });
    }

    let mut x = vmap.pack(&q);
    let mut g = vmap.pack_grad(&report.gradient);
    let mut f = report.f_total;
    let m = 8usize;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, rho)
    let grad_tol = 1e-8;
    let f_tol = 1e-12;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..max_iterations {
        iterations = it + 1;
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= grad_tol {
            converged = true;
            break;
        }
        // L-BFGS two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        if !history.is_empty() {
            let mut alphas = Vec::with_capacity(history.len());
            for (s, y, rho) in history.iter().rev() {
                let a = rho * dot(s, &d);
                for (di, yi) in d.iter_mut().zip(y) {
                    *di -= a * yi;
                }
                alphas.push(a);
            }
            let (s_last, y_last, _) = history.back().unwrap();
            let gamma = dot(s_last, y_last) / dot(y_last, y_last).max(1e-300);
            for di in d.iter_mut() {
                *di *= gamma.max(1e-12);
            }
            for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
                let b = rho * dot(y, &d);
                for (di, si) in d.iter_mut().zip(s) {
                    *di += (a - b) * si;
                }
            }
        } else {
            let scale = 1.0 / gnorm.max(1.0);
            for di in d.iter_mut() {
                *di *= scale;
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // Not a descent direction; reset to steepest descent.
            history.clear();
            d = g.iter().map(|v| -v / gnorm.max(1.0)).collect();
            slope = dot(&g, &d);
        }

        // Armijo backtracking.
        let mut alpha = 1.0;
        let c1 = 1e-4;
        let mut accepted = None;
        for _ in 0..40 {
            let x_new: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
            vmap.unpack(&x_new, &mut q);
            let rep = eval(&q)?;
            if rep.f_total.is_finite() && rep.f_total <= f + c1 * alpha * slope {
                accepted = Some((x_new, rep));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, rep_new)) = accepted else {
            // Line search failed; restore best point and stop.
            vmap.unpack(&x, &mut q);
            converged = true;
            break;
        };
        let g_new = vmap.pack_grad(&rep_new.gradient);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            history.push_back((s, y, 1.0 / sy));
            if history.len() > m {
                history.pop_front();
            }
        }
        let f_new = rep_new.f_total;
        let improvement = f - f_new;
        x = x_new;
        g = g_new;
        f = f_new;
        report = rep_new;
        if improvement <= f_tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    vmap.unpack(&x, &mut q);
    let mut out = traj.clone();
    out.control_points = q;
    out.labels = labels;
    Ok(OptimizeOutcome { trajectory: out, report, converged, iterations })
}
