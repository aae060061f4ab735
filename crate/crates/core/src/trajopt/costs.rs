//! Cost terms over the control polygon, each with its exact analytic
//! gradient. By the convex hull property, constraining the control points
//! (and their difference quotients) is sufficient for the whole curve.

use super::spline::terrestrial_segments;
use crate::envmap::Esdf;
use crate::{wrap_angle, Error, Mode, Result};
use nalgebra::{Vector2, Vector3};

/// Chord shorter than this is skipped by the curvature cost and flagged.
pub const EPS_CHORD: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct CostWeights {
    pub smooth: f64,
    pub collision: f64,
    pub feasibility: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub v_max: f64,
    pub a_max: f64,
}

#[derive(Debug, Clone)]
pub struct CostReport {
    pub f_s: f64,
    pub f_c: f64,
    pub f_v: f64,
    pub f_a: f64,
    pub f_n: f64,
    pub f_total: f64,
    pub gradient: Vec<Vector3<f64>>,
    /// ESDF queries that had to be clamped into the map bounds.
    pub clamped_queries: usize,
    /// Curvature terms skipped for degenerate chords.
    pub degenerate_chords: usize,
}

/// Elastic-band smoothness: sum of squared second differences.
pub fn cost_smoothness(q: &[Vector3<f64>]) -> (f64, Vec<Vector3<f64>>) {
    let n = q.len();
    let mut value = 0.0;
    let mut grad = vec![Vector3::zeros(); n];
    for i in 1..n.saturating_sub(1) {
        let d = q[i + 1] - q[i] * 2.0 + q[i - 1];
        value += d.norm_squared();
        grad[i + 1] += d * 2.0;
        grad[i] -= d * 4.0;
        grad[i - 1] += d * 2.0;
    }
    (value, grad)
}

/// ESDF clearance penalty: (d - d0)^2 for d < d0, zero otherwise. The
/// gradient chains through the interpolated ESDF gradient, pushing violating
/// points up the distance field.
pub fn cost_collision(
    q: &[Vector3<f64>],
    esdf: &Esdf,
    clearance: f64,
) -> Result<(f64, Vec<Vector3<f64>>, usize)> {
    let mut value = 0.0;
    let mut grad = vec![Vector3::zeros(); q.len()];
    let mut clamped = 0;
    for (i, p) in q.iter().enumerate() {
        let query = esdf.query(p)?;
        if query.clamped {
            clamped += 1;
        }
        let excess = query.distance - clearance;
        if excess < 0.0 {
            value += excess * excess;
            grad[i] += query.gradient * (2.0 * excess);
        }
    }
    Ok((value, grad, clamped))
}

/// Per-axis quadratic excess of the velocity and acceleration control points
/// over the limits. Zero iff every derivative control point is inside the
/// box, which bounds the whole derivative curve by the convex hull property.
pub fn cost_feasibility(
    q: &[Vector3<f64>],
    knot_interval: f64,
    limits: &Limits,
) -> Result<(f64, f64, Vec<Vector3<f64>>)> {
    if !(knot_interval > 0.0) {
        return Err(Error::InvalidInput("knot interval must be > 0".into()));
    }
    let n = q.len();
    let dt = knot_interval;
    let mut f_v = 0.0;
    let mut f_a = 0.0;
    let mut grad = vec![Vector3::zeros(); n];
    for i in 0..n.saturating_sub(1) {
        let v = (q[i + 1] - q[i]) / dt;
        for axis in 0..3 {
            let e = v[axis].abs() - limits.v_max;
            if e > 0.0 {
                f_v += e * e;
                let d = 2.0 * e * v[axis].signum() / dt;
                grad[i + 1][axis] += d;
                grad[i][axis] -= d;
            }
        }
    }
    for i in 0..n.saturating_sub(2) {
        let a = (q[i + 2] - q[i + 1] * 2.0 + q[i]) / (dt * dt);
        for axis in 0..3 {
            let e = a[axis].abs() - limits.a_max;
            if e > 0.0 {
                f_a += e * e;
                let d = 2.0 * e * a[axis].signum() / (dt * dt);
                grad[i + 2][axis] += d;
                grad[i + 1][axis] -= 2.0 * d;
                grad[i][axis] += d;
            }
        }
    }
    Ok((f_v, f_a, grad))
}

/// Nonholonomic curvature penalty on terrestrial control points (2D, z
/// dropped). Curvature at an interior point is the absolute heading change
/// between successive chords divided by the incoming chord length; only
/// values above `c_max` are penalized, and segment endpoints are excluded.
pub fn cost_curvature(
    q: &[Vector3<f64>],
    labels: &[Mode],
    c_max: f64,
    eps_len: f64,
) -> (f64, Vec<Vector3<f64>>, usize) {
    let mut value = 0.0;
    let mut grad = vec![Vector3::zeros(); q.len()];
    let mut degenerate = 0;
    for (s, e) in terrestrial_segments(labels) {
        if e - s < 2 {
            continue;
        }
        for i in (s + 1)..e {
            let d1 = Vector2::new(q[i].x - q[i - 1].x, q[i].y - q[i - 1].y);
            let d2 = Vector2::new(q[i + 1].x - q[i].x, q[i + 1].y - q[i].y);
            let n1 = d1.norm();
            let n2 = d2.norm();
            if n1 < eps_len || n2 < eps_len {
                degenerate += 1;
                continue;
            }
            let raw = wrap_angle(d2.y.atan2(d2.x) - d1.y.atan2(d1.x));
            let dbeta = raw.abs();
            let c = dbeta / n1;
            if c <= c_max {
                continue;
            }
            value += (c - c_max) * (c - c_max);
            let coeff = 2.0 * (c - c_max);
            let s_sign = raw.signum();
            // d(dbeta)/d(chord): perpendicular over squared length.
            let db_dd2 = Vector2::new(-d2.y, d2.x) * (s_sign / (n2 * n2));
            let db_dd1 = Vector2::new(-d1.y, d1.x) * (-s_sign / (n1 * n1));
            let dc_dd1 = db_dd1 / n1 - d1 * (dbeta / (n1 * n1 * n1));
            let dc_dd2 = db_dd2 / n1;
            let add = |g: &mut Vector3<f64>, v: Vector2<f64>| {
                g.x += coeff * v.x;
                g.y += coeff * v.y;
            };
            add(&mut grad[i - 1], -dc_dd1);
            add(&mut grad[i], dc_dd1 - dc_dd2);
            add(&mut grad[i + 1], dc_dd2);
        }
    }
    (value, grad, degenerate)
}

/// Weighted total objective over the control polygon. `esdf` may be absent,
/// in which case the collision term is zero.
pub fn evaluate_objective(
    q: &[Vector3<f64>],
    labels: &[Mode],
    esdf: Option<&Esdf>,
    knot_interval: f64,
    weights: &CostWeights,
    limits: &Limits,
    clearance: f64,
    c_max: f64,
) -> Result<CostReport> {
    let (f_s, g_s) = cost_smoothness(q);
    let (f_c, g_c, clamped) = match esdf {
        Some(esdf) => cost_collision(q, esdf, clearance)?,
        None => (0.0, vec![Vector3::zeros(); q.len()], 0),
    };
    let (f_v, f_a, g_f) = cost_feasibility(q, knot_interval, limits)?;
    let (f_n, g_n, degenerate) = cost_curvature(q, labels, c_max, EPS_CHORD);

    let f_total = weights.smooth * f_s
        + weights.collision * f_c
        + weights.feasibility * (f_v + f_a)
        + weights.curvature * f_n;
    let gradient = (0..q.len())
        .map(|i| {
            g_s[i] * weights.smooth
                + g_c[i] * weights.collision
                + g_f[i] * weights.feasibility
                + g_n[i] * weights.curvature
        })
        .collect();
    Ok(CostReport {
        f_s,
        f_c,
        f_v,
        f_a,
        f_n,
        f_total,
        gradient,
        clamped_queries: clamped,
        degenerate_chords: degenerate,
    })
}

/// Recompute the curvature values along terrestrial segments (diagnostic).
pub fn curvature_values(q: &[Vector3<f64>], labels: &[Mode]) -> Vec<f64> {
    let mut out = Vec::new();
    for (s, e) in terrestrial_segments(labels) {
        if e - s < 2 {
            continue;
        }
        for i in (s + 1)..e {
            let d1 = Vector2::new(q[i].x - q[i - 1].x, q[i].y - q[i - 1].y);
            let d2 = Vector2::new(q[i + 1].x - q[i].x, q[i + 1].y - q[i].y);
            if d1.norm() < EPS_CHORD || d2.norm() < EPS_CHORD {
                continue;
            }
            let dbeta = wrap_angle(d2.y.atan2(d2.x) - d1.y.atan2(d1.x)).abs();
            out.push(dbeta / d1.norm());
        }
    }
    out
}
