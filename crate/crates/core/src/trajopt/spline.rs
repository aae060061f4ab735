//! Uniform B-spline machinery: de Boor evaluation, derivative control
//! points, least-squares fitting with exact endpoint interpolation, and
//! terrestrial/aerial control-point labeling.

use crate::envmap::mode_for_height;
use crate::{Error, Mode, Result};
use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BSplineTrajectory {
    pub degree: usize,
    pub knot_interval: f64,
    pub control_points: Vec<Vector3<f64>>,
    pub labels: Vec<Mode>,
}

impl BSplineTrajectory {
    pub fn new(degree: usize, knot_interval: f64, control_points: Vec<Vector3<f64>>) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidInput("spline degree must be >= 1".into()));
        }
        if !(knot_interval > 0.0) {
            return Err(Error::InvalidInput("knot interval must be > 0".into()));
        }
        if control_points.len() < degree + 1 {
            return Err(Error::InvalidInput(format!(
                "need at least {} control points for degree {}",
                degree + 1,
                degree
            )));
        }
        let labels = vec![Mode::Aerial; control_points.len()];
        Ok(Self { degree, knot_interval, control_points, labels })
    }

    /// Total time span of the curve: (n_cp - degree) * knot_interval.
    pub fn duration(&self) -> f64 {
        (self.control_points.len() - self.degree) as f64 * self.knot_interval
    }

    /// Knot value at index j, with knots placed so the valid span starts at 0.
    fn knot(&self, j: usize) -> f64 {
        (j as f64 - self.degree as f64) * self.knot_interval
    }

    fn find_span(&self, t: f64) -> usize {
        let n_cp = self.control_points.len();
        let k = self.degree + (t / self.knot_interval).floor() as usize;
        k.clamp(self.degree, n_cp - 1)
    }

    /// Nonzero basis functions at t: returns (first control index, weights).
    pub(crate) fn basis(&self, t: f64) -> (usize, Vec<f64>) {
        let p = self.degree;
        let k = self.find_span(t);
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knot(k + 1 - j);
            right[j] = self.knot(k + j) - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (k - p, n)
    }

    fn eval_position(&self, t: f64) -> Vector3<f64> {
        let (start, w) = self.basis(t);
        let mut out = Vector3::zeros();
        for (i, wi) in w.iter().enumerate() {
            out += self.control_points[start + i] * *wi;
        }
        out
    }

    /// Derivative spline: degree drops by one, control points are scaled
    /// first differences. Same knot interval and time span.
    pub fn derivative(&self) -> Result<BSplineTrajectory> {
        if self.degree < 2 && self.control_points.len() < 2 {
            return Err(Error::InvalidInput("cannot differentiate".into()));
        }
        let dt = self.knot_interval;
        let pts: Vec<Vector3<f64>> = self
            .control_points
            .windows(2)
            .map(|w| (w[1] - w[0]) / dt)
            .collect();
        Ok(BSplineTrajectory {
            degree: self.degree - 1,
            knot_interval: dt,
            labels: vec![Mode::Aerial; pts.len()],
            control_points: pts,
        })
    }

    /// De Boor evaluation of position (order 0), velocity (1), or
    /// acceleration (2). `t` must lie within the valid span.
    pub fn evaluate(&self, t: f64, order: usize) -> Result<Vector3<f64>> {
        let dur = self.duration();
        if !(t >= -1e-9 && t <= dur + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "t={t} outside valid span [0, {dur}]"
            )));
        }
        let t = t.clamp(0.0, dur);
        match order {
            0 => Ok(self.eval_position(t)),
            1 => self.derivative()?.evaluate(t, 0),
            2 => self.derivative()?.derivative()?.evaluate(t, 0),
            _ => Err(Error::InvalidInput("order must be 0, 1, or 2".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Least-squares B-spline fit to timestamped positions. The number of knot
/// segments is chosen so the curve spans the samples; the knot interval is
/// adjusted to the nearest value that divides the span evenly. Endpoint
/// positions are interpolated exactly via equality constraints.
pub fn fit_bspline(
    samples: &[(f64, Vector3<f64>)],
    degree: usize,
    knot_interval: f64,
) -> Result<BSplineTrajectory> {
    if samples.len() < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "need at least {} samples for degree {}, got {}",
            degree + 1,
            degree,
            samples.len()
        )));
    }
    if !(knot_interval > 0.0) {
        return Err(Error::InvalidInput("knot interval must be > 0".into()));
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidInput("sample times must be strictly increasing".into()));
        }
    }
    let t0 = samples[0].0;
    let span = samples[samples.len() - 1].0 - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidInput("degenerate time span".into()));
    }
    let n_seg = ((span / knot_interval).round() as usize).max(1);
    let dt = span / n_seg as f64;
    let n_cp = n_seg + degree;
    if samples.len() < n_cp {
        return Err(Error::InvalidInput(format!(
            "underdetermined fit: {} samples for {} control points",
            samples.len(),
            n_cp
        )));
    }

    let proto = BSplineTrajectory {
        degree,
        knot_interval: dt,
        control_points: vec![Vector3::zeros(); n_cp],
        labels: vec![Mode::Aerial; n_cp],
    };
    let m = samples.len();
    let mut a = DMatrix::<f64>::zeros(m, n_cp);
    for (row, (t, _)) in samples.iter().enumerate() {
        let (start, w) = proto.basis((t - t0).clamp(0.0, span));
        for (i, wi) in w.iter().enumerate() {
            a[(row, start + i)] = *wi;
        }
    }
    // Equality constraints: interpolate the first and last sample exactly.
    let mut c = DMatrix::<f64>::zeros(2, n_cp);
    for (ci, t) in [(0usize, 0.0), (1usize, span)] {
        let (start, w) = proto.basis(t);
        for (i, wi) in w.iter().enumerate() {
            c[(ci, start + i)] = *wi;
        }
    }

    // KKT system, shared across the three coordinates.
    let ata = a.transpose() * &a;
    let dim = n_cp + 2;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    kkt.view_mut((0, 0), (n_cp, n_cp)).copy_from(&ata);
    kkt.view_mut((0, n_cp), (n_cp, 2)).copy_from(&c.transpose());
    kkt.view_mut((n_cp, 0), (2, n_cp)).copy_from(&c);
    let lu = kkt.lu();

    let mut control_points = vec![Vector3::zeros(); n_cp];
    for axis in 0..3 {
        let b = DVector::from_iterator(m, samples.iter().map(|(_, p)| p[axis]));
        let atb = a.transpose() * &b;
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n_cp).copy_from(&atb);
        rhs[n_cp] = samples[0].1[axis];
        rhs[n_cp + 1] = samples[m - 1].1[axis];
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular KKT system in B-spline fit".into()))?;
        for i in 0..n_cp {
            control_points[i][axis] = sol[i];
        }
    }
    Ok(BSplineTrajectory {
        degree,
        knot_interval: dt,
        control_points,
        labels: vec![Mode::Aerial; n_cp],
    })
}

/// Label each control point terrestrial iff z <= ground_height + z_tol
/// (inclusive), and project terrestrial points onto the ground plane.
pub fn classify_points(traj: &mut BSplineTrajectory, ground_height: f64, z_tol: f64) -> Vec<Mode> {
    let mut labels = Vec::with_capacity(traj.control_points.len());
    for q in traj.control_points.iter_mut() {
        let mode = mode_for_height(q.z, ground_height, z_tol);
        if mode == Mode::Terrestrial {
            q.z = ground_height;
        }
        labels.push(mode);
    }
    traj.labels = labels.clone();
    labels
}

/// Contiguous runs of terrestrial control points, as inclusive index ranges.
/// Aerial points split the terrestrial set into independent segments.
pub fn terrestrial_segments(labels: &[Mode]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &l) in labels.iter().enumerate() {
        match (l, start) {
            (Mode::Terrestrial, None) => start = Some(i),
            (Mode::Aerial, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len() - 1));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_spline_evaluates_to_point() {
        let p = Vector3::new(1.0, -2.0, 3.0);
        let traj = BSplineTrajectory::new(3, 0.5, vec![p; 8]).unwrap();
        for i in 0..=10 {
            let t = traj.duration() * i as f64 / 10.0;
            assert!((traj.evaluate(t, 0).unwrap() - p).norm() < 1e-12);
            assert!(traj.evaluate(t, 1).unwrap().norm() < 1e-12);
            assert!(traj.evaluate(t, 2).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vector3<f64>> = (0..12)
            .map(|_| Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.0)))
            .collect();
        let traj = BSplineTrajectory::new(3, 0.4, pts).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let t = rng.gen_range(h..traj.duration() - h);
            let v = traj.evaluate(t, 1).unwrap();
            let fd = (traj.evaluate(t + h, 0).unwrap() - traj.evaluate(t - h, 0).unwrap()) / (2.0 * h);
            assert!((v - fd).norm() / fd.norm().max(1e-6) <= 1e-5);
        }
    }

    #[test]
    fn evaluated_point_in_convex_hull_of_active_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vector3<f64>> = (0..10)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let traj = BSplineTrajectory::new(3, 0.5, pts).unwrap();
        for i in 0..50 {
            let t = traj.duration() * i as f64 / 50.0;
            let p = traj.evaluate(t, 0).unwrap();
            let (start, w) = traj.basis(t.min(traj.duration() - 1e-12));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&wi| wi >= -1e-12));
            // Axis-aligned bounding box of the active points contains p.
            for axis in 0..3 {
                let lo = (0..4).map(|i| traj.control_points[start + i][axis]).fold(f64::INFINITY, f64::min);
                let hi = (0..4).map(|i| traj.control_points[start + i][axis]).fold(f64::NEG_INFINITY, f64::max);
                assert!(p[axis] >= lo - 1e-9 && p[axis] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn out_of_span_is_error() {
        let traj = BSplineTrajectory::new(3, 0.5, vec![Vector3::zeros(); 6]).unwrap();
        assert!(traj.evaluate(-0.1, 0).is_err());
        assert!(traj.evaluate(traj.duration() + 0.1, 0).is_err());
    }

    #[test]
    fn fit_line_gives_collinear_control_points() {
        let dir = Vector3::new(1.0, 2.0, 0.5);
        let origin = Vector3::new(0.2, -0.1, 0.0);
        let samples: Vec<(f64, Vector3<f64>)> =
            (0..40).map(|i| (0.1 * i as f64, origin + dir * (0.1 * i as f64))).collect();
        let traj = fit_bspline(&samples, 3, 0.5).unwrap();
        // Collinearity: cross product of consecutive differences vanishes.
        for w in traj.control_points.windows(3) {
            let a = w[1] - w[0];
            let b = w[2] - w[1];
            assert!(a.cross(&b).norm() < 1e-9);
        }
        // Endpoints interpolated exactly.
        assert!((traj.evaluate(0.0, 0).unwrap() - samples[0].1).norm() < 1e-9);
        assert!((traj.evaluate(traj.duration(), 0).unwrap() - samples.last().unwrap().1).norm() < 1e-9);
    }

    #[test]
    fn fit_roundtrip_recovers_control_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<Vector3<f64>> = (0..9)
            .map(|_| Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..1.0)))
            .collect();
        let orig = BSplineTrajectory::new(3, 0.5, pts).unwrap();
        let n = 200;
        let samples: Vec<(f64, Vector3<f64>)> = (0..=n)
            .map(|i| {
                let t = orig.duration() * i as f64 / n as f64;
                (t, orig.evaluate(t, 0).unwrap())
            })
            .collect();
        let fit = fit_bspline(&samples, 3, 0.5).unwrap();
        assert_eq!(fit.control_points.len(), orig.control_points.len());
        for (a, b) in fit.control_points.iter().zip(&orig.control_points) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn underdetermined_fit_errors() {
        let samples = vec![
            (0.0, Vector3::zeros()),
            (0.5, Vector3::new(1.0, 0.0, 0.0)),
            (1.0, Vector3::new(2.0, 0.0, 0.0)),
        ];
        assert!(fit_bspline(&samples, 3, 0.5).is_err());
    }

    #[test]
    fn classify_and_segments() {
        let zs = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let pts: Vec<Vector3<f64>> = zs.iter().map(|&z| Vector3::new(0.0, 0.0, z)).collect();
        let mut traj = BSplineTrajectory::new(3, 0.5, pts).unwrap();
        let labels = classify_points(&mut traj, 0.0, 0.1);
        assert_eq!(labels[0], Mode::Terrestrial);
        assert_eq!(labels[2], Mode::Aerial);
        let segs = terrestrial_segments(&labels);
        assert_eq!(segs, vec![(0, 1), (4, 5)]);

        // Inclusive boundary: z exactly at ground + z_tol is terrestrial.
        let mut traj2 =
            BSplineTrajectory::new(3, 0.5, vec![Vector3::new(0.0, 0.0, 0.1); 6]).unwrap();
        let l2 = classify_points(&mut traj2, 0.0, 0.1);
        assert!(l2.iter().all(|&m| m == Mode::Terrestrial));
        assert!(traj2.control_points.iter().all(|q| q.z == 0.0));
    }

    #[test]
    fn all_flat_is_single_segment() {
        let mut traj = BSplineTrajectory::new(3, 0.5, vec![Vector3::zeros(); 7]).unwrap();
        let labels = classify_points(&mut traj, 0.0, 0.05);
        assert_eq!(terrestrial_segments(&labels), vec![(0, 6)]);
    }
}
