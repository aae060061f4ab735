//! Uniform B-spline trajectory representation and gradient-based refinement.
//!
//! The searched path is reparameterized as a degree-`p_b` uniform B-spline,
//! control points above the ground are labeled aerial and the rest
//! terrestrial, and the control polygon is refined against a weighted sum of
//! smoothness, ESDF collision, dynamic feasibility, and terrestrial
//! curvature costs.

mod costs;
mod solver;
mod spline;

pub use costs::{
    cost_collision, cost_curvature, cost_feasibility, cost_smoothness, curvature_values,
    evaluate_objective, CostReport, CostWeights, Limits,
};
pub use solver::{optimize, OptimizeOutcome};
pub use spline::{classify_points, fit_bspline, terrestrial_segments, BSplineTrajectory};
