//! Conservative dynamics on Riemannian manifolds.
//!
//! The toolkit integrates `nabla_qdot qdot = grad f` for a configuration
//! metric `g` (the inertia tensor) and a potential `f`, searches nonlinear
//! normal modes on equipotential lines, checks whether a curve is a strict
//! mode (a geodesic along which `grad f` is tangent), and constructs
//! potentials that turn a chosen geodesic into a strict mode.
//!
//! Sign convention: the right-hand side is `+grad f`, so oscillating systems
//! have negative definite `f` and the energy is `1/2 |qdot|_g^2 - f`.
//!
//! Runnable examples live in `examples/`, one per capability:
//! `metric_geometry`, `simulate_double_pendulum`, `shoot_geodesic`,
//! `linear_modes`, `find_modes`, `verify_strict_mode`, `scaling_invariance`,
//! `speed_law`, `design_strict_mode` and `run_scenario`.

// `!(x > 0.0)` is deliberate: it also rejects NaN. Index loops mirror tensor notation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod design;
pub mod dynamics;
pub mod error;
pub mod geodesics;
pub mod io;
pub mod manifold;
pub mod modes;
pub mod numerics;
pub mod scenario;

pub use design::{
    beta_bound, definiteness_check, design, designed_potential_in_q, extend_force_field, integrability_residual,
    integrate_potential, on_geodesic_force, path_difference, BetaBound, Certification, DefinitenessReport, Design,
    DesignParams, DesignSpec, DesignedPotential, GeodesicForceField, Polynomial, SampleBox,
};
pub use dynamics::{
    circular_potential, double_pendulum_metric, equations_of_motion, integrate, integrate_with, total_energy,
    CircularPotential, FnPotential, IntegratorOptions, PotentialField, QuadraticPotential, State, Trajectory,
};
pub use error::{Error, Result};
pub use geodesics::{chart_inverse, geodesic_chart, shoot_geodesic, speed_law_solve, GeodesicChart, GeodesicCurve, SpeedLaw};
pub use manifold::{
    christoffel, contravariant_gradient, covariant_acceleration, inner_product, metric_eval, tangential_normal_split,
    ChristoffelSymbols, ConstantMetric, DoublePendulumMetric, Euclidean, FiniteDifferenceMetric, GridMetric, MetricField,
};
pub use modes::{
    detect_period, equipotential_point, find_mode, linearized_modes, periodicity_measure, scaling_invariance_test,
    verify_strict_mode, LinearMode, ModeCandidate, ModeSearchOptions, PeriodEstimate, ScaleResult, ScalingOptions,
    StrictModeReport,
};
