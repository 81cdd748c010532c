//! Metric, Christoffel symbols and covariant quantities of the double
//! pendulum inertia tensor.

use strictmodes::{
    christoffel, contravariant_gradient, covariant_acceleration, metric_eval, tangential_normal_split,
    CircularPotential, DoublePendulumMetric, FiniteDifferenceMetric,
};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let q = [0.3, -0.7];
    println!("g(q) = {}", metric_eval(&g, &q)?);

    let analytic = christoffel(&g, &q)?;
    let numeric = christoffel(&FiniteDifferenceMetric(&g), &q)?;
    println!("Gamma^1_22 = {:.9}", analytic.get(0, 1, 1));
    println!("analytic vs finite differences: {:.2e}", analytic.max_abs_diff(&numeric));

    let v = [1.0, -1.0];
    let a = [0.0, 0.0];
    println!("covariant acceleration of a straight coordinate line: {:?}", covariant_acceleration(&g, &q, &v, &a)?);

    let grad = contravariant_gradient(&g, &CircularPotential::new(100.0), &q)?;
    let (tan, perp) = tangential_normal_split(&g, &q, &grad, &v)?;
    println!("grad f = {grad:?}\n  tangential {tan:?}\n  normal {perp:?}");
    Ok(())
}
