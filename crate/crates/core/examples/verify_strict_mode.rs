//! Strict-mode check of three curves: an axis of a separable quadratic
//! potential, the designed geodesic, and a coordinate line that is not a
//! geodesic.

use strictmodes::{
    design, verify_strict_mode, CircularPotential, DesignParams, DoublePendulumMetric, Euclidean, QuadraticPotential,
};

fn main() -> strictmodes::Result<()> {
    let axis: Vec<Vec<f64>> = (0..=100).map(|i| vec![-1.0 + 0.02 * i as f64, 0.0]).collect();
    let r = verify_strict_mode(&Euclidean::new(2), &QuadraticPotential::new(vec![2.0, 7.0]), &axis, 1e-10)?;
    println!("axis line, flat metric: strict = {} ({:.1e}, {:.1e})", r.strict, r.max_geodesic_residual, r.max_tangency_residual);

    let g = DoublePendulumMetric;
    let d = design(&g, DesignParams::default().build(&g)?)?;
    let geo = d.spec.chart.geodesic();
    let curve: Vec<Vec<f64>> = (0..geo.len()).filter(|&i| geo.s(i).abs() <= 1.5).map(|i| geo.q(i).to_vec()).collect();
    let r = verify_strict_mode(&g, &d.potential, &curve, 1e-6)?;
    println!("designed geodesic: strict = {} ({:.1e}, {:.1e})", r.strict, r.max_geodesic_residual, r.max_tangency_residual);

    let line: Vec<Vec<f64>> = (0..=100).map(|i| vec![-0.5 + 0.01 * i as f64, 0.5 - 0.01 * i as f64]).collect();
    let r = verify_strict_mode(&g, &CircularPotential::new(100.0), &line, 1e-4)?;
    println!("line q2 = -q1, double pendulum: strict = {} ({:.3e}, {:.3e})", r.strict, r.max_geodesic_residual, r.max_tangency_residual);
    Ok(())
}
