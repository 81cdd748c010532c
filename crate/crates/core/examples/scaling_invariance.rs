//! Velocity scaling along a curve: the normal covariant acceleration grows
//! with c^2 off geodesics, while a strict mode keeps every speed on the curve.

use strictmodes::{
    design, scaling_invariance_test, CircularPotential, DesignParams, DoublePendulumMetric, ScalingOptions,
};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let scales = [0.5, 1.0, 2.0];
    let opts = ScalingOptions::default();

    let line: Vec<Vec<f64>> = (0..=200).map(|i| vec![-0.5 + 0.005 * i as f64, 0.5 - 0.005 * i as f64]).collect();
    println!("coordinate line q2 = -q1, circular potential");
    for r in scaling_invariance_test(&g, &CircularPotential::new(100.0), &line, &scales, &opts)? {
        println!("  c = {}: deviation {:.3e}, ratios {:?}", r.scale, r.max_deviation, r.normal_ratio);
    }

    let d = design(&g, DesignParams::default().build(&g)?)?;
    let geo = d.spec.chart.geodesic();
    let curve: Vec<Vec<f64>> = (0..geo.len()).filter(|&i| geo.s(i).abs() <= 1.5).map(|i| geo.q(i).to_vec()).collect();
    println!("designed geodesic, designed potential");
    let opts = ScalingOptions { horizon: 2.8, ..opts };
    for r in scaling_invariance_test(&g, &d.potential, &curve, &scales, &opts)? {
        println!("  c = {}: deviation {:.3e}", r.scale, r.max_deviation);
    }
    Ok(())
}
