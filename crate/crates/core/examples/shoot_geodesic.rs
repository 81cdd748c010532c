//! Geodesic of the double pendulum metric through the origin at -45 degrees
//! and its tubular chart.

use strictmodes::{chart_inverse, geodesic_chart, DoublePendulumMetric, GeodesicCurve};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let d = -std::f64::consts::FRAC_PI_4;
    let geo = GeodesicCurve::two_sided(&g, &[0.0, 0.0], &[d.cos(), d.sin()], 2.0, 1e-3)?;
    let res = geo.geodesic_residuals(&g)?;
    println!("{} points, ends at {:?} and {:?}", geo.len(), geo.q(0), geo.q(geo.len() - 1));
    println!("unit-speed error {:.2e}", geo.unit_speed_error(&g)?);
    println!("max autoparallel residual {:.2e}", res.iter().copied().fold(0.0, f64::max));

    let chart = geodesic_chart(geo, 0.5)?;
    println!("chart half-width after the Jacobian guard: {:.4}", chart.halfwidth());
    let q = chart.forward([0.8, 0.2]);
    let back = chart_inverse(&chart, &q)?;
    println!("xi = (0.8, 0.2) -> q = {q:?} -> xi = {back:?}");
    Ok(())
}
