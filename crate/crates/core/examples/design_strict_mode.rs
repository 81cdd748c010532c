//! Potential design around a geodesic: certification and a run
//! from the 5.63 J level on the geodesic.

use strictmodes::modes::{turning_points, CurveFit};
use strictmodes::{design, integrate, DesignParams, DoublePendulumMetric, PotentialField, State};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let params = DesignParams::default();
    let d = design(&g, params.build(&g)?)?;
    let cert = d.certify(&g, &d.default_box(), 1e-3)?;
    println!("integrability residual {:.2e}", cert.integrability_residual);
    println!("two-path difference    {:.2e}", cert.path_difference);
    println!(
        "beta bound: overall {:?}, holds for |xi2| <= {}, {} undefined cells",
        cert.beta_bound, cert.beta_validated_halfwidth, cert.undefined_bound_cells
    );
    println!("negative definite: {} ({} points)", cert.definiteness.pass, cert.definiteness.evaluated);
    println!("tangency residual on the geodesic {:.2e}", cert.max_tangency_residual);

    let e = 5.63;
    let s0 = (e / 2.5f64).sqrt();
    let geo = d.spec.chart.geodesic();
    let tr = integrate(&g, &d.potential, &State::at_rest(geo.eval(s0).0), 3.0 * 2.81, 1e-3)?;
    let fit = CurveFit::new(&g, &geo.points(), 4000)?;
    let mut dev = 0.0f64;
    for i in 0..tr.len() {
        dev = dev.max(fit.distance(&g, tr.q(i))?);
    }
    println!("E = {e}: max distance from the geodesic over 3 periods {dev:.2e}");
    for tp in turning_points(&g, &tr)? {
        println!("  turning point t = {:.5}, f + E = {:.1e}", tp.t, d.potential.value(&tp.q)? + e);
    }
    Ok(())
}
