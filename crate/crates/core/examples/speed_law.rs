//! Speed along the designed geodesic against the closed-form speed law
//! beta(s) = sqrt(2E - 5 s^2) at E = 5.63 J.

use strictmodes::{
    chart_inverse, design, inner_product, integrate, speed_law_solve, DesignParams, DoublePendulumMetric, State,
};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let d = design(&g, DesignParams::default().build(&g)?)?;
    let e = 5.63;
    let law = speed_law_solve(|s| -5.0 * s, e, 2.0)?;
    let s_turn = law.turning_points.1.expect("turning point");
    println!("turning point s = {s_turn:.6}");

    let q0 = d.spec.chart.geodesic().eval(s_turn).0;
    let tr = integrate(&g, &d.potential, &State::at_rest(q0), 1.5, 1e-3)?;
    for i in (0..tr.len()).step_by(150) {
        let s = chart_inverse(&d.spec.chart, tr.q(i))?[0];
        let v = inner_product(&g, tr.q(i), tr.qdot(i), tr.qdot(i))?.sqrt();
        let b = law.beta(s).unwrap_or(0.0);
        println!("t {:5.3}  s {s:+.5}  speed {v:.7}  law {b:.7}  diff {:.1e}", tr.t(i), (v - b).abs());
    }
    Ok(())
}
