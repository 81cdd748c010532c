//! Mode search on equipotential lines, continued from the linear modes.
//! Takes about a minute.

use strictmodes::{
    find_mode, linearized_modes, verify_strict_mode, CircularPotential, DoublePendulumMetric, ModeSearchOptions,
};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let f = CircularPotential::new(100.0);
    let center = [0.0, 0.0];
    let opts = ModeSearchOptions::default();
    for (k, lin) in linearized_modes(&g, &f, &center)?.iter().enumerate() {
        let mut theta = lin.angle();
        println!("family {} (linear angle {:.3} deg)", k + 1, theta.to_degrees());
        for e in [0.01, 5.0, 10.0] {
            let c = find_mode(&g, &f, &center, e, theta, &opts)?;
            theta = c.theta;
            let rep = verify_strict_mode(&g, &f, &c.curve, 1e-4)?;
            println!(
                "  E {e:5}: start angle {:8.4} deg, periodicity {:.6}, geodesic residual {:.3e}, tangency residual {:.3e}",
                c.theta.to_degrees(),
                c.periodicity,
                rep.max_geodesic_residual,
                rep.max_tangency_residual
            );
        }
    }
    Ok(())
}
