//! Small-oscillation modes at the equilibrium, compared with the closed form
//! of the 2x2 pencil.

use strictmodes::{inner_product, linearized_modes, CircularPotential, DoublePendulumMetric};

fn main() -> strictmodes::Result<()> {
    let g = DoublePendulumMetric;
    let modes = linearized_modes(&g, &CircularPotential::new(100.0), &[0.0, 0.0])?;
    // g(0) = [[5, 2], [2, 1]] has eigenvalues 3 +- 2 sqrt 2
    let closed = [(100.0 / (3.0 + 8f64.sqrt())).sqrt(), (100.0 / (3.0 - 8f64.sqrt())).sqrt()];
    for (m, w) in modes.iter().zip(closed) {
        println!(
            "omega {:.10} (closed form {w:.10}), angle {:8.3} deg, direction {:?}",
            m.omega,
            m.angle().to_degrees(),
            m.direction
        );
    }
    let ortho = inner_product(&g, &[0.0, 0.0], &modes[0].direction, &modes[1].direction)?;
    println!("g-inner product of the eigenvectors: {ortho:.2e}");
    Ok(())
}
