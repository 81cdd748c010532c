//! 200 s of the double pendulum in a circular potential from rest on the
//! 2 J equipotential line.

use strictmodes::modes::detect_period;
use strictmodes::{equipotential_point, integrate, CircularPotential, DoublePendulumMetric, State};

fn main() -> strictmodes::Result<()> {
    let f = CircularPotential::new(100.0);
    let q0 = equipotential_point(&f, &[0.0, 0.0], 2.0, 0.4)?;
    let tr = integrate(&DoublePendulumMetric, &f, &State::at_rest(q0.clone()), 200.0, 1e-3)?;
    println!("start {q0:?}, {} samples", tr.len());
    println!("max relative energy drift {:.3e}", tr.max_energy_drift());
    let p = detect_period(&tr, 0)?;
    println!("q1 velocity period {:.5} s (std {:.2e}, {} crossings)", p.period, p.std_dev, p.crossings.len());
    let last = tr.last();
    println!("final state q = {:?}, qdot = {:?}", last.q, last.qdot);
    Ok(())
}
