//! Coordinate form of `nabla_qdot qdot = grad f` and its time integration.
//!
//! Sign convention: the potential enters the equations of motion with a
//! plus sign, `qddot = -Gamma(qdot, qdot) + grad f`, and oscillations need
//! `f` negative definite around the equilibrium. The conserved energy is
//! therefore `E = 1/2 <qdot, qdot>_g - f(q)`.

use crate::error::{check_dim, Error, Result};
use crate::io::fmt17;
use crate::manifold::{DoublePendulumMetric, MetricField, MetricScratch};

/// Central finite-difference step for potential differentials.
pub const POTENTIAL_FD_STEP: f64 = 1e-6;

/// Default integration step (s).
pub const DEFAULT_DT: f64 = 1e-3;
/// Default simulation horizon (s).
pub const DEFAULT_HORIZON: f64 = 200.0;
/// Default bound on relative energy drift.
pub const DEFAULT_ENERGY_TOL: f64 = 1e-6;

/// Scalar potential `f` with its differential `df`.
pub trait PotentialField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, q: &[f64]) -> Result<f64>;

    /// Covariant components `df_i = df/dx^i`; central differences by default.
    fn differential_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        finite_difference_differential(self, q, out)
    }
}

pub fn finite_difference_differential<P: PotentialField + ?Sized>(p: &P, q: &[f64], out: &mut [f64]) -> Result<()> {
    let mut qp = q.to_vec();
    for k in 0..q.len() {
        qp[k] = q[k] + POTENTIAL_FD_STEP;
        let fp = p.value(&qp)?;
        qp[k] = q[k] - POTENTIAL_FD_STEP;
        let fm = p.value(&qp)?;
        qp[k] = q[k];
        out[k] = (fp - fm) / (2.0 * POTENTIAL_FD_STEP);
    }
    Ok(())
}

/// Largest deviation between a potential's differential and central
/// differences of its value over `points`.
pub fn differential_consistency<P: PotentialField + ?Sized>(p: &P, points: &[Vec<f64>]) -> Result<f64> {
    let n = p.dim();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut worst = 0.0f64;
    for q in points {
        p.differential_into(q, &mut a)?;
        finite_difference_differential(p, q, &mut b)?;
        for i in 0..n {
            worst = worst.max((a[i] - b[i]).abs());
        }
    }
    Ok(worst)
}

/// Linear joint springs of equal stiffness, `f = -1/2 k0 |q|^2`.
#[derive(Debug, Clone, Copy)]
pub struct CircularPotential {
    pub k0: f64,
    pub n: usize,
}

impl CircularPotential {
    /// Two-dimensional instance.
    pub fn new(k0: f64) -> Self {
        Self { k0, n: 2 }
    }
}

impl PotentialField for CircularPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.n, q.len())?;
        Ok(-0.5 * self.k0 * q.iter().map(|x| x * x).sum::<f64>())
    }
    fn differential_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.n, q.len())?;
        for (o, x) in out.iter_mut().zip(q) {
            *o = -self.k0 * x;
        }
        Ok(())
    }
}

/// Separable quadratic well `f = -1/2 sum k_i q_i^2`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub stiffness: Vec<f64>,
}

impl QuadraticPotential {
    pub fn new(stiffness: Vec<f64>) -> Self {
        Self { stiffness }
    }
}

impl PotentialField for QuadraticPotential {
    fn dim(&self) -> usize {
        self.stiffness.len()
    }
    fn value(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.dim(), q.len())?;
        Ok(-0.5 * self.stiffness.iter().zip(q).map(|(k, x)| k * x * x).sum::<f64>())
    }
    fn differential_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dim(), q.len())?;
        for ((o, k), x) in out.iter_mut().zip(&self.stiffness).zip(q) {
            *o = -k * x;
        }
        Ok(())
    }
}

/// Potential given by a closure; the differential is finite-differenced.
pub struct FnPotential<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnPotential<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> PotentialField for FnPotential<F> {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, q: &[f64]) -> Result<f64> {
        check_dim(self.n, q.len())?;
        Ok((self.f)(q))
    }
}

pub fn double_pendulum_metric() -> DoublePendulumMetric {
    DoublePendulumMetric
}

pub fn circular_potential(k0: f64) -> Result<CircularPotential> {
    if !(k0 > 0.0) {
        return Err(Error::arg(format!("stiffness must be positive, got {k0}")));
    }
    Ok(CircularPotential::new(k0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        Self { q, qdot, t: 0.0 }
    }

    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self::new(q, vec![0.0; n])
    }
}

/// Evaluates the right-hand side with reusable buffers.
pub(crate) struct Rhs<'a, M: ?Sized, P: ?Sized> {
    metric: &'a M,
    potential: &'a P,
    scratch: MetricScratch,
    df: Vec<f64>,
    grad: Vec<f64>,
}

impl<'a, M: MetricField + ?Sized, P: PotentialField + ?Sized> Rhs<'a, M, P> {
    pub(crate) fn new(metric: &'a M, potential: &'a P) -> Result<Self> {
        let n = metric.dim();
        check_dim(n, potential.dim())?;
        Ok(Self {
            metric,
            potential,
            scratch: MetricScratch::new(n),
            df: vec![0.0; n],
            grad: vec![0.0; n],
        })
    }

    pub(crate) fn accel(&mut self, q: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        self.scratch.load(self.metric, q, true)?;
        self.potential.differential_into(q, &mut self.df)?;
        if self.df.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("potential gradient at {q:?}")));
        }
        self.scratch.raise(&self.df, &mut self.grad);
        self.scratch.christoffel_contract(v, out);
        for (o, g) in out.iter_mut().zip(&self.grad) {
            *o = g - *o;
        }
        Ok(())
    }

    pub(crate) fn energy(&mut self, q: &[f64], v: &[f64]) -> Result<f64> {
        self.scratch.load(self.metric, q, false)?;
        Ok(0.5 * self.scratch.inner(v, v) - self.potential.value(q)?)
    }
}

/// Coordinate acceleration `qddot^i = -Gamma^i_jk qdot^j qdot^k + (grad f)^i`.
pub fn equations_of_motion<M, P>(metric: &M, potential: &P, s: &State) -> Result<Vec<f64>>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let n = metric.dim();
    check_dim(n, s.q.len())?;
    check_dim(n, s.qdot.len())?;
    let mut rhs = Rhs::new(metric, potential)?;
    let mut out = vec![0.0; n];
    rhs.accel(&s.q, &s.qdot, &mut out)?;
    Ok(out)
}

/// `E = 1/2 <qdot, qdot>_g - f(q)`.
pub fn total_energy<M, P>(metric: &M, potential: &P, s: &State) -> Result<f64>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    check_dim(metric.dim(), s.q.len())?;
    check_dim(metric.dim(), s.qdot.len())?;
    Rhs::new(metric, potential)?.energy(&s.q, &s.qdot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub dt: f64,
    /// Bound on `|E(t) - E(0)| / max(|E(0)|, 1)`; `None` disables the check.
    pub energy_tol: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            energy_tol: Some(DEFAULT_ENERGY_TOL),
        }
    }
}

impl IntegratorOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }
}

/// Time-ordered samples of a simulation, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n: usize,
    pub dt: f64,
    times: Vec<f64>,
    q: Vec<f64>,
    qdot: Vec<f64>,
    energies: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(n: usize, dt: f64, cap: usize) -> Self {
        Self {
            n,
            dt,
            times: Vec::with_capacity(cap),
            q: Vec::with_capacity(cap * n),
            qdot: Vec::with_capacity(cap * n),
            energies: Vec::with_capacity(cap),
        }
    }

    /// Builds a trajectory from raw samples; used for synthetic signals.
    pub fn from_samples(times: Vec<f64>, q: Vec<Vec<f64>>, qdot: Vec<Vec<f64>>, energies: Vec<f64>) -> Result<Self> {
        let len = times.len();
        if q.len() != len || qdot.len() != len || energies.len() != len || len == 0 {
            return Err(Error::arg("trajectory columns must have equal nonzero length"));
        }
        let n = q[0].len();
        let dt = if len > 1 { times[1] - times[0] } else { 0.0 };
        let mut tr = Self::with_capacity(n, dt, len);
        for i in 0..len {
            check_dim(n, q[i].len())?;
            check_dim(n, qdot[i].len())?;
            if i > 0 && !(times[i] > times[i - 1]) {
                return Err(Error::arg("trajectory times must be strictly increasing"));
            }
            tr.push(times[i], &q[i], &qdot[i], energies[i]);
        }
        Ok(tr)
    }

    fn push(&mut self, t: f64, q: &[f64], qdot: &[f64], e: f64) {
        self.times.push(t);
        self.q.extend_from_slice(q);
        self.qdot.extend_from_slice(qdot);
        self.energies.push(e);
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }
    pub fn t(&self, i: usize) -> f64 {
        self.times[i]
    }
    pub fn q(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }
    pub fn qdot(&self, i: usize) -> &[f64] {
        &self.qdot[i * self.n..(i + 1) * self.n]
    }
    pub fn state(&self, i: usize) -> State {
        State {
            q: self.q(i).to_vec(),
            qdot: self.qdot(i).to_vec(),
            t: self.t(i),
        }
    }
    pub fn last(&self) -> State {
        self.state(self.len() - 1)
    }

    /// Coordinate `k` of either positions (`velocity = false`) or velocities.
    pub fn channel(&self, k: usize, velocity: bool) -> Vec<f64> {
        let src = if velocity { &self.qdot } else { &self.q };
        src.iter().skip(k).step_by(self.n).copied().collect()
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        let scale = e0.abs().max(1.0);
        self.energies.iter().fold(0.0, |m, e| m.max((e - e0).abs() / scale))
    }

    /// CSV with header `t,q1..qn,qd1..qdn,E`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 1..=self.n {
            s.push_str(&format!(",q{i}"));
        }
        for i in 1..=self.n {
            s.push_str(&format!(",qd{i}"));
        }
        s.push_str(",E\n");
        for i in 0..self.len() {
            s.push_str(&fmt17(self.t(i)));
            for v in self.q(i).iter().chain(self.qdot(i)) {
                s.push(',');
                s.push_str(&fmt17(*v));
            }
            s.push(',');
            s.push_str(&fmt17(self.energies[i]));
            s.push('\n');
        }
        s
    }
}

/// Fixed-step RK4 with the default energy-drift bound.
pub fn integrate<M, P>(metric: &M, potential: &P, s0: &State, horizon: f64, dt: f64) -> Result<Trajectory>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    integrate_with(metric, potential, s0, horizon, &IntegratorOptions::with_dt(dt))
}

/// Fixed-step classical Runge-Kutta on the first-order form `(q, qdot)`.
///
/// Fails on non-finite states and when the relative energy drift exceeds
/// `opts.energy_tol`. The final step is shortened so the last sample lands
/// on `s0.t + horizon`.
pub fn integrate_with<M, P>(metric: &M, potential: &P, s0: &State, horizon: f64, opts: &IntegratorOptions) -> Result<Trajectory>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let n = metric.dim();
    check_dim(n, s0.q.len())?;
    check_dim(n, s0.qdot.len())?;
    let dt = opts.dt;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::arg(format!("horizon must be nonnegative, got {horizon}")));
    }
    if s0.q.iter().chain(&s0.qdot).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    let steps = if horizon == 0.0 { 0 } else { ((horizon / dt) - 1e-9).ceil().max(1.0) as usize };
    let mut rhs = Rhs::new(metric, potential)?;
    let mut traj = Trajectory::with_capacity(n, dt, steps + 1);
    let e0 = rhs.energy(&s0.q, &s0.qdot)?;
    if !e0.is_finite() {
        return Err(Error::NonFinite("initial energy".into()));
    }
    let scale = e0.abs().max(1.0);
    traj.push(s0.t, &s0.q, &s0.qdot, e0);

    let mut q = s0.q.clone();
    let mut v = s0.qdot.clone();
    let mut a = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut qt = vec![0.0; n];
    let mut vt = vec![0.0; n];
    let mut kq = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];

    for step in 1..=steps {
        let h = if step == steps { horizon - (steps - 1) as f64 * dt } else { dt };
        // k1
        kq[0].copy_from_slice(&v);
        rhs.accel(&q, &v, &mut a[0])?;
        // k2
        for i in 0..n {
            qt[i] = q[i] + 0.5 * h * kq[0][i];
            vt[i] = v[i] + 0.5 * h * a[0][i];
        }
        kq[1].copy_from_slice(&vt);
        rhs.accel(&qt, &vt, &mut a[1])?;
        // k3
        for i in 0..n {
            qt[i] = q[i] + 0.5 * h * kq[1][i];
            vt[i] = v[i] + 0.5 * h * a[1][i];
        }
        kq[2].copy_from_slice(&vt);
        rhs.accel(&qt, &vt, &mut a[2])?;
        // k4
        for i in 0..n {
            qt[i] = q[i] + h * kq[2][i];
            vt[i] = v[i] + h * a[2][i];
        }
        kq[3].copy_from_slice(&vt);
        rhs.accel(&qt, &vt, &mut a[3])?;
        for i in 0..n {
            q[i] += h / 6.0 * (kq[0][i] + 2.0 * kq[1][i] + 2.0 * kq[2][i] + kq[3][i]);
            v[i] += h / 6.0 * (a[0][i] + 2.0 * a[1][i] + 2.0 * a[2][i] + a[3][i]);
        }
        let t = s0.t + if step == steps { horizon } else { step as f64 * dt };
        if q.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("state at t = {t}")));
        }
        let e = rhs.energy(&q, &v)?;
        if let Some(tol) = opts.energy_tol {
            let drift = (e - e0).abs() / scale;
            if !(drift <= tol) {
                return Err(Error::EnergyDrift { t, drift, bound: tol });
            }
        }
        traj.push(t, &q, &v, e);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::Euclidean;

    #[test]
    fn equilibrium_and_rest_accelerations() {
        let dp = DoublePendulumMetric;
        let flat = QuadraticPotential::new(vec![0.0, 0.0]);
        let a = equations_of_motion(&dp, &flat, &State::at_rest(vec![0.4, 0.9])).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
        let circ = CircularPotential::new(100.0);
        let a = equations_of_motion(&dp, &circ, &State::at_rest(vec![0.1, 0.0])).unwrap();
        assert!((a[0] + 10.0).abs() < 1e-12 && (a[1] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_reduces_to_differential() {
        let e = Euclidean::new(2);
        let p = QuadraticPotential::new(vec![3.0, 7.0]);
        let s = State::new(vec![0.5, -0.2], vec![4.0, 1.0]);
        let a = equations_of_motion(&e, &p, &s).unwrap();
        let mut df = vec![0.0; 2];
        p.differential_into(&s.q, &mut df).unwrap();
        assert_eq!(a, df);
    }

    #[test]
    fn energies() {
        let flat = QuadraticPotential::new(vec![0.0, 0.0]);
        assert_eq!(total_energy(&Euclidean::new(2), &flat, &State::new(vec![0.0, 0.0], vec![3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(total_energy(&DoublePendulumMetric, &flat, &State::new(vec![0.0, 0.0], vec![1.0, 0.0])).unwrap(), 2.5);
        let circ = CircularPotential::new(100.0);
        assert_eq!(total_energy(&DoublePendulumMetric, &circ, &State::at_rest(vec![0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn circular_potential_values() {
        let p = circular_potential(100.0).unwrap();
        assert_eq!(p.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((p.value(&[0.1, 0.0]).unwrap() + 0.5).abs() < 1e-15);
        let a = p.value(&[0.3f64.cos() * 0.2, 0.3f64.sin() * 0.2]).unwrap();
        let b = p.value(&[0.0, 0.2]).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!(circular_potential(0.0).is_err());
    }

    #[test]
    fn analytic_differentials_agree_with_finite_differences() {
        let pts: Vec<Vec<f64>> = (0..20).map(|i| vec![0.1 * i as f64 - 1.0, 0.5 - 0.07 * i as f64]).collect();
        assert!(differential_consistency(&CircularPotential::new(100.0), &pts).unwrap() < 1e-5);
        assert!(differential_consistency(&QuadraticPotential::new(vec![2.0, 9.0]), &pts).unwrap() < 1e-5);
    }

    #[test]
    fn harmonic_oscillator_tracks_cosine() {
        let e = Euclidean::new(2);
        let p = QuadraticPotential::new(vec![1.0, 1.0]);
        let tr = integrate(&e, &p, &State::at_rest(vec![1.0, 0.0]), 10.0, 1e-3).unwrap();
        let worst = (0..tr.len()).fold(0.0f64, |m, i| m.max((tr.q(i)[0] - tr.t(i).cos()).abs()));
        assert!(worst < 1e-6, "{worst}");
        assert!((tr.t(tr.len() - 1) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_returns_initial_sample() {
        let tr = integrate(
            &DoublePendulumMetric,
            &CircularPotential::new(100.0),
            &State::at_rest(vec![0.1, 0.0]),
            0.0,
            1e-3,
        )
        .unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.state(0), State::at_rest(vec![0.1, 0.0]));
    }

    #[test]
    fn drift_bound_is_enforced() {
        let opts = IntegratorOptions { dt: 0.2, energy_tol: Some(1e-9) };
        let r = integrate_with(
            &DoublePendulumMetric,
            &CircularPotential::new(100.0),
            &State::at_rest(vec![0.5, 0.3]),
            5.0,
            &opts,
        );
        assert!(matches!(r, Err(Error::EnergyDrift { .. })));
    }

    #[test]
    fn non_finite_state_is_an_error() {
        let r = integrate(
            &Euclidean::new(1),
            &QuadraticPotential::new(vec![1.0]),
            &State::at_rest(vec![f64::NAN]),
            1.0,
            1e-3,
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn csv_header_and_width() {
        let tr = integrate(
            &Euclidean::new(2),
            &QuadraticPotential::new(vec![1.0, 1.0]),
            &State::at_rest(vec![1.0, 0.0]),
            0.002,
            1e-3,
        )
        .unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,q1,q2,qd1,qd2,E");
        assert_eq!(lines.count(), 3);
    }
}
