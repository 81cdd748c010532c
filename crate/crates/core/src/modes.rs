//! Normal modes: linearization at an equilibrium, numerical search for
//! nonlinear modes on equipotential lines, and the strict-mode test
//! (the curve is a geodesic and the potential gradient is tangent to it).

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::dynamics::{integrate_with, IntegratorOptions, PotentialField, State, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::io::csv_row;
use crate::manifold::{split_with, MetricField, MetricScratch};
use crate::numerics::{bracketed_root, cholesky_in_place, golden_section_max, CubicSpline};

/// Finite-difference step for the potential Hessian.
pub const HESSIAN_FD_STEP: f64 = 1e-6;
/// Default strictness tolerance for simulated modes.
pub const DETECTED_MODE_TOL: f64 = 1e-4;
/// Default strictness tolerance for analytic or designed curves.
pub const DESIGNED_MODE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMode {
    /// Eigenvector normalized to `v^T g v = 1`.
    pub direction: Vec<f64>,
    /// Angular frequency (rad/s).
    pub omega: f64,
}

impl LinearMode {
    /// Direction rescaled to unit coordinate length.
    pub fn unit_direction(&self) -> Vec<f64> {
        let norm = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.direction.iter().map(|x| x / norm).collect()
    }

    /// Polar angle of the direction in the `(q1, q2)` plane.
    pub fn angle(&self) -> f64 {
        self.direction[1].atan2(self.direction[0])
    }
}

/// Central-difference Hessian of `f`, symmetrized.
pub fn potential_hessian<P: PotentialField + ?Sized>(potential: &P, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = potential.dim();
    let mut h = DMatrix::zeros(n, n);
    let mut qp = q.to_vec();
    let mut dp = vec![0.0; n];
    let mut dm = vec![0.0; n];
    for j in 0..n {
        qp[j] = q[j] + HESSIAN_FD_STEP;
        potential.differential_into(&qp, &mut dp)?;
        qp[j] = q[j] - HESSIAN_FD_STEP;
        potential.differential_into(&qp, &mut dm)?;
        qp[j] = q[j];
        for i in 0..n {
            h[(i, j)] = (dp[i] - dm[i]) / (2.0 * HESSIAN_FD_STEP);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

/// Solves `-H v = omega^2 g(q*) v` at an equilibrium `q*`, sorted by
/// ascending frequency.
pub fn linearized_modes<M, P>(metric: &M, potential: &P, qstar: &[f64]) -> Result<Vec<LinearMode>>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let n = metric.dim();
    check_dim(n, potential.dim())?;
    check_dim(n, qstar.len())?;
    let mut df = vec![0.0; n];
    potential.differential_into(qstar, &mut df)?;
    let dfn = df.iter().map(|x| x * x).sum::<f64>().sqrt();
    if dfn > 1e-9 {
        return Err(Error::Precondition(format!("not an equilibrium: |df| = {dfn:.3e}")));
    }
    let stiffness = -potential_hessian(potential, qstar)?;
    let mut probe: Vec<f64> = stiffness.iter().copied().collect();
    if !cholesky_in_place(&mut probe, n) {
        return Err(Error::Precondition("potential Hessian is not negative definite".into()));
    }
    let mut scratch = MetricScratch::new(n);
    scratch.load(metric, qstar, false)?;
    let g = DMatrix::from_row_slice(n, n, &scratch.g);
    let chol = g.clone().cholesky().ok_or(Error::InvalidMetric { point: qstar.to_vec() })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::InvalidMetric { point: qstar.to_vec() })?;
    let a = &linv * &stiffness * linv.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut modes: Vec<LinearMode> = (0..n)
        .map(|k| {
            let y = eig.eigenvectors.column(k).into_owned();
            let v = linv.transpose() * y;
            let mut dir: Vec<f64> = v.iter().copied().collect();
            if let Some(first) = dir.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    dir.iter_mut().for_each(|x| *x = -*x);
                }
            }
            LinearMode {
                direction: dir,
                omega: eig.eigenvalues[k].max(0.0).sqrt(),
            }
        })
        .collect();
    modes.sort_by(|a, b| a.omega.partial_cmp(&b.omega).unwrap());
    Ok(modes)
}

/// Point on the level set `f = -energy` along the ray from `center` in
/// direction `(cos theta, sin theta)`.
pub fn equipotential_point<P: PotentialField + ?Sized>(potential: &P, center: &[f64], energy: f64, theta: f64) -> Result<Vec<f64>> {
    check_dim(2, potential.dim())?;
    check_dim(2, center.len())?;
    if !(energy > 0.0) {
        return Err(Error::arg("energy must be positive"));
    }
    let dir = [theta.cos(), theta.sin()];
    let at = |r: f64| vec![center[0] + r * dir[0], center[1] + r * dir[1]];
    let level = |r: f64| -> Result<f64> { Ok(potential.value(&at(r))? + energy) };
    let max_radius = 10.0;
    let mut lo = 0.0;
    let mut hi = 1e-3;
    loop {
        let v = level(hi).map_err(|_| Error::NotConverged(format!("level {energy} not reached along theta = {theta}")))?;
        if v <= 0.0 {
            break;
        }
        lo = hi;
        hi *= 1.5;
        if hi > max_radius {
            return Err(Error::NotConverged(format!("level {energy} not reached along theta = {theta}")));
        }
    }
    let mut failed = false;
    let r = bracketed_root(
        |r| match level(r) {
            Ok(v) => v,
            Err(_) => {
                failed = true;
                f64::NAN
            }
        },
        lo,
        hi,
        1e-15,
        300,
    );
    let r = match r {
        Some(r) if !failed => r,
        _ => return Err(Error::NotConverged("equipotential root".into())),
    };
    let q = at(r);
    let resid = potential.value(&q)? + energy;
    if resid.abs() > 1e-10 {
        return Err(Error::NotConverged(format!("equipotential residual {resid:.3e}")));
    }
    Ok(q)
}

/// Channel-averaged Pearson correlation between the record and its lagged
/// copy, for every lag `1..=max_lag`. Constant channels are skipped.
fn lagged_correlation(traj: &Trajectory, max_lag: usize) -> Result<Vec<f64>> {
    let len = traj.len();
    let mut mean_corr = vec![0.0; max_lag + 1];
    let mut used = 0usize;
    let fft_len = (2 * len).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let mut p1 = vec![0.0; len + 1];
    let mut p2 = vec![0.0; len + 1];
    for k in 0..traj.dim() {
        for velocity in [false, true] {
            let raw = traj.channel(k, velocity);
            let mean = raw.iter().sum::<f64>() / len as f64;
            let x: Vec<f64> = raw.iter().map(|v| v - mean).collect();
            let spread = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(spread > 1e-12 * scale) || spread == 0.0 {
                continue;
            }
            used += 1;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, v) in buf.iter_mut().zip(&x) {
                b.re = *v;
            }
            fwd.process(&mut buf);
            for b in buf.iter_mut() {
                *b = Complex::new(b.norm_sqr(), 0.0);
            }
            inv.process(&mut buf);
            for i in 0..len {
                p1[i + 1] = p1[i] + x[i];
                p2[i + 1] = p2[i] + x[i] * x[i];
            }
            for lag in 1..=max_lag {
                let m = (len - lag) as f64;
                let sxy = buf[lag].re / fft_len as f64;
                let sx = p1[len - lag];
                let sy = p1[len] - p1[lag];
                let vx = (p2[len - lag] - sx * sx / m).max(0.0);
                let vy = (p2[len] - p2[lag] - sy * sy / m).max(0.0);
                if vx > 0.0 && vy > 0.0 {
                    mean_corr[lag] += (sxy - sx * sy / m) / (vx * vy).sqrt();
                }
            }
        }
    }
    if used == 0 {
        return Err(Error::Precondition("degenerate (constant) trajectory".into()));
    }
    mean_corr.iter_mut().for_each(|c| *c /= used as f64);
    Ok(mean_corr)
}

/// Largest value of `r` in `lo..=hi`, refined by parabolic interpolation.
fn refined_peak(r: &[f64], lo: usize, hi: usize) -> (f64, f64) {
    let mut best = lo;
    for lag in lo..=hi {
        if r[lag] > r[best] {
            best = lag;
        }
    }
    let (mut pos, mut val) = (best as f64, r[best]);
    if best >= 1 && best + 1 < r.len() {
        let (a, b, c) = (r[best - 1], r[best], r[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            let offset = 0.5 * (a - c) / denom;
            if offset.abs() <= 1.0 {
                pos += offset;
                val = b - 0.25 * (a - c) * offset;
            }
        }
    }
    (pos, val)
}

/// Periodicity score in `[0, 1]` from the normalized autocorrelation of the
/// mean-removed state sequence.
///
/// Each position and velocity channel contributes its Pearson correlation
/// between the record and its lagged copy, averaged over channels into
/// `r(lag)`. The recurrence lag `P` is the highest peak of `r` between its
/// first zero and 10% of the record. The score is the mean of the peaks of
/// `r` near every multiple of `P` inside the lag window `[0.1 T, 0.9 T]`
/// (peaks searched within a quarter of `P`, refined parabolically). A
/// periodic record scores 1; a quasi-periodic one cannot line up at every
/// multiple and scores lower in proportion to its off-period content.
pub fn periodicity_measure(traj: &Trajectory) -> Result<f64> {
    let len = traj.len();
    if len < 1000 {
        return Err(Error::Precondition(format!("periodicity needs at least 1000 samples, got {len}")));
    }
    let lag_lo = ((0.1 * (len - 1) as f64).ceil() as usize).max(2);
    let lag_hi = (0.9 * (len - 1) as f64).floor() as usize;
    let r = lagged_correlation(traj, lag_hi + 1)?;
    let Some(first_zero) = (1..lag_lo).find(|&l| r[l] <= 0.0) else {
        // no decorrelation within the short-lag range: trend, not oscillation
        return Ok(0.0);
    };
    let (period, _) = refined_peak(&r, first_zero, lag_lo);
    if !(period > 1.0) {
        return Ok(0.0);
    }
    let half = (0.25 * period).max(1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut k = (lag_lo as f64 / period).ceil().max(1.0) as usize;
    loop {
        let centre = k as f64 * period;
        if centre > lag_hi as f64 {
            break;
        }
        let lo = ((centre - half).ceil() as usize).clamp(lag_lo, lag_hi);
        let hi = ((centre + half).floor() as usize).clamp(lag_lo, lag_hi);
        if lo <= hi {
            sum += refined_peak(&r, lo, hi).1;
            count += 1;
        }
        k += 1;
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok((sum / count as f64).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSearchOptions {
    pub horizon: f64,
    pub integrator: IntegratorOptions,
    /// Half-width of the golden-section bracket around the seed angle.
    pub bracket: f64,
    /// Bracket length at which the search stops (rad).
    pub angle_tol: f64,
    pub max_iter: usize,
    /// Smallest periodicity accepted as a mode.
    pub min_periodicity: f64,
    /// Angles of the coarse scan that locates the basin before refinement;
    /// 0 runs golden section over the whole bracket.
    pub scan_points: usize,
    /// Simulation length used by the coarse scan.
    pub scan_horizon: f64,
    /// Final bracket (rad) of the turning-point polish; 0 disables it.
    pub polish_tol: f64,
}

impl Default for ModeSearchOptions {
    fn default() -> Self {
        Self {
            horizon: crate::dynamics::DEFAULT_HORIZON,
            integrator: IntegratorOptions::default(),
            bracket: 0.4,
            angle_tol: 1e-4,
            max_iter: 60,
            min_periodicity: 0.5,
            scan_points: 81,
            scan_horizon: 20.0,
            polish_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeCandidate {
    pub energy: f64,
    /// Start angle on the equipotential line.
    pub theta: f64,
    pub start: Vec<f64>,
    pub trajectory: Trajectory,
    /// Configuration points from the start to the next turning point.
    pub curve: Vec<Vec<f64>>,
    pub periodicity: f64,
    /// Kinetic energy at the curve's far end as a fraction of `energy`.
    pub end_kinetic_fraction: f64,
}

impl ModeCandidate {
    /// Polar angle of the start point relative to `center`.
    pub fn start_angle(&self, center: &[f64]) -> f64 {
        (self.start[1] - center[1]).atan2(self.start[0] - center[0])
    }

    /// Metric distance of the start point from `center` measured along the
    /// coordinate ray.
    pub fn amplitude<M: MetricField + ?Sized>(&self, metric: &M, center: &[f64]) -> Result<f64> {
        let d: Vec<f64> = self.start.iter().zip(center).map(|(a, b)| a - b).collect();
        let n = 64;
        let mut scratch = MetricScratch::new(2);
        let mut total = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let q: Vec<f64> = center.iter().zip(&d).map(|(c, x)| c + t * x).collect();
            scratch.load(metric, &q, false)?;
            total += scratch.norm(&d) / n as f64;
        }
        Ok(total)
    }

    /// CSV `s,q1,q2` of the mode curve with coordinate arc length.
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("s,q1,q2\n");
        let mut s = 0.0;
        for (i, p) in self.curve.iter().enumerate() {
            if i > 0 {
                let prev = &self.curve[i - 1];
                s += (p[0] - prev[0]).hypot(p[1] - prev[1]);
            }
            out.push_str(&csv_row(&[s, p[0], p[1]]));
        }
        out
    }
}

fn kinetic<M: MetricField + ?Sized>(scratch: &mut MetricScratch, metric: &M, q: &[f64], v: &[f64]) -> Result<f64> {
    scratch.load(metric, q, false)?;
    Ok(0.5 * scratch.inner(v, v))
}

/// Points from the start of `traj` to the first subsequent turning point
/// (local minimum of kinetic energy after it has risen), plus the kinetic
/// energy there.
pub fn extract_half_swing<M: MetricField + ?Sized>(metric: &M, traj: &Trajectory) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut scratch = MetricScratch::new(traj.dim());
    let mut peak = 0.0f64;
    let mut prev = kinetic(&mut scratch, metric, traj.q(0), traj.qdot(0))?;
    let mut cur = kinetic(&mut scratch, metric, traj.q(1.min(traj.len() - 1)), traj.qdot(1.min(traj.len() - 1)))?;
    let mut end = traj.len() - 1;
    let mut end_t = cur;
    for i in 1..traj.len() - 1 {
        let next = kinetic(&mut scratch, metric, traj.q(i + 1), traj.qdot(i + 1))?;
        peak = peak.max(cur);
        if cur <= prev && cur <= next && cur < 0.5 * peak {
            end = i;
            end_t = cur;
            break;
        }
        prev = cur;
        cur = next;
    }
    Ok(((0..=end).map(|i| traj.q(i).to_vec()).collect(), end_t))
}

/// Kinetic energy at the first turning point of `traj`, refined by a
/// parabola through the three samples around the discrete minimum.
pub fn turning_kinetic<M: MetricField + ?Sized>(metric: &M, traj: &Trajectory) -> Result<f64> {
    let (curve, _) = extract_half_swing(metric, traj)?;
    let i = curve.len() - 1;
    if i == 0 || i + 1 >= traj.len() {
        return Err(Error::NotConverged("no turning point inside the trajectory".into()));
    }
    let mut scratch = MetricScratch::new(traj.dim());
    let k: Vec<f64> =
        (i - 1..=i + 1).map(|j| kinetic(&mut scratch, metric, traj.q(j), traj.qdot(j))).collect::<Result<_>>()?;
    let curv = k[0] - 2.0 * k[1] + k[2];
    if curv <= 0.0 {
        return Ok(k[1]);
    }
    let slope = 0.5 * (k[2] - k[0]);
    Ok(k[1] - 0.5 * slope * slope / curv)
}

/// Simulates from rest on the level `f = -energy` at angle `theta`.
pub fn simulate_from_equipotential<M, P>(
    metric: &M,
    potential: &P,
    center: &[f64],
    energy: f64,
    theta: f64,
    opts: &ModeSearchOptions,
) -> Result<(Vec<f64>, Trajectory)>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let start = equipotential_point(potential, center, energy, theta)?;
    let traj = integrate_with(metric, potential, &State::at_rest(start.clone()), opts.horizon, &opts.integrator)?;
    Ok((start, traj))
}

/// Searches the start angle on the equipotential line that maximizes
/// [`periodicity_measure`] within `theta0 +- bracket`.
///
/// The score landscape is sharply peaked at modes and flat with side bumps
/// elsewhere, so a coarse scan with short simulations picks the basin first;
/// golden section at the full horizon then refines within one scan step.
pub fn find_mode<M, P>(metric: &M, potential: &P, center: &[f64], energy: f64, theta0: f64, opts: &ModeSearchOptions) -> Result<ModeCandidate>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let score_at = |theta: f64, horizon: f64| -> f64 {
        let o = ModeSearchOptions { horizon, ..*opts };
        simulate_from_equipotential(metric, potential, center, energy, theta, &o)
            .and_then(|(_, tr)| periodicity_measure(&tr))
            .unwrap_or(0.0)
    };
    let (mut lo, mut hi) = (theta0 - opts.bracket, theta0 + opts.bracket);
    if opts.scan_points >= 2 {
        let step = (hi - lo) / (opts.scan_points - 1) as f64;
        let mut best = (theta0, f64::NEG_INFINITY);
        for k in 0..opts.scan_points {
            let th = lo + k as f64 * step;
            let v = score_at(th, opts.scan_horizon.min(opts.horizon));
            if v > best.1 {
                best = (th, v);
            }
        }
        lo = best.0 - step;
        hi = best.0 + step;
    }
    let (theta, score) = golden_section_max(|th| score_at(th, opts.horizon), lo, hi, opts.angle_tol, opts.max_iter);
    if !(score > opts.min_periodicity) {
        return Err(Error::NotConverged(format!(
            "no periodic start near theta = {theta0} at E = {energy} (best periodicity {score:.3})"
        )));
    }
    let (mut theta, mut score) = (theta, score);
    let (mut start, mut trajectory) = simulate_from_equipotential(metric, potential, center, energy, theta, opts)?;
    if opts.polish_tol > 0.0 {
        // The periodicity score is flat to ~1e-7 near a mode, so the angle is
        // finished by driving the velocity at the first turning point to zero,
        // which is the brake-orbit condition.
        let t_end = trajectory.t(extract_half_swing(metric, &trajectory)?.0.len() - 1);
        let o = ModeSearchOptions { horizon: (1.5 * t_end).min(opts.horizon), ..*opts };
        let defect = |th: f64| -> f64 {
            simulate_from_equipotential(metric, potential, center, energy, th, &o)
                .and_then(|(_, tr)| turning_kinetic(metric, &tr))
                .map(|k| -k)
                .unwrap_or(f64::NEG_INFINITY)
        };
        let half = (opts.bracket / opts.scan_points.max(2) as f64).max(10.0 * opts.angle_tol);
        let (th, _) = golden_section_max(defect, theta - half, theta + half, opts.polish_tol, 200);
        let (s2, tr2) = simulate_from_equipotential(metric, potential, center, energy, th, opts)?;
        let sc2 = periodicity_measure(&tr2).unwrap_or(0.0);
        if sc2 > opts.min_periodicity {
            (theta, score, start, trajectory) = (th, sc2, s2, tr2);
        }
    }
    let (curve, end_t) = extract_half_swing(metric, &trajectory)?;
    Ok(ModeCandidate {
        energy,
        theta,
        start,
        trajectory,
        curve,
        periodicity: score,
        end_kinetic_fraction: end_t / energy,
    })
}

/// A polyline reparametrized by metric arc length and smoothed by natural
/// cubic splines.
#[derive(Debug, Clone)]
pub struct CurveFit {
    s: Vec<f64>,
    splines: Vec<CubicSpline>,
    points: Vec<Vec<f64>>,
}

impl CurveFit {
    /// Thins points closer than `length / max_segments` and fits splines.
    pub fn new<M: MetricField + ?Sized>(metric: &M, curve: &[Vec<f64>], max_segments: usize) -> Result<Self> {
        let n = metric.dim();
        if curve.len() < 5 {
            return Err(Error::Precondition(format!("curve needs at least 5 points, got {}", curve.len())));
        }
        for p in curve {
            check_dim(n, p.len())?;
        }
        let mut scratch = MetricScratch::new(n);
        let chord = |scratch: &mut MetricScratch, a: &[f64], b: &[f64]| -> Result<f64> {
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
            scratch.load(metric, &mid, false)?;
            Ok(scratch.norm(&d))
        };
        let mut total = 0.0;
        for w in curve.windows(2) {
            total += chord(&mut scratch, &w[0], &w[1])?;
        }
        if !(total > 0.0) {
            return Err(Error::Precondition("curve has zero length".into()));
        }
        let min_gap = total / max_segments as f64;
        let mut points = vec![curve[0].clone()];
        let mut s = vec![0.0];
        let mut acc = 0.0;
        for i in 1..curve.len() {
            acc += chord(&mut scratch, &curve[i - 1], &curve[i])?;
            let last = i == curve.len() - 1;
            if acc >= min_gap || (last && acc > 0.0) {
                if last && acc < 0.5 * min_gap && points.len() > 1 {
                    // merge a tiny final segment into the previous one
                    let prev_s = s[s.len() - 1];
                    points.pop();
                    s.pop();
                    points.push(curve[i].clone());
                    s.push(prev_s + acc);
                } else {
                    let base = s[s.len() - 1];
                    points.push(curve[i].clone());
                    s.push(base + acc);
                }
                acc = 0.0;
            }
        }
        if points.len() < 5 {
            return Err(Error::Precondition("curve resampling left fewer than 5 distinct points".into()));
        }
        let splines = (0..n)
            .map(|k| {
                let y: Vec<f64> = points.iter().map(|p| p[k]).collect();
                CubicSpline::new(&s, &y)
            })
            .collect();
        Ok(Self { s, splines, points })
    }

    pub fn length(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Position, velocity and acceleration with respect to the fitted
    /// arc-length parameter.
    pub fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut q = Vec::with_capacity(self.splines.len());
        let mut v = Vec::with_capacity(self.splines.len());
        let mut a = Vec::with_capacity(self.splines.len());
        for sp in &self.splines {
            let (x, dx, ddx) = sp.eval(s);
            q.push(x);
            v.push(dx);
            a.push(ddx);
        }
        (q, v, a)
    }

    /// Metric distance from `q` to the fitted polyline.
    pub fn distance<M: MetricField + ?Sized>(&self, metric: &M, q: &[f64]) -> Result<f64> {
        let near = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let mut scratch = MetricScratch::new(q.len());
        scratch.load(metric, &self.points[near], false)?;
        let mut best = f64::INFINITY;
        let lo = near.saturating_sub(1);
        let hi = (near + 1).min(self.points.len() - 1);
        for i in lo..hi.max(lo + 1).min(self.points.len() - 1) {
            let (a, b) = (&self.points[i], &self.points[i + 1]);
            let seg: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
            let rel: Vec<f64> = q.iter().zip(a).map(|(x, y)| x - y).collect();
            let ss = scratch.inner(&seg, &seg);
            let t = if ss > 0.0 { (scratch.inner(&rel, &seg) / ss).clamp(0.0, 1.0) } else { 0.0 };
            let d: Vec<f64> = rel.iter().zip(&seg).map(|(r, s)| r - t * s).collect();
            best = best.min(scratch.norm(&d));
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrictModeReport {
    /// Fitted arc length of each evaluated sample.
    pub arc_length: Vec<f64>,
    /// `|(nabla_w w)^perp|_g` per sample (geodesic curvature).
    pub geodesic_residual: Vec<f64>,
    /// `|(grad f)^perp|_g` per sample.
    pub tangency_residual: Vec<f64>,
    pub max_geodesic_residual: f64,
    pub max_tangency_residual: f64,
    pub tol: f64,
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    /// Number of uniformly spaced evaluation samples.
    pub samples: usize,
    /// Fraction of arc length excluded at each end (spline end effects).
    pub end_trim: f64,
    /// Resolution of the arc-length reparametrization.
    pub max_segments: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 201,
            end_trim: 0.05,
            max_segments: 4000,
        }
    }
}

/// Checks both strict-mode conditions along a sampled curve.
pub fn verify_strict_mode<M, P>(metric: &M, potential: &P, curve: &[Vec<f64>], tol: f64) -> Result<StrictModeReport>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    verify_strict_mode_with(metric, potential, curve, tol, &VerifyOptions::default())
}

pub fn verify_strict_mode_with<M, P>(
    metric: &M,
    potential: &P,
    curve: &[Vec<f64>],
    tol: f64,
    opts: &VerifyOptions,
) -> Result<StrictModeReport>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let n = metric.dim();
    check_dim(n, potential.dim())?;
    let fit = CurveFit::new(metric, curve, opts.max_segments)?;
    let len = fit.length();
    let s0 = opts.end_trim * len;
    let s1 = (1.0 - opts.end_trim) * len;
    let m = opts.samples.max(2);
    let mut scratch = MetricScratch::new(n);
    let mut gam = vec![0.0; n];
    let mut df = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut report = StrictModeReport {
        arc_length: Vec::with_capacity(m),
        geodesic_residual: Vec::with_capacity(m),
        tangency_residual: Vec::with_capacity(m),
        max_geodesic_residual: 0.0,
        max_tangency_residual: 0.0,
        tol,
        strict: false,
    };
    for i in 0..m {
        let s = s0 + (s1 - s0) * i as f64 / (m - 1) as f64;
        let (q, v, a) = fit.eval(s);
        scratch.load(metric, &q, true)?;
        scratch.christoffel_contract(&v, &mut gam);
        let cov: Vec<f64> = a.iter().zip(&gam).map(|(x, y)| x + y).collect();
        let speed2 = scratch.inner(&v, &v);
        let (_, cov_perp) = split_with(&scratch, &cov, &v)?;
        let geo = scratch.norm(&cov_perp) / speed2;
        potential.differential_into(&q, &mut df)?;
        scratch.raise(&df, &mut grad);
        let (_, grad_perp) = split_with(&scratch, &grad, &v)?;
        let tan = scratch.norm(&grad_perp);
        report.arc_length.push(s);
        report.geodesic_residual.push(geo);
        report.tangency_residual.push(tan);
        report.max_geodesic_residual = report.max_geodesic_residual.max(geo);
        report.max_tangency_residual = report.max_tangency_residual.max(tan);
    }
    report.strict = report.max_geodesic_residual <= tol && report.max_tangency_residual <= tol;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleResult {
    pub scale: f64,
    /// Largest metric distance of the simulated trajectory from the curve.
    pub max_deviation: f64,
    /// Normal covariant acceleration at each probe point relative to the
    /// unscaled value; `None` where the unscaled value vanishes.
    pub normal_ratio: Vec<Option<f64>>,
    /// `|(nabla_{cv} cv)^perp|_g` at each probe point.
    pub normal_acceleration: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingOptions {
    pub horizon: f64,
    pub integrator: IntegratorOptions,
    /// Interior fractions of arc length where normal accelerations are probed.
    pub probes: usize,
    /// Fraction of arc length where the simulation starts.
    pub start_fraction: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            horizon: 5.0,
            integrator: IntegratorOptions::default(),
            probes: 5,
            start_fraction: 0.5,
        }
    }
}

/// Velocity-scaling probe of curve invariance: trajectories launched
/// tangentially at several speeds, and the `c^2` law of the normal
/// covariant acceleration.
pub fn scaling_invariance_test<M, P>(
    metric: &M,
    potential: &P,
    curve: &[Vec<f64>],
    scales: &[f64],
    opts: &ScalingOptions,
) -> Result<Vec<ScaleResult>>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    if scales.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::arg("scales must be positive"));
    }
    let n = metric.dim();
    let fit = CurveFit::new(metric, curve, VerifyOptions::default().max_segments)?;
    let len = fit.length();
    let mut scratch = MetricScratch::new(n);
    let mut gam = vec![0.0; n];

    // normal covariant acceleration of constant-speed traversal at speed c
    let probe_s: Vec<f64> = (1..=opts.probes).map(|k| len * k as f64 / (opts.probes + 1) as f64).collect();
    let mut probe_scratch = MetricScratch::new(n);
    let mut normal_at = |c: f64| -> Result<Vec<f64>> {
        let sc = &mut probe_scratch;
        probe_s
            .iter()
            .map(|&s| {
                let (q, v, a) = fit.eval(s);
                sc.load(metric, &q, true)?;
                let speed = sc.norm(&v);
                let w: Vec<f64> = v.iter().map(|x| x / speed).collect();
                // d/ds of the unit tangent, tangential parts drop out below
                let dw: Vec<f64> = a.iter().map(|x| x / (speed * speed)).collect();
                let vel: Vec<f64> = w.iter().map(|x| c * x).collect();
                let acc: Vec<f64> = dw.iter().map(|x| c * c * x).collect();
                sc.christoffel_contract(&vel, &mut gam);
                let cov: Vec<f64> = acc.iter().zip(&gam).map(|(x, y)| x + y).collect();
                let (_, perp) = split_with(sc, &cov, &vel)?;
                Ok(sc.norm(&perp))
            })
            .collect()
    };
    let reference = normal_at(1.0)?;

    let (q0, v0, _) = fit.eval(opts.start_fraction * len);
    scratch.load(metric, &q0, false)?;
    let speed0 = scratch.norm(&v0);
    let w0: Vec<f64> = v0.iter().map(|x| x / speed0).collect();

    let mut out = Vec::with_capacity(scales.len());
    for &c in scales {
        let normal = normal_at(c)?;
        let ratio = normal
            .iter()
            .zip(&reference)
            .map(|(a, b)| if *b > 1e-12 { Some(a / b) } else { None })
            .collect();
        let s0 = State::new(q0.clone(), w0.iter().map(|x| c * x).collect());
        let traj = integrate_with(metric, potential, &s0, opts.horizon, &opts.integrator)?;
        let mut dev = 0.0f64;
        for i in 0..traj.len() {
            dev = dev.max(fit.distance(metric, traj.q(i))?);
        }
        out.push(ScaleResult {
            scale: c,
            max_deviation: dev,
            normal_ratio: ratio,
            normal_acceleration: normal,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    /// Standard deviation of the individual same-sign spacings.
    pub std_dev: f64,
    /// Interpolated zero-crossing times of the chosen velocity.
    pub crossings: Vec<f64>,
}

/// Interpolated sign changes of velocity `coordinate` (`true` = upward).
pub fn velocity_zero_crossings(traj: &Trajectory, coordinate: usize) -> Vec<(f64, bool)> {
    let v = traj.channel(coordinate, true);
    let mut out = Vec::new();
    for i in 0..v.len().saturating_sub(1) {
        let (a, b) = (v[i], v[i + 1]);
        let up = a < 0.0 && b >= 0.0;
        let down = a > 0.0 && b <= 0.0;
        if up || down {
            let frac = a / (a - b);
            out.push((traj.t(i) + frac * (traj.t(i + 1) - traj.t(i)), up));
        }
    }
    out
}

/// A zero-velocity instant located between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TurningPoint {
    pub t: f64,
    pub q: Vec<f64>,
    /// Kinetic energy of the parabola fit at `t` (ideally 0).
    pub kinetic: f64,
}

/// Cubic Hermite interpolation of the configuration at time `t`.
pub fn hermite_q(traj: &Trajectory, t: f64) -> Vec<f64> {
    let times = traj.times();
    let i = match times.partition_point(|x| *x <= t) {
        0 => 0,
        k => (k - 1).min(times.len().saturating_sub(2)),
    };
    let (t0, t1) = (times[i], times[i + 1]);
    let h = t1 - t0;
    let u = (t - t0) / h;
    let (h00, h10, h01, h11) = (
        2.0 * u.powi(3) - 3.0 * u * u + 1.0,
        u.powi(3) - 2.0 * u * u + u,
        -2.0 * u.powi(3) + 3.0 * u * u,
        u.powi(3) - u * u,
    );
    (0..traj.dim())
        .map(|k| {
            h00 * traj.q(i)[k] + h10 * h * traj.qdot(i)[k] + h01 * traj.q(i + 1)[k] + h11 * h * traj.qdot(i + 1)[k]
        })
        .collect()
}

/// Local minima of kinetic energy below 1% of its maximum, refined by a
/// parabola through the neighbouring samples.
pub fn turning_points<M: MetricField + ?Sized>(metric: &M, traj: &Trajectory) -> Result<Vec<TurningPoint>> {
    let mut scratch = MetricScratch::new(traj.dim());
    let k: Vec<f64> =
        (0..traj.len()).map(|i| kinetic(&mut scratch, metric, traj.q(i), traj.qdot(i))).collect::<Result<_>>()?;
    let peak = k.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    for i in 1..k.len().saturating_sub(1) {
        if !(k[i] <= k[i - 1] && k[i] < k[i + 1] && k[i] < 0.01 * peak) {
            continue;
        }
        let curv = k[i - 1] - 2.0 * k[i] + k[i + 1];
        let slope = 0.5 * (k[i + 1] - k[i - 1]);
        let off = (-slope / curv).clamp(-1.0, 1.0);
        let t = traj.t(i) + off * (traj.t(i + 1) - traj.t(i));
        out.push(TurningPoint {
            t,
            q: hermite_q(traj, t),
            kinetic: k[i] - 0.5 * slope * slope / curv,
        });
    }
    Ok(out)
}

/// Mean spacing of same-sign velocity zero crossings.
pub fn detect_period(traj: &Trajectory, coordinate: usize) -> Result<PeriodEstimate> {
    if coordinate >= traj.dim() {
        return Err(Error::arg(format!("coordinate {coordinate} out of range")));
    }
    let crossings = velocity_zero_crossings(traj, coordinate);
    if crossings.len() < 3 {
        return Err(Error::Precondition(format!("too few velocity zero crossings ({})", crossings.len())));
    }
    let mut spacings = Vec::new();
    for dir in [true, false] {
        let times: Vec<f64> = crossings.iter().filter(|c| c.1 == dir).map(|c| c.0).collect();
        spacings.extend(times.windows(2).map(|w| w[1] - w[0]));
    }
    let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let var = spacings.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / spacings.len() as f64;
    Ok(PeriodEstimate {
        period: mean,
        std_dev: var.sqrt(),
        crossings: crossings.into_iter().map(|c| c.0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CircularPotential, QuadraticPotential};
    use crate::manifold::{DoublePendulumMetric, Euclidean};
    use std::f64::consts::PI;

    fn sampled(times: &[f64], f: impl Fn(f64) -> [f64; 2]) -> Trajectory {
        let q: Vec<Vec<f64>> = times.iter().map(|&t| f(t).to_vec()).collect();
        let h = 1e-6;
        let qd: Vec<Vec<f64>> = times
            .iter()
            .map(|&t| {
                let (a, b) = (f(t + h), f(t - h));
                vec![(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h)]
            })
            .collect();
        Trajectory::from_samples(times.to_vec(), q, qd, vec![0.0; times.len()]).unwrap()
    }

    #[test]
    fn isotropic_linear_modes() {
        let modes = linearized_modes(&Euclidean::new(2), &CircularPotential::new(100.0), &[0.0, 0.0]).unwrap();
        for m in &modes {
            assert!((m.omega - 10.0).abs() < 1e-6);
        }
        let d: f64 = modes[0].direction.iter().zip(&modes[1].direction).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn non_equilibrium_rejected() {
        let r = linearized_modes(&Euclidean::new(2), &CircularPotential::new(100.0), &[0.1, 0.0]);
        assert!(matches!(r, Err(Error::Precondition(_))));
        let saddle = QuadraticPotential::new(vec![1.0, -1.0]);
        assert!(matches!(linearized_modes(&Euclidean::new(2), &saddle, &[0.0, 0.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn equipotential_points_on_circle() {
        let p = CircularPotential::new(100.0);
        let q = equipotential_point(&p, &[0.0, 0.0], 0.5, 0.0).unwrap();
        assert!((q[0] - 0.1).abs() < 1e-12 && q[1].abs() < 1e-15);
        let q = equipotential_point(&p, &[0.0, 0.0], 0.5, PI / 2.0).unwrap();
        assert!(q[0].abs() < 1e-15 && (q[1] - 0.1).abs() < 1e-12);
        let flat = QuadraticPotential::new(vec![0.0, 1.0]);
        assert!(equipotential_point(&flat, &[0.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn periodicity_ranks_signals() {
        let times: Vec<f64> = (0..20000).map(|i| i as f64 * 0.01).collect();
        let sine = periodicity_measure(&sampled(&times, |t| [t.sin(), 0.5 * t.sin()])).unwrap();
        assert!(sine >= 0.999, "{sine}");
        let w = 1.3;
        let quasi = periodicity_measure(&sampled(&times, |t| [(w * t).sin() + (2f64.sqrt() * w * t).sin(), (w * t).cos()])).unwrap();
        assert!(quasi < sine, "{quasi} vs {sine}");
    }

    #[test]
    fn periodicity_rejects_degenerate_input() {
        let times: Vec<f64> = (0..1200).map(|i| i as f64).collect();
        let flat = sampled(&times, |_| [1.0, 2.0]);
        assert!(periodicity_measure(&flat).is_err());
        let short = sampled(&times[..500], |t| [t.sin(), 0.0]);
        assert!(periodicity_measure(&short).is_err());
    }

    #[test]
    fn harmonic_period() {
        let times: Vec<f64> = (0..20000).map(|i| i as f64 * 1e-3).collect();
        let tr = sampled(&times, |t| [t.cos(), 0.0]);
        let p = detect_period(&tr, 0).unwrap();
        assert!((p.period - 2.0 * PI).abs() < 1e-4, "{}", p.period);
        let short = sampled(&times[..3000], |t| [t.cos(), 0.0]);
        assert!(detect_period(&short, 0).is_err());
    }

    #[test]
    fn turning_points_of_a_rotated_oscillation() {
        // q = (cos t, 2 cos t): stops at t = k pi with q = +-(1, 2)
        let times: Vec<f64> = (0..7000).map(|i| i as f64 * 1e-3).collect();
        let tr = sampled(&times, |t| [t.cos(), 2.0 * t.cos()]);
        let tps = turning_points(&Euclidean::new(2), &tr).unwrap();
        assert_eq!(tps.len(), 2);
        for (k, tp) in tps.iter().enumerate() {
            let sign = if k == 0 { -1.0 } else { 1.0 };
            assert!((tp.t - (k + 1) as f64 * PI).abs() < 1e-6, "{tp:?}");
            assert!((tp.q[0] - sign).abs() < 1e-10 && (tp.q[1] - 2.0 * sign).abs() < 1e-10);
            assert!(tp.kinetic.abs() < 1e-10);
        }
    }

    #[test]
    fn straight_axis_line_is_strict_in_flat_space() {
        let curve: Vec<Vec<f64>> = (0..=50).map(|i| vec![-1.0 + 0.04 * i as f64, 0.0]).collect();
        let rep = verify_strict_mode(&Euclidean::new(2), &QuadraticPotential::new(vec![3.0, 8.0]), &curve, 1e-10).unwrap();
        assert!(rep.strict, "{rep:?}");
        assert!(rep.max_geodesic_residual < 1e-10 && rep.max_tangency_residual < 1e-10);
    }

    #[test]
    fn circle_is_not_a_geodesic() {
        let curve: Vec<Vec<f64>> = (0..=200).map(|i| {
            let a = 0.01 * i as f64;
            vec![a.cos(), a.sin()]
        }).collect();
        let rep = verify_strict_mode(&Euclidean::new(2), &QuadraticPotential::new(vec![1.0, 1.0]), &curve, 1e-6).unwrap();
        assert!(!rep.strict);
        // unit circle has geodesic curvature 1; the radial gradient is normal
        assert!((rep.max_geodesic_residual - 1.0).abs() < 1e-4);
        assert!((rep.max_tangency_residual - 1.0).abs() < 1e-6);
        assert!(verify_strict_mode(&Euclidean::new(2), &QuadraticPotential::new(vec![1.0, 1.0]), &curve[..3], 1e-6).is_err());
    }

    #[test]
    fn c_squared_law_on_coordinate_diagonal() {
        let curve: Vec<Vec<f64>> = (0..=100).map(|i| {
            let x = -0.5 + 0.01 * i as f64;
            vec![x, -x]
        }).collect();
        let opts = ScalingOptions { horizon: 0.5, ..Default::default() };
        let res = scaling_invariance_test(&DoublePendulumMetric, &CircularPotential::new(100.0), &curve, &[1.0, 2.0], &opts).unwrap();
        // the middle probe sits at q = 0 where the Christoffel terms vanish
        assert_eq!(res[1].normal_ratio[2], None);
        let defined: Vec<f64> = res[1].normal_ratio.iter().flatten().copied().collect();
        assert_eq!(defined.len(), 4);
        for r in defined {
            assert!((r - 4.0).abs() < 1e-6);
        }
    }
}
