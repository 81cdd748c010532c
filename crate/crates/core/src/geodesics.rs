//! Geodesic shooting, geodesic-adapted charts and the along-curve speed law.
//!
//! Geodesics are stored in metric arc length: every sample carries the
//! position `q`, the unit tangent `w = dq/ds` and its coordinate derivative
//! `a = dw/ds = -Gamma(w, w)`. Positions between samples come from the
//! quintic Hermite interpolant through `(q, w, a)`, so the chart map and its
//! Jacobian are exact derivatives of one another.

use crate::error::{check_dim, Error, Result};
use crate::io::csv_row;
use crate::manifold::{MetricField, MetricScratch};
use crate::numerics::{bracketed_root, derivative5, simpson, solve2};

/// Largest tolerated `|<w,w>_g - 1|` while shooting.
pub const UNIT_SPEED_TOL: f64 = 1e-6;
/// Chart domain guard on `|det J|`.
pub const MIN_CHART_DET: f64 = 0.1;
/// Default chart grid resolution for exports.
pub const DEFAULT_CHART_RESOLUTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicCurve {
    n: usize,
    ds: f64,
    s: Vec<f64>,
    q: Vec<f64>,
    w: Vec<f64>,
    a: Vec<f64>,
}

struct GeodesicRhs<'a, M: ?Sized> {
    metric: &'a M,
    scratch: MetricScratch,
}

impl<M: MetricField + ?Sized> GeodesicRhs<'_, M> {
    fn accel(&mut self, q: &[f64], w: &[f64], out: &mut [f64]) -> Result<()> {
        self.scratch.load(self.metric, q, true)?;
        self.scratch.christoffel_contract(w, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        Ok(())
    }
}

/// Shoots the geodesic `q'' = -Gamma(q', q')` from `q0` in direction `v0`
/// over `length` units of metric arc length.
///
/// `v0` is rescaled to unit metric norm. The step is shrunk to
/// `length / ceil(length / ds)` so samples stay uniform. Unit speed is
/// checked at every sample, never enforced.
pub fn shoot_geodesic<M: MetricField + ?Sized>(metric: &M, q0: &[f64], v0: &[f64], length: f64, ds: f64) -> Result<GeodesicCurve> {
    let n = metric.dim();
    check_dim(n, q0.len())?;
    check_dim(n, v0.len())?;
    if !(ds > 0.0) || !(length >= 0.0) {
        return Err(Error::arg("geodesic step must be positive and length nonnegative"));
    }
    let mut rhs = GeodesicRhs {
        metric,
        scratch: MetricScratch::new(n),
    };
    rhs.scratch.load(metric, q0, false)?;
    let speed = rhs.scratch.norm(v0);
    if !(speed > 0.0) {
        return Err(Error::ZeroTangent);
    }
    let steps = ((length / ds) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 { ds } else { length / steps as f64 };

    let mut q = q0.to_vec();
    let mut w: Vec<f64> = v0.iter().map(|v| v / speed).collect();
    let mut curve = GeodesicCurve {
        n,
        ds: h,
        s: Vec::with_capacity(steps + 1),
        q: Vec::with_capacity((steps + 1) * n),
        w: Vec::with_capacity((steps + 1) * n),
        a: Vec::with_capacity((steps + 1) * n),
    };
    let mut acc = vec![0.0; n];
    rhs.accel(&q, &w, &mut acc)?;
    curve.push(0.0, &q, &w, &acc);

    let mut k = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut kw = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut qt = vec![0.0; n];
    let mut wt = vec![0.0; n];
    for step in 1..=steps {
        kw[0].copy_from_slice(&w);
        k[0].copy_from_slice(&acc);
        for (stage, frac) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..n {
                qt[i] = q[i] + frac * h * kw[stage - 1][i];
                wt[i] = w[i] + frac * h * k[stage - 1][i];
            }
            kw[stage].copy_from_slice(&wt);
            rhs.accel(&qt, &wt, &mut k[stage])?;
        }
        for i in 0..n {
            q[i] += h / 6.0 * (kw[0][i] + 2.0 * kw[1][i] + 2.0 * kw[2][i] + kw[3][i]);
            w[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if q.iter().chain(&w).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("geodesic at s = {}", step as f64 * h)));
        }
        rhs.accel(&q, &w, &mut acc)?;
        let unit = rhs.scratch.inner(&w, &w);
        if (unit - 1.0).abs() > UNIT_SPEED_TOL {
            return Err(Error::ToleranceBreach(format!(
                "geodesic lost unit speed at s = {}: <w,w> = {unit}",
                step as f64 * h
            )));
        }
        curve.push(step as f64 * h, &q, &w, &acc);
    }
    Ok(curve)
}

impl GeodesicCurve {
    fn push(&mut self, s: f64, q: &[f64], w: &[f64], a: &[f64]) {
        self.s.push(s);
        self.q.extend_from_slice(q);
        self.w.extend_from_slice(w);
        self.a.extend_from_slice(a);
    }

    /// Geodesic through `q0` extending `half_length` both ways, with arc
    /// length `0` at `q0` and orientation given by `v0`.
    pub fn two_sided<M: MetricField + ?Sized>(metric: &M, q0: &[f64], v0: &[f64], half_length: f64, ds: f64) -> Result<Self> {
        let fwd = shoot_geodesic(metric, q0, v0, half_length, ds)?;
        let back_dir: Vec<f64> = v0.iter().map(|v| -v).collect();
        let bwd = shoot_geodesic(metric, q0, &back_dir, half_length, ds)?;
        let n = fwd.n;
        let mut out = GeodesicCurve {
            n,
            ds: fwd.ds,
            s: Vec::new(),
            q: Vec::new(),
            w: Vec::new(),
            a: Vec::new(),
        };
        for i in (1..bwd.len()).rev() {
            let w: Vec<f64> = bwd.w(i).iter().map(|x| -x).collect();
            out.push(-bwd.s[i], bwd.q(i), &w, bwd.a(i));
        }
        for i in 0..fwd.len() {
            out.push(fwd.s[i], fwd.q(i), fwd.w(i), fwd.a(i));
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.s.len()
    }
    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
    pub fn ds(&self) -> f64 {
        self.ds
    }
    pub fn s(&self, i: usize) -> f64 {
        self.s[i]
    }
    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }
    pub fn q(&self, i: usize) -> &[f64] {
        &self.q[i * self.n..(i + 1) * self.n]
    }
    pub fn w(&self, i: usize) -> &[f64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }
    pub fn a(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }
    pub fn s_range(&self) -> (f64, f64) {
        (self.s[0], self.s[self.len() - 1])
    }
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.q(i).to_vec()).collect()
    }

    /// Position, first and second arc-length derivatives at `s` from the
    /// quintic Hermite interpolant.
    pub fn eval(&self, s: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let len = self.len();
        let (lo, hi) = self.s_range();
        let s = s.clamp(lo, hi);
        let i = (((s - lo) / self.ds).floor() as usize).min(len.saturating_sub(2));
        if len == 1 {
            return (self.q(0).to_vec(), self.w(0).to_vec(), self.a(0).to_vec());
        }
        let h = self.s[i + 1] - self.s[i];
        let t = (s - self.s[i]) / h;
        let b = quintic_hermite(t);
        let (p0, p1, v0, v1, a0, a1) = (self.q(i), self.q(i + 1), self.w(i), self.w(i + 1), self.a(i), self.a(i + 1));
        let mut out = (vec![0.0; self.n], vec![0.0; self.n], vec![0.0; self.n]);
        for k in 0..self.n {
            for (d, (dst, scale)) in [(&mut out.0, 1.0), (&mut out.1, 1.0 / h), (&mut out.2, 1.0 / (h * h))]
                .into_iter()
                .enumerate()
            {
                let c = &b[d];
                dst[k] = scale
                    * (c[0] * p0[k] + c[1] * p1[k] + h * (c[2] * v0[k] + c[3] * v1[k]) + h * h * (c[4] * a0[k] + c[5] * a1[k]));
            }
        }
        out
    }

    /// Metric norm of `dw/ds + Gamma(w, w)` at interior samples, with
    /// `dw/ds` from five-point differences of the stored tangents.
    pub fn geodesic_residuals<M: MetricField + ?Sized>(&self, metric: &M) -> Result<Vec<f64>> {
        let len = self.len();
        if len < 5 {
            return Ok(Vec::new());
        }
        let mut scratch = MetricScratch::new(self.n);
        let channels: Vec<Vec<f64>> = (0..self.n).map(|k| (0..len).map(|i| self.w(i)[k]).collect()).collect();
        let mut gam = vec![0.0; self.n];
        let mut out = Vec::with_capacity(len - 4);
        for i in 2..len - 2 {
            scratch.load(metric, self.q(i), true)?;
            scratch.christoffel_contract(self.w(i), &mut gam);
            let r: Vec<f64> = (0..self.n).map(|k| derivative5(&channels[k], self.ds, i) + gam[k]).collect();
            out.push(scratch.norm(&r));
        }
        Ok(out)
    }

    /// Largest `|<w,w>_g - 1|` over all samples.
    pub fn unit_speed_error<M: MetricField + ?Sized>(&self, metric: &M) -> Result<f64> {
        let mut scratch = MetricScratch::new(self.n);
        let mut worst = 0.0f64;
        for i in 0..self.len() {
            scratch.load(metric, self.q(i), false)?;
            worst = worst.max((scratch.inner(self.w(i), self.w(i)) - 1.0).abs());
        }
        Ok(worst)
    }

    /// CSV `s,q1..qn,w1..wn`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s");
        for k in 1..=self.n {
            out.push_str(&format!(",q{k}"));
        }
        for k in 1..=self.n {
            out.push_str(&format!(",w{k}"));
        }
        out.push('\n');
        for i in 0..self.len() {
            let mut row = vec![self.s[i]];
            row.extend_from_slice(self.q(i));
            row.extend_from_slice(self.w(i));
            out.push_str(&csv_row(&row));
        }
        out
    }

    fn nearest_sample(&self, q: &[f64]) -> usize {
        let dist = |i: usize| -> f64 { self.q(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum() };
        let stride = 8;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        let mut i = 0;
        while i < self.len() {
            let d = dist(i);
            if d < best_d {
                best = i;
                best_d = d;
            }
            i += stride;
        }
        let lo = best.saturating_sub(stride);
        let hi = (best + stride).min(self.len() - 1);
        for j in lo..=hi {
            let d = dist(j);
            if d < best_d {
                best = j;
                best_d = d;
            }
        }
        best
    }
}

/// Quintic Hermite basis on `[0, 1]` (values, first, second derivatives)
/// for `(p0, p1, h v0, h v1, h^2 a0, h^2 a1)`.
fn quintic_hermite(t: f64) -> [[f64; 6]; 3] {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    [
        [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5),
            0.5 * (t3 - 2.0 * t4 + t5),
        ],
        [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4),
            0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4),
        ],
        [
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
            60.0 * t - 180.0 * t2 + 120.0 * t3,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
            0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3),
            0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3),
        ],
    ]
}

fn rot(v: &[f64]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Tubular coordinates around a planar geodesic,
/// `h(xi) = gamma(xi1) + xi2 * R gamma'(xi1)` with `R` the coordinate
/// quarter turn `[[0, -1], [1, 0]]`.
///
/// `R gamma'` is not metric-orthogonal to the curve in general; the chart
/// only has to be a local diffeomorphism.
#[derive(Debug, Clone)]
pub struct GeodesicChart {
    geodesic: GeodesicCurve,
    halfwidth: f64,
}

/// Builds the chart, shrinking `halfwidth` until `|det J| >= 0.1` holds at
/// every geodesic sample.
pub fn geodesic_chart(geodesic: GeodesicCurve, halfwidth: f64) -> Result<GeodesicChart> {
    if geodesic.dim() != 2 {
        return Err(Error::arg("geodesic charts are only defined for n = 2"));
    }
    if !(halfwidth > 0.0) {
        return Err(Error::arg("chart halfwidth must be positive"));
    }
    if geodesic.len() < 2 {
        return Err(Error::arg("chart needs at least two geodesic samples"));
    }
    let mut limit = halfwidth;
    for i in 0..geodesic.len() {
        let (w, a) = (geodesic.w(i), geodesic.a(i));
        let (rw, ra) = (rot(w), rot(a));
        // det[w + x R a, R w] = d0 + x d1
        let d0 = w[0] * rw[1] - w[1] * rw[0];
        let d1 = ra[0] * rw[1] - ra[1] * rw[0];
        if d0 < MIN_CHART_DET {
            return Err(Error::DegenerateJacobian(format!("det J = {d0} on the geodesic at s = {}", geodesic.s(i))));
        }
        if d1 != 0.0 {
            limit = limit.min(((MIN_CHART_DET - d0) / d1).abs());
        }
    }
    if !(limit > 0.0) {
        return Err(Error::DegenerateJacobian("no admissible transverse width".into()));
    }
    Ok(GeodesicChart {
        geodesic,
        halfwidth: limit,
    })
}

impl GeodesicChart {
    pub fn geodesic(&self) -> &GeodesicCurve {
        &self.geodesic
    }

    /// Admissible `|xi2|` after trimming.
    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn xi1_range(&self) -> (f64, f64) {
        self.geodesic.s_range()
    }

    pub fn contains(&self, xi: [f64; 2]) -> bool {
        let (lo, hi) = self.xi1_range();
        let eps = 1e-12;
        xi[0] >= lo - eps && xi[0] <= hi + eps && xi[1].abs() <= self.halfwidth + eps
    }

    /// `h(xi)` and `J = dh/dxi` as `[[dq1/dxi1, dq1/dxi2], [dq2/dxi1, dq2/dxi2]]`.
    pub fn forward_with_jacobian(&self, xi: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (g, g1, g2) = self.geodesic.eval(xi[0]);
        let (r1, r2) = (rot(&g1), rot(&g2));
        let q = [g[0] + xi[1] * r1[0], g[1] + xi[1] * r1[1]];
        let c0 = [g1[0] + xi[1] * r2[0], g1[1] + xi[1] * r2[1]];
        (q, [[c0[0], r1[0]], [c0[1], r1[1]]])
    }

    pub fn forward(&self, xi: [f64; 2]) -> [f64; 2] {
        self.forward_with_jacobian(xi).0
    }

    pub fn jacobian(&self, xi: [f64; 2]) -> [[f64; 2]; 2] {
        self.forward_with_jacobian(xi).1
    }

    /// CSV grid `xi1,xi2,q1,q2` at `resolution` spacing, anchored at zero.
    pub fn grid_csv(&self, resolution: f64) -> String {
        let (lo, hi) = self.xi1_range();
        let mut out = String::from("xi1,xi2,q1,q2\n");
        let i0 = (lo / resolution - 1e-9).ceil() as i64;
        let i1 = (hi / resolution + 1e-9).floor() as i64;
        let j1 = (self.halfwidth / resolution + 1e-9).floor() as i64;
        for i in i0..=i1 {
            for j in -j1..=j1 {
                let xi = [i as f64 * resolution, j as f64 * resolution];
                let q = self.forward(xi);
                out.push_str(&csv_row(&[xi[0], xi[1], q[0], q[1]]));
            }
        }
        out
    }
}

/// Newton solve of `h(xi) = q`, seeded at the nearest geodesic sample.
///
/// Converges to `|h(xi) - q| <= 1e-10` within 50 iterations or fails; a
/// solution outside the chart domain is reported as such.
pub fn chart_inverse(chart: &GeodesicChart, q: &[f64]) -> Result<[f64; 2]> {
    check_dim(2, q.len())?;
    let geo = &chart.geodesic;
    let k = geo.nearest_sample(q);
    let mut xi = [geo.s(k), 0.0];
    let (lo, hi) = chart.xi1_range();
    for _ in 0..50 {
        let (h, j) = chart.forward_with_jacobian(xi);
        let r = [h[0] - q[0], h[1] - q[1]];
        let res = r[0].hypot(r[1]);
        if res <= 1e-13 {
            break;
        }
        let step = solve2(j, r).ok_or_else(|| Error::DegenerateJacobian(format!("at xi = {xi:?}")))?;
        xi = [xi[0] - step[0], xi[1] - step[1]];
        // the interpolant is clamped outside the sampled range
        xi[0] = xi[0].clamp(lo - geo.ds(), hi + geo.ds());
        if step[0].abs().max(step[1].abs()) < 1e-15 {
            break;
        }
    }
    let h = chart.forward(xi);
    let res = (h[0] - q[0]).hypot(h[1] - q[1]);
    if !chart.contains(xi) {
        return Err(Error::OutsideDomain { point: q.to_vec() });
    }
    if !(res <= 1e-10) {
        return Err(Error::NotConverged(format!("chart inverse residual {res:.3e} at q = {q:?}")));
    }
    Ok(xi)
}

/// Speed profile `beta(s)` of motion along a geodesic with tangential
/// gradient magnitude `alpha(s)`: `1/2 beta^2 + c = int_0^s alpha`, with
/// `c = -E`.
pub struct SpeedLaw {
    alpha: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    pub c: f64,
    /// First zero of the radicand for `s < 0` and `s > 0`, if any within
    /// the searched range.
    pub turning_points: (Option<f64>, Option<f64>),
}

impl std::fmt::Debug for SpeedLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpeedLaw")
            .field("c", &self.c)
            .field("turning_points", &self.turning_points)
            .finish()
    }
}

impl SpeedLaw {
    /// `int_0^s alpha` by composite Simpson.
    pub fn integral(&self, s: f64) -> f64 {
        let n = ((s.abs() / 1e-3).ceil() as usize).max(16);
        simpson(&self.alpha, 0.0, s, n)
    }

    pub fn radicand(&self, s: f64) -> f64 {
        2.0 * (self.integral(s) - self.c)
    }

    /// `beta(s) >= 0` where real.
    pub fn beta(&self, s: f64) -> Option<f64> {
        let r = self.radicand(s);
        (r >= 0.0).then(|| r.sqrt())
    }

    pub fn alpha(&self, s: f64) -> f64 {
        (self.alpha)(s)
    }
}

/// Solves the speed law for energy-like constant `energy`, locating turning
/// points within `|s| <= s_max`.
pub fn speed_law_solve<F>(alpha: F, energy: f64, s_max: f64) -> Result<SpeedLaw>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    if !(energy >= 0.0) {
        return Err(Error::arg(format!("negative radicand at s = 0 (energy {energy})")));
    }
    let mut law = SpeedLaw {
        alpha: Box::new(alpha),
        c: -energy,
        turning_points: (None, None),
    };
    let step = (s_max / 2000.0).max(1e-6);
    let find = |sign: f64| -> Option<f64> {
        let mut prev = 0.0;
        let mut s = step;
        while s <= s_max + 1e-12 {
            if law.radicand(sign * s) < 0.0 {
                return bracketed_root(|x| law.radicand(sign * x), prev, s, 1e-14, 200).map(|r| sign * r);
            }
            prev = s;
            s += step;
        }
        None
    };
    let neg = find(-1.0);
    let pos = find(1.0);
    law.turning_points = (neg, pos);
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{DoublePendulumMetric, Euclidean};
    use std::f64::consts::FRAC_PI_4;

    fn design_geodesic() -> GeodesicCurve {
        let v0 = [(-FRAC_PI_4).cos(), (-FRAC_PI_4).sin()];
        GeodesicCurve::two_sided(&DoublePendulumMetric, &[0.0, 0.0], &v0, 2.0, 1e-3).unwrap()
    }

    #[test]
    fn straight_line_in_flat_space() {
        let g = shoot_geodesic(&Euclidean::new(2), &[0.0, 0.0], &[1.0, 0.0], 2.0, 0.01).unwrap();
        let end = g.q(g.len() - 1);
        assert!((end[0] - 2.0).abs() < 1e-12 && end[1].abs() < 1e-12);
        for i in 0..g.len() {
            assert!(g.q(i)[1].abs() < 1e-12);
        }
    }

    #[test]
    fn design_geodesic_is_unit_speed_and_curved() {
        let g = design_geodesic();
        assert!(g.unit_speed_error(&DoublePendulumMetric).unwrap() < 1e-8);
        assert!(g.geodesic_residuals(&DoublePendulumMetric).unwrap().iter().all(|r| *r < 1e-8));
        // departs from the coordinate straight line q2 = -q1
        let end = g.q(g.len() - 1);
        assert!((end[0] + end[1]).abs() > 1e-2);
    }

    #[test]
    fn reversal_traces_same_points() {
        let dp = DoublePendulumMetric;
        let v0 = [0.6, -0.3];
        let fwd = shoot_geodesic(&dp, &[0.1, 0.2], &v0, 1.0, 1e-3).unwrap();
        let end = fwd.q(fwd.len() - 1).to_vec();
        let wend: Vec<f64> = fwd.w(fwd.len() - 1).iter().map(|x| -x).collect();
        let back = shoot_geodesic(&dp, &end, &wend, 1.0, 1e-3).unwrap();
        let m = fwd.len();
        for i in 0..m {
            let a = fwd.q(i);
            let b = back.q(m - 1 - i);
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_direction_rejected() {
        assert!(matches!(
            shoot_geodesic(&Euclidean::new(2), &[0.0, 0.0], &[0.0, 0.0], 1.0, 0.1),
            Err(Error::ZeroTangent)
        ));
    }

    #[test]
    fn hermite_interpolant_matches_samples_and_derivatives() {
        let g = design_geodesic();
        let i = 1234;
        let (q, w, a) = g.eval(g.s(i));
        for k in 0..2 {
            assert!((q[k] - g.q(i)[k]).abs() < 1e-14);
            assert!((w[k] - g.w(i)[k]).abs() < 1e-12);
            assert!((a[k] - g.a(i)[k]).abs() < 1e-9);
        }
        let s = g.s(i) + 0.37e-3;
        let h = 1e-5;
        let (qp, _, _) = g.eval(s + h);
        let (qm, _, _) = g.eval(s - h);
        let (_, w, _) = g.eval(s);
        for k in 0..2 {
            assert!(((qp[k] - qm[k]) / (2.0 * h) - w[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_chart_for_flat_line() {
        let g = GeodesicCurve::two_sided(&Euclidean::new(2), &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.01).unwrap();
        let chart = geodesic_chart(g, 0.5).unwrap();
        let (q, j) = chart.forward_with_jacobian([0.3, -0.2]);
        assert!((q[0] - 0.3).abs() < 1e-14 && (q[1] + 0.2).abs() < 1e-14);
        assert!((j[0][0] - 1.0).abs() < 1e-14 && j[0][1].abs() < 1e-14 && j[1][0].abs() < 1e-14 && (j[1][1] - 1.0).abs() < 1e-14);
        let xi = chart_inverse(&chart, &[0.25, 0.1]).unwrap();
        assert!((xi[0] - 0.25).abs() < 1e-12 && (xi[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn design_chart_properties() {
        let chart = geodesic_chart(design_geodesic(), 0.3).unwrap();
        let j = chart.jacobian([0.0, 0.0]);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        assert!((det - 1.0).abs() < 1e-8, "{det}");
        let g = chart.geodesic();
        for i in (0..g.len()).step_by(97) {
            let q = chart.forward([g.s(i), 0.0]);
            assert!((q[0] - g.q(i)[0]).abs() < 1e-14 && (q[1] - g.q(i)[1]).abs() < 1e-14);
            let xi = chart_inverse(&chart, g.q(i)).unwrap();
            assert!((xi[0] - g.s(i)).abs() < 1e-10 && xi[1].abs() < 1e-10);
            // pushforward of (1, 0) on the geodesic is the tangent
            let j = chart.jacobian([g.s(i), 0.0]);
            assert!((j[0][0] - g.w(i)[0]).abs() < 1e-14 && (j[1][0] - g.w(i)[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_points_rejected() {
        let chart = geodesic_chart(design_geodesic(), 0.2).unwrap();
        assert!(matches!(chart_inverse(&chart, &[0.5, 0.5]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn speed_law_cases() {
        let free = speed_law_solve(|_| 0.0, 0.5, 3.0).unwrap();
        assert!((free.beta(1.7).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(free.turning_points, (None, None));

        let law = speed_law_solve(|s| -5.0 * s, 5.63, 3.0).unwrap();
        for s in [0.0f64, 0.3, 1.0, 1.4] {
            let exact = (2.0 * 5.63 - 5.0 * s * s).sqrt();
            assert!((law.beta(s).unwrap() - exact).abs() < 1e-12);
        }
        let tp = (11.26f64 / 5.0).sqrt();
        assert!((law.turning_points.1.unwrap() - tp).abs() < 1e-10);
        assert!((law.turning_points.0.unwrap() + tp).abs() < 1e-10);
        assert!((tp - 1.5006).abs() < 1e-4);
        let cubic = speed_law_solve(|s| s * s - 1.0, 0.8, 3.0).unwrap();
        assert!((cubic.beta(0.0).unwrap().powi(2) / 2.0 - 0.8).abs() < 1e-15);
        assert!(speed_law_solve(|s| s, -1.0, 1.0).is_err());
    }
}
