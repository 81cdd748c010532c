//! Potential design: given a planar geodesic, build a negative definite
//! potential whose gradient is tangent to it, so that the geodesic becomes a
//! strict normal mode.
//!
//! The construction works in the geodesic chart `(xi1, xi2)`. Covariant
//! force components are prescribed on the curve from a scalar profile
//! `alpha(xi1)`, extended off the curve so that the mixed partials agree by
//! construction, and integrated to a potential on a uniform grid.

use serde::{Deserialize, Serialize};

use crate::dynamics::PotentialField;
use crate::error::{check_dim, Error, Result};
use crate::geodesics::{chart_inverse, geodesic_chart, GeodesicChart, GeodesicCurve};
use crate::io::csv_row;
use crate::manifold::{split_with, MetricField, MetricScratch};
use crate::numerics::{cumulative_simpson, derivative5, lagrange4, solve2};

/// Default grid spacing in chart coordinates.
pub const DEFAULT_SPACING: f64 = 0.01;
/// Largest integrability residual accepted by [`integrate_potential`].
pub const MAX_INTEGRABILITY_RESIDUAL: f64 = 1e-5;

/// Polynomial `sum_k c[k] x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c)
    }

    /// `int_0^x p`.
    pub fn integral(&self, x: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (k, c)| acc * x + c / (k + 1) as f64)
            * x
    }
}

/// Inputs of the construction.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    /// Tangential force profile along the geodesic.
    pub alpha: Polynomial,
    /// Transverse stiffness profile `beta(xi2)`.
    pub beta: Polynomial,
    /// Half-width of the `xi1` interval on which the beta bound is checked.
    pub epsilon: f64,
    /// Grid spacing in chart coordinates.
    pub spacing: f64,
    pub chart: GeodesicChart,
}

/// Serializable description of a [`DesignSpec`], including the geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignParams {
    pub alpha: Polynomial,
    pub beta: Polynomial,
    pub epsilon: f64,
    pub spacing: f64,
    /// Geodesic base point, where the designed potential has its maximum.
    pub origin: Vec<f64>,
    /// Initial geodesic direction in coordinates (rescaled to unit metric norm).
    pub direction: Vec<f64>,
    /// Geodesic arc length on each side of the origin.
    pub half_length: f64,
    /// Requested transverse half-width; trimmed by the chart guard.
    pub halfwidth: f64,
    /// Geodesic shooting step.
    pub ds: f64,
}

impl Default for DesignParams {
    /// The double-pendulum instance: `alpha = -5 xi1`, `beta = -47.86`,
    /// geodesic through the origin at angle `-pi/4`.
    fn default() -> Self {
        let a = -std::f64::consts::FRAC_PI_4;
        Self {
            alpha: Polynomial(vec![0.0, -5.0]),
            beta: Polynomial::constant(-47.86),
            epsilon: 1.6,
            spacing: DEFAULT_SPACING,
            origin: vec![0.0, 0.0],
            direction: vec![a.cos(), a.sin()],
            half_length: 2.0,
            halfwidth: 0.5,
            ds: 1e-3,
        }
    }
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("spacing", self.spacing),
            ("half_length", self.half_length),
            ("halfwidth", self.halfwidth),
            ("ds", self.ds),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("design.{name} must be positive, got {v}")));
            }
        }
        if self.alpha.0.is_empty() || self.beta.0.is_empty() {
            return Err(Error::Config("design.alpha and design.beta need at least one coefficient".into()));
        }
        if self.origin.len() != 2 || self.direction.len() != 2 {
            return Err(Error::Config("design.origin and design.direction must have two entries".into()));
        }
        Ok(())
    }

    /// Shoots the geodesic, builds the chart and checks `alpha`.
    pub fn build<M: MetricField + ?Sized>(&self, metric: &M) -> Result<DesignSpec> {
        self.validate()?;
        let geo = GeodesicCurve::two_sided(metric, &self.origin, &self.direction, self.half_length, self.ds)?;
        let chart = geodesic_chart(geo, self.halfwidth)?;
        DesignSpec::new(self.alpha.clone(), self.beta.clone(), self.epsilon, self.spacing, chart)
    }
}

impl DesignSpec {
    /// Requires `alpha(0) = 0` (the maximum of `f` sits at the chart origin)
    /// and `alpha' < 0` on the grid range.
    pub fn new(alpha: Polynomial, beta: Polynomial, epsilon: f64, spacing: f64, chart: GeodesicChart) -> Result<Self> {
        if !(spacing > 0.0) || !(epsilon >= 0.0) {
            return Err(Error::arg("spacing must be positive and epsilon nonnegative"));
        }
        if alpha.eval(0.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!("alpha(0) = {} must vanish", alpha.eval(0.0))));
        }
        let spec = Self {
            alpha,
            beta,
            epsilon,
            spacing,
            chart,
        };
        for x in spec.xi1_nodes() {
            if x != 0.0 && !(spec.alpha.derivative(x) < 0.0) {
                return Err(Error::Precondition(format!("alpha must be decreasing, alpha'({x}) = {}", spec.alpha.derivative(x))));
            }
        }
        Ok(spec)
    }

    fn axis(&self, lo: f64, hi: f64) -> Vec<f64> {
        let i0 = (lo / self.spacing - 1e-9).ceil() as i64;
        let i1 = (hi / self.spacing + 1e-9).floor() as i64;
        (i0..=i1).map(|i| i as f64 * self.spacing).collect()
    }

    /// Grid nodes along the geodesic, symmetric about 0 where possible.
    pub fn xi1_nodes(&self) -> Vec<f64> {
        let (lo, hi) = self.chart.xi1_range();
        self.axis(lo, hi)
    }

    pub fn xi2_nodes(&self) -> Vec<f64> {
        let w = self.chart.halfwidth();
        self.axis(-w, w)
    }
}

/// Covariant force components on a uniform `(xi1, xi2)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicForceField {
    xi1: Vec<f64>,
    xi2: Vec<f64>,
    h: f64,
    /// Row-major `[i * xi2.len() + j]`.
    f1: Vec<f64>,
    f2: Vec<f64>,
}

impl GeodesicForceField {
    /// Samples `(F1, F2)` on the grid spanned by `xi1 x xi2` (uniform,
    /// common spacing).
    pub fn from_fn(xi1: Vec<f64>, xi2: Vec<f64>, f: impl Fn(f64, f64) -> [f64; 2]) -> Result<Self> {
        let h = uniform_spacing(&xi1)?;
        let h2 = uniform_spacing(&xi2)?;
        if (h - h2).abs() > 1e-12 * h {
            return Err(Error::arg("force grid axes must share one spacing"));
        }
        let mut f1 = Vec::with_capacity(xi1.len() * xi2.len());
        let mut f2 = Vec::with_capacity(xi1.len() * xi2.len());
        for &a in &xi1 {
            for &b in &xi2 {
                let v = f(a, b);
                f1.push(v[0]);
                f2.push(v[1]);
            }
        }
        Ok(Self { xi1, xi2, h, f1, f2 })
    }

    pub fn xi1(&self) -> &[f64] {
        &self.xi1
    }

    pub fn xi2(&self) -> &[f64] {
        &self.xi2
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        let k = i * self.xi2.len() + j;
        [self.f1[k], self.f2[k]]
    }

    fn row(&self, comp: usize, j: usize) -> Vec<f64> {
        let f = if comp == 0 { &self.f1 } else { &self.f2 };
        (0..self.xi1.len()).map(|i| f[i * self.xi2.len() + j]).collect()
    }

    fn column(&self, comp: usize, i: usize) -> &[f64] {
        let f = if comp == 0 { &self.f1 } else { &self.f2 };
        let m = self.xi2.len();
        &f[i * m..(i + 1) * m]
    }

    /// Index of the node at 0 on an axis.
    fn zero_index(axis: &[f64], h: f64) -> Result<usize> {
        axis.iter()
            .position(|x| x.abs() < 1e-9 * h)
            .ok_or_else(|| Error::Precondition("grid axis does not contain 0".into()))
    }

    /// Bicubic interpolation of `(F1, F2)` at `xi`.
    pub fn interpolate(&self, xi: [f64; 2]) -> Result<[f64; 2]> {
        let (pi, wi) = patch(&self.xi1, self.h, xi[0]).ok_or(Error::OutsideDomain { point: xi.to_vec() })?;
        let (pj, wj) = patch(&self.xi2, self.h, xi[1]).ok_or(Error::OutsideDomain { point: xi.to_vec() })?;
        let m = self.xi2.len();
        let mut out = [0.0; 2];
        for a in 0..4 {
            for b in 0..4 {
                let k = (pi + a) * m + pj + b;
                let w = wi[a] * wj[b];
                out[0] += w * self.f1[k];
                out[1] += w * self.f2[k];
            }
        }
        Ok(out)
    }

    /// CSV `xi1,xi2,q1,q2,F1,F2` at nodes that are multiples of `resolution`.
    pub fn to_csv(&self, chart: &GeodesicChart, resolution: f64) -> String {
        let stride = ((resolution / self.h).round() as usize).max(1);
        let mut out = String::from("xi1,xi2,q1,q2,F1,F2\n");
        for (i, &a) in self.xi1.iter().enumerate() {
            if !on_stride(a, self.h, stride) {
                continue;
            }
            for (j, &b) in self.xi2.iter().enumerate() {
                if !on_stride(b, self.h, stride) {
                    continue;
                }
                let q = chart.forward([a, b]);
                let f = self.at(i, j);
                out.push_str(&csv_row(&[a, b, q[0], q[1], f[0], f[1]]));
            }
        }
        out
    }
}

fn on_stride(x: f64, h: f64, stride: usize) -> bool {
    ((x / h).round() as i64).rem_euclid(stride as i64) == 0
}

fn uniform_spacing(axis: &[f64]) -> Result<f64> {
    if axis.len() < 5 {
        return Err(Error::Precondition("grid axes need at least 5 nodes".into()));
    }
    let h = axis[1] - axis[0];
    if !(h > 0.0) || axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::arg("grid axis must be uniform and increasing"));
    }
    Ok(h)
}

/// First node of the 4-point stencil around `x` and its Lagrange weights.
fn patch(axis: &[f64], h: f64, x: f64) -> Option<(usize, [f64; 4])> {
    let n = axis.len();
    let tol = 1e-12 * h.max(1.0);
    if n < 4 || !(x >= axis[0] - tol && x <= axis[n - 1] + tol) {
        return None;
    }
    let cell = (((x - axis[0]) / h).floor() as usize).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    let t = (x - axis[start + 1]) / h;
    Some((start, lagrange4(t).0))
}

/// Covariant force components on the geodesic,
/// `F_i = alpha(xi1) (dh^j/dxi^i) g_jk dgamma^k/dxi1` at `xi2 = 0`.
///
/// Returns `[F1, F2]` at each requested `xi1`.
pub fn on_geodesic_force<M: MetricField + ?Sized>(
    metric: &M,
    chart: &GeodesicChart,
    alpha: impl Fn(f64) -> f64,
    xi1: &[f64],
) -> Result<Vec<[f64; 2]>> {
    check_dim(2, metric.dim())?;
    let mut scratch = MetricScratch::new(2);
    xi1.iter()
        .map(|&s| {
            if !chart.contains([s, 0.0]) {
                return Err(Error::OutsideDomain { point: vec![s, 0.0] });
            }
            let (q, j) = chart.forward_with_jacobian([s, 0.0]);
            let w = [j[0][0], j[1][0]];
            scratch.load(metric, &q, false)?;
            let a = alpha(s);
            let f1 = a * scratch.inner(&w, &w);
            let f2 = a * scratch.inner(&[j[0][1], j[1][1]], &w);
            Ok([f1, f2])
        })
        .collect()
}

/// Extends on-geodesic forces to the grid `xi1 x xi2`:
/// `F1 = F1(xi1, 0) + xi2 dF2(xi1, 0)/dxi1`,
/// `F2 = F2(xi1, 0) + int_0^xi2 beta`.
///
/// The `xi1` derivative is the fourth-order five-point stencil.
pub fn extend_force_field(on_geo: &[[f64; 2]], beta: &Polynomial, xi1: &[f64], xi2: &[f64]) -> Result<GeodesicForceField> {
    if on_geo.len() != xi1.len() {
        return Err(Error::DimensionMismatch {
            expected: xi1.len(),
            got: on_geo.len(),
        });
    }
    let h = uniform_spacing(xi1)?;
    let c: Vec<f64> = on_geo.iter().map(|f| f[1]).collect();
    let dc: Vec<f64> = (0..c.len()).map(|i| derivative5(&c, h, i)).collect();
    let index: std::collections::HashMap<u64, usize> = xi1.iter().enumerate().map(|(i, x)| (x.to_bits(), i)).collect();
    GeodesicForceField::from_fn(xi1.to_vec(), xi2.to_vec(), |a, b| {
        let i = index[&a.to_bits()];
        [on_geo[i][0] + b * dc[i], on_geo[i][1] + beta.integral(b)]
    })
}

/// Largest `|dF1/dxi2 - dF2/dxi1|` over interior nodes (two nodes away from
/// every edge), with five-point derivatives.
pub fn integrability_residual(field: &GeodesicForceField) -> Result<f64> {
    let (n1, n2) = (field.xi1.len(), field.xi2.len());
    if n1 < 5 || n2 < 5 {
        return Err(Error::Precondition("integrability residual needs at least 5 nodes per axis".into()));
    }
    let h = field.h;
    let mut worst = 0.0f64;
    let rows: Vec<Vec<f64>> = (0..n2).map(|j| field.row(1, j)).collect();
    for i in 2..n1 - 2 {
        let col = field.column(0, i);
        for j in 2..n2 - 2 {
            let d1 = derivative5(col, h, j);
            let d2 = derivative5(&rows[j], h, i);
            worst = worst.max((d1 - d2).abs());
        }
    }
    Ok(worst)
}

/// Per-row evaluation of the transverse stiffness bound
/// `beta(xi2) < inf_{|xi1| <= eps} (dF2(xi1,0)/dxi1)^2 / (dF1(xi1,xi2)/dxi1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBound {
    pub xi2: Vec<f64>,
    /// Infimum per `xi2` row; `None` when every cell in the row is undefined.
    pub bound: Vec<Option<f64>>,
    /// `(xi1, xi2)` cells where `dF1/dxi1` is not strictly negative.
    pub undefined: Vec<[f64; 2]>,
    /// Smallest bound over the defined rows.
    pub overall: Option<f64>,
}

impl BetaBound {
    /// `min(bound - beta)` over defined rows; negative means violation.
    pub fn margin(&self, beta: &Polynomial) -> Option<f64> {
        self.xi2
            .iter()
            .zip(&self.bound)
            .filter_map(|(x, b)| b.map(|b| b - beta.eval(*x)))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    pub fn satisfied_by(&self, beta: &Polynomial) -> bool {
        self.margin(beta).is_some_and(|m| m > 0.0)
    }

    /// Largest `w` such that every row with `|xi2| <= w` is defined and
    /// satisfied by `beta`; 0 when the centre row already fails.
    pub fn validated_halfwidth(&self, beta: &Polynomial) -> f64 {
        let ok = |x: f64, b: &Option<f64>| b.is_some_and(|b| beta.eval(x) < b);
        let first_bad = self
            .xi2
            .iter()
            .zip(&self.bound)
            .filter(|(x, b)| !ok(**x, b))
            .map(|(x, _)| x.abs())
            .fold(f64::INFINITY, f64::min);
        self.xi2.iter().map(|x| x.abs()).filter(|ax| *ax < first_bad).fold(0.0, f64::max)
    }
}

pub fn beta_bound(field: &GeodesicForceField, epsilon: f64) -> Result<BetaBound> {
    let h = field.h;
    let j0 = GeodesicForceField::zero_index(&field.xi2, h)?;
    let idx: Vec<usize> = (0..field.xi1.len())
        .filter(|&i| field.xi1[i].abs() <= epsilon + 1e-9 * h)
        .collect();
    if idx.is_empty() {
        return Err(Error::Precondition(format!("no grid nodes within |xi1| <= {epsilon}")));
    }
    let c = field.row(1, j0);
    let mut out = BetaBound {
        xi2: field.xi2.clone(),
        bound: Vec::with_capacity(field.xi2.len()),
        undefined: Vec::new(),
        overall: None,
    };
    for (j, &b) in field.xi2.iter().enumerate() {
        let f1 = field.row(0, j);
        let mut inf: Option<f64> = None;
        for &i in &idx {
            let den = derivative5(&f1, h, i);
            if !(den < -1e-12) {
                out.undefined.push([field.xi1[i], b]);
                continue;
            }
            let num = derivative5(&c, h, i);
            let r = num * num / den;
            inf = Some(inf.map_or(r, |m: f64| m.min(r)));
        }
        out.bound.push(inf);
    }
    out.overall = out.bound.iter().flatten().copied().reduce(f64::min);
    Ok(out)
}

/// Potential on the chart grid with its force field; usable as a
/// [`PotentialField`] in the original coordinates.
#[derive(Debug, Clone)]
pub struct DesignedPotential {
    chart: GeodesicChart,
    field: GeodesicForceField,
    /// Row-major like the force components.
    f: Vec<f64>,
}

fn integrate_l_path(field: &GeodesicForceField, xi1_first: bool) -> Result<Vec<f64>> {
    let (n1, n2, h) = (field.xi1.len(), field.xi2.len(), field.h);
    let i0 = GeodesicForceField::zero_index(&field.xi1, h)?;
    let j0 = GeodesicForceField::zero_index(&field.xi2, h)?;
    // integral from the zero node outward in both directions
    let outward = |vals: &[f64], zero: usize| -> Vec<f64> {
        let mut out = vec![0.0; vals.len()];
        let fwd = cumulative_simpson(&vals[zero..], h);
        out[zero..].copy_from_slice(&fwd);
        let back: Vec<f64> = vals[..=zero].iter().rev().copied().collect();
        let bwd = cumulative_simpson(&back, -h);
        for (k, v) in bwd.iter().enumerate() {
            out[zero - k] = *v;
        }
        out
    };
    let mut f = vec![0.0; n1 * n2];
    if xi1_first {
        let base = outward(&field.row(0, j0), i0);
        for i in 0..n1 {
            let up = outward(field.column(1, i), j0);
            for j in 0..n2 {
                f[i * n2 + j] = base[i] + up[j];
            }
        }
    } else {
        let base = outward(field.column(1, i0), j0);
        for j in 0..n2 {
            let along = outward(&field.row(0, j), i0);
            for i in 0..n1 {
                f[i * n2 + j] = base[j] + along[i];
            }
        }
    }
    Ok(f)
}

/// Integrates the force field along the L-shaped path `(0,0) -> (xi1,0) ->
/// (xi1,xi2)` with cumulative Simpson quadrature.
pub fn integrate_potential(field: &GeodesicForceField, chart: &GeodesicChart) -> Result<DesignedPotential> {
    let r = integrability_residual(field)?;
    if !(r <= MAX_INTEGRABILITY_RESIDUAL) {
        return Err(Error::Precondition(format!("integrability residual {r:.3e} exceeds {MAX_INTEGRABILITY_RESIDUAL:.0e}")));
    }
    let f = integrate_l_path(field, true)?;
    Ok(DesignedPotential {
        chart: chart.clone(),
        field: field.clone(),
        f,
    })
}

/// Largest difference between the two L-shaped integration paths.
pub fn path_difference(field: &GeodesicForceField) -> Result<f64> {
    let a = integrate_l_path(field, true)?;
    let b = integrate_l_path(field, false)?;
    Ok(a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
}

impl DesignedPotential {
    pub fn chart(&self) -> &GeodesicChart {
        &self.chart
    }

    pub fn force_field(&self) -> &GeodesicForceField {
        &self.field
    }

    /// Grid value at node `(i, j)`.
    pub fn node_value(&self, i: usize, j: usize) -> f64 {
        self.f[i * self.field.xi2.len() + j]
    }

    /// Bicubic interpolation of `f` in chart coordinates.
    pub fn value_xi(&self, xi: [f64; 2]) -> Result<f64> {
        let h = self.field.h;
        let (pi, wi) = patch(&self.field.xi1, h, xi[0]).ok_or(Error::OutsideDomain { point: xi.to_vec() })?;
        let (pj, wj) = patch(&self.field.xi2, h, xi[1]).ok_or(Error::OutsideDomain { point: xi.to_vec() })?;
        let m = self.field.xi2.len();
        let mut v = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                v += wi[a] * wj[b] * self.f[(pi + a) * m + pj + b];
            }
        }
        Ok(v)
    }

    /// CSV `xi1,xi2,f,q1,q2` at nodes that are multiples of `resolution`.
    pub fn grid_csv(&self, resolution: f64) -> String {
        let h = self.field.h;
        let stride = ((resolution / h).round() as usize).max(1);
        let mut out = String::from("xi1,xi2,f,q1,q2\n");
        for (i, &a) in self.field.xi1.iter().enumerate() {
            if !on_stride(a, h, stride) {
                continue;
            }
            for (j, &b) in self.field.xi2.iter().enumerate() {
                if !on_stride(b, h, stride) {
                    continue;
                }
                let q = self.chart.forward([a, b]);
                out.push_str(&csv_row(&[a, b, self.node_value(i, j), q[0], q[1]]));
            }
        }
        out
    }
}

impl PotentialField for DesignedPotential {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, q: &[f64]) -> Result<f64> {
        let xi = chart_inverse(&self.chart, q)?;
        self.value_xi(xi).map_err(|_| Error::OutsideDomain { point: q.to_vec() })
    }

    /// `df_q = J^{-T} F(xi)`.
    fn differential_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(2, out.len())?;
        let xi = chart_inverse(&self.chart, q)?;
        let f = self.field.interpolate(xi).map_err(|_| Error::OutsideDomain { point: q.to_vec() })?;
        let j = self.chart.jacobian(xi);
        let jt = [[j[0][0], j[1][0]], [j[0][1], j[1][1]]];
        let d = solve2(jt, f).ok_or_else(|| Error::DegenerateJacobian(format!("at xi = {xi:?}")))?;
        out.copy_from_slice(&d);
        Ok(())
    }
}

/// The chart-composed potential as a [`PotentialField`] over `q`.
pub fn designed_potential_in_q(dp: &DesignedPotential) -> &dyn PotentialField {
    dp
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefinitenessReport {
    pub pass: bool,
    /// Sampled point with the largest `f(q) + tol |q - q*|^2`.
    pub worst_point: Option<Vec<f64>>,
    pub worst_violation: f64,
    /// Sampled point with the largest `f`.
    pub maximizer: Vec<f64>,
    pub evaluated: usize,
    /// Grid points where `f` is undefined (outside the chart).
    pub skipped: usize,
}

/// Rectangular sampling grid in `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub points_per_axis: usize,
}

impl SampleBox {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let n = self.points_per_axis.max(2);
        let mut out = Vec::with_capacity(n * n);
        for a in 0..n {
            for b in 0..n {
                let t = [a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64];
                out.push([
                    self.lo[0] + t[0] * (self.hi[0] - self.lo[0]),
                    self.lo[1] + t[1] * (self.hi[1] - self.lo[1]),
                ]);
            }
        }
        out
    }
}

/// Samples `f` on `domain` and checks `f(q) < -tol |q - q*|^2` away from
/// `equilibrium`, and that no sample exceeds `f(q*)`.
pub fn definiteness_check<P: PotentialField + ?Sized>(
    potential: &P,
    equilibrium: &[f64],
    domain: &SampleBox,
    tol: f64,
) -> Result<DefinitenessReport> {
    check_dim(2, potential.dim())?;
    let f0 = potential.value(equilibrium)?;
    let mut report = DefinitenessReport {
        pass: true,
        worst_point: None,
        worst_violation: f64::NEG_INFINITY,
        maximizer: equilibrium.to_vec(),
        evaluated: 0,
        skipped: 0,
    };
    let mut best = f0;
    for p in domain.points() {
        let d2 = (p[0] - equilibrium[0]).powi(2) + (p[1] - equilibrium[1]).powi(2);
        let f = match potential.value(&p) {
            Ok(f) => f,
            Err(Error::OutsideDomain { .. }) | Err(Error::NotConverged(_)) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        report.evaluated += 1;
        if f > best {
            best = f;
            report.maximizer = p.to_vec();
        }
        if d2 < 1e-24 {
            continue;
        }
        let v = f - f0 + tol * d2;
        if v > report.worst_violation {
            report.worst_violation = v;
            report.worst_point = Some(p.to_vec());
        }
        if v >= 0.0 {
            report.pass = false;
        }
    }
    Ok(report)
}

/// Tangency and geodesic residuals of a potential along the chart's
/// geodesic (interior samples, every `stride`-th).
pub fn tangency_on_geodesic<M, P>(metric: &M, potential: &P, chart: &GeodesicChart, xi1_max: f64) -> Result<f64>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let geo = chart.geodesic();
    let mut scratch = MetricScratch::new(2);
    let mut df = [0.0; 2];
    let mut grad = [0.0; 2];
    let mut worst = 0.0f64;
    for i in 0..geo.len() {
        if geo.s(i).abs() > xi1_max {
            continue;
        }
        let q = geo.q(i);
        potential.differential_into(q, &mut df)?;
        scratch.load(metric, q, false)?;
        scratch.raise(&df, &mut grad);
        let (_, perp) = split_with(&scratch, &grad, geo.w(i))?;
        worst = worst.max(scratch.norm(&perp));
    }
    Ok(worst)
}

/// Everything produced by [`design`].
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: DesignSpec,
    pub potential: DesignedPotential,
    pub integrability_residual: f64,
    pub path_difference: f64,
    pub beta_bound: BetaBound,
}

/// Certification summary of a design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certification {
    pub integrability_residual: f64,
    pub path_difference: f64,
    pub beta_bound: Option<f64>,
    pub beta_margin: Option<f64>,
    pub beta_bound_satisfied: bool,
    /// Symmetric `|xi2|` band on which the bound holds for every row.
    pub beta_validated_halfwidth: f64,
    pub undefined_bound_cells: usize,
    pub chart_halfwidth: f64,
    pub definiteness: DefinitenessReport,
    pub max_tangency_residual: f64,
}

/// Runs the full construction: forces on the geodesic, extension,
/// integrability, beta bound and potential.
pub fn design<M: MetricField + ?Sized>(metric: &M, spec: DesignSpec) -> Result<Design> {
    let xi1 = spec.xi1_nodes();
    let xi2 = spec.xi2_nodes();
    let on_geo = on_geodesic_force(metric, &spec.chart, |s| spec.alpha.eval(s), &xi1)?;
    let field = extend_force_field(&on_geo, &spec.beta, &xi1, &xi2)?;
    let integrability = integrability_residual(&field)?;
    let bound = beta_bound(&field, spec.epsilon)?;
    let paths = path_difference(&field)?;
    let potential = integrate_potential(&field, &spec.chart)?;
    Ok(Design {
        spec,
        potential,
        integrability_residual: integrability,
        path_difference: paths,
        beta_bound: bound,
    })
}

impl Design {
    /// Box around the equilibrium covering the chart's `xi1 in [-eps, eps]`
    /// core.
    pub fn default_box(&self) -> SampleBox {
        let e = self.spec.epsilon;
        let g = self.spec.chart.geodesic();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for i in 0..g.len() {
            if g.s(i).abs() <= e {
                for k in 0..2 {
                    lo[k] = lo[k].min(g.q(i)[k]);
                    hi[k] = hi[k].max(g.q(i)[k]);
                }
            }
        }
        SampleBox {
            lo,
            hi,
            points_per_axis: 41,
        }
    }

    pub fn certify<M: MetricField + ?Sized>(&self, metric: &M, domain: &SampleBox, definiteness_tol: f64) -> Result<Certification> {
        let origin = self.spec.chart.forward([0.0, 0.0]);
        let definiteness = definiteness_check(&self.potential, &origin, domain, definiteness_tol)?;
        let tangency = tangency_on_geodesic(metric, &self.potential, &self.spec.chart, self.spec.epsilon)?;
        let margin = self.beta_bound.margin(&self.spec.beta);
        Ok(Certification {
            integrability_residual: self.integrability_residual,
            path_difference: self.path_difference,
            beta_bound: self.beta_bound.overall,
            beta_margin: margin,
            beta_bound_satisfied: self.beta_bound.satisfied_by(&self.spec.beta),
            beta_validated_halfwidth: self.beta_bound.validated_halfwidth(&self.spec.beta),
            undefined_bound_cells: self.beta_bound.undefined.len(),
            chart_halfwidth: self.spec.chart.halfwidth(),
            definiteness,
            max_tangency_residual: tangency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadraticPotential;
    use crate::geodesics::shoot_geodesic;
    use crate::manifold::{DoublePendulumMetric, Euclidean};

    fn axis(n: i64, h: f64) -> Vec<f64> {
        (-n..=n).map(|i| i as f64 * h).collect()
    }

    fn flat_chart() -> GeodesicChart {
        let g = GeodesicCurve::two_sided(&Euclidean::new(2), &[0.0, 0.0], &[1.0, 0.0], 1.0, 0.01).unwrap();
        geodesic_chart(g, 0.5).unwrap()
    }

    #[test]
    fn polynomial_ops() {
        let p = Polynomial(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        assert_eq!(p.derivative(2.0), -2.0 + 12.0);
        assert!((p.integral(2.0) - (2.0 - 4.0 + 8.0)).abs() < 1e-14);
    }

    #[test]
    fn flat_on_geodesic_force() {
        let chart = flat_chart();
        let xs = axis(50, 0.01);
        let f = on_geodesic_force(&Euclidean::new(2), &chart, |s| -5.0 * s, &xs).unwrap();
        for (x, v) in xs.iter().zip(&f) {
            assert!((v[0] + 5.0 * x).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        let zero = on_geodesic_force(&Euclidean::new(2), &chart, |_| 0.0, &xs).unwrap();
        assert!(zero.iter().all(|v| v[0] == 0.0 && v[1] == 0.0));
    }

    #[test]
    fn residual_of_simple_fields() {
        let rot = GeodesicForceField::from_fn(axis(10, 0.1), axis(10, 0.1), |a, b| [-b, a]).unwrap();
        assert!((integrability_residual(&rot).unwrap() - 2.0).abs() < 1e-12);
        let c = GeodesicForceField::from_fn(axis(10, 0.1), axis(10, 0.1), |_, _| [1.0, -3.0]).unwrap();
        assert_eq!(integrability_residual(&c).unwrap(), 0.0);
    }

    #[test]
    fn exact_gradient_recovers_quadratic() {
        let k = 3.0;
        let field = GeodesicForceField::from_fn(axis(40, 0.01), axis(30, 0.01), |a, b| [-k * a, -k * b]).unwrap();
        let f = integrate_l_path(&field, true).unwrap();
        let m = field.xi2.len();
        for (i, a) in field.xi1.iter().enumerate() {
            for (j, b) in field.xi2.iter().enumerate() {
                assert!((f[i * m + j] + 0.5 * k * (a * a + b * b)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn beta_bound_flags_flat_denominator() {
        let field = GeodesicForceField::from_fn(axis(10, 0.1), axis(5, 0.1), |_, _| [0.0, 0.0]).unwrap();
        let b = beta_bound(&field, 0.0).unwrap();
        assert!(b.overall.is_none());
        assert_eq!(b.undefined.len(), field.xi2.len());
        let lin = GeodesicForceField::from_fn(axis(10, 0.1), axis(5, 0.1), |a, _| [-a, 1.0]).unwrap();
        let b = beta_bound(&lin, 0.5).unwrap();
        assert_eq!(b.overall, Some(0.0));
        assert!(b.satisfied_by(&Polynomial::constant(-1.0)));
        assert!((b.validated_halfwidth(&Polynomial::constant(-1.0)) - 0.5).abs() < 1e-12);
        // beta = xi2 - 0.25 crosses the zero bound between rows 0.2 and 0.3
        assert!((b.validated_halfwidth(&Polynomial(vec![-0.25, 1.0])) - 0.2).abs() < 1e-12);
        assert_eq!(b.validated_halfwidth(&Polynomial::constant(1.0)), 0.0);
    }

    #[test]
    fn definiteness_of_simple_potentials() {
        let bx = SampleBox { lo: [-1.0, -1.0], hi: [1.0, 1.0], points_per_axis: 21 };
        let good = QuadraticPotential::new(vec![1.0, 1.0]);
        assert!(definiteness_check(&good, &[0.0, 0.0], &bx, 1e-3).unwrap().pass);
        let bad = QuadraticPotential::new(vec![2.0, 0.0]);
        let r = definiteness_check(&bad, &[0.0, 0.0], &bx, 1e-3).unwrap();
        assert!(!r.pass);
        assert_eq!(r.worst_point.unwrap()[0], 0.0);
    }

    #[test]
    fn design_rejects_increasing_alpha() {
        let g = shoot_geodesic(&DoublePendulumMetric, &[0.0, 0.0], &[1.0, -1.0], 0.5, 1e-3).unwrap();
        let chart = geodesic_chart(g, 0.2).unwrap();
        assert!(DesignSpec::new(Polynomial(vec![0.0, 1.0]), Polynomial::constant(-1.0), 0.1, 0.01, chart.clone()).is_err());
        assert!(DesignSpec::new(Polynomial(vec![1.0, -1.0]), Polynomial::constant(-1.0), 0.1, 0.01, chart).is_err());
    }
}
