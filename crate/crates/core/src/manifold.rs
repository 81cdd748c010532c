//! Riemannian structure in a single coordinate chart.
//!
//! Points are coordinate slices `q` of length `n`; tangent vectors are
//! contravariant component slices based at the point they are evaluated
//! with. All projections and norms use the metric inner product, never the
//! coordinate dot product.

use nalgebra::DMatrix;

use crate::dynamics::PotentialField;
use crate::error::{check_dim, Error, Result};
use crate::numerics::{cholesky_in_place, cholesky_solve, lagrange4};

/// Central finite-difference step used for metric partials.
pub const METRIC_FD_STEP: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-12;

/// A field of symmetric positive-definite inner products on a chart.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;

    /// Row-major components `g_ij` at `q`.
    fn components_into(&self, q: &[f64], out: &mut [f64]) -> Result<()>;

    /// Partials laid out as `out[k*n*n + i*n + j] = dg_ij/dx^k`.
    ///
    /// The default uses central differences with [`METRIC_FD_STEP`].
    fn partials_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        finite_difference_partials(self, q, out)
    }

    fn has_analytic_partials(&self) -> bool {
        false
    }
}

/// Central-difference metric partials, independent of any analytic override.
pub fn finite_difference_partials<M: MetricField + ?Sized>(metric: &M, q: &[f64], out: &mut [f64]) -> Result<()> {
    let n = metric.dim();
    let nn = n * n;
    let mut qp = q.to_vec();
    let mut gp = vec![0.0; nn];
    let mut gm = vec![0.0; nn];
    for k in 0..n {
        qp[k] = q[k] + METRIC_FD_STEP;
        metric.components_into(&qp, &mut gp)?;
        qp[k] = q[k] - METRIC_FD_STEP;
        metric.components_into(&qp, &mut gm)?;
        qp[k] = q[k];
        for idx in 0..nn {
            out[k * nn + idx] = (gp[idx] - gm[idx]) / (2.0 * METRIC_FD_STEP);
        }
    }
    Ok(())
}

/// Wraps a metric and forces finite-difference partials.
pub struct FiniteDifferenceMetric<'a, M: MetricField + ?Sized>(pub &'a M);

impl<M: MetricField + ?Sized> MetricField for FiniteDifferenceMetric<'_, M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn components_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.0.components_into(q, out)
    }
}

/// Flat metric `g = I`.
#[derive(Debug, Clone, Copy)]
pub struct Euclidean {
    pub n: usize,
}

impl Euclidean {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.n
    }
    fn components_into(&self, _q: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            out[i * self.n + i] = 1.0;
        }
        Ok(())
    }
    fn partials_into(&self, _q: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
    fn has_analytic_partials(&self) -> bool {
        true
    }
}

/// Any constant symmetric positive-definite metric.
#[derive(Debug, Clone)]
pub struct ConstantMetric {
    n: usize,
    g: Vec<f64>,
}

impl ConstantMetric {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        check_dim(n, g.ncols())?;
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                flat[i * n + j] = g[(i, j)];
            }
        }
        let mut chol = flat.clone();
        if !is_symmetric(&flat, n) || !cholesky_in_place(&mut chol, n) {
            return Err(Error::InvalidMetric { point: vec![] });
        }
        Ok(Self { n, g: flat })
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.n
    }
    fn components_into(&self, _q: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.g);
        Ok(())
    }
    fn partials_into(&self, _q: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        Ok(())
    }
    fn has_analytic_partials(&self) -> bool {
        true
    }
}

/// Inertia tensor of the planar double pendulum with unit lengths and unit
/// tip masses, in absolute/relative joint angles:
/// `g11 = 3 + 2 cos q2`, `g12 = 1 + cos q2`, `g22 = 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoublePendulumMetric;

impl MetricField for DoublePendulumMetric {
    fn dim(&self) -> usize {
        2
    }
    fn components_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(2, q.len())?;
        let c = q[1].cos();
        out[0] = 3.0 + 2.0 * c;
        out[1] = 1.0 + c;
        out[2] = 1.0 + c;
        out[3] = 1.0;
        Ok(())
    }
    fn partials_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(2, q.len())?;
        let s = q[1].sin();
        out[..4].iter_mut().for_each(|v| *v = 0.0);
        out[4] = -2.0 * s;
        out[5] = -s;
        out[6] = -s;
        out[7] = 0.0;
        Ok(())
    }
    fn has_analytic_partials(&self) -> bool {
        true
    }
}

/// Two-dimensional metric tabulated on a rectilinear grid and interpolated
/// with local cubic Lagrange patches.
///
/// Partials are the exact derivatives of the interpolant.
#[derive(Debug, Clone)]
pub struct GridMetric {
    x: Vec<f64>,
    y: Vec<f64>,
    /// `[g11, g12, g22]` per node, `x`-major.
    values: Vec<[f64; 3]>,
}

impl GridMetric {
    /// Builds the metric from unordered rows `(q1, q2, g11, g12, g22)`.
    pub fn from_rows(rows: &[[f64; 5]]) -> Result<Self> {
        let mut x: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let mut y: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        for v in [&mut x, &mut y] {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.dedup();
        }
        if x.len() < 4 || y.len() < 4 {
            return Err(Error::Config("metric grid needs at least 4 nodes per axis".into()));
        }
        if x.len() * y.len() != rows.len() {
            return Err(Error::Config("metric grid is not a full rectilinear grid".into()));
        }
        for axis in [&x, &y] {
            let h = axis[1] - axis[0];
            if axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
                return Err(Error::Config("metric grid spacing must be uniform per axis".into()));
            }
        }
        let mut values = vec![[f64::NAN; 3]; rows.len()];
        for r in rows {
            let i = x.binary_search_by(|v| v.partial_cmp(&r[0]).unwrap()).unwrap();
            let j = y.binary_search_by(|v| v.partial_cmp(&r[1]).unwrap()).unwrap();
            let mut chol = [r[2], r[3], r[3], r[4]];
            if !cholesky_in_place(&mut chol, 2) {
                return Err(Error::InvalidMetric { point: vec![r[0], r[1]] });
            }
            values[i * y.len() + j] = [r[2], r[3], r[4]];
        }
        if values.iter().any(|v| v[0].is_nan()) {
            return Err(Error::Config("metric grid has duplicate nodes".into()));
        }
        Ok(Self { x, y, values })
    }

    /// Parses CSV text with columns `q1,q2,g11,g12,g22`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows: Vec<[f64; 5]> = crate::io::read_columns(text, &["q1", "q2", "g11", "g12", "g22"])?
            .into_iter()
            .map(|r| [r[0], r[1], r[2], r[3], r[4]])
            .collect();
        Self::from_rows(&rows)
    }

    fn locate(axis: &[f64], t: f64) -> Option<(usize, f64, f64)> {
        let n = axis.len();
        if !(t >= axis[0] && t <= axis[n - 1]) {
            return None;
        }
        let cell = match axis.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        // stencil start so that nodes base..base+3 surround the cell
        let base = cell.saturating_sub(1).min(n - 4);
        let h = axis[cell + 1] - axis[cell];
        // local coordinate relative to node base+1 in units of h
        let u = (t - axis[base + 1]) / h;
        Some((base, u, h))
    }

    fn interpolate(&self, q: &[f64]) -> Result<([f64; 3], [[f64; 3]; 2])> {
        let (bx, ux, hx) = Self::locate(&self.x, q[0]).ok_or_else(|| Error::OutsideDomain { point: q.to_vec() })?;
        let (by, uy, hy) = Self::locate(&self.y, q[1]).ok_or_else(|| Error::OutsideDomain { point: q.to_vec() })?;
        let (wx, dwx) = lagrange4(ux);
        let (wy, dwy) = lagrange4(uy);
        let mut v = [0.0; 3];
        let mut d = [[0.0; 3]; 2];
        for a in 0..4 {
            for b in 0..4 {
                let node = &self.values[(bx + a) * self.y.len() + by + b];
                for c in 0..3 {
                    v[c] += wx[a] * wy[b] * node[c];
                    d[0][c] += dwx[a] / hx * wy[b] * node[c];
                    d[1][c] += wx[a] * dwy[b] / hy * node[c];
                }
            }
        }
        Ok((v, d))
    }
}

impl MetricField for GridMetric {
    fn dim(&self) -> usize {
        2
    }
    fn components_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(2, q.len())?;
        let (v, _) = self.interpolate(q)?;
        out[0] = v[0];
        out[1] = v[1];
        out[2] = v[1];
        out[3] = v[2];
        Ok(())
    }
    fn partials_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(2, q.len())?;
        let (_, d) = self.interpolate(q)?;
        for k in 0..2 {
            out[k * 4] = d[k][0];
            out[k * 4 + 1] = d[k][1];
            out[k * 4 + 2] = d[k][1];
            out[k * 4 + 3] = d[k][2];
        }
        Ok(())
    }
    fn has_analytic_partials(&self) -> bool {
        true
    }
}

fn is_symmetric(g: &[f64], n: usize) -> bool {
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..n).all(|i| (0..i).all(|j| (g[i * n + j] - g[j * n + i]).abs() <= SYMMETRY_TOL * scale))
}

/// Reusable buffers holding the metric, its Cholesky factor and partials at
/// one point. Every hot loop (integration, shooting) owns one of these.
#[derive(Debug, Clone)]
pub struct MetricScratch {
    n: usize,
    pub(crate) g: Vec<f64>,
    chol: Vec<f64>,
    pub(crate) dg: Vec<f64>,
    tmp: Vec<f64>,
}

impl MetricScratch {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            g: vec![0.0; n * n],
            chol: vec![0.0; n * n],
            dg: vec![0.0; n * n * n],
            tmp: vec![0.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Evaluates and factors the metric at `q`; partials only if asked.
    pub fn load<M: MetricField + ?Sized>(&mut self, metric: &M, q: &[f64], with_partials: bool) -> Result<()> {
        check_dim(self.n, q.len())?;
        metric.components_into(q, &mut self.g)?;
        if self.g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("metric at {q:?}")));
        }
        self.chol.copy_from_slice(&self.g);
        if !is_symmetric(&self.g, self.n) || !cholesky_in_place(&mut self.chol, self.n) {
            return Err(Error::InvalidMetric { point: q.to_vec() });
        }
        if with_partials {
            metric.partials_into(q, &mut self.dg)?;
        }
        Ok(())
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            let mut gi = 0.0;
            for j in 0..n {
                gi += self.g[i * n + j] * v[j];
            }
            s += u[i] * gi;
        }
        s
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    /// `out = g^{-1} covector`.
    pub fn raise(&self, covector: &[f64], out: &mut [f64]) {
        out.copy_from_slice(covector);
        cholesky_solve(&self.chol, self.n, out);
    }

    /// `out^i = Gamma^i_jk v^j v^k` using loaded partials.
    pub fn christoffel_contract(&mut self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        // first-kind contraction: c_l = sum_jk (d_j g_lk - 1/2 d_l g_jk) v^j v^k
        for l in 0..n {
            let mut c = 0.0;
            for j in 0..n {
                for k in 0..n {
                    c += (self.dg[j * nn + l * n + k] - 0.5 * self.dg[l * nn + j * n + k]) * v[j] * v[k];
                }
            }
            self.tmp[l] = c;
        }
        out.copy_from_slice(&self.tmp);
        cholesky_solve(&self.chol, n, out);
    }
}

/// Christoffel symbols of the second kind at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelSymbols {
    pub n: usize,
    /// `gamma[i*n*n + j*n + k] = Gamma^i_jk`.
    pub gamma: Vec<f64>,
}

impl ChristoffelSymbols {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[i * self.n * self.n + j * self.n + k]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.gamma
            .iter()
            .zip(&other.gamma)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `Gamma^i_jk u^j v^k`.
    pub fn contract(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        s += self.get(i, j, k) * u[j] * v[k];
                    }
                }
                s
            })
            .collect()
    }
}

/// Metric components at `q` as a matrix, checked for symmetry and positive
/// definiteness.
pub fn metric_eval<M: MetricField + ?Sized>(metric: &M, q: &[f64]) -> Result<DMatrix<f64>> {
    let n = metric.dim();
    let mut s = MetricScratch::new(n);
    s.load(metric, q, false)?;
    Ok(DMatrix::from_row_slice(n, n, &s.g))
}

/// `<u, v>_g` at `q`.
pub fn inner_product<M: MetricField + ?Sized>(metric: &M, q: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
    let n = metric.dim();
    check_dim(n, u.len())?;
    check_dim(n, v.len())?;
    let mut s = MetricScratch::new(n);
    s.load(metric, q, false)?;
    Ok(s.inner(u, v))
}

/// Levi-Civita connection coefficients
/// `Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_jl - d_l g_jk)`.
pub fn christoffel<M: MetricField + ?Sized>(metric: &M, q: &[f64]) -> Result<ChristoffelSymbols> {
    let n = metric.dim();
    let nn = n * n;
    let mut s = MetricScratch::new(n);
    s.load(metric, q, true)?;
    let mut gamma = vec![0.0; n * nn];
    let mut col = vec![0.0; n];
    for j in 0..n {
        for k in j..n {
            for l in 0..n {
                col[l] = 0.5 * (s.dg[j * nn + l * n + k] + s.dg[k * nn + j * n + l] - s.dg[l * nn + j * n + k]);
            }
            cholesky_solve(&s.chol, n, &mut col);
            for i in 0..n {
                gamma[i * nn + j * n + k] = col[i];
                gamma[i * nn + k * n + j] = col[i];
            }
        }
    }
    Ok(ChristoffelSymbols { n, gamma })
}

/// `a^i + Gamma^i_jk v^j v^k`, the coordinate form of the covariant
/// derivative of a velocity field along itself.
pub fn covariant_acceleration<M: MetricField + ?Sized>(metric: &M, q: &[f64], v: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let n = metric.dim();
    check_dim(n, v.len())?;
    check_dim(n, a.len())?;
    let mut s = MetricScratch::new(n);
    s.load(metric, q, true)?;
    let mut out = vec![0.0; n];
    s.christoffel_contract(v, &mut out);
    for i in 0..n {
        out[i] += a[i];
    }
    Ok(out)
}

/// `(grad f)^i = g^ij df_j`.
pub fn contravariant_gradient<M, P>(metric: &M, potential: &P, q: &[f64]) -> Result<Vec<f64>>
where
    M: MetricField + ?Sized,
    P: PotentialField + ?Sized,
{
    let n = metric.dim();
    check_dim(n, potential.dim())?;
    let mut s = MetricScratch::new(n);
    s.load(metric, q, false)?;
    let mut df = vec![0.0; n];
    potential.differential_into(q, &mut df)?;
    let mut out = vec![0.0; n];
    s.raise(&df, &mut out);
    Ok(out)
}

/// Splits `x` into its metric projection onto `tangent` and the
/// g-orthogonal remainder.
pub fn tangential_normal_split<M: MetricField + ?Sized>(
    metric: &M,
    q: &[f64],
    x: &[f64],
    tangent: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = metric.dim();
    check_dim(n, x.len())?;
    check_dim(n, tangent.len())?;
    let mut s = MetricScratch::new(n);
    s.load(metric, q, false)?;
    split_with(&s, x, tangent)
}

pub(crate) fn split_with(s: &MetricScratch, x: &[f64], tangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let tt = s.inner(tangent, tangent);
    if !(tt > 0.0) {
        return Err(Error::ZeroTangent);
    }
    let c = s.inner(x, tangent) / tt;
    let par: Vec<f64> = tangent.iter().map(|t| c * t).collect();
    let perp: Vec<f64> = x.iter().zip(&par).map(|(a, b)| a - b).collect();
    Ok((par, perp))
}
