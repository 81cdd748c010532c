//! Small numerical building blocks: dense SPD solves for tiny matrices,
//! splines, quadrature, scalar search.

/// In-place lower Cholesky factor of a row-major `n x n` matrix.
///
/// Returns `false` when the matrix is not (numerically) positive definite.
/// Only the lower triangle of `a` is meaningful afterwards.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves a general 2x2 system, `None` if singular.
pub fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        (b[0] * m[1][1] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ])
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "spline needs at least two matching nodes");
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second-derivative system.
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let a = h0 / 6.0;
                let b = (h0 + h1) / 3.0;
                let cc = h1 / 6.0;
                let r = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
                let denom = b - a * c[i - 1];
                c[i] = cc / denom;
                d[i] = (r - a * d[i - 1]) / denom;
            }
            for i in (1..n - 1).rev() {
                m[i] = d[i] - c[i] * m[i + 1];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    /// Value, first and second derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.segment(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let (y0, y1) = (self.y[i], self.y[i + 1]);
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h / 6.0 * m0 + (3.0 * b * b - 1.0) * h / 6.0 * m1;
        let d2 = a * m0 + b * m1;
        (v, d1, d2)
    }
}

/// Cumulative composite Simpson integral of uniformly spaced samples,
/// `out[k] = integral from x_0 to x_k`.
///
/// Even `k` uses plain composite Simpson; odd `k >= 3` closes with the 3/8
/// rule on the last three intervals; `k = 1` uses the three-point interval
/// formula.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    let mut even = vec![0.0; n];
    let mut k = 2;
    while k < n {
        even[k] = even[k - 2] + h / 3.0 * (values[k - 2] + 4.0 * values[k - 1] + values[k]);
        k += 2;
    }
    for k in 1..n {
        out[k] = if k % 2 == 0 {
            even[k]
        } else if k == 1 {
            h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2])
        } else {
            even[k - 3]
                + 3.0 * h / 8.0 * (values[k - 3] + 3.0 * values[k - 2] + 3.0 * values[k - 1] + values[k])
        };
    }
    out
}

/// Composite Simpson quadrature of `f` over `[a, b]` with `intervals`
/// (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Fourth-order first derivative of uniformly sampled data at index `i`.
///
/// Uses the five-point central stencil in the interior and the matching
/// one-sided five-point stencils near the ends. Requires `values.len() >= 5`.
pub fn derivative5(values: &[f64], h: f64, i: usize) -> f64 {
    let n = values.len();
    debug_assert!(n >= 5);
    let v = |k: usize| values[k];
    if i >= 2 && i + 2 < n {
        (v(i - 2) - 8.0 * v(i - 1) + 8.0 * v(i + 1) - v(i + 2)) / (12.0 * h)
    } else if i == 0 {
        (-25.0 * v(0) + 48.0 * v(1) - 36.0 * v(2) + 16.0 * v(3) - 3.0 * v(4)) / (12.0 * h)
    } else if i == 1 {
        (-3.0 * v(0) - 10.0 * v(1) + 18.0 * v(2) - 6.0 * v(3) + v(4)) / (12.0 * h)
    } else if i == n - 1 {
        (25.0 * v(n - 1) - 48.0 * v(n - 2) + 36.0 * v(n - 3) - 16.0 * v(n - 4) + 3.0 * v(n - 5)) / (12.0 * h)
    } else {
        (3.0 * v(n - 1) + 10.0 * v(n - 2) - 18.0 * v(n - 3) + 6.0 * v(n - 4) - v(n - 5)) / (12.0 * h)
    }
}

/// Lagrange weights (and their derivatives w.r.t. `t`) for cubic
/// interpolation on nodes at offsets -1, 0, 1, 2 with `t` in `[0, 1]`.
pub fn lagrange4(t: f64) -> ([f64; 4], [f64; 4]) {
    let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
    let w = [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ];
    let dw = [
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ];
    (w, dw)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
///
/// Returns `(x_best, f_best)` over every point evaluated, so the answer is
/// never worse than the probes.
pub fn golden_section_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let (mut best_x, mut best_f) = if fc >= fd { (c, fc) } else { (d, fd) };
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            if fc > best_f {
                best_x = c;
                best_f = fc;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            if fd > best_f {
                best_x = d;
                best_f = fd;
            }
        }
    }
    (best_x, best_f)
}

/// Bracketed root of `f` on `[a, b]` by bisection polished with the
/// Illinois false-position update. `f(a)` and `f(b)` must differ in sign.
pub fn bracketed_root<F>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut side = 0;
    for _ in 0..max_iter {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < tol {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![5.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2));
        let mut b = vec![1.0, 0.0];
        cholesky_solve(&a, 2, &mut b);
        // inverse of [[5,2],[2,1]] is [[1,-2],[-2,5]]
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky_in_place(&mut a, 2));
    }

    #[test]
    fn spline_reproduces_cubic_interior_derivatives() {
        let x: Vec<f64> = (0..=200).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
        let s = CubicSpline::new(&x, &y);
        let (v, d1, d2) = s.eval(1.003);
        assert!((v - 1.003f64.sin()).abs() < 1e-9);
        assert!((d1 - 1.003f64.cos()).abs() < 1e-6);
        assert!((d2 + 1.003f64.sin()).abs() < 1e-4);
    }

    #[test]
    fn cumulative_simpson_matches_closed_form() {
        let h = 0.01;
        let v: Vec<f64> = (0..101).map(|i| (i as f64 * h).exp()).collect();
        let c = cumulative_simpson(&v, h);
        for (k, ck) in c.iter().enumerate() {
            let exact = (k as f64 * h).exp() - 1.0;
            assert!((ck - exact).abs() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn derivative5_exact_on_quartics() {
        let h = 0.1;
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * h).powi(4)).collect();
        for i in 0..9 {
            let x = i as f64 * h;
            assert!((derivative5(&v, h, i) - 4.0 * x.powi(3)).abs() < 1e-10, "i={i}");
        }
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3).powi(2), -1.0, 1.0, 1e-8, 200);
        assert!((x - 0.3).abs() < 1e-6);
        assert!(fx > -1e-11);
    }

    #[test]
    fn root_of_cubic() {
        let r = bracketed_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn lagrange4_reproduces_cubic() {
        let f = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x * x * x;
        let df = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x;
        let t = 0.37;
        let (w, dw) = lagrange4(t);
        let nodes = [-1.0, 0.0, 1.0, 2.0];
        let v: f64 = (0..4).map(|k| w[k] * f(nodes[k])).sum();
        let d: f64 = (0..4).map(|k| dw[k] * f(nodes[k])).sum();
        assert!((v - f(t)).abs() < 1e-13);
        assert!((d - df(t)).abs() < 1e-13);
    }
}
