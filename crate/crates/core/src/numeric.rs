//! Scalar root finding, minimization and adaptive quadrature.
//!
//! Every transform inverse in the crate is a bracketed monotone solve, and
//! every rate function is an integral whose integrand may carry an
//! inverse-square-root singularity at one endpoint. These kernels cover both.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Relative tolerance for bracketed root solves.
pub const ROOT_RTOL: f64 = 1e-13;
/// Iteration cap for root solves and minimizations.
pub const MAX_ITER: usize = 200;
/// Default absolute tolerance for quadrature.
pub const QUAD_TOL: f64 = 1e-12;

/// Brent root of `f` on `[a, b]`; `f(a)` and `f(b)` must differ in sign.
pub fn brent_root<F>(mut f: F, a: f64, b: f64, rtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let fa = f(a)?;
    let fb = f(b)?;
    brent_root_with(&mut f, a, b, fa, fb, rtol)
}

/// Brent root with endpoint values already known.
pub fn brent_root_with<F>(f: &mut F, a: f64, b: f64, fa: f64, fb: f64, rtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NonConvergence(format!(
            "root not bracketed on [{a}, {b}] (f = {fa}, {fb})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * rtol * b.abs().max(1e-300);
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
        if fb.is_nan() {
            return Err(Error::NonConvergence(format!("NaN during root solve at {b}")));
        }
    }
    Err(Error::NonConvergence("root solve exceeded iteration cap".into()))
}

/// Root of an increasing function `f` on `[lo, ∞)` given `f(lo) ≤ 0`.
/// The upper end is found by geometric expansion of `hi - lo` from `step`.
pub fn root_increasing_from<F>(mut f: F, lo: f64, step: f64, rtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let flo = f(lo)?;
    if flo >= 0.0 {
        return Ok(lo);
    }
    let mut width = step.max(1e-12);
    let mut a = lo;
    let mut fa = flo;
    for _ in 0..MAX_ITER {
        let hi = lo + width;
        let fh = f(hi)?;
        if fh >= 0.0 {
            return brent_root_with(&mut f, a, hi, fa, fh, rtol);
        }
        a = hi;
        fa = fh;
        width *= 2.0;
    }
    Err(Error::NonConvergence(format!("no upper bracket above {lo}")))
}

/// Root of a decreasing function `f` on `[lo, ∞)` given `f(lo) ≥ 0`.
pub fn root_decreasing_from<F>(mut f: F, lo: f64, step: f64, rtol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    root_increasing_from(|x| f(x).map(|v| -v), lo, step, rtol)
}

/// Brent minimization of `f` on `[a, b]`; returns `(argmin, min)`.
pub fn brent_min<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut d = 0.0_f64;
    let mut e = 0.0_f64;
    for _ in 0..MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = xtol * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Ok((x, fx));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Ok((x, fx))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx)? + f(c + dx)?;
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    Ok((rk * h, ((rk - rg) * h).abs()))
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Intervals are bisected until the Gauss/Kronrod discrepancy of each piece
/// is below its share of `max(tol, 1e-13·|piece|)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_dyn(&mut f, a, b, tol)
}

fn integrate_dyn(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate_dyn(f, b, a, tol).map(|v| -v);
    }
    // Global adaptive bisection: always split the panel with the largest error.
    const MAX_PANELS: usize = 4_000;
    let (v0, e0) = kronrod15(f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        lo: a,
        hi: b,
        val: v0,
        err: e0,
    });
    let (mut sum, mut err) = (v0, e0);
    while heap.len() < MAX_PANELS {
        if !sum.is_finite() {
            return Err(Error::NonConvergence(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= tol.max(1e-14 * sum.abs()) {
            break;
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.lo + p.hi);
        if mid <= p.lo || mid >= p.hi {
            heap.push(Panel { err: 0.0, ..p });
            err = heap.iter().map(|q| q.err).sum();
            continue;
        }
        let (vl, el) = kronrod15(f, p.lo, mid)?;
        let (vr, er) = kronrod15(f, mid, p.hi)?;
        sum += vl + vr - p.val;
        err += el + er - p.err;
        heap.push(Panel {
            lo: p.lo,
            hi: mid,
            val: vl,
            err: el,
        });
        heap.push(Panel {
            lo: mid,
            hi: p.hi,
            val: vr,
            err: er,
        });
    }
    // Re-sum to shed the drift of the running updates.
    let mut total = 0.0;
    let mut comp = 0.0;
    let mut err_total = 0.0;
    for p in heap.iter() {
        let y = p.val - comp;
        let t = total + y;
        comp = (t - total) - y;
        total = t;
        err_total += p.err;
    }
    if !total.is_finite() {
        return Err(Error::NonConvergence(format!("non-finite integrand on [{a}, {b}]")));
    }
    if err_total > 1e3 * tol.max(1e-13 * total.abs()) {
        return Err(Error::NonConvergence(format!(
            "quadrature error estimate {err_total:e} exceeds tolerance"
        )));
    }
    Ok(total)
}

struct Panel {
    lo: f64,
    hi: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Which endpoints of an integral carry a square-root type singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    None,
    Left,
    Right,
    Both,
}

/// Quadrature with the substitution `t = a + u²` (resp. `t = b − u²`) at
/// singular endpoints, which regularizes `√(t−a)` and `1/√(t−a)` behavior.
pub fn integrate_edge<F>(mut f: F, a: f64, b: f64, edge: Edge, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    integrate_edge_dyn(&mut f, a, b, edge, tol)
}

fn integrate_edge_dyn(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64, edge: Edge, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        let flipped = match edge {
            Edge::Left => Edge::Right,
            Edge::Right => Edge::Left,
            e => e,
        };
        return integrate_edge_dyn(f, b, a, flipped, tol).map(|v| -v);
    }
    match edge {
        Edge::None => integrate_dyn(f, a, b, tol),
        Edge::Left => {
            let span = (b - a).sqrt();
            integrate_dyn(&mut |u| Ok(2.0 * u * f(a + u * u)?), 0.0, span, tol)
        }
        Edge::Right => {
            let span = (b - a).sqrt();
            integrate_dyn(&mut |u| Ok(2.0 * u * f(b - u * u)?), 0.0, span, tol)
        }
        Edge::Both => {
            let m = 0.5 * (a + b);
            let l = integrate_edge_dyn(f, a, m, Edge::Left, 0.5 * tol)?;
            let r = integrate_edge_dyn(f, m, b, Edge::Right, 0.5 * tol)?;
            Ok(l + r)
        }
    }
}

/// Chebyshev–Lobatto nodes `mid + half·cos φ` on `[lo, hi]`, ascending.
pub fn chebyshev_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut g: Vec<f64> = (0..n)
        .map(|k| {
            let phi = std::f64::consts::PI * (n - 1 - k) as f64 / (n - 1) as f64;
            mid + half * phi.cos()
        })
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

/// `n` points evenly spaced on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Ordinary least squares slope and intercept of `ys` against `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent_root(|x| Ok(x * x * x - 2.0), 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-14);
    }

    #[test]
    fn brent_rejects_unbracketed() {
        assert!(brent_root(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn expansion_reaches_far_roots() {
        let r = root_increasing_from(|x| Ok(x - 1e6), 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 1e6).abs() < 1e-6);
    }

    #[test]
    fn minimizer_on_parabola() {
        let (x, v) = brent_min(|x| Ok((x - 0.3) * (x - 0.3) + 1.0), -2.0, 2.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_polynomial_exact() {
        let v = integrate(|x| Ok(x.powi(5) - 3.0 * x * x), -1.0, 2.0, 1e-13).unwrap();
        assert!((v - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-12);
    }

    #[test]
    fn edge_substitution_handles_inverse_sqrt() {
        // ∫_0^1 t^{-1/2} dt = 2 and ∫_0^1 √(1−t) dt = 2/3.
        let a = integrate_edge(|t| Ok(1.0 / t.sqrt()), 0.0, 1.0, Edge::Left, 1e-13).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        let b = integrate_edge(|t| Ok((1.0 - t).sqrt()), 0.0, 1.0, Edge::Right, 1e-13).unwrap();
        assert!((b - 2.0 / 3.0).abs() < 1e-13);
        let c = integrate_edge(|t: f64| Ok((1.0 - t * t).sqrt()), -1.0, 1.0, Edge::Both, 1e-13).unwrap();
        assert!((c - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_grid_is_ascending_with_endpoints() {
        let g = chebyshev_grid(-2.0, 2.0, 33);
        assert_eq!(g[0], -2.0);
        assert_eq!(g[32], 2.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
