//! Optimal inverse temperature and right rate functions of the top
//! eigenvalue (or singular value) for one matrix, sums, products and
//! rectangular sums.
//!
//! A rate curve has up to three regimes on `[c₊, hard_bound]`, separated by
//! the points where the optimal inverse temperature crosses the annealed
//! thresholds `τ_A ≤ τ_B` of the two factors:
//!
//! * regime 1: θ* is the second branch of the convolved transform;
//! * regime 2: factor A is saturated at its wall, θ* solves `map2(θ) = x`;
//! * regime 3: both factors are saturated, θ* solves `map3(θ) = x`.
//!
//! `Π′(x)` is the saturated quenched slope at `θ*(x)`, and `Π` is the running
//! integral of `Π′` from the point where it vanishes. That point is `c₊`,
//! except when a point-mass factor has `τ_A < p_C(c₊)`: the top eigenvalue is
//! then an outlier at `x₀ = p_C⁻¹(τ_A)` and regime 1 is empty.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeconv::{add_conv, ConvOp, ConvolutionModel, Factor};
use crate::freenergy::{saturated_dx, WallOrder};
use crate::numeric::{self, brent_root, Edge, ROOT_RTOL};
use crate::spectra::{Ensemble, RectEnsemble, SpectralDensity};
use crate::transforms::TransformDomain;

/// Position of `x` relative to the regimes of a rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Below,
    First,
    Second,
    Third,
    Beyond,
}

impl Regime {
    /// Integer label used in CSV output: 0 below `c₊`, 1–3, 4 past the bound.
    pub fn code(self) -> u8 {
        match self {
            Regime::Below => 0,
            Regime::First => 1,
            Regime::Second => 2,
            Regime::Third => 3,
            Regime::Beyond => 4,
        }
    }
}

/// Optimal inverse temperature of a convolution as a function of `x`.
#[derive(Debug, Clone)]
pub struct ThetaStar {
    pub c_plus: f64,
    pub x_c1: f64,
    pub x_c2: f64,
    pub hard_bound: f64,
    /// Zero of the rate: `c₊`, or the outlier position in spike mode.
    pub zero_point: f64,
    engine: Engine,
}

#[derive(Debug, Clone)]
enum Engine {
    /// Convolved transform infinite at the edge: the rate is `+∞` past `c₊`.
    Degenerate,
    Conv(Box<ConvEngine>),
    /// Curve of the squared variable evaluated at `x²`.
    Squared(Box<RateCurve>),
}

#[derive(Debug, Clone)]
struct ConvEngine {
    conv: ConvolutionModel,
    order: WallOrder,
    spike: bool,
    dom_b: TransformDomain,
}

impl ConvEngine {
    fn factor(&self, rank: usize) -> &Factor {
        if (self.order.first == 0) == (rank == 0) {
            &self.conv.left
        } else {
            &self.conv.right
        }
    }

    fn op(&self) -> ConvOp {
        self.conv.op
    }

    fn map2(&self, theta: f64) -> Result<f64> {
        let op = self.op();
        let v = op.sat(self.order.wall[0], theta) + self.factor(1).lin(op, theta)?;
        Ok(op.sat_inv(v, theta))
    }

    fn map3(&self, theta: f64) -> Result<f64> {
        let op = self.op();
        let v = op.sat(self.order.wall[0], theta) + op.sat(self.order.wall[1], theta);
        Ok(op.sat_inv(v, theta))
    }

    /// Regime-2 root; `None` when `x` is below the reach of `map2`.
    fn theta2(&self, x: f64) -> Result<Option<f64>> {
        let ta = self.order.tau[0];
        let f = |t: f64| -> Result<f64> { Ok(self.map2(t)? - x) };
        let fa = f(ta)?;
        if fa == 0.0 {
            return Ok(Some(ta));
        }
        if fa > 0.0 {
            // Below the outlier: descend in θ.
            let mut hi = ta;
            let mut fhi = fa;
            let mut lo = ta;
            for _ in 0..1100 {
                lo *= 0.5;
                let fl = f(lo)?;
                if fl <= 0.0 {
                    return numeric::brent_root_with(&mut { f }, lo, hi, fl, fhi, ROOT_RTOL).map(Some);
                }
                hi = lo;
                fhi = fl;
                if lo < 1e-300 {
                    break;
                }
            }
            return Ok(None);
        }
        let tb = self.order.tau[1];
        let dom = self.dom_b;
        let cap = tb.min(dom.sup);
        let usable = cap.is_finite() && (cap < dom.sup || dom.inclusive);
        if usable {
            let fc = f(cap)?;
            if fc >= 0.0 {
                return numeric::brent_root_with(&mut { f }, ta, cap, fa, fc, ROOT_RTOL).map(Some);
            }
            return Err(Error::NonConvergence(format!("regime-2 root beyond τ_B at x = {x}")));
        }
        let mut lo = ta;
        let mut flo = fa;
        for k in 1..=1100 {
            let hi = if cap.is_finite() {
                ta + (cap - ta) * (1.0 - 0.5f64.powi(k.min(1000)))
            } else {
                ta.max(1e-3) * 2f64.powi(k)
            };
            if hi <= lo {
                break;
            }
            let fh = f(hi)?;
            if fh >= 0.0 {
                return numeric::brent_root_with(&mut { f }, lo, hi, flo, fh, ROOT_RTOL).map(Some);
            }
            lo = hi;
            flo = fh;
        }
        Err(Error::NonConvergence(format!("no regime-2 bracket at x = {x}")))
    }

    fn theta3(&self, x: f64) -> Result<f64> {
        let [wa, wb] = self.order.wall;
        match self.op() {
            ConvOp::Add => Ok(1.0 / (wa + wb - x)),
            ConvOp::Mul => Ok(x / (wa * wb - x)),
            ConvOp::Rect { q: 1.0 } => Ok(1.0 / (wa + wb - x)),
            ConvOp::Rect { .. } => {
                let lo = self.order.tau[1];
                let f = |t: f64| -> Result<f64> { Ok(self.map3(t)? - x) };
                let flo = f(lo)?;
                if flo >= 0.0 {
                    return Ok(lo);
                }
                let mut a = lo;
                let mut fa = flo;
                let mut hi = lo.max(1e-3);
                for _ in 0..1100 {
                    hi *= 2.0;
                    let fh = f(hi)?;
                    if fh >= 0.0 {
                        return numeric::brent_root_with(&mut { f }, a, hi, fa, fh, ROOT_RTOL);
                    }
                    a = hi;
                    fa = fh;
                }
                Ok(f64::INFINITY)
            }
        }
    }
}

impl ThetaStar {
    fn from_conv(conv: ConvolutionModel) -> Result<Self> {
        let order = WallOrder::of(&conv)?;
        let hard_bound = order.hard_bound(conv.op);
        let c_plus = conv.c_plus;
        let spike = order.tau[0] < conv.at_edge * (1.0 - 1e-12);
        if spike && order.tau[1] < conv.at_edge * (1.0 - 1e-12) {
            return Err(Error::InvalidInput(
                "both factors saturate below the convolved edge".into(),
            ));
        }
        if !spike && !conv.at_edge.is_finite() {
            return Ok(Self {
                c_plus,
                x_c1: c_plus,
                x_c2: c_plus,
                hard_bound: c_plus,
                zero_point: c_plus,
                engine: Engine::Degenerate,
            });
        }
        let dom_b = {
            let f = if order.first == 0 { &conv.right } else { &conv.left };
            f.lin_domain(conv.op)?
        };
        let engine = ConvEngine {
            conv,
            order,
            spike,
            dom_b,
        };
        let (ta, tb) = (order.tau[0], order.tau[1]);
        let (wa, wb) = (order.wall[0], order.wall[1]);
        let x_c1 = if spike {
            engine.conv.inverse(ta)?
        } else if wa.is_finite() && ta.is_finite() {
            engine.conv.inverse(ta)?.max(c_plus)
        } else {
            f64::INFINITY
        };
        let x_c2 = if wb.is_finite() && tb.is_finite() {
            engine.map3(tb)?.max(x_c1)
        } else {
            f64::INFINITY
        };
        let x_c1 = x_c1.min(hard_bound);
        let x_c2 = x_c2.min(hard_bound);
        let zero_point = if spike { x_c1 } else { c_plus };
        Ok(Self {
            c_plus,
            x_c1,
            x_c2,
            hard_bound,
            zero_point,
            engine: Engine::Conv(Box::new(engine)),
        })
    }

    pub fn regime(&self, x: f64) -> Regime {
        if x.is_nan() || x < self.c_plus {
            return Regime::Below;
        }
        if x > self.hard_bound {
            return Regime::Beyond;
        }
        match &self.engine {
            Engine::Degenerate => {
                if x == self.c_plus {
                    Regime::First
                } else {
                    Regime::Beyond
                }
            }
            Engine::Squared(inner) => inner.regime(x * x),
            Engine::Conv(e) => {
                if !e.spike && x <= self.x_c1 {
                    Regime::First
                } else if x <= self.x_c2 {
                    Regime::Second
                } else {
                    Regime::Third
                }
            }
        }
    }

    /// θ*(x): 0 below `c₊`, `+∞` past the hard bound.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let r = self.regime(x);
        match (&self.engine, r) {
            (_, Regime::Below) => Ok(0.0),
            (_, Regime::Beyond) => Ok(f64::INFINITY),
            (Engine::Degenerate, _) => Ok(f64::INFINITY),
            (Engine::Squared(inner), _) => Ok(inner.theta_star(x * x)?.sqrt()),
            (Engine::Conv(e), Regime::First) => e.conv.second(x),
            (Engine::Conv(e), Regime::Second) => Ok(e.theta2(x)?.unwrap_or(0.0)),
            (Engine::Conv(e), Regime::Third) => {
                if x >= self.hard_bound {
                    Ok(f64::INFINITY)
                } else {
                    e.theta3(x)
                }
            }
        }
    }

    /// `Π′(x)`; `None` where the rate is infinite.
    fn slope(&self, x: f64) -> Result<Option<f64>> {
        let Engine::Conv(e) = &self.engine else {
            return Err(Error::InvalidInput("slope of a non-convolution curve".into()));
        };
        let theta = match self.regime(x) {
            Regime::Below | Regime::Beyond => return Ok(None),
            Regime::First => e.conv.second(x)?,
            Regime::Second => match e.theta2(x)? {
                Some(t) => t,
                None => return Ok(None),
            },
            Regime::Third => {
                if x >= self.hard_bound {
                    return Ok(None);
                }
                e.theta3(x)?
            }
        };
        let p = e.conv.principal(x)?;
        Ok(Some(saturated_dx(e.op(), x, theta, p)))
    }
}

/// Right rate function of the top eigenvalue (or singular value).
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub c_plus: f64,
    pub x_c1: f64,
    pub x_c2: f64,
    pub hard_bound: f64,
    /// Rate at `x_c1` (0 in spike mode).
    pub k1: f64,
    /// Rate at `x_c2`.
    pub k2: f64,
    pub zero_point: f64,
    theta: ThetaStar,
}

/// Absolute tolerance of a rate segment, scaled to its length.
fn seg_tol(a: f64, b: f64) -> f64 {
    (1e-12 * (b - a).abs()).max(1e-18)
}

impl RateCurve {
    fn from_theta(theta: ThetaStar) -> Result<Self> {
        let mut c = Self {
            c_plus: theta.c_plus,
            x_c1: theta.x_c1,
            x_c2: theta.x_c2,
            hard_bound: theta.hard_bound,
            k1: 0.0,
            k2: 0.0,
            zero_point: theta.zero_point,
            theta,
        };
        if let Engine::Degenerate = c.theta.engine {
            return Ok(c);
        }
        let spike = matches!(&c.theta.engine, Engine::Conv(e) if e.spike);
        if !spike && c.x_c1.is_finite() {
            c.k1 = c.integrate_slope(c.c_plus, c.x_c1)?;
        }
        if c.x_c2.is_finite() {
            c.k2 = c.k1 + c.integrate_slope(c.x_c1, c.x_c2)?;
        }
        Ok(c)
    }

    /// `∫_a^b Π′` inside one regime, with the square-root substitution at `c₊`.
    fn integrate_slope(&self, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let edge = if lo == self.c_plus { Edge::Left } else { Edge::None };
        let mut err = None;
        let v = numeric::integrate_edge(
            |t| match self.theta.slope(t) {
                Ok(Some(s)) => Ok(s),
                Ok(None) => Ok(f64::INFINITY),
                Err(e) => {
                    err = Some(e.clone());
                    Err(e)
                }
            },
            lo,
            hi,
            edge,
            seg_tol(lo, hi),
        );
        match (v, err) {
            (_, Some(e)) => Err(e),
            (Ok(v), None) => Ok(sign * v),
            (Err(_), None) => Ok(f64::INFINITY),
        }
    }

    pub fn regime(&self, x: f64) -> Regime {
        self.theta.regime(x)
    }

    pub fn theta_star(&self, x: f64) -> Result<f64> {
        self.theta.eval(x)
    }

    pub fn theta(&self) -> &ThetaStar {
        &self.theta
    }

    /// `Π′(x)`; `+∞` where the rate is infinite.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        match &self.theta.engine {
            Engine::Degenerate => Ok(if x == self.c_plus { 0.0 } else { f64::INFINITY }),
            Engine::Squared(inner) => Ok(2.0 * x * inner.derivative(x * x)?),
            Engine::Conv(_) => Ok(self.theta.slope(x)?.unwrap_or(f64::INFINITY)),
        }
    }

    /// `Π(x)`, extended-real; never NaN.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let r = self.regime(x);
        if matches!(r, Regime::Below | Regime::Beyond) {
            return Ok(f64::INFINITY);
        }
        match &self.theta.engine {
            Engine::Degenerate => Ok(if x == self.c_plus { 0.0 } else { f64::INFINITY }),
            Engine::Squared(inner) => inner.eval(x * x),
            Engine::Conv(e) => {
                if x == self.zero_point {
                    return Ok(0.0);
                }
                if x >= self.hard_bound && self.x_c2 < self.hard_bound {
                    return Ok(f64::INFINITY);
                }
                let v = match r {
                    Regime::First => self.integrate_slope(self.c_plus, x)?,
                    Regime::Second if e.spike => {
                        if e.theta2(x)?.is_none() {
                            return Ok(f64::INFINITY);
                        }
                        self.integrate_slope(self.zero_point, x)?
                    }
                    Regime::Second => self.k1 + self.integrate_slope(self.x_c1, x)?,
                    _ => self.k2 + self.integrate_slope(self.x_c2, x)?,
                };
                Ok(if v.is_nan() { f64::INFINITY } else { v.max(0.0) })
            }
        }
    }

    /// Rate on a grid by running integrals between consecutive points.
    pub fn eval_grid(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let Engine::Conv(e) = &self.theta.engine else {
            return xs.iter().map(|&x| self.eval(x)).collect();
        };
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut out = vec![f64::INFINITY; xs.len()];
        let mut prev: Option<(f64, f64)> = None;
        let mut breaks = vec![self.c_plus, self.x_c1, self.x_c2, self.zero_point];
        breaks.retain(|b| b.is_finite());
        for &i in &idx {
            let x = xs[i];
            let finite_zone = !matches!(self.regime(x), Regime::Below | Regime::Beyond)
                && !(x >= self.hard_bound && self.x_c2 < self.hard_bound)
                && !(e.spike && x < self.zero_point && e.theta2(x)?.is_none());
            if !finite_zone {
                out[i] = self.eval(x)?;
                prev = None;
                continue;
            }
            let v = match prev {
                Some((px, pv)) => {
                    let mut acc = pv;
                    let mut a = px;
                    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&b| b > px && b < x).collect();
                    cuts.push(x);
                    for b in cuts {
                        acc += self.integrate_slope(a, b)?;
                        a = b;
                    }
                    acc
                }
                None => self.eval(x)?,
            };
            let v = if v.is_nan() { f64::INFINITY } else { v.max(0.0) };
            out[i] = v;
            prev = Some((x, v));
        }
        Ok(out)
    }
}

fn check_op(conv: &ConvolutionModel, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} needs a model of the matching operation, got {:?}",
            conv.op
        )))
    }
}

/// θ* of a sum.
pub fn theta_star_sum(conv: &ConvolutionModel) -> Result<ThetaStar> {
    check_op(conv, matches!(conv.op, ConvOp::Add), "theta_star_sum")?;
    ThetaStar::from_conv(conv.clone())
}

/// θ* of a product.
pub fn theta_star_prod(conv: &ConvolutionModel) -> Result<ThetaStar> {
    check_op(conv, matches!(conv.op, ConvOp::Mul), "theta_star_prod")?;
    ThetaStar::from_conv(conv.clone())
}

/// θ* of a rectangular sum.
pub fn theta_star_rect(conv: &ConvolutionModel) -> Result<ThetaStar> {
    check_op(conv, matches!(conv.op, ConvOp::Rect { .. }), "theta_star_rect")?;
    ThetaStar::from_conv(conv.clone())
}

/// Rate function of the top eigenvalue of `A + O B Oᵀ`.
pub fn rate_sum(conv: &ConvolutionModel) -> Result<RateCurve> {
    RateCurve::from_theta(theta_star_sum(conv)?)
}

/// Rate function of the top eigenvalue of `√A B √A`.
pub fn rate_prod(conv: &ConvolutionModel) -> Result<RateCurve> {
    RateCurve::from_theta(theta_star_prod(conv)?)
}

/// Rate function of the top singular value of `A + U B Vᵀ`.
pub fn rate_rect(conv: &ConvolutionModel) -> Result<RateCurve> {
    RateCurve::from_theta(theta_star_rect(conv)?)
}

/// Long-matrix limit of the rectangular sum: the sum rate of `AAᵀ + BBᵀ`
/// (walls squared) evaluated at `x²`.
pub fn rate_rect_long_limit(a: &RectEnsemble, b: &RectEnsemble) -> Result<RateCurve> {
    let sq = |r: &RectEnsemble| -> Result<Ensemble> {
        let mut e = r.square.clone();
        if r.lsvd.is_dirac() {
            e = e.with_wall(r.wall * r.wall)?;
        }
        Ok(e)
    };
    let inner = rate_sum(&add_conv(sq(a)?, sq(b)?)?)?;
    let root = |v: f64| if v.is_finite() { v.max(0.0).sqrt() } else { v };
    let theta = ThetaStar {
        c_plus: root(inner.c_plus),
        x_c1: root(inner.x_c1),
        x_c2: root(inner.x_c2),
        hard_bound: root(inner.hard_bound),
        zero_point: root(inner.zero_point),
        engine: Engine::Squared(Box::new(inner.clone())),
    };
    Ok(RateCurve {
        c_plus: theta.c_plus,
        x_c1: theta.x_c1,
        x_c2: theta.x_c2,
        hard_bound: theta.hard_bound,
        k1: inner.k1,
        k2: inner.k2,
        zero_point: theta.zero_point,
        theta,
    })
}

/// One-matrix rate `½∫_{a₊}^x (ḡ − g)`: 0 at `a₊`, `+∞` outside `[a₊, w]`.
pub fn psi_one_matrix(e: &Ensemble, x: f64) -> Result<f64> {
    let a = e.edge();
    if x.is_nan() || x < a || x > e.wall {
        return Ok(f64::INFINITY);
    }
    if x == a {
        return Ok(0.0);
    }
    if e.density.is_dirac() {
        return Ok(0.0);
    }
    let Some(p) = &e.potential else {
        return Ok(f64::INFINITY);
    };
    let v = numeric::integrate_edge(
        |t| Ok(0.5 * (p.v_prime(t) - 2.0 * e.g(t)?)),
        a,
        x,
        Edge::Left,
        seg_tol(a, x),
    )?;
    Ok(v.max(0.0))
}

/// Same rate with `ḡ` taken as the larger root of `y² − V′y + P = 0`,
/// `P(x) = ∫ (V′(x) − V′(λ))/(x − λ) dμ(λ) + m/(x − a₋)` by quadrature, where
/// `m = ∫V′dμ` vanishes unless the support has a hard lower edge `a₋`.
pub fn psi_one_matrix_bipz(e: &Ensemble, x: f64) -> Result<f64> {
    let a = e.edge();
    if x.is_nan() || x < a || x > e.wall {
        return Ok(f64::INFINITY);
    }
    if x == a || e.density.is_dirac() {
        return Ok(0.0);
    }
    let Some(p) = &e.potential else {
        return Ok(f64::INFINITY);
    };
    let lower = e.density.lower();
    let hard = e.density.integrate_against(|l| Ok(p.v_prime(l)), 1e-13)?;
    let v = numeric::integrate_edge(
        |t| {
            let vt = p.v_prime(t);
            let pt = hard / (t - lower)
                + e.density.integrate_against(
                    |l| {
                        Ok(if (t - l).abs() > 1e-9 * (1.0 + t.abs()) {
                            (vt - p.v_prime(l)) / (t - l)
                        } else {
                            p.v_second(t)
                        })
                    },
                    1e-13,
                )?;
            let g_bar = 0.5 * (vt + (vt * vt - 4.0 * pt).max(0.0).sqrt());
            Ok(0.5 * (g_bar - e.g(t)?))
        },
        a,
        x,
        Edge::Left,
        seg_tol(a, x),
    )?;
    Ok(v.max(0.0))
}

/// One-matrix rectangular rate `Φ(x) = Ψ_{AAᵀ}(x²)` through the square law.
pub fn phi_one_rect(re: &RectEnsemble, x: f64) -> Result<f64> {
    let a = re.edge();
    if x.is_nan() || x < a || x > re.wall {
        return Ok(f64::INFINITY);
    }
    if x == a {
        return Ok(0.0);
    }
    let u = (x * x).max(re.square.edge()).min(re.square.wall);
    psi_one_matrix(&re.square, u)
}

/// Same rate through the singular-value density:
/// `∫_{a₊}^x t(Ṽ′(t²) − 2∫ρ(s)/(t²−s²)ds) dt`.
pub fn phi_one_rect_lsvd(re: &RectEnsemble, x: f64) -> Result<f64> {
    let a = re.edge();
    if x.is_nan() || x < a || x > re.wall {
        return Ok(f64::INFINITY);
    }
    if x == a {
        return Ok(0.0);
    }
    let Some(p) = &re.square.potential else {
        return Ok(f64::INFINITY);
    };
    let lsvd: &SpectralDensity = &re.lsvd;
    let v = numeric::integrate_edge(
        |t| {
            let t2 = t * t;
            let g = lsvd.integrate_against(|s| Ok(if t2 == s * s { 0.0 } else { 1.0 / (t2 - s * s) }), 1e-13)?;
            Ok(t * (p.v_prime(t2) - 2.0 * g))
        },
        a,
        x,
        Edge::Left,
        seg_tol(a, x),
    )?;
    Ok(v.max(0.0))
}

/// Effective potential `V(x) = ∫_{c₊}^x 2(Π′ + g_C)` with `V(c₊) = 0`.
/// For rectangular sums `g_C` is replaced by `2t·g_{CCᵀ}(t²)`, the potential
/// of the squared law written in the singular-value variable.
pub fn effective_potential(curve: &RateCurve, conv: &ConvolutionModel, x: f64) -> Result<f64> {
    if x < curve.c_plus {
        return Err(Error::OutOfSupport { x, edge: curve.c_plus });
    }
    if x == curve.c_plus {
        return Ok(0.0);
    }
    if x > curve.hard_bound || (x >= curve.hard_bound && curve.x_c2 < curve.hard_bound) {
        return Ok(f64::INFINITY);
    }
    let op = conv.op;
    let integrand = |t: f64| -> Result<f64> {
        let d = curve.derivative(t)?;
        if !d.is_finite() {
            return Ok(f64::INFINITY);
        }
        let g = conv.g_c(t)?;
        Ok(match op {
            ConvOp::Rect { .. } => 2.0 * (d + 2.0 * t * g),
            _ => 2.0 * (d + g),
        })
    };
    let mut cuts: Vec<f64> = [curve.x_c1, curve.x_c2, curve.zero_point]
        .into_iter()
        .filter(|&b| b > curve.c_plus && b < x)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.push(x);
    let mut acc = 0.0;
    let mut a = curve.c_plus;
    for b in cuts {
        let edge = if a == curve.c_plus { Edge::Left } else { Edge::None };
        let v = numeric::integrate_edge(integrand, a, b, edge, seg_tol(a, b))?;
        if !v.is_finite() {
            return Ok(f64::INFINITY);
        }
        acc += v;
        a = b;
    }
    Ok(acc)
}

/// Result of the edge scaling fit `Π(c₊+ε) ≈ C·ε^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwScaling {
    pub exponent: f64,
    pub coefficient: f64,
    /// `(2/3)γ₀^{3/2}` for the supplied edge coefficient.
    pub predicted_coefficient: f64,
}

/// Log–log least-squares fit of `Π(c₊+ε)` on 16 log-spaced `ε ∈ [1e−6, 1e−3]`.
pub fn tw_scaling_check(curve: &RateCurve, edge_coeff: f64) -> Result<TwScaling> {
    let mut lx = Vec::with_capacity(16);
    let mut ly = Vec::with_capacity(16);
    for k in 0..16 {
        let eps = 1e-6 * 1e3f64.powf(k as f64 / 15.0);
        let v = curve.eval(curve.c_plus + eps)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::NonConvergence(format!("rate is {v} at c₊ + {eps:e}")));
        }
        lx.push(eps.ln());
        ly.push(v.ln());
    }
    let (slope, intercept) = numeric::linear_fit(&lx, &ly);
    Ok(TwScaling {
        exponent: slope,
        coefficient: intercept.exp(),
        predicted_coefficient: 2.0 / 3.0 * edge_coeff.powf(1.5),
    })
}

/// θ* of a one-matrix model as the second Stieltjes branch, by root solve
/// against the principal branch of the inverse (independent of the potential).
pub fn theta_star_one_matrix(e: &Ensemble, x: f64) -> Result<f64> {
    if x < e.edge() {
        return Ok(0.0);
    }
    if x > e.wall {
        return Ok(f64::INFINITY);
    }
    let gb = e.g_bar(x)?;
    let dom = e.r_domain()?;
    let f = |y: f64| Ok(e.g_inv(y)? - x);
    let ge = e.g_at_edge()?;
    let hi = if dom.sup.is_finite() {
        dom.sup * (1.0 - 1e-12)
    } else {
        gb * 4.0 + 1.0
    };
    if ge >= hi {
        return Ok(gb);
    }
    brent_root(f, ge, hi, ROOT_RTOL)
}
