//! Derivatives of the quenched and annealed spherical free energies and the
//! tilt diagnostic whose zero crossing fixes the optimal inverse temperature.
//!
//! The three spherical models share one structure: below a saturation point
//! the θ-derivative is `scale·L(θ)` for the linearizer `L` of the operation,
//! beyond it `scale·sat(x, θ)`. Quenched models saturate at the principal
//! transform `p_C(x)`; annealed ones at the wall threshold of each factor.

use crate::error::{Error, Result};
use crate::freeconv::{ConvOp, ConvolutionModel, Factor};
use crate::spectra::{Ensemble, RectEnsemble};
use crate::transforms::f_q;

/// `∂_θ` of the quenched free energy of the convolution, top eigenvalue at `x`.
pub fn quenched_dtheta(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let p = conv.principal(x)?;
    if theta <= p {
        Ok(conv.op.scale() * conv.lin(theta)?)
    } else {
        Ok(conv.op.scale() * conv.op.sat(x, theta))
    }
}

/// `∂_x` of the quenched free energy: zero up to `p_C(x)`, the saturated
/// slope beyond.
pub fn quenched_dx(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let p = conv.principal(x)?;
    if theta <= p {
        return Ok(0.0);
    }
    Ok(saturated_dx(conv.op, x, theta, p))
}

/// Saturated `∂_x` slope at inverse temperature `θ` given `p = p_C(x)`.
/// Negative when `θ < p`; the rate integrands use it on both sides.
pub fn saturated_dx(op: ConvOp, x: f64, theta: f64, p: f64) -> f64 {
    match op {
        ConvOp::Add => 0.5 * (theta - p),
        ConvOp::Mul => 0.5 * ((theta + 1.0) / x - (p + 1.0) / x),
        ConvOp::Rect { q } => {
            // (f_q(θx) − f_q(px))/(qx), written without cancellation.
            x * (theta * theta - p * p) / (f_q(q, theta * x) + f_q(q, p * x))
        }
    }
}

/// `∂_θ` of the annealed free energy of one factor; `+∞` past the domain of
/// the linearizer when the wall is at infinity.
pub fn annealed_dtheta(f: &Factor, op: ConvOp, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let tau = f.threshold(op)?;
    let w = f.wall();
    if theta <= tau && (w.is_finite() || theta < tau) {
        return Ok(op.scale() * f.lin(op, theta)?);
    }
    if w.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(op.scale() * op.sat(w, theta))
}

pub fn ssk_quenched_dtheta(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Add))?;
    quenched_dtheta(conv, x, theta)
}

pub fn ssk_quenched_dx(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Add))?;
    quenched_dx(conv, x, theta)
}

pub fn ssk_annealed_dtheta(e: &Ensemble, theta: f64) -> Result<f64> {
    annealed_dtheta(&Factor::Sym(e.clone()), ConvOp::Add, theta)
}

pub fn lssk_quenched_dtheta(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Mul))?;
    quenched_dtheta(conv, x, theta)
}

pub fn lssk_quenched_dx(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Mul))?;
    quenched_dx(conv, x, theta)
}

pub fn lssk_annealed_dtheta(e: &Ensemble, theta: f64) -> Result<f64> {
    annealed_dtheta(&Factor::Sym(e.clone()), ConvOp::Mul, theta)
}

pub fn bssk_quenched_dtheta(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Rect { .. }))?;
    quenched_dtheta(conv, x, theta)
}

pub fn bssk_quenched_dx(conv: &ConvolutionModel, x: f64, theta: f64) -> Result<f64> {
    require(conv, matches!(conv.op, ConvOp::Rect { .. }))?;
    quenched_dx(conv, x, theta)
}

pub fn bssk_annealed_dtheta(re: &RectEnsemble, theta: f64) -> Result<f64> {
    annealed_dtheta(&Factor::Rect(re.clone()), ConvOp::Rect { q: re.shape_q }, theta)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "inverse temperature {theta} must be positive"
        )))
    }
}

fn require(conv: &ConvolutionModel, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("model built for {:?}", conv.op)))
    }
}

/// Factors of a convolution sorted by annealed threshold, `τ_A ≤ τ_B`.
/// Equal thresholds keep the construction order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallOrder {
    /// Index (0 = left, 1 = right) of the factor saturating first.
    pub first: usize,
    pub tau: [f64; 2],
    pub wall: [f64; 2],
}

impl WallOrder {
    pub fn of(conv: &ConvolutionModel) -> Result<Self> {
        let tl = conv.left.threshold(conv.op)?;
        let tr = conv.right.threshold(conv.op)?;
        let (wl, wr) = (conv.left.wall(), conv.right.wall());
        Ok(if tr < tl {
            Self {
                first: 1,
                tau: [tr, tl],
                wall: [wr, wl],
            }
        } else {
            Self {
                first: 0,
                tau: [tl, tr],
                wall: [wl, wr],
            }
        })
    }

    pub fn hard_bound(&self, op: ConvOp) -> f64 {
        op.hard_bound(self.wall[0], self.wall[1])
    }
}

/// Tilt diagnostic for a convolution and a target top value `x ≥ c₊`.
#[derive(Debug, Clone)]
pub struct TiltModel {
    pub conv: ConvolutionModel,
    pub x: f64,
    pub order: WallOrder,
    pub hard_bound: f64,
    /// Principal transform `p_C(x)`: the diagnostic vanishes up to it.
    pub saturation: f64,
}

impl TiltModel {
    pub fn new(conv: ConvolutionModel, x: f64) -> Result<Self> {
        let saturation = conv.principal(x)?;
        let order = WallOrder::of(&conv)?;
        let hard_bound = order.hard_bound(conv.op);
        Ok(Self {
            conv,
            x,
            order,
            hard_bound,
            saturation,
        })
    }

    pub fn factor(&self, rank: usize) -> &Factor {
        if (self.order.first == 0) == (rank == 0) {
            &self.conv.left
        } else {
            &self.conv.right
        }
    }

    /// Junctions of the piecewise diagnostic, in increasing order.
    pub fn junctions(&self) -> [f64; 3] {
        [
            self.saturation,
            self.order.tau[0].max(self.saturation),
            self.order.tau[1].max(self.saturation),
        ]
    }
}

/// `I′ₓ(θ)`: quenched minus summed annealed θ-derivatives; exactly zero for
/// `θ ≤ p_C(x)`, `−∞` once an infinite-wall factor leaves its domain.
pub fn tilt_diff(model: &TiltModel, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if theta <= model.saturation {
        return Ok(0.0);
    }
    let op = model.conv.op;
    let quenched = op.scale() * op.sat(model.x, theta);
    let a = annealed_dtheta(&model.conv.left, op, theta)?;
    let b = annealed_dtheta(&model.conv.right, op, theta)?;
    if a.is_infinite() || b.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(quenched - a - b)
}

/// θ* as the sign change of the tilt diagnostic on `(p_C(x), ∞)`; `+∞`
/// when it never crosses.
pub fn theta_star_from_tilt(model: &TiltModel) -> Result<f64> {
    let lo = model.saturation;
    if !lo.is_finite() {
        return Ok(f64::INFINITY);
    }
    // Largest crossing: scan geometrically past the last junction.
    let mut hi = model.junctions()[2].max(lo * 2.0).max(1e-12);
    if hi.is_infinite() {
        hi = lo * 2.0 + 1.0;
    }
    let f = |t: f64| tilt_diff(model, t);
    let mut k = 0;
    while f(hi)? >= 0.0 {
        hi *= 2.0;
        k += 1;
        if k > 400 || hi > 1e300 {
            return Ok(f64::INFINITY);
        }
    }
    // Positive region sits between lo and the crossing; find a point in it.
    let mut a = None;
    let n = 400;
    let ratio = (hi / lo).max(1.0 + 1e-12);
    for i in (0..n).rev() {
        let t = lo * ratio.powf((i as f64 + 0.5) / n as f64);
        if t > lo && f(t)? > 0.0 {
            a = Some(t);
            break;
        }
    }
    let Some(mut a) = a else {
        return Ok(lo);
    };
    let mut b = hi;
    // Tighten the bracket to the first negative value above a.
    for i in 1..=n {
        let t = a + (hi - a) * i as f64 / n as f64;
        if f(t)? < 0.0 {
            b = t;
            break;
        }
        a = t;
    }
    let g = |t: f64| -> Result<f64> {
        let v = f(t)?;
        Ok(if v.is_infinite() { -1e300 } else { v })
    };
    crate::numeric::brent_root(g, a, b, 1e-14)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freeconv::{add_conv, mul_conv, rect_conv};
    use crate::spectra::{Ensemble, RectEnsemble, SpectralDensity};

    fn zero() -> Ensemble {
        Ensemble::fixed(SpectralDensity::dirac(0.0).unwrap())
    }

    fn single_goe() -> ConvolutionModel {
        add_conv(Ensemble::goe(1.0).unwrap(), zero()).unwrap()
    }

    #[test]
    fn ssk_quenched_pieces() {
        let c = single_goe();
        assert!((ssk_quenched_dtheta(&c, 3.0, 2.0).unwrap() - 1.25).abs() < 1e-14);
        assert!(ssk_quenched_dtheta(&c, 3.0, 1e-9).unwrap().abs() < 1e-8);
        let g = c.principal(3.0).unwrap();
        let below = ssk_quenched_dtheta(&c, 3.0, g * (1.0 - 1e-12)).unwrap();
        let above = ssk_quenched_dtheta(&c, 3.0, g * (1.0 + 1e-12)).unwrap();
        assert!((below - above).abs() < 1e-10);
        assert_eq!(ssk_quenched_dx(&c, 3.0, 0.5 * g).unwrap(), 0.0);
        assert!((ssk_quenched_dx(&c, 3.0, 2.0).unwrap() - 0.5 * (2.0 - g)).abs() < 1e-14);
        let m = add_conv(Ensemble::wishart(0.5).unwrap(), zero()).unwrap();
        assert!((ssk_quenched_dtheta(&m, 4.0, 1e-9).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn ssk_annealed_values() {
        for s in [0.5, 1.0, 2.0] {
            let e = Ensemble::goe(s).unwrap();
            for t in [0.1, 1.0, 7.0] {
                assert!((ssk_annealed_dtheta(&e, t).unwrap() - 0.5 * s * s * t).abs() < 1e-13);
            }
        }
        let w = Ensemble::wishart(0.5).unwrap();
        assert!(ssk_annealed_dtheta(&w, 1.9).unwrap().is_finite());
        assert!(ssk_annealed_dtheta(&w, 2.0).unwrap().is_infinite());
        assert!(ssk_annealed_dtheta(&w, 5.0).unwrap().is_infinite());
    }

    #[test]
    fn wall_at_edge_matches_quenched_at_edge() {
        let d = SpectralDensity::marchenko_pastur(0.5).unwrap();
        let fixed = Ensemble::fixed(d.clone());
        let c = add_conv(Ensemble::new(d.clone(), None, d.upper()).unwrap(), zero()).unwrap();
        for t in [0.05, 0.5, 1.0, 3.0, 20.0] {
            let a = ssk_annealed_dtheta(&fixed, t).unwrap();
            let q = ssk_quenched_dtheta(&c, d.upper(), t).unwrap();
            assert!((a - q).abs() < 1e-9, "θ={t}: {a} vs {q}");
        }
    }

    #[test]
    fn lssk_values() {
        let w = Ensemble::wishart(1.0).unwrap();
        for t in [0.1, 1.0, 10.0] {
            assert!((lssk_annealed_dtheta(&w, t).unwrap() - 0.5 * (1.0 + t).ln()).abs() < 1e-13);
        }
        let c = mul_conv(
            Ensemble::wishart(0.5).unwrap(),
            Ensemble::fixed(SpectralDensity::dirac(2.0).unwrap()),
        )
        .unwrap();
        assert!((lssk_quenched_dtheta(&c, 7.0, 1e-10).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-9);
        let x = 7.0;
        let t = c.principal(x).unwrap();
        let below = lssk_quenched_dtheta(&c, x, t * (1.0 - 1e-12)).unwrap();
        let sat = 0.5 * (x * t / (t + 1.0)).ln();
        assert!((below - sat).abs() < 1e-10);
    }

    #[test]
    fn bssk_values() {
        let g = RectEnsemble::gauss_rect(0.7, 0.3).unwrap();
        for t in [0.1, 1.0, 10.0] {
            assert!((bssk_annealed_dtheta(&g, t).unwrap() - 0.49 * t).abs() < 1e-12);
        }
        let a = RectEnsemble::fixed(SpectralDensity::quarter_circle(1.0).unwrap(), 1.0).unwrap();
        let b = RectEnsemble::fixed(SpectralDensity::quarter_circle(0.8).unwrap(), 1.0).unwrap();
        let r = rect_conv(a.clone(), b.clone(), 1.0).unwrap();
        let s = add_conv(a.symmetrized().unwrap(), b.symmetrized().unwrap()).unwrap();
        let x = r.c_plus + 0.3;
        for t in [0.1, 0.4, 1.5, 4.0] {
            let rq = bssk_quenched_dtheta(&r, x, t).unwrap();
            let sq = ssk_quenched_dtheta(&s, x, t).unwrap();
            assert!((rq - 2.0 * sq).abs() < 1e-8, "θ={t}: {rq} vs {sq}");
        }
        let d = r.principal(x).unwrap();
        let below = bssk_quenched_dtheta(&r, x, d * (1.0 - 1e-12)).unwrap();
        let above = bssk_quenched_dtheta(&r, x, d * (1.0 + 1e-12)).unwrap();
        assert!((below - above).abs() < 1e-9);
    }

    #[test]
    fn one_matrix_goe_crossing() {
        let m = TiltModel::new(single_goe(), 3.0).unwrap();
        assert_eq!(tilt_diff(&m, 0.2).unwrap(), 0.0);
        let golden = (3.0 + 5f64.sqrt()) / 2.0;
        assert!(tilt_diff(&m, golden - 1e-3).unwrap() > 0.0);
        assert!(tilt_diff(&m, golden + 1e-3).unwrap() < 0.0);
        assert!((theta_star_from_tilt(&m).unwrap() - golden).abs() < 1e-10);
    }

    fn fixed_sc(s: f64) -> Ensemble {
        Ensemble::fixed(SpectralDensity::semicircle(s).unwrap())
    }

    #[test]
    fn walled_sum_junctions_and_shape() {
        let conv = add_conv(fixed_sc(1.0), fixed_sc(0.9)).unwrap();
        for x in [conv.c_plus + 0.05, 2.85, 3.2, 3.7] {
            let m = TiltModel::new(conv.clone(), x).unwrap();
            for j in m.junctions() {
                if j.is_finite() {
                    let l = tilt_diff(&m, j * (1.0 - 1e-11)).unwrap();
                    let r = tilt_diff(&m, j * (1.0 + 1e-11)).unwrap();
                    assert!((l - r).abs() < 1e-9, "x={x}, junction {j}");
                }
            }
            let mut signs = 0;
            let mut prev = tilt_diff(&m, m.saturation * 1.0001).unwrap();
            for k in 1..=2000 {
                let t = m.saturation * (1.0001 + 60.0 * k as f64 / 2000.0);
                let v = tilt_diff(&m, t).unwrap();
                if (v < 0.0) != (prev < 0.0) {
                    signs += 1;
                }
                prev = v;
            }
            assert_eq!(signs, 1, "x={x}");
        }
        let m = TiltModel::new(conv, 3.9).unwrap();
        for k in 1..200 {
            let t = m.saturation * (1.0 + 0.5 * k as f64);
            assert!(tilt_diff(&m, t).unwrap() > 0.0);
        }
        assert!(theta_star_from_tilt(&m).unwrap().is_infinite());
    }
}
