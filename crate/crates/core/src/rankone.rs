//! Rank-one deformations: outlier thresholds and rate functions for
//! `B + γ·eeᵀ` and `B^{1/2}(I + γ·eeᵀ)B^{1/2}`, and the exactly solvable sum
//! of two rank-one projectors `w_A·aaᵀ + w_B·bbᵀ`.
//!
//! The spike rates reuse the generic three-regime machinery: the spike is a
//! point-mass ensemble whose wall is the spike eigenvalue.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::freeconv::{add_conv, mul_conv, ConvolutionModel};
use crate::mcvalidate::stream_rng;
use crate::numeric::{self, Edge};
use crate::ratefn::{rate_prod, rate_sum, RateCurve};
use crate::spectra::{Ensemble, RectEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeOp {
    Add,
    Mul,
}

/// Base ensemble deformed by one spike of strength `γ`.
#[derive(Debug, Clone)]
pub struct SpikeModel {
    pub base: Ensemble,
    pub gamma: f64,
    pub op: SpikeOp,
    /// Smallest `γ` producing an outlier.
    pub threshold: f64,
    /// Edge `b₊` below threshold, outlier position above.
    pub typical_top: f64,
}

impl SpikeModel {
    pub fn new(base: Ensemble, gamma: f64, op: SpikeOp) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidInput(format!("spike strength {gamma} must be positive")));
        }
        let at_edge = match op {
            SpikeOp::Add => base.g_at_edge()?,
            SpikeOp::Mul => base.t_at_edge()?,
        };
        let threshold = 1.0 / at_edge;
        let typical_top = if gamma > threshold {
            match op {
                SpikeOp::Add => base.g_inv(1.0 / gamma)?,
                SpikeOp::Mul => base.t_inv(1.0 / gamma)?,
            }
        } else {
            base.edge()
        };
        Ok(Self {
            base,
            gamma,
            op,
            threshold,
            typical_top,
        })
    }

    pub fn has_outlier(&self) -> bool {
        self.gamma > self.threshold
    }

    /// Largest attainable top eigenvalue.
    pub fn hard_bound(&self) -> f64 {
        match self.op {
            SpikeOp::Add => self.base.wall + self.gamma,
            SpikeOp::Mul => self.base.wall * (1.0 + self.gamma),
        }
    }

    pub fn convolution(&self) -> Result<ConvolutionModel> {
        match self.op {
            SpikeOp::Add => add_conv(Ensemble::spike_add(self.gamma)?, self.base.clone()),
            SpikeOp::Mul => mul_conv(Ensemble::spike_mul(self.gamma)?, self.base.clone()),
        }
    }

    pub fn rate_curve(&self) -> Result<RateCurve> {
        let conv = self.convolution()?;
        match self.op {
            SpikeOp::Add => rate_sum(&conv),
            SpikeOp::Mul => rate_prod(&conv),
        }
    }
}

/// Typical top eigenvalue; continuous in `γ` across the threshold.
pub fn bbp_top(model: &SpikeModel) -> f64 {
    model.typical_top
}

pub fn rate_rankone_add(model: &SpikeModel, x: f64) -> Result<f64> {
    if model.op != SpikeOp::Add {
        return Err(Error::InvalidInput(
            "additive rate asked of a multiplicative spike".into(),
        ));
    }
    model.rate_curve()?.eval(x)
}

pub fn rate_rankone_mul(model: &SpikeModel, x: f64) -> Result<f64> {
    if model.op != SpikeOp::Mul {
        return Err(Error::InvalidInput(
            "multiplicative rate asked of an additive spike".into(),
        ));
    }
    model.rate_curve()?.eval(x)
}

/// Typical top singular value of `B + γ·uvᵀ`. Only the threshold is
/// available for rectangular spikes; no rate function is provided.
pub fn bbp_rect_threshold(re: &RectEnsemble, gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidInput(format!("spike strength {gamma} must be positive")));
    }
    let d_edge = re.d_at_edge()?;
    if gamma * d_edge > 1.0 {
        re.d_inv(1.0 / gamma)
    } else {
        Ok(re.edge())
    }
}

/// Closed-form rate of the top eigenvalue of `GOE(σ) + γ·eeᵀ`.
pub fn goe_spike_rate(sigma: f64, gamma: f64, x: f64) -> f64 {
    let s2 = sigma * sigma;
    if x.is_nan() || x < 2.0 * sigma {
        return f64::INFINITY;
    }
    let r = (x * x - 4.0 * s2).max(0.0).sqrt();
    let x_c1 = gamma + s2 / gamma;
    if gamma <= sigma && x <= x_c1 {
        return (x * r / (4.0 * s2) + (2.0 * sigma / (x + r)).ln()).max(0.0);
    }
    let v = (x * x - 4.0 * gamma * x + 2.0 * (gamma * gamma + s2) + x * r) / (8.0 * s2)
        + 0.5 * (2.0 * gamma / (x + r)).ln();
    v.max(0.0)
}

/// Closed-form rate of the top eigenvalue of a spiked white Wishart matrix of
/// ratio 1 with covariance `I + γ·eeᵀ`.
pub fn wishart_spike_rate(gamma: f64, x: f64) -> f64 {
    if x.is_nan() || x < 4.0 {
        return f64::INFINITY;
    }
    let r = (x * (x - 4.0)).max(0.0).sqrt();
    let v = if gamma <= 1.0 {
        if x <= 2.0 + gamma + 1.0 / gamma {
            r / 2.0 + ((x - 2.0 - r) / 2.0).ln()
        } else {
            (x - gamma * x + (1.0 + gamma) * r) / (4.0 * (1.0 + gamma))
                + 0.5 * ((x * gamma - 2.0 * gamma - gamma * r) / 2.0).ln()
        }
    } else {
        let u = ((x - 4.0) / x).sqrt();
        (1.0 + 1.0 / gamma) / 2.0
            + (x - 2.0 - gamma - 1.0 / gamma) / (2.0 * (1.0 + gamma))
            + (r - x) / 4.0
            + 0.5 * (gamma * (1.0 - u) / (1.0 + u)).ln()
    };
    v.max(0.0)
}

/// `w_A·aaᵀ + w_B·bbᵀ` with `a`, `b` independent uniform unit vectors.
/// Invariant: `w_A ≥ w_B > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rk1PlusRk1 {
    pub w_a: f64,
    pub w_b: f64,
}

impl Rk1PlusRk1 {
    /// Orders the weights so that `w_a ≥ w_b`.
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1 > 0.0 && w2 > 0.0) || !w1.is_finite() || !w2.is_finite() {
            return Err(Error::InvalidInput(format!("weights {w1}, {w2} must be positive")));
        }
        Ok(Self {
            w_a: w1.max(w2),
            w_b: w1.min(w2),
        })
    }

    pub fn lower(&self) -> f64 {
        self.w_a
    }

    pub fn upper(&self) -> f64 {
        self.w_a + self.w_b
    }

    /// Top eigenvalue for squared overlap `φ = (a·b)²`.
    pub fn top_from_overlap(&self, phi: f64) -> f64 {
        let (wa, wb) = (self.w_a, self.w_b);
        let d = wa - wb;
        (wa + wb + (d * d + 4.0 * wa * wb * phi).sqrt()) / 2.0
    }

    /// `1 − φ` as a function of the top eigenvalue.
    fn co_overlap(&self, lambda: f64) -> f64 {
        lambda * (self.upper() - lambda) / (self.w_a * self.w_b)
    }
}

fn ln_beta_half(n: usize) -> f64 {
    let b = n as f64 / 2.0;
    ln_gamma(0.5) + ln_gamma(b) - ln_gamma(b + 0.5)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("size {n} must be at least 2")));
    }
    Ok(())
}

/// Exact finite-`n` density of the top eigenvalue; the squared overlap is
/// Beta(½, n/2).
pub fn rk1rk1_density(m: &Rk1PlusRk1, n: usize, lambda: f64) -> Result<f64> {
    rk1rk1_density_above(m, n, lambda - m.lower())
}

/// Same density at `λ = w_A + t`; exact near `w_A`, where `λ` itself would
/// lose the digits of `t`.
pub fn rk1rk1_density_above(m: &Rk1PlusRk1, n: usize, t: f64) -> Result<f64> {
    check_n(n)?;
    let (wa, wb) = (m.w_a, m.w_b);
    if !(t > 0.0 && t < wb) {
        return Ok(0.0);
    }
    let phi = (t * (t + wa - wb) / (wa * wb)).clamp(0.0, 1.0);
    let u = ((wa + t) * (wb - t) / (wa * wb)).clamp(0.0, 1.0);
    let b = n as f64 / 2.0;
    let jac = (2.0 * t + wa - wb) / (wa * wb);
    let log = jac.ln() - ln_beta_half(n) - 0.5 * phi.ln() + (b - 1.0) * u.ln();
    Ok(log.exp())
}

/// `log ℙ[λ₁ ≥ x]` at size `n`, by quadrature of the exact law.
pub fn rk1rk1_log_tail(m: &Rk1PlusRk1, n: usize, x: f64) -> Result<f64> {
    check_n(n)?;
    if x.is_nan() || x >= m.upper() {
        return Ok(f64::NEG_INFINITY);
    }
    if x <= m.lower() {
        return Ok(0.0);
    }
    let ux = m.co_overlap(x).clamp(0.0, 1.0);
    let b = n as f64 / 2.0;
    // u = ux·s maps the tail onto s ∈ [0, 1]; the factor ux^b is pulled out.
    let body = numeric::integrate_edge(
        |s| Ok((1.0 - ux * s).powf(-0.5) * s.powf(b - 1.0)),
        0.0,
        1.0,
        if n == 2 { Edge::None } else { Edge::Left },
        1e-14,
    )?;
    Ok(b * ux.ln() + body.ln() - ln_beta_half(n))
}

/// Large-`n` rate `−½[log((w_A+w_B−x)/w_B) + log(x/w_A)]`, `+∞` outside
/// `[w_A, w_A+w_B)`.
pub fn rk1rk1_rate(m: &Rk1PlusRk1, x: f64) -> f64 {
    if x.is_nan() || x < m.lower() || x >= m.upper() {
        return f64::INFINITY;
    }
    (-0.5 * m.co_overlap(x).ln()).max(0.0)
}

/// One draw of the top eigenvalue at size `n`.
pub fn rk1rk1_draw<R: Rng + ?Sized>(m: &Rk1PlusRk1, n: usize, rng: &mut R) -> f64 {
    let x = Gamma::new(0.5, 1.0).expect("valid shape").sample(rng);
    let y = Gamma::new(n as f64 / 2.0, 1.0).expect("valid shape").sample(rng);
    let phi = if x + y > 0.0 { x / (x + y) } else { 0.0 };
    m.top_from_overlap(phi).clamp(m.lower(), m.upper())
}

/// `count` draws; draw `i` uses stream `i` of the master seed, so the output
/// does not depend on the thread count.
pub fn rk1rk1_sample(m: &Rk1PlusRk1, n: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    check_n(n)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| rk1rk1_draw(m, n, &mut stream_rng(seed, i as u64)))
        .collect())
}
