//! Stieltjes, T and D transforms on both branches, their continued inverses,
//! and the linearizing transforms R, S̃ and C̃.
//!
//! Conventions: `S̃(y) = t⁻¹(y)·y/(y+1)` (so `S̃` of a point mass `m` is `m`,
//! the reciprocal of the usual S-transform) and `C̃(y) = U(y·d⁻¹(y))/y`.
//! Continued inverses use the principal branch for arguments up to the value
//! at the edge and the second branch beyond it.

use crate::error::{Error, Result};
use crate::numeric::{self, ROOT_RTOL};
use crate::spectra::{DensityKind, Ensemble, Potential, RectEnsemble, SpectralDensity};

/// Supremum of the argument range of a continued inverse transform.
/// `inclusive` marks a finite supremum that is attained (no continuation
/// beyond the edge value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformDomain {
    pub sup: f64,
    pub inclusive: bool,
}

impl TransformDomain {
    pub fn admits(&self, y: f64) -> bool {
        y > 0.0 && (y < self.sup || (self.inclusive && y <= self.sup))
    }
}

/// Which root of the quadratic-type relation a value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Principal,
    Second,
}

fn closed_sc(e: &Ensemble) -> Option<f64> {
    if e.numeric {
        return None;
    }
    match (e.density.kind(), &e.potential) {
        (DensityKind::Semicircle { sigma }, None) => Some(*sigma),
        (DensityKind::Semicircle { sigma }, Some(Potential::Gaussian { sigma: s })) if s == sigma => Some(*sigma),
        _ => None,
    }
}

fn closed_mp(e: &Ensemble) -> Option<(f64, f64)> {
    if e.numeric {
        return None;
    }
    match (e.density.kind(), &e.potential) {
        (DensityKind::MarchenkoPastur { q, scale }, None) => Some((*q, *scale)),
        (DensityKind::MarchenkoPastur { q, scale }, Some(Potential::Wishart { q: q2, scale: s2 }))
            if q == q2 && scale == s2 =>
        {
            Some((*q, *scale))
        }
        _ => None,
    }
}

fn dirac_at(d: &SpectralDensity) -> Option<f64> {
    match d.kind() {
        DensityKind::Dirac { at } => Some(*at),
        _ => None,
    }
}

fn domain_err(y: f64, dom: TransformDomain) -> Error {
    Error::DomainExceeded { y, sup: dom.sup }
}

impl Ensemble {
    /// Principal Stieltjes branch for `z ≥ a₊`.
    pub fn g(&self, z: f64) -> Result<f64> {
        let a = self.edge();
        if z < a {
            return Err(Error::OutOfSupport { x: z, edge: a });
        }
        if z == a && self.density.is_dirac() {
            return Ok(f64::INFINITY);
        }
        if self.numeric {
            self.density.stieltjes_quad(z)
        } else {
            self.density.stieltjes(z)
        }
    }

    pub fn g_prime(&self, z: f64) -> Result<f64> {
        let a = self.edge();
        if z < a {
            return Err(Error::OutOfSupport { x: z, edge: a });
        }
        self.density.stieltjes_prime(z)
    }

    /// `g(a₊)`, possibly infinite.
    pub fn g_at_edge(&self) -> Result<f64> {
        self.g(self.edge())
    }

    /// Second branch `ḡ = V′ − g`; point masses use `ḡ := g`; potential-free
    /// densities only at the edge, where `ḡ = g`.
    pub fn g_bar(&self, x: f64) -> Result<f64> {
        let a = self.edge();
        if x < a {
            return Err(Error::OutOfSupport { x, edge: a });
        }
        if self.density.is_dirac() {
            return self.g(x);
        }
        match &self.potential {
            Some(p) => {
                if x == a {
                    return self.g(a);
                }
                Ok(p.v_prime(x) - self.g(x)?)
            }
            None if x == a => self.g(a),
            None => Err(Error::DomainExceeded { y: x, sup: a }),
        }
    }

    pub fn g_bar_prime(&self, x: f64) -> Result<f64> {
        if self.density.is_dirac() {
            return self.g_prime(x);
        }
        match &self.potential {
            Some(p) => Ok(p.v_second(x) - self.g_prime(x)?),
            None => Err(Error::DomainExceeded { y: x, sup: self.edge() }),
        }
    }

    /// Domain of the continued inverse of `g` (and of R).
    pub fn r_domain(&self) -> Result<TransformDomain> {
        if self.density.is_dirac() {
            return Ok(TransformDomain {
                sup: f64::INFINITY,
                inclusive: false,
            });
        }
        match &self.potential {
            None => Ok(TransformDomain {
                sup: self.g_at_edge()?,
                inclusive: true,
            }),
            Some(p) => match p.asymptotic_slope() {
                Some(s) => Ok(TransformDomain {
                    sup: s,
                    inclusive: false,
                }),
                None => {
                    let far = self.edge() + 1e6 * (1.0 + self.edge().abs());
                    Ok(TransformDomain {
                        sup: self.g_bar(far)?,
                        inclusive: false,
                    })
                }
            },
        }
    }

    /// Annealed threshold `ḡ(w)`; at an infinite wall the domain supremum.
    pub fn wall_threshold(&self) -> Result<f64> {
        if self.wall.is_infinite() {
            Ok(self.r_domain()?.sup)
        } else {
            self.g_bar(self.wall)
        }
    }

    /// Continued inverse of `g`: principal root for `y ≤ g(a₊)`, second-branch
    /// root beyond.
    pub fn g_inv(&self, y: f64) -> Result<f64> {
        let dom = self.r_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(a) = dirac_at(&self.density) {
            return Ok(a + 1.0 / y);
        }
        if let Some(s) = closed_sc(self) {
            return Ok(s * s * y + 1.0 / y);
        }
        if let Some((q, s)) = closed_mp(self) {
            return Ok(s / (1.0 - q * s * y) + 1.0 / y);
        }
        self.g_inv_numeric(y)
    }

    fn g_inv_numeric(&self, y: f64) -> Result<f64> {
        let a = self.edge();
        let ge = self.g_at_edge()?;
        if y <= ge {
            let mean = self.density.mean()?;
            let guess = (mean + 1.0 / y - a).max(1e-9 * (1.0 + a.abs()));
            numeric::root_decreasing_from(|z| Ok(self.g(z)? - y), a, guess, ROOT_RTOL)
        } else {
            let step = 1.0 + a.abs();
            numeric::root_increasing_from(|x| Ok(self.g_bar(x)? - y), a, step, ROOT_RTOL)
        }
    }

    /// R-transform `g⁻¹(y) − 1/y`.
    pub fn r(&self, y: f64) -> Result<f64> {
        let dom = self.r_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(a) = dirac_at(&self.density) {
            return Ok(a);
        }
        if let Some(s) = closed_sc(self) {
            return Ok(s * s * y);
        }
        if let Some((q, s)) = closed_mp(self) {
            return Ok(s / (1.0 - q * s * y));
        }
        Ok(self.g_inv_numeric(y)? - 1.0 / y)
    }

    /// T-transform `z·g(z) − 1`.
    pub fn t(&self, z: f64) -> Result<f64> {
        let g = self.g(z)?;
        if g.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok(z * g - 1.0)
    }

    pub fn t_prime(&self, z: f64) -> Result<f64> {
        Ok(self.g(z)? + z * self.g_prime(z)?)
    }

    /// Second T branch `x·ḡ(x) − 1`.
    pub fn t_bar(&self, x: f64) -> Result<f64> {
        let g = self.g_bar(x)?;
        if g.is_infinite() {
            return Ok(f64::INFINITY);
        }
        Ok(x * g - 1.0)
    }

    pub fn t_at_edge(&self) -> Result<f64> {
        self.t(self.edge())
    }

    fn require_positive(&self) -> Result<()> {
        if self.density.lower() < 0.0 || self.edge() <= 0.0 {
            return Err(Error::InvalidInput(
                "T and S̃ transforms need a nonnegative spectrum".into(),
            ));
        }
        Ok(())
    }

    /// Domain of the continued inverse of `t` (and of S̃).
    pub fn s_domain(&self) -> Result<TransformDomain> {
        self.require_positive()?;
        if self.density.is_dirac() || self.potential.is_some() {
            return Ok(TransformDomain {
                sup: f64::INFINITY,
                inclusive: false,
            });
        }
        Ok(TransformDomain {
            sup: self.t_at_edge()?,
            inclusive: true,
        })
    }

    /// Annealed threshold `t̄(w)` of the product calculus.
    pub fn t_wall_threshold(&self) -> Result<f64> {
        if self.wall.is_infinite() {
            Ok(self.s_domain()?.sup)
        } else {
            self.t_bar(self.wall)
        }
    }

    /// Continued inverse of `t`.
    pub fn t_inv(&self, y: f64) -> Result<f64> {
        let dom = self.s_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(a) = dirac_at(&self.density) {
            return Ok(a * (y + 1.0) / y);
        }
        if let Some((q, s)) = closed_mp(self) {
            return Ok(s * (1.0 + q * y) * (y + 1.0) / y);
        }
        let a = self.edge();
        if y <= self.t_at_edge()? {
            let mean = self.density.mean()?;
            let guess = (mean * (1.0 + 1.0 / y) - a).max(1e-9 * (1.0 + a));
            numeric::root_decreasing_from(|z| Ok(self.t(z)? - y), a, guess, ROOT_RTOL)
        } else {
            numeric::root_increasing_from(|x| Ok(self.t_bar(x)? - y), a, 1.0 + a, ROOT_RTOL)
        }
    }

    /// Modified S-transform `S̃(y) = t⁻¹(y)·y/(y+1)`.
    pub fn s_tilde(&self, y: f64) -> Result<f64> {
        let dom = self.s_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(a) = dirac_at(&self.density) {
            return Ok(a);
        }
        if let Some((q, s)) = closed_mp(self) {
            return Ok(s * (1.0 + q * y));
        }
        Ok(self.t_inv(y)? * y / (y + 1.0))
    }
}

/// `U(y)`: the root of `(1+U)(1+qU) = y²` with `U(1) = 0`.
pub fn u_func(q: f64, y: f64) -> f64 {
    2.0 * (y * y - 1.0) / (((1.0 - q) * (1.0 - q) + 4.0 * q * y * y).sqrt() + 1.0 + q)
}

/// `U⁻¹(z) = √((1+z)(1+qz))` for `z ≥ −1`.
pub fn u_inv(q: f64, z: f64) -> f64 {
    ((1.0 + z) * (1.0 + q * z)).max(0.0).sqrt()
}

/// `f_q(z) = √((1−q)² + 4qz²)/2`.
pub fn f_q(q: f64, z: f64) -> f64 {
    0.5 * ((1.0 - q) * (1.0 - q) + 4.0 * q * z * z).sqrt()
}

/// `d` from a square-law Stieltjes value `g` at `z²`.
fn d_from_g(q: f64, z: f64, g: f64) -> f64 {
    if g.is_infinite() {
        return f64::INFINITY;
    }
    (q * z * z * g * g + (1.0 - q) * g).max(0.0).sqrt()
}

/// Square-law Stieltjes value at `x²` recovered from `d(x)`:
/// the positive root of `q x² g² + (1−q) g = d²`.
pub fn g_square_from_d(q: f64, x: f64, d: f64) -> f64 {
    let disc = ((1.0 - q) * (1.0 - q) + 4.0 * q * x * x * d * d).sqrt();
    2.0 * d * d / (disc + (1.0 - q))
}

impl RectEnsemble {
    fn closed_gauss(&self) -> Option<f64> {
        if self.square.numeric {
            return None;
        }
        match (self.lsvd.kind(), &self.square.potential) {
            (DensityKind::GaussRectLsvd { sigma, q }, Some(Potential::Wishart { q: q2, .. }))
                if *q == self.shape_q && q == q2 =>
            {
                Some(*sigma)
            }
            (DensityKind::GaussRectLsvd { sigma, q }, None) if *q == self.shape_q => Some(*sigma),
            (DensityKind::QuarterCircle { sigma }, Some(Potential::Wishart { q, .. }))
                if self.shape_q == 1.0 && *q == 1.0 =>
            {
                Some(*sigma)
            }
            (DensityKind::QuarterCircle { sigma }, None) if self.shape_q == 1.0 => Some(*sigma),
            _ => None,
        }
    }

    /// D-transform on the principal branch, for `z ≥ a₊`.
    pub fn d(&self, z: f64) -> Result<f64> {
        let a = self.edge();
        if z < a {
            return Err(Error::OutOfSupport { x: z, edge: a });
        }
        if let Some(0.0) = dirac_at(&self.lsvd) {
            return Ok(1.0 / z);
        }
        let g = self.square.g((z * z).max(self.square.edge()))?;
        Ok(d_from_g(self.shape_q, z, g))
    }

    /// Second D branch built from `ḡ` of the square law.
    pub fn d_bar(&self, x: f64) -> Result<f64> {
        let a = self.edge();
        if x < a {
            return Err(Error::OutOfSupport { x, edge: a });
        }
        if let Some(0.0) = dirac_at(&self.lsvd) {
            return Ok(1.0 / x);
        }
        let g = self.square.g_bar((x * x).max(self.square.edge()))?;
        Ok(d_from_g(self.shape_q, x, g))
    }

    pub fn d_at_edge(&self) -> Result<f64> {
        self.d(self.edge())
    }

    /// Domain of the continued inverse of `d` (and of C̃).
    pub fn c_domain(&self) -> Result<TransformDomain> {
        if self.lsvd.is_dirac() {
            return Ok(TransformDomain {
                sup: f64::INFINITY,
                inclusive: false,
            });
        }
        match &self.square.potential {
            None => Ok(TransformDomain {
                sup: self.d_at_edge()?,
                inclusive: true,
            }),
            Some(p) => match p.asymptotic_slope() {
                Some(_) => Ok(TransformDomain {
                    sup: f64::INFINITY,
                    inclusive: false,
                }),
                None => {
                    let far = self.edge() + 1e6 * (1.0 + self.edge());
                    Ok(TransformDomain {
                        sup: self.d_bar(far)?,
                        inclusive: false,
                    })
                }
            },
        }
    }

    /// Annealed threshold `d̄(w)` of the rectangular calculus.
    pub fn d_wall_threshold(&self) -> Result<f64> {
        if self.wall.is_infinite() {
            Ok(self.c_domain()?.sup)
        } else {
            self.d_bar(self.wall)
        }
    }

    /// Continued inverse of `d`.
    pub fn d_inv(&self, y: f64) -> Result<f64> {
        let dom = self.c_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(0.0) = dirac_at(&self.lsvd) {
            return Ok(1.0 / y);
        }
        let q = self.shape_q;
        if let Some(s) = self.closed_gauss() {
            let s2 = s * s;
            return Ok(((1.0 + s2 * y * y) * (1.0 + q * s2 * y * y)).sqrt() / y);
        }
        let a = self.edge();
        if y <= self.d_at_edge()? {
            let guess = (1.0 / y).max(1e-9 * (1.0 + a));
            numeric::root_decreasing_from(|z| Ok(self.d(z)? - y), a, guess, ROOT_RTOL)
        } else {
            numeric::root_increasing_from(|x| Ok(self.d_bar(x)? - y), a, 1.0 + a, ROOT_RTOL)
        }
    }

    /// Rectangular C̃-transform `U(y·d⁻¹(y))/y`.
    pub fn c_tilde(&self, y: f64) -> Result<f64> {
        let dom = self.c_domain()?;
        if !dom.admits(y) {
            return Err(domain_err(y, dom));
        }
        if let Some(0.0) = dirac_at(&self.lsvd) {
            return Ok(0.0);
        }
        if let Some(s) = self.closed_gauss() {
            return Ok(s * s * y);
        }
        Ok(u_func(self.shape_q, y * self.d_inv(y)?) / y)
    }
}

/// Top edge and the value of the transform there, recovered from a
/// continued inverse that decreases then increases on `(0, sup)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgePoint {
    pub edge: f64,
    /// Stationary argument `y*`; infinite when the inverse keeps decreasing.
    pub at_edge: f64,
}

/// Locates the minimum of `inv` on `(0, dom.sup)`.
pub fn edge_from_inverse<F>(inv: F, dom: TransformDomain) -> Result<EdgePoint>
where
    F: Fn(f64) -> Result<f64>,
{
    let hi = if dom.sup.is_infinite() {
        1e8
    } else if dom.inclusive {
        dom.sup
    } else {
        dom.sup * (1.0 - 1e-10)
    };
    let lo = 1e-8f64.min(hi * 1e-8);
    const N: usize = 64;
    let ys: Vec<f64> = (0..N).map(|k| lo * (hi / lo).powf(k as f64 / (N - 1) as f64)).collect();
    let mut vals = Vec::with_capacity(N);
    for &y in &ys {
        vals.push(inv(y)?);
    }
    let (imin, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::NonConvergence("empty edge grid".into()))?;
    if imin == 0 {
        return Err(Error::NonConvergence(
            "continued inverse has no interior minimum".into(),
        ));
    }
    if imin == N - 1 {
        if dom.sup.is_infinite() {
            let far = 1e14;
            return Ok(EdgePoint {
                edge: inv(far)?,
                at_edge: f64::INFINITY,
            });
        }
        // The minimum may sit inside the last grid cell.
        let (y, v) = numeric::brent_min(&inv, ys[N - 2], hi, 1e-12)?;
        if v < vals[N - 1] && y < hi {
            return Ok(EdgePoint { edge: v, at_edge: y });
        }
        return Ok(EdgePoint {
            edge: vals[N - 1],
            at_edge: hi,
        });
    }
    let (y, v) = numeric::brent_min(&inv, ys[imin - 1], ys[imin + 1], 1e-12)?;
    if v <= vals[imin] {
        Ok(EdgePoint { edge: v, at_edge: y })
    } else {
        Ok(EdgePoint {
            edge: vals[imin],
            at_edge: ys[imin],
        })
    }
}

/// Stieltjes transform of a density outside its support.
pub fn stieltjes(d: &SpectralDensity, z: f64) -> Result<f64> {
    d.stieltjes(z)
}

/// Second Stieltjes branch of an ensemble.
pub fn stieltjes_second(e: &Ensemble, x: f64) -> Result<f64> {
    e.g_bar(x)
}

/// `z·g(z) − 1`.
pub fn t_transform(d: &SpectralDensity, z: f64) -> Result<f64> {
    Ok(z * d.stieltjes(z)? - 1.0)
}

pub fn t_second(e: &Ensemble, x: f64) -> Result<f64> {
    e.t_bar(x)
}

/// D-transform of a singular-value density with shape `q`.
pub fn d_transform(rho: &SpectralDensity, q: f64, z: f64) -> Result<f64> {
    RectEnsemble::fixed(rho.clone(), q)?.d(z)
}

pub fn d_second(re: &RectEnsemble, x: f64) -> Result<f64> {
    re.d_bar(x)
}

pub fn r_transform(e: &Ensemble, y: f64) -> Result<f64> {
    e.r(y)
}

pub fn s_transform(e: &Ensemble, y: f64) -> Result<f64> {
    e.s_tilde(y)
}

pub fn c_transform(re: &RectEnsemble, y: f64) -> Result<f64> {
    re.c_tilde(y)
}
