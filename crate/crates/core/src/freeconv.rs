//! Additive, multiplicative and rectangular free convolutions, represented
//! lazily through the continued inverse of the convolved transform.
//!
//! Each operation has a linearizer `L` (R, log S̃ or C̃) that adds under
//! convolution, and a saturation map `sat(x, θ)` with `L(p(x)) = sat(x, p(x))`
//! for the matching transform `p` (g, t or d). The continued inverse of `p_C`
//! is `y ↦ sat⁻¹(L_A(y) + L_B(y), y)`; its minimum is the top edge `c₊`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numeric::{self, ROOT_RTOL};
use crate::spectra::{Ensemble, RectEnsemble, SpectralDensity};
use crate::transforms::{self, g_square_from_d, u_func, u_inv, EdgePoint, TransformDomain};

/// Convolution operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConvOp {
    Add,
    Mul,
    Rect { q: f64 },
}

impl ConvOp {
    /// `sat(x, θ)`: the linearizer value reached once the transform saturates at `x`.
    pub fn sat(&self, x: f64, theta: f64) -> f64 {
        match *self {
            ConvOp::Add => x - 1.0 / theta,
            ConvOp::Mul => (x * theta / (theta + 1.0)).ln(),
            ConvOp::Rect { q } => u_func(q, theta * x) / theta,
        }
    }

    /// Inverse of `sat` in its first argument.
    pub fn sat_inv(&self, v: f64, theta: f64) -> f64 {
        match *self {
            ConvOp::Add => v + 1.0 / theta,
            ConvOp::Mul => v.exp() * (theta + 1.0) / theta,
            ConvOp::Rect { q } => u_inv(q, v * theta) / theta,
        }
    }

    /// Prefactor of the free-energy derivatives: 1/2 for the symmetric
    /// calculi, 1 for the rectangular one.
    pub fn scale(&self) -> f64 {
        match self {
            ConvOp::Rect { .. } => 1.0,
            _ => 0.5,
        }
    }

    /// Largest reachable top value given the two walls.
    pub fn hard_bound(&self, wa: f64, wb: f64) -> f64 {
        match self {
            ConvOp::Mul => wa * wb,
            _ => wa + wb,
        }
    }
}

/// One operand of a convolution.
#[derive(Debug, Clone)]
pub enum Factor {
    Sym(Ensemble),
    Rect(RectEnsemble),
}

impl Factor {
    pub fn edge(&self) -> f64 {
        match self {
            Factor::Sym(e) => e.edge(),
            Factor::Rect(r) => r.edge(),
        }
    }

    pub fn wall(&self) -> f64 {
        match self {
            Factor::Sym(e) => e.wall,
            Factor::Rect(r) => r.wall,
        }
    }

    pub fn is_dirac(&self) -> bool {
        match self {
            Factor::Sym(e) => e.density.is_dirac(),
            Factor::Rect(r) => r.lsvd.is_dirac(),
        }
    }

    pub fn as_sym(&self) -> Option<&Ensemble> {
        match self {
            Factor::Sym(e) => Some(e),
            Factor::Rect(_) => None,
        }
    }

    pub fn as_rect(&self) -> Option<&RectEnsemble> {
        match self {
            Factor::Rect(r) => Some(r),
            Factor::Sym(_) => None,
        }
    }

    fn sym(&self) -> Result<&Ensemble> {
        self.as_sym()
            .ok_or_else(|| Error::InvalidInput("expected a symmetric ensemble".into()))
    }

    fn rect(&self) -> Result<&RectEnsemble> {
        self.as_rect()
            .ok_or_else(|| Error::InvalidInput("expected a rectangular ensemble".into()))
    }

    /// Linearizer `L(y)`.
    pub fn lin(&self, op: ConvOp, y: f64) -> Result<f64> {
        let dom = self.lin_domain(op)?;
        // Thresholds and inclusive suprema come from different evaluation paths.
        let y = if dom.inclusive && y > dom.sup && y <= dom.sup * (1.0 + 1e-12) {
            dom.sup
        } else {
            y
        };
        match op {
            ConvOp::Add => self.sym()?.r(y),
            ConvOp::Mul => Ok(self.sym()?.s_tilde(y)?.ln()),
            ConvOp::Rect { .. } => self.rect()?.c_tilde(y),
        }
    }

    pub fn lin_domain(&self, op: ConvOp) -> Result<TransformDomain> {
        match op {
            ConvOp::Add => self.sym()?.r_domain(),
            ConvOp::Mul => self.sym()?.s_domain(),
            ConvOp::Rect { .. } => self.rect()?.c_domain(),
        }
    }

    /// Principal transform at the edge: `g(a₊)`, `t(a₊)` or `d(a₊)`.
    pub fn at_edge(&self, op: ConvOp) -> Result<f64> {
        match op {
            ConvOp::Add => self.sym()?.g_at_edge(),
            ConvOp::Mul => self.sym()?.t_at_edge(),
            ConvOp::Rect { .. } => self.rect()?.d_at_edge(),
        }
    }

    /// Annealed threshold: second-branch transform at the wall.
    pub fn threshold(&self, op: ConvOp) -> Result<f64> {
        match op {
            ConvOp::Add => self.sym()?.wall_threshold(),
            ConvOp::Mul => self.sym()?.t_wall_threshold(),
            ConvOp::Rect { .. } => self.rect()?.d_wall_threshold(),
        }
    }
}

/// Lazy free convolution of two factors.
#[derive(Debug, Clone)]
pub struct ConvolutionModel {
    pub op: ConvOp,
    pub left: Factor,
    pub right: Factor,
    /// Top edge of the convolved spectrum.
    pub c_plus: f64,
    /// Transform of the convolution at its edge (`g_C`, `t_C` or `d_C`); infinite
    /// when the continued inverse has no stationary point.
    pub at_edge: f64,
    domain: TransformDomain,
}

fn intersect(a: TransformDomain, b: TransformDomain) -> TransformDomain {
    if a.sup < b.sup {
        a
    } else if b.sup < a.sup {
        b
    } else {
        TransformDomain {
            sup: a.sup,
            inclusive: a.inclusive && b.inclusive,
        }
    }
}

impl ConvolutionModel {
    fn build(op: ConvOp, left: Factor, right: Factor) -> Result<Self> {
        if left.is_dirac() && right.is_dirac() && !matches!(op, ConvOp::Mul) {
            return Err(Error::DegenerateDensity("both operands are point masses".into()));
        }
        let domain = intersect(left.lin_domain(op)?, right.lin_domain(op)?);
        let mut m = Self {
            op,
            left,
            right,
            c_plus: f64::NAN,
            at_edge: f64::NAN,
            domain,
        };
        let EdgePoint { edge, at_edge } = transforms::edge_from_inverse(|y| m.inverse(y), domain)?;
        m.c_plus = edge;
        m.at_edge = at_edge;
        let bound = m.left.at_edge(op)?.min(m.right.at_edge(op)?);
        if m.at_edge > bound * (1.0 + 1e-7) + 1e-12 {
            return Err(Error::NonConvergence(format!(
                "edge inequality violated: convolved edge value {} exceeds {}",
                m.at_edge, bound
            )));
        }
        Ok(m)
    }

    /// Continued inverse of the convolved transform.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        let v = self.lin(y)?;
        Ok(self.op.sat_inv(v, y))
    }

    /// Linearizer of the convolution, `L_A + L_B`.
    pub fn lin(&self, y: f64) -> Result<f64> {
        Ok(self.left.lin(self.op, y)? + self.right.lin(self.op, y)?)
    }

    pub fn domain(&self) -> TransformDomain {
        self.domain
    }

    /// Whether the convolved transform is finite at the edge.
    pub fn has_finite_edge_value(&self) -> bool {
        self.at_edge.is_finite()
    }

    /// Principal transform `p_C(x)` for `x ≥ c₊` (decreasing).
    pub fn principal(&self, x: f64) -> Result<f64> {
        if x < self.c_plus * (1.0 - 1e-15) - 1e-300 {
            return Err(Error::OutOfSupport { x, edge: self.c_plus });
        }
        if x <= self.c_plus {
            return Ok(self.at_edge);
        }
        let f = |y: f64| Ok(self.inverse(y)? - x);
        let mut hi = if self.at_edge.is_finite() { self.at_edge } else { 1.0 };
        let mut fhi = f(hi)?;
        if !self.at_edge.is_finite() {
            let mut k = 0;
            while fhi > 0.0 {
                hi *= 2.0;
                fhi = f(hi)?;
                k += 1;
                if k > 200 {
                    return Err(Error::NonConvergence("no principal bracket".into()));
                }
            }
        }
        if fhi >= 0.0 {
            return Ok(hi);
        }
        let mut lo = 0.5 * hi.min(1.0 / (x.abs() + 1.0));
        let mut flo = f(lo)?;
        let mut k = 0;
        while flo <= 0.0 {
            lo *= 0.5;
            flo = f(lo)?;
            k += 1;
            if k > 200 {
                return Err(Error::NonConvergence("no principal bracket".into()));
            }
        }
        numeric::brent_root_with(&mut { f }, lo, hi, flo, fhi, ROOT_RTOL)
    }

    /// Second-branch transform `p̄_C(x)` for `x ≥ c₊` (increasing).
    pub fn second(&self, x: f64) -> Result<f64> {
        if !self.at_edge.is_finite() {
            return Ok(f64::INFINITY);
        }
        if x < self.c_plus * (1.0 - 1e-15) - 1e-300 {
            return Err(Error::OutOfSupport { x, edge: self.c_plus });
        }
        if x <= self.c_plus {
            return Ok(self.at_edge);
        }
        let f = |y: f64| Ok(self.inverse(y)? - x);
        let lo = self.at_edge;
        let flo = f(lo)?;
        if flo >= 0.0 {
            return Ok(lo);
        }
        let dom = self.domain;
        let (hi, fhi) = if dom.sup.is_infinite() {
            let mut hi = 2.0 * lo.max(1e-300);
            let mut fhi = f(hi)?;
            let mut k = 0;
            while fhi < 0.0 {
                hi *= 2.0;
                fhi = f(hi)?;
                k += 1;
                if k > 1100 {
                    return Err(Error::NonConvergence("no second-branch bracket".into()));
                }
            }
            (hi, fhi)
        } else if dom.inclusive {
            let fs = f(dom.sup)?;
            if fs < 0.0 {
                return Err(Error::DomainExceeded {
                    y: x,
                    sup: self.inverse(dom.sup)?,
                });
            }
            (dom.sup, fs)
        } else {
            let mut found = None;
            for k in 1..=60 {
                let y = lo + (dom.sup - lo) * (1.0 - 0.5f64.powi(k));
                let fy = f(y)?;
                if fy >= 0.0 {
                    found = Some((y, fy));
                    break;
                }
            }
            found.ok_or(Error::DomainExceeded { y: x, sup: dom.sup })?
        };
        numeric::brent_root_with(&mut { f }, lo, hi, flo, fhi, ROOT_RTOL)
    }

    /// Stieltjes transform of the convolved law at `x ≥ c₊` (for the
    /// rectangular case, of `CCᵀ` at `x²`).
    pub fn g_c(&self, x: f64) -> Result<f64> {
        let p = self.principal(x)?;
        Ok(match self.op {
            ConvOp::Add => p,
            ConvOp::Mul => (p + 1.0) / x,
            ConvOp::Rect { q } => g_square_from_d(q, x, p),
        })
    }

    /// Second Stieltjes branch of the convolved law.
    pub fn g_bar_c(&self, x: f64) -> Result<f64> {
        let p = self.second(x)?;
        Ok(match self.op {
            ConvOp::Add => p,
            ConvOp::Mul => (p + 1.0) / x,
            ConvOp::Rect { q } => g_square_from_d(q, x, p),
        })
    }

    /// Lower bound of the convolved support used for density grids.
    pub fn lower_bound(&self) -> f64 {
        let lo = |f: &Factor| match f {
            Factor::Sym(e) => e.density.lower(),
            Factor::Rect(r) => r.lsvd.lower(),
        };
        match self.op {
            ConvOp::Add => lo(&self.left) + lo(&self.right),
            ConvOp::Mul => lo(&self.left) * lo(&self.right),
            ConvOp::Rect { .. } => 0.0,
        }
    }
}

/// `A ⊞ B`.
pub fn add_conv(a: Ensemble, b: Ensemble) -> Result<ConvolutionModel> {
    ConvolutionModel::build(ConvOp::Add, Factor::Sym(a), Factor::Sym(b))
}

/// `A ⊠ B` for nonnegative spectra.
pub fn mul_conv(a: Ensemble, b: Ensemble) -> Result<ConvolutionModel> {
    for e in [&a, &b] {
        if e.density.lower() < 0.0 {
            return Err(Error::InvalidInput("product needs nonnegative spectra".into()));
        }
    }
    ConvolutionModel::build(ConvOp::Mul, Factor::Sym(a), Factor::Sym(b))
}

/// `A ⊞_q B` for rectangular ensembles of the same shape ratio.
pub fn rect_conv(a: RectEnsemble, b: RectEnsemble, q: f64) -> Result<ConvolutionModel> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidShapeRatio(format!("q = {q} is outside (0, 1]")));
    }
    if a.shape_q != q || b.shape_q != q {
        return Err(Error::InvalidShapeRatio(format!(
            "operand shapes {} and {} differ from {q}",
            a.shape_q, b.shape_q
        )));
    }
    ConvolutionModel::build(ConvOp::Rect { q }, Factor::Rect(a), Factor::Rect(b))
}

fn g_complex(e: &Ensemble, z: Complex64) -> Result<Complex64> {
    e.density.stieltjes_complex(z)
}

/// Density of the convolution on `grid` via subordination at `λ + iε`,
/// `ε = 1e−6`, renormalized to unit mass. Rectangular models are supported
/// at `q = 1` through the symmetrized sum.
pub fn density_on_support(m: &ConvolutionModel, grid: &[f64]) -> Result<SpectralDensity> {
    const EPS: f64 = 1e-6;
    if grid.len() < 2 {
        return Err(Error::InvalidInput("density grid needs at least two points".into()));
    }
    match m.op {
        ConvOp::Add => {
            let (a, b) = (m.left.sym()?, m.right.sym()?);
            let mut omega: Option<Complex64> = None;
            let mut vals = Vec::with_capacity(grid.len());
            for &x in grid {
                let z = Complex64::new(x, EPS);
                let start = omega
                    .map(|w| Complex64::new(x + (w.re - x), w.im.max(EPS)))
                    .unwrap_or(z + Complex64::i());
                let w = subordinate(
                    start,
                    |w| {
                        let ha = 1.0 / g_complex(a, w)? - w;
                        let u = z + ha;
                        let hb = 1.0 / g_complex(b, u)? - u;
                        Ok(z + hb)
                    },
                    |w| w.im >= EPS * 0.5,
                )?;
                omega = Some(w);
                let g = g_complex(a, w)?;
                vals.push((-g.im / std::f64::consts::PI).max(0.0));
            }
            SpectralDensity::tabulated(grid.to_vec(), vals)
        }
        ConvOp::Mul => {
            let (a, b) = (m.left.sym()?, m.right.sym()?);
            // η(z) = t(1/z)/(1 + t(1/z)) and h(z) = η(z)/z.
            let eta = |e: &Ensemble, z: Complex64| -> Result<Complex64> {
                let w = 1.0 / z;
                let t = w * g_complex(e, w)? - 1.0;
                Ok(t / (t + 1.0))
            };
            let mut omega: Option<Complex64> = None;
            let mut vals = Vec::with_capacity(grid.len());
            for &x in grid {
                if x <= 0.0 {
                    vals.push(0.0);
                    continue;
                }
                let wz = Complex64::new(x, EPS);
                let z = 1.0 / wz;
                let start = omega.unwrap_or(z);
                let w = subordinate(
                    start,
                    |om| {
                        let ha = eta(a, om)? / om;
                        let u = z * ha;
                        let hb = eta(b, u)? / u;
                        Ok(z * hb)
                    },
                    |w| w.im < 0.0,
                )?;
                omega = Some(w);
                let ec = eta(a, w)?;
                let tc = ec / (1.0 - ec);
                let g = (tc + 1.0) / wz;
                vals.push((-g.im / std::f64::consts::PI).max(0.0));
            }
            SpectralDensity::tabulated(grid.to_vec(), vals)
        }
        ConvOp::Rect { q } => {
            if q != 1.0 {
                return Err(Error::InvalidShapeRatio(
                    "densities of rectangular sums are available at q = 1 only".into(),
                ));
            }
            let a = m.left.rect()?.symmetrized()?;
            let b = m.right.rect()?.symmetrized()?;
            let sym = add_conv(a, b)?;
            let g: Vec<f64> = grid.iter().map(|s| s.abs()).collect();
            let d = density_on_support(&sym, &g)?;
            let vals: Vec<f64> = grid.iter().map(|&s| 2.0 * d.eval(s.abs())).collect();
            SpectralDensity::tabulated(grid.to_vec(), vals)
        }
    }
}

fn subordinate<F, V>(start: Complex64, mut map: F, valid: V) -> Result<Complex64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
    V: Fn(Complex64) -> bool,
{
    // Newton on map(w) - w with a complex difference quotient; a damped
    // fixed-point step replaces any Newton step leaving the valid half-plane.
    let mut w = start;
    for _ in 0..2_000 {
        let mw = map(w)?;
        let r = mw - w;
        if !(r.re.is_finite() && r.im.is_finite()) {
            return Err(Error::NonConvergence("subordination map left the domain".into()));
        }
        if r.norm() <= 1e-13 * (1.0 + w.norm()) {
            return Ok(w);
        }
        let h = Complex64::new(0.0, 1e-7 * (1.0 + w.norm()).min(w.im.abs().max(1e-9)));
        let d = (map(w + h)? - (w + h) - r) / h;
        let mut next = w - r / d;
        if !(next.re.is_finite() && next.im.is_finite()) || !valid(next) {
            next = w + 0.5 * r;
            if !valid(next) {
                next = mw;
            }
        }
        w = next;
    }
    Err(Error::NonConvergence("subordination iteration did not settle".into()))
}
