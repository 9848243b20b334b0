//! Limiting spectral densities, invariant ensembles with walls, and a
//! Metropolis sampler for the constrained Coulomb gas.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{self, Edge};

/// Closed real interval `[lower, upper]` carrying a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub lower: f64,
    pub upper: f64,
}

impl SupportInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || upper < lower {
            return Err(Error::InvalidInput(format!(
                "support [{lower}, {upper}] is not a finite interval"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Concrete form of a density. Wrapper kinds are evaluated through their
/// inner density so that transforms stay exact where the inner one is.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Semicircle {
        sigma: f64,
    },
    MarchenkoPastur {
        q: f64,
        scale: f64,
    },
    QuarterCircle {
        sigma: f64,
    },
    GaussRectLsvd {
        sigma: f64,
        q: f64,
    },
    Dirac {
        at: f64,
    },
    Tabulated {
        grid: Arc<[f64]>,
        values: Arc<[f64]>,
    },
    /// `(ρ(x) + ρ(−x))/2` for `ρ` on a nonnegative support.
    Symmetrized(Box<SpectralDensity>),
    /// Law of `s²` when `s` has the inner density.
    Squared(Box<SpectralDensity>),
    /// Law of `√λ` when `λ ≥ 0` has the inner density.
    Rooted(Box<SpectralDensity>),
}

/// A probability density on a compact interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    kind: DensityKind,
    support: SupportInterval,
    edge_coeff: Option<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn shape(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidShapeRatio(format!("q = {q} is outside (0, 1]")))
    }
}

impl SpectralDensity {
    /// Semicircle of variance `σ²` on `[−2σ, 2σ]`.
    pub fn semicircle(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(Self {
            kind: DensityKind::Semicircle { sigma },
            support: SupportInterval::new(-2.0 * sigma, 2.0 * sigma)?,
            edge_coeff: Some(1.0 / sigma),
        })
    }

    /// Marchenko–Pastur law of `XXᵀ/M` with `N/M = q`.
    pub fn marchenko_pastur(q: f64) -> Result<Self> {
        Self::marchenko_pastur_scaled(q, 1.0)
    }

    /// Marchenko–Pastur law dilated by `scale`.
    pub fn marchenko_pastur_scaled(q: f64, scale: f64) -> Result<Self> {
        shape(q)?;
        positive("scale", scale)?;
        let r = q.sqrt();
        let c32 = q.powf(-0.75) / ((1.0 + r) * (1.0 + r)) * scale.powf(-1.5);
        Ok(Self {
            kind: DensityKind::MarchenkoPastur { q, scale },
            support: SupportInterval::new(scale * (1.0 - r).powi(2), scale * (1.0 + r).powi(2))?,
            edge_coeff: Some(c32.powf(2.0 / 3.0)),
        })
    }

    /// Singular-value law of a square Gaussian matrix, on `[0, 2σ]`.
    pub fn quarter_circle(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(Self {
            kind: DensityKind::QuarterCircle { sigma },
            support: SupportInterval::new(0.0, 2.0 * sigma)?,
            edge_coeff: Some(2f64.powf(2.0 / 3.0) / sigma),
        })
    }

    /// Singular-value law of an `N×M` Gaussian matrix with entry variance
    /// `σ²/M` and `q = N/M`.
    pub fn gauss_rect_lsvd(sigma: f64, q: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        shape(q)?;
        let r = q.sqrt();
        let top = sigma * (1.0 + r);
        let mp_c32 = q.powf(-0.75) / ((1.0 + r) * (1.0 + r)) * sigma.powi(-3);
        let c32 = (2.0 * top).powf(1.5) * mp_c32;
        Ok(Self {
            kind: DensityKind::GaussRectLsvd { sigma, q },
            support: SupportInterval::new(sigma * (1.0 - r), top)?,
            edge_coeff: Some(c32.powf(2.0 / 3.0)),
        })
    }

    /// Unit point mass at `a`.
    pub fn dirac(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::InvalidInput(format!("dirac location {a} is not finite")));
        }
        Ok(Self {
            kind: DensityKind::Dirac { at: a },
            support: SupportInterval::new(a, a)?,
            edge_coeff: None,
        })
    }

    /// Piecewise-linear density through `(grid[i], values[i])`, renormalized
    /// to unit mass. The grid must be strictly ascending.
    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return Err(Error::InvalidInput(
                "tabulated density needs at least two nodes and matching lengths".into(),
            ));
        }
        if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "tabulated grid must be finite and strictly ascending".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "tabulated values must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = grid
            .windows(2)
            .zip(values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateDensity("tabulated density has zero mass".into()));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / mass).collect();
        let support = SupportInterval::new(grid[0], grid[grid.len() - 1])?;
        Ok(Self {
            kind: DensityKind::Tabulated {
                grid: grid.into(),
                values: values.into(),
            },
            support,
            edge_coeff: None,
        })
    }

    /// Tabulates `f` on `n` Chebyshev–Lobatto nodes of `[lower, upper]`.
    pub fn tabulate_fn<F: Fn(f64) -> f64>(f: F, lower: f64, upper: f64, n: usize) -> Result<Self> {
        let grid = numeric::chebyshev_grid(lower, upper, n);
        let values = grid.iter().map(|&x| f(x).max(0.0)).collect();
        Self::tabulated(grid, values)
    }

    /// Reads a two-column `x,density` CSV file.
    pub fn from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Io("missing column".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("bad number: {e}")))
            };
            grid.push(parse(0)?);
            values.push(parse(1)?);
        }
        Self::tabulated(grid, values)
    }

    /// Writes the density as `x,density` rows; closed forms are sampled on
    /// `n` Chebyshev nodes.
    pub fn to_csv<P: AsRef<Path>>(&self, path: P, n: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x", "density"])?;
        let grid: Vec<f64> = match &self.kind {
            DensityKind::Tabulated { grid, .. } => grid.to_vec(),
            _ => numeric::chebyshev_grid(self.support.lower, self.support.upper, n),
        };
        for x in grid {
            w.write_record([format!("{x:.17e}"), format!("{:.17e}", self.eval(x))])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    pub fn lower(&self) -> f64 {
        self.support.lower
    }

    pub fn upper(&self) -> f64 {
        self.support.upper
    }

    /// Square-root edge coefficient `γ₀`: `μ(a₊−ε)·π/√ε → γ₀^{3/2}`.
    pub fn edge_coeff(&self) -> Option<f64> {
        self.edge_coeff.or_else(|| match &self.kind {
            DensityKind::Symmetrized(inner) => inner.edge_coeff().map(|c| (0.5 * c.powf(1.5)).powf(2.0 / 3.0)),
            DensityKind::Squared(inner) => {
                let s = inner.upper();
                inner
                    .edge_coeff()
                    .map(|c| (c.powf(1.5) / (2.0 * s).powf(1.5)).powf(2.0 / 3.0))
            }
            DensityKind::Rooted(inner) => {
                let s = self.upper();
                inner
                    .edge_coeff()
                    .map(|c| (c.powf(1.5) * (2.0 * s).powf(1.5)).powf(2.0 / 3.0))
            }
            _ => None,
        })
    }

    /// Fits `γ₀` from density values on `ε ∈ [1e−6, 1e−3]` below the edge.
    pub fn estimate_edge_coeff(&self) -> Option<f64> {
        let a = self.upper();
        let eps: Vec<f64> = (0..16).map(|k| 1e-6 * 1e3f64.powf(k as f64 / 15.0)).collect();
        let ys: Vec<f64> = eps.iter().map(|&e| self.eval(a - e) * PI / e.sqrt()).collect();
        if ys.iter().any(|y| !y.is_finite() || *y <= 0.0) {
            return None;
        }
        let (_, intercept) = numeric::linear_fit(&eps, &ys);
        (intercept > 0.0).then(|| intercept.powf(2.0 / 3.0))
    }

    pub fn is_dirac(&self) -> bool {
        match &self.kind {
            DensityKind::Dirac { .. } => true,
            DensityKind::Symmetrized(d) | DensityKind::Squared(d) | DensityKind::Rooted(d) => d.is_dirac(),
            _ => false,
        }
    }

    /// Density value; zero outside the support and for point masses.
    pub fn eval(&self, x: f64) -> f64 {
        if !self.support.contains(x) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Semicircle { sigma } => {
                let s2 = sigma * sigma;
                (4.0 * s2 - x * x).max(0.0).sqrt() / (2.0 * PI * s2)
            }
            DensityKind::MarchenkoPastur { q, scale } => {
                let u = x / scale;
                if u <= 0.0 {
                    return 0.0;
                }
                let r = q.sqrt();
                let (lo, hi) = ((1.0 - r).powi(2), (1.0 + r).powi(2));
                ((hi - u) * (u - lo)).max(0.0).sqrt() / (2.0 * PI * q * u) / scale
            }
            DensityKind::QuarterCircle { sigma } => {
                let s2 = sigma * sigma;
                (4.0 * s2 - x * x).max(0.0).sqrt() / (PI * s2)
            }
            DensityKind::GaussRectLsvd { sigma, q } => {
                let s2 = sigma * sigma;
                let u = x * x / s2;
                if u <= 0.0 {
                    if *q == 1.0 {
                        return 1.0 / (PI * sigma);
                    }
                    return 0.0;
                }
                let r = q.sqrt();
                let (lo, hi) = ((1.0 - r).powi(2), (1.0 + r).powi(2));
                2.0 * x * ((hi - u) * (u - lo)).max(0.0).sqrt() / (2.0 * PI * q * u) / s2
            }
            DensityKind::Dirac { .. } => 0.0,
            DensityKind::Tabulated { grid, values } => interp(grid, values, x),
            DensityKind::Symmetrized(inner) => 0.5 * (inner.eval(x) + inner.eval(-x)),
            DensityKind::Squared(inner) => {
                if x <= 0.0 {
                    return 0.0;
                }
                let s = x.sqrt();
                inner.eval(s) / (2.0 * s)
            }
            DensityKind::Rooted(inner) => 2.0 * x * inner.eval(x * x),
        }
    }

    /// `∫ f(λ) μ(λ) dλ` by adaptive quadrature over the support.
    pub fn integrate_against<F>(&self, mut f: F, tol: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        self.integrate_dyn(&mut f, tol)
    }

    fn integrate_dyn(&self, f: &mut dyn FnMut(f64) -> Result<f64>, tol: f64) -> Result<f64> {
        match &self.kind {
            DensityKind::Dirac { at } => f(*at),
            DensityKind::Tabulated { grid, values } => {
                let mut total = 0.0;
                for i in 0..grid.len() - 1 {
                    let (a, b) = (grid[i], grid[i + 1]);
                    let (va, vb) = (values[i], values[i + 1]);
                    total += numeric::integrate(
                        |x| Ok(f(x)? * (va + (vb - va) * (x - a) / (b - a))),
                        a,
                        b,
                        tol / grid.len() as f64,
                    )?;
                }
                Ok(total)
            }
            DensityKind::Symmetrized(inner) => {
                let a = inner.integrate_dyn(f, 0.5 * tol)?;
                let b = inner.integrate_dyn(&mut |s| f(-s), 0.5 * tol)?;
                Ok(0.5 * (a + b))
            }
            DensityKind::Squared(inner) => inner.integrate_dyn(&mut |s| f(s * s), tol),
            DensityKind::Rooted(inner) => inner.integrate_dyn(&mut |l| f(l.max(0.0).sqrt()), tol),
            _ => numeric::integrate_edge(
                |x| Ok(f(x)? * self.eval(x)),
                self.lower(),
                self.upper(),
                Edge::Both,
                tol,
            ),
        }
    }

    /// Total mass by quadrature (1 up to tolerance for valid densities).
    pub fn mass(&self) -> Result<f64> {
        self.integrate_against(|_| Ok(1.0), 1e-12)
    }

    /// First moment.
    pub fn mean(&self) -> Result<f64> {
        match &self.kind {
            DensityKind::Semicircle { .. } => Ok(0.0),
            DensityKind::MarchenkoPastur { scale, .. } => Ok(*scale),
            DensityKind::QuarterCircle { sigma } => Ok(8.0 * sigma / (3.0 * PI)),
            DensityKind::Dirac { at } => Ok(*at),
            DensityKind::Symmetrized(_) => Ok(0.0),
            DensityKind::Squared(inner) => inner.integrate_against(|s| Ok(s * s), 1e-13),
            DensityKind::Tabulated { grid, values } => Ok(grid
                .windows(2)
                .zip(values.windows(2))
                .map(|(x, v)| (x[1] - x[0]) * (x[0] * (2.0 * v[0] + v[1]) + x[1] * (v[0] + 2.0 * v[1])) / 6.0)
                .sum()),
            _ => self.integrate_against(Ok, 1e-13),
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < self.lower() {
            return Ok(0.0);
        }
        if x >= self.upper() {
            return Ok(1.0);
        }
        match &self.kind {
            DensityKind::Semicircle { sigma } => {
                let u = (x / (2.0 * sigma)).clamp(-1.0, 1.0);
                Ok(0.5 + (u * (1.0 - u * u).sqrt() + u.asin()) / PI)
            }
            DensityKind::Dirac { .. } => Ok(1.0),
            DensityKind::Tabulated { grid, values } => {
                let mut acc = 0.0;
                for i in 0..grid.len() - 1 {
                    let (a, b) = (grid[i], grid[i + 1]);
                    let (va, vb) = (values[i], values[i + 1]);
                    if x >= b {
                        acc += 0.5 * (b - a) * (va + vb);
                    } else {
                        let t = x - a;
                        let slope = (vb - va) / (b - a);
                        acc += va * t + 0.5 * slope * t * t;
                        break;
                    }
                }
                Ok(acc.clamp(0.0, 1.0))
            }
            DensityKind::Symmetrized(inner) => self.cdf_symmetrized(inner, x),
            DensityKind::Squared(inner) => inner.cdf(x.max(0.0).sqrt()),
            DensityKind::Rooted(inner) => inner.cdf(x * x),
            _ => {
                let (lo, hi) = (self.lower(), self.upper());
                let v = if x - lo <= hi - x {
                    numeric::integrate_edge(|t| Ok(self.eval(t)), lo, x, Edge::Left, 1e-13)?
                } else {
                    1.0 - numeric::integrate_edge(|t| Ok(self.eval(t)), x, hi, Edge::Right, 1e-13)?
                };
                Ok(v.clamp(0.0, 1.0))
            }
        }
    }

    fn cdf_symmetrized(&self, inner: &SpectralDensity, x: f64) -> Result<f64> {
        // Mass of the reflected copy below x is 1 − F(−x) (continuous inner law).
        let reflected = 1.0 - inner.cdf(-x)?;
        Ok((0.5 * (inner.cdf(x)? + reflected)).clamp(0.0, 1.0))
    }

    /// Stieltjes transform `∫ μ(λ)/(z−λ) dλ` for real `z` outside the open
    /// support. At the upper edge the finite limit is returned when it exists.
    pub fn stieltjes(&self, z: f64) -> Result<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        if z > lo && z < hi {
            return Err(Error::OutOfSupport { x: z, edge: hi });
        }
        match &self.kind {
            DensityKind::Semicircle { sigma } => {
                let r = (z * z - 4.0 * sigma * sigma).max(0.0).sqrt();
                Ok(if z > 0.0 { 2.0 / (z + r) } else { 2.0 / (z - r) })
            }
            DensityKind::MarchenkoPastur { q, scale } => {
                let u = z / scale;
                let r = q.sqrt();
                let (a, b) = ((1.0 - r).powi(2), (1.0 + r).powi(2));
                let d = ((u - a) * (u - b)).max(0.0).sqrt();
                let v = if u >= b {
                    2.0 / (u - (1.0 - q) + d)
                } else {
                    2.0 / (u - (1.0 - q) - d)
                };
                Ok(v / scale)
            }
            DensityKind::Dirac { at } => Ok(1.0 / (z - at)),
            DensityKind::Tabulated { grid, values } => Ok(tab_stieltjes(grid, values, z).0),
            DensityKind::Symmetrized(inner) => match closed_square(inner) {
                Some(sq) => Ok(z * sq.stieltjes((z * z).max(sq.upper()))?),
                None => Ok(0.5 * (inner.stieltjes(z)? - inner.stieltjes(-z)?)),
            },
            DensityKind::Squared(inner) if z > 0.0 => {
                let s = z.sqrt();
                Ok((inner.stieltjes(s)? - inner.stieltjes(-s)?) / (2.0 * s))
            }
            _ => self.stieltjes_quad(z),
        }
    }

    /// Stieltjes transform by direct quadrature over the support, independent
    /// of any closed form.
    pub fn stieltjes_quad(&self, z: f64) -> Result<f64> {
        if let DensityKind::Dirac { at } = self.kind {
            return Ok(1.0 / (z - at));
        }
        self.integrate_against(|l| Ok(if z == l { 0.0 } else { 1.0 / (z - l) }), 1e-13)
    }

    /// Derivative of the Stieltjes transform.
    pub fn stieltjes_prime(&self, z: f64) -> Result<f64> {
        let (lo, hi) = (self.lower(), self.upper());
        if z <= hi && z >= lo {
            if self.is_dirac() || z == hi {
                return Ok(f64::NEG_INFINITY);
            }
            return Err(Error::OutOfSupport { x: z, edge: hi });
        }
        match &self.kind {
            DensityKind::Semicircle { sigma } => {
                let r = (z * z - 4.0 * sigma * sigma).sqrt();
                let g = self.stieltjes(z)?;
                Ok(if z > 0.0 { -g / r } else { g / r })
            }
            DensityKind::MarchenkoPastur { q, scale } => {
                let u = z / scale;
                let r = q.sqrt();
                let (a, b) = ((1.0 - r).powi(2), (1.0 + r).powi(2));
                let sd = ((u - a) * (u - b)).sqrt();
                let sign = if u >= b { 1.0 } else { -1.0 };
                let den = u - (1.0 - q) + sign * sd;
                let dden = 1.0 + sign * (u - (1.0 + q)) / sd;
                Ok(-2.0 * dden / (den * den) / (scale * scale))
            }
            DensityKind::Dirac { at } => Ok(-1.0 / ((z - at) * (z - at))),
            DensityKind::Tabulated { grid, values } => Ok(tab_stieltjes(grid, values, z).1),
            DensityKind::Symmetrized(inner) => match closed_square(inner) {
                Some(sq) => {
                    let u = (z * z).max(sq.upper());
                    Ok(sq.stieltjes(u)? + 2.0 * u * sq.stieltjes_prime(u)?)
                }
                None => Ok(0.5 * (inner.stieltjes_prime(z)? + inner.stieltjes_prime(-z)?)),
            },
            DensityKind::Squared(inner) if z > 0.0 => {
                let u = z.sqrt();
                let num = inner.stieltjes(u)? - inner.stieltjes(-u)?;
                let dnum = inner.stieltjes_prime(u)? + inner.stieltjes_prime(-u)?;
                let dg_du = dnum / (2.0 * u) - num / (2.0 * u * u);
                Ok(dg_du / (2.0 * u))
            }
            _ => self.integrate_against(|l| Ok(if z == l { 0.0 } else { -1.0 / ((z - l) * (z - l)) }), 1e-13),
        }
    }

    /// Stieltjes transform at a complex point off the real axis.
    pub fn stieltjes_complex(&self, z: Complex64) -> Result<Complex64> {
        match &self.kind {
            DensityKind::Semicircle { sigma } => {
                let s2 = sigma * sigma;
                let r = (z - 2.0 * sigma).sqrt() * (z + 2.0 * sigma).sqrt();
                Ok((z - r) / (2.0 * s2))
            }
            DensityKind::MarchenkoPastur { q, scale } => {
                let u = z / *scale;
                let r = q.sqrt();
                let (a, b) = ((1.0 - r).powi(2), (1.0 + r).powi(2));
                let d = (u - a).sqrt() * (u - b).sqrt();
                Ok((u - (1.0 - q) - d) / (2.0 * q * u) / *scale)
            }
            DensityKind::Dirac { at } => Ok(1.0 / (z - *at)),
            DensityKind::Tabulated { grid, values } => Ok(tab_stieltjes_complex(grid, values, z)),
            DensityKind::Symmetrized(inner) => Ok(0.5 * (inner.stieltjes_complex(z)? - inner.stieltjes_complex(-z)?)),
            DensityKind::Squared(inner) => {
                let mut s = z.sqrt();
                if s.im < 0.0 {
                    s = -s;
                }
                Ok((inner.stieltjes_complex(s)? - inner.stieltjes_complex(-s)?) / (2.0 * s))
            }
            _ => {
                let re = self.integrate_against(|l| Ok((1.0 / (z - l)).re), 1e-12)?;
                let im = self.integrate_against(|l| Ok((1.0 / (z - l)).im), 1e-12)?;
                Ok(Complex64::new(re, im))
            }
        }
    }

    /// Quantiles `ã_i` with `F(ã_i) = i/(n+1)`.
    pub fn classical_positions(&self, n: usize) -> Result<Vec<f64>> {
        if self.is_dirac() {
            return Err(Error::DegenerateDensity("point mass has no classical positions".into()));
        }
        let mut out = Vec::with_capacity(n);
        let mut left = self.lower();
        for i in 1..=n {
            let p = i as f64 / (n + 1) as f64;
            let x = numeric::brent_root(|x| Ok(self.cdf(x)? - p), left, self.upper(), 1e-14)?;
            out.push(x);
            left = x;
        }
        Ok(out)
    }
}

impl fmt::Display for SpectralDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::Semicircle { sigma } => write!(f, "sc({sigma})"),
            DensityKind::MarchenkoPastur { q, scale } => write!(f, "mp({q}, scale {scale})"),
            DensityKind::QuarterCircle { sigma } => write!(f, "qc({sigma})"),
            DensityKind::GaussRectLsvd { sigma, q } => write!(f, "gaussrect({sigma}, {q})"),
            DensityKind::Dirac { at } => write!(f, "dirac({at})"),
            DensityKind::Tabulated { grid, .. } => write!(f, "tabulated({} nodes)", grid.len()),
            DensityKind::Symmetrized(d) => write!(f, "sym[{d}]"),
            DensityKind::Squared(d) => write!(f, "sq[{d}]"),
            DensityKind::Rooted(d) => write!(f, "root[{d}]"),
        }
    }
}

/// Squared law of a singular-value density with a closed Stieltjes form.
fn closed_square(lsvd: &SpectralDensity) -> Option<SpectralDensity> {
    match lsvd.kind() {
        DensityKind::QuarterCircle { .. } | DensityKind::GaussRectLsvd { .. } => lsvd_to_square(lsvd).ok(),
        _ => None,
    }
}

fn interp(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let i = grid.partition_point(|g| *g <= x);
    if i == 0 {
        return values[0];
    }
    if i >= grid.len() {
        return values[grid.len() - 1];
    }
    let (a, b) = (grid[i - 1], grid[i]);
    values[i - 1] + (values[i] - values[i - 1]) * (x - a) / (b - a)
}

/// Exact Stieltjes transform and derivative of a piecewise-linear density.
fn tab_stieltjes(grid: &[f64], values: &[f64], z: f64) -> (f64, f64) {
    let mut g = 0.0;
    let mut dg = 0.0;
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let h = b - a;
        let beta = (values[i + 1] - values[i]) / h;
        let (za, zb) = (z - a, z - b);
        let pz = if zb == 0.0 {
            values[i + 1]
        } else if za == 0.0 {
            values[i]
        } else {
            values[i] + beta * za
        };
        if zb == 0.0 || za == 0.0 {
            // z sits on a node: only a vanishing node value keeps the term finite.
            let l = if zb == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
            if pz.abs() > 0.0 {
                g += pz * l;
                dg = f64::NEG_INFINITY;
            }
            g -= beta * h;
            dg += if pz == 0.0 { 0.0 } else { f64::NEG_INFINITY };
            continue;
        }
        let l = (h / zb).ln_1p();
        g += pz * l - beta * h;
        dg += beta * l - pz * h / (za * zb);
    }
    (g, dg)
}

fn tab_stieltjes_complex(grid: &[f64], values: &[f64], z: Complex64) -> Complex64 {
    let mut g = Complex64::new(0.0, 0.0);
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let h = b - a;
        let beta = (values[i + 1] - values[i]) / h;
        let pz = values[i] + beta * (z - a);
        let l = (z - a).ln() - (z - b).ln();
        g += pz * l - beta * h;
    }
    g
}

/// Density value at `x` (zero outside the support).
pub fn eval_density(d: &SpectralDensity, x: f64) -> f64 {
    d.eval(x)
}

/// Quantiles of `d` at levels `i/(n+1)`.
pub fn classical_positions(d: &SpectralDensity, n: usize) -> Result<Vec<f64>> {
    d.classical_positions(n)
}

/// Even extension `(ρ(x) + ρ(−x))/2` of a density on nonnegative reals.
pub fn symmetrize(rho: &SpectralDensity) -> Result<SpectralDensity> {
    if rho.lower() < 0.0 {
        return Err(Error::InvalidInput("symmetrize needs a nonnegative support".into()));
    }
    match rho.kind {
        DensityKind::QuarterCircle { sigma } => SpectralDensity::semicircle(sigma),
        DensityKind::GaussRectLsvd { sigma, q: 1.0 } => SpectralDensity::semicircle(sigma),
        DensityKind::Dirac { at: 0.0 } => SpectralDensity::dirac(0.0),
        _ => Ok(SpectralDensity {
            kind: DensityKind::Symmetrized(Box::new(rho.clone())),
            support: SupportInterval::new(-rho.upper(), rho.upper())?,
            edge_coeff: None,
        }),
    }
}

/// Law of `s²` for `s` distributed as the singular-value density `rho`.
pub fn lsvd_to_square(rho: &SpectralDensity) -> Result<SpectralDensity> {
    if rho.lower() < 0.0 {
        return Err(Error::InvalidInput("singular-value density must live on [0, ∞)".into()));
    }
    match &rho.kind {
        DensityKind::QuarterCircle { sigma } => SpectralDensity::marchenko_pastur_scaled(1.0, sigma * sigma),
        DensityKind::GaussRectLsvd { sigma, q } => SpectralDensity::marchenko_pastur_scaled(*q, sigma * sigma),
        DensityKind::Dirac { at } => SpectralDensity::dirac(at * at),
        DensityKind::Rooted(inner) => Ok((**inner).clone()),
        _ => Ok(SpectralDensity {
            kind: DensityKind::Squared(Box::new(rho.clone())),
            support: SupportInterval::new(rho.lower().powi(2), rho.upper().powi(2))?,
            edge_coeff: None,
        }),
    }
}

/// Law of `√λ` for `λ ≥ 0` distributed as `mu`: `ρ(s) = 2s·μ(s²)`.
pub fn square_to_lsvd(mu: &SpectralDensity) -> Result<SpectralDensity> {
    if mu.lower() < 0.0 {
        return Err(Error::InvalidInput("square law must live on [0, ∞)".into()));
    }
    match &mu.kind {
        DensityKind::Dirac { at } => SpectralDensity::dirac(at.sqrt()),
        DensityKind::Squared(inner) => Ok((**inner).clone()),
        _ => Ok(SpectralDensity {
            kind: DensityKind::Rooted(Box::new(mu.clone())),
            support: SupportInterval::new(mu.lower().sqrt(), mu.upper().sqrt())?,
            edge_coeff: None,
        }),
    }
}

/// Confining potential of an invariant ensemble, known through `V′`.
#[derive(Clone)]
pub enum Potential {
    /// `V(λ) = λ²/(2σ²)`.
    Gaussian { sigma: f64 },
    /// `V(λ) = λ/(qs) + (1 − 1/q)·log λ`, the Wishart law dilated by `s`.
    Wishart { q: f64, scale: f64 },
    /// Arbitrary `V′`, with `V` recovered by quadrature from `origin`.
    Custom {
        v_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        origin: f64,
    },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Gaussian { sigma } => write!(f, "Gaussian {{ sigma: {sigma} }}"),
            Potential::Wishart { q, scale } => write!(f, "Wishart {{ q: {q}, scale: {scale} }}"),
            Potential::Custom { origin, .. } => write!(f, "Custom {{ origin: {origin} }}"),
        }
    }
}

impl Potential {
    pub fn v_prime(&self, x: f64) -> f64 {
        match self {
            Potential::Gaussian { sigma } => x / (sigma * sigma),
            Potential::Wishart { q, scale } => {
                let u = x / scale;
                (1.0 / q + (1.0 - 1.0 / q) / u) / scale
            }
            Potential::Custom { v_prime, .. } => v_prime(x),
        }
    }

    pub fn v_second(&self, x: f64) -> f64 {
        match self {
            Potential::Gaussian { sigma } => 1.0 / (sigma * sigma),
            Potential::Wishart { q, scale } => {
                let u = x / scale;
                -(1.0 - 1.0 / q) / (u * u) / (scale * scale)
            }
            Potential::Custom { v_prime, .. } => {
                let h = 1e-6 * (1.0 + x.abs());
                (v_prime(x + h) - v_prime(x - h)) / (2.0 * h)
            }
        }
    }

    /// `V(x)` up to an additive constant; `+∞` off the domain.
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Gaussian { sigma } => x * x / (2.0 * sigma * sigma),
            Potential::Wishart { q, scale } => {
                if x <= 0.0 {
                    return f64::INFINITY;
                }
                let u = x / scale;
                u / q + (1.0 - 1.0 / q) * u.ln()
            }
            Potential::Custom { v_prime, origin } => {
                numeric::integrate(|t| Ok(v_prime(t)), *origin, x, 1e-10).unwrap_or(f64::INFINITY)
            }
        }
    }

    /// `lim_{x→∞} (V′(x) − 1/x)` when known in closed form.
    pub fn asymptotic_slope(&self) -> Option<f64> {
        match self {
            Potential::Gaussian { .. } => Some(f64::INFINITY),
            Potential::Wishart { q, scale } => Some(1.0 / (q * scale)),
            Potential::Custom { .. } => None,
        }
    }
}

/// A spectral density with its potential and a hard wall `w ≥ a₊`.
///
/// Without a potential the second branch exists only at the wall-at-edge
/// point; point masses use `ḡ := g` (rank-one spikes).
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub density: SpectralDensity,
    pub potential: Option<Potential>,
    pub wall: f64,
    pub(crate) numeric: bool,
}

impl Ensemble {
    pub fn new(density: SpectralDensity, potential: Option<Potential>, wall: f64) -> Result<Self> {
        if wall.is_nan() || wall < density.upper() {
            return Err(Error::InvalidInput(format!(
                "wall {wall} lies below the edge {}",
                density.upper()
            )));
        }
        if potential.is_none() && wall.is_infinite() {
            return Err(Error::InvalidInput("a wall at infinity needs a potential".into()));
        }
        Ok(Self {
            density,
            potential,
            wall,
            numeric: false,
        })
    }

    /// Gaussian orthogonal ensemble with semicircle of variance `σ²`.
    pub fn goe(sigma: f64) -> Result<Self> {
        Self::new(
            SpectralDensity::semicircle(sigma)?,
            Some(Potential::Gaussian { sigma }),
            f64::INFINITY,
        )
    }

    /// White Wishart ensemble of ratio `q`.
    pub fn wishart(q: f64) -> Result<Self> {
        Self::wishart_scaled(q, 1.0)
    }

    pub fn wishart_scaled(q: f64, scale: f64) -> Result<Self> {
        Self::new(
            SpectralDensity::marchenko_pastur_scaled(q, scale)?,
            Some(Potential::Wishart { q, scale }),
            f64::INFINITY,
        )
    }

    /// Fixed diagonal matrix: the density with its wall at the edge.
    pub fn fixed(density: SpectralDensity) -> Self {
        let wall = density.upper();
        Self {
            density,
            potential: None,
            wall,
            numeric: false,
        }
    }

    /// Additive rank-one perturbation `γ·eeᵀ` seen as an ensemble.
    pub fn spike_add(gamma: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Self::new(SpectralDensity::dirac(0.0)?, None, gamma)
    }

    /// Multiplicative rank-one perturbation `I + γ·eeᵀ` seen as an ensemble.
    pub fn spike_mul(gamma: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Self::new(SpectralDensity::dirac(1.0)?, None, 1.0 + gamma)
    }

    /// Same ensemble with another wall.
    pub fn with_wall(mut self, wall: f64) -> Result<Self> {
        if wall.is_nan() || wall < self.density.upper() {
            return Err(Error::InvalidInput(format!("wall {wall} lies below the edge")));
        }
        if self.potential.is_none() && !self.density.is_dirac() && wall > self.density.upper() {
            return Err(Error::InvalidInput("a wall beyond the edge needs a potential".into()));
        }
        self.wall = wall;
        Ok(self)
    }

    /// Forces every transform through quadrature and generic root solves.
    pub fn numeric(mut self) -> Self {
        self.numeric = true;
        self
    }

    pub fn edge(&self) -> f64 {
        self.density.upper()
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric
    }
}

/// Single-matrix rectangular ensemble: singular-value density, shape ratio
/// and wall on the top singular value.
#[derive(Debug, Clone)]
pub struct RectEnsemble {
    pub lsvd: SpectralDensity,
    pub shape_q: f64,
    /// Ensemble of `AAᵀ`, carrying the modified potential and the squared wall.
    pub square: Ensemble,
    pub wall: f64,
}

impl RectEnsemble {
    pub fn new(lsvd: SpectralDensity, shape_q: f64, potential: Option<Potential>, wall: f64) -> Result<Self> {
        shape(shape_q)?;
        if lsvd.lower() < 0.0 {
            return Err(Error::InvalidInput("singular values must be nonnegative".into()));
        }
        if wall < lsvd.upper() {
            return Err(Error::InvalidInput(format!(
                "wall {wall} lies below the edge {}",
                lsvd.upper()
            )));
        }
        let sq = lsvd_to_square(&lsvd)?;
        let sq_wall = (wall * wall).max(sq.upper());
        let square = Ensemble::new(sq, potential, sq_wall)?;
        Ok(Self {
            lsvd,
            shape_q,
            square,
            wall,
        })
    }

    /// Gaussian `N×M` matrix, `q = N/M`, entry variance `σ²/M`, no wall.
    pub fn gauss_rect(sigma: f64, q: f64) -> Result<Self> {
        Self::new(
            SpectralDensity::gauss_rect_lsvd(sigma, q)?,
            q,
            Some(Potential::Wishart {
                q,
                scale: sigma * sigma,
            }),
            f64::INFINITY,
        )
    }

    /// Square Gaussian (Ginibre) matrix.
    pub fn ginibre(sigma: f64) -> Result<Self> {
        Self::new(
            SpectralDensity::quarter_circle(sigma)?,
            1.0,
            Some(Potential::Wishart {
                q: 1.0,
                scale: sigma * sigma,
            }),
            f64::INFINITY,
        )
    }

    /// Fixed singular values, wall at the top one.
    pub fn fixed(lsvd: SpectralDensity, shape_q: f64) -> Result<Self> {
        let w = lsvd.upper();
        Self::new(lsvd, shape_q, None, w)
    }

    /// Rank-one `γ·uvᵀ` seen as a rectangular ensemble.
    pub fn spike(gamma: f64, shape_q: f64) -> Result<Self> {
        positive("gamma", gamma)?;
        Self::new(SpectralDensity::dirac(0.0)?, shape_q, None, gamma)
    }

    pub fn with_wall(mut self, wall: f64) -> Result<Self> {
        if wall < self.lsvd.upper() {
            return Err(Error::InvalidInput(format!(
                "wall {wall} lies below the edge {}",
                self.lsvd.upper()
            )));
        }
        let sq_wall = (wall * wall).max(self.square.edge());
        self.square = self.square.with_wall(sq_wall)?;
        self.wall = wall;
        Ok(self)
    }

    pub fn with_shape(mut self, q: f64) -> Result<Self> {
        shape(q)?;
        self.shape_q = q;
        Ok(self)
    }

    pub fn numeric(mut self) -> Self {
        self.square = self.square.numeric();
        self
    }

    pub fn edge(&self) -> f64 {
        self.lsvd.upper()
    }

    /// Symmetric ensemble on the even extension of the singular values;
    /// meaningful at `q = 1` where the rectangular calculus reduces to it.
    pub fn symmetrized(&self) -> Result<Ensemble> {
        let dens = symmetrize(&self.lsvd)?;
        let pot = match &self.square.potential {
            None => None,
            Some(Potential::Wishart { q, scale }) if *q == 1.0 => Some(Potential::Gaussian { sigma: scale.sqrt() }),
            Some(p) => {
                let p = p.clone();
                Some(Potential::Custom {
                    v_prime: Arc::new(move |x: f64| x * p.v_prime(x * x)),
                    origin: 0.0,
                })
            }
        };
        let wall = self.wall.max(dens.upper());
        let mut e = Ensemble::new(dens, pot, wall)?;
        e.numeric = self.square.numeric;
        Ok(e)
    }
}

/// Ordered eigenvalue sample of the walled Coulomb gas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenConfiguration {
    pub values: Vec<f64>,
    pub wall: f64,
    pub acceptance: f64,
}

/// Metropolis sample of the joint eigenvalue law of `e` with `n` particles
/// after `steps` sweeps, conditioned on every eigenvalue staying below the wall.
pub fn metropolis_wall_sample(e: &Ensemble, n: usize, steps: usize, seed: u64) -> Result<EigenConfiguration> {
    metropolis_impl(e, n, steps, seed, None, e.wall)
}

/// Chain pushed by a wall that may sit below the edge `a₊`; the particles
/// start piled at the wall.
pub fn metropolis_pushed_sample(
    e: &Ensemble,
    n: usize,
    steps: usize,
    seed: u64,
    wall: f64,
) -> Result<EigenConfiguration> {
    if !wall.is_finite() || wall <= e.density.lower() - e.density.support().width() {
        return Err(Error::InvalidInput(format!(
            "pushing wall {wall} is not finite or too far left"
        )));
    }
    metropolis_impl(e, n, steps, seed, None, wall)
}

/// Same chain with the top particle pinned at `top`, which must lie in
/// `[a₊, w]`; the remaining `n − 1` particles relax around it.
pub fn metropolis_pulled_sample(
    e: &Ensemble,
    n: usize,
    steps: usize,
    seed: u64,
    top: f64,
) -> Result<EigenConfiguration> {
    if top < e.edge() || top > e.wall {
        return Err(Error::OutOfSupport { x: top, edge: e.edge() });
    }
    metropolis_impl(e, n, steps, seed, Some(top), e.wall)
}

fn metropolis_impl(
    e: &Ensemble,
    n: usize,
    steps: usize,
    seed: u64,
    pinned: Option<f64>,
    wall: f64,
) -> Result<EigenConfiguration> {
    let pot = e
        .potential
        .clone()
        .ok_or_else(|| Error::InvalidInput("sampling the joint law needs a potential".into()))?;
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lam = if n == 1 {
        vec![e.density.classical_positions(1)?[0]]
    } else {
        e.density.classical_positions(n)?
    };
    let free = if pinned.is_some() { n - 1 } else { n };
    if let Some(t) = pinned {
        lam[n - 1] = t;
    }
    if wall < e.edge() {
        // Compress the start below the wall so no two particles coincide.
        let lo = e.density.lower().min(wall - e.density.support().width());
        let scale = (wall - lo) / (e.edge() - lo);
        for l in lam.iter_mut() {
            *l = lo + (*l - lo) * scale;
        }
    }
    for l in lam.iter_mut() {
        *l = l.min(wall);
    }
    let nf = n as f64;
    let width = e.density.support().width().max(1e-3);
    let mut step = 0.5 * width / nf.sqrt();
    let burn = steps / 4;
    let mut window_acc = 0usize;
    let mut window_tot = 0usize;
    let mut total_acc = 0usize;
    let mut total_tot = 0usize;
    for sweep in 0..steps {
        for _ in 0..free {
            let i = rng.random_range(0..free);
            let old = lam[i];
            let z: f64 = rng.sample(StandardNormal);
            let new = old + step * z;
            window_tot += 1;
            total_tot += 1;
            if new > wall || !pot.value(new).is_finite() {
                continue;
            }
            let mut dlog = -0.5 * nf * (pot.value(new) - pot.value(old));
            for (j, &lj) in lam.iter().enumerate() {
                if j != i {
                    dlog += ((new - lj).abs()).ln() - ((old - lj).abs()).ln();
                }
            }
            if dlog >= 0.0 || rng.random::<f64>() < dlog.exp() {
                lam[i] = new;
                window_acc += 1;
                total_acc += 1;
            }
        }
        if (sweep + 1) % 50 == 0 {
            let rate = window_acc as f64 / window_tot.max(1) as f64;
            if rate < 0.01 {
                return Err(Error::NonConvergence(format!(
                    "Metropolis acceptance {rate:.4} below 1% over a 50-sweep window"
                )));
            }
            if sweep < burn {
                if rate < 0.3 {
                    step *= 0.8;
                } else if rate > 0.5 {
                    step *= 1.25;
                }
            }
            window_acc = 0;
            window_tot = 0;
        }
    }
    lam.sort_by(f64::total_cmp);
    Ok(EigenConfiguration {
        values: lam,
        wall,
        acceptance: total_acc as f64 / total_tot.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_form_values() {
        let sc = SpectralDensity::semicircle(1.0).unwrap();
        assert!((sc.eval(0.0) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(sc.eval(3.0), 0.0);
        let mp = SpectralDensity::marchenko_pastur(1.0).unwrap();
        assert!((mp.eval(2.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn every_kind_has_unit_mass() {
        let kinds = [
            SpectralDensity::semicircle(1.3).unwrap(),
            SpectralDensity::marchenko_pastur(0.3).unwrap(),
            SpectralDensity::marchenko_pastur(1.0).unwrap(),
            SpectralDensity::quarter_circle(0.7).unwrap(),
            SpectralDensity::gauss_rect_lsvd(1.0, 0.5).unwrap(),
            SpectralDensity::gauss_rect_lsvd(1.0, 1.0).unwrap(),
            symmetrize(&SpectralDensity::gauss_rect_lsvd(1.0, 0.25).unwrap()).unwrap(),
            lsvd_to_square(&SpectralDensity::tabulate_fn(|s| s * (2.0 - s), 0.0, 2.0, 65).unwrap()).unwrap(),
            SpectralDensity::tabulate_fn(|x| (1.0 - x * x).sqrt(), -1.0, 1.0, 129).unwrap(),
        ];
        for d in &kinds {
            let m = d.mass().unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{d}: mass {m}");
        }
    }

    #[test]
    fn edge_coefficients_match_fits() {
        for d in [
            SpectralDensity::semicircle(1.0).unwrap(),
            SpectralDensity::marchenko_pastur(0.5).unwrap(),
            SpectralDensity::marchenko_pastur_scaled(0.25, 2.0).unwrap(),
            SpectralDensity::quarter_circle(1.5).unwrap(),
            SpectralDensity::gauss_rect_lsvd(0.8, 0.5).unwrap(),
        ] {
            let exact = d.edge_coeff().unwrap();
            let fit = d.estimate_edge_coeff().unwrap();
            assert!((exact - fit).abs() < 1e-5 * exact, "{d}: {exact} vs {fit}");
        }
    }

    #[test]
    fn classical_positions_symmetry_and_median() {
        let sc = SpectralDensity::semicircle(1.0).unwrap();
        assert!(sc.classical_positions(1).unwrap()[0].abs() < 1e-12);
        assert!(sc.classical_positions(3).unwrap()[1].abs() < 1e-12);
        // Median of MP(1) from an independent bisection on the quadrature CDF.
        let mp = SpectralDensity::marchenko_pastur(1.0).unwrap();
        let fifth = mp.classical_positions(9).unwrap()[4];
        assert!((fifth - 0.652_775_941_633_570_4).abs() < 1e-9, "{fifth}");
        assert!(SpectralDensity::dirac(1.0).unwrap().classical_positions(3).is_err());
    }

    #[test]
    fn transformations_of_singular_laws() {
        let qc = SpectralDensity::quarter_circle(1.0).unwrap();
        assert_eq!(symmetrize(&qc).unwrap(), SpectralDensity::semicircle(1.0).unwrap());
        assert_eq!(
            lsvd_to_square(&qc).unwrap(),
            SpectralDensity::marchenko_pastur(1.0).unwrap()
        );
        let g = SpectralDensity::gauss_rect_lsvd(1.0, 1.0).unwrap();
        assert_eq!(
            lsvd_to_square(&g).unwrap(),
            SpectralDensity::marchenko_pastur(1.0).unwrap()
        );
        assert_eq!(
            lsvd_to_square(&SpectralDensity::dirac(1.5).unwrap()).unwrap(),
            SpectralDensity::dirac(2.25).unwrap()
        );
        let sym = symmetrize(&SpectralDensity::gauss_rect_lsvd(1.0, 0.3).unwrap()).unwrap();
        let half = numeric::integrate_edge(
            |x| Ok(sym.eval(x)),
            sym.lower().max(0.0),
            sym.upper(),
            Edge::Both,
            1e-13,
        )
        .unwrap();
        assert!((half - 0.5).abs() < 1e-8);
        for x in [0.2, 0.7, 1.1] {
            assert_eq!(sym.eval(x), sym.eval(-x));
        }
    }

    #[test]
    fn square_root_roundtrip_on_tabulated() {
        let tab = SpectralDensity::tabulate_fn(|l| l * (3.0 - l), 0.0, 3.0, 200).unwrap();
        let back = lsvd_to_square(&square_to_lsvd(&tab).unwrap()).unwrap();
        for x in [0.1, 0.9, 1.7, 2.95] {
            assert!((back.eval(x) - tab.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn stieltjes_routes_agree() {
        let dens = [
            SpectralDensity::semicircle(1.0).unwrap(),
            SpectralDensity::marchenko_pastur(0.4).unwrap(),
            SpectralDensity::marchenko_pastur_scaled(1.0, 0.64).unwrap(),
        ];
        for d in &dens {
            for dz in [1e-3, 0.1, 1.0, 10.0] {
                let z = d.upper() + dz;
                let a = d.stieltjes(z).unwrap();
                let b = d.stieltjes_quad(z).unwrap();
                assert!((a - b).abs() < 1e-9, "{d} z={z}: {a} vs {b}");
                let h = 1e-6 * dz;
                let fd = (d.stieltjes(z + h).unwrap() - d.stieltjes(z - h).unwrap()) / (2.0 * h);
                let gp = d.stieltjes_prime(z).unwrap();
                assert!((fd - gp).abs() < 1e-5 * gp.abs().max(1.0), "{d} z={z}: {fd} vs {gp}");
            }
        }
        let sc = SpectralDensity::semicircle(1.0).unwrap();
        assert!((sc.stieltjes(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((sc.stieltjes(100.0).unwrap() - 0.010_001_000_200_050_01).abs() < 1e-15);
        let mp = SpectralDensity::marchenko_pastur(1.0).unwrap();
        assert!((mp.stieltjes(4.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(sc.stieltjes(1.0).is_err());
    }

    #[test]
    fn tabulated_stieltjes_is_exact_for_linear_pieces() {
        let tab = SpectralDensity::tabulate_fn(|x| (4.0 - x * x).max(0.0).sqrt(), -2.0, 2.0, 401).unwrap();
        for z in [2.001, 2.5, 4.0, -3.0] {
            let a = tab.stieltjes(z).unwrap();
            let b = tab.stieltjes_quad(z).unwrap();
            assert!((a - b).abs() < 1e-9, "z={z}: {a} vs {b}");
        }
        let sc = SpectralDensity::semicircle(1.0).unwrap();
        assert!((tab.stieltjes(3.0).unwrap() - sc.stieltjes(3.0).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn plemelj_recovers_density() {
        for d in [
            SpectralDensity::semicircle(1.0).unwrap(),
            SpectralDensity::marchenko_pastur(0.5).unwrap(),
        ] {
            for k in 1..10 {
                let x = d.lower() + d.support().width() * k as f64 / 10.0;
                let g = d.stieltjes_complex(Complex64::new(x, -1e-6)).unwrap();
                assert!((g.im / PI - d.eval(x)).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn wall_below_edge_is_rejected() {
        let sc = SpectralDensity::semicircle(1.0).unwrap();
        assert!(Ensemble::new(sc.clone(), Some(Potential::Gaussian { sigma: 1.0 }), 1.5).is_err());
        assert!(Ensemble::goe(1.0).unwrap().with_wall(2.5).is_ok());
        assert!(Ensemble::fixed(sc).with_wall(3.0).is_err());
    }

    #[test]
    fn metropolis_respects_wall_and_symmetry() {
        let e = Ensemble::goe(1.0).unwrap().with_wall(2.0).unwrap();
        let c = metropolis_wall_sample(&e, 32, 400, 11).unwrap();
        assert!(c.values.iter().all(|&v| v <= 2.0));
        let again = metropolis_wall_sample(&e, 32, 400, 11).unwrap();
        assert_eq!(c, again);
        let scalar = Ensemble::goe(1.0).unwrap();
        let mut mean = 0.0;
        for s in 0..400 {
            mean += metropolis_wall_sample(&scalar, 1, 40, s).unwrap().values[0];
        }
        mean /= 400.0;
        assert!(mean.abs() < 0.15, "{mean}");
    }

    #[test]
    fn pushed_and_pulled_gas() {
        let e = Ensemble::goe(1.0).unwrap();
        let c = metropolis_pulled_sample(&e, 24, 200, 3, 2.6).unwrap();
        let pushed = metropolis_pushed_sample(&e, 24, 400, 3, 0.0).unwrap();
        assert!(pushed.values.iter().all(|&v| v <= 0.0));
        let mean = pushed.values.iter().sum::<f64>() / 24.0;
        assert!(mean < -0.5, "{mean}");
        assert_eq!(*c.values.last().unwrap(), 2.6);
        assert!(c.values[..23].iter().all(|&v| v < 2.6));
    }

    proptest! {
        #[test]
        fn classical_positions_sorted_inside_support(sigma in 0.2f64..3.0, n in 1usize..40) {
            let d = SpectralDensity::semicircle(sigma).unwrap();
            let xs = d.classical_positions(n).unwrap();
            prop_assert!(xs.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(xs.iter().all(|x| d.support().contains(*x)));
            for (i, x) in xs.iter().enumerate() {
                let f = d.cdf(*x).unwrap();
                prop_assert!((f - (i + 1) as f64 / (n + 1) as f64).abs() <= 2.0 / n as f64);
            }
        }

        #[test]
        fn densities_nonnegative_and_zero_outside(q in 0.05f64..1.0, x in -5.0f64..10.0) {
            let d = SpectralDensity::marchenko_pastur(q).unwrap();
            let v = d.eval(x);
            prop_assert!(v >= 0.0);
            if !d.support().contains(x) { prop_assert_eq!(v, 0.0); }
        }
    }
}
