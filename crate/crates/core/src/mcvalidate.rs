//! Finite-`n` Monte Carlo: matrix samplers, top-eigenvalue statistics,
//! pooled-spectrum histograms and empirical tail rates.
//!
//! Sample `i` draws from stream `i` of the master seed, and reports are
//! aggregated in sample order, so output is independent of the thread count.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric;
use crate::rankone::{rk1rk1_draw, Rk1PlusRk1};
use crate::spectra::SpectralDensity;

/// Generator for sample `index` of the master `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// GOE: off-diagonal variance `σ²/n`, diagonal variance `2σ²/n`.
pub fn goe_with<R: Rng + ?Sized>(n: usize, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    let g = gaussian_matrix(n, n, rng);
    (&g + g.transpose()) * (sigma / (2.0 * n as f64).sqrt())
}

/// White Wishart `XXᵀ/M` with `X` of size `n×M`, `M = round(n/q)`.
pub fn wishart_with<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> DMatrix<f64> {
    let m = ((n as f64 / q).round() as usize).max(1);
    let x = gaussian_matrix(n, m, rng);
    (&x * x.transpose()) / m as f64
}

/// `n×m` Gaussian matrix with entry variance `σ²/m`.
pub fn ginibre_with<R: Rng + ?Sized>(n: usize, m: usize, sigma: f64, rng: &mut R) -> DMatrix<f64> {
    gaussian_matrix(n, m, rng) * (sigma / (m as f64).sqrt())
}

/// Haar orthogonal matrix: `Q` of a Gaussian matrix with `diag(R) > 0`.
pub fn haar_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let qr = gaussian_matrix(n, n, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

pub fn sample_goe(n: usize, sigma: f64, seed: u64) -> DMatrix<f64> {
    goe_with(n, sigma, &mut stream_rng(seed, 0))
}

pub fn sample_wishart(n: usize, q: f64, seed: u64) -> DMatrix<f64> {
    wishart_with(n, q, &mut stream_rng(seed, 0))
}

pub fn sample_ginibre(n: usize, m: usize, sigma: f64, seed: u64) -> DMatrix<f64> {
    ginibre_with(n, m, sigma, &mut stream_rng(seed, 0))
}

pub fn haar_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    haar_with(n, &mut stream_rng(seed, 0))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("eigensolver input has non-finite entries".into()));
    }
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if ev.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergence("symmetric eigensolver diverged".into()));
    }
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Singular values, ascending.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::NonConvergence("singular value iteration did not converge".into()))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}

/// Factor of a symmetric model.
#[derive(Debug, Clone)]
pub enum McTerm {
    Goe {
        sigma: f64,
    },
    Wishart {
        q: f64,
    },
    /// Diagonal with the given limiting spectrum, conjugated by a Haar matrix
    /// when the other factor is not rotation invariant.
    Fixed(SpectralDensity),
    /// `γ·vvᵀ` in a sum, `I + γ·vvᵀ` in a product.
    Spike {
        gamma: f64,
    },
}

/// Factor of a rectangular model; `n×m` with `q = n/m`.
#[derive(Debug, Clone)]
pub enum RectTerm {
    Gauss {
        sigma: f64,
    },
    /// Singular values with the given limiting law on the diagonal.
    Fixed(SpectralDensity),
    /// `γ·uvᵀ`.
    Spike {
        gamma: f64,
    },
}

#[derive(Debug, Clone)]
pub enum McModel {
    Single(McTerm),
    /// `A + OBOᵀ`.
    Sum(McTerm, McTerm),
    /// `A^{1/2}·OBOᵀ·A^{1/2}`; both factors positive semidefinite.
    Product(McTerm, McTerm),
    /// Singular values of `A` alone.
    Rect(RectTerm, f64),
    /// Singular values of `A + UBVᵀ`.
    RectSum(RectTerm, RectTerm, f64),
    Rk1Rk1(Rk1PlusRk1),
}

impl fmt::Display for McTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McTerm::Goe { sigma } => write!(f, "goe({sigma})"),
            McTerm::Wishart { q } => write!(f, "wishart({q})"),
            McTerm::Fixed(d) => write!(f, "fixed({d})"),
            McTerm::Spike { gamma } => write!(f, "spike({gamma})"),
        }
    }
}

impl fmt::Display for RectTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RectTerm::Gauss { sigma } => write!(f, "gauss({sigma})"),
            RectTerm::Fixed(d) => write!(f, "fixed({d})"),
            RectTerm::Spike { gamma } => write!(f, "spike({gamma})"),
        }
    }
}

impl fmt::Display for McModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McModel::Single(a) => write!(f, "{a}"),
            McModel::Sum(a, b) => write!(f, "{a} + {b}"),
            McModel::Product(a, b) => write!(f, "{a} * {b}"),
            McModel::Rect(a, q) => write!(f, "rect[q={q}] {a}"),
            McModel::RectSum(a, b, q) => write!(f, "rect[q={q}] {a} + {b}"),
            McModel::Rk1Rk1(m) => write!(f, "rk1rk1({}, {})", m.w_a, m.w_b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub model: McModel,
    /// Draw fixed diagonals i.i.d. from their law instead of using
    /// classical positions.
    pub iid_diagonals: bool,
    pub histogram_bins: usize,
    /// Record wall-clock time; off by default so reports are reproducible.
    pub timing: bool,
}

impl McConfig {
    pub fn new(model: McModel, n: usize, samples: usize, seed: u64) -> Self {
        Self {
            n,
            samples,
            seed,
            model,
            iid_diagonals: false,
            histogram_bins: 50,
            timing: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!(
                "matrix size {} must be at least 2",
                self.n
            )));
        }
        if self.samples < 1 {
            return Err(Error::InvalidInput("at least one sample is required".into()));
        }
        if self.histogram_bins < 1 {
            return Err(Error::InvalidInput("at least one histogram bin is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub model: String,
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub iid_diagonals: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantile {
    pub p: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopStats {
    pub mean: f64,
    pub stddev: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
    pub quantiles: Vec<Quantile>,
}

/// Fixed-bin histogram; `edges.len() == counts.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumCheck {
    pub histogram: Histogram,
    pub pooled: usize,
    /// Sup distance between the pooled empirical CDF and the predicted CDF.
    pub sup_cdf_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub x: f64,
    pub hits: u64,
    pub p_hat: f64,
    /// `−log p̂ / n`; `None` without hits.
    pub rate: Option<f64>,
    pub stderr: Option<f64>,
    /// Fewer than ten hits.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub config: ConfigEcho,
    pub top: TopStats,
    /// Histogram of the top eigenvalue; counts sum to `samples`.
    pub histogram: Histogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumCheck>,
    pub rate_points: Vec<RatePoint>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Deterministic part of each realization: diagonals at classical positions.
struct Prepared {
    diag_a: Option<Vec<f64>>,
    diag_b: Option<Vec<f64>>,
}

fn rect_cols(n: usize, q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidShapeRatio(format!("q = {q} is outside (0, 1]")));
    }
    Ok(((n as f64 / q).round() as usize).max(n))
}

fn diag_of(d: &SpectralDensity, n: usize) -> Result<Vec<f64>> {
    if d.is_dirac() {
        return Ok(vec![d.upper(); n]);
    }
    d.classical_positions(n)
}

fn iid_diag<R: Rng + ?Sized>(d: &SpectralDensity, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if d.is_dirac() {
        return Ok(vec![d.upper(); n]);
    }
    (0..n)
        .map(|_| {
            let p: f64 = rng.random();
            numeric::brent_root(|x| Ok(d.cdf(x)? - p), d.lower(), d.upper(), 1e-14)
        })
        .collect()
}

fn check_psd(t: &McTerm) -> Result<()> {
    let ok = match t {
        McTerm::Goe { .. } => false,
        McTerm::Wishart { .. } | McTerm::Spike { .. } => true,
        McTerm::Fixed(d) => d.lower() >= 0.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "product factor {t} is not positive semidefinite"
        )))
    }
}

impl McConfig {
    fn prepare(&self) -> Result<Prepared> {
        let n = self.n;
        let fixed = |t: &McTerm| -> Result<Option<Vec<f64>>> {
            match t {
                McTerm::Fixed(d) if !self.iid_diagonals => Ok(Some(diag_of(d, n)?)),
                _ => Ok(None),
            }
        };
        let rfixed = |t: &RectTerm| -> Result<Option<Vec<f64>>> {
            match t {
                RectTerm::Fixed(d) if !self.iid_diagonals => Ok(Some(diag_of(d, n)?)),
                _ => Ok(None),
            }
        };
        Ok(match &self.model {
            McModel::Single(a) => Prepared {
                diag_a: fixed(a)?,
                diag_b: None,
            },
            McModel::Sum(a, b) => Prepared {
                diag_a: fixed(a)?,
                diag_b: fixed(b)?,
            },
            McModel::Product(a, b) => {
                check_psd(a)?;
                check_psd(b)?;
                Prepared {
                    diag_a: fixed(a)?,
                    diag_b: fixed(b)?,
                }
            }
            McModel::Rect(a, q) => {
                rect_cols(n, *q)?;
                Prepared {
                    diag_a: rfixed(a)?,
                    diag_b: None,
                }
            }
            McModel::RectSum(a, b, q) => {
                rect_cols(n, *q)?;
                Prepared {
                    diag_a: rfixed(a)?,
                    diag_b: rfixed(b)?,
                }
            }
            McModel::Rk1Rk1(_) => Prepared {
                diag_a: None,
                diag_b: None,
            },
        })
    }

    fn diagonal<R: Rng + ?Sized>(&self, d: &SpectralDensity, pre: Option<&Vec<f64>>, rng: &mut R) -> Result<Vec<f64>> {
        match pre {
            Some(v) => Ok(v.clone()),
            None => iid_diag(d, self.n, rng),
        }
    }

    /// Symmetric term in its own basis; `rotate` conjugates by a Haar matrix.
    fn sym_term<R: Rng + ?Sized>(
        &self,
        t: &McTerm,
        pre: Option<&Vec<f64>>,
        rotate: bool,
        mul: bool,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let n = self.n;
        Ok(match t {
            McTerm::Goe { sigma } => goe_with(n, *sigma, rng),
            McTerm::Wishart { q } => wishart_with(n, *q, rng),
            McTerm::Fixed(d) => {
                let diag = self.diagonal(d, pre, rng)?;
                if rotate {
                    let mut o = haar_with(n, rng);
                    let ot = o.transpose();
                    for (j, mut col) in o.column_iter_mut().enumerate() {
                        col *= diag[j];
                    }
                    o * ot
                } else {
                    DMatrix::from_diagonal(&DVector::from_vec(diag))
                }
            }
            McTerm::Spike { gamma } => {
                let v = if rotate {
                    unit_vector(n, rng)
                } else {
                    let mut e = DVector::zeros(n);
                    e[0] = 1.0;
                    e
                };
                let mut m = &v * v.transpose() * *gamma;
                if mul {
                    for i in 0..n {
                        m[(i, i)] += 1.0;
                    }
                }
                m
            }
        })
    }

    fn rect_term<R: Rng + ?Sized>(
        &self,
        t: &RectTerm,
        m: usize,
        pre: Option<&Vec<f64>>,
        rotate: bool,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let n = self.n;
        Ok(match t {
            RectTerm::Gauss { sigma } => ginibre_with(n, m, *sigma, rng),
            RectTerm::Fixed(d) => {
                let diag = match pre {
                    Some(v) => v.clone(),
                    None => iid_diag(d, n, rng)?,
                };
                if rotate {
                    let u = haar_with(n, rng);
                    let v = haar_with(m, rng);
                    let mut us = u;
                    for (j, mut col) in us.column_iter_mut().enumerate() {
                        col *= diag[j];
                    }
                    us * v.rows(0, n)
                } else {
                    let mut a = DMatrix::zeros(n, m);
                    for (i, s) in diag.iter().enumerate() {
                        a[(i, i)] = *s;
                    }
                    a
                }
            }
            RectTerm::Spike { gamma } => {
                let (u, v) = if rotate {
                    (unit_vector(n, rng), unit_vector(m, rng))
                } else {
                    let mut u = DVector::zeros(n);
                    u[0] = 1.0;
                    let mut v = DVector::zeros(m);
                    v[0] = 1.0;
                    (u, v)
                };
                &u * v.transpose() * *gamma
            }
        })
    }

    /// Full spectrum (or singular values) of realization `index`, ascending.
    fn realize(&self, pre: &Prepared, index: u64) -> Result<Vec<f64>> {
        let mut rng = stream_rng(self.seed, index);
        let rng = &mut rng;
        match &self.model {
            McModel::Rk1Rk1(m) => Ok(vec![rk1rk1_draw(m, self.n, rng)]),
            McModel::Single(a) => eigenvalues(&self.sym_term(a, pre.diag_a.as_ref(), false, false, rng)?),
            McModel::Sum(a, b) => {
                let rotate = !sym_invariant(a) && !sym_invariant(b);
                let ma = self.sym_term(a, pre.diag_a.as_ref(), false, false, rng)?;
                let mb = self.sym_term(b, pre.diag_b.as_ref(), rotate, false, rng)?;
                eigenvalues(&(ma + mb))
            }
            McModel::Product(a, b) => {
                let rotate = !sym_invariant(a) && !sym_invariant(b);
                let ma = self.sym_term(a, pre.diag_a.as_ref(), false, true, rng)?;
                let mb = self.sym_term(b, pre.diag_b.as_ref(), rotate, true, rng)?;
                let root = psd_sqrt(&ma)?;
                let c = &root * mb * &root;
                eigenvalues(&((&c + c.transpose()) * 0.5))
            }
            McModel::Rect(a, q) => {
                let m = rect_cols(self.n, *q)?;
                singular_values(&self.rect_term(a, m, pre.diag_a.as_ref(), false, rng)?)
            }
            McModel::RectSum(a, b, q) => {
                let m = rect_cols(self.n, *q)?;
                let rotate = !rect_invariant(a) && !rect_invariant(b);
                let ma = self.rect_term(a, m, pre.diag_a.as_ref(), false, rng)?;
                let mb = self.rect_term(b, m, pre.diag_b.as_ref(), rotate, rng)?;
                singular_values(&(ma + mb))
            }
        }
    }

    fn tops(&self, pre: &Prepared) -> Result<Vec<f64>> {
        (0..self.samples as u64)
            .into_par_iter()
            .map(|i| self.realize(pre, i).map(|s| *s.last().expect("nonempty spectrum")))
            .collect()
    }
}

fn sym_invariant(t: &McTerm) -> bool {
    matches!(t, McTerm::Goe { .. } | McTerm::Wishart { .. })
}

fn rect_invariant(t: &RectTerm) -> bool {
    matches!(t, RectTerm::Gauss { .. })
}

/// Symmetric square root of a positive semidefinite matrix.
fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
    if diagonal {
        return Ok(DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                m[(i, i)].max(0.0).sqrt()
            } else {
                0.0
            }
        }));
    }
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let mut vs = eig.eigenvectors.clone();
    for (j, mut col) in vs.column_iter_mut().enumerate() {
        col *= vals[j];
    }
    Ok(vs * eig.eigenvectors.transpose())
}

/// Neumaier-compensated sum in slice order.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn top_stats(tops: &[f64]) -> TopStats {
    let n = tops.len() as f64;
    let mean = compensated_sum(tops.iter().copied()) / n;
    let var = if tops.len() > 1 {
        compensated_sum(tops.iter().map(|t| (t - mean) * (t - mean))) / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = tops.to_vec();
    sorted.sort_by(f64::total_cmp);
    let stddev = var.sqrt();
    TopStats {
        mean,
        stddev,
        stderr: stddev / n.sqrt(),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        quantiles: [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99]
            .iter()
            .map(|&p| Quantile {
                p,
                value: quantile(&sorted, p),
            })
            .collect(),
    }
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

fn report(cfg: &McConfig, tops: &[f64], start: Instant) -> McReport {
    let stats = top_stats(tops);
    McReport {
        config: ConfigEcho {
            model: cfg.model.to_string(),
            n: cfg.n,
            samples: cfg.samples,
            seed: cfg.seed,
            iid_diagonals: cfg.iid_diagonals,
        },
        histogram: histogram(tops, stats.min, stats.max, cfg.histogram_bins),
        top: stats,
        spectrum: None,
        rate_points: Vec::new(),
        seed: cfg.seed,
        wall_clock_seconds: cfg.timing.then(|| start.elapsed().as_secs_f64()),
    }
}

/// Top-eigenvalue (or top singular value) statistics of the model.
pub fn sample_model_top(cfg: &McConfig) -> Result<McReport> {
    let start = Instant::now();
    cfg.validate()?;
    let pre = cfg.prepare()?;
    let tops = cfg.tops(&pre)?;
    Ok(report(cfg, &tops, start))
}

/// Empirical `−log p̂/n` with `p̂ = #{ζ₁ ≥ x}/samples`.
pub fn empirical_rate(cfg: &McConfig, xs: &[f64]) -> Result<McReport> {
    let start = Instant::now();
    cfg.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidInput("empty x grid".into()));
    }
    let pre = cfg.prepare()?;
    let tops = cfg.tops(&pre)?;
    let s = tops.len() as f64;
    let n = cfg.n as f64;
    let points: Vec<RatePoint> = xs
        .iter()
        .map(|&x| {
            let hits = tops.iter().filter(|&&t| t >= x).count() as u64;
            let p = hits as f64 / s;
            let (rate, stderr) = if hits > 0 {
                let sd = (p * (1.0 - p) / s).sqrt();
                (Some((-p.ln() / n).max(0.0)), Some(sd / (p * n)))
            } else {
                (None, None)
            };
            RatePoint {
                x,
                hits,
                p_hat: p,
                rate,
                stderr,
                flagged: hits < 10,
            }
        })
        .collect();
    if points.iter().all(|p| p.flagged) {
        return Err(Error::InsufficientTail(format!(
            "fewer than 10 of {} samples exceed every requested x",
            cfg.samples
        )));
    }
    let mut rep = report(cfg, &tops, start);
    rep.rate_points = points;
    rep.wall_clock_seconds = cfg.timing.then(|| start.elapsed().as_secs_f64());
    Ok(rep)
}

/// Pooled spectrum of every realization against a predicted density.
pub fn histogram_vs_density(cfg: &McConfig, predicted: &SpectralDensity) -> Result<McReport> {
    let start = Instant::now();
    cfg.validate()?;
    if matches!(cfg.model, McModel::Rk1Rk1(_)) {
        return Err(Error::InvalidInput(
            "the rank-one pair model has no bulk spectrum".into(),
        ));
    }
    let pre = cfg.prepare()?;
    let spectra: Vec<Vec<f64>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| cfg.realize(&pre, i))
        .collect::<Result<_>>()?;
    let tops: Vec<f64> = spectra.iter().map(|s| s[s.len() - 1]).collect();
    let mut pooled: Vec<f64> = spectra.into_iter().flatten().collect();
    pooled.sort_by(f64::total_cmp);
    let total = pooled.len();
    let sup = sup_cdf_distance(&pooled, predicted)?;
    let (lo, hi) = (
        pooled[0].min(predicted.lower()),
        pooled[total - 1].max(predicted.upper()),
    );
    let mut rep = report(cfg, &tops, start);
    rep.spectrum = Some(SpectrumCheck {
        histogram: histogram(&pooled, lo, hi, cfg.histogram_bins),
        pooled: total,
        sup_cdf_distance: sup,
    });
    rep.wall_clock_seconds = cfg.timing.then(|| start.elapsed().as_secs_f64());
    Ok(rep)
}

/// Kolmogorov distance on a 2001-point grid spanning the sample and the
/// support, checking both one-sided limits of the empirical CDF.
fn sup_cdf_distance(sorted: &[f64], predicted: &SpectralDensity) -> Result<f64> {
    let total = sorted.len() as f64;
    let lo = sorted[0].min(predicted.lower());
    let hi = sorted[sorted.len() - 1].max(predicted.upper());
    let mut sup = 0.0f64;
    for x in numeric::linspace(lo, hi, 2001) {
        let f = if x <= predicted.lower() {
            0.0
        } else if x >= predicted.upper() {
            1.0
        } else {
            predicted.cdf(x)?
        };
        let below = sorted.partition_point(|&v| v < x) as f64 / total;
        let at = sorted.partition_point(|&v| v <= x) as f64 / total;
        sup = sup.max((f - below).abs()).max((f - at).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_match_characteristic_roots() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -3.0]);
        let disc = (16.0f64 + 16.0).sqrt();
        let want = [(-2.0 - disc) / 2.0, (-2.0 + disc) / 2.0];
        for (a, b) in eigenvalues(&m).unwrap().iter().zip(want) {
            assert!((a - b).abs() < 1e-10);
        }
        for n in [3usize, 4] {
            let m = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
                0 => 2.0,
                1 => -1.0,
                _ => 0.0,
            });
            let ev = eigenvalues(&m).unwrap();
            for (k, v) in ev.iter().enumerate() {
                let want = 2.0 - 2.0 * ((k + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
                assert!((v - want).abs() < 1e-10, "n={n} k={k}");
            }
        }
        let r = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        assert_eq!(singular_values(&r).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn haar_is_orthogonal() {
        let o = haar_orthogonal(40, 3);
        let err = (o.transpose() * &o - DMatrix::identity(40, 40)).abs().max();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn goe_entry_scale() {
        let n = 200;
        let h = sample_goe(n, 1.0, 11);
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| h[(i, j)].powi(2))
            .sum();
        let var = off / (n * (n - 1) / 2) as f64 * n as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        let diag: f64 = (0..n).map(|i| h[(i, i)].powi(2)).sum::<f64>() / n as f64 * n as f64;
        assert!((diag - 2.0).abs() < 0.5, "{diag}");
        assert!(h.relative_eq(&h.transpose(), 0.0, 0.0));
    }

    #[test]
    fn deterministic_and_counts_sum() {
        let cfg = McConfig::new(McModel::Single(McTerm::Goe { sigma: 1.0 }), 32, 40, 5);
        let a = sample_model_top(&cfg).unwrap();
        let b = sample_model_top(&cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(a.histogram.counts.iter().sum::<u64>(), 40);
        assert!(a.wall_clock_seconds.is_none());
    }

    #[test]
    fn identity_product_is_wishart() {
        let d = SpectralDensity::dirac(1.0).unwrap();
        let cfg = McConfig::new(
            McModel::Product(McTerm::Fixed(d), McTerm::Wishart { q: 1.0 }),
            128,
            20,
            9,
        );
        let rep = sample_model_top(&cfg).unwrap();
        assert!((rep.top.mean - 4.0).abs() < 0.2, "{}", rep.top.mean);
        let g = McConfig::new(
            McModel::Product(McTerm::Goe { sigma: 1.0 }, McTerm::Wishart { q: 1.0 }),
            8,
            1,
            1,
        );
        assert!(sample_model_top(&g).is_err());
    }

    #[test]
    fn rk1rk1_rates_and_tail_flag() {
        let m = Rk1PlusRk1::new(2.0, 1.0).unwrap();
        let cfg = McConfig::new(McModel::Rk1Rk1(m), 16, 20000, 1);
        let rep = empirical_rate(&cfg, &[2.0, 2.2, 2.999]).unwrap();
        assert_eq!(rep.rate_points[0].rate, Some(0.0));
        assert!(!rep.rate_points[1].flagged);
        assert!(rep.rate_points[2].flagged);
        let goe = McConfig::new(McModel::Single(McTerm::Goe { sigma: 1.0 }), 64, 20, 1);
        assert!(matches!(empirical_rate(&goe, &[3.0]), Err(Error::InsufficientTail(_))));
    }

    #[test]
    fn compensated_mean() {
        let xs = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(xs.into_iter()), 2.0);
    }
}
