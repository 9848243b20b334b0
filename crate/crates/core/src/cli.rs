//! Command-line front end. Every subcommand writes one table (CSV or JSON)
//! or one Monte Carlo report; identical arguments give byte-identical output.
//!
//! Ensemble descriptors follow `kind:param[:param][:wall]` with kinds
//! `sc:σ`, `mp:q`, `qc:σ`, `gaussrect:σ:q`, `dirac:a`, `tab:<path>` and,
//! for Monte Carlo only, `spike:γ`. The wall token is `edge`, `inf` or a
//! number; it defaults to `inf` for kinds with a potential and `edge`
//! otherwise.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::freeconv::{add_conv, density_on_support, mul_conv, rect_conv, ConvolutionModel};
use crate::freenergy::{tilt_diff, TiltModel};
use crate::mcvalidate::{empirical_rate, histogram_vs_density, sample_model_top, McConfig, McModel, McTerm, RectTerm};
use crate::numeric::{chebyshev_grid, linspace};
use crate::rankone::{rk1rk1_density, rk1rk1_log_tail, rk1rk1_rate, Rk1PlusRk1, SpikeModel, SpikeOp};
use crate::ratefn::{
    effective_potential, phi_one_rect, psi_one_matrix, rate_prod, rate_rect, rate_sum, theta_star_one_matrix, RateCurve,
};
use crate::spectra::{
    metropolis_pulled_sample, metropolis_pushed_sample, metropolis_wall_sample, Ensemble, RectEnsemble, SpectralDensity,
};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "RMTRATE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Sc,
    Mp,
    Qc,
    GaussRect,
    Dirac,
    Tab,
    Spike,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WallSpec {
    Default,
    Edge,
    Inf,
    At(f64),
}

/// Parsed ensemble descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    kind: Kind,
    params: Vec<f64>,
    path: Option<PathBuf>,
    pub wall: WallSpec,
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

fn parse_wall(tok: &str) -> std::result::Result<WallSpec, String> {
    match tok {
        "edge" => Ok(WallSpec::Edge),
        "inf" => Ok(WallSpec::Inf),
        t => t
            .parse::<f64>()
            .ok()
            .filter(|w| w.is_finite())
            .map(WallSpec::At)
            .ok_or_else(|| format!("wall token `{t}` is not edge, inf or a number")),
    }
}

impl FromStr for Descriptor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let toks: Vec<&str> = s.split(':').collect();
        let (kind, arity) = match toks[0] {
            "sc" => (Kind::Sc, 1),
            "mp" => (Kind::Mp, 1),
            "qc" => (Kind::Qc, 1),
            "gaussrect" => (Kind::GaussRect, 2),
            "dirac" => (Kind::Dirac, 1),
            "spike" => (Kind::Spike, 1),
            "tab" => {
                if toks.len() < 2 || toks[1].is_empty() {
                    return Err("`tab` needs a path".into());
                }
                let (path, wall) = match toks.len() {
                    2 => (toks[1].to_string(), WallSpec::Default),
                    _ => match parse_wall(toks[toks.len() - 1]) {
                        Ok(w) => (toks[1..toks.len() - 1].join(":"), w),
                        Err(_) => (toks[1..].join(":"), WallSpec::Default),
                    },
                };
                return Ok(Self {
                    kind: Kind::Tab,
                    params: vec![],
                    path: Some(path.into()),
                    wall,
                });
            }
            k => return Err(format!("unknown ensemble kind `{k}`")),
        };
        if toks.len() < 1 + arity || toks.len() > 2 + arity {
            return Err(format!("`{s}` needs {arity} parameter(s) and an optional wall"));
        }
        let params = toks[1..=arity]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| format!("parameter `{t}` is not a number")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let wall = match toks.get(1 + arity) {
            Some(t) => parse_wall(t)?,
            None => WallSpec::Default,
        };
        Ok(Self {
            kind,
            params,
            path: None,
            wall,
        })
    }
}

impl Descriptor {
    fn wall_or(&self, default: WallSpec) -> WallSpec {
        match self.wall {
            WallSpec::Default => default,
            w => w,
        }
    }

    fn tabulated(&self) -> Result<SpectralDensity> {
        SpectralDensity::from_csv(self.path.as_ref().expect("tab descriptor has a path"))
    }

    /// Limiting density (singular values for rectangular kinds).
    pub fn density(&self) -> Result<SpectralDensity> {
        let p = &self.params;
        match self.kind {
            Kind::Sc => SpectralDensity::semicircle(p[0]),
            Kind::Mp => SpectralDensity::marchenko_pastur(p[0]),
            Kind::Qc => SpectralDensity::quarter_circle(p[0]),
            Kind::GaussRect => SpectralDensity::gauss_rect_lsvd(p[0], p[1]),
            Kind::Dirac => SpectralDensity::dirac(p[0]),
            Kind::Tab => self.tabulated(),
            Kind::Spike => Err(usage("a spike has no limiting density")),
        }
    }

    /// Symmetric ensemble with its wall.
    pub fn symmetric(&self) -> Result<Ensemble> {
        let p = &self.params;
        let (e, default) = match self.kind {
            Kind::Sc => (Ensemble::goe(p[0])?, WallSpec::Inf),
            Kind::Mp => (Ensemble::wishart(p[0])?, WallSpec::Inf),
            Kind::Dirac => (Ensemble::fixed(SpectralDensity::dirac(p[0])?), WallSpec::Edge),
            Kind::Tab => (Ensemble::fixed(self.tabulated()?), WallSpec::Edge),
            Kind::Qc | Kind::GaussRect | Kind::Spike => {
                return Err(usage("expected a symmetric descriptor (sc, mp, dirac, tab)"))
            }
        };
        match self.wall_or(default) {
            WallSpec::Inf if e.potential.is_none() => Err(usage("a wall at infinity needs sc or mp")),
            WallSpec::Inf | WallSpec::Default => Ok(e),
            WallSpec::Edge => {
                let w = e.edge();
                e.with_wall(w)
            }
            WallSpec::At(w) => e.with_wall(w),
        }
    }

    /// Rectangular ensemble of shape `q`.
    pub fn rect(&self, q: f64) -> Result<RectEnsemble> {
        let p = &self.params;
        let (re, default) = match self.kind {
            Kind::Qc => (RectEnsemble::ginibre(p[0])?, WallSpec::Inf),
            Kind::GaussRect => (RectEnsemble::gauss_rect(p[0], p[1])?, WallSpec::Inf),
            Kind::Dirac => (RectEnsemble::fixed(SpectralDensity::dirac(p[0])?, q)?, WallSpec::Edge),
            Kind::Tab => (RectEnsemble::fixed(self.tabulated()?, q)?, WallSpec::Edge),
            Kind::Sc | Kind::Mp | Kind::Spike => {
                return Err(usage("expected a rectangular descriptor (qc, gaussrect, dirac, tab)"))
            }
        };
        if re.shape_q != q && re.square.potential.is_some() {
            return Err(Error::InvalidShapeRatio(format!(
                "descriptor shape {} differs from q = {q}",
                re.shape_q
            )));
        }
        let re = re.with_shape(q)?;
        match self.wall_or(default) {
            WallSpec::Inf if re.square.potential.is_none() => Err(usage("a wall at infinity needs qc or gaussrect")),
            WallSpec::Inf | WallSpec::Default => Ok(re),
            WallSpec::Edge => {
                let w = re.edge();
                re.with_wall(w)
            }
            WallSpec::At(w) => re.with_wall(w),
        }
    }

    fn is_rect(&self) -> bool {
        matches!(self.kind, Kind::Qc | Kind::GaussRect)
    }

    /// Monte Carlo factor: `inf` walls sample the invariant ensemble, `edge`
    /// walls freeze the diagonal.
    pub fn mc_term(&self) -> Result<McTerm> {
        let p = &self.params;
        if self.kind == Kind::Spike {
            return Ok(McTerm::Spike { gamma: p[0] });
        }
        let default = if matches!(self.kind, Kind::Sc | Kind::Mp) {
            WallSpec::Inf
        } else {
            WallSpec::Edge
        };
        match (self.kind, self.wall_or(default)) {
            (Kind::Sc, WallSpec::Inf) => Ok(McTerm::Goe { sigma: p[0] }),
            (Kind::Mp, WallSpec::Inf) => Ok(McTerm::Wishart { q: p[0] }),
            (Kind::Qc | Kind::GaussRect, _) => Err(usage("expected a symmetric descriptor")),
            (_, WallSpec::Edge) => Ok(McTerm::Fixed(self.density()?)),
            _ => Err(usage("Monte Carlo walls are either `inf` (sc, mp) or `edge`")),
        }
    }

    pub fn rect_term(&self, q: f64) -> Result<RectTerm> {
        let p = &self.params;
        if self.kind == Kind::Spike {
            return Ok(RectTerm::Spike { gamma: p[0] });
        }
        let default = if self.is_rect() { WallSpec::Inf } else { WallSpec::Edge };
        match (self.kind, self.wall_or(default)) {
            (Kind::Qc, WallSpec::Inf) if q == 1.0 => Ok(RectTerm::Gauss { sigma: p[0] }),
            (Kind::GaussRect, WallSpec::Inf) if p[1] == q => Ok(RectTerm::Gauss { sigma: p[0] }),
            (Kind::Qc | Kind::GaussRect, WallSpec::Inf) => Err(Error::InvalidShapeRatio(format!(
                "descriptor shape differs from q = {q}"
            ))),
            (Kind::Sc | Kind::Mp, _) => Err(usage("expected a rectangular descriptor")),
            (_, WallSpec::Edge) => Ok(RectTerm::Fixed(self.density()?)),
            _ => Err(usage("Monte Carlo walls are either `inf` (qc, gaussrect) or `edge`")),
        }
    }
}

/// `min:max:count` with `count ≥ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let toks: Vec<&str> = s.split(':').collect();
        if toks.len() != 3 {
            return Err(format!("grid `{s}` is not min:max:count"));
        }
        let min: f64 = toks[0]
            .parse()
            .map_err(|_| format!("grid minimum `{}` is not a number", toks[0]))?;
        let max: f64 = toks[1]
            .parse()
            .map_err(|_| format!("grid maximum `{}` is not a number", toks[1]))?;
        let count: usize = toks[2]
            .parse()
            .map_err(|_| format!("grid count `{}` is not an integer", toks[2]))?;
        if count < 2 || !(min.is_finite() && max.is_finite()) || max < min {
            return Err(format!("grid `{s}` needs finite min ≤ max and count ≥ 2"));
        }
        Ok(Self { min, max, count })
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.min, self.max, self.count)
    }
}

/// Free convolution selector: `add`, `mul` or `rect:q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpSpec {
    Add,
    Mul,
    Rect(f64),
}

impl FromStr for OpSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "add" => Ok(Self::Add),
            "mul" => Ok(Self::Mul),
            _ => match s.strip_prefix("rect:").map(str::parse::<f64>) {
                Some(Ok(q)) => Ok(Self::Rect(q)),
                _ => Err(format!("operation `{s}` is not add, mul or rect:q")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GasMode {
    /// Wall at or above the edge.
    Wall,
    /// Wall at `--at`, possibly below the edge.
    Pushed,
    /// Top particle pinned at `--at`.
    Pulled,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Parser)]
#[command(
    name = "rmtrate",
    version,
    about = "Rate functions of the top eigenvalue of sums and products of random matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limiting density (and potential) of one ensemble or of a free convolution.
    /// Columns: x,density,potential.
    Density {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        b: Option<Descriptor>,
        #[arg(long, default_value = "add")]
        op: OpSpec,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Both Stieltjes branches. Columns: x,g,g_bar.
    Stieltjes {
        #[arg(long)]
        a: Descriptor,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Continued inverse of the Stieltjes transform. Columns: y,g_inv,r.
    Inverse {
        #[arg(long)]
        a: Descriptor,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// One-matrix rate. Columns: x,rate,theta_star.
    RateOne {
        #[arg(long)]
        a: Descriptor,
        /// Shape ratio for rectangular descriptors.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Rate of the top eigenvalue of A + OBOᵀ. Columns: x,rate,theta_star,regime.
    RateSum {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        b: Descriptor,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Rate of the top eigenvalue of A^{1/2}OBOᵀA^{1/2}. Columns: x,rate,theta_star,regime.
    RateProd {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        b: Descriptor,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Rate of the top singular value of A + UBVᵀ. Columns: x,rate,theta_star,regime.
    RateRect {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        b: Descriptor,
        #[arg(long)]
        q: f64,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Tilt diagnostic I′ₓ(θ) at fixed x over a θ grid. Columns: theta,i_prime.
    Tilt {
        #[arg(long)]
        a: Descriptor,
        /// Second factor; a zero matrix when absent.
        #[arg(long)]
        b: Option<Descriptor>,
        #[arg(long, default_value = "add")]
        op: OpSpec,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Effective potential reproducing the convolved density and rate.
    /// Columns: x,potential,rate.
    Potential {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        b: Descriptor,
        #[arg(long, default_value = "add")]
        op: OpSpec,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Rank-one deformation of a base ensemble. Columns: x,rate,theta_star,regime.
    RankOne {
        #[arg(long)]
        base: Descriptor,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value = "add")]
        op: OpSpec,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Sum of two rank-one projectors. Columns: x,rate and, with --n,
    /// density,finite_rate.
    Rk1rk1 {
        #[arg(long)]
        wa: f64,
        #[arg(long)]
        wb: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        grid: Grid,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo report (JSON).
    Mc {
        /// single | sum | prod | rect:q | rk1rk1:wa:wb
        #[arg(long)]
        model: String,
        #[arg(long)]
        a: Option<Descriptor>,
        #[arg(long)]
        b: Option<Descriptor>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Empirical rate on this grid.
        #[arg(long, allow_hyphen_values = true)]
        rate_grid: Option<Grid>,
        /// Empirical rate at these comma-separated x.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rate_x: Vec<f64>,
        /// Compare the pooled spectrum with this density.
        #[arg(long)]
        predicted: Option<Descriptor>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Draw fixed diagonals i.i.d. instead of classical positions.
        #[arg(long)]
        iid: bool,
        /// Include wall-clock seconds (output is then not reproducible).
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metropolis sample of the walled, pushed or pulled eigenvalue gas.
    /// Columns: index,value.
    Gas {
        #[arg(long)]
        a: Descriptor,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = GasMode::Wall)]
        mode: GasMode,
        #[arg(long, allow_hyphen_values = true)]
        at: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
}

/// Column-major numeric table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    fn render(&self, format: Format) -> Result<Vec<u8>> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => {
                let mut v = serde_json::to_vec_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
                v.push(b'\n');
                Ok(v)
            }
        }
    }
}

/// Maps domain-type failures at one grid point to NaN; numeric failures
/// propagate.
fn soft(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(Error::OutOfSupport { .. } | Error::DomainExceeded { .. } | Error::InvalidInput(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

fn convolution(a: &Descriptor, b: &Descriptor, op: OpSpec) -> Result<ConvolutionModel> {
    match op {
        OpSpec::Add => add_conv(a.symmetric()?, b.symmetric()?),
        OpSpec::Mul => mul_conv(a.symmetric()?, b.symmetric()?),
        OpSpec::Rect(q) => rect_conv(a.rect(q)?, b.rect(q)?, q),
    }
}

fn rate_table(curve: &RateCurve, grid: &Grid) -> Result<Table> {
    let xs = grid.points();
    let rates = curve.eval_grid(&xs)?;
    let mut t = Table::new(&["x", "rate", "theta_star", "regime"]);
    for (x, r) in xs.into_iter().zip(rates) {
        let th = soft(curve.theta_star(x))?;
        t.rows.push(vec![x, r, th, curve.regime(x).code() as f64]);
    }
    Ok(t)
}

fn density_table(a: &Descriptor, b: Option<&Descriptor>, op: OpSpec, grid: &Grid) -> Result<Table> {
    let xs = grid.points();
    let mut t = Table::new(&["x", "density", "potential"]);
    match b {
        None => {
            let (d, pot, wall) = if a.is_rect() {
                let re = a.rect(match a.kind {
                    Kind::GaussRect => a.params[1],
                    _ => 1.0,
                })?;
                (re.lsvd.clone(), None, re.wall)
            } else {
                let e = a.symmetric()?;
                (e.density.clone(), e.potential.clone(), e.wall)
            };
            for x in xs {
                let v = match &pot {
                    Some(_) if x > wall => f64::INFINITY,
                    Some(p) => p.value(x),
                    None => f64::NAN,
                };
                t.rows.push(vec![x, d.eval(x), v]);
            }
        }
        Some(b) => {
            let conv = convolution(a, b, op)?;
            let lo = conv.lower_bound();
            let inside = chebyshev_grid(lo, conv.c_plus, 801);
            let dens = density_on_support(&conv, &inside)?;
            for x in xs {
                t.rows.push(vec![x, dens.eval(x), f64::NAN]);
            }
        }
    }
    Ok(t)
}

fn write_bytes(out: Option<&PathBuf>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            let mut f = File::create(p)?;
            f.write_all(bytes)?;
            Ok(())
        }
        None => {
            let mut s = io::stdout().lock();
            s.write_all(bytes)?;
            s.flush()?;
            Ok(())
        }
    }
}

fn mc_model(spec: &str, a: Option<&Descriptor>, b: Option<&Descriptor>) -> Result<McModel> {
    let need = |d: Option<&Descriptor>, name: &str| d.cloned().ok_or_else(|| usage(format!("--{name} is required")));
    let toks: Vec<&str> = spec.split(':').collect();
    match toks.as_slice() {
        ["rk1rk1", wa, wb] => {
            let wa: f64 = wa
                .parse()
                .map_err(|_| usage(format!("weight `{wa}` is not a number")))?;
            let wb: f64 = wb
                .parse()
                .map_err(|_| usage(format!("weight `{wb}` is not a number")))?;
            Ok(McModel::Rk1Rk1(Rk1PlusRk1::new(wa, wb)?))
        }
        ["single"] => Ok(McModel::Single(need(a, "a")?.mc_term()?)),
        ["sum"] => Ok(McModel::Sum(need(a, "a")?.mc_term()?, need(b, "b")?.mc_term()?)),
        ["prod"] => Ok(McModel::Product(need(a, "a")?.mc_term()?, need(b, "b")?.mc_term()?)),
        ["rect", q] => {
            let q: f64 = q.parse().map_err(|_| usage(format!("shape `{q}` is not a number")))?;
            let ta = need(a, "a")?.rect_term(q)?;
            match b {
                None => Ok(McModel::Rect(ta, q)),
                Some(b) => Ok(McModel::RectSum(ta, b.rect_term(q)?, q)),
            }
        }
        _ => Err(usage(format!(
            "model `{spec}` is not single, sum, prod, rect:q or rk1rk1:wa:wb"
        ))),
    }
}

fn zero_factor(op: OpSpec) -> Result<Descriptor> {
    match op {
        OpSpec::Add => "dirac:0".parse().map_err(usage),
        OpSpec::Mul => "dirac:1".parse().map_err(usage),
        OpSpec::Rect(_) => "dirac:0".parse().map_err(usage),
    }
}

/// Executes one parsed command.
pub fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Density { a, b, op, grid, output } => {
            let t = density_table(&a, b.as_ref(), op, &grid)?;
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::Stieltjes { a, grid, output } => {
            let e = a.symmetric()?;
            let mut t = Table::new(&["x", "g", "g_bar"]);
            for x in grid.points() {
                let g = if x > e.edge() { soft(e.g(x))? } else { f64::NAN };
                let gb = if x >= e.edge() { soft(e.g_bar(x))? } else { f64::NAN };
                t.rows.push(vec![x, g, gb]);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::Inverse { a, grid, output } => {
            let e = a.symmetric()?;
            let mut t = Table::new(&["y", "g_inv", "r"]);
            for y in grid.points() {
                t.rows.push(vec![y, soft(e.g_inv(y))?, soft(e.r(y))?]);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::RateOne { a, q, grid, output } => {
            let mut t = Table::new(&["x", "rate", "theta_star"]);
            if a.is_rect() {
                let q = if a.kind == Kind::GaussRect { a.params[1] } else { q };
                let re = a.rect(q)?;
                for x in grid.points() {
                    t.rows.push(vec![x, phi_one_rect(&re, x)?, f64::NAN]);
                }
            } else {
                let e = a.symmetric()?;
                for x in grid.points() {
                    t.rows
                        .push(vec![x, psi_one_matrix(&e, x)?, soft(theta_star_one_matrix(&e, x))?]);
                }
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::RateSum { a, b, grid, output } => {
            let curve = rate_sum(&convolution(&a, &b, OpSpec::Add)?)?;
            write_bytes(output.out.as_ref(), &rate_table(&curve, &grid)?.render(output.format)?)
        }
        Command::RateProd { a, b, grid, output } => {
            let curve = rate_prod(&convolution(&a, &b, OpSpec::Mul)?)?;
            write_bytes(output.out.as_ref(), &rate_table(&curve, &grid)?.render(output.format)?)
        }
        Command::RateRect { a, b, q, grid, output } => {
            let curve = rate_rect(&convolution(&a, &b, OpSpec::Rect(q))?)?;
            write_bytes(output.out.as_ref(), &rate_table(&curve, &grid)?.render(output.format)?)
        }
        Command::Tilt {
            a,
            b,
            op,
            x,
            grid,
            output,
        } => {
            let b = match b {
                Some(b) => b,
                None => zero_factor(op)?,
            };
            let model = TiltModel::new(convolution(&a, &b, op)?, x)?;
            let mut t = Table::new(&["theta", "i_prime"]);
            for th in grid.points() {
                t.rows.push(vec![th, soft(tilt_diff(&model, th))?]);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::Potential { a, b, op, grid, output } => {
            let conv = convolution(&a, &b, op)?;
            let curve = match op {
                OpSpec::Add => rate_sum(&conv)?,
                OpSpec::Mul => rate_prod(&conv)?,
                OpSpec::Rect(_) => rate_rect(&conv)?,
            };
            let xs = grid.points();
            let rates = curve.eval_grid(&xs)?;
            let mut t = Table::new(&["x", "potential", "rate"]);
            for (x, r) in xs.into_iter().zip(rates) {
                t.rows.push(vec![x, soft(effective_potential(&curve, &conv, x))?, r]);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::RankOne {
            base,
            gamma,
            op,
            grid,
            output,
        } => {
            let op = match op {
                OpSpec::Add => SpikeOp::Add,
                OpSpec::Mul => SpikeOp::Mul,
                OpSpec::Rect(_) => return Err(usage("rectangular spikes have no rate function")),
            };
            let curve = SpikeModel::new(base.symmetric()?, gamma, op)?.rate_curve()?;
            write_bytes(output.out.as_ref(), &rate_table(&curve, &grid)?.render(output.format)?)
        }
        Command::Rk1rk1 {
            wa,
            wb,
            n,
            grid,
            output,
        } => {
            let m = Rk1PlusRk1::new(wa, wb)?;
            let mut t = match n {
                Some(_) => Table::new(&["x", "rate", "density", "finite_rate"]),
                None => Table::new(&["x", "rate"]),
            };
            for x in grid.points() {
                let mut row = vec![x, rk1rk1_rate(&m, x)];
                if let Some(n) = n {
                    row.push(rk1rk1_density(&m, n, x)?);
                    row.push(0.0 - rk1rk1_log_tail(&m, n, x)? / n as f64);
                }
                t.rows.push(row);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
        Command::Mc {
            model,
            a,
            b,
            n,
            samples,
            seed,
            rate_grid,
            rate_x,
            predicted,
            bins,
            iid,
            timing,
            out,
        } => {
            let mut cfg = McConfig::new(mc_model(&model, a.as_ref(), b.as_ref())?, n, samples, seed);
            cfg.histogram_bins = bins;
            cfg.iid_diagonals = iid;
            cfg.timing = timing;
            let mut xs = rate_grid.map(|g| g.points()).unwrap_or_default();
            xs.extend(rate_x);
            let rep = match (xs.is_empty(), predicted) {
                (false, Some(_)) => return Err(usage("empirical rates and --predicted are exclusive")),
                (false, None) => empirical_rate(&cfg, &xs)?,
                (true, Some(p)) => histogram_vs_density(&cfg, &p.density()?)?,
                (true, None) => sample_model_top(&cfg)?,
            };
            let mut bytes = serde_json::to_vec_pretty(&rep).map_err(|e| Error::Io(e.to_string()))?;
            bytes.push(b'\n');
            write_bytes(out.as_ref(), &bytes)
        }
        Command::Gas {
            a,
            n,
            steps,
            seed,
            mode,
            at,
            output,
        } => {
            let e = a.symmetric()?;
            let need_at = || at.ok_or_else(|| usage("--at is required for this mode"));
            let c = match mode {
                GasMode::Wall => metropolis_wall_sample(&e, n, steps, seed)?,
                GasMode::Pushed => metropolis_pushed_sample(&e, n, steps, seed, need_at()?)?,
                GasMode::Pulled => metropolis_pulled_sample(&e, n, steps, seed, need_at()?)?,
            };
            let mut t = Table::new(&["index", "value"]);
            for (i, v) in c.values.iter().enumerate() {
                t.rows.push(vec![i as f64, *v]);
            }
            write_bytes(output.out.as_ref(), &t.render(output.format)?)
        }
    }
}

/// Exit code of a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence(_) => 3,
        Error::InsufficientTail(_) => 4,
        _ => 1,
    }
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error: kind={kind} message={:?}", message)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `argv` (program name first), runs the job and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", error_line("Usage", first));
            return 2;
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            match e {
                Error::InvalidInput(_) | Error::InvalidShapeRatio(_) => 2,
                e => exit_code(&e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors_parse() {
        let d: Descriptor = "sc:1:edge".parse().unwrap();
        assert_eq!(d.wall, WallSpec::Edge);
        assert_eq!(d.symmetric().unwrap().wall, 2.0);
        let d: Descriptor = "gaussrect:1:0.5".parse().unwrap();
        assert_eq!(d.wall, WallSpec::Default);
        assert!(d.rect(0.5).unwrap().wall.is_infinite());
        let d: Descriptor = "mp:0.5:7".parse().unwrap();
        assert_eq!(d.wall, WallSpec::At(7.0));
        let d: Descriptor = "tab:/tmp/a:b.csv:edge".parse().unwrap();
        assert_eq!(d.path.as_deref(), Some(std::path::Path::new("/tmp/a:b.csv")));
        assert!("sc".parse::<Descriptor>().is_err());
        assert!("sc:1:wall".parse::<Descriptor>().is_err());
        assert!("zz:1".parse::<Descriptor>().is_err());
        assert!("sc:1".parse::<Descriptor>().unwrap().rect(1.0).is_err());
    }

    #[test]
    fn walls_below_edge_rejected() {
        let d: Descriptor = "sc:1:1.5".parse().unwrap();
        assert!(d.symmetric().is_err());
        let d: Descriptor = "dirac:0:inf".parse().unwrap();
        assert!(d.symmetric().is_err());
    }

    #[test]
    fn grid_and_op_parse() {
        let g: Grid = "2:3:11".parse().unwrap();
        assert_eq!(g.points().len(), 11);
        assert!("2:3:1".parse::<Grid>().is_err());
        assert!("3:2:5".parse::<Grid>().is_err());
        assert_eq!("rect:0.5".parse::<OpSpec>().unwrap(), OpSpec::Rect(0.5));
        assert!("div".parse::<OpSpec>().is_err());
    }

    #[test]
    fn mc_terms() {
        let t = "sc:1".parse::<Descriptor>().unwrap().mc_term().unwrap();
        assert!(matches!(t, McTerm::Goe { .. }));
        let t = "sc:1:edge".parse::<Descriptor>().unwrap().mc_term().unwrap();
        assert!(matches!(t, McTerm::Fixed(_)));
        assert!("sc:1:3".parse::<Descriptor>().unwrap().mc_term().is_err());
        assert!(mc_model("rk1rk1:2:1", None, None).is_ok());
        assert!(mc_model("sum", None, None).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["rmtrate", "rate-sum", "--a", "sc:1"]), 2);
        assert_eq!(
            run(["rmtrate", "rate-sum", "--a", "zz", "--b", "sc:1", "--grid", "2:3:3"]),
            2
        );
        assert_eq!(run(["rmtrate", "--version"]), 0);
    }
}
