//! Parameter sweeps and byte-stable CSV/JSON output.
//!
//! Floats are written with 17 significant digits in scientific notation.
//! Every CSV starts with one `#` line naming the configuration hash, the
//! grid, the scheme and the build.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{validate, ModelConfig};
use crate::simulation::PathRecord;
use crate::vi::{
    build_obstacle, extract_boundary, required_half_width, solve_vi, BoundaryRecord, Grid2D,
    Region, Scheme, VISolution,
};

/// `{:.16e}`: 17 significant digits, locale independent.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Lowercase hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &ModelConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub grid: String,
    pub scheme: String,
    pub build: String,
}

impl Provenance {
    pub fn new(
        config: &ModelConfig,
        grid: Option<&Grid2D>,
        scheme: Option<&Scheme>,
        build: &str,
    ) -> Self {
        let grid = grid
            .map(|g| {
                format!(
                    "n_t={} n_eta={} eta=[{},{}] T={}",
                    g.n_t(),
                    g.n_eta(),
                    fmt_f64(g.eta_min()),
                    fmt_f64(g.eta_max()),
                    fmt_f64(g.horizon())
                )
            })
            .unwrap_or_else(|| "none".into());
        let scheme = scheme
            .map(|s| {
                format!(
                    "theta={} psor_tol={} psor_max_iter={} omega={}",
                    s.theta, s.psor_tol, s.psor_max_iter, s.omega
                )
            })
            .unwrap_or_else(|| "none".into());
        Provenance {
            config_sha256: config_hash(config),
            grid,
            scheme,
            build: build.to_string(),
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# config_sha256={} grid=[{}] scheme=[{}] build={}",
            self.config_sha256, self.grid, self.scheme, self.build
        )
    }
}

/// Surface rows `t,eta,v,obstacle,in_continuation`.
pub fn write_surface_csv(mut w: impl Write, sol: &VISolution, prov: &Provenance) -> io::Result<()> {
    writeln!(w, "{}", prov.header())?;
    writeln!(w, "t,eta,v,obstacle,in_continuation")?;
    for (i, &t) in sol.grid.t_nodes.iter().enumerate() {
        for (j, &eta) in sol.grid.eta_nodes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(t),
                fmt_f64(eta),
                fmt_f64(sol.value(i, j)),
                fmt_f64(sol.obstacle.get(i, j)),
                sol.in_continuation(i, j) as u8
            )?;
        }
    }
    Ok(())
}

/// Boundary rows `t,lower_eta,upper_eta,region,lower_censored,upper_censored`;
/// barrier columns are empty where every node stops.
pub fn write_boundary_csv(
    mut w: impl Write,
    records: &[BoundaryRecord],
    prov: &Provenance,
) -> io::Result<()> {
    writeln!(w, "{}", prov.header())?;
    writeln!(
        w,
        "t,lower_eta,upper_eta,region,lower_censored,upper_censored"
    )?;
    for r in records {
        let region = match r.region {
            Region::FullStop => "full_stop",
            Region::TwoSided => "two_sided",
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_opt(r.lower_eta),
            fmt_opt(r.upper_eta),
            region,
            r.lower_censored as u8,
            r.upper_censored as u8
        )?;
    }
    Ok(())
}

/// Per-path rows `tau,mu_tau,reward,utility,min_surplus,flagged`.
pub fn write_paths_csv(
    mut w: impl Write,
    records: &[PathRecord],
    prov: &Provenance,
) -> io::Result<()> {
    writeln!(w, "{}", prov.header())?;
    writeln!(w, "tau,mu_tau,reward,utility,min_surplus,flagged")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(r.tau),
            fmt_f64(r.mu_tau),
            fmt_f64(r.reward),
            fmt_f64(r.utility),
            fmt_f64(r.min_surplus),
            r.flagged as u8
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    Alpha,
    Z0,
    Kappa,
    Rho,
    SigmaMu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Nonincreasing,
    Nondecreasing,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::Alpha => "alpha",
            SweepParam::Z0 => "z0",
            SweepParam::Kappa => "kappa",
            SweepParam::Rho => "rho",
            SweepParam::SigmaMu => "sigma_mu",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &ModelConfig, value: f64) -> ModelConfig {
        let mut c = base.clone();
        match self {
            SweepParam::Delta => c.habit.delta = value.into(),
            SweepParam::Alpha => c.habit.alpha = value.into(),
            SweepParam::Z0 => c.habit.z0 = value,
            SweepParam::Kappa => c.cost.kappa = value,
            SweepParam::Rho => c.market.rho = value,
            SweepParam::SigmaMu => c.market.sigma_mu = value,
        }
        c
    }

    /// Expected direction of `ṽ(0, μ0)` along an increasing ladder.
    pub fn value_direction(self) -> Option<Direction> {
        match self {
            SweepParam::Delta | SweepParam::Z0 | SweepParam::Kappa => {
                Some(Direction::Nonincreasing)
            }
            SweepParam::Alpha => Some(Direction::Nondecreasing),
            SweepParam::Rho | SweepParam::SigmaMu => None,
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "delta" => SweepParam::Delta,
            "alpha" => SweepParam::Alpha,
            "z0" => SweepParam::Z0,
            "kappa" => SweepParam::Kappa,
            "rho" => SweepParam::Rho,
            "sigma_mu" => SweepParam::SigmaMu,
            other => {
                return Err(Error::Sweep(format!(
                    "unknown sweep parameter `{other}` (expected delta, alpha, z0, kappa, rho or sigma_mu)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub base: ModelConfig,
}

impl SweepSpec {
    /// Laddered configs, after checking the ladder and validating each.
    pub fn configs(&self) -> Result<Vec<ModelConfig>> {
        if self.values.len() < 2 {
            return Err(Error::Sweep(
                "sweep ladder needs at least two values".into(),
            ));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Sweep(
                "sweep ladder must be strictly increasing".into(),
            ));
        }
        self.values
            .iter()
            .map(|&v| {
                let c = self.param.apply(&self.base, v);
                let report = validate(&c);
                if report.is_valid() {
                    Ok(c)
                } else {
                    Err(Error::InvalidConfig(report))
                }
            })
            .collect()
    }
}

/// Grid resolution for sweeps; the drift domain is shared by all ladder values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepGrid {
    pub n_t: usize,
    pub n_eta: usize,
    /// Fixed half-width; `None` takes the widest automatic width over the ladder.
    pub half_width: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub value: f64,
    pub v0: f64,
    pub complementarity_residual: f64,
    pub psor_iterations: usize,
    pub boundary: Vec<BoundaryRecord>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValueVerdict {
    pub direction: Direction,
    /// Weak monotonicity.
    pub monotone: bool,
    /// Every step moves by more than `STRICT_MARGIN`.
    pub strict: bool,
    pub smallest_step: f64,
}

/// Margin for strict value ordering.
pub const STRICT_MARGIN: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct BarrierVerdict {
    /// Slices with a continuation region at some ladder value.
    pub slices: usize,
    /// Of those, slices where both barrier distances are nondecreasing.
    pub consistent: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub param: SweepParam,
    pub half_width: f64,
    pub grid: SweepGrid,
    pub entries: Vec<SweepEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value_verdict: Option<ValueVerdict>,
    pub barrier_verdict: BarrierVerdict,
    #[serde(skip)]
    pub grid_used: Option<Grid2D>,
}

pub fn value_verdict(values: &[f64], direction: Direction) -> ValueVerdict {
    let steps: Vec<f64> = values
        .windows(2)
        .map(|w| match direction {
            Direction::Nonincreasing => w[0] - w[1],
            Direction::Nondecreasing => w[1] - w[0],
        })
        .collect();
    let smallest_step = steps.iter().copied().fold(f64::INFINITY, f64::min);
    ValueVerdict {
        direction,
        monotone: smallest_step >= 0.0,
        strict: smallest_step > STRICT_MARGIN,
        smallest_step,
    }
}

/// Barrier distance per side; an all-stop slice has distance zero.
fn side_distance(r: &BoundaryRecord, mu_bar: f64, upper: bool) -> (f64, bool) {
    let (lo, hi) = r.distances(mu_bar);
    if upper {
        (hi.unwrap_or(0.0).max(0.0), r.upper_censored)
    } else {
        (lo.unwrap_or(0.0).max(0.0), r.lower_censored)
    }
}

/// Nondecreasing barrier distance along the ladder, slice by slice.
///
/// A censored barrier at the larger ladder value is consistent with anything
/// (its true level lies beyond the domain); a censored barrier at the smaller
/// value followed by an uncensored one is a violation.
pub fn barrier_verdict(boundaries: &[Vec<BoundaryRecord>], mu_bar: f64) -> BarrierVerdict {
    let n_t = boundaries.first().map_or(0, Vec::len);
    let mut slices = 0;
    let mut consistent = 0;
    for i in 0..n_t {
        if boundaries.iter().all(|b| b[i].region == Region::FullStop) {
            continue;
        }
        slices += 1;
        let ok = boundaries.windows(2).all(|w| {
            [false, true].iter().all(|&upper| {
                let (da, ca) = side_distance(&w[0][i], mu_bar, upper);
                let (db, cb) = side_distance(&w[1][i], mu_bar, upper);
                cb || (!ca && db >= da)
            })
        });
        consistent += ok as usize;
    }
    BarrierVerdict {
        slices,
        consistent,
        fraction: if slices == 0 {
            1.0
        } else {
            consistent as f64 / slices as f64
        },
    }
}

/// Solves every ladder value on one shared grid.
pub fn run_sweep(spec: &SweepSpec, grid: SweepGrid, scheme: Scheme) -> Result<SweepReport> {
    let configs = spec.configs()?;
    let half_width = match grid.half_width {
        Some(w) => w,
        None => {
            let mut w: f64 = 0.0;
            for c in &configs {
                w = w.max(required_half_width(c, grid.n_t)?);
            }
            w
        }
    };
    let base = &spec.base.market;
    let shared = Grid2D::centered(base, grid.n_t, grid.n_eta, half_width)?;
    let solve = |c: &ModelConfig| -> Result<VISolution> {
        let obstacle = build_obstacle(c, &shared)?;
        solve_vi(&c.market, &shared, &obstacle, scheme)
    };
    #[cfg(feature = "parallel")]
    let solved: Vec<Result<VISolution>> = configs.par_iter().map(solve).collect();
    #[cfg(not(feature = "parallel"))]
    let solved: Vec<Result<VISolution>> = configs.iter().map(solve).collect();

    let mut entries = Vec::with_capacity(configs.len());
    for ((c, sol), &value) in configs.iter().zip(solved).zip(&spec.values) {
        let sol = sol?;
        entries.push(SweepEntry {
            value,
            v0: sol.initial_value(c.market.mu0),
            complementarity_residual: sol.complementarity_residual(),
            psor_iterations: sol.total_iterations(),
            boundary: extract_boundary(&sol),
        });
    }
    let values: Vec<f64> = entries.iter().map(|e| e.v0).collect();
    let boundaries: Vec<Vec<BoundaryRecord>> = entries.iter().map(|e| e.boundary.clone()).collect();
    Ok(SweepReport {
        param: spec.param,
        half_width,
        grid,
        value_verdict: spec
            .param
            .value_direction()
            .map(|d| value_verdict(&values, d)),
        barrier_verdict: barrier_verdict(&boundaries, base.mu_bar),
        entries,
        grid_used: Some(shared),
    })
}

fn ladder_label(value: f64) -> String {
    format!("{value}").replace('-', "m")
}

impl SweepReport {
    /// One boundary CSV per ladder value plus `summary.json`; returns the paths written.
    pub fn write(
        &self,
        dir: &Path,
        spec: &SweepSpec,
        scheme: &Scheme,
        build: &str,
    ) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for e in &self.entries {
            let config = spec.param.apply(&spec.base, e.value);
            let prov = Provenance::new(&config, self.grid_used.as_ref(), Some(scheme), build);
            let path = dir.join(format!(
                "boundary_{}_{}.csv",
                self.param.name(),
                ladder_label(e.value)
            ));
            let file = io::BufWriter::new(fs::File::create(&path)?);
            write_boundary_csv(file, &e.boundary, &prov)?;
            written.push(path);
        }
        let path = dir.join("summary.json");
        let summary = SweepSummary {
            provenance: Provenance::new(&spec.base, self.grid_used.as_ref(), Some(scheme), build),
            param: self.param,
            values: self.entries.iter().map(|e| e.value).collect(),
            v0: self.entries.iter().map(|e| e.v0).collect(),
            half_width: self.half_width,
            value_verdict: self.value_verdict.clone(),
            barrier_verdict: self.barrier_verdict.clone(),
        };
        fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Serialize)]
struct SweepSummary {
    provenance: Provenance,
    param: SweepParam,
    values: Vec<f64>,
    v0: Vec<f64>,
    half_width: f64,
    value_verdict: Option<ValueVerdict>,
    barrier_verdict: BarrierVerdict,
}

/// Boundary CSVs for a δ ladder on a shared grid.
pub fn emit_figure1_data(
    config: &ModelConfig,
    grid: SweepGrid,
    scheme: Scheme,
    delta_ladder: &[f64],
    dir: &Path,
    build: &str,
) -> Result<(SweepReport, Vec<PathBuf>)> {
    let spec = SweepSpec {
        param: SweepParam::Delta,
        values: delta_ladder.to_vec(),
        base: config.clone(),
    };
    let report = run_sweep(&spec, grid, scheme)?;
    let files = report.write(dir, &spec, &scheme, build)?;
    Ok((report, files))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, lo: Option<f64>, hi: Option<f64>, censored: bool) -> BoundaryRecord {
        BoundaryRecord {
            t,
            region: if lo.is_some() {
                Region::TwoSided
            } else {
                Region::FullStop
            },
            lower_eta: lo,
            upper_eta: hi,
            lower_censored: censored,
            upper_censored: censored,
        }
    }

    #[test]
    fn float_format_is_fixed_width_mantissa() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ModelConfig::figure1(0.25);
        let b = ModelConfig::figure1(0.45);
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn ladder_checks() {
        let base = ModelConfig::figure1(0.25);
        let bad = SweepSpec {
            param: SweepParam::Kappa,
            values: vec![0.0, 0.0],
            base: base.clone(),
        };
        assert!(bad.configs().is_err());
        let short = SweepSpec {
            param: SweepParam::Kappa,
            values: vec![0.0],
            base: base.clone(),
        };
        assert!(short.configs().is_err());
        let invalid = SweepSpec {
            param: SweepParam::Rho,
            values: vec![0.5, 1.5],
            base,
        };
        assert!(matches!(invalid.configs(), Err(Error::InvalidConfig(_))));
        assert!("gamma".parse::<SweepParam>().is_err());
    }

    #[test]
    fn barrier_rules() {
        let mu = 0.0;
        let narrow = vec![
            record(0.0, Some(-1.0), Some(1.0), false),
            record(1.0, None, None, false),
        ];
        let wide = vec![
            record(0.0, Some(-2.0), Some(2.0), false),
            record(1.0, None, None, false),
        ];
        let v = barrier_verdict(&[narrow.clone(), wide.clone()], mu);
        assert_eq!((v.slices, v.consistent), (1, 1));
        let v = barrier_verdict(&[wide.clone(), narrow.clone()], mu);
        assert_eq!((v.slices, v.consistent), (1, 0));
        let censored = vec![
            record(0.0, Some(-3.0), Some(3.0), true),
            record(1.0, None, None, false),
        ];
        assert_eq!(
            barrier_verdict(&[wide.clone(), censored.clone()], mu).consistent,
            1
        );
        assert_eq!(barrier_verdict(&[censored, wide], mu).consistent, 0);
    }

    #[test]
    fn value_verdicts() {
        let v = value_verdict(&[3.0, 2.0, 2.0], Direction::Nonincreasing);
        assert!(v.monotone && !v.strict);
        let v = value_verdict(&[1.0, 2.0, 4.0], Direction::Nondecreasing);
        assert!(v.monotone && v.strict);
        assert!(!value_verdict(&[1.0, 2.0], Direction::Nonincreasing).monotone);
    }

    #[test]
    fn sweep_emits_one_file_per_value() {
        let base = ModelConfig::figure1(0.25);
        let dir = std::env::temp_dir().join(format!("habit-entry-sweep-{}", std::process::id()));
        let grid = SweepGrid {
            n_t: 11,
            n_eta: 41,
            half_width: Some(6.0),
        };
        let (report, files) =
            emit_figure1_data(&base, grid, Scheme::default(), &[0.05, 0.75], &dir, "test").unwrap();
        assert_eq!(files.len(), 3);
        let text = fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# config_sha256="));
        assert_eq!(lines.len(), 2 + 11);
        assert!(lines.last().unwrap().contains("full_stop"));
        assert_eq!(report.entries.len(), 2);
        fs::remove_dir_all(&dir).unwrap();
    }
}
