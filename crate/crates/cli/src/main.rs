mod manifest;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use synthcurv::cdcheck::{
    bishop_gromov_residual, bonnet_myers_check, brunn_minkowski_residual, cd_check, default_tolerance,
    lichnerowicz_residual, max_k, mcp_check, CdReport, CdVariant, Family, TrialConfig, Verdict,
};
use synthcurv::comparison::{ComparisonParams, Dimension};
use synthcurv::smooth::{nr_condition, weighted_ricci, ScalarFieldSpec};
use synthcurv::space::{
    enumerate_geodesics, gen_circle, gen_grid_euclidean, gen_interval, gen_lp_grid, gen_model_space, validate,
    FiniteMetricMeasureSpace, GeodesicCatalogue, Weight, DEFAULT_MAX_PATHS,
};
use synthcurv::transport::{build_plan, interpolate, w2, PlanPolicy, ProbabilityVector};
use synthcurv::Error;

use manifest::RunManifest;

const EXIT_USAGE: u8 = 64;
const EXIT_SCHEMA: u8 = 65;
const EXIT_SOLVER: u8 = 70;

#[derive(Debug, Parser)]
#[command(name = "synthcurv", version, about = "Numerical checks of synthetic Ricci curvature bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Output {
    /// Write the full JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Record wall-clock time in the manifest (makes reports non-reproducible).
    #[arg(long)]
    wall_time: bool,
}

#[derive(Debug, Args)]
struct Curvature {
    #[arg(long = "K", allow_hyphen_values = true)]
    k: f64,
    /// Dimension bound; accepts "inf".
    #[arg(long = "N")]
    n: Dimension,
}

impl Curvature {
    fn params(&self) -> Result<ComparisonParams, Failure> {
        Ok(ComparisonParams::new(self.k, self.n)?)
    }
}

#[derive(Debug, Args)]
struct Catalogue {
    /// Slack allowed for near-geodesic chains.
    #[arg(long, default_value_t = 0.0)]
    eps_geo: f64,
    /// Cap on catalogued chains per pair.
    #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
    max_paths: usize,
}

#[derive(Debug, Args)]
struct Trials {
    /// Trial configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Verdict tolerance (default 4 h diam).
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated interpolation times.
    #[arg(long, value_delimiter = ',')]
    t: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
enum Family1 {
    /// Uniform grid on [a, b]; `--k0` adds the weight e^{-k0 (x - center)² / 2}.
    Interval {
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        a: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
        b: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, allow_hyphen_values = true)]
        k0: Option<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        center: f64,
    },
    /// Radial model of CD(N-1, N) on [0, π] with density sin^{N-1}.
    ModelSpace {
        #[arg(long = "N")]
        n: f64,
        #[arg(long)]
        h: f64,
    },
    /// Euclidean grid with the given point counts per axis.
    Grid {
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        #[arg(long)]
        h: f64,
        #[arg(long, allow_hyphen_values = true)]
        k0: Option<f64>,
    },
    /// ℓ_p grid, p ∈ [1, ∞].
    LpGrid {
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        #[arg(long)]
        h: f64,
    },
    /// Circle with intrinsic distance.
    Circle {
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        h: f64,
    },
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a space file.
    Gen {
        #[command(subcommand)]
        family: Family1,
        #[arg(short, long, global = true)]
        output: Option<PathBuf>,
    },
    /// Check a space file for metric and measure violations.
    Validate {
        space: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Exact W₂ distance and optimal coupling.
    W2 {
        space: PathBuf,
        /// Measure file or comma-separated masses.
        mu0: String,
        mu1: String,
        #[command(flatten)]
        out: Output,
    },
    /// Displacement interpolation at time t.
    Interp {
        space: PathBuf,
        mu0: String,
        mu1: String,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "min-slack")]
        policy: Policy,
        #[command(flatten)]
        catalogue: Catalogue,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Curvature-dimension check over random trials.
    CheckCd {
        space: PathBuf,
        #[command(flatten)]
        curvature: Curvature,
        /// Use the reduced condition.
        #[arg(long)]
        star: bool,
        #[command(flatten)]
        trials: Trials,
        #[command(flatten)]
        catalogue: Catalogue,
        #[command(flatten)]
        out: Output,
    },
    /// Largest accepted K by bisection.
    MaxK {
        space: PathBuf,
        #[arg(long = "N")]
        n: Dimension,
        #[arg(long, allow_hyphen_values = true, default_value_t = -2.0)]
        k_lo: f64,
        #[arg(long, allow_hyphen_values = true, default_value_t = 4.0)]
        k_hi: f64,
        #[arg(long)]
        star: bool,
        #[command(flatten)]
        trials: Trials,
        #[command(flatten)]
        catalogue: Catalogue,
        #[command(flatten)]
        out: Output,
    },
    /// Brunn-Minkowski inequality for two point sets.
    CheckBm {
        space: PathBuf,
        #[arg(long = "A", value_delimiter = ',')]
        a: Vec<usize>,
        #[arg(long = "B", value_delimiter = ',')]
        b: Vec<usize>,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        curvature: Curvature,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        catalogue: Catalogue,
        #[command(flatten)]
        out: Output,
    },
    /// Bishop-Gromov volume ratio.
    CheckBg {
        space: PathBuf,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        r: f64,
        #[arg(long = "R")]
        big_r: f64,
        #[command(flatten)]
        curvature: Curvature,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Bonnet-Myers diameter bound and antipode count.
    CheckDiam {
        space: PathBuf,
        #[command(flatten)]
        curvature: Curvature,
        /// Distance below the cutoff that still counts as antipodal (default h).
        #[arg(long)]
        antipode_tol: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Lichnerowicz spectral-gap inequality for a test function.
    CheckLich {
        space: PathBuf,
        /// Function file (JSON array) or comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        f: String,
        #[command(flatten)]
        curvature: Curvature,
        /// Neighbour radius of the discrete gradient (default 2h).
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        out: Output,
    },
    /// Measure contraction from a point.
    CheckMcp {
        space: PathBuf,
        #[arg(long)]
        x: usize,
        #[command(flatten)]
        curvature: Curvature,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        t: Vec<f64>,
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        catalogue: Catalogue,
        #[command(flatten)]
        out: Output,
    },
    /// Weighted Ricci curvature of a sampled weight.
    Ricci {
        field: PathBuf,
        /// Grid index per axis.
        #[arg(long, value_delimiter = ',')]
        x: Vec<usize>,
        /// Unit direction.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v: Vec<f64>,
        #[arg(long = "N")]
        n: Dimension,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Policy {
    MinSlack,
    Split,
}

impl From<Policy> for PlanPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::MinSlack => PlanPolicy::MinSlack,
            Policy::Split => PlanPolicy::Split,
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Schema(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Schema(_) => EXIT_SCHEMA,
            Failure::Solver(_) => EXIT_SOLVER,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Schema(m) => write!(f, "schema error: {m}"),
            Failure::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Solver(_) | Error::TooLarge(_) | Error::MissingGeodesic { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// Loads inputs while recording their digests.
struct Inputs<'a> {
    manifest: &'a mut RunManifest,
}

impl Inputs<'_> {
    fn read(&mut self, path: &Path) -> Result<String, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        self.manifest.record_input(path, &bytes);
        String::from_utf8(bytes).map_err(|_| Failure::Schema(format!("{} is not UTF-8", path.display())))
    }

    fn space(&mut self, path: &Path) -> Result<FiniteMetricMeasureSpace, Failure> {
        let text = self.read(path)?;
        FiniteMetricMeasureSpace::from_json(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))
    }

    fn field(&mut self, path: &Path) -> Result<ScalarFieldSpec, Failure> {
        let text = self.read(path)?;
        ScalarFieldSpec::from_json(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))
    }

    /// A file path if it exists, otherwise an inline comma-separated list.
    fn values(&mut self, arg: &str) -> Result<(Vec<f64>, bool), Failure> {
        let path = Path::new(arg);
        if path.is_file() {
            return Ok((Vec::new(), true));
        }
        arg.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| Failure::Usage(format!("bad number {v:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| (v, false))
    }

    fn measure(&mut self, arg: &str, space: &FiniteMetricMeasureSpace) -> Result<ProbabilityVector, Failure> {
        let (inline, is_file) = self.values(arg)?;
        let mu = if is_file {
            let text = self.read(Path::new(arg))?;
            ProbabilityVector::from_json(&text).map_err(|e| Failure::Schema(format!("{arg}: {e}")))?
        } else {
            ProbabilityVector::new(inline)?
        };
        mu.check_on(space)?;
        Ok(mu)
    }

    fn function(&mut self, arg: &str) -> Result<Vec<f64>, Failure> {
        let (inline, is_file) = self.values(arg)?;
        if !is_file {
            return Ok(inline);
        }
        let text = self.read(Path::new(arg))?;
        serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{arg}: {e}")))
    }

    fn trial_config(&mut self, trials: &Trials, eps_geo: f64) -> Result<TrialConfig, Failure> {
        let mut config = match &trials.config {
            Some(path) => {
                let text = self.read(path)?;
                serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", path.display())))?
            }
            None => TrialConfig::default(),
        };
        config.eps_geo = eps_geo;
        if let Some(n) = trials.trials {
            config.trials = n;
        }
        if let Some(seed) = trials.seed {
            config.seed = seed;
        }
        if let Some(tol) = trials.tol {
            config.tol = Some(tol);
        }
        if let Some(t) = &trials.t {
            config.t_samples = t.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

fn catalogue(space: &FiniteMetricMeasureSpace, c: &Catalogue) -> Result<GeodesicCatalogue, Failure> {
    Ok(enumerate_geodesics(space, c.eps_geo, c.max_paths)?)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn emit<T: Serialize>(out: &Output, manifest: &RunManifest, body: &T) -> Result<(), Failure> {
    if let Some(path) = &out.report {
        let doc = json!({ "manifest": manifest, "result": body });
        let text = serde_json::to_string_pretty(&doc).expect("report serializes");
        write_output(Some(path), &text)?;
    }
    Ok(())
}

fn summarize(report: &CdReport) {
    println!(
        "{:?} K={} N={}: {:?}, worst residual {:e} (tol {:e}, {} records)",
        report.family,
        report.params.k,
        report.params.n,
        report.verdict,
        report.worst_residual,
        report.tol,
        report.records.len()
    );
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

fn verdict_code(v: Verdict) -> u8 {
    v.exit_code() as u8
}

fn single(
    family: Family,
    params: ComparisonParams,
    record: synthcurv::cdcheck::ResidualRecord,
    tol: f64,
) -> CdReport {
    CdReport::from_records(family, params, vec![record], tol)
}

fn run(cli: Cli, manifest: &mut RunManifest) -> Result<u8, Failure> {
    let started = Instant::now();
    let finish = |manifest: &mut RunManifest, out: &Output| {
        if out.wall_time {
            manifest.wall_time_ms = Some(started.elapsed().as_secs_f64() * 1e3);
        }
    };
    match cli.command {
        Command::Gen { family, output } => {
            let space = match family {
                Family1::Interval { a, b, h, k0, center } => {
                    let weight = match k0 {
                        Some(k0) => Weight::Gaussian { k0, center: vec![center] },
                        None => Weight::Flat,
                    };
                    gen_interval(a, b, h, &weight)?
                }
                Family1::ModelSpace { n, h } => gen_model_space(n, h)?,
                Family1::Grid { counts, h, k0 } => {
                    let weight = match k0 {
                        Some(k0) => Weight::Gaussian { k0, center: Vec::new() },
                        None => Weight::Flat,
                    };
                    gen_grid_euclidean(&counts, h, &weight)?
                }
                Family1::LpGrid { p, counts, h } => gen_lp_grid(p, &counts, h)?,
                Family1::Circle { radius, h } => gen_circle(radius, h)?,
            };
            write_output(output.as_deref(), &space.to_json())?;
            if output.is_some() {
                println!("{} points, mesh {:e}, diameter {:e}", space.len(), space.mesh(), space.diameter());
            }
            Ok(0)
        }
        Command::Validate { space, out } => {
            let space = Inputs { manifest }.space(&space)?;
            let violations = validate(&space);
            println!("{} points, {} violations", space.len(), violations.len());
            for v in violations.iter().take(10) {
                println!("  {}", serde_json::to_string(v).expect("violation serializes"));
            }
            finish(manifest, &out);
            emit(&out, manifest, &json!({ "points": space.len(), "violations": violations }))?;
            Ok(if violations.is_empty() { 0 } else { verdict_code(Verdict::ViolatedBeyondTolerance) })
        }
        Command::W2 { space, mu0, mu1, out } => {
            let mut io = Inputs { manifest };
            let space = io.space(&space)?;
            let mu0 = io.measure(&mu0, &space)?;
            let mu1 = io.measure(&mu1, &space)?;
            let (dist, coupling) = w2(&space, &mu0, &mu1)?;
            println!("W2 = {dist:e}");
            finish(manifest, &out);
            emit(&out, manifest, &json!({ "w2": dist, "coupling": coupling }))?;
            Ok(0)
        }
        Command::Interp { space, mu0, mu1, t, policy, catalogue: c, output } => {
            let mut io = Inputs { manifest };
            let space = io.space(&space)?;
            let mu0 = io.measure(&mu0, &space)?;
            let mu1 = io.measure(&mu1, &space)?;
            let cat = catalogue(&space, &c)?;
            let (_, coupling) = w2(&space, &mu0, &mu1)?;
            let plan = build_plan(&cat, &coupling, policy.into())?;
            let alpha = interpolate(&plan, t)?;
            let text = serde_json::to_string_pretty(&alpha.to_file()).expect("measure serializes");
            write_output(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::CheckCd { space, curvature, star, trials, catalogue: c, out } => {
            let mut io = Inputs { manifest };
            let space = io.space(&space)?;
            let config = io.trial_config(&trials, c.eps_geo)?;
            let cat = catalogue(&space, &c)?;
            let variant = if star { CdVariant::Reduced } else { CdVariant::Standard };
            let report = cd_check(&space, &cat, curvature.params()?, &config, variant)?;
            summarize(&report);
            manifest.config = Some(serde_json::to_value(&config).expect("config serializes"));
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::MaxK { space, n, k_lo, k_hi, star, trials, catalogue: c, out } => {
            let mut io = Inputs { manifest };
            let space = io.space(&space)?;
            let config = io.trial_config(&trials, c.eps_geo)?;
            let cat = catalogue(&space, &c)?;
            let variant = if star { CdVariant::Reduced } else { CdVariant::Standard };
            let result = max_k(&space, &cat, n, (k_lo, k_hi), &config, variant)?;
            println!(
                "max K = {} for N = {} (range [{k_lo}, {k_hi}], resolution {:e}): {:?}",
                result.k_max, n, result.resolution, result.verdict
            );
            for w in &result.warnings {
                println!("warning: {w}");
            }
            manifest.config = Some(serde_json::to_value(&config).expect("config serializes"));
            finish(manifest, &out);
            emit(&out, manifest, &result)?;
            Ok(verdict_code(result.verdict))
        }
        Command::CheckBm { space, a, b, t, curvature, tol, catalogue: c, out } => {
            let space = Inputs { manifest }.space(&space)?;
            let cat = catalogue(&space, &c)?;
            let params = curvature.params()?;
            let record = brunn_minkowski_residual(&space, &cat, &a, &b, t, params)?;
            let report = single(Family::BrunnMinkowski, params, record, tol.unwrap_or_else(|| default_tolerance(&space)));
            summarize(&report);
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::CheckBg { space, x, r, big_r, curvature, tol, out } => {
            let space = Inputs { manifest }.space(&space)?;
            let params = curvature.params()?;
            let record = bishop_gromov_residual(&space, x, r, big_r, params)?;
            let report = single(Family::BishopGromov, params, record, tol.unwrap_or_else(|| default_tolerance(&space)));
            summarize(&report);
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::CheckDiam { space, curvature, antipode_tol, tol, out } => {
            let space = Inputs { manifest }.space(&space)?;
            let antipode_tol = antipode_tol.unwrap_or_else(|| space.mesh());
            let report = bonnet_myers_check(
                &space,
                curvature.params()?,
                antipode_tol,
                tol.unwrap_or_else(|| default_tolerance(&space)),
            )?;
            summarize(&report);
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::CheckLich { space, f, curvature, radius, tol, out } => {
            let mut io = Inputs { manifest };
            let space = io.space(&space)?;
            let f = io.function(&f)?;
            let params = curvature.params()?;
            let record = lichnerowicz_residual(&space, &f, params, radius)?;
            let report = single(Family::Lichnerowicz, params, record, tol.unwrap_or_else(|| default_tolerance(&space)));
            summarize(&report);
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::CheckMcp { space, x, curvature, t, tol, catalogue: c, out } => {
            let space = Inputs { manifest }.space(&space)?;
            let cat = catalogue(&space, &c)?;
            let tol = tol.unwrap_or_else(|| default_tolerance(&space));
            let report = mcp_check(&space, &cat, x, curvature.params()?, &t, tol)?;
            summarize(&report);
            finish(manifest, &out);
            emit(&out, manifest, &report)?;
            Ok(verdict_code(report.verdict))
        }
        Command::Ricci { field, x, v, n, out } => {
            let field = Inputs { manifest }.field(&field)?;
            let ric = weighted_ricci(&field, &x, &v, n)?;
            let nr = match n {
                Dimension::Finite(n) if n > field.dims as f64 => Some(nr_condition(&field, &x, &v, n)?),
                _ => None,
            };
            println!("Ric_{n}(v) = {ric:e}");
            if let Some(nr) = &nr {
                println!("NR condition: {} (margin {:e}, tolerance {:e})", nr.holds, nr.margin, nr.tolerance);
            }
            finish(manifest, &out);
            emit(&out, manifest, &json!({ "ricci": ric, "nr": nr }))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = argv.get(1).cloned().unwrap_or_default();
    let mut manifest = RunManifest::new(&command, argv.into_iter().skip(1).collect());
    match run(cli, &mut manifest) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.code())
        }
    }
}
