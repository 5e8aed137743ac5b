//! The `carleman-lab` command-line tool.
//!
//! Every subcommand writes CSV tables and a JSON summary into the output
//! directory. The exit status is 0 when every check passes, 1 when a verifier
//! fails and 2 on usage or input errors. Settings are taken from flags first,
//! then from the `--config` JSON file, then from built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::{select_params, sweep_params, CarlemanConfig, CoefficientField, ParamMode};
use crate::estimates::pointwise::wave_weights;
use crate::estimates::{
    verify_combined, verify_elliptic, verify_energy, verify_pointwise, verify_wave_carleman, DeltaCondition,
    EstimateReport, Verdict, VerifyOptions,
};
use crate::experiments::{
    desk_grid, generate_pair, lemma_abes_check, run_thm1_ensemble, run_thm2_ensemble, summarize, PairKind,
    StabilityReport, Support,
};
use crate::forward::{convergence_study, extract_traces, solve_ibvp, IbvpFile, TraceData};
use crate::grid::io::{read_scalar, write_scalar, write_spacetime, Grd1};
use crate::grid::min_admissible_nt;
use crate::recovery::{reconstruct, reference_potential, relative_error, synthesize, zero_dirichlet, RecoveryConfig, StepRule};
use crate::report::{write_csv, write_json};
use crate::testfn::TrigPoly;
use crate::{GridSpec, LabError, Result, ScalarField, SpaceTimeField};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CARLEMAN_LAB_OUT";
const DEFAULT_OUT: &str = "carleman-lab-out";

#[derive(Debug, Parser)]
#[command(name = "carleman-lab", version, about = "Numerical checks of Carleman estimates and stability for the wave equation")]
pub struct Cli {
    /// Output directory [default: $CARLEMAN_LAB_OUT, else ./carleman-lab-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file of settings; explicit flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a forward problem, or run the manufactured convergence study
    Forward(ForwardArgs),
    /// Check one estimate on an ensemble of test fields
    Verify(VerifyArgs),
    /// Stability-ratio experiments for the inverse problems
    Stability(StabilityArgs),
    /// Reconstruct the potential from lateral boundary records
    Recover(RecoverArgs),
    /// Empirical constants of the integral estimates across several λ
    SweepLambda(SweepArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Forward(_) => "forward",
            Command::Verify(_) => "verify",
            Command::Stability(_) => "stability",
            Command::Recover(_) => "recover",
            Command::SweepLambda(_) => "sweep-lambda",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Space dimension (1 or 2)
    #[arg(long)]
    pub dim: Option<usize>,
    /// Nodes per axis on the unit interval or square
    #[arg(long)]
    pub nx: Option<usize>,
    /// Time levels [default: depends on the command, at least the CFL minimum]
    #[arg(long)]
    pub nt: Option<usize>,
    /// Final time
    #[arg(long = "t-final")]
    pub t_final: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CarlemanArgs {
    /// Centre of the phase function, comma separated; must lie outside the domain
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta: Option<Vec<f64>>,
    /// Centre of the elliptic weight, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ParamMode>,
    /// Carleman parameters, comma separated
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Phase parameter β in sweep mode
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Manufactured {
    /// `u = cos(t) Π sin(πx)` with `q = 1 - nπ²`
    CosSin,
}

#[derive(Debug, Clone, Args)]
pub struct ForwardArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Run the refinement study for a manufactured solution
    #[arg(long, value_enum)]
    pub manufactured: Option<Manufactured>,
    /// Refinement levels of the study
    #[arg(long)]
    pub levels: Option<usize>,
    /// JSON problem description to solve
    #[arg(long)]
    pub ibvp: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Pointwise,
    Wave,
    Elliptic,
    Energy,
    Combined,
}

impl EstimateKind {
    fn as_str(&self) -> &'static str {
        match self {
            EstimateKind::Pointwise => "pointwise",
            EstimateKind::Wave => "wave",
            EstimateKind::Elliptic => "elliptic",
            EstimateKind::Energy => "energy",
            EstimateKind::Combined => "combined",
        }
    }
}

/// Principal-part coefficients for the pointwise check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CoeffChoice {
    Minkowski,
    Anisotropic,
    /// Minkowski for even seeds, anisotropic for odd ones
    Alternate,
    /// Both fields for every seed
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub estimate: EstimateKind,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub carleman: CarlemanArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[arg(long, value_enum)]
    pub coeffs: Option<CoeffChoice>,
    /// Tolerance factor of the pointwise check
    #[arg(long)]
    pub kappa: Option<f64>,
    #[command(flatten)]
    pub delta: DeltaArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EnsembleArgs {
    /// Number of seeded test cases
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed
    #[arg(long)]
    pub seed_base: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DeltaArgs {
    /// Exponent α of the Laplacian hypothesis of the combined estimate
    #[arg(long)]
    pub delta_alpha: Option<f64>,
    /// Exponent α' of the Laplacian hypothesis
    #[arg(long)]
    pub delta_alpha_prime: Option<f64>,
    /// Constant of the Laplacian hypothesis
    #[arg(long)]
    pub delta_c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum StabilityTarget {
    /// Potential and initial data from the full boundary record
    Thm1,
    /// Potential in the initial-potential problem
    Thm2,
    /// The initial-data Carleman estimate
    Abes,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[arg(value_enum)]
    pub target: StabilityTarget,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub carleman: CarlemanArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    /// Pair generators, comma separated
    #[arg(long, value_enum, value_delimiter = ',')]
    pub kinds: Option<Vec<PairKind>>,
    /// Perturbation amplitudes, comma separated
    #[arg(long, value_delimiter = ',')]
    pub amplitudes: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub support: Option<Support>,
}

#[derive(Debug, Clone, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Dirichlet trace file (GRD1); the grid is read from its header
    #[arg(long)]
    pub dirichlet: Option<PathBuf>,
    /// Neumann trace file (GRD1)
    #[arg(long)]
    pub neumann: Option<PathBuf>,
    /// Generate noiseless data from the built-in reference potential
    #[arg(long)]
    pub synthetic: bool,
    /// Initial potential (GRD1 spatial field) [default: zero]
    #[arg(long)]
    pub q_init: Option<PathBuf>,
    /// Tikhonov weight α of the `½α‖q‖²` term [default: 1e-8]
    #[arg(long)]
    pub alpha_reg: Option<f64>,
    /// Iteration budget [default: 500]
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    pub step_rule: Option<StepRule>,
    /// Fixed step, or the first trial step of the line search [default: 1]
    #[arg(long)]
    pub step0: Option<f64>,
    /// Stop once the misfit falls below this fraction of its initial value [default: 1e-12]
    #[arg(long)]
    pub tol_rel: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub carleman: CarlemanArgs,
    #[command(flatten)]
    pub ensemble: EnsembleArgs,
    #[command(flatten)]
    pub delta: DeltaArgs,
    /// Largest accepted ratio of constants across λ
    #[arg(long)]
    pub spread_limit: Option<f64>,
}

/// Contents of a `--config` file. Every key is optional and has the same
/// meaning as the flag of the same name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// If present, must name the subcommand being run.
    pub command: Option<String>,
    pub out: Option<PathBuf>,
    pub dim: Option<usize>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    pub t_final: Option<f64>,
    pub eta: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    pub mode: Option<ParamMode>,
    pub lambda: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub seeds: Option<usize>,
    pub seed_base: Option<u64>,
    pub coeffs: Option<CoeffChoice>,
    pub kappa: Option<f64>,
    pub delta_alpha: Option<f64>,
    pub delta_alpha_prime: Option<f64>,
    pub delta_c: Option<f64>,
    pub levels: Option<usize>,
    pub manufactured: Option<Manufactured>,
    pub ibvp: Option<PathBuf>,
    pub kinds: Option<Vec<PairKind>>,
    pub amplitudes: Option<Vec<f64>>,
    pub support: Option<Support>,
    pub spread_limit: Option<f64>,
    pub dirichlet: Option<PathBuf>,
    pub neumann: Option<PathBuf>,
    pub synthetic: Option<bool>,
    pub q_init: Option<PathBuf>,
    pub alpha_reg: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_rule: Option<StepRule>,
    pub step0: Option<f64>,
    pub tol_rel: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LabError::InvalidConfig(format!("config {}: {e}", path.display())))
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(passed) => {
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Numerical breakdown counts as a failed check; everything else is an
/// input problem.
pub fn exit_code(e: &LabError) -> i32 {
    match e {
        LabError::Diverged(_) | LabError::NonFinite(_) => 1,
        _ => 2,
    }
}

/// Runs a parsed command; `Ok(true)` when every check passed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &file.command {
        if c != cli.command.name() {
            return Err(LabError::InvalidConfig(format!(
                "config is for command '{c}' but '{}' was requested",
                cli.command.name()
            )));
        }
    }
    let out = cli
        .out
        .clone()
        .or_else(|| file.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out)?;
    let ctx = Ctx { out, file };
    match &cli.command {
        Command::Forward(a) => ctx.forward(a),
        Command::Verify(a) => ctx.verify(a),
        Command::Stability(a) => ctx.stability(a),
        Command::Recover(a) => ctx.recover(a),
        Command::SweepLambda(a) => ctx.sweep(a),
    }
}

/// Grid defaults of a command for a given dimension: `(nx, T, nt)`.
type GridDefaults = fn(usize) -> (usize, f64, Option<usize>);

struct Ctx {
    out: PathBuf,
    file: RunConfig,
}

#[derive(Debug, Serialize)]
struct GridSummary {
    dim: usize,
    nx: usize,
    nt: usize,
    t_final: f64,
    h: f64,
    tau: f64,
}

impl From<&GridSpec> for GridSummary {
    fn from(g: &GridSpec) -> Self {
        GridSummary { dim: g.dim, nx: g.nx[0], nt: g.nt, t_final: g.t_final, h: g.h[0], tau: g.tau }
    }
}

#[derive(Debug, Serialize)]
struct Summary<T: Serialize> {
    command: String,
    grid: Option<GridSummary>,
    passed: bool,
    #[serde(flatten)]
    body: T,
}

fn positive_count(name: &str, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(LabError::InvalidConfig(format!("{name} must be at least 1")));
    }
    Ok(n)
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn emit<T: Serialize>(&self, name: &str, command: &str, grid: Option<&GridSpec>, passed: bool, body: T) -> Result<()> {
        let s = Summary { command: command.to_owned(), grid: grid.map(GridSummary::from), passed, body };
        let p = self.path(name);
        write_json(&p, &s)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn table<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        write_csv(&p, rows)?;
        println!("wrote {} ({} rows)", p.display(), rows.len());
        Ok(())
    }

    fn grid(&self, a: &GridArgs, defaults: GridDefaults) -> Result<GridSpec> {
        let dim = a.dim.or(self.file.dim).unwrap_or(1);
        if dim != 1 && dim != 2 {
            return Err(LabError::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        let (nx0, t0, nt0) = defaults(dim);
        let nx = a.nx.or(self.file.nx).unwrap_or(nx0);
        let t = a.t_final.or(self.file.t_final).unwrap_or(t0);
        if nx < 3 {
            return Err(LabError::InvalidGrid(format!("nx must be at least 3, got {nx}")));
        }
        if !(t > 0.0) {
            return Err(LabError::InvalidGrid(format!("t-final must be positive, got {t}")));
        }
        let nt = a
            .nt
            .or(self.file.nt)
            .or(nt0)
            .unwrap_or_else(|| min_admissible_nt(dim, 1.0 / (nx - 1) as f64, t));
        if dim == 1 {
            GridSpec::unit_interval(nx, t, nt)
        } else {
            GridSpec::unit_square(nx, t, nt)
        }
    }

    fn seeds(&self, a: &EnsembleArgs, default: usize) -> Result<Vec<u64>> {
        let n = positive_count("seeds", a.seeds.or(self.file.seeds).unwrap_or(default))?;
        let base = a.seed_base.or(self.file.seed_base).unwrap_or(0);
        Ok((0..n as u64).map(|i| base + i).collect())
    }

    /// Carleman configurations, one per λ.
    fn carleman(&self, a: &CarlemanArgs, g: &GridSpec, mode: ParamMode, beta: Option<f64>) -> Result<Vec<CarlemanConfig>> {
        let eta = a.eta.clone().or_else(|| self.file.eta.clone()).unwrap_or_else(|| vec![-1.0; g.dim]);
        let x0 = a.x0.clone().or_else(|| self.file.x0.clone()).unwrap_or_else(|| vec![-1.0; g.dim]);
        let mode = a.mode.or(self.file.mode).unwrap_or(mode);
        let lambdas = a.lambda.clone().or_else(|| self.file.lambda.clone());
        if let Some(l) = &lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0)) {
                return Err(LabError::InvalidConfig(format!("lambda values must be positive, got {l:?}")));
            }
        }
        match mode {
            ParamMode::Theoretical => {
                let c = select_params(g, &eta, &x0, None)?;
                Ok(match lambdas {
                    Some(l) => l.iter().map(|&v| c.with_lambda(v)).collect(),
                    None => vec![c],
                })
            }
            ParamMode::Sweep => {
                let beta = a.beta.or(self.file.beta).or(beta);
                match lambdas {
                    Some(l) => l.iter().map(|&l| sweep_params(g, &eta, &x0, g.t_final, l, beta)).collect(),
                    // λ* = λ₀ = 1/β + 1
                    None => {
                        let c = sweep_params(g, &eta, &x0, g.t_final, 1.0, beta)?;
                        Ok(vec![c.with_lambda(c.lambda0)])
                    }
                }
            }
        }
    }

    fn delta(&self, a: &DeltaArgs) -> Result<DeltaCondition> {
        DeltaCondition::new(
            a.delta_alpha.or(self.file.delta_alpha).unwrap_or(0.25),
            a.delta_alpha_prime.or(self.file.delta_alpha_prime).unwrap_or(1.0),
            a.delta_c.or(self.file.delta_c).unwrap_or(1e6),
        )
    }

    fn forward(&self, a: &ForwardArgs) -> Result<bool> {
        let manufactured = a.manufactured.or(self.file.manufactured);
        let ibvp = a.ibvp.clone().or_else(|| self.file.ibvp.clone());
        match (manufactured, ibvp) {
            (Some(Manufactured::CosSin), None) => {
                let g = self.grid(&a.grid, |dim| if dim == 1 { (41, 2.0, Some(161)) } else { (11, 2.0, Some(81)) })?;
                let levels = a.levels.or(self.file.levels).unwrap_or(3);
                if levels < 2 {
                    return Err(LabError::InvalidConfig("levels must be at least 2".into()));
                }
                let rows = convergence_study(&g, levels)?;
                let ratios: Vec<f64> = rows.iter().flat_map(|r| [r.l2_ratio, r.trace_ratio]).flatten().collect();
                let passed = ratios.iter().all(|r| (3.5..=4.5).contains(r));
                self.table("forward_convergence.csv", &rows)?;
                #[derive(Serialize)]
                struct Body {
                    manufactured: &'static str,
                    levels: usize,
                    accepted_ratio: [f64; 2],
                    min_ratio: f64,
                    max_ratio: f64,
                }
                let body = Body {
                    manufactured: "cos-sin",
                    levels,
                    accepted_ratio: [3.5, 4.5],
                    min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
                    max_ratio: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                };
                self.emit("forward_summary.json", "forward", Some(&g), passed, body)?;
                Ok(passed)
            }
            (None, Some(path)) => {
                let spec = IbvpFile::load(&path)?;
                let u = solve_ibvp(&spec)?;
                let p = self.path("forward_u.grd");
                write_spacetime(&p, &u)?;
                println!("wrote {}", p.display());
                for p in extract_traces(&u).write_grd1(&self.path("forward_traces"))? {
                    println!("wrote {}", p.display());
                }
                let n = crate::grid::norms(&u, None);
                self.emit("forward_summary.json", "forward", Some(&spec.grid), true, BTreeMap::from([("norms", n)]))?;
                Ok(true)
            }
            (Some(_), Some(_)) => Err(LabError::InvalidConfig("--manufactured and --ibvp are mutually exclusive".into())),
            (None, None) => Err(LabError::InvalidConfig("forward needs --manufactured cos-sin or --ibvp FILE".into())),
        }
    }

    fn verify(&self, a: &VerifyArgs) -> Result<bool> {
        if a.estimate == EstimateKind::Pointwise {
            return self.verify_pointwise(a);
        }
        let g = self.grid(&a.grid, integral_grid)?;
        let configs = self.carleman(&a.carleman, &g, ParamMode::Sweep, Some(0.1))?;
        let seeds = self.seeds(&a.ensemble, 10)?;
        let cond = self.delta(&a.delta)?;
        let fields = test_fields(&g, &seeds);
        let mut rows = Vec::new();
        for c in &configs {
            let reports: Vec<Vec<(usize, EstimateReport)>> = fields
                .par_iter()
                .enumerate()
                .map(|(i, f)| integral_reports(a.estimate, f, c, &cond).into_iter().map(|r| (i, r)).collect())
                .collect();
            for (i, r) in reports.into_iter().flatten() {
                rows.push(IntegralRow::new(&fields[i], &r));
            }
        }
        let passed = rows.iter().all(|r| r.verdict != Verdict::Fail);
        self.table(&format!("verify_{}.csv", a.estimate.as_str()), &rows)?;
        self.emit(
            &format!("verify_{}_summary.json", a.estimate.as_str()),
            "verify",
            Some(&g),
            passed,
            VerdictCounts::of(a.estimate.as_str(), rows.iter().map(|r| r.verdict)),
        )?;
        Ok(passed)
    }

    fn verify_pointwise(&self, a: &VerifyArgs) -> Result<bool> {
        let g = self.grid(&a.grid, |dim| if dim == 1 { (61, 0.5, Some(61)) } else { (41, 0.4, Some(61)) })?;
        let configs = self.carleman(&a.carleman, &g, ParamMode::Theoretical, None)?;
        let seeds = self.seeds(&a.ensemble, 100)?;
        let kappa = a.kappa.or(self.file.kappa).unwrap_or(50.0);
        if !(kappa > 0.0) {
            return Err(LabError::InvalidConfig(format!("kappa must be positive, got {kappa}")));
        }
        let choice = a.coeffs.or(self.file.coeffs).unwrap_or(CoeffChoice::Alternate);
        let mink = CoefficientField::minkowski(&g);
        let aniso = CoefficientField::anisotropic(&g, 0.3);
        let jobs: Vec<(u64, &'static str, &CoefficientField)> = seeds
            .iter()
            .flat_map(|&s| {
                let both = [("minkowski", &mink), ("anisotropic", &aniso)];
                let pick: Vec<(&'static str, &CoefficientField)> = match choice {
                    CoeffChoice::Minkowski => vec![both[0]],
                    CoeffChoice::Anisotropic => vec![both[1]],
                    CoeffChoice::Alternate => vec![both[(s % 2) as usize]],
                    CoeffChoice::Both => both.to_vec(),
                };
                pick.into_iter().map(move |(n, c)| (s, n, c))
            })
            .collect();
        let mut rows = Vec::new();
        for c in &configs {
            let (l, lt) = wave_weights(c, &g);
            let batch: Vec<PointwiseRow> = jobs
                .par_iter()
                .map(|&(seed, name, coeffs)| {
                    let u = pointwise_field(g.dim, seed).sample(&g);
                    let r = verify_pointwise(&u, coeffs, &l, &lt, c.lambda, kappa);
                    PointwiseRow::new(seed, name, &r)
                })
                .collect();
            rows.extend(batch);
        }
        let passed = rows.iter().all(|r| r.verdict != Verdict::Fail);
        self.table("verify_pointwise.csv", &rows)?;
        self.emit(
            "verify_pointwise_summary.json",
            "verify",
            Some(&g),
            passed,
            VerdictCounts::of("pointwise", rows.iter().map(|r| r.verdict)),
        )?;
        Ok(passed)
    }

    fn sweep(&self, a: &SweepArgs) -> Result<bool> {
        let g = self.grid(&a.grid, integral_grid)?;
        let base = self.carleman(&a.carleman, &g, ParamMode::Sweep, Some(0.1))?;
        // a single λ* expands to λ*, 2λ*, 4λ*
        let configs: Vec<CarlemanConfig> = if base.len() == 1 {
            [1.0, 2.0, 4.0].iter().map(|f| base[0].with_lambda(f * base[0].lambda)).collect()
        } else {
            base
        };
        let seeds = self.seeds(&a.ensemble, 10)?;
        let cond = self.delta(&a.delta)?;
        let limit = a.spread_limit.or(self.file.spread_limit).unwrap_or(10.0);
        let fields = test_fields(&g, &seeds);
        let kinds = [EstimateKind::Wave, EstimateKind::Elliptic, EstimateKind::Energy, EstimateKind::Combined];
        let rows: Vec<IntegralRow> = fields
            .par_iter()
            .map(|f| {
                let mut out = Vec::new();
                for c in &configs {
                    for k in kinds {
                        out.extend(integral_reports(k, f, c, &cond).iter().map(|r| IntegralRow::new(f, r)));
                    }
                }
                out
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect();
        let spreads = constant_spreads(&rows);
        let worst = spreads.values().copied().fold(1.0, f64::max);
        let passed = rows.iter().all(|r| r.verdict != Verdict::Fail) && worst < limit;
        self.table("sweep_lambda.csv", &rows)?;
        #[derive(Serialize)]
        struct Body {
            lambdas: Vec<f64>,
            spread_limit: f64,
            max_spread: f64,
            spreads: BTreeMap<String, f64>,
            verdicts: VerdictCounts,
        }
        let body = Body {
            lambdas: configs.iter().map(|c| c.lambda).collect(),
            spread_limit: limit,
            max_spread: worst,
            spreads,
            verdicts: VerdictCounts::of("sweep", rows.iter().map(|r| r.verdict)),
        };
        self.emit("sweep_lambda_summary.json", "sweep-lambda", Some(&g), passed, body)?;
        Ok(passed)
    }

    fn stability(&self, a: &StabilityArgs) -> Result<bool> {
        let dim = a.grid.dim.or(self.file.dim).unwrap_or(1);
        let any_grid_flag = a.grid.nx.or(self.file.nx).is_some()
            || a.grid.nt.or(self.file.nt).is_some()
            || a.grid.t_final.or(self.file.t_final).is_some();
        let g = if any_grid_flag {
            self.grid(&a.grid, |dim| {
                let d = desk_grid(dim).expect("dimension checked");
                (d.nx[0], d.t_final, Some(d.nt))
            })?
        } else {
            desk_grid(dim)?
        };
        let amplitudes = a.amplitudes.clone().or_else(|| self.file.amplitudes.clone()).unwrap_or_else(|| vec![5e-3, 1e-2]);
        if amplitudes.is_empty() || amplitudes.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(LabError::InvalidConfig(format!("amplitudes must be finite and non-negative, got {amplitudes:?}")));
        }
        let kinds = a
            .kinds
            .clone()
            .or_else(|| self.file.kinds.clone())
            .unwrap_or_else(|| vec![PairKind::Constants, PairKind::Exponential]);
        match a.target {
            StabilityTarget::Thm1 | StabilityTarget::Thm2 => {
                let reports = if a.target == StabilityTarget::Thm1 {
                    let seeds = self.seeds(&a.ensemble, 10)?;
                    run_thm1_ensemble(&kinds, &amplitudes, &seeds, &g)?
                } else {
                    let seeds = self.seeds(&a.ensemble, 20)?;
                    let support = a.support.or(self.file.support).unwrap_or(Support::Compact);
                    run_thm2_ensemble(&amplitudes, &seeds, support, &g)?
                };
                let rows: Vec<StabilityRow> = reports.iter().map(StabilityRow::from).collect();
                let summary = summarize(&reports);
                let factor = amplitude_factor(&reports);
                let finite = reports.iter().all(|r| match r.ratio {
                    Some(x) => x.is_finite(),
                    None => r.lhs == 0.0,
                });
                let passed = finite && summary.anomalies == 0 && factor.map_or(true, |f| f <= 3.0);
                let name = if a.target == StabilityTarget::Thm1 { "thm1" } else { "thm2" };
                self.table(&format!("stability_{name}.csv"), &rows)?;
                #[derive(Serialize)]
                struct Body {
                    target: &'static str,
                    amplitudes: Vec<f64>,
                    summary: crate::experiments::EnsembleSummary,
                    /// Largest ratio spread of one pair across amplitudes.
                    amplitude_factor: Option<f64>,
                    amplitude_factor_limit: f64,
                }
                let body = Body { target: name, amplitudes, summary, amplitude_factor: factor, amplitude_factor_limit: 3.0 };
                self.emit(&format!("stability_{name}_summary.json"), "stability", Some(&g), passed, body)?;
                Ok(passed)
            }
            StabilityTarget::Abes => {
                let seeds = self.seeds(&a.ensemble, 10)?;
                let configs = self.carleman(&a.carleman, &g, ParamMode::Sweep, None)?;
                let mut jobs = Vec::new();
                for c in &configs {
                    for &k in &kinds {
                        for &amp in &amplitudes {
                            for &s in &seeds {
                                jobs.push((c, k, amp, s));
                            }
                        }
                    }
                }
                let rows: Vec<AbesRow> = jobs
                    .par_iter()
                    .map(|&(c, kind, amplitude, seed)| -> Result<AbesRow> {
                        let pair = generate_pair(kind, amplitude, seed, &g)?;
                        let r = lemma_abes_check(&pair, c)?;
                        Ok(AbesRow {
                            kind,
                            seed,
                            amplitude,
                            lambda: r.lambda,
                            lhs: r.lhs,
                            rhs: r.rhs,
                            empirical_constant: r.empirical_constant,
                            verdict: r.verdict,
                        })
                    })
                    .collect::<Result<_>>()?;
                let passed = rows.iter().all(|r| r.verdict != Verdict::Fail);
                self.table("stability_abes.csv", &rows)?;
                self.emit(
                    "stability_abes_summary.json",
                    "stability",
                    Some(&g),
                    passed,
                    VerdictCounts::of("initial_data", rows.iter().map(|r| r.verdict)),
                )?;
                Ok(passed)
            }
        }
    }

    fn recover(&self, a: &RecoverArgs) -> Result<bool> {
        let synthetic = a.synthetic || self.file.synthetic.unwrap_or(false);
        let dirichlet = a.dirichlet.clone().or_else(|| self.file.dirichlet.clone());
        let neumann = a.neumann.clone().or_else(|| self.file.neumann.clone());
        let (g, data, truth) = match (synthetic, dirichlet, neumann) {
            (true, None, None) => {
                let g = self.grid(&a.grid, |dim| if dim == 1 { (201, 0.9, Some(201)) } else { (41, 0.9, None) })?;
                let q_star = reference_potential(&g);
                let data = synthesize(&q_star, &zero_dirichlet(&g), &g)?;
                for p in data.write_grd1(&self.path("recover_data"))? {
                    println!("wrote {}", p.display());
                }
                write_scalar(&self.path("recover_q_star.grd"), &q_star)?;
                (g, data, Some(q_star))
            }
            (false, Some(d), Some(n)) => {
                let g = Grd1::read(&d)?.header.grid()?;
                (g, TraceData::read_grd1(&g, &d, Some(&n))?, None)
            }
            (true, _, _) => return Err(LabError::InvalidConfig("--synthetic cannot be combined with data files".into())),
            _ => {
                return Err(LabError::InvalidConfig(
                    "recover needs --dirichlet and --neumann trace files, or --synthetic".into(),
                ))
            }
        };
        let defaults = RecoveryConfig::new(&g);
        let q_init = match a.q_init.clone().or_else(|| self.file.q_init.clone()) {
            Some(p) => read_scalar(&p, &g)?,
            None => defaults.q_init.clone(),
        };
        let config = RecoveryConfig {
            alpha_reg: a.alpha_reg.or(self.file.alpha_reg).unwrap_or(defaults.alpha_reg),
            max_iters: a.max_iters.or(self.file.max_iters).unwrap_or(defaults.max_iters),
            step_rule: a.step_rule.or(self.file.step_rule).unwrap_or(defaults.step_rule),
            step0: a.step0.or(self.file.step0).unwrap_or(defaults.step0),
            tol_rel: a.tol_rel.or(self.file.tol_rel).unwrap_or(defaults.tol_rel),
            q_init,
        };
        let r = reconstruct(&data, &config)?;
        write_scalar(&self.path("recover_q_hat.grd"), &r.q_hat)?;
        println!("wrote {}", self.path("recover_q_hat.grd").display());
        self.table("recover_convergence.csv", &r.history)?;
        let monotone = r.history.windows(2).all(|w| w[1].misfit <= w[0].misfit);
        #[derive(Serialize)]
        struct Body {
            alpha_reg: f64,
            step_rule: StepRule,
            iterations: usize,
            converged: bool,
            monotone: bool,
            initial_misfit: f64,
            final_misfit: f64,
            relative_error: Option<f64>,
        }
        let body = Body {
            alpha_reg: config.alpha_reg,
            step_rule: config.step_rule,
            iterations: r.history.len() - 1,
            converged: r.converged,
            monotone,
            initial_misfit: r.history[0].misfit,
            final_misfit: r.history.last().map_or(f64::NAN, |h| h.misfit),
            relative_error: truth.as_ref().map(|q| relative_error(&r.q_hat, q)),
        };
        let passed = config.step_rule == StepRule::Fixed || monotone;
        self.emit("recover_summary.json", "recover", Some(&g), passed, body)?;
        Ok(passed)
    }
}

fn integral_grid(dim: usize) -> (usize, f64, Option<usize>) {
    if dim == 1 {
        (81, 1.0, Some(101))
    } else {
        (41, 1.0, None)
    }
}

/// Test field of the pointwise ensemble for one seed.
pub fn pointwise_field(dim: usize, seed: u64) -> TrigPoly {
    TrigPoly::random(dim, 3, 4, seed)
}

/// A named space-time field with an optional potential.
pub struct TestField {
    pub name: String,
    pub seed: Option<u64>,
    pub u: SpaceTimeField,
    pub q: Option<ScalarField>,
}

/// The manufactured solution (with its potential) followed by one seeded
/// trigonometric field per seed.
pub fn test_fields(g: &GridSpec, seeds: &[u64]) -> Vec<TestField> {
    let (spec, exact) = crate::forward::manufactured_cos_sin(g);
    let mut out = vec![TestField { name: "manufactured".into(), seed: None, u: exact, q: Some(spec.q) }];
    out.extend(seeds.iter().map(|&s| TestField {
        name: "trig".into(),
        seed: Some(s),
        u: TrigPoly::random(g.dim, 3, 3, s).sample(g),
        q: None,
    }));
    out
}

/// Reports of one integral estimate; the combined estimate yields two.
pub fn integral_reports(kind: EstimateKind, f: &TestField, c: &CarlemanConfig, cond: &DeltaCondition) -> Vec<EstimateReport> {
    let o = VerifyOptions::default();
    let q = f.q.as_ref();
    match kind {
        EstimateKind::Wave => vec![verify_wave_carleman(&f.u, c, q, &o)],
        EstimateKind::Energy => vec![verify_energy(&f.u, c, q, &o)],
        EstimateKind::Elliptic => vec![verify_elliptic(&f.u.time_slice(0), &c.x0, c.lambda, &o)],
        EstimateKind::Combined => {
            let (a, b) = verify_combined(&f.u, c, q, cond, &o);
            vec![a, b]
        }
        EstimateKind::Pointwise => unreachable!("pointwise reports need coefficient fields"),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegralRow {
    pub estimate: String,
    pub field: String,
    pub seed: Option<u64>,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub empirical_constant: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl IntegralRow {
    fn new(f: &TestField, r: &EstimateReport) -> Self {
        IntegralRow {
            estimate: r.name.as_str().to_owned(),
            field: f.name.clone(),
            seed: f.seed,
            lambda: r.lambda,
            lhs: r.lhs,
            rhs: r.rhs,
            empirical_constant: r.empirical_constant,
            verdict: r.verdict,
            note: r.note.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointwiseRow {
    pub seed: u64,
    pub coeffs: &'static str,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub empirical_constant: f64,
    pub margin: f64,
    pub violation_fraction: Option<f64>,
    pub verdict: Verdict,
}

impl PointwiseRow {
    fn new(seed: u64, coeffs: &'static str, r: &EstimateReport) -> Self {
        PointwiseRow {
            seed,
            coeffs,
            lambda: r.lambda,
            lhs: r.lhs,
            rhs: r.rhs,
            empirical_constant: r.empirical_constant,
            margin: r.margin,
            violation_fraction: r.pointwise_violation_fraction,
            verdict: r.verdict,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub theorem: &'static str,
    pub kind: Option<PairKind>,
    pub seed: u64,
    pub amplitude: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub anomaly: bool,
}

impl From<&StabilityReport> for StabilityRow {
    fn from(r: &StabilityReport) -> Self {
        StabilityRow {
            theorem: r.theorem.as_str(),
            kind: r.kind,
            seed: r.seed,
            amplitude: r.amplitude,
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            anomaly: r.anomaly,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AbesRow {
    pub kind: PairKind,
    pub seed: u64,
    pub amplitude: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub empirical_constant: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictCounts {
    pub estimate: String,
    pub rows: usize,
    pub pass: usize,
    pub pass_vacuous: usize,
    pub fail: usize,
    pub not_applicable: usize,
}

impl VerdictCounts {
    fn of(estimate: &str, verdicts: impl Iterator<Item = Verdict>) -> Self {
        let mut c = VerdictCounts { estimate: estimate.to_owned(), rows: 0, pass: 0, pass_vacuous: 0, fail: 0, not_applicable: 0 };
        for v in verdicts {
            c.rows += 1;
            match v {
                Verdict::Pass => c.pass += 1,
                Verdict::PassVacuous => c.pass_vacuous += 1,
                Verdict::Fail => c.fail += 1,
                Verdict::NotApplicable => c.not_applicable += 1,
            }
        }
        c
    }
}

/// Largest over pairs of `max ratio / min ratio` across amplitudes.
pub fn amplitude_factor(reports: &[StabilityReport]) -> Option<f64> {
    let mut by_pair: BTreeMap<(Option<&'static str>, u64), Vec<f64>> = BTreeMap::new();
    for r in reports {
        if let Some(x) = r.ratio.filter(|x| x.is_finite() && *x > 0.0) {
            by_pair.entry((r.kind.map(|k| k.as_str()), r.seed)).or_default().push(x);
        }
    }
    by_pair
        .values()
        .filter(|v| v.len() > 1)
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min))
        .reduce(f64::max)
}

/// `max C / min C` across λ for every (estimate, field) with finite positive
/// constants, keyed `estimate/field[/seed]`.
pub fn constant_spreads(rows: &[IntegralRow]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if r.empirical_constant.is_finite() && r.empirical_constant > 0.0 {
            let key = match r.seed {
                Some(s) => format!("{}/{}/{s}", r.estimate, r.field),
                None => format!("{}/{}", r.estimate, r.field),
            };
            groups.entry(key).or_default().push(r.empirical_constant);
        }
    }
    groups
        .into_iter()
        .filter(|(_, v)| v.len() > 1)
        .map(|(k, v)| {
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            (k, hi / lo)
        })
        .collect()
}
