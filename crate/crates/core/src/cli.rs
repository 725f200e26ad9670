//! Command-line front end: `sample`, `density`, `fit` and `simulate`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circular::{
    pgl_logpdf, pgl_logpdf_exact, pn_logpdf, sample_pgl, sample_pn, sample_vm, vm_logpdf, AngleSample, PGLParams,
    VMParams,
};
use crate::error::GlError;
use crate::estimate::{fit_gl, fit_pgl, fit_pn, fit_vm, FitOptions, FitResult, Method};
use crate::gl::{gl_moments, logpdf_al, logpdf_laplace, sample_gl, GLParams, GlDensity, ObservationMatrix};
use crate::quadrature::{gamma_rule, DEFAULT_ORDER};
use crate::simharness::{
    builtin_scenarios, emit_report, run_scenarios, summarize, HarnessMethod, RunOptions, DEFAULT_BASE_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "glfit", version, about = "Generalized Laplace and projected generalized Laplace toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a seeded sample and write it as CSV.
    Sample(SampleArgs),
    /// Evaluate the density on a grid or at points read from CSV.
    Density(DensityArgs),
    /// Fit a model to CSV data and write the result as JSON.
    Fit(FitArgs),
    /// Run the built-in simulation study and write summary.csv and replications.csv.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Dist {
    Laplace,
    Al,
    Gl,
    Mgl,
    Pgl,
    Pn,
    Vm,
}

impl Dist {
    fn circular(self) -> bool {
        matches!(self, Self::Pgl | Self::Pn | Self::Vm)
    }
}

/// Distribution parameters. Vectors and matrices are comma-separated, matrices row-major.
#[derive(Debug, Clone, Args)]
struct ParamArgs {
    /// Distribution family.
    #[arg(long, value_enum)]
    dist: Dist,
    /// Location θ (scalar, d-vector, or 2-vector for pgl/pn).
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    /// Scale σ for laplace/al/gl; row-major Σ for mgl/pgl/pn.
    #[arg(long)]
    sigma: Option<String>,
    /// Skewness μ (scalar or d-vector).
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Shape α.
    #[arg(long)]
    alpha: Option<f64>,
    /// pgl/pn scale φ with Σ = [[φ², ρφ], [ρφ, 1]] (alternative to --sigma).
    #[arg(long)]
    phi: Option<f64>,
    /// pgl/pn correlation ρ (with --phi).
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    /// von Mises concentration κ.
    #[arg(long)]
    kappa: Option<f64>,
    /// von Mises location (radians).
    #[arg(long, allow_hyphen_values = true)]
    location: Option<f64>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Number of draws.
    #[arg(short = 'n', long = "n")]
    n: usize,
    /// Random seed.
    #[arg(long, env = "GLFIT_SEED", default_value_t = 0)]
    seed: u64,
    /// Output CSV (stdout when absent).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Number of grid points.
    #[arg(long, default_value_t = 361)]
    grid: usize,
    /// Lower end of the grid for line distributions (default mean − 8 sd).
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    /// Upper end of the grid for line distributions (default mean + 8 sd).
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    /// Evaluate at the points of this CSV file instead of a grid.
    #[arg(short = 'i', long)]
    input: Option<PathBuf>,
    /// Input angles are in degrees.
    #[arg(long)]
    degrees: bool,
    /// Quadrature order for the pgl density.
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    nodes: usize,
    /// Use adaptive integration instead of quadrature for the pgl density.
    #[arg(long)]
    exact: bool,
    /// Output CSV (stdout when absent).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Model to fit: gl (univariate), mgl, pgl, pn or vm.
    #[arg(long, value_enum)]
    dist: Dist,
    /// gq-nm, gq-bfgs, gq-qn (optionally with -hN) or direct-ml.
    #[arg(long, default_value = "gq-qn")]
    method: String,
    /// Quadrature order for gq methods without an -hN suffix.
    #[arg(long)]
    nodes: Option<usize>,
    /// Iteration cap.
    #[arg(long, default_value_t = crate::estimate::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Input angles are in degrees.
    #[arg(long)]
    degrees: bool,
    /// Data CSV.
    #[arg(short = 'i', long)]
    input: PathBuf,
    /// Output JSON (stdout when absent).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Study part: 1 (GL laws) or 2 (PGL laws).
    #[arg(long)]
    part: u8,
    /// Replications per scenario.
    #[arg(long, default_value_t = crate::simharness::DEFAULT_REPLICATIONS)]
    reps: usize,
    /// Base seed for per-replication seeds.
    #[arg(long, env = "GLFIT_SEED", default_value_t = DEFAULT_BASE_SEED)]
    base_seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Only scenarios whose id contains one of these strings (repeatable).
    #[arg(long)]
    scenario: Vec<String>,
    /// Replace the default methods (repeatable), e.g. gq_qn_h20, direct_ml, pgl_gq_nm_h20, pn, vm.
    #[arg(long)]
    method: Vec<String>,
    /// Iteration cap for every fit.
    #[arg(long, default_value_t = crate::estimate::DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Leave time_s empty so reports are byte-reproducible.
    #[arg(long)]
    no_timings: bool,
    /// Directory for summary.csv and replications.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
struct CliError {
    code: i32,
    msg: String,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, msg: msg.into() }
}

impl From<GlError> for CliError {
    fn from(e: GlError) -> Self {
        let code = match e {
            GlError::Numeric(_) | GlError::Singularity(_) => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        CliError { code, msg: e.to_string() }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Sample(a) => run_sample(&a),
        Command::Density(a) => run_density(&a),
        Command::Fit(a) => run_fit(&a),
        Command::Simulate(a) => run_simulate(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("glfit: {}", e.msg);
            e.code
        }
    }
}

fn parse_list(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("--{flag}: '{t}' is not a number"))))
        .collect()
}

fn required<T: Clone>(flag: &str, v: &Option<T>, dist: Dist) -> CliResult<T> {
    v.clone().ok_or_else(|| usage(format!("--{flag} is required for --dist {}", dist_name(dist))))
}

fn dist_name(d: Dist) -> &'static str {
    match d {
        Dist::Laplace => "laplace",
        Dist::Al => "al",
        Dist::Gl => "gl",
        Dist::Mgl => "mgl",
        Dist::Pgl => "pgl",
        Dist::Pn => "pn",
        Dist::Vm => "vm",
    }
}

fn scalar(flag: &str, v: &Option<String>, dist: Dist) -> CliResult<f64> {
    let vals = parse_list(flag, &required(flag, v, dist)?)?;
    match vals.as_slice() {
        [x] => Ok(*x),
        _ => Err(usage(format!("--{flag} takes one value for --dist {}", dist_name(dist)))),
    }
}

fn reject(flags: &[(&str, bool)], dist: Dist) -> CliResult<()> {
    for (flag, present) in flags {
        if *present {
            return Err(usage(format!("--{flag} does not apply to --dist {}", dist_name(dist))));
        }
    }
    Ok(())
}

/// Fully specified distribution.
enum Model {
    Laplace { theta: f64, sigma: f64 },
    Al { theta: f64, sigma: f64, mu: f64 },
    Gl(GLParams),
    Pgl(PGLParams),
    Pn { theta: [f64; 2], sigma: Matrix2<f64> },
    Vm(VMParams),
}

fn pair(flag: &str, v: &Option<String>, dist: Dist) -> CliResult<[f64; 2]> {
    let vals = parse_list(flag, &required(flag, v, dist)?)?;
    match vals.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(usage(format!("--{flag} takes two values for --dist {}", dist_name(dist)))),
    }
}

fn circular_sigma(p: &ParamArgs) -> CliResult<Matrix2<f64>> {
    match (&p.sigma, p.phi, p.rho) {
        (Some(s), None, None) => {
            let v = parse_list("sigma", s)?;
            if v.len() != 4 {
                return Err(usage("--sigma takes four row-major entries for a 2x2 matrix"));
            }
            Ok(Matrix2::new(v[0], v[1], v[2], v[3]))
        }
        (None, Some(phi), rho) => {
            let rho = rho.unwrap_or(0.0);
            Ok(Matrix2::new(phi * phi, rho * phi, rho * phi, 1.0))
        }
        (None, None, None) => Ok(Matrix2::identity()),
        _ => Err(usage("give either --sigma or --phi/--rho, not both")),
    }
}

fn build_model(p: &ParamArgs) -> CliResult<Model> {
    let d = p.dist;
    let line_only = [("phi", p.phi.is_some()), ("rho", p.rho.is_some()), ("kappa", p.kappa.is_some()), ("location", p.location.is_some())];
    Ok(match d {
        Dist::Laplace => {
            reject(&line_only, d)?;
            reject(&[("mu", p.mu.is_some()), ("alpha", p.alpha.is_some())], d)?;
            let (theta, sigma) = (scalar("theta", &p.theta, d)?, scalar("sigma", &p.sigma, d)?);
            logpdf_laplace(theta, theta, sigma)?;
            Model::Laplace { theta, sigma }
        }
        Dist::Al => {
            reject(&line_only, d)?;
            reject(&[("alpha", p.alpha.is_some())], d)?;
            let (theta, sigma, mu) = (scalar("theta", &p.theta, d)?, scalar("sigma", &p.sigma, d)?, scalar("mu", &p.mu, d)?);
            logpdf_al(theta, theta, sigma, mu)?;
            Model::Al { theta, sigma, mu }
        }
        Dist::Gl => {
            reject(&line_only, d)?;
            Model::Gl(GLParams::univariate(
                scalar("theta", &p.theta, d)?,
                scalar("sigma", &p.sigma, d)?,
                scalar("mu", &p.mu, d)?,
                required("alpha", &p.alpha, d)?,
            )?)
        }
        Dist::Mgl => {
            reject(&line_only, d)?;
            let theta = parse_list("theta", &required("theta", &p.theta, d)?)?;
            let dim = theta.len();
            let sigma = parse_list("sigma", &required("sigma", &p.sigma, d)?)?;
            if sigma.len() != dim * dim {
                return Err(usage(format!("--sigma needs {} entries for dimension {dim}", dim * dim)));
            }
            let mu = parse_list("mu", &required("mu", &p.mu, d)?)?;
            if mu.len() != dim {
                return Err(usage(format!("--mu needs {dim} entries")));
            }
            Model::Gl(GLParams::new(
                DVector::from_vec(theta),
                DMatrix::from_row_slice(dim, dim, &sigma),
                DVector::from_vec(mu),
                required("alpha", &p.alpha, d)?,
            )?)
        }
        Dist::Pgl => {
            reject(&[("mu", p.mu.is_some()), ("kappa", p.kappa.is_some()), ("location", p.location.is_some())], d)?;
            let theta = pair("theta", &p.theta, d)?;
            Model::Pgl(PGLParams::from_sigma(theta, &circular_sigma(p)?, required("alpha", &p.alpha, d)?)?)
        }
        Dist::Pn => {
            reject(
                &[("mu", p.mu.is_some()), ("alpha", p.alpha.is_some()), ("kappa", p.kappa.is_some()), ("location", p.location.is_some())],
                d,
            )?;
            let theta = pair("theta", &p.theta, d)?;
            let sigma = circular_sigma(p)?;
            crate::circular::PnKernel::new(theta, &sigma)?;
            Model::Pn { theta, sigma }
        }
        Dist::Vm => {
            reject(
                &[
                    ("theta", p.theta.is_some()),
                    ("sigma", p.sigma.is_some()),
                    ("mu", p.mu.is_some()),
                    ("alpha", p.alpha.is_some()),
                    ("phi", p.phi.is_some()),
                    ("rho", p.rho.is_some()),
                ],
                d,
            )?;
            Model::Vm(VMParams::new(required("location", &p.location, d)?, required("kappa", &p.kappa, d)?)?)
        }
    })
}

fn open_output(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open_input(path: &Path) -> CliResult<Box<dyn BufRead>> {
    let f = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn run_sample(a: &SampleArgs) -> CliResult<i32> {
    if a.n == 0 {
        return Err(usage("-n must be at least 1"));
    }
    let model = build_model(&a.params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = open_output(&a.output)?;
    match model {
        Model::Laplace { theta, sigma } => {
            sample_gl(&GLParams::univariate(theta, sigma, 0.0, 1.0)?, a.n, &mut rng)?.write_csv(&mut out)?
        }
        Model::Al { theta, sigma, mu } => {
            sample_gl(&GLParams::univariate(theta, sigma, mu, 1.0)?, a.n, &mut rng)?.write_csv(&mut out)?
        }
        Model::Gl(p) => sample_gl(&p, a.n, &mut rng)?.write_csv(&mut out)?,
        Model::Pgl(p) => sample_pgl(&p, a.n, &mut rng)?.write_csv(&mut out)?,
        Model::Pn { theta, sigma } => sample_pn(theta, &sigma, a.n, &mut rng)?.write_csv(&mut out)?,
        Model::Vm(p) => sample_vm(&p, a.n, &mut rng)?.write_csv(&mut out)?,
    }
    out.flush()?;
    Ok(EXIT_OK)
}

fn read_angles(path: &Path, degrees: bool) -> CliResult<AngleSample> {
    let raw = ObservationMatrix::read_csv(open_input(path)?)?;
    if raw.dim() != 1 {
        return Err(usage(format!("{}: angle files have one column, found {}", path.display(), raw.dim())));
    }
    let scale = if degrees { std::f64::consts::PI / 180.0 } else { 1.0 };
    Ok(AngleSample::from_radians(raw.column(0).map(|w| w * scale))?)
}

fn run_density(a: &DensityArgs) -> CliResult<i32> {
    let model = build_model(&a.params)?;
    let circular = a.params.dist.circular();
    if a.exact && a.params.dist != Dist::Pgl {
        return Err(usage("--exact applies to --dist pgl only"));
    }
    if circular && (a.from.is_some() || a.to.is_some()) {
        return Err(usage("--from/--to apply to line distributions; circular grids cover (-pi, pi]"));
    }
    if a.degrees && !circular {
        return Err(usage("--degrees applies to circular distributions"));
    }
    let points: Vec<Vec<f64>> = match &a.input {
        Some(path) => {
            if circular {
                read_angles(path, a.degrees)?.as_slice().iter().map(|&w| vec![w]).collect()
            } else {
                ObservationMatrix::read_csv(open_input(path)?)?.rows().map(<[f64]>::to_vec).collect()
            }
        }
        None => {
            if a.grid < 2 {
                return Err(usage("--grid must be at least 2"));
            }
            let (lo, hi) = if circular {
                (-std::f64::consts::PI, std::f64::consts::PI)
            } else {
                let (mean, sd) = match &model {
                    Model::Laplace { theta, sigma } => (*theta, *sigma),
                    Model::Al { theta, sigma, mu } => (theta + mu, (sigma * sigma + mu * mu).sqrt()),
                    Model::Gl(p) if p.dim() == 1 => {
                        let (m, c) = gl_moments(p);
                        (m[0], c[(0, 0)].sqrt())
                    }
                    _ => return Err(usage("--dist mgl needs -i with evaluation points")),
                };
                (a.from.unwrap_or(mean - 8.0 * sd), a.to.unwrap_or(mean + 8.0 * sd))
            };
            if !(lo < hi) {
                return Err(usage("--from must be below --to"));
            }
            let step = (hi - lo) / (a.grid - 1) as f64;
            (0..a.grid).map(|k| vec![lo + step * k as f64]).collect()
        }
    };

    let rule = match &model {
        Model::Pgl(p) if !a.exact => Some(gamma_rule(p.alpha(), a.nodes)?),
        _ => None,
    };
    let gl_density = match &model {
        Model::Gl(p) => Some(GlDensity::new(p)?),
        _ => None,
    };
    let mut out = open_output(&a.output)?;
    let dim = points.first().map_or(1, Vec::len);
    let label = if circular { "omega".to_string() } else if dim == 1 { "y".into() } else { (1..=dim).map(|j| format!("y{j}")).collect::<Vec<_>>().join(",") };
    writeln!(out, "{label},logpdf,pdf")?;
    for y in &points {
        let value = match &model {
            Model::Laplace { theta, sigma } => logpdf_laplace(y[0], *theta, *sigma),
            Model::Al { theta, sigma, mu } => logpdf_al(y[0], *theta, *sigma, *mu),
            Model::Gl(_) => gl_density.as_ref().expect("built above").logpdf(y),
            Model::Pgl(p) => match &rule {
                Some(r) => pgl_logpdf(y[0], p, r),
                None => pgl_logpdf_exact(y[0], p),
            },
            Model::Pn { theta, sigma } => pn_logpdf(y[0], *theta, sigma),
            Model::Vm(p) => vm_logpdf(y[0], p),
        };
        let lp = match value {
            Ok(v) => v,
            Err(GlError::Singularity(_)) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        let coords: Vec<String> = y.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{},{:.16e},{:.16e}", coords.join(","), lp, lp.exp())?;
    }
    out.flush()?;
    Ok(EXIT_OK)
}

fn run_fit(a: &FitArgs) -> CliResult<i32> {
    let opts = FitOptions { max_iter: a.max_iter, init: None };
    let fit: FitResult = match a.dist {
        Dist::Gl | Dist::Mgl => {
            let method = Method::parse(&a.method, a.nodes)?;
            let data = ObservationMatrix::read_csv(open_input(&a.input)?)?;
            if a.dist == Dist::Gl && data.dim() != 1 {
                return Err(usage(format!("--dist gl expects one column, found {}; use --dist mgl", data.dim())));
            }
            if a.degrees {
                return Err(usage("--degrees applies to circular data"));
            }
            fit_gl(&data, method, &opts)?
        }
        Dist::Pgl => fit_pgl(&read_angles(&a.input, a.degrees)?, Method::parse(&a.method, a.nodes)?, &opts)?,
        Dist::Pn => fit_pn(&read_angles(&a.input, a.degrees)?, &opts)?,
        Dist::Vm => fit_vm(&read_angles(&a.input, a.degrees)?)?,
        Dist::Laplace | Dist::Al => {
            return Err(usage("fit supports --dist gl, mgl, pgl, pn and vm"));
        }
    };
    let mut out = open_output(&a.output)?;
    fit.write_json(&mut out)?;
    out.flush()?;
    Ok(if fit.converged { EXIT_OK } else { EXIT_NUMERIC })
}

fn run_simulate(a: &SimulateArgs) -> CliResult<i32> {
    if a.reps == 0 || a.jobs == 0 || a.max_iter == 0 {
        return Err(usage("--reps, --jobs and --max-iter must be at least 1"));
    }
    let methods = a.method.iter().map(|m| HarnessMethod::parse(m)).collect::<Result<Vec<_>, _>>()?;
    let mut scenarios = builtin_scenarios(a.part)?;
    if !a.scenario.is_empty() {
        scenarios.retain(|s| a.scenario.iter().any(|f| s.id.contains(f.as_str())));
        if scenarios.is_empty() {
            return Err(usage("no scenario matches --scenario"));
        }
    }
    for s in &mut scenarios {
        s.replications = a.reps;
        s.base_seed = a.base_seed;
        s.max_iter = a.max_iter;
        if !methods.is_empty() {
            s.methods = methods.clone();
        }
    }
    let records = run_scenarios(&scenarios, &RunOptions { jobs: a.jobs, timings: !a.no_timings })?;
    let table = summarize(&records)?;
    emit_report(&table, &records, &a.out_dir)?;
    eprintln!(
        "wrote {} and {}",
        a.out_dir.join("summary.csv").display(),
        a.out_dir.join("replications.csv").display()
    );
    Ok(EXIT_OK)
}
