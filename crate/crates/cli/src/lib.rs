//! Driver plumbing for the `transeig` binary: flag parsing, run
//! configuration, and the CSV / mesh files written next to a run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use transeig::adapt::{self, AdaptConfig, AdaptTrace, IterationState, RefinementMode, Target};
use transeig::coefficients::{Builtin, ProblemCoefficients};
use transeig::mesh::{Domain, Mesh};

pub const HISTORY_HEADER: &str = "iter,dof,k_re,k_im,err_abs,eta2_primal,eta2_dual,eta2_total,marked,seconds";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot write to {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] adapt::PartialRun),
}

impl CliError {
    /// Process exit code: 2 for bad input, 1 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output { .. } | CliError::Solver(_) => 1,
        }
    }
}

/// Complex number written as `a`, `a+bi`, `a-bi` or `a,b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexArg(pub Complex64);

impl FromStr for ComplexArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("cannot parse `{s}` as a complex number");
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some((re, im)) = t.split_once(',') {
            return Ok(ComplexArg(Complex64::new(
                re.parse().map_err(|_| bad())?,
                im.parse().map_err(|_| bad())?,
            )));
        }
        let Some(body) = t.strip_suffix(['i', 'j']) else {
            return t.parse().map(|re| ComplexArg(Complex64::new(re, 0.0))).map_err(|_| bad());
        };
        // split at the last sign that is not part of an exponent
        let bytes = body.as_bytes();
        let split = (1..bytes.len())
            .rev()
            .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
        let (re, im) = match split {
            Some(i) => (&body[..i], &body[i..]),
            None => ("0", body),
        };
        let im = match im {
            "" | "+" => "1",
            "-" => "-1",
            other => other,
        };
        Ok(ComplexArg(Complex64::new(
            re.parse().map_err(|_| bad())?,
            im.parse().map_err(|_| bad())?,
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Slit,
    Lshape,
    UnitSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IndexArg {
    N16,
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Adaptive,
    Uniform,
}

#[derive(Debug, Parser)]
#[command(
    name = "transeig",
    allow_negative_numbers = true,
    about = "Adaptive C0 interior penalty solver for transmission eigenvalues"
)]
pub struct Args {
    #[arg(long, value_enum)]
    pub domain: DomainArg,
    /// Index of refraction.
    #[arg(long, value_enum, default_value = "n16")]
    pub n: IndexArg,
    #[arg(long, default_value_t = 2)]
    pub degree: usize,
    /// Bulk parameter (default 0.25 for degree 2, 0.5 for degree 3).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Follow the eigenvalue closest to this k on the initial mesh.
    #[arg(long, conflicts_with = "index")]
    pub target_k: Option<ComplexArg>,
    /// Follow the j-th eigenvalue (ordered by Re k, then Im k descending).
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, default_value_t = 30_000)]
    pub max_dof: usize,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Initial mesh size (default sqrt(2)/32 on the slit domain, sqrt(2)/16 on the L-shape, sqrt(2)/8 on the unit square).
    #[arg(long)]
    pub h0: Option<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub reference_k: Option<ComplexArg>,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub mode: ModeArg,
    /// Write mesh and indicator snapshots every N iterations (0 disables them).
    #[arg(long, default_value_t = 1)]
    pub dump_mesh_every: usize,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub index: Builtin,
    pub sigma: f64,
    pub mu: f64,
    pub h0: f64,
    pub adapt: AdaptConfig,
    pub out: PathBuf,
    pub reference: Option<Complex64>,
    pub dump_mesh_every: usize,
}

impl RunConfig {
    pub fn from_args(args: Args) -> Result<Self, CliError> {
        let domain = match args.domain {
            DomainArg::Slit => Domain::Slit,
            DomainArg::Lshape => Domain::LShape,
            DomainArg::UnitSquare => Domain::UnitSquare,
        };
        let index = match args.n {
            IndexArg::N16 => Builtin::N16,
            IndexArg::Affine => Builtin::Affine,
        };
        let (sigma0, mu0) = index.default_parameters();
        let target = match (args.target_k, args.index) {
            (Some(k), _) => Target::Near(k.0),
            (None, j) => Target::Index(j.unwrap_or(1)),
        };
        let mut adapt = AdaptConfig::new(args.degree, target);
        if let Some(theta) = args.theta {
            adapt.theta = theta;
        }
        adapt.max_dof = args.max_dof;
        if let Some(n) = args.max_iters {
            adapt.max_iters = n;
        }
        if let Some(tol) = args.tol {
            adapt.solver.tol = tol;
        }
        adapt.mode = match args.mode {
            ModeArg::Adaptive => RefinementMode::Adaptive,
            ModeArg::Uniform => RefinementMode::Uniform,
        };
        let config = RunConfig {
            domain,
            index,
            sigma: args.sigma.unwrap_or(sigma0),
            mu: args.mu.unwrap_or(mu0),
            h0: args.h0.unwrap_or_else(|| domain.default_h0()),
            adapt,
            out: args.out,
            reference: args.reference_k.map(|k| k.0),
            dump_mesh_every: args.dump_mesh_every,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.adapt.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.sigma > 0.0) {
            return Err(CliError::Config(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.mu > 0.0) {
            return Err(CliError::Config(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.h0 > 0.0) {
            return Err(CliError::Config(format!("h0 = {} must be positive", self.h0)));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> ProblemCoefficients {
        ProblemCoefficients::builtin_with(self.index, self.sigma, self.mu)
    }
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn sig(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_history(trace: &AdaptTrace, reference: Option<Complex64>, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in &trace.records {
        let err = reference.map(|k| sig((r.k - k).norm())).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            r.dof,
            sig(r.k.re),
            sig(r.k.im),
            err,
            sig(r.eta2_primal),
            sig(r.eta2_dual),
            sig(r.eta2_total),
            r.marked,
            sig(r.seconds)
        )?;
    }
    Ok(())
}

/// Writes the convergence history as CSV.
pub fn emit_history(trace: &AdaptTrace, reference: Option<Complex64>, path: &Path) -> Result<(), CliError> {
    let file = File::create(path).map_err(output_error(path))?;
    let mut w = BufWriter::new(file);
    write_history(trace, reference, &mut w)
        .and_then(|_| w.flush())
        .map_err(output_error(path))
}

fn write_indicators(values: &[f64], path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "triangle_id,eta_sq")?;
    for (t, v) in values.iter().enumerate() {
        writeln!(w, "{t},{}", sig(*v))?;
    }
    w.flush()
}

fn dump_snapshot(dir: &Path, state: &IterationState) -> std::io::Result<()> {
    let iter = state.record.iter;
    let mesh_path = dir.join(format!("mesh_{iter:03}.txt"));
    let mut w = BufWriter::new(File::create(&mesh_path)?);
    state.space.mesh().write_text(&mut w)?;
    w.flush()?;
    write_indicators(
        &state.primal.combined(state.dual),
        &dir.join(format!("indicators_{iter:03}.csv")),
    )
}

/// Runs the configured loop, writing `history.csv` (also on solver failure)
/// and the requested snapshots into the output directory.
pub fn execute(config: &RunConfig) -> Result<AdaptTrace, CliError> {
    std::fs::create_dir_all(&config.out).map_err(output_error(&config.out))?;
    let history = config.out.join("history.csv");
    // fail early on unwritable output
    emit_history(
        &AdaptTrace {
            records: Vec::new(),
            stop: None,
        },
        config.reference,
        &history,
    )?;
    let coeffs = config.coefficients();
    let mesh = Mesh::make_uniform(config.domain, config.h0).map_err(|e| CliError::Config(e.to_string()))?;
    let every = config.dump_mesh_every;
    let mut io_error = None;
    let result = adapt::run_on_mesh(mesh, &coeffs, &config.adapt, |state| {
        let r = state.record;
        eprintln!(
            "iter {:3}  dof {:7}  k = {:.10} {:+.10}i  eta2 = {:.3e}  marked {}",
            r.iter, r.dof, r.k.re, r.k.im, r.eta2_total, r.marked
        );
        let last = state.marked.is_empty();
        if every > 0 && (r.iter % every == 0 || last) && io_error.is_none() {
            if let Err(e) = dump_snapshot(&config.out, state) {
                io_error = Some(e);
            }
        }
    });
    let trace = match &result {
        Ok(trace) => trace,
        Err(partial) => &partial.trace,
    };
    emit_history(trace, config.reference, &history)?;
    if let Some(e) = io_error {
        return Err(output_error(&config.out)(e));
    }
    Ok(result?)
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    let outcome = RunConfig::from_args(args).and_then(|config| execute(&config));
    match outcome {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.exit_code() == 2 {
                eprintln!("{}", <Args as clap::CommandFactory>::command().render_usage());
            }
            e.exit_code()
        }
    }
}
