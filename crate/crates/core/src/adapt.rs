//! The solve, estimate, mark, refine loop with bulk (Dörfler) marking on
//! the sum of primal and dual indicators.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;

use crate::assembly::assemble_pencil;
use crate::coefficients::ProblemCoefficients;
use crate::eigen::{normalize_and_sort, EigenPair, ShiftInvert, SolverSettings, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::estimator::{compute_indicators, EstimatorOptions, IndicatorField, ResidualData};
use crate::mesh::{Domain, Mesh};
use crate::space::FeSpace;

/// Smallest set of triangles, largest values first (ties by lower id),
/// whose values sum to at least `theta` times the total. Returns the ids in
/// ascending order; an all-zero input gives an empty set.
pub fn mark(values: &[f64], theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Config(format!("bulk parameter {theta} is not in (0, 1)")));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Config(format!(
            "indicator value {v} is not a finite nonnegative number"
        )));
    }
    let total: f64 = values.iter().sum();
    if total == 0.0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut acc = 0.0;
    let mut chosen = Vec::new();
    for i in order {
        chosen.push(i);
        acc += values[i];
        if acc >= goal {
            break;
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Which eigenvalue the loop follows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// The `j`-th eigenvalue (1-based) in the `k` ordering on the initial
    /// mesh.
    Index(usize),
    /// The eigenvalue closest to `k^2` on the initial mesh.
    Near(Complex64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementMode {
    /// Bisect the marked triangles (with closure).
    Adaptive,
    /// Halve every edge; the indicators are still computed and reported.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub theta: f64,
    pub degree: usize,
    pub target: Target,
    /// Stop once the number of free DOFs of `S^h` exceeds this bound.
    pub max_dof: usize,
    /// Stop after this many refinements; `0` solves on the initial mesh only.
    pub max_iters: usize,
    pub solver: SolverSettings,
    pub mode: RefinementMode,
    pub estimator: EstimatorOptions,
}

impl AdaptConfig {
    /// Defaults for degree `m`: `theta = 0.25` for `m = 2`, `0.5` otherwise.
    pub fn new(degree: usize, target: Target) -> Self {
        AdaptConfig {
            theta: if degree == 2 { 0.25 } else { 0.5 },
            degree,
            target,
            max_dof: 30_000,
            max_iters: usize::MAX,
            solver: SolverSettings {
                tol: DEFAULT_TOL,
                ..Default::default()
            },
            mode: RefinementMode::Adaptive,
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta = {} is not in (0, 1)", self.theta)));
        }
        if !(2..=3).contains(&self.degree) {
            return Err(Error::Degree(self.degree));
        }
        if let Target::Index(0) = self.target {
            return Err(Error::Config("eigenvalue indices start at 1".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub dof: usize,
    pub triangles: usize,
    pub lambda: Complex64,
    pub k: Complex64,
    pub eta2_primal: f64,
    pub eta2_dual: f64,
    pub eta2_total: f64,
    /// Triangles marked for the next refinement (0 on the last iteration).
    pub marked: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxDof,
    MaxIters,
    /// All indicators vanished.
    Converged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptTrace {
    pub records: Vec<IterationRecord>,
    pub stop: Option<StopReason>,
}

/// A run that stopped on an error, with the iterations completed before it.
#[derive(Debug)]
pub struct PartialRun {
    pub error: Error,
    pub trace: AdaptTrace,
}

impl std::fmt::Display for PartialRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for PartialRun {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Everything computed in one iteration, handed to the observer.
#[derive(Debug)]
pub struct IterationState<'a> {
    pub record: &'a IterationRecord,
    pub space: &'a Arc<FeSpace>,
    pub pair: &'a EigenPair,
    pub primal: &'a IndicatorField,
    pub dual: &'a IndicatorField,
    /// Triangles refined next (empty on the last iteration).
    pub marked: &'a [usize],
}

/// Runs the loop from the structured initial mesh of `domain`.
pub fn run(
    domain: Domain,
    h0: f64,
    coeffs: &ProblemCoefficients,
    config: &AdaptConfig,
) -> std::result::Result<AdaptTrace, PartialRun> {
    let mesh = Mesh::make_uniform(domain, h0).map_err(|error| PartialRun {
        error,
        trace: AdaptTrace {
            records: Vec::new(),
            stop: None,
        },
    })?;
    run_on_mesh(mesh, coeffs, config, |_| {})
}

fn select(pairs: Vec<EigenPair>, target: Target, first: bool, shift: Complex64) -> EigenPair {
    match target {
        Target::Index(j) if first => pairs.into_iter().nth(j - 1).expect("enough eigenpairs"),
        _ => pairs
            .into_iter()
            .min_by(|a, b| (a.lambda - shift).norm().total_cmp(&(b.lambda - shift).norm()))
            .expect("at least one eigenpair"),
    }
}

/// Runs the loop from `mesh`, calling `observer` after every iteration.
pub fn run_on_mesh(
    mesh: Mesh,
    coeffs: &ProblemCoefficients,
    config: &AdaptConfig,
    mut observer: impl FnMut(&IterationState),
) -> std::result::Result<AdaptTrace, PartialRun> {
    let mut trace = AdaptTrace {
        records: Vec::new(),
        stop: None,
    };
    macro_rules! attempt {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(PartialRun { error, trace }),
            }
        };
    }
    attempt!(config.validate());
    let mut mesh = Arc::new(mesh);
    let (mut shift, mut count) = match config.target {
        Target::Index(j) => (Complex64::new(0.0, 0.0), j + 2),
        Target::Near(k) => (k * k, 1),
    };
    for iter in 0.. {
        let start = Instant::now();
        let space = Arc::new(attempt!(FeSpace::new(Arc::clone(&mesh), config.degree)));
        if iter == 0 {
            attempt!(coeffs.validate(&space));
        }
        let pencil = attempt!(assemble_pencil(&space, coeffs));
        let total = pencil.layout.total();
        let solver = attempt!(ShiftInvert::with_retries(&pencil, shift));
        let raw = attempt!(solver.two_sided(count.min(total), &config.solver));
        let pairs = attempt!(normalize_and_sort(raw, &pencil, &space));
        if let Target::Index(j) = config.target {
            if iter == 0 && pairs.len() < j {
                attempt!(Err(Error::Config(format!("mesh too coarse for eigenvalue index {j}"))));
            }
        }
        let pair = select(pairs, config.target, iter == 0, shift);
        let primal = compute_indicators(&space, coeffs, &ResidualData::primal(&pair), config.estimator);
        let dual = compute_indicators(&space, coeffs, &ResidualData::dual(&pair), config.estimator);
        let combined = primal.combined(&dual);
        let dof = space.num_free();

        let stop = if dof > config.max_dof {
            Some(StopReason::MaxDof)
        } else if iter >= config.max_iters {
            Some(StopReason::MaxIters)
        } else {
            None
        };
        let marked = match stop {
            Some(_) => Vec::new(),
            None => attempt!(mark(&combined, config.theta)),
        };
        let stop = match stop {
            None if marked.is_empty() => Some(StopReason::Converged),
            s => s,
        };
        let record = IterationRecord {
            iter,
            dof,
            triangles: mesh.num_triangles(),
            lambda: pair.lambda,
            k: pair.k,
            eta2_primal: primal.total,
            eta2_dual: dual.total,
            eta2_total: primal.total + dual.total,
            marked: marked.len(),
            seconds: start.elapsed().as_secs_f64(),
        };
        observer(&IterationState {
            record: &record,
            space: &space,
            pair: &pair,
            primal: &primal,
            dual: &dual,
            marked: &marked,
        });
        trace.records.push(record);
        if stop.is_some() {
            trace.stop = stop;
            break;
        }
        mesh = Arc::new(match config.mode {
            RefinementMode::Adaptive => mesh.refine(&marked),
            RefinementMode::Uniform => mesh.refine_uniform(),
        });
        shift = pair.lambda;
        count = 1;
    }
    Ok(trace)
}
