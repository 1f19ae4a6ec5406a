//! The adaptive loop: SOLVE -> ESTIMATE -> MARK -> REFINE.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{dual_indicators, dwr_indicators, primal_indicators, IndicatorField};
use crate::export::RecordWriter;
use crate::mark::{mark_for_strategy, MarkSet, Strategy};
use crate::mesh::{build_initial_mesh_with_elements, refine, Mesh};
use crate::real::Real;
use crate::space::{prolong, Degree, DiscreteField, FESpace};
use crate::system::{goal_value, newton_solve, solve_dual, NewtonReport, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: Strategy,
    pub theta: f64,
    pub newton_tol: f64,
    /// Upper bound on the maximal number of Newton updates per solve.
    pub newton_max_iters: usize,
    /// Maximum number of SOLVE steps (recorded rows).
    pub max_iterations: usize,
    /// Stop once the current mesh has at least this many elements.
    pub target_elements: Option<usize>,
    /// Stop once the goal error drops below this value (needs a reference).
    pub target_goal_error: Option<f64>,
    pub initial_elements: usize,
    /// Directory for `record.csv`, `timing.csv` and mesh snapshots.
    pub out_dir: Option<PathBuf>,
    /// Write a mesh snapshot every `k` iterations (and at the last one).
    pub snapshot_every: Option<usize>,
    /// Fill the `wall_ms` column of `record.csv`. Off by default so that
    /// identical runs produce identical records.
    pub record_wall_time: bool,
    /// Keep every iterate in the outcome (needed by the verification probes).
    pub keep_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            strategy: Strategy::Hpz,
            theta: 0.6,
            newton_tol: 1e-7,
            newton_max_iters: 100,
            max_iterations: 50,
            target_elements: None,
            target_goal_error: None,
            initial_elements: 144,
            out_dir: None,
            snapshot_every: None,
            record_wall_time: false,
            keep_states: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::InvalidInput(format!("theta = {} outside (0, 1]", self.theta)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "newton tolerance {} must be positive",
                self.newton_tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max iterations must be at least 1".into()));
        }
        if self.newton_max_iters == 0 {
            return Err(Error::InvalidInput("Newton iteration limit must be at least 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::InvalidInput("snapshot interval must be at least 1".into()));
        }
        if let Some(t) = self.target_goal_error {
            if !(t > 0.0) {
                return Err(Error::InvalidInput(format!("target goal error {t} must be positive")));
            }
        }
        Ok(())
    }
}

/// One recorded iteration. Empty optionals become empty CSV fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub iter: usize,
    pub n_elements: usize,
    /// Free (interior) primal unknowns.
    pub n_dofs: usize,
    pub eta_sq: Option<f64>,
    pub zeta_sq: Option<f64>,
    pub dwr_est: Option<f64>,
    pub goal_error: Option<f64>,
    pub newton_iters: usize,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceRecord {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceRecord {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&ConvergenceRow> {
        self.rows.last()
    }
}

/// Everything computed in one iteration of the loop.
#[derive(Debug, Clone)]
pub struct IterationState<T: Real> {
    pub mesh: Arc<Mesh<T>>,
    pub primal: DiscreteField<T>,
    /// P1 approximate dual for HPZ/MS, P2 dual for DWR.
    pub dual: DiscreteField<T>,
    pub newton: NewtonReport,
    pub primal_indicators: IndicatorField<T>,
    pub dual_indicators: Option<IndicatorField<T>>,
    pub dwr_indicators: Option<IndicatorField<T>>,
    pub primal_marks: MarkSet<T>,
    pub dual_marks: Option<MarkSet<T>>,
    /// Refinement set; `None` for the final, unrefined iteration.
    pub marked: Option<MarkSet<T>>,
    pub goal_value: T,
    pub wall_ms: f64,
}

#[derive(Debug)]
pub struct RunOutcome<T: Real> {
    pub record: ConvergenceRecord,
    pub states: Vec<IterationState<T>>,
    /// Set when the loop aborted (e.g. Newton failure); the record holds the
    /// rows completed before the failure.
    pub failure: Option<Error>,
}

impl<T: Real> RunOutcome<T> {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs the adaptive loop from the default initial mesh.
pub fn run<T: Real>(spec: &ProblemSpec<T>, config: &RunConfig, reference_goal: Option<f64>) -> Result<RunOutcome<T>> {
    config.validate()?;
    let mesh = Arc::new(build_initial_mesh_with_elements(config.initial_elements)?);
    run_from(spec, config, reference_goal, mesh)
}

/// Runs the adaptive loop from a given initial mesh. Configuration and I/O
/// errors are returned directly; numerical failures end the loop and are
/// reported in [`RunOutcome::failure`].
pub fn run_from<T: Real>(
    spec: &ProblemSpec<T>,
    config: &RunConfig,
    reference_goal: Option<f64>,
    initial_mesh: Arc<Mesh<T>>,
) -> Result<RunOutcome<T>> {
    config.validate()?;
    let mut writer = match &config.out_dir {
        Some(dir) => Some(RecordWriter::create(dir)?),
        None => None,
    };
    let theta = T::lit(config.theta);
    let tol = T::lit(config.newton_tol);
    let mut outcome = RunOutcome {
        record: ConvergenceRecord::default(),
        states: Vec::new(),
        failure: None,
    };
    let mut mesh = initial_mesh;
    let mut previous: Option<DiscreteField<T>> = None;
    let mut newton_history: Vec<usize> = Vec::new();

    for iter in 0..config.max_iterations {
        let started = Instant::now();
        let space = Arc::new(FESpace::new(&mesh, Degree::Linear));
        let guess = match &previous {
            None => DiscreteField::zeros(&space),
            Some(u) => prolong(u, &space)?,
        };
        let (u, newton) = match newton_solve(spec, &space, &guess, tol, config.newton_max_iters) {
            Ok(r) => r,
            Err(e) => {
                outcome.failure = Some(e);
                break;
            }
        };
        if !newton.converged {
            outcome.failure = Some(Error::NewtonFailure {
                iterations: newton.iterations,
                residual: newton.residuals.last().copied().unwrap_or(f64::NAN),
            });
            break;
        }
        let step = match estimate_and_mark(spec, config.strategy, &u, theta) {
            Ok(s) => s,
            Err(e) => {
                outcome.failure = Some(e);
                break;
            }
        };
        let gv = goal_value(spec, &u);
        let n_elements = mesh.n_elements();
        let last_iteration = iter + 1 == config.max_iterations
            || config.target_elements.is_some_and(|t| n_elements >= t)
            || goal_error(reference_goal, gv)
                .zip(config.target_goal_error)
                .is_some_and(|(e, t)| e <= t)
            || step.combined.is_empty();
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;

        let row = ConvergenceRow {
            iter,
            n_elements,
            n_dofs: space.n_free(),
            eta_sq: Some(step.primal.total().as_f64()),
            zeta_sq: step.dual_ind.as_ref().map(|z| z.total().as_f64()),
            dwr_est: step.dwr.as_ref().map(|d| d.total().as_f64()),
            goal_error: goal_error(reference_goal, gv),
            newton_iters: newton.iterations,
            wall_ms: config.record_wall_time.then_some(wall_ms),
        };
        log::info!(
            "iter {iter}: {n_elements} elements, {} newton steps, eta^2 = {:.3e}, marked {}",
            newton.iterations,
            row.eta_sq.unwrap_or(0.0),
            step.combined.len()
        );
        newton_history.push(newton.iterations);
        if iter >= 3 && newton_history[iter] > newton_history[iter - 1] {
            log::warn!(
                "Newton iterations rose from {} to {} at iteration {iter}",
                newton_history[iter - 1],
                newton_history[iter]
            );
        }
        if let Some(w) = writer.as_mut() {
            w.write_row(&row, wall_ms)?;
            let snapshot = config.snapshot_every.is_some_and(|k| iter % k == 0 || last_iteration);
            if snapshot {
                w.write_snapshot(iter, &mesh, &u, &step.primal)?;
            }
        }
        outcome.record.rows.push(row);

        let next = if last_iteration {
            None
        } else {
            match refine(&mesh, &step.combined.elements) {
                Ok(m) => Some(Arc::new(m)),
                Err(e) => {
                    outcome.failure = Some(e);
                    None
                }
            }
        };
        if config.keep_states {
            outcome.states.push(IterationState {
                mesh: Arc::clone(&mesh),
                primal: u.clone(),
                dual: step.dual,
                newton,
                primal_indicators: step.primal,
                dual_indicators: step.dual_ind,
                dwr_indicators: step.dwr,
                primal_marks: step.primal_marks,
                dual_marks: step.dual_marks,
                marked: (!last_iteration).then_some(step.combined),
                goal_value: gv,
                wall_ms,
            });
        }
        match next {
            Some(m) => {
                mesh = m;
                previous = Some(u);
            }
            None => break,
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok(outcome)
}

fn goal_error<T: Real>(reference: Option<f64>, value: T) -> Option<f64> {
    reference.map(|r| (r - value.as_f64()).abs())
}

struct Step<T: Real> {
    dual: DiscreteField<T>,
    primal: IndicatorField<T>,
    dual_ind: Option<IndicatorField<T>>,
    dwr: Option<IndicatorField<T>>,
    primal_marks: MarkSet<T>,
    dual_marks: Option<MarkSet<T>>,
    combined: MarkSet<T>,
}

fn estimate_and_mark<T: Real>(
    spec: &ProblemSpec<T>,
    strategy: Strategy,
    u: &DiscreteField<T>,
    theta: T,
) -> Result<Step<T>> {
    let mesh = u.mesh();
    let primal = primal_indicators(spec, u)?;
    match strategy {
        Strategy::Hpz | Strategy::Ms => {
            let z = solve_dual(spec, u, u.space())?;
            let zeta = dual_indicators(spec, u, &z)?;
            let (primal_marks, dual_marks, combined) = mark_for_strategy(strategy, &primal, Some(&zeta), theta)?;
            Ok(Step {
                dual: z,
                primal,
                dual_ind: Some(zeta),
                dwr: None,
                primal_marks,
                dual_marks,
                combined,
            })
        }
        Strategy::Dwr => {
            let p2 = Arc::new(FESpace::new(mesh, Degree::Quadratic));
            let z2 = solve_dual(spec, u, &p2)?;
            let dwr = dwr_indicators(spec, u, &z2)?;
            let (primal_marks, _, combined) = mark_for_strategy(strategy, &dwr, None, theta)?;
            Ok(Step {
                dual: z2,
                primal,
                dual_ind: None,
                dwr: Some(dwr),
                primal_marks,
                dual_marks: None,
                combined,
            })
        }
    }
}
