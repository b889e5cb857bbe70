//! First-order IMEX time stepping.
//!
//! One step:
//! 1. explicit chemotaxis and reaction for the two densities,
//! 2. backward-Euler diffusion for the densities,
//! 3. signal update: elliptic solves for `tau = 0`, backward Euler for
//!    `tau = 1`, fed by the new densities (`v` by `w`, `z` by `u`).
//!
//! Each density is transported by the signal of the previous step.

use std::fmt;

use crate::diagnostics::{
    detect_blowup, record, BlowupKind, BlowupReport, DiagnosticsRecord, EnergyParams,
};
use crate::elliptic::{HelmholtzSolver, SolverBackend};
use crate::error::{Error, Result};
use crate::grid::{chemotactic_divergence_with, max_face_gradients, FaceAveraging, Field, GridSpec};
use crate::model::{damping_rate, source_field_clamped, ModelParams, State, Tau};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DtMode {
    #[default]
    Fixed,
    /// Recompute the step from the current gradients, capped by `dt`.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControls {
    /// Fixed step, or the ceiling in adaptive mode.
    pub dt: f64,
    pub dt_mode: DtMode,
    pub cfl_safety: f64,
    pub pos_tol: f64,
    pub clamp_negatives: bool,
    pub face_averaging: FaceAveraging,
    pub solver: SolverBackend,
    pub solver_tol: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            dt_mode: DtMode::Fixed,
            cfl_safety: 0.4,
            pos_tol: 1e-10,
            clamp_negatives: false,
            face_averaging: FaceAveraging::Arithmetic,
            solver: SolverBackend::ConjugateGradient,
            solver_tol: 1e-10,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.pos_tol >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pos_tol must be nonnegative, got {}",
                self.pos_tol
            )));
        }
        if !(self.solver_tol > 0.0 && self.solver_tol < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "solver_tol must lie in (0, 1), got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }
}

/// Why a step could not be completed.
#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    /// A density fell below `-pos_tol` and clamping is off.
    Positivity {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
        t: f64,
    },
    /// A NaN or infinity appeared: a blow-up candidate.
    NonFinite {
        field: &'static str,
        i: usize,
        j: usize,
        value: f64,
        t: f64,
    },
    Solver(Error),
    InvalidInput(Error),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::Positivity { field, i, j, value, t } => write!(
                f,
                "positivity failure: {field} = {value:e} at cell ({i}, {j}), t = {t}"
            ),
            StepError::NonFinite { field, i, j, value, t } => {
                write!(f, "non-finite {field} = {value} at cell ({i}, {j}), t = {t}")
            }
            StepError::Solver(e) => write!(f, "solver failure: {e}"),
            StepError::InvalidInput(e) => write!(f, "invalid input: {e}"),
        }
    }
}

impl std::error::Error for StepError {}

/// A time stepper bound to one grid, parameter set and control set.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    params: ModelParams,
    controls: StepControls,
    solver: HelmholtzSolver,
}

impl Stepper {
    pub fn new(grid: GridSpec, params: ModelParams, controls: StepControls) -> Result<Self> {
        controls.validate()?;
        Ok(Self {
            grid,
            params,
            controls,
            solver: HelmholtzSolver::new(grid, controls.solver, controls.solver_tol),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn controls(&self) -> &StepControls {
        &self.controls
    }

    /// Solves `(-lap + I) phi = rhs`.
    pub fn screened_poisson(&self, rhs: &Field, guess: Option<&Field>) -> Result<Field> {
        self.solver.solve(self.grid, 1.0, 1.0, rhs, guess)
    }

    /// Builds the initial state. For `tau = 0` the signals are always the
    /// elliptic solves of the densities; for `tau = 1` missing signals
    /// default to them.
    pub fn initial_state(
        &self,
        u0: Field,
        w0: Field,
        v0: Option<Field>,
        z0: Option<Field>,
    ) -> Result<State> {
        u0.same_grid(&w0)?;
        if *u0.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let (v, z) = match self.params.tau {
            Tau::ParabolicElliptic => (None, None),
            Tau::FullyParabolic => (v0, z0),
        };
        let v = match v {
            Some(v) => v,
            None => self.screened_poisson(&w0, None)?,
        };
        let z = match z {
            Some(z) => z,
            None => self.screened_poisson(&u0, None)?,
        };
        State::new(u0, v, w0, z, 0.0)
    }

    /// Step size for the next step.
    ///
    /// Diffusion is implicit, so only the explicit part constrains the step:
    /// with upwind faces, a cell keeps a nonnegative share of its content if
    /// `dt (2 |v_x|/hx + 2 |v_y|/hy + mu u / ln^p(u+e)) <= 1`. The step is
    /// `cfl_safety` times that bound over both densities, capped by `dt`.
    pub fn next_dt(&self, state: &State) -> f64 {
        let c = &self.controls;
        if c.dt_mode == DtMode::Fixed {
            return c.dt;
        }
        let (hx, hy) = (self.grid.hx(), self.grid.hy());
        let (vx, vy) = max_face_gradients(&state.v);
        let (zx, zy) = max_face_gradients(&state.z);
        let damping = state
            .u
            .values()
            .iter()
            .fold(0.0_f64, |acc, &u| acc.max(damping_rate(u, &self.params)));
        let rate_u = 2.0 * (vx / hx + vy / hy) + damping;
        let rate_w = 2.0 * (zx / hx + zy / hy);
        let rate = rate_u.max(rate_w);
        if rate > 0.0 {
            (c.cfl_safety / rate).min(c.dt)
        } else {
            c.dt
        }
    }

    /// Advances `state` by [`Stepper::next_dt`]. Returns the new state and
    /// the step used.
    pub fn step(&self, state: &State) -> std::result::Result<(State, f64), StepError> {
        let dt = self.next_dt(state);
        self.step_with_dt(state, dt).map(|s| (s, dt))
    }

    pub fn step_with_dt(&self, state: &State, dt: f64) -> std::result::Result<State, StepError> {
        let c = &self.controls;
        let t = state.t;
        if *state.grid() != self.grid {
            return Err(StepError::InvalidInput(Error::GridMismatch));
        }
        for (name, f) in state.fields() {
            if let Some((i, j, value)) = f.first_non_finite() {
                return Err(StepError::NonFinite { field: name, i, j, value, t });
            }
        }
        check_positive("u", &state.u, c.pos_tol, t)?;
        check_positive("w", &state.w, c.pos_tol, t)?;

        let solver_err = StepError::Solver;

        // Explicit chemotaxis and reaction.
        let drift_u = chemotactic_divergence_with(&state.u, &state.v, c.face_averaging)
            .map_err(StepError::InvalidInput)?;
        let react_u = source_field_clamped(&state.u, &self.params, c.pos_tol)
            .map_err(StepError::InvalidInput)?;
        let drift_w = chemotactic_divergence_with(&state.w, &state.z, c.face_averaging)
            .map_err(StepError::InvalidInput)?;
        let u_star = explicit_update(&state.u, dt, &drift_u, Some(&react_u));
        let w_star = explicit_update(&state.w, dt, &drift_w, None);
        check_finite("u", &u_star, t + dt)?;
        check_finite("w", &w_star, t + dt)?;

        // Backward-Euler diffusion. Starting CG from the right-hand side
        // keeps the mass exact.
        let mut u_new = self.solver.solve(self.grid, 1.0, dt, &u_star, None).map_err(solver_err)?;
        let mut w_new = self.solver.solve(self.grid, 1.0, dt, &w_star, None).map_err(solver_err)?;
        for (name, f) in [("u", &mut u_new), ("w", &mut w_new)] {
            check_finite(name, f, t + dt)?;
            if c.clamp_negatives {
                for v in f.values_mut() {
                    if *v < -c.pos_tol {
                        *v = 0.0;
                    }
                }
            } else {
                check_positive(name, f, c.pos_tol, t + dt)?;
            }
        }

        let (v_new, z_new) = match self.params.tau {
            Tau::ParabolicElliptic => (
                self.screened_poisson(&w_new, Some(&state.v)).map_err(solver_err)?,
                self.screened_poisson(&u_new, Some(&state.z)).map_err(solver_err)?,
            ),
            Tau::FullyParabolic => {
                let rhs_v = state.v.add_scaled(dt, &w_new).map_err(StepError::InvalidInput)?;
                let rhs_z = state.z.add_scaled(dt, &u_new).map_err(StepError::InvalidInput)?;
                (
                    self.solver
                        .solve(self.grid, 1.0 + dt, dt, &rhs_v, Some(&state.v))
                        .map_err(solver_err)?,
                    self.solver
                        .solve(self.grid, 1.0 + dt, dt, &rhs_z, Some(&state.z))
                        .map_err(solver_err)?,
                )
            }
        };
        check_finite("v", &v_new, t + dt)?;
        check_finite("z", &z_new, t + dt)?;

        State::new(u_new, v_new, w_new, z_new, t + dt).map_err(StepError::InvalidInput)
    }
}

fn explicit_update(f: &Field, dt: f64, drift: &Field, reaction: Option<&Field>) -> Field {
    let mut out = f.clone();
    let d = drift.values();
    match reaction {
        Some(r) => {
            let r = r.values();
            for (k, v) in out.values_mut().iter_mut().enumerate() {
                *v += dt * (-d[k] + r[k]);
            }
        }
        None => {
            for (k, v) in out.values_mut().iter_mut().enumerate() {
                *v -= dt * d[k];
            }
        }
    }
    out
}

fn check_finite(field: &'static str, f: &Field, t: f64) -> std::result::Result<(), StepError> {
    match f.first_non_finite() {
        Some((i, j, value)) => Err(StepError::NonFinite { field, i, j, value, t }),
        None => Ok(()),
    }
}

fn check_positive(
    field: &'static str,
    f: &Field,
    pos_tol: f64,
    t: f64,
) -> std::result::Result<(), StepError> {
    match f.values().iter().position(|&v| v < -pos_tol) {
        Some(k) => {
            let (i, j) = f.grid().cell(k);
            Err(StepError::Positivity { field, i, j, value: f.values()[k], t })
        }
        None => Ok(()),
    }
}

/// One step with freshly built solver state.
pub fn step(
    state: &State,
    params: &ModelParams,
    controls: &StepControls,
) -> std::result::Result<State, StepError> {
    let stepper = Stepper::new(*state.grid(), *params, *controls).map_err(StepError::InvalidInput)?;
    stepper.step(state).map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    Completed,
    BlowUpDetected,
    PositivityFailure,
    SolverFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationReason::Completed => "completed",
            TerminationReason::BlowUpDetected => "blow_up_detected",
            TerminationReason::PositivityFailure => "positivity_failure",
            TerminationReason::SolverFailure => "solver_failure",
        }
    }

    /// Process exit code used by the command line runner.
    pub fn exit_code(self) -> i32 {
        match self {
            TerminationReason::Completed => 0,
            TerminationReason::BlowUpDetected => 10,
            TerminationReason::PositivityFailure => 11,
            TerminationReason::SolverFailure => 12,
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Receives the state and its diagnostics at every observer tick.
/// Observers see the state by shared reference and cannot change it.
pub trait Observer {
    fn observe(&mut self, state: &State, record: &DiagnosticsRecord) -> std::io::Result<()>;

    /// Observers that return true are called after every step instead of on
    /// the cadence.
    fn every_step(&self) -> bool {
        false
    }
}

impl<F> Observer for F
where
    F: FnMut(&State, &DiagnosticsRecord) -> std::io::Result<()>,
{
    fn observe(&mut self, state: &State, record: &DiagnosticsRecord) -> std::io::Result<()> {
        self(state, record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_end: f64,
    /// Observers and the diagnostics table see every `cadence`-th step, plus
    /// the initial and the final state.
    pub cadence: usize,
    pub blowup_threshold: f64,
    pub energy: Option<EnergyParams>,
    /// Keep the diagnostics table in memory.
    pub keep_table: bool,
}

impl RunOptions {
    pub fn new(t_end: f64) -> Self {
        Self {
            t_end,
            cadence: 1,
            blowup_threshold: 1e8,
            energy: None,
            keep_table: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_state: State,
    pub reason: TerminationReason,
    pub steps: usize,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Largest `||u||∞` over every step.
    pub peak_linf_u: f64,
    /// Largest energy over every step.
    pub peak_energy: f64,
    pub blowup: Option<BlowupReport>,
    /// Human-readable cause for non-completed runs.
    pub message: Option<String>,
}

/// Integrates from `initial` to `options.t_end`.
pub fn run(
    initial: State,
    stepper: &Stepper,
    options: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<RunResult, RunError> {
    let params = *stepper.params();
    let controls = *stepper.controls();
    let cadence = options.cadence.max(1);
    let mut state = initial;
    let mut table = Vec::new();
    let mut steps = 0usize;

    let first = record(&state, options.energy.as_ref(), &params, 0.0, controls.pos_tol)?;
    let mut peak_linf_u = first.linf_u;
    let mut peak_energy = first.energy_y;
    emit(&state, &first, options, true, &mut table, observers)?;

    let finish = |state: State,
                  reason: TerminationReason,
                  steps: usize,
                  table: Vec<DiagnosticsRecord>,
                  peaks: (f64, f64),
                  blowup: Option<BlowupReport>,
                  message: Option<String>| RunResult {
        final_state: state,
        reason,
        steps,
        diagnostics: table,
        peak_linf_u: peaks.0,
        peak_energy: peaks.1,
        blowup,
        message,
    };

    if let Some(report) = detect_blowup(&state, options.blowup_threshold) {
        let msg = format!("initial data already exceeds the blow-up threshold: {report:?}");
        return Ok(finish(
            state,
            TerminationReason::BlowUpDetected,
            0,
            table,
            (peak_linf_u, peak_energy),
            Some(report),
            Some(msg),
        ));
    }

    let end_slack = 1e-12 * options.t_end.abs().max(1.0);
    while state.t < options.t_end - end_slack {
        let remaining = options.t_end - state.t;
        let mut dt = stepper.next_dt(&state);
        if dt >= remaining - end_slack {
            dt = remaining;
        }
        if dt <= f64::EPSILON * state.t.max(1.0) {
            let (i, j, value) = state.u.argmax();
            let report = BlowupReport {
                t: state.t,
                kind: BlowupKind::StepCollapse,
                field: "u".into(),
                value,
                i,
                j,
            };
            let msg = format!("adaptive step collapsed to {dt:e} at t = {}", state.t);
            return Ok(finish(
                state,
                TerminationReason::BlowUpDetected,
                steps,
                table,
                (peak_linf_u, peak_energy),
                Some(report),
                Some(msg),
            ));
        }
        let next = match stepper.step_with_dt(&state, dt) {
            Ok(s) => s,
            Err(err) => {
                let msg = err.to_string();
                let (reason, blowup) = match err {
                    StepError::Positivity { .. } => (TerminationReason::PositivityFailure, None),
                    StepError::NonFinite { field, i, j, value, t } => (
                        TerminationReason::BlowUpDetected,
                        Some(BlowupReport {
                            t,
                            kind: BlowupKind::NonFinite,
                            field: field.to_string(),
                            value,
                            i,
                            j,
                        }),
                    ),
                    StepError::Solver(_) => (TerminationReason::SolverFailure, None),
                    StepError::InvalidInput(e) => return Err(RunError::Invalid(e)),
                };
                return Ok(finish(
                    state,
                    reason,
                    steps,
                    table,
                    (peak_linf_u, peak_energy),
                    blowup,
                    Some(msg),
                ));
            }
        };
        state = next;
        steps += 1;

        let rec = record(&state, options.energy.as_ref(), &params, dt, controls.pos_tol)?;
        peak_linf_u = peak_linf_u.max(rec.linf_u);
        peak_energy = peak_energy.max(rec.energy_y);

        if let Some(report) = detect_blowup(&state, options.blowup_threshold) {
            emit(&state, &rec, options, true, &mut table, observers)?;
            let msg = format!(
                "blow-up detected at t = {}: {} = {:e} at cell ({}, {})",
                report.t, report.field, report.value, report.i, report.j
            );
            return Ok(finish(
                state,
                TerminationReason::BlowUpDetected,
                steps,
                table,
                (peak_linf_u, peak_energy),
                Some(report),
                Some(msg),
            ));
        }

        let last = state.t >= options.t_end - end_slack;
        emit(&state, &rec, options, steps % cadence == 0 || last, &mut table, observers)?;
    }

    Ok(finish(
        state,
        TerminationReason::Completed,
        steps,
        table,
        (peak_linf_u, peak_energy),
        None,
        None,
    ))
}

fn emit(
    state: &State,
    rec: &DiagnosticsRecord,
    options: &RunOptions,
    tick: bool,
    table: &mut Vec<DiagnosticsRecord>,
    observers: &mut [&mut dyn Observer],
) -> std::result::Result<(), RunError> {
    if tick && options.keep_table {
        table.push(*rec);
    }
    for obs in observers.iter_mut() {
        if tick || obs.every_step() {
            obs.observe(state, rec)?;
        }
    }
    Ok(())
}

/// Failures that abort a run outright rather than ending it with a
/// termination reason.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("observer failed: {0}")]
    Observer(#[from] std::io::Error),
}
