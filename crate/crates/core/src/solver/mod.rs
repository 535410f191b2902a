//! Time integration of either formulation with a second-order
//! integrating-factor Runge–Kutta scheme, run bookkeeping with diagnostics
//! and checkpoint/restart, plus the Picard iteration mode.
//!
//! With `L` the diagonal diffusion `μΔ` (on `u` for the primitive system,
//! on both `q` and `v` for the effective one), `E = e^{Lh}` and `N` the
//! remaining right-hand side, one step reads
//! `w₁ = E(wⁿ + hN(wⁿ))`, `wⁿ⁺¹ = Ewⁿ + h/2 (E N(wⁿ) + N(w₁))`.

pub mod checkpoint;
pub mod picard;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{self, Accumulators, DiagnosticsRecord, StateSample};
use crate::fields::{inverse_transform, transform, FieldError, Grid, RealField, SpectralField};
use crate::model::{
    self, from_effective, rhs_effective_with, rhs_primitive_with, to_effective, EffectiveState,
    ModelError, PhysParams, PrimitiveState, RhsOptions,
};

pub use checkpoint::Checkpoint;
pub use picard::{
    calibrate_c1, picard_solve, solve_linear_system, CalibrationReport, PicardConfig, PicardOutcome,
    PicardReport,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("vacuum breach at t = {t}: min density {min_rho:e}")]
    VacuumBreach { t: f64, min_rho: f64 },
    #[error("numeric blowup at t = {t}: {what}")]
    NumericBlowup { t: f64, what: String },
    #[error("Picard iteration does not contract on T = {t} (data norms {norm_q0:e}, {norm_v0:e}; last difference {last_diff:e})")]
    NonContraction {
        t: f64,
        norm_q0: f64,
        norm_v0: f64,
        last_diff: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl From<ModelError> for SolverError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Field(f) => SolverError::Field(f),
            other => SolverError::Model(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Primitive,
    Effective,
}

/// Default stability constant in `dt ≤ C h² / max(μ, √κ)`.
pub const DEFAULT_C_STAB: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub formulation: Formulation,
    pub dealias: bool,
    pub vacuum_floor: f64,
    pub diag_stride: usize,
    pub c_stab: f64,
    /// Switches off every term except the diffusion `μΔ`.
    pub explicit_terms: bool,
    /// Keep the states at diagnostic times for level-set and vacuum reports.
    pub keep_samples: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 0.1,
            formulation: Formulation::Primitive,
            dealias: true,
            vacuum_floor: 1e-8,
            diag_stride: 100,
            c_stab: DEFAULT_C_STAB,
            explicit_terms: true,
            keep_samples: false,
        }
    }
}

impl SolverConfig {
    /// `C h² / max(μ, √κ)`.
    pub fn dt_ceiling(&self, grid: &Grid, p: &PhysParams) -> f64 {
        let h = grid.spacing();
        self.c_stab * h * h / p.mu.max(p.kappa.sqrt())
    }

    pub fn validate(&self, grid: &Grid, p: &PhysParams) -> Result<(), SolverError> {
        let err = |m: String| Err(SolverError::Config(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return err(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return err(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !(self.vacuum_floor.is_finite() && self.vacuum_floor > 0.0) {
            return err(format!("vacuum_floor must be > 0, got {}", self.vacuum_floor));
        }
        if self.diag_stride == 0 {
            return err("diag_stride must be >= 1".into());
        }
        if !(self.c_stab.is_finite() && self.c_stab > 0.0) {
            return err(format!("c_stab must be > 0, got {}", self.c_stab));
        }
        let ceiling = self.dt_ceiling(grid, p);
        if self.dt > ceiling {
            return err(format!(
                "dt = {} exceeds the stability ceiling {ceiling:e}",
                self.dt
            ));
        }
        if self.formulation == Formulation::Effective && p.kappa < p.mu * p.mu - model::QUANTUM_TOL {
            return err("effective formulation needs kappa >= mu^2".into());
        }
        p.validate()?;
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last one may be shorter.
    pub fn step_count(&self) -> usize {
        if self.t_end == 0.0 {
            return 0;
        }
        let n = self.t_end / self.dt;
        let r = n.round();
        if (n - r).abs() <= 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }

    /// Time after `step` steps.
    pub fn time_at(&self, step: usize) -> f64 {
        if step >= self.step_count() {
            self.t_end
        } else {
            step as f64 * self.dt
        }
    }

    fn rhs_options(&self) -> RhsOptions {
        RhsOptions {
            dealias: self.dealias,
            vacuum_floor: 0.0,
        }
    }
}

/// State of either formulation.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverState {
    Primitive(PrimitiveState),
    Effective(EffectiveState),
}

impl SolverState {
    pub fn from_primitive(
        s: PrimitiveState,
        formulation: Formulation,
        p: &PhysParams,
    ) -> Result<Self, SolverError> {
        Ok(match formulation {
            Formulation::Primitive => SolverState::Primitive(s),
            Formulation::Effective => SolverState::Effective(to_effective(&s, p)?),
        })
    }

    pub fn formulation(&self) -> Formulation {
        match self {
            SolverState::Primitive(_) => Formulation::Primitive,
            SolverState::Effective(_) => Formulation::Effective,
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            SolverState::Primitive(s) => s.grid(),
            SolverState::Effective(e) => e.grid(),
        }
    }

    pub fn components(&self) -> Vec<RealField> {
        match self {
            SolverState::Primitive(s) => s.components(),
            SolverState::Effective(e) => e.components(),
        }
    }

    pub fn from_components(formulation: Formulation, c: Vec<RealField>) -> Self {
        match formulation {
            Formulation::Primitive => SolverState::Primitive(PrimitiveState::from_components(c)),
            Formulation::Effective => SolverState::Effective(EffectiveState::from_components(c)),
        }
    }

    pub fn density(&self, p: &PhysParams) -> RealField {
        match self {
            SolverState::Primitive(s) => s.rho.clone(),
            SolverState::Effective(e) => e.density(p),
        }
    }

    pub fn to_primitive(&self, p: &PhysParams) -> PrimitiveState {
        match self {
            SolverState::Primitive(s) => s.clone(),
            SolverState::Effective(e) => from_effective(e, p),
        }
    }

    /// Both views of the state.
    pub fn views(&self, p: &PhysParams) -> Result<(PrimitiveState, EffectiveState), ModelError> {
        Ok(match self {
            SolverState::Primitive(s) => (s.clone(), to_effective(s, p)?),
            SolverState::Effective(e) => (from_effective(e, p), e.clone()),
        })
    }
}

/// Diffusion coefficient of each component in the integrating factor.
fn diffusion_coefficients(formulation: Formulation, dim: usize, p: &PhysParams) -> Vec<f64> {
    let first = match formulation {
        Formulation::Primitive => 0.0,
        Formulation::Effective => p.mu,
    };
    std::iter::once(first).chain(std::iter::repeat(p.mu).take(dim)).collect()
}

fn full_rhs(
    state: &SolverState,
    p: &PhysParams,
    cfg: &SolverConfig,
) -> Result<Vec<RealField>, ModelError> {
    let opts = cfg.rhs_options();
    Ok(match state {
        SolverState::Primitive(s) => rhs_primitive_with(s, p, &opts)?.components(),
        SolverState::Effective(e) => rhs_effective_with(e, p, &opts)?.components(),
    })
}

/// Nonlinear part `N(w) = F(w) − Lw`, in Fourier space.
fn nonlinear(
    state: &SolverState,
    spectra: &[SpectralField],
    nus: &[f64],
    p: &PhysParams,
    cfg: &SolverConfig,
) -> Result<Vec<SpectralField>, ModelError> {
    if !cfg.explicit_terms {
        return Ok(spectra.iter().map(|s| SpectralField::zeros(s.grid())).collect());
    }
    let f = full_rhs(state, p, cfg)?;
    Ok(f
        .iter()
        .zip(spectra)
        .zip(nus)
        .map(|((fc, s), &nu)| {
            let ff = transform(fc);
            if nu == 0.0 {
                ff
            } else {
                let g = s.grid().clone();
                let lw = s.apply_real(|idx| -nu * g.k_squared(idx));
                ff.add(&lw.scale(-1.0))
            }
        })
        .collect())
}

fn propagate(s: &SpectralField, nu: f64, h: f64) -> SpectralField {
    if nu == 0.0 {
        s.clone()
    } else {
        s.heat(nu, h)
    }
}

fn check_state(state: &SolverState, p: &PhysParams, floor: f64, t: f64) -> Result<(), SolverError> {
    for c in state.components() {
        if !c.is_finite() {
            return Err(SolverError::NumericBlowup {
                t,
                what: "non-finite state value".into(),
            });
        }
    }
    let m = state.density(p).min();
    if !m.is_finite() {
        return Err(SolverError::NumericBlowup {
            t,
            what: "non-finite density".into(),
        });
    }
    if m <= floor {
        return Err(SolverError::VacuumBreach { t, min_rho: m });
    }
    Ok(())
}

fn map_rhs_error(e: ModelError, t: f64) -> SolverError {
    match e {
        ModelError::Vacuum { min_rho, .. } => SolverError::VacuumBreach { t, min_rho },
        ModelError::NonFinite(what) => SolverError::NumericBlowup { t, what },
        other => other.into(),
    }
}

/// Advances `state` by `h` (the time `t` is only used in error reports).
pub fn step_imex_by(
    state: &SolverState,
    p: &PhysParams,
    cfg: &SolverConfig,
    h: f64,
    t: f64,
) -> Result<SolverState, SolverError> {
    check_state(state, p, cfg.vacuum_floor, t)?;
    let formulation = state.formulation();
    let grid = state.grid().clone();
    let nus = diffusion_coefficients(formulation, grid.dim(), p);
    let w0: Vec<SpectralField> = state.components().iter().map(transform).collect();
    let n0 = nonlinear(state, &w0, &nus, p, cfg).map_err(|e| map_rhs_error(e, t))?;

    let w1: Vec<SpectralField> = w0
        .iter()
        .zip(&n0)
        .zip(&nus)
        .map(|((w, n), &nu)| propagate(&w.add(&n.scale(h)), nu, h))
        .collect();
    let s1 = SolverState::from_components(formulation, w1.iter().map(inverse_transform).collect());
    check_state(&s1, p, cfg.vacuum_floor, t + h)?;
    let n1 = nonlinear(&s1, &w1, &nus, p, cfg).map_err(|e| map_rhs_error(e, t + h))?;

    let next: Vec<RealField> = w0
        .iter()
        .zip(n0.iter().zip(&n1))
        .zip(&nus)
        .map(|((w, (a, b)), &nu)| {
            let ew = propagate(w, nu, h);
            let ea = propagate(a, nu, h);
            inverse_transform(&ew.add(&ea.add(b).scale(0.5 * h)))
        })
        .collect();
    let out = SolverState::from_components(formulation, next);
    check_state(&out, p, cfg.vacuum_floor, t + h)?;
    Ok(out)
}

/// One step of size `cfg.dt`.
pub fn step_imex(
    state: &SolverState,
    p: &PhysParams,
    cfg: &SolverConfig,
) -> Result<SolverState, SolverError> {
    step_imex_by(state, p, cfg, cfg.dt, 0.0)
}

/// What an observer wants after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Read-only view handed to observers after every step.
pub struct StepView<'a> {
    pub step: usize,
    pub t: f64,
    pub state: &'a SolverState,
    pub params: &'a PhysParams,
    pub cfg: &'a SolverConfig,
    pub accumulators: &'a Accumulators,
    pub initial: &'a DiagnosticsRecord,
}

impl StepView<'_> {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }
}

pub trait RunObserver {
    fn on_step(&mut self, _view: &StepView<'_>) -> Control {
        Control::Continue
    }

    fn on_record(&mut self, _record: &DiagnosticsRecord) {}
}

/// Observer that does nothing.
pub struct NoObserver;

impl RunObserver for NoObserver {}

/// Collects checkpoints at the first step reaching each requested time.
pub struct CheckpointAt {
    pending: Vec<f64>,
    pub taken: Vec<Checkpoint>,
}

impl CheckpointAt {
    pub fn new(mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        Self {
            pending: times,
            taken: Vec::new(),
        }
    }
}

impl RunObserver for CheckpointAt {
    fn on_step(&mut self, view: &StepView<'_>) -> Control {
        while let Some(&t) = self.pending.first() {
            if view.t + 1e-12 * view.cfg.dt >= t {
                self.taken.push(view.checkpoint());
                self.pending.remove(0);
            } else {
                break;
            }
        }
        Control::Continue
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: SolverState,
    pub steps: usize,
    pub t: f64,
    /// States at diagnostic times, when requested.
    pub samples: Vec<StateSample>,
    /// Set when the run stopped on a vacuum breach or blowup.
    pub abort: Option<SolverError>,
    pub accumulators: Accumulators,
    pub initial: DiagnosticsRecord,
}

impl RunOutput {
    pub fn completed(&self) -> bool {
        self.abort.is_none()
    }

    pub fn into_result(self) -> Result<RunOutput, SolverError> {
        match &self.abort {
            Some(e) => Err(e.clone()),
            None => Ok(self),
        }
    }
}

fn sample_of(state: &SolverState, p: &PhysParams, t: f64) -> Result<StateSample, ModelError> {
    let (prim, eff) = state.views(p)?;
    Ok(StateSample {
        t,
        rho: prim.rho,
        v: eff.v,
    })
}

fn evaluate(state: &SolverState, p: &PhysParams) -> Result<diagnostics::Snapshot, ModelError> {
    let (prim, eff) = state.views(p)?;
    diagnostics::snapshot(&prim, &eff, p)
}

/// Integrates from `initial` to `cfg.t_end`.
pub fn run(
    initial: SolverState,
    params: &PhysParams,
    cfg: &SolverConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, SolverError> {
    cfg.validate(initial.grid(), params)?;
    if initial.formulation() != cfg.formulation {
        return Err(SolverError::Config(
            "initial state does not match the configured formulation".into(),
        ));
    }
    check_state(&initial, params, cfg.vacuum_floor, 0.0)?;
    let snap = evaluate(&initial, params)?;
    let acc = Accumulators::start(&snap);
    let first = DiagnosticsRecord::new(0.0, &snap, &acc);
    advance(initial, 0, acc, first, params, cfg, observer)
}

/// Continues a run from a checkpoint; `cfg` must keep the checkpoint's `dt`
/// and formulation for a bitwise-identical continuation.
pub fn resume(
    cp: &Checkpoint,
    cfg: &SolverConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, SolverError> {
    let (state, params) = cp.restore()?;
    cfg.validate(state.grid(), &params)?;
    if cfg.formulation != cp.formulation {
        return Err(SolverError::Config("formulation differs from the checkpoint".into()));
    }
    if cfg.dt.to_bits() != cp.dt.to_bits() {
        return Err(SolverError::Config("dt differs from the checkpoint".into()));
    }
    advance(state, cp.step, cp.accumulators, cp.initial.clone(), &params, cfg, observer)
}

fn advance(
    mut state: SolverState,
    start_step: usize,
    mut acc: Accumulators,
    initial: DiagnosticsRecord,
    params: &PhysParams,
    cfg: &SolverConfig,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput, SolverError> {
    let total = cfg.step_count();
    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut step = start_step;
    let mut t = cfg.time_at(step);

    let snap = evaluate(&state, params)?;
    let rec = DiagnosticsRecord::new(t, &snap, &acc);
    observer.on_record(&rec);
    records.push(rec);
    if cfg.keep_samples {
        samples.push(sample_of(&state, params, t)?);
    }
    let mut abort = None;
    let view = StepView {
        step,
        t,
        state: &state,
        params,
        cfg,
        accumulators: &acc,
        initial: &initial,
    };
    let mut stopped = observer.on_step(&view) == Control::Stop;

    while !stopped && step < total {
        let t_next = cfg.time_at(step + 1);
        let h = t_next - t;
        match step_imex_by(&state, params, cfg, h, t) {
            Ok(next) => state = next,
            Err(e @ (SolverError::VacuumBreach { .. } | SolverError::NumericBlowup { .. })) => {
                abort = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
        step += 1;
        t = t_next;
        let snap = evaluate(&state, params)?;
        acc.advance(h, &snap);
        if step % cfg.diag_stride == 0 || step == total {
            let rec = DiagnosticsRecord::new(t, &snap, &acc);
            observer.on_record(&rec);
            records.push(rec);
            if cfg.keep_samples {
                samples.push(sample_of(&state, params, t)?);
            }
        }
        let view = StepView {
            step,
            t,
            state: &state,
            params,
            cfg,
            accumulators: &acc,
            initial: &initial,
        };
        stopped = observer.on_step(&view) == Control::Stop;
    }
    Ok(RunOutput {
        records,
        final_state: state,
        steps: step,
        t,
        samples,
        abort,
        accumulators: acc,
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_state(grid: &Grid, amp: f64) -> PrimitiveState {
        PrimitiveState::new(
            RealField::from_fn(grid, |x, _| 1.0 + amp * (x.cos() - 0.3 * (2.0 * x).sin())),
            vec![RealField::from_fn(grid, |x, _| amp * x.sin())],
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        let g = Grid::periodic(1, 256).unwrap();
        let p = PhysParams::default();
        let cfg = SolverConfig::default();
        assert!(cfg.validate(&g, &p).is_ok());
        let big = SolverConfig {
            dt: 1e-2,
            ..cfg.clone()
        };
        assert!(matches!(big.validate(&g, &p), Err(SolverError::Config(_))));
        let bad = SolverConfig {
            vacuum_floor: 0.0,
            ..cfg.clone()
        };
        assert!(bad.validate(&g, &p).is_err());
        let stride = SolverConfig {
            diag_stride: 0,
            ..cfg
        };
        assert!(stride.validate(&g, &p).is_err());
    }

    #[test]
    fn step_counts() {
        let cfg = SolverConfig {
            dt: 0.1,
            t_end: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(cfg.step_count(), 10);
        assert_eq!(cfg.time_at(10), 1.0);
        let cfg = SolverConfig {
            dt: 0.3,
            t_end: 1.0,
            ..SolverConfig::default()
        };
        assert_eq!(cfg.step_count(), 4);
        assert_eq!(cfg.time_at(3), 0.3 * 3.0);
        assert_eq!(cfg.time_at(4), 1.0);
    }

    #[test]
    fn equilibrium_is_unchanged() {
        let g = Grid::periodic(2, 16).unwrap();
        let p = PhysParams::default();
        let cfg = SolverConfig {
            dt: 1e-3,
            ..SolverConfig::default()
        };
        for f in [Formulation::Primitive, Formulation::Effective] {
            let s = SolverState::from_primitive(PrimitiveState::equilibrium(&g, &p), f, &p).unwrap();
            let next = step_imex(&s, &p, &cfg).unwrap();
            let prim = next.to_primitive(&p);
            assert!(prim.rho.map(|r| r - 1.0).max_abs() < 1e-14);
            assert!(prim.u.iter().all(|c| c.max_abs() < 1e-14));
        }
    }

    #[test]
    fn pure_diffusion_is_exact() {
        let g = Grid::periodic(1, 64).unwrap();
        let p = PhysParams::default();
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.5,
            formulation: Formulation::Effective,
            explicit_terms: false,
            ..SolverConfig::default()
        };
        let e = EffectiveState::new(RealField::from_fn(&g, |x, _| x.sin()), vec![RealField::zeros(&g)]).unwrap();
        let out = run(SolverState::Effective(e), &p, &cfg, &mut NoObserver).unwrap();
        let SolverState::Effective(fin) = &out.final_state else {
            panic!()
        };
        let exact = RealField::from_fn(&g, |x, _| (-p.mu * 0.5f64).exp() * x.sin());
        assert!(fin.q.sub(&exact).max_abs() < 1e-8 * exact.max_abs());
    }

    #[test]
    fn second_order_self_convergence() {
        let g = Grid::periodic(1, 64).unwrap();
        let p = PhysParams::default();
        let s0 = smooth_state(&g, 0.1);
        let solve = |dt: f64| {
            let cfg = SolverConfig {
                dt,
                t_end: 0.2,
                diag_stride: 1000,
                ..SolverConfig::default()
            };
            let out = run(SolverState::Primitive(s0.clone()), &p, &cfg, &mut NoObserver).unwrap();
            out.final_state.to_primitive(&p).rho
        };
        let reference = solve(1e-4 / 8.0);
        let e1 = solve(1e-3).sub(&reference).max_abs();
        let e2 = solve(5e-4).sub(&reference).max_abs();
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn vacuum_breach_is_reported() {
        let g = Grid::periodic(1, 64).unwrap();
        let p = PhysParams::default();
        let cfg = SolverConfig {
            vacuum_floor: 0.95,
            dt: 1e-3,
            t_end: 0.5,
            ..SolverConfig::default()
        };
        let s = PrimitiveState::new(
            RealField::from_fn(&g, |x, _| 1.0 - 0.04 * x.cos()),
            vec![RealField::from_fn(&g, |x, _| 0.5 * x.sin())],
        )
        .unwrap();
        let out = run(SolverState::Primitive(s), &p, &cfg, &mut NoObserver).unwrap();
        assert!(matches!(out.abort, Some(SolverError::VacuumBreach { .. })));
    }

    #[test]
    fn zero_horizon_gives_initial_record_only() {
        let g = Grid::periodic(1, 32).unwrap();
        let p = PhysParams::default();
        let cfg = SolverConfig {
            t_end: 0.0,
            ..SolverConfig::default()
        };
        let out = run(SolverState::Primitive(smooth_state(&g, 0.1)), &p, &cfg, &mut NoObserver).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.steps, 0);
    }
}
