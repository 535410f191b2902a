//! Picard iteration for the effective system: the free part `(q_L, v_L)`
//! solves the linear problem exactly, and each correction `(q̄ⁿ, v̄ⁿ)` solves
//! a forced heat problem with sources frozen at the previous iterate,
//!
//! `∂t q̄ + div v̄ − μΔq̄ = F(qⁿ⁻¹, vⁿ⁻¹)`, `∂t v̄ − μΔv̄ = G(qⁿ⁻¹, vⁿ⁻¹)`,
//!
//! `F = −v·∇q + μ|∇q|²`, `G = −u·∇v + μ∇q·∇v − ∇P/ρ`, `u = v − μ∇q`.
//! Duhamel integrals are evaluated per mode with the trapezoid rule on a
//! uniform time grid.

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::fields::{inverse_transform, transform, RealField, SpectralField};
use crate::lifespan::{lifespan_lower_bound, LifespanConstants, LifespanInputs};
use crate::lp_besov::{besov_norm_spectral, tilde_norm_spectral, BesovSpec};
use crate::model::PhysParams;

/// Consecutive growths of the difference norm that count as divergence.
pub const GROWTH_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Integrability `p` of the critical space `B^{N/p}_{p,1}`.
    pub p: f64,
    /// Time steps of the Duhamel quadrature on `[0, T]`.
    pub n_time: usize,
    pub dealias: bool,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-12,
            p: 2.0,
            n_time: 64,
            dealias: true,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iters < 1 {
            return Err(SolverError::Config("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(SolverError::Config(format!("p must be >= 1, got {}", self.p)));
        }
        if self.n_time < 1 {
            return Err(SolverError::Config("n_time must be >= 1".into()));
        }
        Ok(())
    }

    /// `(s, p, 1)` with `s = N/p`.
    pub fn besov(&self, dim: usize) -> BesovSpec {
        BesovSpec::critical(dim, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PicardOutcome {
    Converged { iterations: usize },
    MaxIters,
    NonContraction {
        t: f64,
        norm_q0: f64,
        norm_v0: f64,
        last_diff: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    pub t: f64,
    /// `‖q0‖_{B^{N/p}_{p,1}}`.
    pub norm_q0: f64,
    /// `‖v0‖_{B^{N/p−1}_{p,1}}`.
    pub norm_v0: f64,
    /// `‖(qⁿ − qⁿ⁻¹, vⁿ − vⁿ⁻¹)‖_{F_T}` for `n = 1, 2, …`.
    pub diffs: Vec<f64>,
    /// `diffs[i+1] / diffs[i]`.
    pub ratios: Vec<f64>,
    pub outcome: PicardOutcome,
    #[serde(skip)]
    pub final_q: RealField,
    #[serde(skip)]
    pub final_v: Vec<RealField>,
}

impl PicardReport {
    pub fn converged(&self) -> bool {
        matches!(self.outcome, PicardOutcome::Converged { .. })
    }

    /// Converged with every ratio below one.
    pub fn contracting(&self) -> bool {
        self.converged() && self.ratios.iter().all(|&r| r < 1.0)
    }

    /// Longest run of consecutive ratios below one.
    pub fn longest_contracting_run(&self) -> usize {
        let mut best = 0;
        let mut cur = 0;
        for &r in &self.ratios {
            if r < 1.0 {
                cur += 1;
                best = best.max(cur);
            } else {
                cur = 0;
            }
        }
        best
    }

    pub fn into_result(self) -> Result<Self, SolverError> {
        match self.outcome {
            PicardOutcome::NonContraction {
                t,
                norm_q0,
                norm_v0,
                last_diff,
            } => Err(SolverError::NonContraction {
                t,
                norm_q0,
                norm_v0,
                last_diff,
            }),
            _ => Ok(self),
        }
    }
}

/// One time slice `[q̂, v̂…]`.
type Slice = Vec<SpectralField>;

fn spectral_div(v: &[SpectralField]) -> SpectralField {
    v.iter()
        .enumerate()
        .map(|(a, c)| c.derivative(a))
        .reduce(|acc, d| acc.add(&d))
        .expect("non-empty vector")
}

/// `q̂_L = e^{−μ|k|²t}(q̂0 − t·ik·v̂0)`, `v̂_L = e^{−μ|k|²t} v̂0`.
fn linear_slice(q0: &SpectralField, v0: &[SpectralField], mu: f64, t: f64) -> Slice {
    let q = q0.add(&spectral_div(v0).scale(-t)).heat(mu, t);
    std::iter::once(q)
        .chain(v0.iter().map(|c| c.heat(mu, t)))
        .collect()
}

pub fn solve_linear_system(
    q0: &RealField,
    v0: &[RealField],
    mu: f64,
    t: f64,
) -> Result<(RealField, Vec<RealField>), SolverError> {
    check_data(q0, v0)?;
    let v0h: Vec<SpectralField> = v0.iter().map(transform).collect();
    let s = linear_slice(&transform(q0), &v0h, mu, t);
    let q = inverse_transform(&s[0]);
    let v = s[1..].iter().map(inverse_transform).collect();
    Ok((q, v))
}

fn check_data(q0: &RealField, v0: &[RealField]) -> Result<(), SolverError> {
    let dim = q0.grid().dim();
    if v0.len() != dim {
        return Err(SolverError::Config(format!(
            "velocity has {} components on a {dim}-d grid",
            v0.len()
        )));
    }
    for c in v0 {
        q0.same_grid(c)?;
    }
    q0.check_finite("q0")?;
    for c in v0 {
        c.check_finite("v0")?;
    }
    Ok(())
}

/// Sources `(F̂, Ĝ…)` at one time slice of the previous iterate.
fn sources(slice: &Slice, params: &PhysParams, dealias: bool) -> Slice {
    let dim = slice.len() - 1;
    let q = inverse_transform(&slice[0]);
    let gq: Vec<RealField> = (0..dim)
        .map(|a| inverse_transform(&slice[0].derivative(a)))
        .collect();
    let v: Vec<RealField> = slice[1..].iter().map(inverse_transform).collect();
    let u: Vec<RealField> = v.iter().zip(&gq).map(|(v, g)| v.axpy(-params.mu, g)).collect();
    let mut f = RealField::zeros(q.grid());
    for a in 0..dim {
        f = f.sub(&v[a].mul(&gq[a])).add(&gq[a].mul(&gq[a]).scale(params.mu));
    }
    // ∇P/ρ = P'(ρ)∇q with ρ = ρ̄ e^q
    let dp = q.map(|x| params.pressure_derivative_at(params.rho_bar * x.exp()));
    let mut out = Vec::with_capacity(dim + 1);
    out.push(transform(&f));
    for b in 0..dim {
        let mut g = dp.mul(&gq[b]).scale(-1.0);
        for a in 0..dim {
            let dv = inverse_transform(&slice[1 + b].derivative(a));
            g = g.sub(&u[a].mul(&dv)).add(&gq[a].mul(&dv).scale(params.mu));
        }
        out.push(transform(&g));
    }
    if dealias {
        out.iter_mut().for_each(|s| *s = s.dealias());
    }
    out
}

/// `y_{j+1} = e^{−μ|k|²h} y_j + h/2 (e^{−μ|k|²h} S_j + S_{j+1})`, `y_0 = 0`.
fn duhamel(src: &[SpectralField], mu: f64, h: f64) -> Vec<SpectralField> {
    let mut out = Vec::with_capacity(src.len());
    let mut y = SpectralField::zeros(src[0].grid());
    out.push(y.clone());
    for j in 0..src.len() - 1 {
        y = y.add(&src[j].scale(0.5 * h)).heat(mu, h).add(&src[j + 1].scale(0.5 * h));
        out.push(y.clone());
    }
    out
}

/// Corrections `(q̄ⁿ, v̄ⁿ)` on the time grid from frozen sources.
fn correction(src: &[Slice], dim: usize, mu: f64, h: f64) -> Vec<Slice> {
    let m = src.len();
    let vbar: Vec<Vec<SpectralField>> = (0..dim)
        .map(|b| {
            let s: Vec<SpectralField> = src.iter().map(|sl| sl[1 + b].clone()).collect();
            duhamel(&s, mu, h)
        })
        .collect();
    let qsrc: Vec<SpectralField> = (0..m)
        .map(|j| {
            let vj: Vec<SpectralField> = (0..dim).map(|b| vbar[b][j].clone()).collect();
            src[j][0].add(&spectral_div(&vj).scale(-1.0))
        })
        .collect();
    let qbar = duhamel(&qsrc, mu, h);
    (0..m)
        .map(|j| {
            std::iter::once(qbar[j].clone())
                .chain((0..dim).map(|b| vbar[b][j].clone()))
                .collect()
        })
        .collect()
}

fn sub_slice(a: &Slice, b: &Slice) -> Slice {
    a.iter().zip(b).map(|(x, y)| x.add(&y.scale(-1.0))).collect()
}

/// `‖δq‖_{L̃^∞B^s ∩ L̃^1B^{s+2}} + ‖δv‖_{L̃^∞B^{s−1} ∩ L̃^1B^{s+1}}`.
fn ft_norm(series: &[Slice], h: f64, spec: &BesovSpec) -> Result<f64, SolverError> {
    let q: Vec<Vec<SpectralField>> = series.iter().map(|s| vec![s[0].clone()]).collect();
    let v: Vec<Vec<SpectralField>> = series.iter().map(|s| s[1..].to_vec()).collect();
    let n = |x: &[Vec<SpectralField>], sigma: f64, s: f64| {
        tilde_norm_spectral(x, h, sigma, &spec.with_s(s))
            .map_err(|e| SolverError::Config(e.to_string()))
    };
    let s = spec.s;
    Ok(n(&q, f64::INFINITY, s)?
        + n(&q, 1.0, s + 2.0)?
        + n(&v, f64::INFINITY, s - 1.0)?
        + n(&v, 1.0, s + 1.0)?)
}

/// Critical data norms `(‖q0‖_{B^{N/p}_{p,1}}, ‖v0‖_{B^{N/p−1}_{p,1}})`.
pub fn data_norms(q0: &RealField, v0: &[RealField], p: f64) -> (f64, f64) {
    let spec = BesovSpec::critical(q0.grid().dim(), p);
    let qh = [transform(q0)];
    let vh: Vec<SpectralField> = v0.iter().map(transform).collect();
    (
        besov_norm_spectral(&qh, &spec),
        besov_norm_spectral(&vh, &spec.with_s(spec.s - 1.0)),
    )
}

pub fn picard_solve(
    q0: &RealField,
    v0: &[RealField],
    params: &PhysParams,
    t: f64,
    pcfg: &PicardConfig,
) -> Result<PicardReport, SolverError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(SolverError::Config(format!("T must be > 0, got {t}")));
    }
    pcfg.validate()?;
    params.validate()?;
    check_data(q0, v0)?;
    let dim = q0.grid().dim();
    let spec = pcfg.besov(dim);
    let (norm_q0, norm_v0) = data_norms(q0, v0, pcfg.p);
    let h = t / pcfg.n_time as f64;
    let q0h = transform(q0);
    let v0h: Vec<SpectralField> = v0.iter().map(transform).collect();
    let linear: Vec<Slice> = (0..=pcfg.n_time)
        .map(|j| linear_slice(&q0h, &v0h, params.mu, j as f64 * h))
        .collect();

    let mut iterate = linear.clone();
    let mut diffs = Vec::new();
    let mut growths = 0;
    let mut outcome = PicardOutcome::MaxIters;
    for n in 1..=pcfg.max_iters {
        let src: Vec<Slice> = iterate.iter().map(|s| sources(s, params, pcfg.dealias)).collect();
        let corr = correction(&src, dim, params.mu, h);
        let next: Vec<Slice> = linear
            .iter()
            .zip(&corr)
            .map(|(l, c)| l.iter().zip(c).map(|(a, b)| a.add(b)).collect())
            .collect();
        let delta: Vec<Slice> = next.iter().zip(&iterate).map(|(a, b)| sub_slice(a, b)).collect();
        let d = ft_norm(&delta, h, &spec)?;
        iterate = next;
        let grew = !d.is_finite() || diffs.last().is_some_and(|&prev| d > prev);
        diffs.push(d);
        if d < pcfg.tol {
            outcome = PicardOutcome::Converged { iterations: n };
            break;
        }
        growths = if grew { growths + 1 } else { 0 };
        if growths >= GROWTH_LIMIT || !d.is_finite() {
            outcome = PicardOutcome::NonContraction {
                t,
                norm_q0,
                norm_v0,
                last_diff: d,
            };
            break;
        }
    }
    let ratios = diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let last = iterate.last().expect("time grid has n_time + 1 slices");
    Ok(PicardReport {
        t,
        norm_q0,
        norm_v0,
        diffs,
        ratios,
        outcome,
        final_q: inverse_transform(&last[0]),
        final_v: last[1..].iter().map(inverse_transform).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    /// Largest horizon found on which every member contracts.
    pub t_contract: f64,
    /// Largest `A0` over the family.
    pub a0: f64,
    pub c1: f64,
    /// Lifespan bound with the calibrated `C1` at the largest `A0`.
    pub predicted_t: f64,
    /// Probed horizons and whether the family contracted there.
    pub probes: Vec<(f64, bool)>,
}

/// Fits `C1` so that the lifespan bound, evaluated on the family member with
/// the largest `A0`, equals the largest horizon on which Picard contracts for
/// every member. The horizon is found by bisection in `[t_hi·2⁻²⁰, t_hi]`.
/// When the `A0` branch cannot reach that horizon because `C1/4` binds first,
/// `C1` is set where both branches meet and the prediction falls short.
pub fn calibrate_c1(
    family: &[(RealField, Vec<RealField>)],
    params: &PhysParams,
    pcfg: &PicardConfig,
    constants: LifespanConstants,
    t_hi: f64,
    bisections: usize,
) -> Result<CalibrationReport, SolverError> {
    if family.is_empty() {
        return Err(SolverError::Config("empty calibration family".into()));
    }
    if !(t_hi > 0.0 && t_hi.is_finite()) {
        return Err(SolverError::Config(format!("t_hi must be > 0, got {t_hi}")));
    }
    let mut probes = Vec::new();
    let mut contracts = |t: f64| -> Result<bool, SolverError> {
        let mut ok = true;
        for (q0, v0) in family {
            if !picard_solve(q0, v0, params, t, pcfg)?.contracting() {
                ok = false;
                break;
            }
        }
        probes.push((t, ok));
        Ok(ok)
    };
    let t_contract = if contracts(t_hi)? {
        t_hi
    } else {
        let mut lo = t_hi * 2f64.powi(-20);
        if !contracts(lo)? {
            return Err(SolverError::Config(format!(
                "no contraction even at T = {lo:e}"
            )));
        }
        let mut hi = t_hi;
        for _ in 0..bisections {
            let mid = (lo * hi).sqrt();
            if contracts(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let (a0, worst) = family
        .iter()
        .map(|(q0, v0)| {
            let (nq, nv) = data_norms(q0, v0, pcfg.p);
            (nq + nv, (q0, v0))
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("non-empty family");
    let s = 1.0 + a0.sqrt();
    let c1 = if a0 == 0.0 {
        4.0 * t_contract
    } else {
        let matched = 1.0 / (4.0 * s * (t_contract * a0).sqrt());
        // C1/4 = 1/(16C1²A0(1+√A0)²) at the crossing
        let crossing = (1.0 / (4.0 * a0 * s * s)).cbrt();
        if matched / 4.0 >= t_contract {
            matched
        } else {
            crossing
        }
    };
    let mut inputs = crate::lifespan::inputs_from_data(
        worst.0,
        worst.1,
        pcfg.p,
        LifespanConstants { c1, ..constants },
        &crate::lp_besov::BumpPair::default(),
    )
    .map_err(|e| SolverError::Config(e.to_string()))?;
    inputs.constants.c1 = c1;
    let predicted_t = lifespan_lower_bound(&inputs)
        .map_err(|e| SolverError::Config(e.to_string()))?
        .t;
    Ok(CalibrationReport {
        t_contract,
        a0,
        c1,
        predicted_t,
        probes,
    })
}

/// Lifespan inputs of `(q0, v0)` with the given constants.
pub fn lifespan_inputs(
    q0: &RealField,
    v0: &[RealField],
    p: f64,
    constants: LifespanConstants,
) -> Result<LifespanInputs, SolverError> {
    crate::lifespan::inputs_from_data(q0, v0, p, constants, &crate::lp_besov::BumpPair::default())
        .map_err(|e| SolverError::Config(e.to_string()))
}
