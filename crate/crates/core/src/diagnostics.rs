//! Energies, entropies, dissipation accumulators, the `L^p` gain bound, the
//! vacuum statistics and the De Giorgi level-set machinery.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{self, grad, lp_norm_of, pointwise_norm, RealField};
use crate::model::{self, EffectiveState, ModelError, PhysParams, PrimitiveState};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid exponents: {0}")]
    Exponents(String),
    #[error("missing statistics: {0}")]
    Missing(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Exponents `p` for which `‖ρ^{1/p} v‖_{L^p}` is tracked.
pub const LP_GAIN_EXPONENTS: [f64; 3] = [4.0, 8.0, 16.0];

/// Relative slack of the energy inequalities.
pub const ENERGY_TOL: f64 = 1e-4;
/// Relative slack of the `L^p` gain inequality.
pub const LP_GAIN_TOL: f64 = 1e-3;

/// Pressure potential `Π(ρ)`, with `Π(ρ̄) = Π'(ρ̄) = 0` and `Π'' = P'/ρ`.
pub fn pi_scalar(rho: f64, p: &PhysParams) -> f64 {
    let rb = p.rho_bar;
    if p.gamma == 1.0 {
        p.a * (rho * (rho / rb).ln() + rb - rho)
    } else {
        let g = p.gamma;
        p.a / (g - 1.0) * (rho.powf(g) - rb.powf(g) - g * rb.powf(g - 1.0) * (rho - rb))
    }
}

pub fn pi_potential(rho: &RealField, p: &PhysParams) -> Result<RealField, ModelError> {
    model::require_positive(rho, 0.0)?;
    Ok(rho.map(|r| pi_scalar(r, p)))
}

fn kinetic(rho: &RealField, w: &[RealField]) -> f64 {
    let sq = w.iter().fold(RealField::zeros(rho.grid()), |acc, c| acc.add(&c.mul(c)));
    0.5 * rho.mul(&sq).integral()
}

/// `∫ |∇√ρ|²`.
fn grad_sqrt_sq(rho: &RealField) -> f64 {
    let s = rho.map(f64::sqrt);
    grad(&s).iter().map(|g| g.mul(g).integral()).sum()
}

/// `E = ∫ ½ρ|u|² + Π(ρ) + 2κ|∇√ρ|²`. The capillary density `2κ|∇√ρ|²`
/// equals `κ(ρ)|∇ρ|²/2` with `κ(ρ) = κ/ρ`, the energy conjugate to
/// `κ div(ρ∇∇ln ρ)`.
pub fn energy(s: &PrimitiveState, p: &PhysParams) -> Result<f64, ModelError> {
    let pi = pi_potential(&s.rho, p)?;
    Ok(kinetic(&s.rho, &s.u) + pi.integral() + 2.0 * p.kappa * grad_sqrt_sq(&s.rho))
}

/// `E1 = ∫ ½ρ|v|² + Π(ρ)`, plus `2(κ−μ²)|∇√ρ|²` when `κ > μ²`.
pub fn bd_entropy(e: &EffectiveState, p: &PhysParams) -> f64 {
    let rho = e.density(p);
    let pi = rho.map(|r| pi_scalar(r, p));
    let mut out = kinetic(&rho, &e.v) + pi.integral();
    let excess = p.kappa - p.mu * p.mu;
    if excess > model::QUANTUM_TOL {
        out += 2.0 * excess * grad_sqrt_sq(&rho);
    }
    out
}

/// `‖√ρ − √ρ̄‖_{L²} + ‖∇√ρ‖_{L²}`.
pub fn sqrt_h1_norm(rho: &RealField, rho_bar: f64) -> Result<f64, ModelError> {
    model::require_positive(rho, 0.0)?;
    let s = rho.map(f64::sqrt);
    let sb = rho_bar.sqrt();
    Ok(s.map(|x| x - sb).l2_norm() + grad_sqrt_sq(rho).sqrt())
}

/// `‖ρ^{1/p} v‖_{L^p}` with `|v|` the Euclidean norm.
pub fn weighted_velocity_norm(rho: &RealField, v: &[RealField], p: f64) -> f64 {
    let w = pointwise_norm(v).zip_map(rho, |a, r| r.powf(1.0 / p) * a);
    w.lp_norm(p)
}

/// Instantaneous dissipation rates and the Jüngel integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// `∫ 2μρ|Du|²`.
    pub u: f64,
    /// `∫ μρ|∇v|²`, plus `μ(κ−μ²)∫ρ|∇∇ln ρ|²` when `κ > μ²`.
    pub v: f64,
    /// `∫ μP'(ρ)|∇ρ|²/ρ`.
    pub density: f64,
    /// `‖Δ√ρ‖²_{L²}`.
    pub jungel: f64,
}

pub fn dissipation_rates(s: &PrimitiveState, e: &EffectiveState, p: &PhysParams) -> Rates {
    let rho = &s.rho;
    let d = rho.grid().dim();
    let gu: Vec<Vec<RealField>> = s.u.iter().map(grad).collect();
    let mut strain = RealField::zeros(rho.grid());
    for i in 0..d {
        for j in 0..d {
            let dij = gu[i][j].add(&gu[j][i]).scale(0.5);
            strain = strain.add(&dij.mul(&dij));
        }
    }
    let u_rate = 2.0 * p.mu * rho.mul(&strain).integral();

    let mut gv_sq = RealField::zeros(rho.grid());
    for c in &e.v {
        for g in grad(c) {
            gv_sq = gv_sq.add(&g.mul(&g));
        }
    }
    let mut v_rate = p.mu * rho.mul(&gv_sq).integral();
    let excess = p.kappa - p.mu * p.mu;
    if excess > model::QUANTUM_TOL {
        let h = fields::hessian(&e.q);
        let hh = h
            .iter()
            .flatten()
            .fold(RealField::zeros(rho.grid()), |acc, c| acc.add(&c.mul(c)));
        v_rate += p.mu * excess * rho.mul(&hh).integral();
    }

    let gr = grad(rho);
    let gr_sq = gr.iter().fold(RealField::zeros(rho.grid()), |acc, c| acc.add(&c.mul(c)));
    let density_rate = p.mu
        * gr_sq
            .zip_map(rho, |g, r| p.pressure_derivative_at(r) * g / r)
            .integral();

    let lap_sqrt = fields::laplacian(&rho.map(f64::sqrt));
    Rates {
        u: u_rate,
        v: v_rate,
        density: density_rate,
        jungel: lap_sqrt.mul(&lap_sqrt).integral(),
    }
}

/// Pointwise-in-time quantities of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mass: f64,
    pub energy: f64,
    pub bd_entropy: f64,
    pub min_rho: f64,
    pub max_inv_rho: f64,
    pub h1_sqrt: f64,
    pub lp_gain: [f64; 3],
    pub sqrt_rho_v_l2: f64,
    pub rates: Rates,
}

pub fn snapshot(
    s: &PrimitiveState,
    e: &EffectiveState,
    p: &PhysParams,
) -> Result<Snapshot, ModelError> {
    let min_rho = s.rho.min();
    let lp = LP_GAIN_EXPONENTS.map(|q| weighted_velocity_norm(&s.rho, &e.v, q));
    Ok(Snapshot {
        mass: s.rho.integral(),
        energy: energy(s, p)?,
        bd_entropy: bd_entropy(e, p),
        min_rho,
        max_inv_rho: 1.0 / min_rho,
        h1_sqrt: sqrt_h1_norm(&s.rho, p.rho_bar)?,
        lp_gain: lp,
        sqrt_rho_v_l2: weighted_velocity_norm(&s.rho, &e.v, 2.0),
        rates: dissipation_rates(s, e, p),
    })
}

/// Running trapezoid integrals of the dissipation rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Accumulators {
    pub dissip_u: f64,
    pub dissip_v: f64,
    pub dissip_density: f64,
    pub jungel: f64,
    /// `sup_s ‖√ρ v(s)‖_{L²}` so far.
    pub sqrt_rho_v_sup: f64,
    pub last: Option<Rates>,
}

impl Accumulators {
    pub fn start(snap: &Snapshot) -> Self {
        Self {
            sqrt_rho_v_sup: snap.sqrt_rho_v_l2,
            last: Some(snap.rates),
            ..Self::default()
        }
    }

    /// Adds the trapezoid panel `[t, t + dt]` ending at `snap`.
    pub fn advance(&mut self, dt: f64, snap: &Snapshot) {
        let new = snap.rates;
        if let Some(old) = self.last {
            self.dissip_u += 0.5 * dt * (old.u + new.u);
            self.dissip_v += 0.5 * dt * (old.v + new.v);
            self.dissip_density += 0.5 * dt * (old.density + new.density);
            self.jungel += 0.5 * dt * (old.jungel + new.jungel);
        }
        self.sqrt_rho_v_sup = self.sqrt_rho_v_sup.max(snap.sqrt_rho_v_l2);
        self.last = Some(new);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub bd_entropy: f64,
    pub dissip_u: f64,
    pub dissip_v: f64,
    pub dissip_density: f64,
    pub jungel: f64,
    pub min_rho: f64,
    pub max_inv_rho: f64,
    pub h1_sqrt: f64,
    /// `‖ρ^{1/p} v‖_{L^p}` for `p` in [`LP_GAIN_EXPONENTS`].
    pub lp_gain: [f64; 3],
    pub sqrt_rho_v_l2: f64,
    pub sqrt_rho_v_sup: f64,
}

impl DiagnosticsRecord {
    pub fn new(t: f64, snap: &Snapshot, acc: &Accumulators) -> Self {
        Self {
            t,
            mass: snap.mass,
            energy: snap.energy,
            bd_entropy: snap.bd_entropy,
            dissip_u: acc.dissip_u,
            dissip_v: acc.dissip_v,
            dissip_density: acc.dissip_density,
            jungel: acc.jungel,
            min_rho: snap.min_rho,
            max_inv_rho: snap.max_inv_rho,
            h1_sqrt: snap.h1_sqrt,
            lp_gain: snap.lp_gain,
            sqrt_rho_v_l2: snap.sqrt_rho_v_l2,
            sqrt_rho_v_sup: acc.sqrt_rho_v_sup,
        }
    }

    pub fn lp_gain_at(&self, p: f64) -> Option<f64> {
        LP_GAIN_EXPONENTS
            .iter()
            .position(|&q| q == p)
            .map(|i| self.lp_gain[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub functional: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyVerdict {
    pub energy_holds: bool,
    pub bd_entropy_holds: bool,
    /// Largest `(lhs − E(0)) / E(0)` seen for each functional.
    pub max_relative_excess: [f64; 2],
    pub first_violation: Option<Violation>,
}

impl EnergyVerdict {
    pub fn holds(&self) -> bool {
        self.energy_holds && self.bd_entropy_holds
    }
}

fn relative_excess(lhs: f64, base: f64) -> f64 {
    if base > 0.0 {
        (lhs - base) / base
    } else if lhs > base {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `E(t) + ∫2μρ|Du|² ≤ E(0)(1+tol)` and
/// `E1(t) + ∫μρ|∇v|² + ∫μP'|∇ρ|²/ρ ≤ E1(0)(1+tol)` at every record.
pub fn check_energy_inequality(records: &[DiagnosticsRecord], tol: f64) -> EnergyVerdict {
    let mut verdict = EnergyVerdict {
        energy_holds: true,
        bd_entropy_holds: true,
        max_relative_excess: [f64::NEG_INFINITY; 2],
        first_violation: None,
    };
    let Some(first) = records.first() else {
        verdict.max_relative_excess = [0.0; 2];
        return verdict;
    };
    let (e0, e10) = (first.energy, first.bd_entropy);
    for r in records {
        let checks = [
            ("energy", r.energy + r.dissip_u, e0),
            ("bd_entropy", r.bd_entropy + r.dissip_v + r.dissip_density, e10),
        ];
        for (i, (name, lhs, base)) in checks.into_iter().enumerate() {
            let rhs = base * (1.0 + tol);
            verdict.max_relative_excess[i] =
                verdict.max_relative_excess[i].max(relative_excess(lhs, base));
            if lhs > rhs {
                if i == 0 {
                    verdict.energy_holds = false;
                } else {
                    verdict.bd_entropy_holds = false;
                }
                if verdict.first_violation.is_none() {
                    verdict.first_violation = Some(Violation {
                        t: r.t,
                        functional: name.into(),
                        lhs,
                        rhs,
                    });
                }
            }
        }
    }
    verdict
}

/// Trapezoid integral of `‖Δ√ρ‖²_{L²}` over a sampled density history.
pub fn jungel_accumulate(times: &[f64], densities: &[RealField]) -> Result<f64, DiagnosticsError> {
    if times.len() != densities.len() {
        return Err(DiagnosticsError::Invalid(format!(
            "{} times for {} densities",
            times.len(),
            densities.len()
        )));
    }
    let values: Vec<f64> = densities
        .iter()
        .map(|r| {
            model::require_positive(r, 0.0)?;
            let l = fields::laplacian(&r.map(f64::sqrt));
            Ok(l.mul(&l).integral())
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(trapezoid(times, &values))
}

pub(crate) fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// Right side of the `L^p` gain bound at time `t` with `T = t`:
/// `2^{1/p}(‖ρ₀^{1/p}v₀‖_p + S^{4/(p(p−2))}(a²/2)^{1/p}(2N²p²/(p−2) + 2p²(p−4))^{1/p} T^{1/p})
///  · exp((1/p) S^{4/(p−2)} (a²/2)(N²(p−4)/(p−2) + 1) t)`, `S = ‖√ρv‖_{L^∞_T L²}`.
pub fn lp_gain_rhs(p: f64, dim: usize, a: f64, initial: f64, sup_sqrt_rho_v: f64, t: f64) -> f64 {
    let n2 = (dim * dim) as f64;
    let half_a2 = 0.5 * a * a;
    let poly = n2 * 2.0 * p * p / (p - 2.0) + 2.0 * p * p * (p - 4.0);
    let prefactor = initial
        + sup_sqrt_rho_v.powf(4.0 / (p * (p - 2.0)))
            * half_a2.powf(1.0 / p)
            * poly.powf(1.0 / p)
            * t.powf(1.0 / p);
    let growth = (1.0 / p) * sup_sqrt_rho_v.powf(4.0 / (p - 2.0)) * half_a2 * (n2 * (p - 4.0) / (p - 2.0) + 1.0) * t;
    2f64.powf(1.0 / p) * prefactor * growth.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpGainEntry {
    pub t: f64,
    pub lhs: f64,
    pub rhs: Option<f64>,
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpGainReport {
    pub p: f64,
    pub entries: Vec<LpGainEntry>,
    /// `None` when the constants do not apply.
    pub verdict: Option<bool>,
    pub note: Option<String>,
}

pub fn lp_gain_check(
    records: &[DiagnosticsRecord],
    p: f64,
    params: &PhysParams,
    dim: usize,
) -> Result<LpGainReport, DiagnosticsError> {
    if p < 4.0 {
        return Err(DiagnosticsError::Invalid(format!("p must be >= 4, got {p}")));
    }
    let first = records
        .first()
        .ok_or_else(|| DiagnosticsError::Missing("empty record series".into()))?;
    let idx = LP_GAIN_EXPONENTS
        .iter()
        .position(|&q| q == p)
        .ok_or_else(|| DiagnosticsError::Missing(format!("p = {p} is not tracked")))?;
    let applies = params.gamma == 1.0;
    let initial = first.lp_gain[idx];
    let entries: Vec<LpGainEntry> = records
        .iter()
        .map(|r| {
            let lhs = r.lp_gain[idx];
            if applies {
                let rhs = lp_gain_rhs(p, dim, params.a, initial, r.sqrt_rho_v_sup, r.t - first.t);
                LpGainEntry {
                    t: r.t,
                    lhs,
                    rhs: Some(rhs),
                    holds: Some(lhs <= rhs * (1.0 + LP_GAIN_TOL)),
                }
            } else {
                LpGainEntry {
                    t: r.t,
                    lhs,
                    rhs: None,
                    holds: None,
                }
            }
        })
        .collect();
    let verdict = applies.then(|| entries.iter().all(|e| e.holds == Some(true)));
    Ok(LpGainReport {
        p,
        entries,
        verdict,
        note: (!applies).then(|| "inequality constants valid only for gamma = 1".to_string()),
    })
}

/// Exponents of the level-set estimates, derived from `(r, q)` through
/// `1/r + N/(2q) = 1 − κ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSetExponents {
    pub r: f64,
    pub q: f64,
    pub kappa1: f64,
    pub kappa: f64,
    pub r1: f64,
    pub q1: f64,
}

impl LevelSetExponents {
    pub fn new(r: f64, q: f64, dim: usize) -> Result<Self, DiagnosticsError> {
        if !(r > 1.0 && q > 1.0) {
            return Err(DiagnosticsError::Exponents(format!(
                "need r > 1 and q > 1, got r = {r}, q = {q}"
            )));
        }
        let kappa1 = 1.0 - 1.0 / r - dim as f64 / (2.0 * q);
        if !(kappa1 > 0.0 && kappa1 < 1.0) {
            return Err(DiagnosticsError::Exponents(format!(
                "1/r + N/(2q) = {} gives kappa1 = {kappa1}, outside (0, 1)",
                1.0 - kappa1
            )));
        }
        Ok(Self {
            r,
            q,
            kappa1,
            kappa: 2.0 * kappa1 / dim as f64,
            r1: 2.0 * r / (r - 1.0),
            q1: 2.0 * q / (q - 1.0),
        })
    }

    /// The choice `κ₁ = 1/2`, i.e. `1/r + N/(2q) = 1/2`, for a given `q > N`.
    pub fn half(q: f64, dim: usize) -> Result<Self, DiagnosticsError> {
        let inv_r = 0.5 - dim as f64 / (2.0 * q);
        if inv_r <= 0.0 {
            return Err(DiagnosticsError::Exponents(format!("need q > N, got q = {q}")));
        }
        Self::new(1.0 / inv_r, q, dim)
    }
}

/// A stored state of a run, used by the level-set and vacuum estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub t: f64,
    pub rho: RealField,
    pub v: Vec<RealField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub alpha: f64,
    pub k: f64,
    pub times: Vec<f64>,
    /// `λ(A_k(t))` at each sample.
    pub measure_series: Vec<f64>,
    /// `μ(k) = ∫ λ(A_k)^{r1/q1} dt`.
    pub mu_k: f64,
    pub mu_k_exponent: f64,
    /// Exponent `(1+κ)/(r1(1+κ))` applied to `μ(k)` in the iteration
    /// hypothesis, with the corresponding power of `μ(k)`.
    pub lemma_exponent: f64,
    pub mu_k_lemma_power: f64,
    pub q_norm: f64,
    pub exponents: LevelSetExponents,
}

/// Number of cells where `ρ^{-α} ≥ k`.
pub fn level_set_count(rho: &RealField, alpha: f64, k: f64) -> usize {
    rho.values().iter().filter(|&&r| r.powf(-alpha) >= k).count()
}

pub fn level_set_report(
    samples: &[StateSample],
    alpha: f64,
    k: f64,
    exponents: &LevelSetExponents,
) -> Result<LevelSetReport, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::Missing("no state samples".into()));
    }
    if !(alpha > 0.0) {
        return Err(DiagnosticsError::Invalid(format!("alpha must be > 0, got {alpha}")));
    }
    if !(k >= 1.0) {
        return Err(DiagnosticsError::Invalid(format!("k must be >= 1, got {k}")));
    }
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let mut measures = Vec::with_capacity(samples.len());
    let mut trunc_l2 = Vec::with_capacity(samples.len());
    let mut grad_sq = Vec::with_capacity(samples.len());
    for s in samples {
        model::require_positive(&s.rho, 0.0)?;
        let cell = s.rho.grid().cell_volume();
        measures.push(level_set_count(&s.rho, alpha, k) as f64 * cell);
        let w = s.rho.map(|r| r.powf(-alpha));
        let trunc = w.map(|x| (x - k).max(0.0));
        trunc_l2.push(trunc.l2_norm());
        // ∇(ρ^{-α})^{(k)} = ∇ρ^{-α} on A_k and 0 elsewhere
        let gw = grad(&w);
        let mask = w.map(|x| if x >= k { 1.0 } else { 0.0 });
        let g2 = gw
            .iter()
            .fold(RealField::zeros(s.rho.grid()), |acc, c| acc.add(&c.mul(c)))
            .mul(&mask);
        grad_sq.push(g2.integral());
    }
    let mu_exp = exponents.r1 / exponents.q1;
    let powered: Vec<f64> = measures.iter().map(|m| m.powf(mu_exp)).collect();
    let mu_k = trapezoid(&times, &powered);
    let lemma_exponent = (1.0 + exponents.kappa) / (exponents.r1 * (1.0 + exponents.kappa));
    let q_norm = trunc_l2.iter().cloned().fold(0.0, f64::max) + trapezoid(&times, &grad_sq).sqrt();
    Ok(LevelSetReport {
        alpha,
        k,
        times,
        measure_series: measures,
        mu_k,
        mu_k_exponent: mu_exp,
        lemma_exponent,
        mu_k_lemma_power: mu_k.powf(lemma_exponent),
        q_norm,
        exponents: *exponents,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeGiorgiReport {
    pub c: f64,
    pub b: f64,
    pub eps: f64,
    pub y0: f64,
    /// Closed-form bound on `y_n`, `n = 0..=n_max`.
    pub bounds: Vec<f64>,
    pub theta: f64,
    pub vanishes: bool,
    /// `θ b^{-n/ε}` when the vanishing verdict holds.
    pub geometric: Option<Vec<f64>>,
}

/// Closed-form bound for `y_{n+1} ≤ c bⁿ y_n^{1+ε}`:
/// `y_n ≤ c^{((1+ε)^n−1)/ε} b^{((1+ε)^n−1)/ε² − n/ε} y0^{(1+ε)^n}`, with
/// threshold `θ = c^{-1/ε} b^{-1/ε²}` and the vanishing verdict
/// `y0 ≤ θ ∧ b > 1`.
pub fn degiorgi_recursion(
    c: f64,
    b: f64,
    eps: f64,
    y0: f64,
    n_max: usize,
) -> Result<DeGiorgiReport, DiagnosticsError> {
    if !(c > 0.0 && eps > 0.0 && b >= 1.0 && y0 >= 0.0) {
        return Err(DiagnosticsError::Invalid(format!(
            "need c > 0, eps > 0, b >= 1, y0 >= 0 (c = {c}, b = {b}, eps = {eps}, y0 = {y0})"
        )));
    }
    let (lc, lb) = (c.ln(), b.ln());
    let bounds = (0..=n_max)
        .map(|n| {
            if y0 == 0.0 {
                return 0.0;
            }
            let g = (1.0 + eps).powi(n as i32);
            let log = (g - 1.0) / eps * lc
                + ((g - 1.0) / (eps * eps) - n as f64 / eps) * lb
                + g * y0.ln();
            log.exp()
        })
        .collect();
    let theta = (-lc / eps - lb / (eps * eps)).exp();
    let vanishes = y0 <= theta && b > 1.0;
    let geometric = vanishes.then(|| {
        (0..=n_max)
            .map(|n| theta * (-(n as f64) / eps * lb).exp())
            .collect()
    });
    Ok(DeGiorgiReport {
        c,
        b,
        eps,
        y0,
        bounds,
        theta,
        vanishes,
        geometric,
    })
}

/// The sequence with equality in the recursion, `y_{n+1} = c bⁿ y_n^{1+ε}`.
pub fn saturating_sequence(c: f64, b: f64, eps: f64, y0: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut y = y0;
    for n in 0..=n_max {
        out.push(y);
        y = c * b.powi(n as i32) * y.powf(1.0 + eps);
    }
    out
}

/// Inputs of the vacuum bound beyond the run itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumBoundConfig {
    pub alpha: f64,
    /// Exponent `q` with `1/r + N/(2q) = 1/2`.
    pub q: f64,
    pub t1: f64,
    pub q3: f64,
    /// Gagliardo–Nirenberg constant.
    pub beta: f64,
    /// `C_{α,μ}`; `None` selects `2(|α+1|² + 2α²)/μ`.
    pub c_alpha_mu: Option<f64>,
}

impl VacuumBoundConfig {
    pub fn new(alpha: f64, q: f64, t1: f64) -> Self {
        Self {
            alpha,
            q,
            t1,
            q3: 2.0,
            beta: 1.0,
            c_alpha_mu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VacuumBoundReport {
    pub bound: f64,
    pub measured_sup: f64,
    pub consistent: bool,
    pub k0_hat: f64,
    pub gamma_dg: f64,
    pub c_alpha_mu: f64,
    pub inv_rho_sup: f64,
    pub weighted_velocity_sup: f64,
    pub sqrt_deviation_sup: f64,
    pub exponents: LevelSetExponents,
}

pub fn c_alpha_mu(alpha: f64, mu: f64) -> f64 {
    2.0 / mu * ((alpha + 1.0).powi(2) + 2.0 * alpha * alpha)
}

/// The vacuum bound
/// `2 max(1, k̂0)(1 + 2^{2/κ+1/κ²}(βγ)^{1+1/κ} t1^{1/r1}
///  (‖√ρ−√ρ̄‖_{L^∞_{t1}L^{q3}} / (√ρ̄ − 1))^{q3/q1})`
/// with `γ = C_{α,μ}‖1/ρ‖^{1/(2q)}_{L^∞} ‖ρ^{1/(2q)}v‖_{L^∞_{t1}L^{2q}} t1^{1/r}`,
/// compared with the measured `sup 1/ρ^α` on `[0, t1]`.
pub fn vacuum_bound_estimate(
    samples: &[StateSample],
    params: &PhysParams,
    cfg: &VacuumBoundConfig,
) -> Result<VacuumBoundReport, DiagnosticsError> {
    let first = samples
        .first()
        .ok_or_else(|| DiagnosticsError::Missing("no state samples".into()))?;
    if !(cfg.t1 > first.t) {
        return Err(DiagnosticsError::Invalid(format!("t1 = {} must exceed the first sample time", cfg.t1)));
    }
    let last_t = samples.last().map(|s| s.t).unwrap_or(first.t);
    if cfg.t1 > last_t + 1e-12 * last_t.abs().max(1.0) {
        return Err(DiagnosticsError::Missing(format!(
            "t1 = {} lies beyond the recorded horizon {last_t}",
            cfg.t1
        )));
    }
    if params.rho_bar <= 1.0 {
        return Err(DiagnosticsError::Invalid(format!(
            "the bound needs rho_bar > 1, got {}",
            params.rho_bar
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.q3 >= 1.0 && cfg.beta > 0.0) {
        return Err(DiagnosticsError::Invalid("need alpha > 0, q3 >= 1, beta > 0".into()));
    }
    let dim = first.rho.grid().dim();
    let ex = LevelSetExponents::half(cfg.q, dim)?;
    let window: Vec<&StateSample> = samples.iter().filter(|s| s.t <= cfg.t1 + 1e-12).collect();
    let sb = params.rho_bar.sqrt();
    let mut inv_rho_sup: f64 = 0.0;
    let mut measured: f64 = 0.0;
    let mut wv_sup: f64 = 0.0;
    let mut dev_sup: f64 = 0.0;
    for s in &window {
        model::require_positive(&s.rho, 0.0)?;
        let m = s.rho.min();
        inv_rho_sup = inv_rho_sup.max(1.0 / m);
        measured = measured.max(m.powf(-cfg.alpha));
        wv_sup = wv_sup.max(weighted_velocity_norm(&s.rho, &s.v, 2.0 * cfg.q));
        let dev: Vec<f64> = s.rho.values().iter().map(|r| r.sqrt() - sb).collect();
        dev_sup = dev_sup.max(lp_norm_of(&dev, s.rho.grid().cell_volume(), cfg.q3));
    }
    let k0_hat = first.rho.min().powf(-cfg.alpha);
    let cam = cfg.c_alpha_mu.unwrap_or_else(|| c_alpha_mu(cfg.alpha, params.mu));
    let t1 = cfg.t1 - first.t;
    let gamma_dg = cam * inv_rho_sup.powf(1.0 / (2.0 * cfg.q)) * wv_sup * t1.powf(1.0 / ex.r);
    let kappa = ex.kappa;
    let tail = 2f64.powf(2.0 / kappa + 1.0 / (kappa * kappa))
        * (cfg.beta * gamma_dg).powf(1.0 + 1.0 / kappa)
        * t1.powf(1.0 / ex.r1)
        * (dev_sup / (sb - 1.0)).powf(cfg.q3 / ex.q1);
    let bound = 2.0 * k0_hat.max(1.0) * (1.0 + tail);
    Ok(VacuumBoundReport {
        bound,
        measured_sup: measured,
        consistent: measured <= bound,
        k0_hat,
        gamma_dg,
        c_alpha_mu: cam,
        inv_rho_sup,
        weighted_velocity_sup: wv_sup,
        sqrt_deviation_sup: dev_sup,
        exponents: ex,
    })
}

pub const CSV_HEADER: [&str; 14] = [
    "t",
    "mass",
    "energy",
    "bd_entropy",
    "dissip_u",
    "dissip_v",
    "dissip_density",
    "jungel",
    "min_rho",
    "max_inv_rho",
    "h1_sqrt",
    "lp_gain_p4",
    "lp_gain_p8",
    "lp_gain_p16",
];

/// Writes the 14-column time series.
pub fn write_csv<W: Write>(records: &[DiagnosticsRecord], out: W) -> Result<(), DiagnosticsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let row = [
            r.t,
            r.mass,
            r.energy,
            r.bd_entropy,
            r.dissip_u,
            r.dissip_v,
            r.dissip_density,
            r.jungel,
            r.min_rho,
            r.max_inv_rho,
            r.h1_sqrt,
            r.lp_gain[0],
            r.lp_gain[1],
            r.lp_gain[2],
        ];
        w.write_record(row.iter().map(|x| format!("{x:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize>(value: &T, out: W) -> Result<(), DiagnosticsError> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Grid;
    use crate::model::to_effective;
    use std::f64::consts::PI;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn pi_vanishes_at_reference_and_is_convex() {
        let p = PhysParams {
            a: 1.7,
            rho_bar: 1.3,
            ..PhysParams::default()
        };
        assert_eq!(pi_scalar(1.3, &p), 0.0);
        for &s in &[0.1, 0.5, 1.0, 2.0, 5.0] {
            let h = 1e-4;
            let second = (pi_scalar(s + h, &p) - 2.0 * pi_scalar(s, &p) + pi_scalar(s - h, &p)) / (h * h);
            assert!((second - p.a / s).abs() < 1e-5 * (p.a / s).max(1.0));
            assert!(pi_scalar(s, &p) >= 0.0);
        }
    }

    #[test]
    fn pi_matches_lions_construction() {
        for gamma in [2.0, 1.4] {
            let p = PhysParams {
                a: 0.8,
                gamma,
                rho_bar: 1.2,
                ..PhysParams::default()
            };
            for &rho in &[0.3, 1.0, 2.5] {
                // Π(ρ) = ρ ∫_{ρ̄}^{ρ} (P(s) − P(ρ̄)) / s² ds
                let quad = rho
                    * simpson(
                        |s| (p.pressure_at(s) - p.pressure_at(p.rho_bar)) / (s * s),
                        p.rho_bar,
                        rho,
                        2000,
                    );
                assert!((pi_scalar(rho, &p) - quad).abs() < 1e-10, "gamma {gamma} rho {rho}");
            }
        }
        let p = PhysParams {
            gamma: 2.0,
            a: 0.8,
            rho_bar: 1.2,
            ..PhysParams::default()
        };
        assert!((pi_scalar(2.0, &p) - 0.8 * 0.64).abs() < 1e-14);
    }

    #[test]
    fn energies_of_simple_states() {
        let g = Grid::periodic(1, 64).unwrap();
        let p = PhysParams::default();
        let eq = PrimitiveState::equilibrium(&g, &p);
        assert_eq!(energy(&eq, &p).unwrap(), 0.0);
        let e = to_effective(&eq, &p).unwrap();
        assert!(bd_entropy(&e, &p).abs() < 1e-28);

        let s = PrimitiveState::new(RealField::constant(&g, p.rho_bar), vec![RealField::from_fn(&g, |x, _| x.sin())]).unwrap();
        let expected = 0.5 * p.rho_bar * PI;
        assert!((energy(&s, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn capillary_energy_against_fine_quadrature() {
        let g = Grid::periodic(1, 128).unwrap();
        let p = PhysParams::default();
        let rho_fn = |x: f64| 1.0 + 0.3 * x.sin();
        let u_fn = |x: f64| 0.2 * x.cos();
        let s = PrimitiveState::new(RealField::from_fn(&g, |x, _| rho_fn(x)), vec![RealField::from_fn(&g, |x, _| u_fn(x))]).unwrap();
        let integrand = |x: f64| {
            let r = rho_fn(x);
            let dr = 0.3 * x.cos();
            let pi = p.a * (r * (r / p.rho_bar).ln() + p.rho_bar - r);
            0.5 * r * u_fn(x).powi(2) + pi + 2.0 * p.kappa * dr * dr / (4.0 * r)
        };
        let oracle = simpson(integrand, 0.0, 2.0 * PI, 20000);
        let val = energy(&s, &p).unwrap();
        assert!((val - oracle).abs() < 1e-8 * oracle);
    }

    #[test]
    fn sqrt_h1_closed_form() {
        let g = Grid::periodic(1, 64).unwrap();
        let rb = 1.5;
        let rho = RealField::from_fn(&g, |x, _| rb * (1.0 + 0.1 * x.sin()).powi(2));
        // √ρ − √ρ̄ = 0.1√ρ̄ sin x, ∇√ρ = 0.1√ρ̄ cos x
        let expected = 2.0 * 0.1 * rb.sqrt() * PI.sqrt();
        assert!((sqrt_h1_norm(&rho, rb).unwrap() - expected).abs() < 1e-12);
        assert_eq!(sqrt_h1_norm(&RealField::constant(&g, rb), rb).unwrap(), 0.0);
    }

    fn record(t: f64, energy: f64, dissip: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mass: 1.0,
            energy,
            bd_entropy: energy,
            dissip_u: dissip,
            dissip_v: dissip,
            dissip_density: 0.0,
            jungel: 0.0,
            min_rho: 1.0,
            max_inv_rho: 1.0,
            h1_sqrt: 0.0,
            lp_gain: [0.0; 3],
            sqrt_rho_v_l2: 0.0,
            sqrt_rho_v_sup: 0.0,
        }
    }

    #[test]
    fn energy_verdict_detects_violation() {
        let good = vec![record(0.0, 1.0, 0.0), record(0.5, 0.8, 0.15), record(1.0, 0.7, 0.25)];
        assert!(check_energy_inequality(&good, ENERGY_TOL).holds());
        let flipped: Vec<_> = good
            .iter()
            .map(|r| DiagnosticsRecord {
                energy: r.energy + 2.0 * r.dissip_u,
                ..r.clone()
            })
            .collect();
        let v = check_energy_inequality(&flipped, ENERGY_TOL);
        assert!(!v.holds());
        assert_eq!(v.first_violation.unwrap().t, 0.5);
        let zero = vec![record(0.0, 0.0, 0.0), record(1.0, 0.0, 0.0)];
        assert!(check_energy_inequality(&zero, ENERGY_TOL).holds());
    }

    #[test]
    fn lp_gain_rhs_at_zero_and_p4() {
        let r = lp_gain_rhs(8.0, 1, 1.0, 0.7, 3.0, 0.0);
        assert!((r - 2f64.powf(1.0 / 8.0) * 0.7).abs() < 1e-15);
        // p = 4: prefactor term N²·2·16/2, growth (1/4) S² a²/2 t
        let (s, t, a) = (0.5f64, 0.3f64, 2.0f64);
        let expected = 2f64.powf(0.25)
            * (0.1 + s.powf(0.5) * (a * a / 2.0).powf(0.25) * 16f64.powf(0.25) * t.powf(0.25))
            * (0.25 * s * s * a * a / 2.0 * t).exp();
        assert!((lp_gain_rhs(4.0, 1, a, 0.1, s, t) - expected).abs() < 1e-14);
    }

    #[test]
    fn level_sets_of_constant_density() {
        let g = Grid::periodic(1, 32).unwrap();
        let ex = LevelSetExponents::half(4.0, 1).unwrap();
        let samples: Vec<StateSample> = (0..3)
            .map(|i| StateSample {
                t: i as f64 * 0.5,
                rho: RealField::constant(&g, 0.5),
                v: vec![RealField::zeros(&g)],
            })
            .collect();
        let rep = level_set_report(&samples, 1.0, 2.0, &ex).unwrap();
        assert!(rep.measure_series.iter().all(|&m| (m - 2.0 * PI).abs() < 1e-12));
        let rep = level_set_report(&samples, 1.0, 2.5, &ex).unwrap();
        assert!(rep.measure_series.iter().all(|&m| m == 0.0));
        assert_eq!(rep.mu_k, 0.0);
        assert_eq!(rep.q_norm, 0.0);
        assert!(LevelSetExponents::new(2.0, 1.0, 1).is_err());
        assert!(level_set_report(&samples, 1.0, 0.5, &ex).is_err());
    }

    #[test]
    fn degiorgi_reference_case() {
        let r = degiorgi_recursion(1.0, 2.0, 1.0, 0.4, 6).unwrap();
        assert!((r.theta - 0.5).abs() < 1e-15);
        assert!(r.vanishes);
        let geo = r.geometric.as_ref().unwrap();
        for (n, (&bnd, &g)) in r.bounds.iter().zip(geo).enumerate() {
            assert!((g - 0.5 * 0.5f64.powi(n as i32)).abs() < 1e-15);
            assert!(bnd <= g * (1.0 + 1e-12));
        }
        let z = degiorgi_recursion(3.0, 2.0, 0.5, 0.0, 5).unwrap();
        assert!(z.bounds.iter().all(|&b| b == 0.0) && z.vanishes);
        assert!(!degiorgi_recursion(0.5, 1.0, 1.0, 1e-6, 5).unwrap().vanishes);
        assert!(degiorgi_recursion(0.5, 0.9, 1.0, 1e-6, 5).is_err());
    }

    #[test]
    fn degiorgi_saturation() {
        for &(c, b, eps, y0) in &[(1.0, 2.0, 1.0, 0.4), (0.7, 1.5, 0.5, 0.2), (2.0, 1.0, 0.25, 0.3)] {
            let seq = saturating_sequence(c, b, eps, y0, 8);
            let rep = degiorgi_recursion(c, b, eps, y0, 8).unwrap();
            for (y, bound) in seq.iter().zip(&rep.bounds) {
                assert!((y - bound).abs() <= 1e-12 * bound.abs().max(1e-300), "{y} {bound}");
            }
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let mut buf = Vec::new();
        write_csv(&[record(0.0, 1.0, 0.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
        assert_eq!(lines.next().unwrap().split(',').count(), 14);
    }
}
