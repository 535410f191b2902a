//! Explicit lower bound on the existence time in terms of Besov norms of the
//! data, the smallness parameter it is built on, and the greedy restart
//! schedule used to continue a solution past one lifespan.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::RealField;
use crate::lp_besov::{besov_norm_vector, BesovSpec, BumpPair};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifespanError {
    #[error("invalid lifespan input: {0}")]
    Invalid(String),
    #[error("schedule stalled at t = {t}: lifespan bound {bound:e} below floor {floor:e}")]
    ScheduleStall { t: f64, bound: f64, floor: f64 },
    #[error("norm evaluation failed: {0}")]
    Norms(String),
}

/// Absolute constants of the bound and the two small parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifespanConstants {
    /// `C`.
    pub c_big: f64,
    /// `C1`.
    pub c1: f64,
    /// `c`.
    pub c_small: f64,
    pub mu: f64,
    /// Smallness parameter `ε`.
    pub eps: f64,
    /// Regularity offset `ε'` of the surcritical norms, in `(0, 1)`.
    pub eps_prime: f64,
}

impl Default for LifespanConstants {
    fn default() -> Self {
        Self {
            c_big: 1.0,
            c1: 1.0,
            c_small: 1.0,
            mu: 1.0,
            eps: 1.0,
            eps_prime: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifespanInputs {
    /// `‖q0‖_{B^{N/p}_{p,1}}`.
    pub norm_q0_crit: f64,
    /// `‖v0‖_{B^{N/p−1}_{p,1}}`.
    pub norm_v0_crit: f64,
    /// `‖q0‖_{B^{N/p+ε'}_{p,1}}`.
    pub norm_q0_sur: f64,
    /// `‖v0‖_{B^{N/p−1+ε'}_{p,1}}`.
    pub norm_v0_sur: f64,
    pub constants: LifespanConstants,
    pub dim: usize,
    pub p: f64,
}

impl LifespanInputs {
    /// Unit norms and constants.
    pub fn unit(dim: usize, p: f64) -> Self {
        Self {
            norm_q0_crit: 1.0,
            norm_v0_crit: 1.0,
            norm_q0_sur: 1.0,
            norm_v0_sur: 1.0,
            constants: LifespanConstants::default(),
            dim,
            p,
        }
    }

    pub fn a0(&self) -> f64 {
        self.norm_q0_crit + self.norm_v0_crit
    }

    /// Open interval `(N/(1−ε'), 2N)` of admissible `p`.
    pub fn p_interval(&self) -> (f64, f64) {
        let n = self.dim as f64;
        let ep = self.constants.eps_prime;
        (n / (1.0 - ep), 2.0 * n)
    }

    pub fn p_admissible(&self) -> bool {
        let (lo, hi) = self.p_interval();
        self.p > lo && self.p < hi
    }

    pub fn validate(&self) -> Result<(), LifespanError> {
        let norms = [
            ("norm_q0_crit", self.norm_q0_crit),
            ("norm_v0_crit", self.norm_v0_crit),
            ("norm_q0_sur", self.norm_q0_sur),
            ("norm_v0_sur", self.norm_v0_sur),
        ];
        for (name, v) in norms {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LifespanError::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        let c = &self.constants;
        let consts = [
            ("C", c.c_big),
            ("C1", c.c1),
            ("c", c.c_small),
            ("mu", c.mu),
            ("eps", c.eps),
        ];
        for (name, v) in consts {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LifespanError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(c.eps_prime > 0.0 && c.eps_prime <= 1.0) {
            return Err(LifespanError::Invalid(format!(
                "eps_prime must lie in (0, 1], got {}",
                c.eps_prime
            )));
        }
        if !(self.p >= 1.0) || self.dim == 0 {
            return Err(LifespanError::Invalid(format!("need p >= 1 and N >= 1, got p = {}", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SurcriticalQ,
    SurcriticalV,
    C1Quarter,
    A0,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch::SurcriticalQ,
        Branch::SurcriticalV,
        Branch::C1Quarter,
        Branch::A0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Branch::SurcriticalQ => "surcritical_q",
            Branch::SurcriticalV => "surcritical_v",
            Branch::C1Quarter => "c1_quarter",
            Branch::A0 => "a0",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanReport {
    pub inputs: LifespanInputs,
    pub a0: f64,
    /// Branch values in the order of [`Branch::ALL`]; `None` is `+∞`.
    pub branches: [Option<f64>; 4],
    pub active: Branch,
    pub t: f64,
    pub p_interval: (f64, f64),
    pub p_admissible: bool,
}

/// `2(cμ)^{2/ε'−1} ε^{2/ε'} / ((8C)^{2/ε'} ‖·‖^{2/ε'})`, evaluated in logs.
fn surcritical(norm: f64, c: &LifespanConstants) -> f64 {
    if norm == 0.0 {
        return f64::INFINITY;
    }
    let e = 2.0 / c.eps_prime;
    (2f64.ln() + (e - 1.0) * (c.c_small * c.mu).ln() + e * (c.eps.ln() - (8.0 * c.c_big).ln() - norm.ln()))
        .exp()
}

/// `1 / (16 C1² A0 (1+√A0)²)`.
fn a0_branch(a0: f64, c1: f64) -> f64 {
    if a0 == 0.0 {
        return f64::INFINITY;
    }
    let s = 1.0 + a0.sqrt();
    1.0 / (16.0 * c1 * c1 * a0 * s * s)
}

pub fn branch_values(inp: &LifespanInputs) -> [f64; 4] {
    let c = &inp.constants;
    [
        surcritical(inp.norm_q0_sur, c),
        surcritical(inp.norm_v0_sur, c),
        c.c1 / 4.0,
        a0_branch(inp.a0(), c.c1),
    ]
}

/// `T = min(surcritical_q, surcritical_v, C1/4, 1/(16C1²A0(1+√A0)²))`.
pub fn lifespan_lower_bound(inp: &LifespanInputs) -> Result<LifespanReport, LifespanError> {
    inp.validate()?;
    let values = branch_values(inp);
    let (idx, &t) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("four branches");
    Ok(LifespanReport {
        inputs: *inp,
        a0: inp.a0(),
        branches: values.map(|v| v.is_finite().then_some(v)),
        active: Branch::ALL[idx],
        t,
        p_interval: inp.p_interval(),
        p_admissible: inp.p_admissible(),
    })
}

/// Largest `√ε` with `√ε ≤ 1/(4C1(1 + 2√A0 + A0))`.
pub fn epsilon_from_data(a0: f64, c1: f64) -> Result<f64, LifespanError> {
    if !(a0 >= 0.0 && c1 > 0.0) {
        return Err(LifespanError::Invalid(format!("need A0 >= 0 and C1 > 0, got {a0}, {c1}")));
    }
    Ok(1.0 / (4.0 * c1 * (1.0 + 2.0 * a0.sqrt() + a0)))
}

/// Besov norms of `(q0, v0)` entering the bound.
pub fn inputs_from_data(
    q0: &RealField,
    v0: &[RealField],
    p: f64,
    constants: LifespanConstants,
    bumps: &BumpPair,
) -> Result<LifespanInputs, LifespanError> {
    let dim = q0.grid().dim();
    let s = dim as f64 / p;
    let ep = constants.eps_prime;
    let spec = |s: f64| BesovSpec::new(s, p, 1.0).map_err(|e| LifespanError::Norms(e.to_string()));
    let q = std::slice::from_ref(q0);
    Ok(LifespanInputs {
        norm_q0_crit: besov_norm_vector(q, &spec(s)?, bumps),
        norm_v0_crit: besov_norm_vector(v0, &spec(s - 1.0)?, bumps),
        norm_q0_sur: besov_norm_vector(q, &spec(s + ep)?, bumps),
        norm_v0_sur: besov_norm_vector(v0, &spec(s - 1.0 + ep)?, bumps),
        constants,
        dim,
        p,
    })
}

/// Midpoint of the admissible interval `(N/(1−ε'), 2N)`.
pub fn default_p(dim: usize, eps_prime: f64) -> f64 {
    let n = dim as f64;
    0.5 * (n / (1.0 - eps_prime) + 2.0 * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub t: f64,
    pub lifespan: f64,
    pub active: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Fraction of each lifespan bound used before restarting.
    pub fraction: f64,
    /// Bounds below this abort the schedule.
    pub floor: f64,
    pub max_restarts: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            floor: 1e-10,
            max_restarts: 100_000,
        }
    }
}

/// Greedy restart times: at each checkpoint `t_i` evaluate the bound `T_i`
/// from the state there and advance to `t_i + fraction·T_i`, until the
/// horizon is covered.
pub fn restart_schedule<F>(
    mut norms_at: F,
    horizon: f64,
    cfg: &ScheduleConfig,
) -> Result<Vec<ScheduleEntry>, LifespanError>
where
    F: FnMut(f64) -> Result<LifespanInputs, LifespanError>,
{
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(LifespanError::Invalid(format!(
            "fraction must lie in (0, 1], got {}",
            cfg.fraction
        )));
    }
    let mut out = Vec::new();
    let mut t = 0.0;
    // slack keeps rounding in the accumulated times from adding a sliver step
    let end = horizon * (1.0 - 1e-12);
    while t < end {
        if out.len() >= cfg.max_restarts {
            return Err(LifespanError::ScheduleStall {
                t,
                bound: out.last().map(|e: &ScheduleEntry| e.lifespan).unwrap_or(0.0),
                floor: cfg.floor,
            });
        }
        let rep = lifespan_lower_bound(&norms_at(t)?)?;
        if !(rep.t >= cfg.floor) {
            return Err(LifespanError::ScheduleStall {
                t,
                bound: rep.t,
                floor: cfg.floor,
            });
        }
        out.push(ScheduleEntry {
            t,
            lifespan: rep.t,
            active: rep.active,
        });
        t += cfg.fraction * rep.t;
    }
    Ok(out)
}
