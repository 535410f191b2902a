//! Physical parameters, state bundles, the Korteweg capillary term and the
//! right-hand sides of the primitive `(ρ, u)` and effective `(q, v)`
//! formulations.
//!
//! Viscosity is `μ(ρ) = 2μρ`, `λ(ρ) = 0`, capillarity `κ(ρ) = κ/ρ` and the
//! pressure law is `P(ρ) = a ρ^γ`. The effective unknowns are
//! `q = ln(ρ/ρ̄)` and `v = u + μ∇ln ρ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{
    self, dealias_real, grad, hessian, inverse_transform, transform, FieldError, Grid, RealField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("vacuum: min density {min_rho:e} is not above {floor:e}")]
    Vacuum { min_rho: f64, floor: f64 },
    #[error("invalid parameters: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Tolerance of the quantum relation `κ = μ²`.
pub const QUANTUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysParams {
    pub mu: f64,
    pub kappa: f64,
    pub a: f64,
    pub gamma: f64,
    pub rho_bar: f64,
}

impl Default for PhysParams {
    /// Quantum case `κ = μ²` with isothermal pressure.
    fn default() -> Self {
        Self {
            mu: 0.1,
            kappa: 0.01,
            a: 1.0,
            gamma: 1.0,
            rho_bar: 1.0,
        }
    }
}

impl PhysParams {
    pub fn new(mu: f64, kappa: f64, a: f64, gamma: f64, rho_bar: f64) -> Result<Self, ModelError> {
        let p = Self {
            mu,
            kappa,
            a,
            gamma,
            rho_bar,
        };
        p.validate()?;
        Ok(p)
    }

    /// Quantum parameters `κ = μ²`.
    pub fn quantum(mu: f64, a: f64, gamma: f64, rho_bar: f64) -> Result<Self, ModelError> {
        Self::new(mu, mu * mu, a, gamma, rho_bar)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks = [
            ("mu", self.mu),
            ("kappa", self.kappa),
            ("a", self.a),
            ("rho_bar", self.rho_bar),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 1.0) {
            return Err(ModelError::Config(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn is_quantum(&self) -> bool {
        (self.kappa - self.mu * self.mu).abs() <= QUANTUM_TOL
    }

    /// Whether `γ` lies in the range admitted for global existence in
    /// dimension `dim`: any `γ ≥ 1` for `N ≤ 2`, `1 ≤ γ < 7/3` for `N = 3`,
    /// `γ = 1` for `N ≥ 4`.
    pub fn gamma_admissible(&self, dim: usize) -> bool {
        match dim {
            0..=2 => self.gamma >= 1.0,
            3 => self.gamma >= 1.0 && self.gamma < 7.0 / 3.0,
            _ => self.gamma == 1.0,
        }
    }

    pub fn pressure_at(&self, rho: f64) -> f64 {
        self.a * rho.powf(self.gamma)
    }

    /// `P'(ρ) = aγρ^{γ-1}`.
    pub fn pressure_derivative_at(&self, rho: f64) -> f64 {
        self.a * self.gamma * rho.powf(self.gamma - 1.0)
    }
}

/// Density-dependent capillarity `κ(ρ) = coeff · ρ^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capillarity {
    pub coeff: f64,
    pub exponent: f64,
}

impl Capillarity {
    /// The quantum choice `κ(ρ) = κ₁/ρ`.
    pub fn quantum(kappa1: f64) -> Self {
        Self {
            coeff: kappa1,
            exponent: -1.0,
        }
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.coeff * rho.powf(self.exponent)
    }

    pub fn derivative(&self, rho: f64) -> f64 {
        self.coeff * self.exponent * rho.powf(self.exponent - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveState {
    pub rho: RealField,
    pub u: Vec<RealField>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveState {
    pub q: RealField,
    pub v: Vec<RealField>,
}

impl PrimitiveState {
    pub fn new(rho: RealField, u: Vec<RealField>) -> Result<Self, ModelError> {
        check_components(&rho, &u)?;
        Ok(Self { rho, u })
    }

    /// Uniform state `(ρ̄, 0)`.
    pub fn equilibrium(grid: &Grid, p: &PhysParams) -> Self {
        Self {
            rho: RealField::constant(grid, p.rho_bar),
            u: vec![RealField::zeros(grid); grid.dim()],
        }
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    pub fn components(&self) -> Vec<RealField> {
        std::iter::once(self.rho.clone()).chain(self.u.iter().cloned()).collect()
    }

    pub fn from_components(mut c: Vec<RealField>) -> Self {
        let rho = c.remove(0);
        Self { rho, u: c }
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.min()
    }
}

impl EffectiveState {
    pub fn new(q: RealField, v: Vec<RealField>) -> Result<Self, ModelError> {
        check_components(&q, &v)?;
        Ok(Self { q, v })
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }

    pub fn components(&self) -> Vec<RealField> {
        std::iter::once(self.q.clone()).chain(self.v.iter().cloned()).collect()
    }

    pub fn from_components(mut c: Vec<RealField>) -> Self {
        let q = c.remove(0);
        Self { q, v: c }
    }

    /// Reconstructed density `ρ̄ e^q`, positive by construction.
    pub fn density(&self, p: &PhysParams) -> RealField {
        self.q.map(|q| p.rho_bar * q.exp())
    }
}

fn check_components(s: &RealField, v: &[RealField]) -> Result<(), ModelError> {
    if v.len() != s.grid().dim() {
        return Err(ModelError::Config(format!(
            "vector has {} components on a {}-d grid",
            v.len(),
            s.grid().dim()
        )));
    }
    for c in v {
        s.same_grid(c)?;
    }
    Ok(())
}

pub(crate) fn require_positive(rho: &RealField, floor: f64) -> Result<(), ModelError> {
    let m = rho.min();
    if m.is_nan() {
        return Err(ModelError::NonFinite("density".into()));
    }
    if m <= floor {
        return Err(ModelError::Vacuum { min_rho: m, floor });
    }
    Ok(())
}

/// Product of two fields, projected on the 2/3 band when `dealias` is set.
fn product(a: &RealField, b: &RealField, dealias: bool) -> RealField {
    let p = a.mul(b);
    if dealias {
        dealias_real(&p)
    } else {
        p
    }
}

fn maybe_dealias(f: RealField, dealias: bool) -> RealField {
    if dealias {
        dealias_real(&f)
    } else {
        f
    }
}

/// Korteweg term in its original form
/// `∇(ρκ(ρ)Δρ + ½(κ(ρ)+ρκ'(ρ))|∇ρ|²) − div(κ(ρ)∇ρ⊗∇ρ)`.
pub fn div_k_form_a(rho: &RealField, cap: &Capillarity) -> Result<Vec<RealField>, ModelError> {
    div_k_form_a_with(rho, cap, true)
}

pub fn div_k_form_a_with(
    rho: &RealField,
    cap: &Capillarity,
    dealias: bool,
) -> Result<Vec<RealField>, ModelError> {
    require_positive(rho, 0.0)?;
    let grid = rho.grid();
    let d = grid.dim();
    let g = grad(rho);
    let lap = fields::laplacian(rho);
    let kappa = rho.map(|r| cap.value(r));
    let half_coeff = rho.map(|r| 0.5 * (cap.value(r) + r * cap.derivative(r)));
    let grad_sq = g.iter().fold(RealField::zeros(grid), |acc, c| acc.add(&c.mul(c)));
    let rho_kappa = rho.mul(&kappa);
    let scalar = product(&rho_kappa, &lap, dealias).add(&product(&half_coeff, &grad_sq, dealias));
    let grad_scalar = grad(&scalar);
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        // i-th component of div(κ ∇ρ⊗∇ρ) = Σ_j ∂_j (κ ∂_iρ ∂_jρ)
        let flux: Vec<RealField> = (0..d)
            .map(|j| maybe_dealias(kappa.mul(&g[i]).mul(&g[j]), dealias))
            .collect();
        let div_flux = fields::div(&flux)?;
        out.push(grad_scalar[i].sub(&div_flux));
    }
    Ok(out)
}

/// Korteweg term in viscosity-tensor form `κ div(ρ ∇∇ ln ρ)`.
pub fn div_k_form_b(rho: &RealField, kappa: f64) -> Result<Vec<RealField>, ModelError> {
    div_k_form_b_with(rho, kappa, true)
}

pub fn div_k_form_b_with(
    rho: &RealField,
    kappa: f64,
    dealias: bool,
) -> Result<Vec<RealField>, ModelError> {
    require_positive(rho, 0.0)?;
    let d = rho.grid().dim();
    let h = hessian(&rho.map(f64::ln));
    let mut out = Vec::with_capacity(d);
    for row in h.iter() {
        let flux: Vec<RealField> = row.iter().map(|hij| product(rho, hij, dealias)).collect();
        out.push(fields::div(&flux)?.scale(kappa));
    }
    Ok(out)
}

/// Equivalent expression `κ ρ (∇Δ ln ρ + ½∇|∇ ln ρ|²)`.
pub fn div_k_remark_form(rho: &RealField, kappa: f64) -> Result<Vec<RealField>, ModelError> {
    require_positive(rho, 0.0)?;
    let grid = rho.grid();
    let l = rho.map(f64::ln);
    let gl = grad(&l);
    let half_sq = gl
        .iter()
        .fold(RealField::zeros(grid), |acc, c| acc.add(&c.mul(c)))
        .scale(0.5);
    let grad_lap = grad(&fields::laplacian(&l));
    let grad_half = grad(&half_sq);
    Ok(grad_lap
        .iter()
        .zip(&grad_half)
        .map(|(a, b)| rho.mul(&a.add(b)).scale(kappa))
        .collect())
}

pub fn pressure(rho: &RealField, p: &PhysParams) -> Result<RealField, ModelError> {
    require_positive(rho, 0.0)?;
    Ok(rho.map(|r| p.pressure_at(r)))
}

pub fn to_effective(s: &PrimitiveState, p: &PhysParams) -> Result<EffectiveState, ModelError> {
    require_positive(&s.rho, 0.0)?;
    let q = s.rho.map(|r| (r / p.rho_bar).ln());
    let gq = grad(&q);
    let v = s.u.iter().zip(&gq).map(|(u, g)| u.axpy(p.mu, g)).collect();
    Ok(EffectiveState { q, v })
}

pub fn from_effective(e: &EffectiveState, p: &PhysParams) -> PrimitiveState {
    let rho = e.density(p);
    let gq = grad(&e.q);
    let u = e.v.iter().zip(&gq).map(|(v, g)| v.axpy(-p.mu, g)).collect();
    PrimitiveState { rho, u }
}

/// Options shared by both right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsOptions {
    pub dealias: bool,
    /// Density must stay strictly above this value.
    pub vacuum_floor: f64,
}

impl Default for RhsOptions {
    fn default() -> Self {
        Self {
            dealias: true,
            vacuum_floor: 0.0,
        }
    }
}

fn dot_grad(w: &[RealField], f_grad: &[RealField], dealias: bool) -> RealField {
    let grid = w[0].grid();
    maybe_dealias(
        w.iter()
            .zip(f_grad)
            .fold(RealField::zeros(grid), |acc, (a, b)| acc.add(&a.mul(b))),
        dealias,
    )
}

/// Time derivative `(∂tρ, ∂tu)` of the primitive system with the momentum
/// equation divided by `ρ`.
pub fn rhs_primitive(s: &PrimitiveState, p: &PhysParams) -> Result<PrimitiveState, ModelError> {
    rhs_primitive_with(s, p, &RhsOptions::default())
}

pub fn rhs_primitive_with(
    s: &PrimitiveState,
    p: &PhysParams,
    opts: &RhsOptions,
) -> Result<PrimitiveState, ModelError> {
    require_positive(&s.rho, opts.vacuum_floor)?;
    let dl = opts.dealias;
    let d = s.grid().dim();

    let mass_flux: Vec<RealField> = s.u.iter().map(|u| product(&s.rho, u, dl)).collect();
    let drho = fields::div(&mass_flux)?.scale(-1.0);

    let ln_rho = s.rho.map(f64::ln);
    let g_ln = grad(&ln_rho);
    let spectral_u: Vec<_> = s.u.iter().map(transform).collect();
    // grad_u[i][j] = ∂_j u_i
    let grad_u: Vec<Vec<RealField>> = spectral_u
        .iter()
        .map(|su| (0..d).map(|j| inverse_transform(&su.derivative(j))).collect())
        .collect();
    let div_u_hat = spectral_u
        .iter()
        .enumerate()
        .fold(fields::SpectralField::zeros(s.grid()), |acc, (j, su)| {
            acc.add(&su.derivative(j))
        });
    let grad_div_u: Vec<RealField> =
        (0..d).map(|i| inverse_transform(&div_u_hat.derivative(i))).collect();
    let div_k = div_k_form_b_with(&s.rho, p.kappa, dl)?;
    // ∇P/ρ = P'(ρ) ∇ln ρ
    let dp = s.rho.map(|r| p.pressure_derivative_at(r));

    let mut du = Vec::with_capacity(d);
    for i in 0..d {
        let advection = dot_grad(&s.u, &grad_u[i], dl);
        let lap_ui = inverse_transform(&spectral_u[i].laplacian());
        // Σ_j ∂_j ln ρ (∂_j u_i + ∂_i u_j)
        let strain_coupling = maybe_dealias(
            (0..d).fold(RealField::zeros(s.grid()), |acc, j| {
                acc.add(&g_ln[j].mul(&grad_u[i][j].add(&grad_u[j][i])))
            }),
            dl,
        );
        let viscous = lap_ui.add(&grad_div_u[i]).add(&strain_coupling).scale(p.mu);
        let pressure_term = product(&dp, &g_ln[i], dl);
        let capillary = maybe_dealias(div_k[i].zip_map(&s.rho, |k, r| k / r), dl);
        let rhs = advection
            .scale(-1.0)
            .add(&viscous)
            .sub(&pressure_term)
            .add(&capillary);
        rhs.check_finite("momentum right-hand side")
            .map_err(|_| ModelError::NonFinite("momentum right-hand side".into()))?;
        du.push(rhs);
    }
    drho.check_finite("mass right-hand side")
        .map_err(|_| ModelError::NonFinite("mass right-hand side".into()))?;
    Ok(PrimitiveState { rho: drho, u: du })
}

/// Time derivative `(∂tq, ∂tv)` of the effective system
/// `∂tq − μΔq + u·∇q + div v = 0`,
/// `∂tv + u·∇v − μΔv − μ∇q·∇v + ∇P(ρ)/ρ − (κ−μ²)(∇Δq + ½∇|∇q|²) = 0`
/// with `u = v − μ∇q`.
pub fn rhs_effective(e: &EffectiveState, p: &PhysParams) -> Result<EffectiveState, ModelError> {
    rhs_effective_with(e, p, &RhsOptions::default())
}

pub fn rhs_effective_with(
    e: &EffectiveState,
    p: &PhysParams,
    opts: &RhsOptions,
) -> Result<EffectiveState, ModelError> {
    let excess = p.kappa - p.mu * p.mu;
    if excess < -QUANTUM_TOL {
        return Err(ModelError::Config(format!(
            "effective formulation needs kappa >= mu^2 (kappa = {}, mu^2 = {})",
            p.kappa,
            p.mu * p.mu
        )));
    }
    if opts.vacuum_floor > 0.0 {
        require_positive(&e.density(p), opts.vacuum_floor)?;
    }
    let dl = opts.dealias;
    let grid = e.grid().clone();
    let d = grid.dim();
    let sq = transform(&e.q);
    let gq: Vec<RealField> = (0..d).map(|i| inverse_transform(&sq.derivative(i))).collect();
    let lap_q = inverse_transform(&sq.laplacian());
    let u: Vec<RealField> = e.v.iter().zip(&gq).map(|(v, g)| v.axpy(-p.mu, g)).collect();
    let div_v = fields::div(&e.v)?;

    let dq = lap_q
        .scale(p.mu)
        .sub(&dot_grad(&u, &gq, dl))
        .sub(&div_v);
    dq.check_finite("q").map_err(|_| ModelError::NonFinite("q right-hand side".into()))?;

    // ∇P/ρ = aγ ρ^{γ-1} ∇q
    let pressure_coeff = if p.gamma == 1.0 {
        None
    } else {
        Some(e.q.map(|q| p.pressure_derivative_at(p.rho_bar * q.exp())))
    };
    let capillary: Option<Vec<RealField>> = if excess.abs() > QUANTUM_TOL {
        let half_sq = maybe_dealias(
            gq.iter()
                .fold(RealField::zeros(&grid), |acc, c| acc.add(&c.mul(c)))
                .scale(0.5),
            dl,
        );
        let s_lap = sq.laplacian();
        let s_half = transform(&half_sq);
        Some(
            (0..d)
                .map(|i| {
                    inverse_transform(&s_lap.derivative(i).add(&s_half.derivative(i)))
                        .scale(excess)
                })
                .collect(),
        )
    } else {
        None
    };

    let mut dv = Vec::with_capacity(d);
    for i in 0..d {
        let sv = transform(&e.v[i]);
        let gv: Vec<RealField> = (0..d).map(|j| inverse_transform(&sv.derivative(j))).collect();
        let lap_v = inverse_transform(&sv.laplacian());
        let pressure_term = match &pressure_coeff {
            None => gq[i].scale(p.a),
            Some(c) => product(c, &gq[i], dl),
        };
        let mut rhs = lap_v
            .scale(p.mu)
            .sub(&dot_grad(&u, &gv, dl))
            .add(&dot_grad(&gq, &gv, dl).scale(p.mu))
            .sub(&pressure_term);
        if let Some(c) = &capillary {
            rhs = rhs.add(&c[i]);
        }
        rhs.check_finite("v").map_err(|_| ModelError::NonFinite("v right-hand side".into()))?;
        dv.push(rhs);
    }
    Ok(EffectiveState { q: dq, v: dv })
}
