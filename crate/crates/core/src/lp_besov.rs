//! Littlewood–Paley decomposition on the torus, Besov and time-integrated
//! ("tilde") Besov norms, Bony's paraproduct splitting and the heat-flow
//! block decay check.
//!
//! Frequencies are physical, `ξ = 2πk/L`. The mean mode is kept apart from
//! the dyadic blocks; blocks run over every `l` whose annulus
//! `2^l [3/4, 8/3]` meets a resolved nonzero frequency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{inverse_transform, transform, FieldError, Grid, RealField, SpectralField};

pub const CHI_PLATEAU: f64 = 0.75;
pub const CHI_EDGE: f64 = 4.0 / 3.0;
pub const ANNULUS_INNER: f64 = 0.75;
pub const ANNULUS_OUTER: f64 = 8.0 / 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BesovError {
    #[error("bump resolution {0} is below the minimum of 64 samples per unit")]
    Resolution(usize),
    #[error("invalid Besov exponents: {0}")]
    Spec(String),
    #[error("empty time series")]
    EmptySeries,
    #[error("invalid time grid: {0}")]
    TimeGrid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn glue(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth radial cutoff: 1 on `[0, 3/4]`, 0 on `[4/3, ∞)`, nonincreasing.
pub fn chi(r: f64) -> f64 {
    let r = r.abs();
    if r <= CHI_PLATEAU {
        1.0
    } else if r >= CHI_EDGE {
        0.0
    } else {
        let t = (r - CHI_PLATEAU) / (CHI_EDGE - CHI_PLATEAU);
        let a = glue(1.0 - t);
        a / (a + glue(t))
    }
}

/// Annulus profile `φ(ξ) = χ(ξ/2) − χ(ξ)`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// Tabulated `χ` and `φ` on `[0, 4]` together with the analytic profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpPair {
    resolution: usize,
    pub radii: Vec<f64>,
    pub chi: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn build_bumps(resolution: usize) -> Result<BumpPair, BesovError> {
    if resolution < 64 {
        return Err(BesovError::Resolution(resolution));
    }
    let count = 4 * resolution + 1;
    let radii: Vec<f64> = (0..count).map(|i| i as f64 / resolution as f64).collect();
    Ok(BumpPair {
        resolution,
        chi: radii.iter().map(|&r| chi(r)).collect(),
        phi: radii.iter().map(|&r| phi(r)).collect(),
        radii,
    })
}

impl Default for BumpPair {
    fn default() -> Self {
        build_bumps(256).expect("default resolution is valid")
    }
}

impl BumpPair {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn chi(&self, r: f64) -> f64 {
        chi(r)
    }

    pub fn phi(&self, r: f64) -> f64 {
        phi(r)
    }

    /// `Σ_l φ(2^{-l} r)` over every `l` whose term can be nonzero.
    pub fn partition_sum(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let lo = (r / ANNULUS_OUTER).log2().floor() as i32 - 1;
        let hi = (r / ANNULUS_INNER).log2().ceil() as i32 + 1;
        (lo..=hi).map(|l| phi(r * 2f64.powi(-l))).sum()
    }
}

/// Lowest and highest block indices needed to resolve every nonzero mode.
pub fn block_range(grid: &Grid) -> (i32, i32) {
    let lo = (CHI_PLATEAU * grid.k_unit()).log2().floor() as i32;
    // Smallest l with 2^{l+1} · 3/4 ≥ k_max, so that S_{l+1} is the identity.
    let hi = (grid.k_max() / CHI_PLATEAU).log2().ceil() as i32 - 1;
    (lo, hi.max(lo))
}

/// Whether block `l` reaches past the axis Nyquist frequency.
pub fn is_boundary_block(grid: &Grid, l: i32) -> bool {
    let nyquist = grid.n() as f64 / 2.0 * grid.k_unit();
    2f64.powi(l) * ANNULUS_OUTER > nyquist
}

fn block_symbol(s: &SpectralField, l: i32) -> SpectralField {
    let g = s.grid().clone();
    let scale = 2f64.powi(-l);
    s.apply_real(|idx| {
        let k = g.k_norm(idx);
        if k == 0.0 {
            0.0
        } else {
            phi(k * scale)
        }
    })
}

fn low_symbol(s: &SpectralField, l: i32) -> SpectralField {
    let g = s.grid().clone();
    let scale = 2f64.powi(-l);
    s.apply_real(|idx| chi(g.k_norm(idx) * scale))
}

/// Dyadic blocks `Δ_l f = φ(2^{-l}D) f` of one or more component fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDecomposition {
    pub l_min: i32,
    pub l_max: i32,
    /// `blocks[l - l_min][component]`.
    pub blocks: Vec<Vec<RealField>>,
    /// Mean value per component.
    pub mean: Vec<f64>,
}

impl DyadicDecomposition {
    pub fn block(&self, l: i32) -> Option<&[RealField]> {
        if l < self.l_min || l > self.l_max {
            None
        } else {
            Some(&self.blocks[(l - self.l_min) as usize])
        }
    }

    pub fn levels(&self) -> impl Iterator<Item = i32> {
        self.l_min..=self.l_max
    }

    /// `mean + Σ_l Δ_l f` for component `c`.
    pub fn reconstruct(&self, c: usize) -> RealField {
        let grid = self.blocks[0][c].grid().clone();
        self.blocks
            .iter()
            .fold(RealField::constant(&grid, self.mean[c]), |acc, b| acc.add(&b[c]))
    }

    /// `L^p` norm of each block (Euclidean norm over components pointwise).
    pub fn block_lp_norms(&self, p: f64) -> Vec<f64> {
        self.blocks.iter().map(|b| vector_lp_norm(b, p)).collect()
    }
}

pub(crate) fn vector_lp_norm(v: &[RealField], p: f64) -> f64 {
    if v.len() == 1 {
        v[0].lp_norm(p)
    } else {
        crate::fields::pointwise_norm(v).lp_norm(p)
    }
}

pub fn decompose(f: &RealField, bumps: &BumpPair) -> DyadicDecomposition {
    decompose_vector(std::slice::from_ref(f), bumps)
}

pub fn decompose_vector(f: &[RealField], _bumps: &BumpPair) -> DyadicDecomposition {
    let spectra: Vec<SpectralField> = f.iter().map(transform).collect();
    decompose_spectral(&spectra)
}

pub fn decompose_spectral(spectra: &[SpectralField]) -> DyadicDecomposition {
    let grid = spectra[0].grid().clone();
    let (l_min, l_max) = block_range(&grid);
    let blocks = (l_min..=l_max)
        .map(|l| spectra.iter().map(|s| inverse_transform(&block_symbol(s, l))).collect())
        .collect();
    let mean = spectra
        .iter()
        .map(|s| s.coeffs()[0].re / grid.len() as f64)
        .collect();
    DyadicDecomposition {
        l_min,
        l_max,
        blocks,
        mean,
    }
}

/// Low-frequency cutoff `S_l f = χ(2^{-l}D) f`, mean included.
pub fn low_pass(f: &RealField, l: i32) -> RealField {
    inverse_transform(&low_symbol(&transform(f), l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub s: f64,
    pub p: f64,
    pub r: f64,
}

impl BesovSpec {
    pub fn new(s: f64, p: f64, r: f64) -> Result<Self, BesovError> {
        let spec = Self { s, p, r };
        spec.validate()?;
        Ok(spec)
    }

    /// Critical index `s = N/p` with `r = 1`.
    pub fn critical(dim: usize, p: f64) -> Self {
        Self {
            s: dim as f64 / p,
            p,
            r: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), BesovError> {
        if !self.s.is_finite() {
            return Err(BesovError::Spec(format!("s must be finite, got {}", self.s)));
        }
        if self.p.is_nan() || self.p < 1.0 {
            return Err(BesovError::Spec(format!("p must be >= 1, got {}", self.p)));
        }
        if self.r.is_nan() || self.r < 1.0 {
            return Err(BesovError::Spec(format!("r must be >= 1, got {}", self.r)));
        }
        Ok(())
    }

    pub fn with_s(self, s: f64) -> Self {
        Self { s, ..self }
    }
}

/// One line of a Besov norm report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockNorm {
    pub l: i32,
    pub block_norm: f64,
    pub weighted: f64,
    pub boundary: bool,
}

pub(crate) fn lr_sum(values: impl Iterator<Item = f64>, r: f64) -> f64 {
    if r.is_infinite() {
        values.fold(0.0, f64::max)
    } else if r == 1.0 {
        values.sum()
    } else {
        values.map(|x| x.powf(r)).sum::<f64>().powf(1.0 / r)
    }
}

fn weighted_blocks(d: &DyadicDecomposition, grid: &Grid, spec: &BesovSpec) -> Vec<BlockNorm> {
    d.levels()
        .zip(d.block_lp_norms(spec.p))
        .map(|(l, norm)| BlockNorm {
            l,
            block_norm: norm,
            weighted: 2f64.powf(l as f64 * spec.s) * norm,
            boundary: is_boundary_block(grid, l),
        })
        .collect()
}

pub fn besov_report(f: &[RealField], spec: &BesovSpec, bumps: &BumpPair) -> Vec<BlockNorm> {
    let d = decompose_vector(f, bumps);
    weighted_blocks(&d, f[0].grid(), spec)
}

/// `(Σ_l 2^{rls} ‖Δ_l f‖_{L^p}^r)^{1/r}` over the resolved blocks.
pub fn besov_norm(f: &RealField, spec: &BesovSpec, bumps: &BumpPair) -> f64 {
    besov_norm_vector(std::slice::from_ref(f), spec, bumps)
}

pub fn besov_norm_vector(f: &[RealField], spec: &BesovSpec, bumps: &BumpPair) -> f64 {
    lr_sum(besov_report(f, spec, bumps).into_iter().map(|b| b.weighted), spec.r)
}

pub fn besov_norm_spectral(spectra: &[SpectralField], spec: &BesovSpec) -> f64 {
    let d = decompose_spectral(spectra);
    lr_sum(
        weighted_blocks(&d, spectra[0].grid(), spec).into_iter().map(|b| b.weighted),
        spec.r,
    )
}

/// Trapezoid `L^σ` norm over a uniform grid of step `dt`; `σ = ∞` is the max.
pub(crate) fn time_norm(values: &[f64], dt: f64, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        return values.iter().cloned().fold(0.0, f64::max);
    }
    let m = values.len();
    if m < 2 {
        return 0.0;
    }
    let pow: Vec<f64> = values.iter().map(|v| v.powf(sigma)).collect();
    let integral = dt * (pow[1..m - 1].iter().sum::<f64>() + 0.5 * (pow[0] + pow[m - 1]));
    integral.powf(1.0 / sigma)
}

/// Per-block `L^σ_T L^p` norms of a uniformly sampled time series of
/// (vector) fields; `series[j]` holds the components at time `j·dt`.
pub fn tilde_block_norms(
    series: &[Vec<SpectralField>],
    dt: f64,
    sigma: f64,
    spec: &BesovSpec,
) -> Result<Vec<BlockNorm>, BesovError> {
    spec.validate()?;
    if series.is_empty() {
        return Err(BesovError::EmptySeries);
    }
    if !(dt > 0.0 && dt.is_finite()) && series.len() > 1 {
        return Err(BesovError::TimeGrid(format!("dt must be > 0, got {dt}")));
    }
    if sigma.is_nan() || sigma < 1.0 {
        return Err(BesovError::Spec(format!("sigma must be >= 1, got {sigma}")));
    }
    let grid = series[0][0].grid().clone();
    let per_time: Vec<Vec<f64>> = series
        .iter()
        .map(|s| decompose_spectral(s).block_lp_norms(spec.p))
        .collect();
    let (l_min, _) = block_range(&grid);
    let nblocks = per_time[0].len();
    Ok((0..nblocks)
        .map(|b| {
            let l = l_min + b as i32;
            let column: Vec<f64> = per_time.iter().map(|v| v[b]).collect();
            let norm = time_norm(&column, dt, sigma);
            BlockNorm {
                l,
                block_norm: norm,
                weighted: 2f64.powf(l as f64 * spec.s) * norm,
                boundary: is_boundary_block(&grid, l),
            }
        })
        .collect())
}

/// `‖ 2^{ls} ‖Δ_l f‖_{L^σ_T L^p} ‖_{ℓ^r}`: time integration happens per
/// block, before the `ℓ^r` sum.
pub fn tilde_norm(
    series: &[RealField],
    dt: f64,
    sigma: f64,
    spec: &BesovSpec,
    _bumps: &BumpPair,
) -> Result<f64, BesovError> {
    let spectral: Vec<Vec<SpectralField>> = series.iter().map(|f| vec![transform(f)]).collect();
    tilde_norm_spectral(&spectral, dt, sigma, spec)
}

pub fn tilde_norm_spectral(
    series: &[Vec<SpectralField>],
    dt: f64,
    sigma: f64,
    spec: &BesovSpec,
) -> Result<f64, BesovError> {
    let blocks = tilde_block_norms(series, dt, sigma, spec)?;
    Ok(lr_sum(blocks.into_iter().map(|b| b.weighted), spec.r))
}

/// Bony splitting `uv = T_u v + T_v u + R(u, v) + ū v̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct BonyParts {
    pub t_uv: RealField,
    pub t_vu: RealField,
    pub remainder: RealField,
    /// Product of the means, the part no block carries.
    pub mean_product: f64,
}

impl BonyParts {
    pub fn sum(&self) -> RealField {
        self.t_uv
            .add(&self.t_vu)
            .add(&self.remainder)
            .map(|x| x + self.mean_product)
    }
}

fn paraproduct(u_hat: &SpectralField, dv: &DyadicDecomposition) -> RealField {
    let grid = u_hat.grid().clone();
    dv.levels().fold(RealField::zeros(&grid), |acc, l| {
        let low = inverse_transform(&low_symbol(u_hat, l - 1));
        let block = &dv.block(l).expect("level in range")[0];
        acc.add(&low.mul(block))
    })
}

pub fn bony_decompose(
    u: &RealField,
    v: &RealField,
    bumps: &BumpPair,
) -> Result<BonyParts, BesovError> {
    u.same_grid(v)?;
    let du = decompose(u, bumps);
    let dv = decompose(v, bumps);
    let t_uv = paraproduct(&transform(u), &dv);
    let t_vu = paraproduct(&transform(v), &du);
    let mut remainder = RealField::zeros(u.grid());
    for l in du.levels() {
        let bu = &du.block(l).expect("level in range")[0];
        for m in (l - 1)..=(l + 1) {
            if let Some(bv) = dv.block(m) {
                remainder = remainder.add(&bu.mul(&bv[0]));
            }
        }
    }
    Ok(BonyParts {
        t_uv,
        t_vu,
        remainder,
        mean_product: du.mean[0] * dv.mean[0],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatDecayEntry {
    pub l: i32,
    pub t: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub within: bool,
    /// `c` with `ratio = exp(-c μ 2^{2l} t)`.
    pub fitted_c: Option<f64>,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatDecayReport {
    pub p: f64,
    pub mu: f64,
    pub entries: Vec<HeatDecayEntry>,
}

impl HeatDecayReport {
    pub fn all_within(&self) -> bool {
        self.entries.iter().all(|e| e.within)
    }
}

/// Relative slack for floating-point rounding in the two-sided bounds.
const ROUNDING_SLACK: f64 = 1e-12;
/// Blocks below this fraction of the largest block count as empty.
const EMPTY_BLOCK_TOL: f64 = 1e-12;

/// Evolves `u0` under the exact heat propagator and compares each block's
/// `L^p` decay with the annulus exponentials
/// `e^{-μ(8/3)^2 4^l t} ≤ ratio ≤ e^{-μ(3/4)^2 4^l t}` (physical `2^l`).
pub fn heat_block_decay_check(
    u0: &RealField,
    mu: f64,
    times: &[f64],
    p: f64,
    bumps: &BumpPair,
) -> Result<HeatDecayReport, BesovError> {
    if times.is_empty() {
        return Err(BesovError::EmptySeries);
    }
    if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BesovError::TimeGrid(
            "times must start at 0 and increase strictly".into(),
        ));
    }
    let grid = u0.grid().clone();
    let u0_hat = transform(u0);
    let initial = decompose(u0, bumps).block_lp_norms(p);
    let (l_min, _) = block_range(&grid);
    // blocks whose content is pure rounding noise carry no decay information
    let floor = EMPTY_BLOCK_TOL * initial.iter().cloned().fold(0.0, f64::max);
    let mut entries = Vec::new();
    for &t in times {
        let evolved = decompose_spectral(&[u0_hat.heat(mu, t)]).block_lp_norms(p);
        for (b, (&n0, &nt)) in initial.iter().zip(&evolved).enumerate() {
            if n0 <= floor {
                continue;
            }
            let l = l_min + b as i32;
            let scale = 4f64.powi(l);
            let ratio = nt / n0;
            let lower = (-mu * ANNULUS_OUTER * ANNULUS_OUTER * scale * t).exp();
            let upper = (-mu * ANNULUS_INNER * ANNULUS_INNER * scale * t).exp();
            let within = ratio <= upper * (1.0 + ROUNDING_SLACK)
                && ratio >= lower * (1.0 - ROUNDING_SLACK);
            let fitted_c = if t > 0.0 && ratio > 0.0 {
                Some(-ratio.ln() / (mu * scale * t))
            } else {
                None
            };
            entries.push(HeatDecayEntry {
                l,
                t,
                ratio,
                lower,
                upper,
                within,
                fitted_c,
                boundary: is_boundary_block(&grid, l),
            });
        }
    }
    Ok(HeatDecayReport { p, mu, entries })
}

/// Largest block-wise ratio `2^{l s2} ‖Δ_l f‖_{p2} / (2^{l s1} ‖Δ_l f‖_{p1})`,
/// a valid constant for `B^{s1}_{p1,r} ↪ B^{s2}_{p2,r}` on the given field.
pub fn embedding_ratio(f: &RealField, from: &BesovSpec, to: &BesovSpec, bumps: &BumpPair) -> f64 {
    let d = decompose(f, bumps);
    let a = d.block_lp_norms(from.p);
    let b = d.block_lp_norms(to.p);
    let floor = EMPTY_BLOCK_TOL * a.iter().cloned().fold(0.0, f64::max);
    d.levels()
        .zip(a.iter().zip(&b))
        .filter(|(_, (&x, _))| x > floor)
        .map(|(l, (&x, &y))| 2f64.powf(l as f64 * (to.s - from.s)) * y / x)
        .fold(0.0, f64::max)
}

/// Bernstein bound `‖Δ_l f‖_{L^∞} ≤ (M_l / |𝕋|)^{1/2} ‖Δ_l f‖_{L^2}` where
/// `M_l` counts the modes in the support of block `l`.
pub fn bernstein_sup_constant(grid: &Grid, l: i32) -> f64 {
    let scale = 2f64.powi(-l);
    let modes = (0..grid.len())
        .filter(|&idx| {
            let k = grid.k_norm(idx);
            k > 0.0 && phi(k * scale) != 0.0
        })
        .count();
    (modes as f64 / grid.volume()).sqrt()
}
