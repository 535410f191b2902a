//! Initial-condition presets on the torus `[0, L)^N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::fields::{inverse_transform, Grid, RealField, SpectralField};
use crate::model::{ModelError, PhysParams, PrimitiveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    /// `ρ = ρ̄`, `u = 0`.
    Equilibrium,
    /// `ρ = ρ̄(1 + A b)` with a smooth periodic bump `b ∈ (0, 1]`,
    /// `u_a = A sin(2πx_a/L)`.
    SmoothBump,
    /// `ρ = ρ̄(1 − (1−δ) b)`, minimum `ρ̄δ` at the centre, `u = 0`.
    NearVacuum,
    /// Seeded random Fourier data on `|k| ≤ 4`, scaled to sup norm `A`.
    RandomBandlimited,
    /// Single modes `ρ = ρ̄(1 + A cos(2πx/L))`, `u_0 = A sin(2πx/L)`.
    Manufactured,
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Equilibrium => "equilibrium",
            PresetName::SmoothBump => "smooth_bump",
            PresetName::NearVacuum => "near_vacuum",
            PresetName::RandomBandlimited => "random_bandlimited",
            PresetName::Manufactured => "manufactured",
        }
    }
}

/// Highest wavenumber of `random_bandlimited` data.
pub const BANDLIMIT: i64 = 4;

/// Sharpness of the bump `exp(−w Σ sin²(π(x_a − L/2)/L))`.
const BUMP_WIDTH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preset {
    pub name: PresetName,
    pub amplitude: f64,
    pub seed: u64,
    /// Relative minimum density of `near_vacuum`, in `(0, 1)`.
    pub delta: f64,
}

impl Default for Preset {
    fn default() -> Self {
        Self {
            name: PresetName::SmoothBump,
            amplitude: 0.1,
            seed: 0,
            delta: 0.05,
        }
    }
}

impl Preset {
    pub fn new(name: PresetName, amplitude: f64) -> Self {
        Self {
            name,
            amplitude,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(format!("amplitude must be finite and >= 0, got {}", self.amplitude));
        }
        match self.name {
            PresetName::RandomBandlimited | PresetName::Manufactured if self.amplitude >= 1.0 => {
                Err(format!(
                    "amplitude must be < 1 for {} to keep the density positive, got {}",
                    self.name.as_str(),
                    self.amplitude
                ))
            }
            PresetName::NearVacuum if !(self.delta > 0.0 && self.delta < 1.0) => {
                Err(format!("delta must lie in (0, 1), got {}", self.delta))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self, grid: &Grid, params: &PhysParams) -> Result<PrimitiveState, ModelError> {
        self.validate().map_err(ModelError::Config)?;
        let rb = params.rho_bar;
        let a = self.amplitude;
        let l = grid.length();
        let w = 2.0 * PI / l;
        let dim = grid.dim();
        let bump = |x: f64, y: f64| {
            let s = |z: f64| (PI * (z - l / 2.0) / l).sin().powi(2);
            let sum = if dim == 1 { s(x) } else { s(x) + s(y) };
            (-BUMP_WIDTH * sum).exp()
        };
        let (rho, u) = match self.name {
            PresetName::Equilibrium => return Ok(PrimitiveState::equilibrium(grid, params)),
            PresetName::SmoothBump => (
                RealField::from_fn(grid, |x, y| rb * (1.0 + a * bump(x, y))),
                (0..dim)
                    .map(|c| {
                        RealField::from_fn(grid, |x, y| a * (w * if c == 0 { x } else { y }).sin())
                    })
                    .collect(),
            ),
            PresetName::NearVacuum => (
                RealField::from_fn(grid, |x, y| rb * (1.0 - (1.0 - self.delta) * bump(x, y))),
                vec![RealField::zeros(grid); dim],
            ),
            PresetName::RandomBandlimited => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut fields: Vec<RealField> =
                    (0..=dim).map(|_| random_field(grid, &mut rng, a)).collect();
                let rho = fields.remove(0).map(|f| rb * (1.0 + f));
                (rho, fields)
            }
            PresetName::Manufactured => (
                RealField::from_fn(grid, |x, _| rb * (1.0 + a * (w * x).cos())),
                (0..dim)
                    .map(|c| {
                        if c == 0 {
                            RealField::from_fn(grid, |x, _| a * (w * x).sin())
                        } else {
                            RealField::zeros(grid)
                        }
                    })
                    .collect(),
            ),
        };
        PrimitiveState::new(rho, u)
    }
}

/// Real field with independent uniform random coefficients on
/// `0 < |k|_∞ ≤ BANDLIMIT`, zero mean, scaled to sup norm `amp`.
fn random_field(grid: &Grid, rng: &mut ChaCha8Rng, amp: f64) -> RealField {
    let mut s = SpectralField::zeros(grid);
    for (idx, c) in s.coeffs_mut().iter_mut().enumerate() {
        let [a, b] = grid.int_wavevector(idx);
        if (a, b) != (0, 0) && a.abs() <= BANDLIMIT && b.abs() <= BANDLIMIT {
            c.re = rng.gen_range(-1.0..1.0);
            c.im = rng.gen_range(-1.0..1.0);
        }
    }
    // the real part of the inverse is the Hermitian projection
    let f = inverse_transform(&s);
    let m = f.max_abs();
    if m == 0.0 {
        f
    } else {
        f.scale(amp / m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_vacuum_minimum() {
        let p = PhysParams::default();
        for dim in [1, 2] {
            let g = Grid::periodic(dim, 32).unwrap();
            let s = Preset {
                name: PresetName::NearVacuum,
                delta: 0.05,
                ..Preset::default()
            }
            .build(&g, &p)
            .unwrap();
            assert!((s.min_rho() - 0.05).abs() < 1e-14);
        }
    }

    #[test]
    fn random_is_seeded() {
        let g = Grid::periodic(2, 16).unwrap();
        let p = PhysParams::default();
        let pre = Preset {
            name: PresetName::RandomBandlimited,
            amplitude: 0.3,
            seed: 7,
            delta: 0.5,
        };
        let a = pre.build(&g, &p).unwrap();
        let b = pre.build(&g, &p).unwrap();
        assert_eq!(a, b);
        assert!((a.rho.sub(&RealField::constant(&g, 1.0)).max_abs() - 0.3).abs() < 1e-14);
        let c = Preset { seed: 8, ..pre }.build(&g, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_presets() {
        let g = Grid::periodic(1, 16).unwrap();
        let p = PhysParams::default();
        let bad = Preset {
            name: PresetName::NearVacuum,
            delta: 1.5,
            ..Preset::default()
        };
        assert!(bad.build(&g, &p).is_err());
        assert!(Preset::new(PresetName::Manufactured, 1.0).build(&g, &p).is_err());
        assert!(Preset::new(PresetName::SmoothBump, -1.0).build(&g, &p).is_err());
    }

    #[test]
    fn equilibrium_is_constant() {
        let g = Grid::periodic(1, 8).unwrap();
        let p = PhysParams {
            rho_bar: 2.0,
            ..PhysParams::default()
        };
        let s = Preset::new(PresetName::Equilibrium, 0.0).build(&g, &p).unwrap();
        assert_eq!(s.rho.max(), 2.0);
        assert_eq!(s.u[0].max_abs(), 0.0);
    }
}
