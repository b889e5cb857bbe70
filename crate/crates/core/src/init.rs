//! Named generators for initial data, sampled at cell centres.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, Field, GridSpec};

/// One cosine mode `amplitude * cos(kx pi x / lx) * cos(ky pi y / ly)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineMode {
    pub kx: u32,
    pub ky: u32,
    pub amplitude: f64,
}

/// Registry of initial-data generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    Constant {
        value: f64,
    },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`. When `mass` is given
    /// the samples are rescaled so that their midpoint integral equals it,
    /// and `amplitude` must be omitted.
    GaussianBump {
        center: [f64; 2],
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mass: Option<f64>,
    },
    CosineModes {
        modes: Vec<CosineMode>,
    },
    /// `max(0, offset + amplitude * sum a_k cos(..) cos(..))` over all modes
    /// with `kx, ky <= cutoff`, coefficients uniform in `[-1, 1]`. Without an
    /// explicit `seed` the scenario seed is used.
    RectifiedRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        cutoff: u32,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Constant { .. } => "constant",
            Generator::GaussianBump { .. } => "gaussian_bump",
            Generator::CosineModes { .. } => "cosine_modes",
            Generator::RectifiedRandom { .. } => "rectified_random",
        }
    }

    /// Samples the generator; `default_seed` feeds randomized generators
    /// that carry no seed of their own.
    pub fn sample(&self, grid: GridSpec, default_seed: u64) -> Result<Field> {
        match self {
            Generator::Constant { value } => Ok(Field::constant(grid, *value)),
            Generator::GaussianBump {
                center,
                width,
                amplitude,
                mass,
            } => gaussian_bump(grid, *center, *width, *amplitude, *mass),
            Generator::CosineModes { modes } => Ok(cosine_modes(grid, modes)),
            Generator::RectifiedRandom {
                seed,
                cutoff,
                amplitude,
                offset,
            } => Ok(rectified_random(
                grid,
                seed.unwrap_or(default_seed),
                *cutoff,
                *amplitude,
                *offset,
            )),
        }
    }
}

fn gaussian_bump(
    grid: GridSpec,
    center: [f64; 2],
    width: f64,
    amplitude: Option<f64>,
    mass: Option<f64>,
) -> Result<Field> {
    if !(width.is_finite() && width > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gaussian_bump width must be positive, got {width}"
        )));
    }
    let shape = Field::from_fn(grid, |x, y| {
        let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
        (-r2 / (2.0 * width * width)).exp()
    });
    match (amplitude, mass) {
        (Some(a), None) => Ok(shape.scaled(a)),
        (None, Some(m)) => {
            let base = integrate(&shape);
            if !(base > 0.0) {
                return Err(Error::InvalidParameter(
                    "gaussian_bump has no support on the grid".into(),
                ));
            }
            Ok(shape.scaled(m / base))
        }
        _ => Err(Error::InvalidParameter(
            "gaussian_bump needs exactly one of `amplitude` or `mass`".into(),
        )),
    }
}

fn cosine_modes(grid: GridSpec, modes: &[CosineMode]) -> Field {
    Field::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|m| {
                m.amplitude
                    * (m.kx as f64 * PI * x / grid.lx()).cos()
                    * (m.ky as f64 * PI * y / grid.ly()).cos()
            })
            .sum()
    })
}

/// Rectified sum of low-frequency cosine modes with seeded random weights.
pub fn rectified_random(grid: GridSpec, seed: u64, cutoff: u32, amplitude: f64, offset: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for kx in 0..=cutoff {
        for ky in 0..=cutoff {
            modes.push(CosineMode {
                kx,
                ky,
                amplitude: rng.gen_range(-1.0..=1.0),
            });
        }
    }
    cosine_modes(grid, &modes).map(|v| (offset + amplitude * v).max(0.0))
}
