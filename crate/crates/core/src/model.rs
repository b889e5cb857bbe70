//! Model parameters, the sub-logistic source and the auxiliary function
//! `phi` that appears in the entropy estimate.

use std::f64::consts::E;
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Whether the two signal equations carry a time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tau {
    /// `tau = 0`: signals solve `0 = lap(v) - v + w` at every instant.
    ParabolicElliptic,
    /// `tau = 1`: signals evolve by `v_t = lap(v) - v + w`.
    FullyParabolic,
}

impl Tau {
    pub fn from_int(tau: i64) -> Result<Self> {
        match tau {
            0 => Ok(Tau::ParabolicElliptic),
            1 => Ok(Tau::FullyParabolic),
            other => Err(Error::InvalidParameter(format!(
                "tau must be 0 or 1, got {other}"
            ))),
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            Tau::ParabolicElliptic => 0,
            Tau::FullyParabolic => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.as_int() as f64
    }
}

impl fmt::Display for Tau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_int())
    }
}

/// Parameters of the source `f(u) = r u - mu u^2 / ln^p(u + e)` and the
/// signal regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub tau: Tau,
    pub r: f64,
    pub mu: f64,
    pub p: f64,
}

impl ModelParams {
    pub fn new(tau: Tau, r: f64, mu: f64, p: f64) -> Result<Self> {
        if !r.is_finite() {
            return Err(Error::InvalidParameter(format!("r must be finite, got {r}")));
        }
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {mu}")));
        }
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParameter(format!("p must be >= 0, got {p}")));
        }
        Ok(Self { tau, r, mu, p })
    }

    /// True iff `r > 0`, `mu > 0` and `0 <= p < 1`, the hypotheses under
    /// which solutions are known to be global and bounded.
    pub fn theorem_regime(&self) -> bool {
        self.r > 0.0 && self.mu > 0.0 && (0.0..1.0).contains(&self.p)
    }

    /// Human-readable reasons why a run sits outside the theorem regime.
    pub fn hypothesis_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.r <= 0.0 {
            out.push(format!("r = {} is not positive", self.r));
        }
        if self.mu == 0.0 {
            out.push("mu = 0: no damping".to_string());
        }
        if self.p >= 1.0 {
            out.push(format!("p = {} is not below 1", self.p));
        }
        out
    }
}

/// `f(u) = r u - mu u^2 / ln^p(u + e)` for `u >= 0`.
pub fn source(u: f64, params: &ModelParams) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::NegativeArgument(u));
    }
    Ok(source_unchecked(u, params))
}

#[inline]
fn source_unchecked(u: f64, params: &ModelParams) -> f64 {
    let damping = if params.p == 0.0 {
        params.mu * u * u
    } else {
        params.mu * u * u / (u + E).ln().powf(params.p)
    };
    params.r * u - damping
}

/// Per-capita damping rate `mu u / ln^p(u + e)`, used for time step limits.
pub fn damping_rate(u: f64, params: &ModelParams) -> f64 {
    let u = u.max(0.0);
    if params.p == 0.0 {
        params.mu * u
    } else {
        params.mu * u / (u + E).ln().powf(params.p)
    }
}

/// `phi(u) = int_0^u s/(s+e) + e s/(s+e)^2 ds = u^2 / (u + e)`.
pub fn phi(u: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return Err(Error::NegativeArgument(u));
    }
    Ok(u * u / (u + E))
}

/// Integrand of [`phi`], i.e. its derivative.
pub fn phi_prime(u: f64) -> f64 {
    u / (u + E) + E * u / ((u + E) * (u + E))
}

/// Pointwise source over a field. Negative cells are rejected.
pub fn source_field(u: &Field, params: &ModelParams) -> Result<Field> {
    source_field_clamped(u, params, 0.0)
}

/// Pointwise source, treating undershoots no deeper than `pos_tol` as zero.
pub fn source_field_clamped(u: &Field, params: &ModelParams, pos_tol: f64) -> Result<Field> {
    let g = *u.grid();
    let mut out = Vec::with_capacity(g.len());
    for (k, &val) in u.values().iter().enumerate() {
        if val < -pos_tol || val.is_nan() {
            let (i, j) = g.cell(k);
            return Err(Error::Negative {
                field: "u",
                i,
                j,
                value: val,
            });
        }
        out.push(source_unchecked(val.max(0.0), params));
    }
    Field::new(g, out)
}

/// The quadruple `(u, v, w, z)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub w: Field,
    pub z: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, w: Field, z: Field, t: f64) -> Result<Self> {
        u.same_grid(&v)?;
        u.same_grid(&w)?;
        u.same_grid(&z)?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time must be >= 0, got {t}")));
        }
        Ok(Self { u, v, w, z, t })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let f = Field::zeros(grid);
        Self {
            u: f.clone(),
            v: f.clone(),
            w: f.clone(),
            z: f,
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.u.grid()
    }

    pub fn fields(&self) -> [(&'static str, &Field); 4] {
        [("u", &self.u), ("v", &self.v), ("w", &self.w), ("z", &self.z)]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, f) in self.fields() {
            f.check_finite(name)?;
        }
        Ok(())
    }
}
