//! Entropy and energy functionals, the blow-up detector, and brute-force
//! checks of the pointwise inequalities behind the boundedness estimate.
//!
//! The tracked energy is
//!
//! ```text
//! y = ∫ u ln(u+e) + ∫ w ln(w+e) + tau (A/2) ∫ |∇v|² + tau (B/2) ∫ |∇z|²
//! ```
//!
//! with `eps = min{ mu/4, (3 C_GN (∫w0 + e|Ω|))^-1 }`, `A = 2 eps` and
//! `B = eps + 1/(4 eps)`. The choice of `A` makes the coefficient
//! `A²/(4 eps) + eps - A` of `∫(Δv)²` vanish.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gradient_sq_integral, integrate, weighted_gradient_sq_integral, Field, GridSpec};
use crate::init::rectified_random;
use crate::model::{phi, ModelParams, State, Tau};

/// Undershoot accepted by the functionals before a field counts as negative.
pub const DEFAULT_POS_TOL: f64 = 1e-10;

/// Constants of the energy functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub c_gn: f64,
    pub epsilon: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    pub w0_mass: f64,
    pub area: f64,
}

impl EnergyParams {
    /// `A²/(4 eps) + eps - A`, zero by construction.
    pub fn a_residual(&self) -> f64 {
        self.a_coef * self.a_coef / (4.0 * self.epsilon) + self.epsilon - self.a_coef
    }

    /// `eps + 1/(4 eps) - B`, zero by construction.
    pub fn b_residual(&self) -> f64 {
        self.epsilon + 1.0 / (4.0 * self.epsilon) - self.b_coef
    }
}

pub fn make_energy_params(
    params: &ModelParams,
    w0_mass: f64,
    area: f64,
    c_gn: f64,
) -> Result<EnergyParams> {
    if !(params.mu > 0.0) {
        return Err(Error::InvalidParameter(
            "energy constants need mu > 0 (epsilon = min{mu/4, ..} would vanish)".into(),
        ));
    }
    if !(c_gn.is_finite() && c_gn > 0.0) {
        return Err(Error::InvalidParameter(format!("c_gn must be positive, got {c_gn}")));
    }
    if !(area.is_finite() && area > 0.0) {
        return Err(Error::InvalidParameter(format!("area must be positive, got {area}")));
    }
    if !(w0_mass.is_finite() && w0_mass >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "w0 mass must be nonnegative, got {w0_mass}"
        )));
    }
    let epsilon = (params.mu / 4.0).min(1.0 / (3.0 * c_gn) / (w0_mass + E * area));
    Ok(EnergyParams {
        c_gn,
        epsilon,
        a_coef: 2.0 * epsilon,
        b_coef: epsilon + 1.0 / (4.0 * epsilon),
        w0_mass,
        area,
    })
}

/// `∫ f ln(f + e)` for a nonnegative field.
pub fn l_log_l(f: &Field) -> Result<f64> {
    l_log_l_with_tol(f, DEFAULT_POS_TOL)
}

/// As [`l_log_l`], treating entries in `[-pos_tol, 0)` as zero.
pub fn l_log_l_with_tol(f: &Field, pos_tol: f64) -> Result<f64> {
    let g = f.grid();
    let mut acc = 0.0;
    for (k, &v) in f.values().iter().enumerate() {
        if v < -pos_tol || v.is_nan() {
            let (i, j) = g.cell(k);
            return Err(Error::Negative {
                field: "density",
                i,
                j,
                value: v,
            });
        }
        let v = v.max(0.0);
        acc += v * (v + E).ln();
    }
    Ok(acc * g.cell_area())
}

fn tau_terms(state: &State, ep: &EnergyParams) -> f64 {
    0.5 * ep.a_coef * gradient_sq_integral(&state.v) + 0.5 * ep.b_coef * gradient_sq_integral(&state.z)
}

/// The energy functional `y(t)` for the given state.
pub fn energy(state: &State, ep: &EnergyParams, params: &ModelParams) -> Result<f64> {
    let entropy = l_log_l(&state.u)? + l_log_l(&state.w)?;
    Ok(match params.tau {
        Tau::ParabolicElliptic => entropy,
        Tau::FullyParabolic => entropy + tau_terms(state, ep),
    })
}

/// Why the blow-up detector fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupKind {
    /// `||u||∞ + ||w||∞` exceeded the threshold.
    Threshold,
    /// A NaN or infinity appeared.
    NonFinite,
    /// The adaptive step shrank below resolvable size.
    StepCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub t: f64,
    pub kind: BlowupKind,
    pub field: String,
    pub value: f64,
    pub i: usize,
    pub j: usize,
}

/// Fires when `||u||∞ + ||w||∞ > threshold` or any field holds a non-finite
/// value.
pub fn detect_blowup(state: &State, threshold: f64) -> Option<BlowupReport> {
    for (name, f) in state.fields() {
        if let Some((i, j, value)) = f.first_non_finite() {
            return Some(BlowupReport {
                t: state.t,
                kind: BlowupKind::NonFinite,
                field: name.to_string(),
                value,
                i,
                j,
            });
        }
    }
    let (iu, ju, mu) = state.u.argmax();
    let (iw, jw, mw) = state.w.argmax();
    if state.u.max_abs() + state.w.max_abs() > threshold {
        let (field, i, j, value) = if mu >= mw { ("u", iu, ju, mu) } else { ("w", iw, jw, mw) };
        return Some(BlowupReport {
            t: state.t,
            kind: BlowupKind::Threshold,
            field: field.to_string(),
            value,
            i,
            j,
        });
    }
    None
}

/// One row of tracked functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_w: f64,
    pub linf_u: f64,
    pub linf_v: f64,
    pub linf_w: f64,
    pub linf_z: f64,
    pub l_log_l_u: f64,
    pub l_log_l_w: f64,
    pub grad_v_sq: f64,
    pub grad_z_sq: f64,
    pub energy_y: f64,
    pub min_u: f64,
    pub min_w: f64,
    pub dt_used: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 15] = [
        "t", "mass_u", "mass_w", "linf_u", "linf_v", "linf_w", "linf_z", "l_log_l_u",
        "l_log_l_w", "grad_v_sq", "grad_z_sq", "energy_y", "min_u", "min_w", "dt_used",
    ];

    pub fn values(&self) -> [f64; 15] {
        [
            self.t,
            self.mass_u,
            self.mass_w,
            self.linf_u,
            self.linf_v,
            self.linf_w,
            self.linf_z,
            self.l_log_l_u,
            self.l_log_l_w,
            self.grad_v_sq,
            self.grad_z_sq,
            self.energy_y,
            self.min_u,
            self.min_w,
            self.dt_used,
        ]
    }
}

/// Evaluates every functional on `state`.
///
/// Without energy constants (only possible for `mu = 0`) the `tau = 1`
/// energy is undefined and reported as NaN; for `tau = 0` it does not
/// depend on them.
pub fn record(
    state: &State,
    ep: Option<&EnergyParams>,
    params: &ModelParams,
    dt_used: f64,
    pos_tol: f64,
) -> Result<DiagnosticsRecord> {
    let l_log_l_u = l_log_l_with_tol(&state.u, pos_tol)?;
    let l_log_l_w = l_log_l_with_tol(&state.w, pos_tol)?;
    let grad_v_sq = gradient_sq_integral(&state.v);
    let grad_z_sq = gradient_sq_integral(&state.z);
    let energy_y = match (params.tau, ep) {
        (Tau::ParabolicElliptic, _) => l_log_l_u + l_log_l_w,
        (Tau::FullyParabolic, Some(ep)) => {
            l_log_l_u + l_log_l_w + 0.5 * ep.a_coef * grad_v_sq + 0.5 * ep.b_coef * grad_z_sq
        }
        (Tau::FullyParabolic, None) => f64::NAN,
    };
    Ok(DiagnosticsRecord {
        t: state.t,
        mass_u: integrate(&state.u),
        mass_w: integrate(&state.w),
        linf_u: state.u.max_abs(),
        linf_v: state.v.max_abs(),
        linf_w: state.w.max_abs(),
        linf_z: state.z.max_abs(),
        l_log_l_u,
        l_log_l_w,
        grad_v_sq,
        grad_z_sq,
        energy_y,
        min_u: state.u.min(),
        min_w: state.w.min(),
        dt_used,
    })
}

/// Result of the brute-force scan of `u² <= delta u² ln^{1-p}(u+e) + C(delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub p: f64,
    pub delta: f64,
    pub u_max: f64,
    /// Sample count of the final scan.
    pub samples: usize,
    /// Smallest admissible constant on `[0, u_max]`.
    pub c_delta: f64,
    /// Where `u² (1 - delta ln^{1-p}(u+e))` peaks; 0 when `c_delta = 0`.
    pub argmax_u: f64,
    /// Grid doublings needed before successive estimates agreed.
    pub refinements: usize,
    /// Whether the inequality held at every sample of the final scan.
    pub holds: bool,
}

/// `u² (1 - delta ln^{1-p}(u+e))`.
pub fn interpolation_gap(u: f64, p: f64, delta: f64) -> f64 {
    u * u * (1.0 - delta * (u + E).ln().powf(1.0 - p))
}

/// `0` followed by `samples - 1` log-spaced points ending at `u_max`.
pub fn log_grid(u_max: f64, samples: usize) -> Vec<f64> {
    const U_MIN: f64 = 1e-8;
    let mut out = Vec::with_capacity(samples.max(2));
    out.push(0.0);
    let n = samples.max(2) - 1;
    let lo = U_MIN.min(u_max).ln();
    let hi = u_max.ln();
    for k in 0..n {
        let s = if n == 1 { 1.0 } else { k as f64 / (n - 1) as f64 };
        out.push((lo + s * (hi - lo)).exp());
    }
    *out.last_mut().unwrap() = u_max;
    out
}

fn scan_gap(p: f64, delta: f64, u_max: f64, samples: usize) -> (f64, f64) {
    let grid = log_grid(u_max, samples);
    let (mut best_k, mut best) = (0, interpolation_gap(grid[0], p, delta));
    for (k, &u) in grid.iter().enumerate() {
        let g = interpolation_gap(u, p, delta);
        if g > best {
            best = g;
            best_k = k;
        }
    }
    if best <= 0.0 {
        return (0.0, 0.0);
    }
    // Polish the maximiser inside the bracket of its grid neighbours with a
    // golden-section search; the gap is smooth and unimodal there.
    let mut a = grid[best_k.saturating_sub(1)];
    let mut b = grid[(best_k + 1).min(grid.len() - 1)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b {
            break;
        }
        if interpolation_gap(c, p, delta) > interpolation_gap(d, p, delta) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let mid = 0.5 * (a + b);
    let polished = interpolation_gap(mid, p, delta);
    if polished > best {
        (polished, mid)
    } else {
        (best, grid[best_k])
    }
}

/// Brute-force constant `C(delta)` for `u² <= delta u² ln^{1-p}(u+e) + C`
/// over `u ∈ [0, u_max]`, refined by grid doubling until two successive
/// estimates agree to `1e-4` relative.
pub fn verify_interpolation_inequality(
    p: f64,
    delta: f64,
    u_max: f64,
    samples: usize,
) -> Result<InequalityReport> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("p must lie in [0, 1), got {p}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(u_max.is_finite() && u_max > 0.0) {
        return Err(Error::InvalidParameter(format!("u_max must be positive, got {u_max}")));
    }
    let mut n = samples.max(16);
    let (mut c, mut arg) = scan_gap(p, delta, u_max, n);
    let mut refinements = 0;
    loop {
        let (c2, arg2) = scan_gap(p, delta, u_max, 2 * n - 1);
        n = 2 * n - 1;
        refinements += 1;
        let agree = (c2 - c).abs() <= 1e-4 * c2.abs().max(f64::MIN_POSITIVE);
        c = c.max(c2);
        if c2 >= c {
            arg = arg2;
        }
        if agree || refinements >= 20 {
            break;
        }
    }
    let holds = certify_interpolation_constant(p, delta, c, u_max, n) == 0;
    Ok(InequalityReport {
        p,
        delta,
        u_max,
        samples: n,
        c_delta: c,
        argmax_u: arg,
        refinements,
        holds,
    })
}

/// Number of samples of a `samples`-point log grid where
/// `u² > delta u² ln^{1-p}(u+e) + c` beyond round-off.
pub fn certify_interpolation_constant(p: f64, delta: f64, c: f64, u_max: f64, samples: usize) -> usize {
    log_grid(u_max, samples)
        .into_iter()
        .filter(|&u| {
            let lhs = u * u;
            let rhs = delta * u * u * (u + E).ln().powf(1.0 - p) + c;
            lhs - rhs > 1e-12 * lhs.max(c)
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiBoundReport {
    pub samples: usize,
    pub u_max: f64,
    /// `max phi(u)/u` over the positive samples.
    pub max_ratio: f64,
    pub holds: bool,
}

/// Scans `phi(u) <= u` over a log grid on `[0, u_max]`.
pub fn verify_phi_bound(u_max: f64, samples: usize) -> Result<PhiBoundReport> {
    let mut max_ratio = 0.0_f64;
    let mut holds = true;
    for u in log_grid(u_max, samples) {
        let v = phi(u)?;
        holds &= v <= u;
        if u > 0.0 {
            max_ratio = max_ratio.max(v / u);
        }
    }
    Ok(PhiBoundReport {
        samples: samples.max(2),
        u_max,
        max_ratio,
        holds,
    })
}

/// `∫f² / (∫|∇f|²/(f+e) · ∫(f+e) + (∫(f+e))²)`, an empirical lower bound for
/// the interpolation constant `C_GN`.
pub fn empirical_gn_ratio(f: &Field) -> Result<f64> {
    if let Some((i, j, value)) = f
        .values()
        .iter()
        .position(|&v| v < 0.0 || v.is_nan())
        .map(|k| {
            let (i, j) = f.grid().cell(k);
            (i, j, f.values()[k])
        })
    {
        return Err(Error::Negative {
            field: "density",
            i,
            j,
            value,
        });
    }
    let numerator = integrate(&f.map(|v| v * v));
    let lifted_mass = integrate(f) + E * f.grid().area();
    let dissipation = weighted_gradient_sq_integral(f)?;
    Ok(numerator / (dissipation * lifted_mass + lifted_mass * lifted_mass))
}

/// Largest [`empirical_gn_ratio`] over `count` rectified random fields with
/// seeds `seed, seed + 1, ...`. Returns the maximum and the seed attaining it.
pub fn gn_ensemble_max(grid: GridSpec, count: usize, seed: u64, cutoff: u32) -> Result<(f64, u64)> {
    let mut best = (0.0, seed);
    for s in seed..seed + count as u64 {
        let f = rectified_random(grid, s, cutoff, 1.0, 0.0);
        let ratio = empirical_gn_ratio(&f)?;
        if ratio > best.0 {
            best = (ratio, s);
        }
    }
    Ok(best)
}
