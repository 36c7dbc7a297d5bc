//! Calibration of `(a, s_r)` for a cap radius r by shooting.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::ode::{self, conformal_factor, first_integrals, lift_x_signed, OdeState, Trace};
use crate::roots::{scan_bracket, solve_bracketed, RootOptions};

/// Integrator tolerance used for every shooting run and band trace.
pub const CALIBRATION_TOL: f64 = 1e-13;

/// Largest arclength searched for the boundary crossing.
const S_SEARCH: f64 = 20.0;

/// Extra arclength integrated past `s_r` so grids can place a ghost row beyond the boundary.
const BAND_OVERSHOOT: f64 = 0.1;

const SCAN_POINTS: usize = 18;

pub fn calibration_config() -> IntegratorConfig {
    IntegratorConfig::with_tol(CALIBRATION_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SeedPolynomial,
    ShootingRefined,
}

/// Calibrated cap parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapParams {
    pub r: f64,
    pub a: f64,
    pub s_r: f64,
    pub residual: [f64; 2],
    pub seed_a: f64,
    pub method: Method,
}

impl CapParams {
    pub fn validate(&self) -> Result<()> {
        check_radius(self.r)?;
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::InvalidInput(format!("a must lie in (0, 1), got {}", self.a)));
        }
        if !(self.s_r > 0.0) {
            return Err(Error::InvalidInput(format!("s_r must be positive, got {}", self.s_r)));
        }
        Ok(())
    }

    /// A copy with `a` moved by `delta` and `s_r` re-shot; the residual is recomputed.
    pub fn perturbed(&self, delta: f64) -> Result<CapParams> {
        let a = self.a + delta;
        let (trace, s_r) = shoot(a, self.r, &calibration_config())?;
        let res = boundary_residual(a, self.r, s_r, &trace)?;
        Ok(CapParams {
            a,
            s_r,
            residual: [res.f1, res.f2],
            method: Method::SeedPolynomial,
            ..*self
        })
    }
}

/// `F(a, r, s) = (f1, f2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryResidual {
    pub f1: f64,
    pub f2: f64,
}

impl BoundaryResidual {
    pub fn max_abs(&self) -> f64 {
        self.f1.abs().max(self.f2.abs())
    }
}

pub fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r <= FRAC_PI_2 + 1e-12 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "cap radius must lie in (0, pi/2], got {r}"
        )))
    }
}

fn smaller_root(b: f64, c: f64) -> Option<f64> {
    // 8A² + bA + c = 0
    let disc = b * b - 32.0 * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // stable form of (-b - √disc)/16 for the smaller root
    let big = if b <= 0.0 { (-b + sq) / 16.0 } else { (-b - sq) / 16.0 };
    let small = if b <= 0.0 { c / (8.0 * big) } else { big };
    Some(small)
}

fn admissible_root(r: f64, b: f64, c0: f64) -> Result<f64> {
    check_radius(r)?;
    let c = r.cos().powi(2);
    let big_a = smaller_root(b, c0).ok_or_else(|| Error::NoRoot(format!("negative discriminant at r = {r}")))?;
    if !(big_a > 0.0 && 1.0 - big_a > c) {
        return Err(Error::NoRoot(format!(
            "root a² = {big_a} violates 0 < a² < sin² r at r = {r}"
        )));
    }
    Ok(big_a.sqrt())
}

/// Seed from the quadratic `8A² + (4c - 11)A + 3(1 - c) = 0`, `A = a²`, `c = cos² r`.
pub fn candidate_a(r: f64) -> Result<f64> {
    let c = r.cos().powi(2);
    admissible_root(r, 4.0 * c - 11.0, 3.0 * (1.0 - c))
}

/// Root of the quadratic as printed, `8A² + (4c - 11)A + (3 - 5c) = 0`, kept for comparison.
pub fn printed_candidate_a(r: f64) -> Result<f64> {
    let c = r.cos().powi(2);
    admissible_root(r, 4.0 * c - 11.0, 3.0 - 5.0 * c)
}

/// Evaluates `F(a, r, s)` from the trace's dense output.
pub fn boundary_residual(a: f64, r: f64, s: f64, trace: &Trace) -> Result<BoundaryResidual> {
    if (trace.a - a).abs() > 0.0 {
        return Err(Error::InvalidInput(format!(
            "trace was integrated for a = {}, not {a}",
            trace.a
        )));
    }
    let st = trace.state_at(s)?;
    let (x, dx) = trace.x_at(s)?;
    Ok(BoundaryResidual {
        f1: r.cos() - x,
        f2: r.sin() * conformal_factor(&st).sqrt() + dx,
    })
}

/// Integrates the canonical orbit until x drops below `cos r` and polishes the crossing.
pub fn shoot(a: f64, r: f64, cfg: &IntegratorConfig) -> Result<(Trace, f64)> {
    let target = r.cos();
    if !((1.0 - a * a).sqrt() > target) {
        return Err(Error::NoCrossing { a, target });
    }
    let mut sign = 1.0;
    let mut prev_q = 0.0;
    let mut first = true;
    let trace = ode::integrate_until(a, S_SEARCH, cfg, |st: &OdeState| {
        let q = st.q();
        if !first && prev_q >= 0.0 && q < 0.0 {
            sign = -sign;
        }
        first = false;
        prev_q = q;
        lift_x_signed(st, sign).0 < target
    })?;
    let knots = trace.knots();
    let n = knots.len();
    let last = trace.x_at(knots[n - 1])?.0;
    if n < 2 || !(last < target) {
        return Err(Error::NoCrossing { a, target });
    }
    let opts = RootOptions {
        xtol: 1e-16,
        ftol: 1e-15,
        max_iter: 200,
    };
    let s_r = solve_bracketed(|s| Ok(trace.x_at(s)?.0 - target), knots[n - 2], knots[n - 1], &opts)?;
    Ok((trace, s_r))
}

/// First positive s with `x(s) = cos r`.
pub fn find_s_r(a: f64, r: f64) -> Result<f64> {
    check_radius(r)?;
    Ok(shoot(a, r, &calibration_config())?.1)
}

/// `y z′ - z y′` at `s_r(a)`: zero exactly when the boundary meets the cap orthogonally.
fn wronskian_at_boundary(a: f64, r: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let (trace, s_r) = shoot(a, r, cfg)?;
    let st = trace.state_at(s_r)?;
    Ok(st.y * st.dz - st.z * st.dy)
}

/// Calibrates `(a, s_r)` so that `|f1|, |f2| ≤ tol`.
pub fn calibrate(r: f64, tol: f64) -> Result<CapParams> {
    check_radius(r)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let seed_a = candidate_a(r)?;
    let cfg = calibration_config();
    let a_max = r.sin().min(1.0);
    let w = |a: f64| wronskian_at_boundary(a, r, &cfg);
    let (lo, hi) =
        scan_bracket(|a| w(a).ok(), 0.05 * a_max, 0.95 * a_max, SCAN_POINTS).ok_or_else(|| Error::NoConvergence {
            iterations: SCAN_POINTS,
            lo: 0.05 * a_max,
            hi: 0.95 * a_max,
            residual: f64::NAN,
            detail: "no sign change of the boundary Wronskian".into(),
        })?;
    let opts = RootOptions {
        xtol: 1e-15,
        ftol: 1e-15,
        max_iter: 200,
    };
    let a = if lo == hi {
        lo
    } else {
        solve_bracketed(w, lo, hi, &opts)?
    };
    let (trace, s_r) = shoot(a, r, &cfg)?;
    let res = boundary_residual(a, r, s_r, &trace)?;
    if !(res.max_abs() <= tol) {
        return Err(Error::NoConvergence {
            iterations: opts.max_iter,
            lo,
            hi,
            residual: res.max_abs(),
            detail: format!("refined a = {a} leaves residual ({:e}, {:e})", res.f1, res.f2),
        });
    }
    Ok(CapParams {
        r,
        a,
        s_r,
        residual: [res.f1, res.f2],
        seed_a,
        method: Method::ShootingRefined,
    })
}

/// Calibrates several radii; the parallel path returns the same values as the serial one.
pub fn calibrate_sweep(rs: &[f64], tol: f64, parallel: bool) -> Vec<Result<CapParams>> {
    if parallel {
        rs.par_iter().map(|&r| calibrate(r, tol)).collect()
    } else {
        rs.iter().map(|&r| calibrate(r, tol)).collect()
    }
}

/// Trace for building grids: the calibration run continued a little past `s_r`.
pub fn band_trace(params: &CapParams) -> Result<Trace> {
    params.validate()?;
    ode::integrate(params.a, params.s_r * (1.0 + BAND_OVERSHOOT), &calibration_config())
}

/// `max |a²y² - (3 - 4a²)z² + a²(3 - 4a²)|` over the samples.
pub fn invariant_conic_residual(trace: &Trace, a: f64) -> f64 {
    let a2 = a * a;
    trace
        .samples
        .iter()
        .map(|p| (a2 * p.y * p.y - (3.0 - 4.0 * a2) * p.z * p.z + a2 * (3.0 - 4.0 * a2)).abs())
        .fold(0.0, f64::max)
}

/// Residuals of the decoupled x equation and of its first-order form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedXResidual {
    pub second_order: f64,
    pub first_order: f64,
}

impl ReducedXResidual {
    pub fn max(&self) -> f64 {
        self.second_order.max(self.first_order)
    }
}

/// Checks `x″ + 2(1 + 4a² - x²/(1-a²))x = 0` (by central differences of the dense
/// output) and `x′² = -(2+8a²)x² + x⁴/(1-a²) + (1-a²)(8a²+1)` at the samples.
///
/// Only meaningful on the canonical orbit.
pub fn reduced_x_consistency(trace: &Trace, a: f64) -> Result<ReducedXResidual> {
    let a2 = a * a;
    let h = 1e-3;
    let mut out = ReducedXResidual {
        second_order: 0.0,
        first_order: 0.0,
    };
    for p in &trace.samples {
        let x2 = p.x * p.x;
        let rhs = -(2.0 + 8.0 * a2) * x2 + x2 * x2 / (1.0 - a2) + (1.0 - a2) * (8.0 * a2 + 1.0);
        out.first_order = out.first_order.max((p.dx * p.dx - rhs).abs());
        if trace.covers(p.s + h) {
            let xm = trace.x_at(p.s - h)?.0;
            let xp = trace.x_at(p.s + h)?.0;
            let xpp = (xp - 2.0 * p.x + xm) / (h * h);
            let res = xpp + 2.0 * (1.0 + 4.0 * a2 - x2 / (1.0 - a2)) * p.x;
            out.second_order = out.second_order.max(res.abs());
        }
    }
    Ok(out)
}

/// Drift of both first integrals, recomputed from the samples.
pub fn conservation(trace: &Trace) -> f64 {
    trace
        .samples
        .iter()
        .map(|p| {
            let (h1, h2) = first_integrals(&p.state(), trace.a);
            h1.abs().max(h2.abs())
        })
        .fold(0.0, f64::max)
}

/// Geometric admissibility of calibrated parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub below_hemisphere_value: bool,
    pub starts_above_boundary: bool,
    pub z_positive: bool,
    pub y_positive: bool,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.below_hemisphere_value && self.starts_above_boundary && self.z_positive && self.y_positive
    }
}

pub fn admissibility(params: &CapParams, trace: &Trace) -> Admissibility {
    let hemi = (3.0f64 / 8.0).sqrt();
    let at_pole = (params.r - FRAC_PI_2).abs() < 1e-12;
    let inside: Vec<_> = trace.samples.iter().filter(|p| p.s <= params.s_r).collect();
    Admissibility {
        below_hemisphere_value: if at_pole {
            params.a <= hemi + 1e-9
        } else {
            params.a < hemi
        },
        starts_above_boundary: (1.0 - params.a * params.a).sqrt() > params.r.cos(),
        z_positive: inside.iter().all(|p| p.z > 0.0),
        y_positive: inside.iter().skip(1).all(|p| p.y > 0.0),
    }
}
