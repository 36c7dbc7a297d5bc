//! Adaptive Dormand–Prince 8(5,3) integration with 7th-order dense output.
//!
//! The stepper is generic over the state dimension so the same code drives the
//! four-dimensional orbit system and the two-dimensional Fourier mode equations.
//! Step-size control follows the classic DOP853 error norm, which blends the
//! 5th- and 3rd-order embedded estimates.

use serde::{Deserialize, Serialize};

use crate::dop853_tableau::{A, C, D, E3, E5};
use crate::error::{Error, Result};

const N_STAGES: usize = 12;
const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 1_000_000;

/// Nominal order of the propagating formula.
pub const METHOD_ORDER: u32 = 8;

/// Error-control settings for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Order of the propagating formula; informational, always [`METHOD_ORDER`].
    pub order: u32,
}

impl IntegratorConfig {
    /// Equal relative and absolute tolerance, unbounded step.
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_step: f64::INFINITY,
            order: METHOD_ORDER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        Ok(())
    }

    /// The larger of the two tolerances, used for drift bounds.
    pub fn tau(&self) -> f64 {
        self.rtol.max(self.atol)
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::with_tol(1e-12)
    }
}

/// One accepted step together with its interpolation polynomial.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub s0: f64,
    pub h: f64,
    pub y0: [f64; N],
    coeffs: [[f64; N]; 7],
}

impl<const N: usize> DenseStep<N> {
    pub fn s1(&self) -> f64 {
        self.s0 + self.h
    }

    /// Evaluates the continuous extension at `s`, expected to lie in `[s0, s0 + h]`.
    pub fn eval(&self, s: f64) -> [f64; N] {
        let x = (s - self.s0) / self.h;
        let mut y = [0.0; N];
        for (i, f) in self.coeffs.iter().rev().enumerate() {
            let w = if i.is_multiple_of(2) { x } else { 1.0 - x };
            for k in 0..N {
                y[k] = (y[k] + f[k]) * w;
            }
        }
        for (v, y0) in y.iter_mut().zip(&self.y0) {
            *v += y0;
        }
        y
    }
}

/// Output of an adaptive run: the accepted steps and their endpoints.
#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub steps: Vec<DenseStep<N>>,
    /// Knot abscissae, `knots[0]` is the initial point.
    pub knots: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub rejected: usize,
    pub evaluations: usize,
}

impl<const N: usize> Solution<N> {
    pub fn s_start(&self) -> f64 {
        self.knots[0]
    }

    pub fn s_end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Dense evaluation at `s`, clamped to the covered interval.
    pub fn eval(&self, s: f64) -> [f64; N] {
        if self.steps.is_empty() {
            return self.states[0];
        }
        let idx = match self.knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => return self.states[i],
            Err(0) => 0,
            Err(i) => (i - 1).min(self.steps.len() - 1),
        };
        self.steps[idx].eval(s)
    }
}

fn rms<const N: usize>(v: &[f64; N], scale: &[f64; N]) -> f64 {
    let mut acc = 0.0;
    for k in 0..N {
        let t = v[k] / scale[k];
        acc += t * t;
    }
    (acc / N as f64).sqrt()
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, k: &[[f64; N]], w: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (kj, &wj) in k.iter().zip(w) {
        if wj == 0.0 {
            continue;
        }
        for c in 0..N {
            out[c] += h * wj * kj[c];
        }
    }
    out
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    s0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    direction: f64,
    cfg: &IntegratorConfig,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut scale = [0.0; N];
    for k in 0..N {
        scale[k] = cfg.atol + y0[k].abs() * cfg.rtol;
    }
    let d0 = rms(y0, &scale);
    let d1 = rms(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = *y0;
    for k in 0..N {
        y1[k] += direction * h0 * f0[k];
    }
    let f1 = f(s0 + direction * h0, &y1);
    let mut diff = [0.0; N];
    for k in 0..N {
        diff[k] = f1[k] - f0[k];
    }
    let d2 = rms(&diff, &scale) / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (METHOD_ORDER as f64))
    };
    (100.0 * h0).min(h1).min(cfg.max_step)
}

struct StepResult<const N: usize> {
    y_new: [f64; N],
    k: [[f64; N]; 16],
    err: f64,
}

fn rk_step<const N: usize, F>(
    f: &mut F,
    s: f64,
    y: &[f64; N],
    f0: &[f64; N],
    h: f64,
    cfg: &IntegratorConfig,
) -> StepResult<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 16];
    k[0] = *f0;
    for i in 1..N_STAGES {
        let yi = axpy(y, h, &k[..i], &A[i][..i]);
        k[i] = f(s + C[i] * h, &yi);
    }
    let y_new = axpy(y, h, &k[..N_STAGES], &A[N_STAGES][..N_STAGES]);
    k[N_STAGES] = f(s + h, &y_new);

    let mut err5 = 0.0;
    let mut err3 = 0.0;
    for c in 0..N {
        let scale = cfg.atol + cfg.rtol * y[c].abs().max(y_new[c].abs());
        let mut e5 = 0.0;
        let mut e3 = 0.0;
        for j in 0..=N_STAGES {
            e5 += k[j][c] * E5[j];
            e3 += k[j][c] * E3[j];
        }
        err5 += (e5 / scale).powi(2);
        err3 += (e3 / scale).powi(2);
    }
    let err = if err5 == 0.0 && err3 == 0.0 {
        0.0
    } else {
        h.abs() * err5 / ((err5 + 0.01 * err3) * N as f64).sqrt()
    };
    StepResult { y_new, k, err }
}

fn dense_step<const N: usize, F>(f: &mut F, s: f64, y: &[f64; N], h: f64, step: &mut StepResult<N>) -> DenseStep<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    for i in (N_STAGES + 1)..16 {
        let yi = axpy(y, h, &step.k[..i], &A[i][..i]);
        step.k[i] = f(s + C[i] * h, &yi);
    }
    let mut coeffs = [[0.0; N]; 7];
    for c in 0..N {
        let dy = step.y_new[c] - y[c];
        coeffs[0][c] = dy;
        coeffs[1][c] = h * step.k[0][c] - dy;
        coeffs[2][c] = 2.0 * dy - h * (step.k[N_STAGES][c] + step.k[0][c]);
        for (row, d) in D.iter().enumerate() {
            let acc: f64 = d.iter().zip(&step.k).map(|(dj, kj)| dj * kj[c]).sum();
            coeffs[3 + row][c] = h * acc;
        }
    }
    DenseStep {
        s0: s,
        h,
        y0: *y,
        coeffs,
    }
}

/// Integrates `y' = f(s, y)` from `s0` toward `s_end`.
///
/// After each accepted step `stop(s, y)` is consulted; returning `true` ends
/// the run early at that step. The returned solution carries dense output
/// for every accepted step.
pub fn solve<const N: usize, F, S>(
    mut f: F,
    s0: f64,
    y0: [f64; N],
    s_end: f64,
    cfg: &IntegratorConfig,
    mut stop: S,
) -> Result<Solution<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: FnMut(f64, &[f64; N]) -> bool,
{
    cfg.validate()?;
    let direction = if s_end >= s0 { 1.0 } else { -1.0 };
    let mut sol = Solution {
        steps: Vec::new(),
        knots: vec![s0],
        states: vec![y0],
        rejected: 0,
        evaluations: 0,
    };
    if s_end == s0 {
        return Ok(sol);
    }

    let mut evals = 0usize;
    let mut counted = |s: f64, y: &[f64; N]| {
        evals += 1;
        f(s, y)
    };

    let mut s = s0;
    let mut y = y0;
    let mut fy = counted(s, &y);
    let mut h_abs = initial_step(&mut counted, s, &y, &fy, direction, cfg);

    for _ in 0..MAX_STEPS {
        let min_step = 10.0 * (s.abs() * f64::EPSILON).max(f64::MIN_POSITIVE);
        let mut step_rejected = false;
        let (s_new, mut res, h) = loop {
            if h_abs < min_step {
                return Err(Error::StepFailure { s });
            }
            let h_try = h_abs.min(cfg.max_step);
            let mut s_new = s + direction * h_try;
            if direction * (s_new - s_end) > 0.0 {
                s_new = s_end;
            }
            let h = s_new - s;
            let res = rk_step(&mut counted, s, &y, &fy, h, cfg);
            if res.err < 1.0 {
                let mut factor = if res.err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * res.err.powf(-1.0 / METHOD_ORDER as f64)).min(MAX_FACTOR)
                };
                if step_rejected {
                    factor = factor.min(1.0);
                }
                h_abs = h.abs() * factor;
                break (s_new, res, h);
            }
            h_abs = h.abs() * (SAFETY * res.err.powf(-1.0 / METHOD_ORDER as f64)).max(MIN_FACTOR);
            step_rejected = true;
            sol.rejected += 1;
        };
        let dense = dense_step(&mut counted, s, &y, h, &mut res);
        s = s_new;
        y = res.y_new;
        fy = res.k[N_STAGES];
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::StepFailure { s });
        }
        sol.steps.push(dense);
        sol.knots.push(s);
        sol.states.push(y);
        if stop(s, &y) || direction * (s - s_end) >= 0.0 {
            sol.evaluations = evals;
            return Ok(sol);
        }
    }
    Err(Error::StepFailure { s })
}

/// Fixed-step propagation with the 8th-order formula, used for order checks.
pub fn fixed_step<const N: usize, F>(mut f: F, s0: f64, y0: [f64; N], s_end: f64, n_steps: usize) -> [f64; N]
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let h = (s_end - s0) / n_steps as f64;
    let cfg = IntegratorConfig::with_tol(1.0);
    let mut y = y0;
    for i in 0..n_steps {
        let s = s0 + i as f64 * h;
        let f0 = f(s, &y);
        y = rk_step(&mut f, s, &y, &f0, h, &cfg).y_new;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_s: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_endpoint_and_dense_output() {
        let cfg = IntegratorConfig::with_tol(1e-12);
        let sol = solve(harmonic, 0.0, [0.0, 1.0], 10.0, &cfg, |_, _| false).unwrap();
        let end = sol.states.last().unwrap();
        assert!((end[0] - 10f64.sin()).abs() < 1e-10);
        assert!((end[1] - 10f64.cos()).abs() < 1e-10);
        for i in 0..200 {
            let s = 0.05 * i as f64;
            let y = sol.eval(s);
            assert!((y[0] - s.sin()).abs() < 1e-10, "s = {s}: {}", y[0] - s.sin());
        }
    }

    #[test]
    fn stop_predicate_ends_early() {
        let cfg = IntegratorConfig::with_tol(1e-10);
        let sol = solve(harmonic, 0.0, [0.0, 1.0], 10.0, &cfg, |_, y| y[0] < 0.0).unwrap();
        assert!(sol.s_end() > std::f64::consts::PI);
        assert!(sol.s_end() < 5.0);
    }

    #[test]
    fn backward_integration() {
        let cfg = IntegratorConfig::with_tol(1e-12);
        let sol = solve(harmonic, 0.0, [0.0, 1.0], -2.0, &cfg, |_, _| false).unwrap();
        let y = sol.states.last().unwrap();
        assert!((y[0] - (-2f64).sin()).abs() < 1e-10);
    }

    #[test]
    fn fixed_step_order_is_eight() {
        let exact = 2f64.sin();
        let e1 = (fixed_step(harmonic, 0.0, [0.0, 1.0], 2.0, 4)[0] - exact).abs();
        let e2 = (fixed_step(harmonic, 0.0, [0.0, 1.0], 2.0, 8)[0] - exact).abs();
        let order = (e1 / e2).log2();
        assert!((7.5..9.5).contains(&order), "observed order {order}");
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let cfg = IntegratorConfig::with_tol(0.0);
        assert!(solve(harmonic, 0.0, [0.0, 1.0], 1.0, &cfg, |_, _| false).is_err());
    }
}
