//! Bracketed scalar root finding: bisection safeguarding a finite-difference Newton step.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    pub xtol: f64,
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-15,
            ftol: 1e-14,
            max_iter: 200,
        }
    }
}

/// Samples `f` at `n + 1` equispaced points and returns the first sign change.
pub fn scan_bracket<F>(mut f: F, lo: f64, hi: f64, n: usize) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let Some(fx) = f(x) else {
            prev = None;
            continue;
        };
        if let Some((xp, fp)) = prev {
            if fp == 0.0 {
                return Some((xp, xp));
            }
            if fp.signum() != fx.signum() {
                return Some((xp, x));
            }
        }
        prev = Some((x, fx));
    }
    None
}

/// Solves `f(x) = 0` on a sign-changing bracket `[lo, hi]`.
///
/// Newton steps use a one-sided difference quotient of width `~√ε·|x|`; any
/// step that leaves the bracket or fails to halve it is replaced by bisection.
pub fn solve_bracketed<F>(mut f: F, lo: f64, hi: f64, opts: &RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a)?;
    if fa == 0.0 {
        return Ok(a);
    }
    let fb = f(b)?;
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{a}, {b}]: f = ({fa:e}, {fb:e})"
        )));
    }
    let (mut x, mut fx) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    let update = |c: f64, fc: f64, a: &mut f64, b: &mut f64, fa: &mut f64| {
        if fc.signum() == fa.signum() {
            *a = c;
            *fa = fc;
        } else {
            *b = c;
        }
    };
    for _ in 0..opts.max_iter {
        if fx.abs() <= opts.ftol || (b - a) <= opts.xtol * (1.0 + x.abs()) {
            return Ok(x);
        }
        let width = b - a;
        let dx = f64::EPSILON.sqrt() * x.abs().max(1e-3);
        let probe = if x + dx <= b { x + dx } else { x - dx };
        let slope = (f(probe)? - fx) / (probe - x);
        let newton = x - fx / slope;
        let c = if newton.is_finite() && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        update(c, fc, &mut a, &mut b, &mut fa);
        x = c;
        fx = fc;
        if b - a > 0.5 * width {
            let m = 0.5 * (a + b);
            let fm = f(m)?;
            if fm == 0.0 {
                return Ok(m);
            }
            update(m, fm, &mut a, &mut b, &mut fa);
            if fm.abs() < fx.abs() {
                x = m;
                fx = fm;
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        lo: a,
        hi: b,
        residual: fx.abs(),
        detail: "bracket did not collapse".into(),
    })
}
