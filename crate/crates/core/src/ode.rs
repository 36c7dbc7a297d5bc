//! The band's profile system, its first integrals and the lifted coordinate x.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, IntegratorConfig, Solution};

/// Guard on `1 - y² - z²` below which the quotient for x′ is not trusted.
pub const NEAR_POLE_EPS: f64 = 1e-12;

/// Below this value of `1 - y² - z²` the signed lift switches to the metric identity.
const LIFT_SWITCH: f64 = 1e-8;

/// Point of the phase space `(y, y′, z, z′)` at arclength `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub s: f64,
    pub y: f64,
    pub dy: f64,
    pub z: f64,
    pub dz: f64,
}

impl OdeState {
    pub fn new(s: f64, y: f64, dy: f64, z: f64, dz: f64) -> Self {
        Self { s, y, dy, z, dz }
    }

    /// `(0, 2a, a, 0)` at `s = 0`.
    pub fn canonical(a: f64) -> Self {
        Self::new(0.0, 0.0, 2.0 * a, a, 0.0)
    }

    pub fn from_vec(s: f64, v: &[f64; 4]) -> Self {
        Self::new(s, v[0], v[1], v[2], v[3])
    }

    pub fn to_vec(&self) -> [f64; 4] {
        [self.y, self.dy, self.z, self.dz]
    }

    /// The state at `-s` on the same orbit: y odd, z even.
    pub fn reflected(&self) -> Self {
        Self::new(-self.s, -self.y, self.dy, self.z, -self.dz)
    }

    pub fn radius2(&self) -> f64 {
        self.y * self.y + self.z * self.z
    }

    /// `y y′ + z z′`, which equals `-x x′`.
    pub fn q(&self) -> f64 {
        self.y * self.dy + self.z * self.dz
    }
}

fn rhs_vec(v: &[f64; 4]) -> [f64; 4] {
    let [y, dy, z, dz] = *v;
    let common = 2.0 * y * y + 8.0 * z * z;
    [dy, (1.0 - common) * y, dz, (4.0 - common) * z]
}

/// Phase derivative `(y′, y″, z′, z″)`.
pub fn rhs(state: &OdeState) -> [f64; 4] {
    rhs_vec(&state.to_vec())
}

/// `(H1, H2)`; both vanish identically along the orbit of [`OdeState::canonical`].
pub fn first_integrals(state: &OdeState, a: f64) -> (f64, f64) {
    let OdeState { y, dy, z, dz, .. } = *state;
    let (y2, z2) = (y * y, z * z);
    let c = 4.0 * a * a * (3.0 - 4.0 * a * a);
    let rho = y2 + 4.0 * z2;
    let h1 = rho * rho - y2 - 16.0 * z2 + dy * dy + 4.0 * dz * dz + c;
    let h2 = 12.0 * z2 * (z2 - 1.0) + 3.0 * y2 * z2 + z2 * dy * dy - 2.0 * y * dy * z * dz + (3.0 + y2) * dz * dz + c;
    (h1, h2)
}

/// `ρ = y² + 4z²`.
pub fn conformal_factor(state: &OdeState) -> f64 {
    state.y * state.y + 4.0 * state.z * state.z
}

/// Positive lift `x = √(1 - y² - z²)` and `x′ = -(y y′ + z z′)/x`.
pub fn lift_x(state: &OdeState) -> Result<(f64, f64)> {
    let margin = 1.0 - state.radius2();
    if !(margin >= NEAR_POLE_EPS) {
        return Err(Error::NearPole { margin });
    }
    let x = margin.sqrt();
    Ok((x, -state.q() / x))
}

/// `|x′|` from the metric identity `ρ = x′² + y′² + z′²` (on-orbit only).
pub fn metric_dx_abs(state: &OdeState) -> f64 {
    (conformal_factor(state) - state.dy * state.dy - state.dz * state.dz)
        .max(0.0)
        .sqrt()
}

/// Signed lift given the sign of x on the current arc.
///
/// Near `x = 0` the square root loses half the digits, so x′ is taken from the
/// metric identity and x recovered from `x x′ = -q`.
pub fn lift_x_signed(state: &OdeState, sign: f64) -> (f64, f64) {
    let margin = 1.0 - state.radius2();
    let q = state.q();
    if margin > LIFT_SWITCH {
        let x = sign * margin.sqrt();
        return (x, -q / x);
    }
    let dx_sign = if q * sign > 0.0 {
        -1.0
    } else if q * sign < 0.0 {
        1.0
    } else {
        -sign
    };
    let dx = dx_sign * metric_dx_abs(state);
    let x = if dx == 0.0 {
        sign * margin.max(0.0).sqrt()
    } else {
        -q / dx
    };
    (x, dx)
}

/// One row of a [`Trace`], with the derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s: f64,
    pub y: f64,
    pub dy: f64,
    pub z: f64,
    pub dz: f64,
    pub x: f64,
    pub dx: f64,
    pub rho: f64,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
}

impl Sample {
    pub fn state(&self) -> OdeState {
        OdeState::new(self.s, self.y, self.dy, self.z, self.dz)
    }
}

/// Dense solution of the canonical orbit for `s ≥ 0`; negative `s` is served by parity.
#[derive(Debug, Clone)]
pub struct Trace {
    pub a: f64,
    pub config: IntegratorConfig,
    pub samples: Vec<Sample>,
    solution: Solution<4>,
    /// Sign of x at the start of each step.
    signs: Vec<f64>,
}

impl Trace {
    pub fn s_max(&self) -> f64 {
        self.solution.s_end()
    }

    fn step_index(&self, s: f64) -> usize {
        let knots = &self.solution.knots;
        match knots.binary_search_by(|k| k.total_cmp(&s)) {
            Ok(i) => i.min(knots.len().saturating_sub(2)),
            Err(0) => 0,
            Err(i) => (i - 1).min(knots.len().saturating_sub(2)),
        }
    }

    pub fn covers(&self, s: f64) -> bool {
        s.abs() <= self.s_max() * (1.0 + 4.0 * f64::EPSILON)
    }

    /// Dense state at `s`, reconstructed by parity for `s < 0`.
    pub fn state_at(&self, s: f64) -> Result<OdeState> {
        if !self.covers(s) {
            return Err(Error::CoverageError {
                covered: self.s_max(),
                required: s.abs(),
            });
        }
        if s < 0.0 {
            return Ok(self.state_at(-s)?.reflected());
        }
        Ok(OdeState::from_vec(s, &self.solution.eval(s)))
    }

    /// Signed `(x, x′)` at `s`, continuous through zeros of x. x is even in s.
    pub fn x_at(&self, s: f64) -> Result<(f64, f64)> {
        if s < 0.0 {
            let (x, dx) = self.x_at(-s)?;
            return Ok((x, -dx));
        }
        let state = self.state_at(s)?;
        let i = self.step_index(s);
        let mut sign = self.signs[i];
        let q0 = self.solution.states[i];
        let q_start = q0[0] * q0[1] + q0[2] * q0[3];
        if q_start >= 0.0 && state.q() < 0.0 {
            sign = -sign;
        }
        Ok(lift_x_signed(&state, sign))
    }

    pub fn rho_at(&self, s: f64) -> Result<f64> {
        Ok(conformal_factor(&self.state_at(s)?))
    }

    /// Largest `|H1|`, `|H2|` over the samples.
    pub fn max_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|p| p.h1.abs().max(p.h2.abs()))
            .fold(0.0, f64::max)
    }

    pub fn knots(&self) -> &[f64] {
        &self.solution.knots
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,y,dy,z,dz,x,dx,rho,H1,H2")?;
        for p in &self.samples {
            let row = [p.s, p.y, p.dy, p.z, p.dz, p.x, p.dx, p.rho, p.h1, p.h2].map(|v| format!("{:?}", v + 0.0));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

/// Parses the CSV written by [`Trace::write_csv`].
pub fn read_csv(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("s,y,dy,z,dz,x,dx,rho,H1,H2") => {}
        other => {
            return Err(Error::InvalidInput(format!("unexpected trace header {other:?}")));
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let v: Vec<f64> = line
                .split(',')
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("bad trace row {line:?}: {e}")))?;
            if v.len() != 10 {
                return Err(Error::InvalidInput(format!("trace row has {} fields", v.len())));
            }
            Ok(Sample {
                s: v[0],
                y: v[1],
                dy: v[2],
                z: v[3],
                dz: v[4],
                x: v[5],
                dx: v[6],
                rho: v[7],
                h1: v[8],
                h2: v[9],
            })
        })
        .collect()
}

/// Runs the system from an arbitrary state, without lifting or monitoring.
pub fn propagate(start: &OdeState, s_end: f64, cfg: &IntegratorConfig) -> Result<Solution<4>> {
    integrator::solve(|_, v| rhs_vec(v), start.s, start.to_vec(), s_end, cfg, |_, _| false)
}

/// Integrates the canonical orbit on `[0, s_end]`.
pub fn integrate(a: f64, s_end: f64, cfg: &IntegratorConfig) -> Result<Trace> {
    integrate_until(a, s_end, cfg, |_| false)
}

/// As [`integrate`], ending at the first accepted step for which `stop` holds.
pub fn integrate_until<S>(a: f64, s_end: f64, cfg: &IntegratorConfig, mut stop: S) -> Result<Trace>
where
    S: FnMut(&OdeState) -> bool,
{
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidInput(format!("a must lie in (0, 1), got {a}")));
    }
    if !(s_end > 0.0) {
        return Err(Error::InvalidInput(format!("s_end must be positive, got {s_end}")));
    }
    cfg.validate()?;
    let bound = 1.0 + 10.0 * cfg.tau();
    let mut exit: Option<(f64, f64)> = None;
    let solution = integrator::solve(
        |_, v| rhs_vec(v),
        0.0,
        OdeState::canonical(a).to_vec(),
        s_end,
        cfg,
        |s, v| {
            let norm2 = v[0] * v[0] + v[2] * v[2];
            if norm2 > bound {
                exit = Some((s, norm2));
                return true;
            }
            stop(&OdeState::from_vec(s, v))
        },
    )?;
    if let Some((s, norm2)) = exit {
        return Err(Error::DomainExit { s, norm2 });
    }

    let mut signs = Vec::with_capacity(solution.knots.len());
    let mut sign = 1.0;
    let mut prev_q = 0.0;
    for (k, v) in solution.states.iter().enumerate() {
        let q = v[0] * v[1] + v[2] * v[3];
        if k > 0 && prev_q >= 0.0 && q < 0.0 {
            sign = -sign;
        }
        signs.push(sign);
        prev_q = q;
    }
    // the sign at a knot is the sign on the step that starts there
    let samples = solution
        .knots
        .iter()
        .zip(&solution.states)
        .zip(&signs)
        .map(|((&s, v), &sign)| {
            let st = OdeState::from_vec(s, v);
            let (x, dx) = lift_x_signed(&st, sign);
            let (h1, h2) = first_integrals(&st, a);
            Sample {
                s,
                y: st.y,
                dy: st.dy,
                z: st.z,
                dz: st.dz,
                x,
                dx,
                rho: conformal_factor(&st),
                h1,
                h2,
            }
        })
        .collect();
    Ok(Trace {
        a,
        config: *cfg,
        samples,
        solution,
        signs,
    })
}
