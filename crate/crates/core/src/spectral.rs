//! Steklov spectrum with frequency 2 of the calibrated band, one Fourier mode at a time.
//!
//! Mode k of an eigenfunction is `ψ_k(s) e^{ikθ}` with `ψ″ = (k² - 2ρ)ψ`; the
//! Möbius identification forces `ψ_k(-s) = (-1)^k ψ_k(s)`, so each mode has a
//! one-dimensional admissible solution and σ is read off at `s_r`.

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibration_config, CapParams};
use crate::error::{Error, Result};
use crate::integrator;
use crate::ode::Trace;

const DEGENERACY_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    #[default]
    Even,
    Odd,
}

impl Parity {
    pub fn of_mode(k: usize) -> Self {
        if k.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn initial(self) -> [f64; 2] {
        match self {
            Parity::Even => [1.0, 0.0],
            Parity::Odd => [0.0, 1.0],
        }
    }

    fn ghost_sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// One mode of the spectrum with its radial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub k: usize,
    pub sigma: f64,
    pub mult: usize,
    #[serde(skip)]
    pub parity: Parity,
    /// `(s, ψ, ψ′)` at the integrator's knots on `[0, s_r]`.
    #[serde(skip)]
    pub profile: Vec<[f64; 3]>,
}

impl SpectralLine {
    /// `ψ′(s_r)/√ρ(s_r) - σψ(s_r)` recomputed from the stored profile.
    pub fn robin_defect(&self, rho_r: f64) -> f64 {
        let last = self.profile.last().expect("profile is never empty");
        last[2] / rho_r.sqrt() - self.sigma * last[1]
    }
}

fn shoot_mode(k: usize, parity: Parity, s_r: f64, trace: &Trace) -> Result<SpectralLine> {
    let rho_r = trace.rho_at(s_r)?;
    if !trace.covers(s_r) {
        return Err(Error::CoverageError {
            covered: trace.s_max(),
            required: s_r,
        });
    }
    let k2 = (k * k) as f64;
    let sol = integrator::solve(
        |s, v: &[f64; 2]| {
            let rho = trace.rho_at(s).expect("mode integration stays inside the trace");
            [v[1], (k2 - 2.0 * rho) * v[0]]
        },
        0.0,
        parity.initial(),
        s_r,
        &calibration_config(),
        |_, _| false,
    )?;
    let profile: Vec<[f64; 3]> = sol
        .knots
        .iter()
        .zip(&sol.states)
        .map(|(&s, v)| [s, v[0], v[1]])
        .collect();
    let end = sol.states.last().expect("at least the initial state");
    let sup = profile.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
    if end[0].abs() < DEGENERACY_RATIO * sup {
        return Err(Error::DirichletDegeneracy { k, value: end[0] });
    }
    Ok(SpectralLine {
        k,
        sigma: end[1] / (rho_r.sqrt() * end[0]),
        mult: if k == 0 { 1 } else { 2 },
        parity,
        profile,
    })
}

/// Shoots mode k with the parity forced by the Möbius quotient.
pub fn mode_sigma(k: usize, params: &CapParams, trace: &Trace) -> Result<SpectralLine> {
    shoot_mode(k, Parity::of_mode(k), params.s_r, trace)
}

/// Mode k with the opposite parity; such values belong to the orientable double cover only.
pub fn wrong_parity_sigma(k: usize, params: &CapParams, trace: &Trace) -> Result<SpectralLine> {
    shoot_mode(k, Parity::of_mode(k).flipped(), params.s_r, trace)
}

/// Largest deviation between the normalized profile and a normalized reference function.
pub fn profile_mismatch<F>(line: &SpectralLine, reference: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let refs: Vec<f64> = line.profile.iter().map(|p| reference(p[0])).collect::<Result<_>>()?;
    let norm_psi = line.profile.iter().map(|p| p[1].abs()).fold(0.0, f64::max);
    let norm_ref = refs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // the profiles are fixed up to sign by their data at s = 0 and share it with the references
    Ok(line
        .profile
        .iter()
        .zip(&refs)
        .map(|(p, r)| (p[1] / norm_psi - r / norm_ref).abs())
        .fold(0.0, f64::max))
}

/// Cosine of the angle between the sampled profile and a reference function.
pub fn profile_correlation<F>(line: &SpectralLine, reference: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let (mut pp, mut rr, mut pr) = (0.0, 0.0, 0.0);
    for p in &line.profile {
        let r = reference(p[0])?;
        pp += p[1] * p[1];
        rr += r * r;
        pr += p[1] * r;
    }
    Ok(pr / (pp * rr).sqrt())
}

/// Lines for `k = 0..=k_max`, sorted by σ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub lines: Vec<SpectralLine>,
    /// `None` when mode 0 is Dirichlet-degenerate (the hemisphere).
    pub sigma0: Option<f64>,
    pub sigma1: f64,
    /// Distance from `cot r` to the nearest line other than modes 1 and 2.
    pub gap: f64,
    #[serde(skip)]
    pub r: f64,
    #[serde(skip)]
    pub excluded: Vec<SpectralLine>,
}

impl SpectrumReport {
    pub fn line(&self, k: usize) -> Option<&SpectralLine> {
        self.lines.iter().find(|l| l.k == k)
    }

    pub fn sigma(&self, k: usize) -> Option<f64> {
        self.line(k).map(|l| l.sigma)
    }

    /// `|σ(1) - σ(2)|`.
    pub fn coincidence(&self) -> f64 {
        match (self.sigma(1), self.sigma(2)) {
            (Some(a), Some(b)) => (a - b).abs(),
            _ => f64::NAN,
        }
    }

    /// `min_{k≥3} σ(k) - cot r`.
    pub fn higher_mode_margin(&self) -> f64 {
        let cot = 1.0 / self.r.tan();
        self.lines
            .iter()
            .filter(|l| l.k >= 3)
            .map(|l| l.sigma - cot)
            .fold(f64::INFINITY, f64::min)
    }

    /// `σ(k) √ρ(s_r) / k`, which tends to 1 for large k.
    pub fn frozen_coefficient_ratio(&self, k: usize, rho_r: f64) -> Option<f64> {
        self.sigma(k).map(|s| s * rho_r.sqrt() / k as f64)
    }
}

pub fn spectrum(params: &CapParams, trace: &Trace, k_max: usize) -> Result<SpectrumReport> {
    if k_max < 3 {
        return Err(Error::InvalidInput(format!("k_max must be at least 3, got {k_max}")));
    }
    let mut lines = Vec::with_capacity(k_max + 1);
    let mut excluded = Vec::new();
    let mut sigma0 = None;
    for k in 0..=k_max {
        match mode_sigma(k, params, trace) {
            Ok(line) => {
                if k == 0 {
                    sigma0 = Some(line.sigma);
                }
                lines.push(line);
            }
            Err(Error::DirichletDegeneracy { .. }) if k == 0 => {}
            Err(e) => return Err(e),
        }
        if let Ok(line) = wrong_parity_sigma(k, params, trace) {
            excluded.push(line);
        }
    }
    let cot = 1.0 / params.r.tan();
    let sigma1 = lines
        .iter()
        .find(|l| l.k == 1)
        .map(|l| l.sigma)
        .expect("mode 1 is present");
    let gap = lines
        .iter()
        .filter(|l| l.k != 1 && l.k != 2)
        .map(|l| (l.sigma - cot).abs())
        .fold(f64::INFINITY, f64::min);
    lines.sort_by(|a, b| a.sigma.total_cmp(&b.sigma).then(a.k.cmp(&b.k)));
    Ok(SpectrumReport {
        lines,
        sigma0,
        sigma1,
        gap,
        r: params.r,
        excluded,
    })
}

/// Deviations of the first eigenvalues from `-tan r` and `cot r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstEigenMargins {
    /// `|σ(0) + tan r| / max(1, tan r)`; `None` at the hemisphere.
    pub sigma0: Option<f64>,
    pub sigma1: f64,
    pub sigma2: f64,
    pub higher_mode_margin: f64,
}

/// Checks `σ(0) = -tan r`, `σ(1) = σ(2) = cot r` and `σ(k) > cot r` for `3 ≤ k ≤ k_max`.
pub fn verify_first_eigen(params: &CapParams, trace: &Trace, k_max: usize, tol: f64) -> Result<FirstEigenMargins> {
    let k_max = k_max.max(5);
    let spec = spectrum(params, trace, k_max)?;
    let tan = params.r.tan();
    let cot = 1.0 / tan;
    let sigma = |k: usize| spec.sigma(k).expect("modes 1..k_max are present");
    let margins = FirstEigenMargins {
        sigma0: spec.sigma0.map(|s| (s + tan).abs() / tan.abs().max(1.0)),
        sigma1: (sigma(1) - cot).abs(),
        sigma2: (sigma(2) - cot).abs(),
        higher_mode_margin: spec.higher_mode_margin(),
    };
    let mut offending = Vec::new();
    if margins.sigma0.is_some_and(|d| !(d < tol)) {
        offending.push(format!("k=0: |sigma+tan r| = {:e}", margins.sigma0.unwrap()));
    }
    if !(margins.sigma1 < tol) {
        offending.push(format!("k=1: |sigma-cot r| = {:e}", margins.sigma1));
    }
    if !(margins.sigma2 < tol) {
        offending.push(format!("k=2: |sigma-cot r| = {:e}", margins.sigma2));
    }
    for l in spec.lines.iter().filter(|l| l.k >= 3 && !(l.sigma > cot)) {
        offending.push(format!("k={}: sigma = {} <= cot r", l.k, l.sigma));
    }
    if offending.is_empty() {
        Ok(margins)
    } else {
        Err(Error::VerificationFailure(offending.join("; ")))
    }
}

/// σ for mode k from a second-order finite-difference Dirichlet solve on `n` intervals.
pub fn fd_mode_sigma(k: usize, params: &CapParams, trace: &Trace, n: usize) -> Result<f64> {
    if n < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 intervals, got {n}")));
    }
    let h = params.s_r / n as f64;
    let h2 = h * h;
    let k2 = (k * k) as f64;
    let parity = Parity::of_mode(k);
    let rho: Vec<f64> = (0..=n)
        .map(|j| trace.rho_at(if j == n { params.s_r } else { j as f64 * h }))
        .collect::<Result<_>>()?;
    // rows j = 0..n-1, with psi_n = 1 moved to the right-hand side
    let mut lower = vec![1.0; n];
    let mut diag: Vec<f64> = (0..n).map(|j| -2.0 - h2 * (k2 - 2.0 * rho[j])).collect();
    let mut upper = vec![1.0; n];
    let mut rhs = vec![0.0; n];
    upper[0] += parity.ghost_sign();
    lower[0] = 0.0;
    rhs[n - 1] = -upper[n - 1];
    upper[n - 1] = 0.0;
    for j in 1..n {
        let m = lower[j] / diag[j - 1];
        diag[j] -= m * upper[j - 1];
        rhs[j] -= m * rhs[j - 1];
    }
    let mut psi = vec![0.0; n + 1];
    psi[n] = 1.0;
    psi[n - 1] = rhs[n - 1] / diag[n - 1];
    for j in (0..n - 1).rev() {
        psi[j] = (rhs[j] - upper[j] * psi[j + 1]) / diag[j];
    }
    let dpsi = (psi[n] - psi[n - 1]) / h + 0.5 * h * (k2 - 2.0 * rho[n]) * psi[n];
    Ok(dpsi / rho[n].sqrt())
}
