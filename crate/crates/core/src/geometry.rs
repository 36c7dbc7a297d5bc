//! The immersion `Φ(s,θ) = (x, y cosθ, y sinθ, z cos2θ, z sin2θ)` sampled on the
//! fundamental domain `[0, s_r] × [0, 2π)`, with its metric checks and measures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::calibrate::CapParams;
use crate::error::{Error, Result};
use crate::grid::{dot, norm2, quadrature, rows_map, simpson_weights, sub, Field, SpectralTheta, Vec5};
use crate::ode::{conformal_factor, Trace};

pub const MIN_SAMPLES: usize = 16;

/// Profile data of one s-row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowProfile {
    pub s: f64,
    pub x: f64,
    pub dx: f64,
    pub y: f64,
    pub dy: f64,
    pub z: f64,
    pub dz: f64,
    pub rho: f64,
}

impl RowProfile {
    fn nodes(&self, n_theta: usize) -> (Vec<Vec5>, Vec<Vec5>, Vec<Vec5>) {
        let mut phi = Vec::with_capacity(n_theta);
        let mut phi_s = Vec::with_capacity(n_theta);
        let mut phi_t = Vec::with_capacity(n_theta);
        for i in 0..n_theta {
            let t = 2.0 * PI * i as f64 / n_theta as f64;
            let (s1, c1) = t.sin_cos();
            let (s2, c2) = (2.0 * t).sin_cos();
            phi.push([self.x, self.y * c1, self.y * s1, self.z * c2, self.z * s2]);
            phi_s.push([self.dx, self.dy * c1, self.dy * s1, self.dz * c2, self.dz * s2]);
            phi_t.push([0.0, -self.y * s1, self.y * c1, -2.0 * self.z * s2, 2.0 * self.z * c2]);
        }
        (phi, phi_s, phi_t)
    }
}

/// Sampled immersion with analytic tangents and one ghost row beyond each end.
#[derive(Debug, Clone)]
pub struct ImmersionGrid {
    pub r: f64,
    pub s_r: f64,
    pub params: Option<CapParams>,
    pub n_s: usize,
    pub n_theta: usize,
    pub h: f64,
    /// Rows `j = -1..=n_s`, index `j + 1`.
    pub profile: Vec<RowProfile>,
    pub phi: Field,
    pub phi_s: Field,
    pub phi_theta: Field,
    pub parallel: bool,
}

fn check_sizes(n_s: usize, n_theta: usize) -> Result<()> {
    if n_s < MIN_SAMPLES || n_theta < MIN_SAMPLES || !n_theta.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "grid needs n_s >= {MIN_SAMPLES} and even n_theta >= {MIN_SAMPLES}, got {n_s} x {n_theta}"
        )));
    }
    Ok(())
}

impl ImmersionGrid {
    /// Grid over `[0, s_r]` from an arbitrary profile (used for synthetic controls).
    pub fn from_profile<F>(r: f64, s_r: f64, n_s: usize, n_theta: usize, parallel: bool, profile: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<RowProfile> + Sync + Send,
    {
        check_sizes(n_s, n_theta)?;
        let h = s_r / (n_s - 1) as f64;
        let rows: Vec<Result<RowProfile>> = rows_map(n_s + 2, parallel, |k| {
            let j = k as isize - 1;
            let s = if j == n_s as isize - 1 { s_r } else { j as f64 * h };
            profile(s)
        });
        let profile: Vec<RowProfile> = rows.into_iter().collect::<Result<_>>()?;
        let nodes = rows_map(n_s + 2, parallel, |k| profile[k].nodes(n_theta));
        let mut phi = Vec::with_capacity(n_s + 2);
        let mut phi_s = Vec::with_capacity(n_s + 2);
        let mut phi_t = Vec::with_capacity(n_s + 2);
        for (a, b, c) in nodes {
            phi.push(a);
            phi_s.push(b);
            phi_t.push(c);
        }
        Ok(Self {
            r,
            s_r,
            params: None,
            n_s,
            n_theta,
            h,
            profile,
            phi: Field::from_rows(n_s, n_theta, phi),
            phi_s: Field::from_rows(n_s, n_theta, phi_s),
            phi_theta: Field::from_rows(n_s, n_theta, phi_t),
            parallel,
        })
    }

    /// Samples the calibrated band from the trace's dense output.
    pub fn build(params: &CapParams, trace: &Trace, n_s: usize, n_theta: usize) -> Result<Self> {
        Self::build_with(params, trace, n_s, n_theta, false)
    }

    pub fn build_with(params: &CapParams, trace: &Trace, n_s: usize, n_theta: usize, parallel: bool) -> Result<Self> {
        check_sizes(n_s, n_theta)?;
        let h = params.s_r / (n_s - 1) as f64;
        let needed = params.s_r + h;
        if !trace.covers(needed) {
            return Err(Error::CoverageError {
                covered: trace.s_max(),
                required: needed,
            });
        }
        let mut grid = Self::from_profile(params.r, params.s_r, n_s, n_theta, parallel, |s| {
            let st = trace.state_at(s)?;
            let (x, dx) = trace.x_at(s)?;
            Ok(RowProfile {
                s,
                x,
                dx,
                y: st.y,
                dy: st.dy,
                z: st.z,
                dz: st.dz,
                rho: conformal_factor(&st),
            })
        })?;
        grid.params = Some(*params);
        Ok(grid)
    }

    pub fn row_profile(&self, j: isize) -> &RowProfile {
        &self.profile[(j + 1) as usize]
    }

    pub fn rho(&self, j: isize) -> f64 {
        self.row_profile(j).rho
    }

    pub fn boundary_row(&self) -> isize {
        self.n_s as isize - 1
    }

    pub fn simpson(&self) -> Vec<f64> {
        simpson_weights(self.n_s, self.h)
    }

    pub fn spectral(&self) -> SpectralTheta {
        SpectralTheta::new(self.n_theta)
    }

    /// `∫∫ f(j, i) ds dθ` over the fundamental domain.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        quadrature(&self.simpson(), self.n_theta, self.parallel, f)
    }

    /// `∫ f(i) dθ` along the boundary row.
    pub fn integrate_boundary<F>(&self, f: F) -> f64
    where
        F: Fn(usize) -> f64,
    {
        let mut acc = 0.0;
        for i in 0..self.n_theta {
            acc += f(i);
        }
        acc * 2.0 * PI / self.n_theta as f64
    }
}

/// Conformality and containment residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sphere: f64,
    pub g11_minus_rho: f64,
    pub g22_minus_rho: f64,
    pub g11_minus_g22: f64,
    pub g12: f64,
    /// `min (Φ₀ - cos r)`, attained on the boundary circle.
    pub containment_margin: f64,
    /// `max |‖Φ_θ‖² - ρ|` with the analytic tangent.
    pub g22_analytic: f64,
}

impl MetricReport {
    pub fn conformality(&self) -> f64 {
        self.g11_minus_rho.max(self.g22_minus_rho).max(self.g12)
    }
}

pub fn metric_report(grid: &ImmersionGrid) -> MetricReport {
    let ps = grid.phi.d_s(grid.h);
    let pt = grid.phi.d_theta_fd();
    let cos_r = grid.r.cos();
    let rows = rows_map(grid.n_s, grid.parallel, |j| {
        let rho = grid.rho(j as isize);
        let mut m = [0.0f64; 6];
        let mut margin = f64::INFINITY;
        for i in 0..grid.n_theta {
            let p = grid.phi.at(j as isize, i);
            let (a, b) = (&ps[j][i], &pt[j][i]);
            let (g11, g22, g12) = (norm2(a), norm2(b), dot(a, b));
            m[0] = m[0].max((norm2(p) - 1.0).abs());
            m[1] = m[1].max((g11 - rho).abs());
            m[2] = m[2].max((g22 - rho).abs());
            m[3] = m[3].max((g11 - g22).abs());
            m[4] = m[4].max(g12.abs());
            m[5] = m[5].max((norm2(grid.phi_theta.at(j as isize, i)) - rho).abs());
            margin = margin.min(p[0] - cos_r);
        }
        (m, margin)
    });
    let mut out = MetricReport {
        sphere: 0.0,
        g11_minus_rho: 0.0,
        g22_minus_rho: 0.0,
        g11_minus_g22: 0.0,
        g12: 0.0,
        containment_margin: f64::INFINITY,
        g22_analytic: 0.0,
    };
    for (m, margin) in rows {
        out.sphere = out.sphere.max(m[0]);
        out.g11_minus_rho = out.g11_minus_rho.max(m[1]);
        out.g22_minus_rho = out.g22_minus_rho.max(m[2]);
        out.g11_minus_g22 = out.g11_minus_g22.max(m[3]);
        out.g12 = out.g12.max(m[4]);
        out.g22_analytic = out.g22_analytic.max(m[5]);
        out.containment_margin = out.containment_margin.min(margin);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalityReport {
    pub max: f64,
    pub per_coordinate: [f64; 5],
}

/// `max |Δ_g φ_i + 2 φ_i|` with `Δ_g = ρ⁻¹(∂_ss + ∂_θθ)`; s by central differences, θ spectrally.
pub fn minimality_residual(grid: &ImmersionGrid) -> MinimalityReport {
    let pss = grid.phi.d_ss(grid.h);
    let sp = grid.spectral();
    let rows = rows_map(grid.n_s, grid.parallel, |j| {
        let ptt = sp.derivative(grid.phi.row(j as isize), 2);
        let rho = grid.rho(j as isize);
        let mut worst = [0.0f64; 5];
        for i in 0..grid.n_theta {
            let p = grid.phi.at(j as isize, i);
            for k in 0..5 {
                let res = (pss[j][i][k] + ptt[i][k]) / rho + 2.0 * p[k];
                worst[k] = worst[k].max(res.abs());
            }
        }
        worst
    });
    let mut per = [0.0f64; 5];
    for w in rows {
        for k in 0..5 {
            per[k] = per[k].max(w[k]);
        }
    }
    MinimalityReport {
        max: per.iter().copied().fold(0.0, f64::max),
        per_coordinate: per,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryReport {
    /// `max ‖N - ν̂‖` from the 5-vector difference.
    pub defect: f64,
    /// The same from `‖N - ν̂‖² = 2 + 2x′/(sin r √ρ)`, which loses half the digits near zero.
    pub defect_expansion: f64,
    pub square_agreement: f64,
}

/// Compares the cap's unit normal `(cos r·p - e₀)/sin r` with the conormal `Φ_s/√ρ` on the boundary.
pub fn free_boundary_residual(grid: &ImmersionGrid) -> FreeBoundaryReport {
    let jb = grid.boundary_row();
    let prof = grid.row_profile(jb);
    let (sin_r, cos_r) = grid.r.sin_cos();
    let sq = prof.rho.sqrt();
    let expansion2 = 2.0 + 2.0 * prof.dx / (sin_r * sq);
    let mut defect2: f64 = 0.0;
    let mut agreement: f64 = 0.0;
    for i in 0..grid.n_theta {
        let p = grid.phi.at(jb, i);
        let mut n = p.map(|v| cos_r * v);
        n[0] -= 1.0;
        let n = n.map(|v| v / sin_r);
        let nu = grid.phi_s.at(jb, i).map(|v| v / sq);
        let d2 = norm2(&sub(&n, &nu));
        defect2 = defect2.max(d2);
        agreement = agreement.max((d2 - expansion2).abs());
    }
    FreeBoundaryReport {
        defect: defect2.sqrt(),
        defect_expansion: expansion2.max(0.0).sqrt(),
        square_agreement: agreement,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measures {
    pub area: f64,
    pub boundary_length: f64,
    pub theta_r: f64,
}

/// Area and boundary length of the band and `Θ_r = [σ₀cos²r + σ₁sin²r]|∂Σ| + 2|Σ|`.
pub fn measures(grid: &ImmersionGrid, sigma0: f64, sigma1: f64) -> Measures {
    let area = grid.integrate(|j, _| grid.rho(j as isize));
    let boundary_length = 2.0 * PI * grid.rho(grid.boundary_row()).sqrt();
    let (s, c) = grid.r.sin_cos();
    Measures {
        area,
        boundary_length,
        theta_r: (sigma0 * c * c + sigma1 * s * s) * boundary_length + 2.0 * area,
    }
}

/// Aggregated geometric residuals and measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub n_s: usize,
    pub n_theta: usize,
    pub sphere: f64,
    pub conformality: Conformality,
    pub containment_margin: f64,
    pub minimality: MinimalityReport,
    pub free_boundary_defect: f64,
    pub area: f64,
    pub boundary_length: f64,
    pub theta_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conformality {
    pub g11_minus_g22: f64,
    pub g12: f64,
    pub g11_minus_rho: f64,
    pub g22_minus_rho: f64,
}

pub fn geometry_report(grid: &ImmersionGrid, sigma0: f64, sigma1: f64) -> GeometryReport {
    let m = metric_report(grid);
    let minimality = minimality_residual(grid);
    let fb = free_boundary_residual(grid);
    let meas = measures(grid, sigma0, sigma1);
    GeometryReport {
        n_s: grid.n_s,
        n_theta: grid.n_theta,
        sphere: m.sphere,
        conformality: Conformality {
            g11_minus_g22: m.g11_minus_g22,
            g12: m.g12,
            g11_minus_rho: m.g11_minus_rho,
            g22_minus_rho: m.g22_minus_rho,
        },
        containment_margin: m.containment_margin,
        minimality,
        free_boundary_defect: fb.defect,
        area: meas.area,
        boundary_length: meas.boundary_length,
        theta_r: meas.theta_r,
    }
}

/// Profile of the constant map to `e₀`, with a flat metric; a negative control for minimality.
pub fn constant_profile(s: f64) -> RowProfile {
    RowProfile {
        s,
        x: 1.0,
        dx: 0.0,
        y: 0.0,
        dy: 0.0,
        z: 0.0,
        dz: 0.0,
        rho: 1.0,
    }
}

/// Conformal parametrization of a great 2-sphere, `tan(φ/2) = e^s`: `Φ = (cos φ, sin φ cosθ, sin φ sinθ, 0, 0)`.
pub fn great_sphere_profile(s: f64) -> RowProfile {
    let phi = 2.0 * s.exp().atan();
    let (sp, cp) = phi.sin_cos();
    RowProfile {
        s,
        x: cp,
        dx: -sp * sp,
        y: sp,
        dy: sp * cp,
        z: 0.0,
        dz: 0.0,
        rho: sp * sp,
    }
}
