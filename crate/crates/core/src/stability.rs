//! Index form, energy form and the 4×4 Gram matrix of the variations `V_y` on the band.
//!
//! Integrals are over the fundamental domain in conformal coordinates, so
//! `dv = ρ ds dθ`, `da = √ρ(s_r) dθ`, and for normal fields
//! `|∇^⊥V|² dv = (|(V_s)^⊥|² + |(V_θ)^⊥|²) ds dθ`.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImmersionGrid;
use crate::grid::{dot, norm2, rows_map, scale, sub, unit, Field, Vec5};

/// Below this ρ the tangent frame is not trusted.
pub const FRAME_EPS: f64 = 1e-12;

/// `c(r) = (1 + sin r)/cos r`.
pub fn c_of_r(r: f64) -> f64 {
    (1.0 + r.sin()) / r.cos()
}

/// Orthonormal `{Φ, u_s, u_θ}` per node, from Gram–Schmidt on `{Φ, Φ_s, Φ_θ}`.
#[derive(Debug, Clone)]
pub struct Frame {
    n_theta: usize,
    basis: Vec<[Vec5; 3]>,
}

impl Frame {
    pub fn new(grid: &ImmersionGrid) -> Result<Self> {
        let rows = rows_map(grid.n_s + 2, grid.parallel, |k| {
            let j = k as isize - 1;
            let rho = grid.rho(j);
            if !(rho >= FRAME_EPS) {
                return Err(Error::FrameDegeneracy { row: k, rho });
            }
            Ok((0..grid.n_theta)
                .map(|i| {
                    let p = *grid.phi.at(j, i);
                    let mut u = *grid.phi_s.at(j, i);
                    u = sub(&u, &scale(dot(&u, &p), &p));
                    let u = scale(1.0 / norm2(&u).sqrt(), &u);
                    let mut w = *grid.phi_theta.at(j, i);
                    w = sub(&w, &scale(dot(&w, &p), &p));
                    w = sub(&w, &scale(dot(&w, &u), &u));
                    let w = scale(1.0 / norm2(&w).sqrt(), &w);
                    [p, u, w]
                })
                .collect::<Vec<_>>())
        });
        let mut basis = Vec::with_capacity((grid.n_s + 2) * grid.n_theta);
        for r in rows {
            basis.extend(r?);
        }
        Ok(Self {
            n_theta: grid.n_theta,
            basis,
        })
    }

    fn at(&self, j: isize, i: usize) -> &[Vec5; 3] {
        &self.basis[(j + 1) as usize * self.n_theta + i]
    }

    /// Component of `v` normal to the surface inside `T_pS⁴`.
    pub fn normal(&self, j: isize, i: usize, v: &Vec5) -> Vec5 {
        let [p, u, w] = self.at(j, i);
        let mut out = *v;
        for e in [p, u, w] {
            out = sub(&out, &scale(dot(&out, e), e));
        }
        out
    }

    /// Component of `v` tangent to the surface.
    pub fn tangential(&self, j: isize, i: usize, v: &Vec5) -> Vec5 {
        let [_, u, w] = self.at(j, i);
        let a = scale(dot(v, u), u);
        let b = scale(dot(v, w), w);
        std::array::from_fn(|k| a[k] + b[k])
    }
}

/// A 5-vector per node, ghost rows included.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientField {
    pub values: Field,
}

impl AmbientField {
    pub fn from_fn<F>(grid: &ImmersionGrid, f: F) -> Self
    where
        F: Fn(isize, usize) -> Vec5 + Sync + Send,
    {
        let rows = rows_map(grid.n_s + 2, grid.parallel, |k| {
            (0..grid.n_theta).map(|i| f(k as isize - 1, i)).collect()
        });
        Self {
            values: Field::from_rows(grid.n_s, grid.n_theta, rows),
        }
    }

    pub fn zero(grid: &ImmersionGrid) -> Self {
        Self {
            values: Field::zeros(grid.n_s, grid.n_theta),
        }
    }

    pub fn at(&self, j: isize, i: usize) -> &Vec5 {
        self.values.at(j, i)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: self.values.scaled(alpha),
        }
    }

    pub fn normal_part(&self, grid: &ImmersionGrid, frame: &Frame) -> Self {
        Self::from_fn(grid, |j, i| frame.normal(j, i, self.at(j, i)))
    }

    pub fn tangential_part(&self, grid: &ImmersionGrid, frame: &Frame) -> Self {
        Self::from_fn(grid, |j, i| frame.tangential(j, i, self.at(j, i)))
    }

    /// Coefficients of the tangential part against `(Φ_s, Φ_θ)` on one node.
    pub fn tangential_coefficients(&self, grid: &ImmersionGrid, j: isize, i: usize) -> (f64, f64) {
        let v = self.at(j, i);
        let (ps, pt) = (grid.phi_s.at(j, i), grid.phi_theta.at(j, i));
        let (g11, g12, g22) = (norm2(ps), dot(ps, pt), norm2(pt));
        let (b1, b2) = (dot(v, ps), dot(v, pt));
        let det = g11 * g22 - g12 * g12;
        ((g22 * b1 - g12 * b2) / det, (g11 * b2 - g12 * b1) / det)
    }

    /// `max (|⟨V^⊥, Φ_s⟩|, |⟨V^⊥, Φ_θ⟩|, |V - V^⊤ - V^⊥|, |⟨V, Φ⟩|)` over real nodes.
    pub fn decomposition_defect(&self, grid: &ImmersionGrid, frame: &Frame) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..grid.n_s as isize {
            for i in 0..grid.n_theta {
                let v = self.at(j, i);
                let n = frame.normal(j, i, v);
                let t = frame.tangential(j, i, v);
                let rest = sub(&sub(v, &n), &t);
                worst = worst
                    .max(dot(&n, grid.phi_s.at(j, i)).abs())
                    .max(dot(&n, grid.phi_theta.at(j, i)).abs())
                    .max(norm2(&rest).sqrt())
                    .max(dot(v, grid.phi.at(j, i)).abs());
            }
        }
        worst
    }
}

/// `∂_y = y - ⟨p, y⟩p` and `φ_y = ⟨p, y⟩`.
pub fn coordinate_field(grid: &ImmersionGrid, y: &Vec5) -> (AmbientField, Field) {
    let field = AmbientField::from_fn(grid, |j, i| {
        let p = grid.phi.at(j, i);
        sub(y, &scale(dot(p, y), p))
    });
    let phi = grid.phi.map(|p| [dot(p, y), 0.0, 0.0, 0.0, 0.0]);
    (field, phi)
}

fn check_direction(y: &Vec5) -> Result<()> {
    if y[0].abs() > 1e-12 {
        return Err(Error::Inadmissible(format!(
            "direction must be orthogonal to e0, got <y, e0> = {}",
            y[0]
        )));
    }
    Ok(())
}

/// `V_y = φ_y ∂₀^⊥ - φ₀ ∂_y^⊥ + c(r) ∂_y^⊥` for a unit `y ⊥ e₀`.
pub fn vy_field(grid: &ImmersionGrid, frame: &Frame, y: &Vec5) -> Result<AmbientField> {
    check_direction(y)?;
    if (norm2(y) - 1.0).abs() > 1e-12 {
        return Err(Error::Inadmissible(format!(
            "direction must be a unit vector, |y|² = {}",
            norm2(y)
        )));
    }
    let c = c_of_r(grid.r);
    if !(c.is_finite() && grid.r.cos() > 1e-12) {
        return Err(Error::Inadmissible(format!("c(r) is undefined at r = {}", grid.r)));
    }
    let e0 = unit(0);
    Ok(AmbientField::from_fn(grid, |j, i| {
        let p = grid.phi.at(j, i);
        let d0 = frame.normal(j, i, &sub(&e0, &scale(p[0], p)));
        let dy = frame.normal(j, i, &sub(y, &scale(dot(p, y), p)));
        let phi_y = dot(p, y);
        std::array::from_fn(|k| phi_y * d0[k] + (c - p[0]) * dy[k])
    }))
}

/// `-2c(r)² ∫⟨∂_y^⊥, ∂_w^⊥⟩ dv`; the diagonal is the closed index value.
pub fn index_closed_bilinear(grid: &ImmersionGrid, frame: &Frame, y: &Vec5, w: &Vec5) -> Result<f64> {
    check_direction(y)?;
    check_direction(w)?;
    let c = c_of_r(grid.r);
    let integral = grid.integrate(|j, i| {
        let j = j as isize;
        let p = grid.phi.at(j, i);
        let dy = frame.normal(j, i, &sub(y, &scale(dot(p, y), p)));
        let dw = frame.normal(j, i, &sub(w, &scale(dot(p, w), p)));
        dot(&dy, &dw) * grid.rho(j)
    });
    Ok(-2.0 * c * c * integral)
}

pub fn index_closed(grid: &ImmersionGrid, frame: &Frame, y: &Vec5) -> Result<f64> {
    index_closed_bilinear(grid, frame, y, y)
}

/// Order in which the two frame directions are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameOrder {
    #[default]
    SFirst,
    ThetaFirst,
}

/// First and second derivatives needed by the quadratic forms, on the real rows.
pub struct Derivatives {
    pub phi_ss: Vec<Vec<Vec5>>,
    pub phi_st: Vec<Vec<Vec5>>,
    pub phi_tt: Vec<Vec<Vec5>>,
}

impl Derivatives {
    pub fn new(grid: &ImmersionGrid) -> Self {
        let sp = grid.spectral();
        Self {
            phi_ss: grid.phi.d_ss(grid.h),
            phi_st: grid.phi_theta.d_s(grid.h),
            phi_tt: rows_map(grid.n_s, grid.parallel, |j| {
                sp.derivative(grid.phi_theta.row(j as isize), 1)
            }),
        }
    }
}

fn field_derivatives(grid: &ImmersionGrid, v: &AmbientField) -> (Vec<Vec<Vec5>>, Vec<Vec<Vec5>>) {
    let sp = grid.spectral();
    let ds = v.values.d_s(grid.h);
    let dt = rows_map(grid.n_s, grid.parallel, |j| sp.derivative(v.values.row(j as isize), 1));
    (ds, dt)
}

fn boundary_term(grid: &ImmersionGrid, v: &AmbientField, w: &AmbientField) -> f64 {
    let jb = grid.boundary_row();
    let sq = grid.rho(jb).sqrt();
    -grid.integrate_boundary(|i| dot(v.at(jb, i), w.at(jb, i)) * sq) / grid.r.tan()
}

/// Index form of normal fields `V`, `W`:
/// `∫ ⟨∇^⊥V, ∇^⊥W⟩ - Σ_ij ⟨B(E_i,E_j), V⟩⟨B(E_i,E_j), W⟩ - 2⟨V, W⟩ dv - cot r ∫_∂ ⟨V, W⟩ da`.
pub fn index_direct(
    grid: &ImmersionGrid,
    frame: &Frame,
    derivs: &Derivatives,
    v: &AmbientField,
    w: &AmbientField,
    order: FrameOrder,
) -> f64 {
    let (vs, vt) = field_derivatives(grid, v);
    let (ws, wt) = if std::ptr::eq(v, w) {
        (vs.clone(), vt.clone())
    } else {
        field_derivatives(grid, w)
    };
    let interior = grid.integrate(|j, i| {
        let jj = j as isize;
        let rho = grid.rho(jj);
        let grad_s = dot(&frame.normal(jj, i, &vs[j][i]), &frame.normal(jj, i, &ws[j][i]));
        let grad_t = dot(&frame.normal(jj, i, &vt[j][i]), &frame.normal(jj, i, &wt[j][i]));
        let (vv, ww) = (v.at(jj, i), w.at(jj, i));
        let b = |m: &Vec5| {
            let n = frame.normal(jj, i, m);
            dot(&n, vv) * dot(&n, ww)
        };
        let (bss, bst, btt) = (
            b(&derivs.phi_ss[j][i]),
            b(&derivs.phi_st[j][i]),
            b(&derivs.phi_tt[j][i]),
        );
        let (grad, bsum) = match order {
            FrameOrder::SFirst => (grad_s + grad_t, bss + 2.0 * bst + btt),
            FrameOrder::ThetaFirst => (grad_t + grad_s, btt + 2.0 * bst + bss),
        };
        grad - bsum / rho - 2.0 * dot(vv, ww) * rho
    });
    interior + boundary_term(grid, v, w)
}

/// `Q(V, W) = ∫ ⟨∇V, ∇W⟩ - 2⟨V, W⟩ + ⟨V^⊤, W^⊤⟩ dv - cot r ∫_∂ ⟨V, W⟩ da`, ∇ the sphere connection.
pub fn q_form(grid: &ImmersionGrid, v: &AmbientField, w: &AmbientField) -> f64 {
    let (vs, vt) = field_derivatives(grid, v);
    let (ws, wt) = if std::ptr::eq(v, w) {
        (vs.clone(), vt.clone())
    } else {
        field_derivatives(grid, w)
    };
    let interior = grid.integrate(|j, i| {
        let jj = j as isize;
        let p = grid.phi.at(jj, i);
        let tangent = |u: &Vec5| sub(u, &scale(dot(u, p), p));
        let grad = dot(&tangent(&vs[j][i]), &tangent(&ws[j][i])) + dot(&tangent(&vt[j][i]), &tangent(&wt[j][i]));
        let (vv, ww) = (v.at(jj, i), w.at(jj, i));
        let (ps, pt) = (grid.phi_s.at(jj, i), grid.phi_theta.at(jj, i));
        let tan = dot(vv, ps) * dot(ww, ps) + dot(vv, pt) * dot(ww, pt);
        grad - 2.0 * dot(vv, ww) * grid.rho(jj) + tan
    });
    interior + boundary_term(grid, v, w)
}

/// `Q(Φ_θ, Φ_θ) / ∫‖Φ_θ‖² dv`.
pub fn q_nullity(grid: &ImmersionGrid) -> f64 {
    let v = AmbientField {
        values: grid.phi_theta.clone(),
    };
    let q = q_form(grid, &v, &v);
    let norm = grid.integrate(|j, i| norm2(grid.phi_theta.at(j as isize, i)) * grid.rho(j as isize));
    q / norm
}

/// `|B|² = ρ⁻² (|Φ_ss^⊥|² + 2|Φ_sθ^⊥|² + |Φ_θθ^⊥|²)`, maximum and mean over the real nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondFundamentalForm {
    pub max_norm2: f64,
    pub mean_norm2: f64,
}

pub fn second_fundamental_form(grid: &ImmersionGrid, frame: &Frame, derivs: &Derivatives) -> SecondFundamentalForm {
    let rows = rows_map(grid.n_s, grid.parallel, |j| {
        let jj = j as isize;
        let rho = grid.rho(jj);
        let mut worst: f64 = 0.0;
        let mut sum = 0.0;
        for i in 0..grid.n_theta {
            let n = |m: &Vec5| norm2(&frame.normal(jj, i, m));
            let b2 = (n(&derivs.phi_ss[j][i]) + 2.0 * n(&derivs.phi_st[j][i]) + n(&derivs.phi_tt[j][i])) / (rho * rho);
            worst = worst.max(b2);
            sum += b2;
        }
        (worst, sum)
    });
    let (mut max_norm2, mut total) = (0.0f64, 0.0);
    for (w, s) in rows {
        max_norm2 = max_norm2.max(w);
        total += s;
    }
    SecondFundamentalForm {
        max_norm2,
        mean_norm2: total / (grid.n_s * grid.n_theta) as f64,
    }
}

/// The 4×4 Gram matrix of the polarized closed index form on `e₁..e₄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    /// Row-major.
    pub matrix: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub negative_definite: bool,
    pub symmetry_defect: f64,
}

pub fn morse_gram(grid: &ImmersionGrid, frame: &Frame) -> Result<GramReport> {
    let dirs: Vec<Vec5> = (1..5).map(unit).collect();
    let mut m = Matrix4::<f64>::zeros();
    for a in 0..4 {
        for b in 0..4 {
            m[(a, b)] = index_closed_bilinear(grid, frame, &dirs[a], &dirs[b])?;
        }
    }
    let symmetry_defect = (m - m.transpose()).abs().max();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let mut matrix = Vec::with_capacity(16);
    for a in 0..4 {
        for b in 0..4 {
            matrix.push(m[(a, b)]);
        }
    }
    Ok(GramReport {
        negative_definite: eigenvalues.iter().all(|&e| e < 0.0),
        matrix,
        eigenvalues,
        symmetry_defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionIndex {
    pub direction: usize,
    pub closed: f64,
    pub direct: f64,
    pub relative_gap: f64,
}

/// Closed vs. quadrature index values, Q-nullity and the Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub r: f64,
    pub n_s: usize,
    pub n_theta: usize,
    pub c_r: f64,
    pub directions: Vec<DirectionIndex>,
    pub q_nullity: f64,
    pub gram: GramReport,
    pub g12_closed: f64,
    pub g12_direct: f64,
    /// `|G₁₂ closed - G₁₂ direct| / max_i |G_ii|`.
    pub g12_relative_gap: f64,
    pub off_diagonal: String,
}

pub fn stability_report(grid: &ImmersionGrid) -> Result<StabilityReport> {
    let frame = Frame::new(grid)?;
    let derivs = Derivatives::new(grid);
    let mut fields = Vec::with_capacity(4);
    let mut directions = Vec::with_capacity(4);
    for d in 1..5 {
        let y = unit(d);
        let v = vy_field(grid, &frame, &y)?;
        let closed = index_closed(grid, &frame, &y)?;
        let direct = index_direct(grid, &frame, &derivs, &v, &v, FrameOrder::SFirst);
        directions.push(DirectionIndex {
            direction: d,
            closed,
            direct,
            relative_gap: (direct - closed).abs() / closed.abs(),
        });
        fields.push(v);
    }
    let gram = morse_gram(grid, &frame)?;
    let g12_closed = gram.matrix[1];
    let g12_direct = index_direct(grid, &frame, &derivs, &fields[0], &fields[1], FrameOrder::SFirst);
    let diag = (0..4).map(|k| gram.matrix[5 * k].abs()).fold(0.0, f64::max);
    Ok(StabilityReport {
        r: grid.r,
        n_s: grid.n_s,
        n_theta: grid.n_theta,
        c_r: c_of_r(grid.r),
        directions,
        q_nullity: q_nullity(grid),
        gram,
        g12_closed,
        g12_direct,
        g12_relative_gap: (g12_closed - g12_direct).abs() / diag,
        off_diagonal: "polarized extension, cross-checked".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{band_trace, calibrate};
    use crate::geometry::great_sphere_profile;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn band(n: usize) -> ImmersionGrid {
        let p = calibrate(FRAC_PI_4, 1e-10).unwrap();
        let tr = band_trace(&p).unwrap();
        ImmersionGrid::build(&p, &tr, n, n).unwrap()
    }

    #[test]
    fn c_at_quarter_turn() {
        assert!((c_of_r(FRAC_PI_4) - (1.0 + 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn coordinate_field_identities() {
        let g = band(32);
        let y = unit(3);
        let x = unit(1);
        let (dy, phi_y) = coordinate_field(&g, &y);
        let (dx, phi_x) = coordinate_field(&g, &x);
        for j in 0..g.n_s as isize {
            for i in 0..g.n_theta {
                let (fy, fx) = (phi_y.at(j, i)[0], phi_x.at(j, i)[0]);
                assert!((norm2(dy.at(j, i)) - (1.0 - fy * fy)).abs() < 1e-14);
                assert!((dot(dy.at(j, i), dx.at(j, i)) - (dot(&y, &x) - fy * fx)).abs() < 1e-14);
            }
        }
        let p = *g.phi.at(3, 5);
        let (dp, _) = coordinate_field(&g, &p);
        assert!(norm2(dp.at(3, 5)) < 1e-28);
    }

    #[test]
    fn e0_is_tangent_on_the_boundary() {
        let g = band(64);
        let frame = Frame::new(&g).unwrap();
        let (d0, _) = coordinate_field(&g, &unit(0));
        let jb = g.boundary_row();
        for i in 0..g.n_theta {
            assert!(norm2(&frame.normal(jb, i, d0.at(jb, i))).sqrt() < 1e-10);
        }
    }

    #[test]
    fn vy_is_normal_with_boundary_value() {
        let g = band(64);
        let frame = Frame::new(&g).unwrap();
        let y = unit(1);
        let v = vy_field(&g, &frame, &y).unwrap();
        assert!(v.decomposition_defect(&g, &frame) < 1e-10);
        for j in 0..g.n_s as isize {
            for i in 0..g.n_theta {
                assert!(dot(v.at(j, i), g.phi_s.at(j, i)).abs() < 1e-10);
                assert!(dot(v.at(j, i), g.phi_theta.at(j, i)).abs() < 1e-10);
            }
        }
        let (sr, cr) = g.r.sin_cos();
        let k = sr * (1.0 + sr) / cr;
        let jb = g.boundary_row();
        for i in 0..g.n_theta {
            let p = g.phi.at(jb, i);
            let dy = frame.normal(jb, i, &sub(&y, &scale(dot(p, &y), p)));
            let diff = sub(v.at(jb, i), &scale(k, &dy));
            assert!(norm2(&diff).sqrt() < 1e-9);
        }
    }

    #[test]
    fn vy_rejects_directions_with_e0_component() {
        let g = band(32);
        let frame = Frame::new(&g).unwrap();
        let y = [0.6, 0.8, 0.0, 0.0, 0.0];
        assert!(matches!(vy_field(&g, &frame, &y), Err(Error::Inadmissible(_))));
    }

    #[test]
    fn closed_index_symmetry_and_sign() {
        let g = band(64);
        let frame = Frame::new(&g).unwrap();
        let i: Vec<f64> = (1..5).map(|d| index_closed(&g, &frame, &unit(d)).unwrap()).collect();
        assert!(i.iter().all(|&v| v < 0.0));
        assert!((i[0] - i[1]).abs() < 1e-10 * i[0].abs());
        assert!((i[2] - i[3]).abs() < 1e-10 * i[2].abs());
        assert_eq!(index_closed(&g, &frame, &[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn direct_index_converges_to_closed() {
        let mut gaps = Vec::new();
        for n in [64, 128] {
            let g = band(n);
            let frame = Frame::new(&g).unwrap();
            let d = Derivatives::new(&g);
            let v = vy_field(&g, &frame, &unit(1)).unwrap();
            let closed = index_closed(&g, &frame, &unit(1)).unwrap();
            let direct = index_direct(&g, &frame, &d, &v, &v, FrameOrder::SFirst);
            gaps.push((direct - closed).abs() / closed.abs());
        }
        assert!(gaps[1] < 1e-3, "{gaps:?}");
        let ratio = gaps[0] / gaps[1];
        assert!((3.0..5.0).contains(&ratio), "{gaps:?}");
    }

    #[test]
    fn frame_order_does_not_matter() {
        let g = band(48);
        let frame = Frame::new(&g).unwrap();
        let d = Derivatives::new(&g);
        let v = vy_field(&g, &frame, &unit(3)).unwrap();
        let a = index_direct(&g, &frame, &d, &v, &v, FrameOrder::SFirst);
        let b = index_direct(&g, &frame, &d, &v, &v, FrameOrder::ThetaFirst);
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn q_nullity_of_rotation_field() {
        let q64 = q_nullity(&band(64));
        let q128 = q_nullity(&band(128));
        assert!(q128.abs() < 1e-4);
        assert!((3.0..5.0).contains(&(q64 / q128)));
        let g = band(32);
        let z = AmbientField::zero(&g);
        assert_eq!(q_form(&g, &z, &z), 0.0);
    }

    #[test]
    fn great_sphere_has_no_second_fundamental_form() {
        let g = ImmersionGrid::from_profile(1.0, 1.0, 65, 32, false, |s| Ok(great_sphere_profile(s))).unwrap();
        let frame = Frame::new(&g).unwrap();
        let b = second_fundamental_form(&g, &frame, &Derivatives::new(&g));
        assert!(b.max_norm2 < 1e-20, "{b:?}");
        let band_b = second_fundamental_form(&band(32), &Frame::new(&band(32)).unwrap(), &Derivatives::new(&band(32)));
        assert!(band_b.max_norm2 > 1e-2);
    }

    #[test]
    fn gram_is_negative_definite() {
        let g = band(64);
        let frame = Frame::new(&g).unwrap();
        let gram = morse_gram(&g, &frame).unwrap();
        assert!(gram.symmetry_defect < 1e-10);
        assert!(gram.negative_definite, "{:?}", gram.eigenvalues);
    }

    #[test]
    fn report_json_has_row_major_gram() {
        let rep = stability_report(&band(32)).unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["gram"]["matrix"].as_array().unwrap().len(), 16);
        assert_eq!(v["directions"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn degenerate_frame_is_reported() {
        let g =
            ImmersionGrid::from_profile(0.5, 1.0, 16, 16, false, |s| Ok(crate::geometry::constant_profile(s))).unwrap();
        let mut g = g;
        g.profile.iter_mut().for_each(|p| p.rho = 0.0);
        assert!(matches!(Frame::new(&g), Err(Error::FrameDegeneracy { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn q_form_is_bilinear(alpha in -3.0f64..3.0, d in 1usize..5) {
            let g = band(32);
            let frame = Frame::new(&g).unwrap();
            let v = vy_field(&g, &frame, &unit(d)).unwrap();
            let w = AmbientField { values: g.phi_theta.clone() };
            let q = q_form(&g, &v, &w);
            let q2 = q_form(&g, &v.scaled(alpha), &w);
            prop_assert!((q2 - alpha * q).abs() <= 1e-12 * (1.0 + q.abs()));
            let sym = q_form(&g, &w, &v);
            prop_assert!((sym - q).abs() <= 1e-12 * (1.0 + q.abs()));
        }
    }
}
