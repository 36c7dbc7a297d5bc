//! Wavefront OBJ export of the band over the fundamental domain.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ImmersionGrid;
use crate::grid::Vec5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// `[x, y cosθ, y sinθ]`.
    #[default]
    Drop0,
    /// Stereographic projection from `-e₀` into ℝ⁴, then the last coordinate dropped.
    Stereo,
}

impl Projection {
    pub fn apply(self, p: &Vec5) -> [f64; 3] {
        match self {
            Projection::Drop0 => [p[0], p[1], p[2]],
            Projection::Stereo => {
                let d = 1.0 + p[0];
                [p[1] / d, p[2] / d, p[3] / d]
            }
        }
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drop0" => Ok(Projection::Drop0),
            "stereo" => Ok(Projection::Stereo),
            other => Err(Error::InvalidInput(format!(
                "unknown projection {other:?}, expected drop0 or stereo"
            ))),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Projection::Drop0 => "drop0",
            Projection::Stereo => "stereo",
        })
    }
}

/// Vertex and triangle counts for an `n_s × n_theta` grid.
pub fn mesh_counts(n_s: usize, n_theta: usize) -> (usize, usize) {
    (n_s * n_theta, 2 * (n_s - 1) * n_theta)
}

fn header(grid: &ImmersionGrid, projection: Projection) -> String {
    let n = grid.n_theta;
    let (nv, nf) = mesh_counts(grid.n_s, n);
    let mut h = String::new();
    h.push_str("# capband free-boundary minimal Mobius band\n");
    h.push_str(&format!(
        "# r = {}, s_r = {}, grid {} x {}, projection {}\n",
        grid.r, grid.s_r, grid.n_s, n, projection
    ));
    h.push_str(&format!("# {nv} vertices, {nf} triangles\n"));
    h.push_str(
        "# vertex (j, i) is Phi(s_j, theta_i), index 1 + j*n_theta + i, s_j in [0, s_r], theta_i = 2*pi*i/n_theta\n",
    );
    h.push_str("# seam: the theta direction wraps periodically, column n_theta - 1 joins column 0\n");
    h.push_str(&format!(
        "# the band is the quotient (s, theta) ~ (-s, theta + pi); only s >= 0 is meshed, so row j = 0 is the core circle\n\
         # traversed twice: vertices i and i + {} on that row coincide and are left unwelded\n",
        n / 2
    ));
    h.push_str("# welding them yields the one-sided band; the boundary is row j = n_s - 1\n");
    h.push_str("# the projected surface may self-intersect\n");
    h
}

pub fn write_obj<W: Write>(grid: &ImmersionGrid, projection: Projection, mut out: W) -> Result<()> {
    let n = grid.n_theta;
    out.write_all(header(grid, projection).as_bytes())?;
    for j in 0..grid.n_s as isize {
        for p in grid.phi.row(j) {
            let [a, b, c] = projection.apply(p);
            writeln!(out, "v {a} {b} {c}")?;
        }
    }
    for j in 0..grid.n_s - 1 {
        for i in 0..n {
            let i1 = (i + 1) % n;
            let v00 = 1 + j * n + i;
            let v01 = 1 + j * n + i1;
            let v10 = 1 + (j + 1) * n + i;
            let v11 = 1 + (j + 1) * n + i1;
            writeln!(out, "f {v00} {v10} {v11}")?;
            writeln!(out, "f {v00} {v11} {v01}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn to_obj(grid: &ImmersionGrid, projection: Projection) -> Result<String> {
    let mut buf = Vec::new();
    write_obj(grid, projection, &mut buf)?;
    Ok(String::from_utf8(buf).expect("OBJ output is ASCII"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{band_trace, calibrate};

    fn grid() -> ImmersionGrid {
        let p = calibrate(1.2, 1e-10).unwrap();
        ImmersionGrid::build(&p, &band_trace(&p).unwrap(), 20, 16).unwrap()
    }

    fn vertices(obj: &str) -> Vec<[f64; 3]> {
        obj.lines()
            .filter_map(|l| l.strip_prefix("v "))
            .map(|l| {
                let v: Vec<f64> = l.split(' ').map(|t| t.parse().unwrap()).collect();
                [v[0], v[1], v[2]]
            })
            .collect()
    }

    #[test]
    fn counts_and_indices() {
        let g = grid();
        let obj = to_obj(&g, Projection::Drop0).unwrap();
        let (nv, nf) = mesh_counts(20, 16);
        assert_eq!(vertices(&obj).len(), nv);
        let faces: Vec<Vec<usize>> = obj
            .lines()
            .filter_map(|l| l.strip_prefix("f "))
            .map(|l| l.split(' ').map(|t| t.parse().unwrap()).collect())
            .collect();
        assert_eq!(faces.len(), nf);
        assert!(faces.iter().flatten().all(|&k| (1..=nv).contains(&k)));
        assert!(faces.iter().all(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2]));
        assert!(obj
            .lines()
            .take_while(|l| l.starts_with('#'))
            .any(|l| l.contains("seam")));
    }

    #[test]
    fn core_circle_is_double_covered() {
        let g = grid();
        for proj in [Projection::Drop0, Projection::Stereo] {
            let v = vertices(&to_obj(&g, proj).unwrap());
            for i in 0..8 {
                let (a, b) = (v[i], v[i + 8]);
                assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-12), "{proj}");
            }
        }
    }

    #[test]
    fn stereo_boundary_radius() {
        let g = grid();
        let v = vertices(&to_obj(&g, Projection::Stereo).unwrap());
        let bound = (g.r / 2.0).tan();
        let last = (g.n_s - 1) * g.n_theta;
        for p in &v[last..] {
            assert!((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= bound + 1e-12);
        }
    }

    #[test]
    fn projection_parsing() {
        assert_eq!("drop0".parse::<Projection>().unwrap(), Projection::Drop0);
        assert_eq!("stereo".parse::<Projection>().unwrap(), Projection::Stereo);
        assert!("ortho".parse::<Projection>().is_err());
        assert_eq!(Projection::Stereo.to_string(), "stereo");
    }
}
