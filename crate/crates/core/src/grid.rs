//! Sampled fields on the fundamental domain and the stencils/quadrature acting on them.
//!
//! Rows are indexed by `j ∈ [-1, n_s]`: rows `0..n_s` are the real samples on
//! `[0, s_r]`, rows `-1` and `n_s` are ghost rows one spacing outside, so that
//! every s-derivative on a real row is a central difference.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub type Vec5 = [f64; 5];

pub fn dot(a: &Vec5, b: &Vec5) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4]
}

pub fn axpy(alpha: f64, x: &Vec5, y: &Vec5) -> Vec5 {
    std::array::from_fn(|k| alpha * x[k] + y[k])
}

pub fn scale(alpha: f64, x: &Vec5) -> Vec5 {
    x.map(|v| alpha * v)
}

pub fn sub(a: &Vec5, b: &Vec5) -> Vec5 {
    std::array::from_fn(|k| a[k] - b[k])
}

pub fn norm2(a: &Vec5) -> f64 {
    dot(a, a)
}

pub fn unit(k: usize) -> Vec5 {
    std::array::from_fn(|i| if i == k { 1.0 } else { 0.0 })
}

/// Maps `f` over `0..n`; the parallel path preserves order, so results are identical.
pub fn rows_map<R, F>(n: usize, parallel: bool, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// A 5-vector per node on `(n_s + 2) × n_theta`, ghost rows included.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub n_s: usize,
    pub n_theta: usize,
    data: Vec<Vec5>,
}

impl Field {
    pub fn zeros(n_s: usize, n_theta: usize) -> Self {
        Self {
            n_s,
            n_theta,
            data: vec![[0.0; 5]; (n_s + 2) * n_theta],
        }
    }

    /// Builds from one row per `j = -1..=n_s`.
    pub fn from_rows(n_s: usize, n_theta: usize, rows: Vec<Vec<Vec5>>) -> Self {
        assert_eq!(rows.len(), n_s + 2);
        let data: Vec<Vec5> = rows.into_iter().flatten().collect();
        assert_eq!(data.len(), (n_s + 2) * n_theta);
        Self { n_s, n_theta, data }
    }

    fn offset(&self, j: isize) -> usize {
        debug_assert!(j >= -1 && j <= self.n_s as isize);
        (j + 1) as usize * self.n_theta
    }

    pub fn at(&self, j: isize, i: usize) -> &Vec5 {
        &self.data[self.offset(j) + i]
    }

    pub fn row(&self, j: isize) -> &[Vec5] {
        let o = self.offset(j);
        &self.data[o..o + self.n_theta]
    }

    /// Pointwise combination with another field of the same shape.
    pub fn zip_map(&self, other: &Field, f: impl Fn(&Vec5, &Vec5) -> Vec5) -> Field {
        assert_eq!((self.n_s, self.n_theta), (other.n_s, other.n_theta));
        Field {
            n_s: self.n_s,
            n_theta: self.n_theta,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&Vec5) -> Vec5) -> Field {
        Field {
            n_s: self.n_s,
            n_theta: self.n_theta,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        self.map(|v| scale(alpha, v))
    }

    /// Central first difference in s on the real rows.
    pub fn d_s(&self, h: f64) -> Vec<Vec<Vec5>> {
        (0..self.n_s as isize)
            .map(|j| {
                self.row(j + 1)
                    .iter()
                    .zip(self.row(j - 1))
                    .map(|(p, m)| std::array::from_fn(|k| (p[k] - m[k]) / (2.0 * h)))
                    .collect()
            })
            .collect()
    }

    /// Central second difference in s on the real rows.
    pub fn d_ss(&self, h: f64) -> Vec<Vec<Vec5>> {
        let h2 = h * h;
        (0..self.n_s as isize)
            .map(|j| {
                let (m, c, p) = (self.row(j - 1), self.row(j), self.row(j + 1));
                (0..self.n_theta)
                    .map(|i| std::array::from_fn(|k| (p[i][k] - 2.0 * c[i][k] + m[i][k]) / h2))
                    .collect()
            })
            .collect()
    }

    /// Central first difference in θ (periodic) on the real rows.
    pub fn d_theta_fd(&self) -> Vec<Vec<Vec5>> {
        let n = self.n_theta;
        let dt = 2.0 * PI / n as f64;
        (0..self.n_s as isize)
            .map(|j| {
                let row = self.row(j);
                (0..n)
                    .map(|i| {
                        let (p, m) = (&row[(i + 1) % n], &row[(i + n - 1) % n]);
                        std::array::from_fn(|k| (p[k] - m[k]) / (2.0 * dt))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Fourier differentiation in θ of periodic rows.
pub struct SpectralTheta {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralTheta {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn wavenumber(&self, m: usize) -> f64 {
        if m <= self.n / 2 {
            m as f64
        } else {
            m as f64 - self.n as f64
        }
    }

    /// `order`-th derivative of one row; the Nyquist mode is dropped for odd orders.
    pub fn derivative(&self, row: &[Vec5], order: u32) -> Vec<Vec5> {
        let n = self.n;
        assert_eq!(row.len(), n);
        let mut out = vec![[0.0; 5]; n];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        // two real components per complex transform
        for pair in [(0usize, Some(1usize)), (2, Some(3)), (4, None)] {
            for (b, v) in buf.iter_mut().zip(row) {
                *b = Complex::new(v[pair.0], pair.1.map_or(0.0, |c| v[c]));
            }
            self.forward.process(&mut buf);
            for (m, b) in buf.iter_mut().enumerate() {
                let k = self.wavenumber(m);
                let factor = if !order.is_multiple_of(2) && n.is_multiple_of(2) && m == n / 2 {
                    Complex::new(0.0, 0.0)
                } else {
                    Complex::new(0.0, k).powu(order)
                };
                *b *= factor;
            }
            self.inverse.process(&mut buf);
            let inv = 1.0 / n as f64;
            for (o, b) in out.iter_mut().zip(&buf) {
                o[pair.0] = b.re * inv;
                if let Some(c) = pair.1 {
                    o[c] = b.im * inv;
                }
            }
        }
        out
    }
}

/// Composite Simpson weights on `n` equispaced nodes with spacing `h`.
///
/// With an odd number of intervals the last three use the 3/8 rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 4, "Simpson needs at least four nodes");
    let intervals = n - 1;
    let mut w = vec![0.0; n];
    let simpson_end = if intervals.is_multiple_of(2) {
        intervals
    } else {
        intervals - 3
    };
    for j in (0..simpson_end).step_by(2) {
        w[j] += h / 3.0;
        w[j + 1] += 4.0 * h / 3.0;
        w[j + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let j = simpson_end;
        w[j] += 3.0 * h / 8.0;
        w[j + 1] += 9.0 * h / 8.0;
        w[j + 2] += 9.0 * h / 8.0;
        w[j + 3] += 3.0 * h / 8.0;
    }
    w
}

/// Sums `w_j · Σ_i f(j, i)` with a fixed reduction order (rows in order, nodes in order).
pub fn quadrature<F>(weights: &[f64], n_theta: usize, parallel: bool, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let dtheta = 2.0 * PI / n_theta as f64;
    let rows = rows_map(weights.len(), parallel, |j| {
        let mut acc = 0.0;
        for i in 0..n_theta {
            acc += f(j, i);
        }
        acc
    });
    let mut total = 0.0;
    for (w, r) in weights.iter().zip(rows) {
        total += w * r;
    }
    total * dtheta
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        for n in [5usize, 6, 17, 256, 257] {
            let h = 2.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let integral: f64 = w
                .iter()
                .enumerate()
                .map(|(j, w)| {
                    let s = j as f64 * h;
                    w * (s * s * s - s + 1.0)
                })
                .sum();
            assert!((integral - 4.0).abs() < 1e-12, "n = {n}: {integral}");
        }
    }

    #[test]
    fn spectral_derivative_of_trig_rows() {
        let n = 32;
        let sp = SpectralTheta::new(n);
        let row: Vec<Vec5> = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                [1.0, t.cos(), t.sin(), (2.0 * t).cos(), (2.0 * t).sin()]
            })
            .collect();
        let d = sp.derivative(&row, 1);
        let dd = sp.derivative(&row, 2);
        for i in 0..n {
            let t = 2.0 * PI * i as f64 / n as f64;
            let expect = [0.0, -t.sin(), t.cos(), -2.0 * (2.0 * t).sin(), 2.0 * (2.0 * t).cos()];
            let expect2 = [0.0, -t.cos(), -t.sin(), -4.0 * (2.0 * t).cos(), -4.0 * (2.0 * t).sin()];
            for k in 0..5 {
                assert!((d[i][k] - expect[k]).abs() < 1e-13);
                assert!((dd[i][k] - expect2[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn central_differences_use_ghost_rows() {
        let (n_s, n_t) = (8, 4);
        let h = 0.1;
        let rows = (-1..=n_s as isize)
            .map(|j| {
                let s = j as f64 * h;
                vec![[s * s, s, 0.0, 0.0, 0.0]; n_t]
            })
            .collect();
        let f = Field::from_rows(n_s, n_t, rows);
        let d = f.d_s(h);
        let dd = f.d_ss(h);
        for j in 0..n_s {
            assert!((d[j][0][0] - 2.0 * j as f64 * h).abs() < 1e-12);
            assert!((d[j][0][1] - 1.0).abs() < 1e-12);
            assert!((dd[j][2][0] - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn parallel_quadrature_is_bit_identical() {
        let w = simpson_weights(101, 0.01);
        let f = |j: usize, i: usize| ((j * 31 + i * 7) as f64).sin() * 1e-3 + 1.0 / (1.0 + j as f64);
        let a = quadrature(&w, 64, false, f);
        let b = quadrature(&w, 64, true, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(c in -10.0f64..10.0) {
            let w = simpson_weights(33, 0.03);
            let f = |j: usize, i: usize| (j as f64 * 0.1).cos() + (i as f64).sin();
            let a = quadrature(&w, 16, false, |j, i| c * f(j, i));
            let b = c * quadrature(&w, 16, false, f);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
