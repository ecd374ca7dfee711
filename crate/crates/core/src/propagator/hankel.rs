//! Quasi-discrete zero-order Hankel transform on Bessel-zero nodes.
//!
//! Samples live at `r_n = j_n R / j_{N+1}` where `j_n` are the zeros of
//! `J0`. The scaled vector `F_n = f(r_n) R / |J1(j_n)|` maps to the scaled
//! spectrum at `k_m = j_m / R` through one symmetric matrix that is (after
//! orthogonalisation) its own inverse, so repeated forward/inverse pairs
//! conserve energy exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// First `count` positive zeros of `J0`.
pub fn bessel_j0_zeros(count: usize) -> Vec<f64> {
    (1..=count)
        .map(|n| {
            let beta = (n as f64 - 0.25) * std::f64::consts::PI;
            let b8 = 8.0 * beta;
            // McMahon expansion, then Newton on J0 with J0' = -J1.
            let mut x = beta + 1.0 / b8 - 124.0 / (3.0 * b8.powi(3));
            for _ in 0..8 {
                let step = libm::j0(x) / libm::j1(x);
                x += step;
                if step.abs() < 1e-15 * x {
                    break;
                }
            }
            x
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RadialTransform {
    n: usize,
    radius: f64,
    nodes: Vec<f64>,
    wavenumbers: Vec<f64>,
    /// `R / |J1(j_n)|` per node.
    scale: Vec<f64>,
    j1_abs: Vec<f64>,
    j_last: f64,
    /// Orthogonalised transform matrix, row-major `N x N`.
    matrix: Vec<f64>,
}

impl RadialTransform {
    pub fn new(n: usize, radius: f64) -> Self {
        assert!(n >= 1 && radius > 0.0);
        let zeros = bessel_j0_zeros(n + 1);
        let j_last = zeros[n];
        let j1_abs: Vec<f64> = zeros[..n].iter().map(|&j| libm::j1(j).abs()).collect();
        let nodes: Vec<f64> = zeros[..n].iter().map(|&j| j * radius / j_last).collect();
        let wavenumbers: Vec<f64> = zeros[..n].iter().map(|&j| j / radius).collect();
        let scale: Vec<f64> = j1_abs.iter().map(|&a| radius / a).collect();

        let raw = DMatrix::from_fn(n, n, |m, k| {
            2.0 * libm::j0(zeros[m] * zeros[k] / j_last) / (j1_abs[m] * j1_abs[k] * j_last)
        });
        let eig = SymmetricEigen::new(raw);
        let signs = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| if l >= 0.0 { 1.0 } else { -1.0 }));
        let orth = &eig.eigenvectors * signs * eig.eigenvectors.transpose();
        let mut matrix = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                // symmetrise against round-off
                matrix[m * n + k] = 0.5 * (orth[(m, k)] + orth[(k, m)]);
            }
        }
        RadialTransform {
            n,
            radius,
            nodes,
            wavenumbers,
            scale,
            j1_abs,
            j_last,
            matrix,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Radial wavenumbers `k_m` (rad/m) of the spectral samples.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// Multiplier taking `f(r_n)` to the scaled vector.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Apply the (self-inverse) transform to a scaled vector.
    pub fn apply(&self, input: &[Complex64], output: &mut [Complex64]) {
        let n = self.n;
        for (m, out) in output.iter_mut().enumerate() {
            let row = &self.matrix[m * n..(m + 1) * n];
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in row.iter().zip(input) {
                re += t * v.re;
                im += t * v.im;
            }
            *out = Complex64::new(re, im);
        }
    }

    /// Matrix evaluating `f(r)` at arbitrary radii from the scaled nodal
    /// vector, via the Fourier-Bessel series of the spectrum. Row-major
    /// `radii.len() x N`.
    pub fn interpolation_matrix(&self, radii: &[f64]) -> Vec<f64> {
        let n = self.n;
        // series coefficients acting on the scaled spectrum
        let coef: Vec<f64> = self
            .j1_abs
            .iter()
            .map(|&a| 2.0 / (self.radius * self.j_last * a))
            .collect();
        let mut out = vec![0.0; radii.len() * n];
        for (j, &r) in radii.iter().enumerate() {
            let basis: Vec<f64> = (0..n).map(|m| coef[m] * libm::j0(self.wavenumbers[m] * r)).collect();
            for k in 0..n {
                let mut acc = 0.0;
                for m in 0..n {
                    acc += basis[m] * self.matrix[m * n + k];
                }
                out[j * n + k] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn j0_zeros_match_tabulated_values() {
        let z = bessel_j0_zeros(5);
        let expected = [
            2.404825557695773,
            5.520078110286311,
            8.653727912911013,
            11.791534439014281,
            14.930917708487787,
        ];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn transform_is_involutory() {
        let t = RadialTransform::new(32, 1.0);
        let x: Vec<Complex64> = (0..32)
            .map(|i| Complex64::new((i as f64 * 0.3).sin(), (i as f64).cos()))
            .collect();
        let mut y = vec![Complex64::default(); 32];
        let mut back = vec![Complex64::default(); 32];
        t.apply(&x, &mut y);
        t.apply(&y, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn orthogonalisation_is_a_small_correction() {
        let n = 128;
        let t = RadialTransform::new(n, 1.0);
        let zeros = bessel_j0_zeros(n + 1);
        let s = zeros[n];
        let mut worst: f64 = 0.0;
        for m in 0..n {
            for k in 0..n {
                let raw =
                    2.0 * libm::j0(zeros[m] * zeros[k] / s) / (libm::j1(zeros[m]).abs() * libm::j1(zeros[k]).abs() * s);
                worst = worst.max((raw - t.matrix()[m * n + k]).abs());
            }
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn gaussian_transforms_to_gaussian() {
        // ∫ exp(-a r²) J0(k r) r dr = exp(-k²/4a) / 2a
        let (n, radius, a) = (96, 6.0, 1.0);
        let t = RadialTransform::new(n, radius);
        let input: Vec<Complex64> = t
            .nodes()
            .iter()
            .zip(t.scale())
            .map(|(&r, &s)| Complex64::new((-a * r * r).exp() * s, 0.0))
            .collect();
        let mut spec = vec![Complex64::default(); n];
        t.apply(&input, &mut spec);
        // scaled spectrum G_m = F(k_m) V / |J1(j_m)| with V = j_{N+1}/(2πR)
        // and F(ν) = 2π ∫ f J0(2πνr) r dr.
        let zeros = bessel_j0_zeros(n + 1);
        let v = zeros[n] / (2.0 * std::f64::consts::PI * radius);
        for m in 0..20 {
            let k = t.wavenumbers()[m];
            let exact = 2.0 * std::f64::consts::PI * (-k * k / (4.0 * a)).exp() / (2.0 * a);
            let got = spec[m].re * libm::j1(zeros[m]).abs() / v;
            assert!((got - exact).abs() < 1e-6, "m={m} {got} {exact}");
        }
    }

    #[test]
    fn interpolation_reproduces_smooth_profiles() {
        let (n, radius) = (64, 5.0);
        let t = RadialTransform::new(n, radius);
        let f = |r: f64| (-r * r).exp();
        let input: Vec<Complex64> = t
            .nodes()
            .iter()
            .zip(t.scale())
            .map(|(&r, &s)| Complex64::new(f(r) * s, 0.0))
            .collect();
        let radii = [0.0, 0.1, 0.5, 1.0, 1.7, 3.0];
        let m = t.interpolation_matrix(&radii);
        for (j, &r) in radii.iter().enumerate() {
            let v: f64 = (0..n).map(|k| m[j * n + k] * input[k].re).sum();
            assert!((v - f(r)).abs() < 1e-8, "r={r}: {v} vs {}", f(r));
        }
    }
}
