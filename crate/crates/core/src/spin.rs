//! Spin-j representation of polarizer rotations acting on `M`
//! indistinguishable photons (`j = M/2`).
//!
//! Basis index `k = 0..=M` counts photons in mode 0, i.e. `J_z = k - j`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Angular-momentum generators for `M` photons plus a diagonalization of
/// `J_x`, from which every rotation is assembled.
#[derive(Debug, Clone)]
pub struct Spin {
    photons: usize,
    /// `J_x = V diag(m) V^T`, eigenvalues in ascending order.
    jx_vectors: DMatrix<f64>,
    jx_values: Vec<f64>,
}

impl Spin {
    pub fn new(photons: usize) -> Self {
        let jx = jx_matrix(photons);
        let eig = SymmetricEigen::new(jx);
        let mut order: Vec<usize> = (0..=photons).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let dim = photons + 1;
        let mut vectors = DMatrix::zeros(dim, dim);
        for (col, &src) in order.iter().enumerate() {
            vectors.set_column(col, &eig.eigenvectors.column(src));
        }
        // the spectrum of J_x is exactly -j..=j
        let jx_values = (0..dim).map(|k| k as f64 - photons as f64 / 2.0).collect();
        Self { photons, jx_vectors: vectors, jx_values }
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn dim(&self) -> usize {
        self.photons + 1
    }

    /// `J_z` eigenvalue of basis state `k`.
    pub fn m(&self, k: usize) -> f64 {
        k as f64 - self.photons as f64 / 2.0
    }

    /// Wigner d-matrix `exp(-i chi J_y)`, real orthogonal.
    ///
    /// Uses `J_y = D J_x D^dag` with `D = exp(-i pi/2 J_z)`.
    pub fn d_matrix(&self, chi: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let v = &self.jx_vectors;
        let phases: Vec<Complex64> = self.jx_values.iter().map(|l| Complex64::from_polar(1.0, -chi * l)).collect();
        let mut out = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            for l in 0..dim {
                let mut s = Complex64::new(0.0, 0.0);
                for n in 0..dim {
                    s += phases[n] * (v[(k, n)] * v[(l, n)]);
                }
                let frame = Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_2 * (self.m(k) - self.m(l)));
                out[(k, l)] = (frame * s).re;
            }
        }
        out
    }

    /// `exp(-i angle n.J)` for the axis `n = (sin t cos p, sin t sin p, cos t)`.
    pub fn rotation(&self, axis_theta: f64, axis_phi: f64, angle: f64) -> SpinRotation {
        let dim = self.dim();
        let d = self.d_matrix(axis_theta);
        // W = exp(-i p J_z) exp(-i t J_y) maps J_z onto n.J
        let w = DMatrix::from_fn(dim, dim, |k, n| Complex64::from_polar(d[(k, n)], -axis_phi * self.m(k)));
        let e: Vec<Complex64> = (0..dim).map(|n| Complex64::from_polar(1.0, -angle * self.m(n))).collect();
        let we = DMatrix::from_fn(dim, dim, |k, n| w[(k, n)] * e[n]);
        SpinRotation { photons: self.photons, matrix: we * w.adjoint() }
    }
}

fn jx_matrix(photons: usize) -> DMatrix<f64> {
    let dim = photons + 1;
    let mut jx = DMatrix::zeros(dim, dim);
    for k in 0..photons {
        // <k+1|J_+|k> = sqrt((M-k)(k+1))
        let v = 0.5 * (((photons - k) * (k + 1)) as f64).sqrt();
        jx[(k + 1, k)] = v;
        jx[(k, k + 1)] = v;
    }
    jx
}

/// A unitary `(M+1) x (M+1)` rotation in the spin-`M/2` representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinRotation {
    pub photons: usize,
    pub matrix: DMatrix<Complex64>,
}

impl SpinRotation {
    /// Largest entry of `U U^dag - 1`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = &self.matrix * self.matrix.adjoint();
        let dim = self.photons + 1;
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ln_factorial_table;

    /// Closed-form Wigner small-d: `d^j_{m' m}(b)` as a finite sum.
    fn wigner_d(twice_j: usize, k_out: usize, k_in: usize, beta: f64) -> f64 {
        let lf = ln_factorial_table(2 * twice_j + 2);
        // integer labels: j+m' = k_out, j-m' = 2j-k_out, etc.
        let (jp_out, jm_out) = (k_out as i64, (twice_j - k_out) as i64);
        let (jp_in, jm_in) = (k_in as i64, (twice_j - k_in) as i64);
        let pref = 0.5 * (lf[jp_out as usize] + lf[jm_out as usize] + lf[jp_in as usize] + lf[jm_in as usize]);
        let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
        let mut total = 0.0;
        // m' - m = k_out - k_in
        let diff = k_out as i64 - k_in as i64;
        for x in 0..=(twice_j as i64) {
            let a = jp_in - x;
            let b = jm_out - x;
            let d = diff + x;
            if a < 0 || b < 0 || d < 0 {
                continue;
            }
            // standard form: sum_s (-1)^{m'-m+s} / ((j+m-s)! s! (m'-m+s)! (j-m'-s)!)
            //   * c^{2j+m-m'-2s} * s^{m'-m+2s}
            let sgn = if d % 2 == 0 { 1.0 } else { -1.0 };
            let den = lf[a as usize] + lf[x as usize] + lf[d as usize] + lf[b as usize];
            let pc = (twice_j as i64 - diff - 2 * x) as i32;
            let ps = (diff + 2 * x) as i32;
            total += sgn * (pref - den).exp() * c.powi(pc) * s.powi(ps);
        }
        total
    }

    #[test]
    fn d_matrix_matches_closed_form() {
        for m in [1usize, 2, 3, 6, 11] {
            let spin = Spin::new(m);
            for beta in [0.0, 0.3, 1.1, 2.9, -0.7] {
                let d = spin.d_matrix(beta);
                for k in 0..=m {
                    for l in 0..=m {
                        let w = wigner_d(m, k, l, beta);
                        assert!((d[(k, l)] - w).abs() < 1e-10, "M={m} beta={beta} ({k},{l}): {} vs {w}", d[(k, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn spin_half_is_the_qubit_rotation() {
        let d = Spin::new(1).d_matrix(0.8);
        // index 1 is |0> (spin up); exp(-i chi sigma_y / 2)|0> = cos|0> + sin|1>
        assert!((d[(1, 1)] - 0.4f64.cos()).abs() < 1e-14);
        assert!((d[(0, 1)] - 0.4f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn rotations_are_unitary_and_compose() {
        let spin = Spin::new(20);
        for (t, p, a) in [(0.3, 1.0, 0.5), (2.0, -2.5, 3.0), (1.25, 0.0, 0.1)] {
            let r = spin.rotation(t, p, a);
            assert!(r.unitarity_defect() < 1e-10);
        }
        let d = spin.d_matrix(0.4) * spin.d_matrix(0.5);
        let e = spin.d_matrix(0.9);
        assert!((d - e).abs().max() < 1e-10);
        let y = spin.rotation(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, 0.7);
        let d = spin.d_matrix(0.7);
        for k in 0..21 {
            for l in 0..21 {
                assert!((y.matrix[(k, l)] - Complex64::new(d[(k, l)], 0.0)).norm() < 1e-10);
            }
        }
        let dm = spin.d_matrix(1.3);
        assert!((&dm * dm.transpose() - DMatrix::identity(21, 21)).abs().max() < 1e-10);
    }

    #[test]
    fn large_spin_stays_orthogonal() {
        let spin = Spin::new(50);
        let d = spin.d_matrix(0.37);
        assert!((&d * d.transpose() - DMatrix::identity(51, 51)).abs().max() < 1e-10);
    }
}
