//! Gauss quadrature rules via the Golub-Welsch eigenvalue method.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn golub_welsch(off_diag: impl Fn(usize) -> f64, n: usize, mu0: f64) -> Rule {
    let mut jac = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = off_diag(k);
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the rules used here are symmetric; enforce it exactly
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Gauss-Legendre on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "quadrature needs at least one node");
    golub_welsch(|k| k as f64 / ((4 * k * k - 1) as f64).sqrt(), n, 2.0)
}

/// Gauss-Hermite for the weight `exp(-x^2)` on the real line.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "quadrature needs at least one node");
    golub_welsch(|k| (k as f64 / 2.0).sqrt(), n, std::f64::consts::PI.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let r = gauss_legendre(8);
        for d in 0..16 {
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            assert!((r.integrate(|x| x.powi(d)) - exact).abs() < 1e-13, "degree {d}");
        }
    }

    #[test]
    fn legendre_known_nodes() {
        let r = gauss_legendre(2);
        assert!((r.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_moments() {
        let r = gauss_hermite(24);
        let sp = std::f64::consts::PI.sqrt();
        assert!((r.integrate(|_| 1.0) - sp).abs() < 1e-13);
        assert!((r.integrate(|x| x * x) - sp / 2.0).abs() < 1e-13);
        assert!((r.integrate(|x| x.powi(4)) - 0.75 * sp).abs() < 1e-12);
        // int cos(2x) e^{-x^2} = sqrt(pi) e^{-1}
        assert!((r.integrate(|x| (2.0 * x).cos()) - sp * (-1f64).exp()).abs() < 1e-12);
    }
}
