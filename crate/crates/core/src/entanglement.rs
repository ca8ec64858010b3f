//! Entanglement of `M` distinguishable pairs once the pairing is forgotten,
//! against the indistinguishable-photon state.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{ln_choose, CompensatedSum};

/// Bits of entanglement left when `M` (even) maximally entangled qubit pairs
/// lose their pairing: `sum_j (2j+1)^2 C(M+1, M/2-j) / (2^M (M+1)) log2(2j+1)`.
pub fn entanglement_distinguishable(m: u32) -> Result<f64> {
    Ok(spin_sector_weights(m)?.into_iter().map(|(two_j, w)| w * ((two_j + 1) as f64).log2()).collect::<CompensatedSum>().value())
}

/// `(2j, weight)` for every Alice spin sector `j = 0..=M/2`.
pub fn spin_sector_weights(m: u32) -> Result<Vec<(u32, f64)>> {
    if m == 0 || m % 2 == 1 {
        return Err(Error::Unsupported(format!("distinguishable-pair entanglement needs an even M >= 2, got {m}")));
    }
    let half = m / 2;
    let base = -(m as f64) * std::f64::consts::LN_2 - ((m + 1) as f64).ln();
    Ok((0..=half)
        .map(|j| {
            let d = (2 * j + 1) as f64;
            let lw = 2.0 * d.ln() + base + ln_choose(m as u64 + 1, (half - j) as u64);
            (2 * j, lw.exp())
        })
        .collect())
}

/// Schmidt entropy of the uniform `M + 1` term state.
pub fn entanglement_indistinguishable(m: u32) -> Result<f64> {
    if m == 0 {
        return Err(crate::error::invalid("need at least one pair"));
    }
    Ok(((m + 1) as f64).log2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementReport {
    pub pairs: u32,
    pub distinguishable: f64,
    pub indistinguishable: f64,
    pub ratio: f64,
}

pub fn ratio_report(ms: &[u32]) -> Result<Vec<EntanglementReport>> {
    ms.iter()
        .map(|&m| {
            let e_d = entanglement_distinguishable(m)?;
            let e_i = entanglement_indistinguishable(m)?;
            Ok(EntanglementReport { pairs: m, distinguishable: e_d, indistinguishable: e_i, ratio: e_i / e_d })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::phi_state;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn entropy(m: DMatrix<f64>) -> f64 {
        SymmetricEigen::new(m).eigenvalues.iter().filter(|&&x| x > 1e-14).map(|&x| -x * x.log2()).sum()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..n {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Projectors onto total-spin sectors of `m` qubits, keyed by `2j`.
    fn spin_projectors(m: usize) -> Vec<(usize, DMatrix<f64>)> {
        let d = 1 << m;
        // J^2 = sum_{a,b} S_a . S_b; build from pairwise swaps: S_a.S_b = (2 SWAP_ab - 1)/4
        let mut j2 = DMatrix::from_diagonal_element(d, d, 0.75 * m as f64);
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                for s in 0..d {
                    let (ba, bb) = ((s >> a) & 1, (s >> b) & 1);
                    let t = s & !(1 << a) & !(1 << b) | (bb << a) | (ba << b);
                    j2[(t, s)] += 0.5;
                    j2[(s, s)] -= 0.25;
                }
            }
        }
        let eig = SymmetricEigen::new(j2);
        let mut out: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            let two_j = ((4.0 * l + 1.0).sqrt() - 1.0).round() as usize;
            let v = eig.eigenvectors.column(i);
            let p = &v * v.transpose();
            match out.iter_mut().find(|e| e.0 == two_j) {
                Some(e) => e.1 += p,
                None => out.push((two_j, p)),
            }
        }
        out
    }

    /// Average of the `M`-pair state over all relabelings of Bob's qubits,
    /// split into spin sectors; inside a sector the state is a maximally
    /// entangled spin part times maximally mixed multiplicity parts, so
    /// `log2(2j+1) = S(rho_A) - S(rho)/2` there.
    fn spectral_oracle(m: usize) -> f64 {
        let d = 1 << m;
        let perms = permutations(m);
        let mut rho = DMatrix::zeros(d * d, d * d);
        for p in &perms {
            let mut psi = nalgebra::DVector::zeros(d * d);
            for a in 0..d {
                let mut b = 0;
                for (i, &pi) in p.iter().enumerate() {
                    b |= ((a >> i) & 1) << pi;
                }
                psi[a * d + b] = 1.0 / (d as f64).sqrt();
            }
            rho += &psi * psi.transpose() / perms.len() as f64;
        }
        let mut total = 0.0;
        for (_, pj) in spin_projectors(m) {
            let proj = pj.kronecker(&pj);
            let block = &proj * &rho * &proj;
            let w = block.trace();
            if w < 1e-12 {
                continue;
            }
            let block = block / w;
            let mut ra = DMatrix::zeros(d, d);
            for a in 0..d {
                for a2 in 0..d {
                    ra[(a, a2)] = (0..d).map(|b| block[(a * d + b, a2 * d + b)]).sum();
                }
            }
            total += w * (entropy(ra) - entropy(block) / 2.0);
        }
        total
    }

    #[test]
    fn two_pairs_value() {
        let e = entanglement_distinguishable(2).unwrap();
        assert!((e - 0.75 * 3f64.log2()).abs() < 1e-12);
        assert!((entanglement_indistinguishable(2).unwrap() / e - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one() {
        for m in [2u32, 4, 10, 100, 1000] {
            let t: f64 = spin_sector_weights(m).unwrap().iter().map(|w| w.1).sum();
            assert!((t - 1.0).abs() < 1e-12, "M={m}: {t}");
        }
    }

    #[test]
    fn closed_form_matches_spectral_oracle() {
        for m in [2usize, 4] {
            let want = spectral_oracle(m);
            let got = entanglement_distinguishable(m as u32).unwrap();
            assert!((got - want).abs() < 1e-9, "M={m}: {got} vs {want}");
        }
    }

    #[test]
    fn indistinguishable_examples() {
        assert_eq!(entanglement_indistinguishable(1).unwrap(), 1.0);
        assert_eq!(entanglement_indistinguishable(3).unwrap(), 2.0);
        assert!((entanglement_indistinguishable(99).unwrap() - 100f64.log2()).abs() < 1e-12);
        // Schmidt coefficients of the symmetric state
        let phi = phi_state(7).unwrap();
        let x = &phi.branches()[0].amplitudes;
        let s: f64 = x.diagonal().iter().map(|z| z.norm_sqr()).map(|p| -p * p.log2()).sum();
        assert!((s - 3.0).abs() < 1e-12);
    }

    #[test]
    fn indistinguishable_wins_and_ratio_approaches_two() {
        let ms: Vec<u32> = (1..=100).map(|k| 2 * k).collect();
        for r in ratio_report(&ms).unwrap() {
            assert!(r.indistinguishable > r.distinguishable, "{r:?}");
        }
        let big = entanglement_distinguishable(100).unwrap();
        assert!(big > 0.0 && big < 101f64.log2());
        // E_d grows like log2(M)/2 plus a constant, so the ratio climbs to 2 slowly
        let rs: Vec<f64> = ratio_report(&[100, 200, 1000, 10_000, 1_000_000]).unwrap().iter().map(|r| r.ratio).collect();
        assert!(rs.windows(2).all(|w| w[1] > w[0] && w[1] < 2.0), "{rs:?}");
        assert!((rs[2] - 1.809).abs() < 1e-3, "{rs:?}");
        assert!(matches!(entanglement_distinguishable(3), Err(Error::Unsupported(_))));
    }
}
