//! Indistinguishable photons: the two-mode multi-pair state, photon-count
//! statistics behind rotated polarizers, rotation noise and photon loss.
//!
//! A side holding `n` photons is described in the number basis
//! `|k, n-k>`, `k` being the photon count in mode 0 (the `+` output of a
//! polarizer set to angle 0). This is the spin-`n/2` representation with
//! `J_z = k - n/2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::numeric::CompensatedSum;
use crate::quadrature::{gauss_hermite, gauss_legendre};
use crate::spin::Spin;
use crate::vote::{ChInputs, VoteRule};

const NORM_TOL: f64 = 1e-10;
const QUADRATURE_TOL: f64 = 1e-8;
const MAX_BETA_NODES: usize = 400;

/// One pure component `sum_kl X_kl |k>_A |l>_B` of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub amplitudes: DMatrix<Complex64>,
}

impl Branch {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Mixture of pure branches sharing the same dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricState {
    pairs: u32,
    branches: Vec<Branch>,
}

impl SymmetricState {
    pub fn new(pairs: u32, branches: Vec<Branch>) -> Result<Self> {
        let state = Self::assemble(pairs, branches)?;
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(invalid(format!("state norm {norm} differs from 1")));
        }
        Ok(state)
    }

    fn assemble(pairs: u32, branches: Vec<Branch>) -> Result<Self> {
        let Some(first) = branches.first() else {
            return Err(invalid("a state needs at least one branch"));
        };
        let shape = first.amplitudes.shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(invalid("empty amplitude matrix"));
        }
        for b in &branches {
            if b.amplitudes.shape() != shape {
                return Err(invalid("branches have different dimensions"));
            }
            if !(b.weight >= 0.0) || !b.weight.is_finite() {
                return Err(invalid(format!("branch weight {} is not a probability", b.weight)));
            }
        }
        Ok(Self { pairs, branches })
    }

    /// Number of emitted pairs.
    pub fn pairs(&self) -> u32 {
        self.pairs
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn alice_photons(&self) -> usize {
        self.branches[0].amplitudes.nrows() - 1
    }

    pub fn bob_photons(&self) -> usize {
        self.branches[0].amplitudes.ncols() - 1
    }

    /// `sum_b w_b ||X_b||_F^2`.
    pub fn norm(&self) -> f64 {
        self.branches.iter().map(|b| b.weight * b.norm_sqr()).collect::<CompensatedSum>().value()
    }

    pub fn is_pure(&self) -> bool {
        self.branches.len() == 1
    }
}

/// `sum_k |k>|k> / sqrt(M+1)`.
pub fn phi_state(m: u32) -> Result<SymmetricState> {
    if m == 0 {
        return Err(invalid("the multi-pair state needs M >= 1"));
    }
    let d = m as usize + 1;
    let x = DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / (d as f64).sqrt(), 0.0));
    SymmetricState::new(m, vec![Branch { weight: 1.0, amplitudes: x }])
}

/// Cached spin representations for both sides of a state.
#[derive(Debug, Clone)]
pub struct CountEvaluator {
    alice: Spin,
    bob: Spin,
}

impl CountEvaluator {
    pub fn new(alice_photons: usize, bob_photons: usize) -> Self {
        let alice = Spin::new(alice_photons);
        let bob = if bob_photons == alice_photons { alice.clone() } else { Spin::new(bob_photons) };
        Self { alice, bob }
    }

    pub fn for_state(state: &SymmetricState) -> Self {
        Self::new(state.alice_photons(), state.bob_photons())
    }

    /// `P[k,l]`: probability of `k` photons in Alice's `+` port and `l` in
    /// Bob's, with polarizers at planar Bloch angles `a`, `b`.
    pub fn counts(&self, state: &SymmetricState, a: f64, b: f64) -> Result<DMatrix<f64>> {
        if state.alice_photons() != self.alice.photons() || state.bob_photons() != self.bob.photons() {
            return Err(invalid(format!(
                "state has {}x{} photons, evaluator expects {}x{}",
                state.alice_photons(),
                state.bob_photons(),
                self.alice.photons(),
                self.bob.photons()
            )));
        }
        let ra = to_complex(&self.alice.d_matrix(-a));
        let rbt = to_complex(&self.bob.d_matrix(b));
        let mut p = DMatrix::zeros(self.alice.dim(), self.bob.dim());
        for br in &state.branches {
            let amp = &ra * &br.amplitudes * &rbt;
            p.zip_apply(&amp, |acc, z| *acc += br.weight * z.norm_sqr());
        }
        Ok(p)
    }
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn count_distribution(state: &SymmetricState, a: f64, b: f64) -> Result<DMatrix<f64>> {
    CountEvaluator::for_state(state).counts(state, a, b)
}

/// CH inputs from a count matrix; every photon is detected, so each side
/// votes on its full photon number.
pub fn vote_probs_from_count_matrix(p: &DMatrix<f64>, rule_a: VoteRule, rule_b: VoteRule) -> Result<ChInputs> {
    if rule_a.is_ternary() || rule_b.is_ternary() {
        return Err(Error::Unsupported("ternary votes on the symmetric state".into()));
    }
    let na = rule_a.threshold((p.nrows() - 1) as u32) as usize;
    let nb = rule_b.threshold((p.ncols() - 1) as u32) as usize;
    let mut a = CompensatedSum::new();
    let mut b = CompensatedSum::new();
    let mut j = CompensatedSum::new();
    for k in 0..p.nrows() {
        for l in 0..p.ncols() {
            let v = p[(k, l)];
            if k >= na {
                a.add(v);
            }
            if l >= nb {
                b.add(v);
            }
            if k >= na && l >= nb {
                j.add(v);
            }
        }
    }
    Ok(ChInputs { p_plus_a: a.value(), p_plus_b: b.value(), p_pp: j.value() })
}

pub fn vote_probs_symmetric(state: &SymmetricState, a: f64, b: f64, rule: VoteRule) -> Result<ChInputs> {
    vote_probs_from_count_matrix(&count_distribution(state, a, b)?, rule, rule)
}

/// Random rotation of Alice's photons about a uniformly random axis by an
/// angle `2 beta`, `beta` Gaussian of width `sigma` against the Haar
/// density `sin^2 beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseChannelSpec {
    pub sigma: f64,
    pub n_beta: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

/// One quadrature node of the channel average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationNode {
    pub beta: f64,
    pub axis_theta: f64,
    pub axis_phi: f64,
    pub weight: f64,
}

impl NoiseChannelSpec {
    pub fn new(sigma: f64) -> Self {
        Self { sigma, n_beta: 24, n_theta: 16, n_phi: 16 }
    }

    /// Default orders raised so the axis average is exact for `photons`
    /// and the `beta` rule resolves the fastest phase `2 beta (photons + 1)`.
    pub fn for_photons(sigma: f64, photons: usize) -> Self {
        let s = Self::new(sigma);
        // Hermite rules with n nodes handle cos(f x) e^{-x^2} to ~1e-10 up to f ~ 1.1 sqrt(n)
        let f = 2.0 * std::f64::consts::SQRT_2 * sigma * (photons + 1) as f64;
        let n_beta = ((f / 1.1).powi(2).ceil() as usize).clamp(s.n_beta, MAX_BETA_NODES);
        Self { n_beta, n_theta: s.n_theta.max(photons + 1), n_phi: s.n_phi.max(2 * photons + 1), ..s }
    }

    fn check(&self, photons: usize) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(invalid(format!("noise width sigma={} must be finite and >= 0", self.sigma)));
        }
        if self.n_beta == 0 || self.n_theta == 0 || self.n_phi == 0 {
            return Err(Error::Config("quadrature orders must be positive".into()));
        }
        // rotated rank-r tensors carry axis harmonics up to degree 2r <= 2 photons
        if self.n_phi < 2 * photons + 1 || self.n_theta < photons + 1 {
            return Err(Error::Config(format!(
                "quadrature (n_theta={}, n_phi={}) too coarse for {photons} photons",
                self.n_theta, self.n_phi
            )));
        }
        Ok(())
    }

    fn beta_rule(&self) -> Result<Vec<(f64, f64)>> {
        let s = self.sigma;
        let gh = gauss_hermite(self.n_beta);
        // p(beta) = 2 / ((1 - e^{-2 s^2}) sqrt(2 pi) s) e^{-beta^2 / 2 s^2}
        let norm = 2.0 / (-(-2.0 * s * s).exp_m1() * (2.0 * std::f64::consts::PI).sqrt() * s);
        let scale = std::f64::consts::SQRT_2 * s;
        let rule: Vec<(f64, f64)> = gh
            .nodes
            .iter()
            .zip(&gh.weights)
            .map(|(&x, &w)| {
                let beta = scale * x;
                (beta, w * scale * norm * beta.sin().powi(2))
            })
            .collect();
        let total: f64 = rule.iter().map(|r| r.1).sum();
        if (total - 1.0).abs() > QUADRATURE_TOL {
            return Err(Error::Config(format!(
                "{} Hermite nodes integrate the noise density to {total}; raise n_beta or lower sigma",
                self.n_beta
            )));
        }
        Ok(rule)
    }

    fn theta_rule(&self) -> Vec<(f64, f64)> {
        let gl = gauss_legendre(self.n_theta);
        gl.nodes.iter().zip(&gl.weights).map(|(&c, &w)| (c.acos(), w / 2.0)).collect()
    }

    /// Product rule over `(beta, axis theta, axis phi)`, weights summing to 1.
    pub fn nodes(&self, photons: usize) -> Result<Vec<RotationNode>> {
        self.check(photons)?;
        if self.sigma == 0.0 {
            return Ok(vec![RotationNode { beta: 0.0, axis_theta: 0.0, axis_phi: 0.0, weight: 1.0 }]);
        }
        let betas = self.beta_rule()?;
        let thetas = self.theta_rule();
        let mut out = Vec::with_capacity(betas.len() * thetas.len() * self.n_phi);
        for &(beta, wb) in &betas {
            for &(t, wt) in &thetas {
                for i in 0..self.n_phi {
                    let p = 2.0 * std::f64::consts::PI * i as f64 / self.n_phi as f64;
                    out.push(RotationNode { beta, axis_theta: t, axis_phi: p, weight: wb * wt / self.n_phi as f64 });
                }
            }
        }
        Ok(out)
    }
}

/// Rotation noise on Alice's side as an explicit mixture over quadrature nodes.
pub fn apply_rotation_noise(state: &SymmetricState, spec: &NoiseChannelSpec) -> Result<SymmetricState> {
    let photons = state.alice_photons();
    let nodes = spec.nodes(photons)?;
    if spec.sigma == 0.0 {
        return Ok(state.clone());
    }
    let spin = Spin::new(photons);
    let mut branches = Vec::with_capacity(nodes.len() * state.branches.len());
    for node in &nodes {
        let u = spin.rotation(node.axis_theta, node.axis_phi, 2.0 * node.beta).matrix;
        for b in &state.branches {
            branches.push(Branch { weight: node.weight * b.weight, amplitudes: &u * &b.amplitudes });
        }
    }
    SymmetricState::assemble(state.pairs, branches)
}

/// The rotation-noise channel seen by photon counts: `S[k,m] = E |U_km|^2`,
/// so that `P_noisy = S P` for any input state.
///
/// The axis average uses the spec's `theta` rule; the `beta` average is done
/// in closed form, so `n_beta` and `n_phi` only enter through validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationNoiseKernel {
    matrix: DMatrix<f64>,
}

impl RotationNoiseKernel {
    pub fn new(photons: usize, spec: &NoiseChannelSpec) -> Result<Self> {
        spec.check(photons)?;
        let dim = photons + 1;
        if spec.sigma == 0.0 {
            return Ok(Self { matrix: DMatrix::identity(dim, dim) });
        }
        let spin = Spin::new(photons);
        // E_beta[cos(2 beta D)] against sin^2(beta) p(beta), exact in beta
        let s2 = spec.sigma * spec.sigma;
        let denom = -(-2.0 * s2).exp_m1();
        let g: Vec<f64> = (0..dim)
            .map(|delta| {
                let x = delta as f64;
                let c = (2.0 * x * s2).sinh();
                let inner = -(-2.0 * s2 + (2.0 * c * c).ln_1p()).exp_m1();
                (-2.0 * x * x * s2).exp() * inner / denom
            })
            .collect();
        let mut s = DMatrix::zeros(dim, dim);
        let mut a = vec![0.0; dim];
        // |U_km|^2 does not depend on the axis azimuth
        for (t, wt) in spec.theta_rule() {
            let d = spin.d_matrix(t);
            for k in 0..dim {
                for m in k..dim {
                    for n in 0..dim {
                        a[n] = d[(k, n)] * d[(m, n)];
                    }
                    let mut q = 0.0;
                    for n in 0..dim {
                        let mut row = g[0] * a[n];
                        for n2 in 0..n {
                            row += 2.0 * g[n - n2] * a[n2];
                        }
                        q += a[n] * row;
                    }
                    s[(k, m)] += wt * q;
                }
            }
        }
        for k in 0..dim {
            for m in 0..k {
                s[(k, m)] = s[(m, k)];
            }
        }
        Ok(Self { matrix: s })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, counts: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if counts.nrows() != self.matrix.ncols() {
            return Err(invalid("count matrix does not match the noise kernel"));
        }
        Ok(&self.matrix * counts)
    }
}

/// Exactly one photon lost on each side, in either mode; the four
/// annihilation branches are kept as a mixture.
pub fn apply_one_loss_each_side(state: &SymmetricState) -> Result<SymmetricState> {
    if state.pairs < 2 || state.alice_photons() < 1 || state.bob_photons() < 1 {
        return Err(invalid(format!("one loss per side needs at least 2 pairs, got {}", state.pairs)));
    }
    let la = annihilators(state.alice_photons());
    let lb = annihilators(state.bob_photons());
    let mut branches = Vec::with_capacity(4 * state.branches.len());
    for b in &state.branches {
        for x in &la {
            for y in &lb {
                branches.push(Branch { weight: b.weight, amplitudes: x * &b.amplitudes * y.transpose() });
            }
        }
    }
    let mut out = SymmetricState::assemble(state.pairs, branches)?;
    let norm = out.norm();
    for b in &mut out.branches {
        b.weight /= norm;
    }
    Ok(out)
}

/// `a_0` and `a_1` from `n` to `n - 1` photons.
fn annihilators(n: usize) -> [DMatrix<Complex64>; 2] {
    let mut a0 = DMatrix::zeros(n, n + 1);
    let mut a1 = DMatrix::zeros(n, n + 1);
    for i in 0..=n {
        if i > 0 {
            a0[(i - 1, i)] = Complex64::new((i as f64).sqrt(), 0.0);
        }
        if i < n {
            a1[(i, i)] = Complex64::new(((n - i) as f64).sqrt(), 0.0);
        }
    }
    [a0, a1]
}
