//! Single-pair layer: two-qubit states, measurement directions and the four
//! outcome probabilities of one pair.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const UNIT_TOL: f64 = 1e-12;

type Mat2 = [[Complex64; 2]; 2];
type Mat4 = [[Complex64; 4]; 4];

/// Measurement direction on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Self { x, y, z };
        v.check()?;
        Ok(v)
    }

    /// Direction at angle `chi` from the z axis inside the x-z plane.
    pub fn planar(chi: f64) -> Self {
        Self {
            x: chi.sin(),
            y: 0.0,
            z: chi.cos(),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    fn check(&self) -> Result<()> {
        if (self.norm_sqr() - 1.0).abs() > UNIT_TOL || !self.norm_sqr().is_finite() {
            return Err(invalid(format!(
                "Bloch vector ({}, {}, {}) is not unit length",
                self.x, self.y, self.z
            )));
        }
        Ok(())
    }

    /// Projector `(1 + s n.sigma)/2` for outcome sign `s = +1 / -1`.
    fn projector(&self, sign: f64) -> Mat2 {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        [
            [c(0.5 * (1.0 + sign * self.z), 0.0), c(0.5 * sign * self.x, -0.5 * sign * self.y)],
            [c(0.5 * sign * self.x, 0.5 * sign * self.y), c(0.5 * (1.0 - sign * self.z), 0.0)],
        ]
    }
}

/// Planar measurement angles for both parties, `[first, second]` each.
/// Angles are Bloch angles in the x-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementAngles {
    pub alice: [f64; 2],
    pub bob: [f64; 2],
}

impl MeasurementAngles {
    pub fn directions(&self) -> ([BlochVector; 2], [BlochVector; 2]) {
        (
            self.alice.map(BlochVector::planar),
            self.bob.map(BlochVector::planar),
        )
    }
}

/// The one-parameter planar family: Alice at `0, 2 alpha`, Bob at `+-alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarSettings {
    pub alpha: f64,
}

impl PlanarSettings {
    pub fn new(alpha: f64) -> Self {
        Self { alpha }
    }

    /// The CHSH-optimal single-pair settings.
    pub fn standard() -> Self {
        Self::new(std::f64::consts::FRAC_PI_4)
    }

    pub fn angles(&self) -> MeasurementAngles {
        MeasurementAngles {
            alice: [0.0, 2.0 * self.alpha],
            bob: [self.alpha, -self.alpha],
        }
    }
}

/// `(A1, A2, B1, B2)` for the planar family.
pub fn expand_settings(s: PlanarSettings) -> [BlochVector; 4] {
    let a = s.alpha;
    [
        BlochVector { x: 0.0, y: 0.0, z: 1.0 },
        BlochVector { x: (2.0 * a).sin(), y: 0.0, z: (2.0 * a).cos() },
        BlochVector { x: a.sin(), y: 0.0, z: a.cos() },
        BlochVector { x: -a.sin(), y: 0.0, z: a.cos() },
    ]
}

/// `w |psi_theta><psi_theta| + (1 - w) 1/4` with
/// `|psi_theta> = cos(theta)|00> + sin(theta)|11>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub theta: f64,
    pub werner_w: f64,
}

impl PairState {
    pub fn new(theta: f64, werner_w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&werner_w) || !theta.is_finite() {
            return Err(invalid(format!(
                "pair state needs finite theta and w in [0,1], got theta={theta}, w={werner_w}"
            )));
        }
        Ok(Self { theta, werner_w })
    }

    pub fn pure(theta: f64) -> Self {
        Self { theta, werner_w: 1.0 }
    }

    pub fn maximally_entangled() -> Self {
        Self::pure(std::f64::consts::FRAC_PI_4)
    }

    /// Same state with white-noise fraction `eps = 1 - w`.
    pub fn with_noise(self, eps: f64) -> Result<Self> {
        Self::new(self.theta, 1.0 - eps)
    }

    /// Density operator in the basis `|00>, |01>, |10>, |11>` (Alice first).
    pub fn density_matrix(&self) -> Mat4 {
        let (s, c) = self.theta.sin_cos();
        let psi = [c, 0.0, 0.0, s];
        let mut rho = [[Complex64::new(0.0, 0.0); 4]; 4];
        for (i, row) in rho.iter_mut().enumerate() {
            for (j, el) in row.iter_mut().enumerate() {
                let mixed = if i == j { 0.25 } else { 0.0 };
                *el = Complex64::new(self.werner_w * psi[i] * psi[j] + (1.0 - self.werner_w) * mixed, 0.0);
            }
        }
        rho
    }
}

/// Outcome probabilities of one pair for a fixed pair of directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOutcomeDist {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl PairOutcomeDist {
    pub fn new(p_pp: f64, p_pm: f64, p_mp: f64, p_mm: f64) -> Result<Self> {
        let d = Self { p_pp, p_pm, p_mp, p_mm };
        let all = [p_pp, p_pm, p_mp, p_mm];
        if all.iter().any(|p| !(-1e-12..=1.0 + 1e-12).contains(p)) || (d.total() - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("not a probability distribution: {all:?}")));
        }
        Ok(d)
    }

    pub fn uniform() -> Self {
        Self { p_pp: 0.25, p_pm: 0.25, p_mp: 0.25, p_mm: 0.25 }
    }

    pub fn total(&self) -> f64 {
        self.p_pp + self.p_pm + self.p_mp + self.p_mm
    }

    pub fn alice_plus(&self) -> f64 {
        self.p_pp + self.p_pm
    }

    pub fn bob_plus(&self) -> f64 {
        self.p_pp + self.p_mp
    }

    /// Probabilities in the order `[++, +-, -+, --]`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }
}

fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut out = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn trace_product(a: &Mat4, b: &Mat4) -> f64 {
    let mut t = Complex64::new(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            t += a[i][j] * b[j][i];
        }
    }
    t.re
}

/// `p_{ab} = tr[rho (P_a(a) x P_b(b))]` with `P_+-(n) = (1 +- n.sigma)/2`.
pub fn single_pair_probs(state: PairState, a: BlochVector, b: BlochVector) -> Result<PairOutcomeDist> {
    a.check()?;
    b.check()?;
    let rho = state.density_matrix();
    let prob = |sa: f64, sb: f64| {
        trace_product(&rho, &kron(&a.projector(sa), &b.projector(sb))).clamp(0.0, 1.0)
    };
    Ok(PairOutcomeDist {
        p_pp: prob(1.0, 1.0),
        p_pm: prob(1.0, -1.0),
        p_mp: prob(-1.0, 1.0),
        p_mm: prob(-1.0, -1.0),
    })
}

/// Outcome distribution at planar angles `(chi_a, chi_b)`.
pub fn planar_pair_probs(state: PairState, chi_a: f64, chi_b: f64) -> PairOutcomeDist {
    single_pair_probs(state, BlochVector::planar(chi_a), BlochVector::planar(chi_b))
        .expect("planar directions are unit vectors")
}
