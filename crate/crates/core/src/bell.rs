//! CH and Reid figures of merit, scenario evaluation, and the searches
//! built on them: optimal violation, noise resistance, critical efficiency.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{
    apply_one_loss_each_side, phi_state, vote_probs_from_count_matrix, CountEvaluator, NoiseChannelSpec,
    RotationNoiseKernel, SymmetricState,
};
use crate::numeric::CompensatedSum;
use crate::optimize::{bisect_last_true, maximize, refine_from, Bounds, Optimum, OptimizerSpec};
use crate::pair::{planar_pair_probs, MeasurementAngles, PairOutcomeDist, PairState, PlanarSettings};
use crate::vote::{
    count_distribution_with_efficiency, one_loss_each_side_distribution, ternary_vote_probs, vote_probs_from_counts,
    vote_probs_lossless, ChInputs, CountJointDistribution, CountTable, DetectionModel, EmptyEventPolicy,
    TernaryConvention, VoteRule,
};

/// CH above this counts as a violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-9;
/// Largest admissible Poisson truncation tail.
pub const POISSON_TAIL: f64 = 1e-10;

/// Inputs per settings pair, indexed `[alice setting][bob setting]`.
pub type ChTable = [[ChInputs; 2]; 2];

/// `-P_+^A(A1) - P_+^B(B1) + P_++(A1,B1) + P_++(A1,B2) + P_++(A2,B1) - P_++(A2,B2)`.
pub fn ch_value(t: &ChTable) -> f64 {
    -t[0][0].p_plus_a - t[0][0].p_plus_b + t[0][0].p_pp + t[0][1].p_pp + t[1][0].p_pp - t[1][1].p_pp
}

/// Reid's ratio `(CH + B) / B`, `B = P_+^A(A2) + P_+^B(B2)`.
pub fn reid_s(t: &ChTable) -> Result<f64> {
    let b = t[1][1].p_plus_a + t[1][1].p_plus_b;
    if b <= 0.0 {
        return Err(Error::UndefinedMetric("Reid ratio with vanishing marginals".into()));
    }
    Ok((ch_value(t) + b) / b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    Fixed {
        pairs: u32,
    },
    Poisson {
        mu: f64,
        /// Truncation; chosen automatically when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_pairs: Option<u32>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleModel {
    #[default]
    Independent,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Detection {
    #[default]
    Lossless,
    Efficiency {
        eta: f64,
    },
    OneLossEachSide,
}

/// Quadrature orders of the rotation-noise average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOrders {
    pub n_beta: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Noise {
    #[default]
    None,
    /// White noise on every pair, `w = 1 - epsilon`.
    Werner { epsilon: f64 },
    /// Random rotations of Alice's photons.
    Rotation {
        sigma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quadrature: Option<QuadratureOrders>,
    },
}

/// Everything that fixes the statistics except state angle and settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub source: Source,
    #[serde(default)]
    pub particles: ParticleModel,
    #[serde(default)]
    pub detection: Detection,
    pub rule: VoteRule,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub empty_event: EmptyEventPolicy,
    #[serde(default)]
    pub ternary: TernaryConvention,
}

impl Scenario {
    pub fn fixed(pairs: u32, rule: VoteRule) -> Self {
        Self {
            source: Source::Fixed { pairs },
            particles: ParticleModel::Independent,
            detection: Detection::Lossless,
            rule,
            noise: Noise::None,
            empty_event: EmptyEventPolicy::Minus,
            ternary: TernaryConvention::NoRenormalization,
        }
    }

    pub fn symmetric(pairs: u32, rule: VoteRule) -> Self {
        Self { particles: ParticleModel::Symmetric, ..Self::fixed(pairs, rule) }
    }

    pub fn poisson(mu: f64, rule: VoteRule) -> Self {
        Self { source: Source::Poisson { mu, max_pairs: None }, ..Self::fixed(1, rule) }
    }

    pub fn with_detection(self, detection: Detection) -> Self {
        Self { detection, ..self }
    }

    pub fn with_noise(self, noise: Noise) -> Self {
        Self { noise, ..self }
    }

    /// Rejects combinations outside the studied scenario matrix.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        match self.source {
            Source::Fixed { pairs: 0 } => return cfg("fixed source needs at least one pair".into()),
            Source::Poisson { mu, .. } if !(mu > 0.0 && mu.is_finite()) => {
                return cfg(format!("Poisson mean {mu} must be positive"));
            }
            _ => {}
        }
        if let VoteRule::Fraction { num, den } = self.rule {
            VoteRule::fraction(num, den).map_err(|e| Error::Config(e.to_string()))?;
        }
        match self.detection {
            Detection::Efficiency { eta } if !(0.0..=1.0).contains(&eta) => {
                return cfg(format!("detection efficiency {eta} outside [0,1]"));
            }
            Detection::OneLossEachSide => match self.source {
                Source::Fixed { pairs } if pairs < 2 => {
                    return cfg("one loss per side needs at least 2 pairs".into());
                }
                Source::Poisson { .. } => return cfg("one loss per side is studied for a fixed pair number only".into()),
                _ => {}
            },
            _ => {}
        }
        match self.noise {
            Noise::Werner { epsilon } if !(0.0..=1.0).contains(&epsilon) => {
                return cfg(format!("white-noise fraction {epsilon} outside [0,1]"));
            }
            Noise::Rotation { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return cfg(format!("rotation-noise width {sigma} must be >= 0"));
            }
            _ => {}
        }
        match self.particles {
            ParticleModel::Independent => {
                if matches!(self.noise, Noise::Rotation { .. }) {
                    return cfg("rotation noise applies to the symmetric state; use werner noise for independent pairs".into());
                }
                if self.rule.is_ternary() && matches!(self.source, Source::Poisson { .. }) {
                    return cfg("ternary votes need a fixed pair number".into());
                }
            }
            ParticleModel::Symmetric => {
                if !matches!(self.source, Source::Fixed { .. }) {
                    return cfg("the symmetric state is studied for a fixed pair number only".into());
                }
                if matches!(self.detection, Detection::Efficiency { .. }) {
                    return cfg("the symmetric state supports lossless or one-loss-each-side detection".into());
                }
                if matches!(self.noise, Noise::Werner { .. }) {
                    return cfg("the symmetric state uses rotation noise, not werner noise".into());
                }
                if self.rule.is_ternary() {
                    return cfg("ternary votes are studied for independent pairs only".into());
                }
            }
        }
        Ok(())
    }

    pub fn werner_w(&self) -> f64 {
        match self.noise {
            Noise::Werner { epsilon } => 1.0 - epsilon,
            _ => 1.0,
        }
    }

    /// Quadrature used for rotation noise on `photons` photons.
    pub fn noise_channel(&self, photons: usize) -> Option<NoiseChannelSpec> {
        match self.noise {
            Noise::Rotation { sigma, quadrature } => Some(match quadrature {
                Some(q) => NoiseChannelSpec { sigma, n_beta: q.n_beta, n_theta: q.n_theta, n_phi: q.n_phi },
                None => NoiseChannelSpec::for_photons(sigma, photons),
            }),
            _ => None,
        }
    }
}

/// `e^{-mu} mu^M / M!` for `M = 0..=M_max`, with `M_max` the smallest
/// truncation leaving a tail below [`POISSON_TAIL`] unless given.
pub fn poisson_weights(mu: f64, max_pairs: Option<u32>) -> Result<Vec<f64>> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid(format!("Poisson mean {mu} must be positive")));
    }
    let mut terms = Vec::new();
    let mut ln_term = -mu;
    let mut m = 0u32;
    loop {
        terms.push(ln_term.exp());
        m += 1;
        ln_term += mu.ln() - (m as f64).ln();
        if m as f64 > mu && ln_term < -60.0 {
            break;
        }
    }
    // tails[k] = sum over terms beyond k
    let mut tail = 0.0;
    let mut tails = vec![0.0; terms.len()];
    for k in (0..terms.len()).rev() {
        tails[k] = tail;
        tail += terms[k];
    }
    let cut = match max_pairs {
        Some(mm) => {
            let mm = mm as usize;
            let t = if mm < tails.len() { tails[mm] } else { 0.0 };
            if t >= POISSON_TAIL {
                return Err(Error::Config(format!("truncating Poisson(mu={mu}) at {mm} pairs leaves tail {t:e}")));
            }
            mm
        }
        None => tails.iter().position(|&t| t < POISSON_TAIL).expect("tail vanishes"),
    };
    terms.resize(cut + 1, 0.0);
    Ok(terms)
}

/// `sum_M p(M) inputs(M)`.
pub fn poisson_mix(weights: &[f64], mut per_m: impl FnMut(u32) -> Result<ChInputs>) -> Result<ChInputs> {
    let mut acc = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    for (m, &w) in weights.iter().enumerate() {
        let c = per_m(m as u32)?;
        acc[0].add(w * c.p_plus_a);
        acc[1].add(w * c.p_plus_b);
        acc[2].add(w * c.p_pp);
    }
    Ok(ChInputs { p_plus_a: acc[0].value(), p_plus_b: acc[1].value(), p_pp: acc[2].value() })
}

/// A state angle and four measurement angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingsPoint {
    pub theta: f64,
    pub angles: MeasurementAngles,
}

impl SettingsPoint {
    pub fn planar(alpha: f64, theta: f64) -> Self {
        Self { theta, angles: PlanarSettings::new(alpha).angles() }
    }
}

/// Which parameters the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SettingsMode {
    /// Planar family angle `alpha`, maximally entangled pairs.
    #[default]
    Alpha,
    /// `alpha` and the pair state angle `theta`.
    AlphaTheta,
    /// `theta` and four free planar angles.
    FourAngles,
    /// Nothing: `alpha = theta = pi/4`.
    Standard,
}

impl SettingsMode {
    fn uses_theta(&self, particles: ParticleModel) -> bool {
        particles == ParticleModel::Independent && matches!(self, SettingsMode::AlphaTheta | SettingsMode::FourAngles)
    }

    fn bounds(&self, particles: ParticleModel) -> Vec<Bounds> {
        let mut b = Vec::new();
        if self.uses_theta(particles) {
            b.push(Bounds::new(0.0, FRAC_PI_4));
        }
        match self {
            SettingsMode::Alpha | SettingsMode::AlphaTheta => b.push(Bounds::new(0.0, FRAC_PI_2)),
            SettingsMode::FourAngles => b.extend([Bounds::new(-PI, PI); 4]),
            SettingsMode::Standard => {}
        }
        b
    }

    fn point(&self, particles: ParticleModel, x: &[f64]) -> SettingsPoint {
        let (theta, rest) = if self.uses_theta(particles) { (x[0], &x[1..]) } else { (FRAC_PI_4, x) };
        match self {
            SettingsMode::Alpha | SettingsMode::AlphaTheta => SettingsPoint::planar(rest[0], theta),
            SettingsMode::FourAngles => SettingsPoint {
                theta,
                angles: MeasurementAngles { alice: [rest[0], rest[1]], bob: [rest[2], rest[3]] },
            },
            SettingsMode::Standard => SettingsPoint::planar(FRAC_PI_4, FRAC_PI_4),
        }
    }

    /// Parameters reproducing `p` in this mode, when representable.
    fn params_of(&self, particles: ParticleModel, p: &SettingsPoint) -> Vec<f64> {
        let mut x = Vec::new();
        if self.uses_theta(particles) {
            x.push(p.theta);
        }
        match self {
            SettingsMode::Alpha | SettingsMode::AlphaTheta => x.push(p.angles.bob[0] - p.angles.alice[0]),
            SettingsMode::FourAngles => x.extend([p.angles.alice[0], p.angles.alice[1], p.angles.bob[0], p.angles.bob[1]]),
            SettingsMode::Standard => {}
        }
        x
    }
}

enum Model {
    Independent { weights: Option<Vec<f64>> },
    Symmetric { state: SymmetricState, counts: CountEvaluator, kernel: Option<RotationNoiseKernel> },
}

/// A validated scenario with its precomputed state data.
pub struct ChEvaluator {
    scenario: Scenario,
    model: Model,
}

impl ChEvaluator {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let model = match scenario.particles {
            ParticleModel::Independent => Model::Independent {
                weights: match scenario.source {
                    Source::Poisson { mu, max_pairs } => Some(poisson_weights(mu, max_pairs)?),
                    Source::Fixed { .. } => None,
                },
            },
            ParticleModel::Symmetric => {
                let Source::Fixed { pairs } = scenario.source else { unreachable!("validated") };
                let mut state = phi_state(pairs)?;
                if scenario.detection == Detection::OneLossEachSide {
                    state = apply_one_loss_each_side(&state)?;
                }
                let kernel = match scenario.noise_channel(state.alice_photons()) {
                    Some(spec) => Some(RotationNoiseKernel::new(state.alice_photons(), &spec)?),
                    None => None,
                };
                let counts = CountEvaluator::for_state(&state);
                Model::Symmetric { state, counts, kernel }
            }
        };
        Ok(Self { scenario: *scenario, model })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn poisson_truncation(&self) -> Option<u32> {
        match &self.model {
            Model::Independent { weights: Some(w) } => Some(w.len() as u32 - 1),
            _ => None,
        }
    }

    pub fn table(&self, p: &SettingsPoint) -> Result<ChTable> {
        let mut t = [[ChInputs::default(); 2]; 2];
        for (i, &a) in p.angles.alice.iter().enumerate() {
            for (j, &b) in p.angles.bob.iter().enumerate() {
                t[i][j] = self.inputs(p.theta, a, b)?;
            }
        }
        Ok(t)
    }

    pub fn ch(&self, p: &SettingsPoint) -> Result<f64> {
        Ok(ch_value(&self.table(p)?))
    }

    fn inputs(&self, theta: f64, a: f64, b: f64) -> Result<ChInputs> {
        match &self.model {
            Model::Independent { weights } => {
                let dist = planar_pair_probs(PairState::new(theta, self.scenario.werner_w())?, a, b);
                match weights {
                    None => {
                        let Source::Fixed { pairs } = self.scenario.source else { unreachable!("validated") };
                        self.fixed_inputs(pairs, &dist)
                    }
                    Some(w) => self.poisson_inputs(w, &dist),
                }
            }
            Model::Symmetric { state, counts, kernel } => {
                let mut p = counts.counts(state, a, b)?;
                if let Some(k) = kernel {
                    p = k.apply(&p)?;
                }
                vote_probs_from_count_matrix(&p, self.scenario.rule, self.scenario.rule)
            }
        }
    }

    fn fixed_inputs(&self, m: u32, dist: &PairOutcomeDist) -> Result<ChInputs> {
        let s = &self.scenario;
        if m == 0 {
            return Ok(ChInputs::empty_event(s.empty_event));
        }
        let counts = match s.detection {
            Detection::Lossless if !s.rule.is_ternary() => {
                if s.rule == VoteRule::Unanimity {
                    let mi = m as i32;
                    return Ok(ChInputs {
                        p_plus_a: dist.alice_plus().powi(mi),
                        p_plus_b: dist.bob_plus().powi(mi),
                        p_pp: dist.p_pp.powi(mi),
                    });
                }
                return vote_probs_lossless(m, dist, s.rule, s.empty_event);
            }
            Detection::Lossless => CountJointDistribution::lossless(m, dist),
            Detection::Efficiency { eta } => count_distribution_with_efficiency(m, dist, DetectionModel::new(eta)?),
            Detection::OneLossEachSide => one_loss_each_side_distribution(m, dist)?,
        };
        match s.rule {
            VoteRule::Ternary(th) => ternary_vote_probs(&counts, th.resolve(m), s.ternary),
            rule => vote_probs_from_counts(&counts, rule, rule, s.empty_event),
        }
    }

    fn poisson_inputs(&self, weights: &[f64], dist: &PairOutcomeDist) -> Result<ChInputs> {
        let s = &self.scenario;
        if s.detection == Detection::Lossless && s.rule != VoteRule::Unanimity {
            let mut table = CountTable::new(dist, weights.len() as u32);
            return poisson_mix(weights, |m| {
                while table.pairs() < m {
                    table.add_pair();
                }
                Ok(table.vote_inputs(s.rule, s.rule, s.empty_event))
            });
        }
        poisson_mix(weights, |m| self.fixed_inputs(m, dist))
    }
}

/// Best CH found and where.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChValue {
    pub value: f64,
    pub settings: SettingsPoint,
    /// Planar-family angle when the mode has one.
    pub alpha: Option<f64>,
    /// State angle when it was optimized or fixed for independent pairs.
    pub theta: Option<f64>,
    pub grid_index: Option<usize>,
    pub refine_steps: usize,
    pub evaluations: usize,
}

impl ChValue {
    pub fn violates(&self) -> bool {
        self.value > VIOLATION_THRESHOLD
    }

    fn from_optimum(ev: &ChEvaluator, mode: SettingsMode, o: &Optimum) -> Self {
        let particles = ev.scenario.particles;
        let settings = mode.point(particles, &o.params);
        Self {
            value: o.value,
            settings,
            alpha: matches!(mode, SettingsMode::Alpha | SettingsMode::AlphaTheta | SettingsMode::Standard)
                .then(|| settings.angles.bob[0]),
            theta: (particles == ParticleModel::Independent).then_some(settings.theta),
            grid_index: o.grid_index,
            refine_steps: o.refine_steps,
            evaluations: o.evaluations,
        }
    }
}

fn objective<'a>(ev: &'a ChEvaluator, mode: SettingsMode) -> impl FnMut(&[f64]) -> f64 + 'a {
    let particles = ev.scenario.particles;
    move |x: &[f64]| ev.ch(&mode.point(particles, x)).unwrap_or(f64::NAN)
}

/// Maximize CH over the parameters of `mode`: grid, then local refinement.
///
/// In four-angle mode the planar optimum (with `theta`) seeds the search
/// next to the coarse-grid starts.
pub fn maximize_ch(ev: &ChEvaluator, mode: SettingsMode, spec: &OptimizerSpec) -> Result<ChValue> {
    spec.validate()?;
    let particles = ev.scenario.particles;
    if mode == SettingsMode::Standard {
        let p = mode.point(particles, &[]);
        let o = Optimum { params: vec![], value: ev.ch(&p)?, grid_index: None, refine_steps: 0, evaluations: 1 };
        return Ok(ChValue::from_optimum(ev, mode, &o));
    }
    // surface evaluation errors before they turn into NaN
    ev.ch(&SettingsPoint::planar(FRAC_PI_4, FRAC_PI_4))?;
    let bounds = mode.bounds(particles);
    let mut f = objective(ev, mode);
    let mut best = maximize(&mut f, &bounds, spec);
    if mode == SettingsMode::FourAngles {
        let planar_mode = if particles == ParticleModel::Independent { SettingsMode::AlphaTheta } else { SettingsMode::Alpha };
        let planar = maximize_ch(ev, planar_mode, spec)?;
        let seed = mode.params_of(particles, &planar.settings);
        let r = refine_from(&mut f, &bounds, &[seed], spec, 1.0);
        let evaluations = best.evaluations + r.evaluations + planar.evaluations;
        if r.value > best.value {
            best = r;
        }
        best.evaluations = evaluations;
    }
    Ok(ChValue::from_optimum(ev, mode, &best))
}

/// Continue from earlier optima without a new grid.
pub fn refine_ch(ev: &ChEvaluator, mode: SettingsMode, spec: &OptimizerSpec, starts: &[SettingsPoint]) -> Result<ChValue> {
    spec.validate()?;
    let particles = ev.scenario.particles;
    if mode == SettingsMode::Standard || starts.is_empty() {
        return maximize_ch(ev, mode, spec);
    }
    let bounds = mode.bounds(particles);
    let seeds: Vec<Vec<f64>> = starts.iter().map(|p| mode.params_of(particles, p)).collect();
    let o = refine_from(&mut objective(ev, mode), &bounds, &seeds, spec, 1.0);
    Ok(ChValue::from_optimum(ev, mode, &o))
}

/// Threshold noise level and the optimum found there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseResistance {
    /// White-noise fraction (for rotation noise, the Werner-equivalent).
    pub epsilon: f64,
    /// Rotation width at threshold, for rotation noise.
    pub sigma: Option<f64>,
    /// `false` when there is no violation even without noise.
    pub violated: bool,
    pub optimum: ChValue,
    pub noiseless: ChValue,
    pub probes: usize,
}

/// Werner weight equivalent to rotation noise of width `sigma` on one pair.
pub fn rotation_werner_w(sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    ((-2.0 * s2).exp() + (-4.0 * s2).exp() + (-6.0 * s2).exp()) / 3.0
}

const NOISE_TOL: f64 = 1e-6;
const SIGMA_MAX: f64 = 2.0;

/// Largest noise level keeping `max CH > 0`, by bisection with
/// re-optimization at every probe.
///
/// Probes refine from the noiseless optimum and from the last violating
/// probe; the full grid runs once at zero noise.
pub fn noise_resistance(scenario: &Scenario, mode: SettingsMode, spec: &OptimizerSpec) -> Result<NoiseResistance> {
    let rotation = scenario.particles == ParticleModel::Symmetric;
    let with_level = |x: f64| -> Scenario {
        if rotation {
            let q = match scenario.noise {
                Noise::Rotation { quadrature, .. } => quadrature,
                _ => None,
            };
            scenario.with_noise(if x == 0.0 { Noise::None } else { Noise::Rotation { sigma: x, quadrature: q } })
        } else {
            scenario.with_noise(if x == 0.0 { Noise::None } else { Noise::Werner { epsilon: x } })
        }
    };
    let noiseless = maximize_ch(&ChEvaluator::new(&with_level(0.0))?, mode, spec)?;
    let to_eps = |x: f64| if rotation { 1.0 - rotation_werner_w(x) } else { x };
    if !noiseless.violates() {
        return Ok(NoiseResistance {
            epsilon: 0.0,
            sigma: rotation.then_some(0.0),
            violated: false,
            optimum: noiseless.clone(),
            noiseless,
            probes: 0,
        });
    }
    let hi = if rotation { SIGMA_MAX } else { 1.0 };
    let mut last = noiseless.clone();
    let mut probes = 0;
    let mut failure = None;
    let x = bisect_last_true(
        &mut |x| {
            probes += 1;
            let r = ChEvaluator::new(&with_level(x))
                .and_then(|ev| refine_ch(&ev, mode, spec, &[noiseless.settings, last.settings]));
            match r {
                Ok(v) if v.violates() => {
                    last = v;
                    true
                }
                Ok(_) => false,
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            }
        },
        0.0,
        hi,
        NOISE_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(NoiseResistance {
        epsilon: to_eps(x),
        sigma: rotation.then_some(x),
        violated: true,
        optimum: last,
        noiseless,
        probes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalEfficiency {
    pub eta: f64,
    /// `false` when no violation exists even at unit efficiency.
    pub violated: bool,
    /// Optimum at the smallest violating probe.
    pub optimum: ChValue,
    pub probes: usize,
}

const EFFICIENCY_TOL: f64 = 1e-4;

/// Smallest detector efficiency with a violation, by bisection; every probe
/// is a full re-optimization seeded also by the previous violating optimum.
pub fn critical_efficiency(scenario: &Scenario, mode: SettingsMode, spec: &OptimizerSpec) -> Result<CriticalEfficiency> {
    let at = |eta: f64, seeds: &[SettingsPoint]| -> Result<ChValue> {
        let ev = ChEvaluator::new(&scenario.with_detection(Detection::Efficiency { eta }))?;
        let full = maximize_ch(&ev, mode, spec)?;
        if seeds.is_empty() {
            return Ok(full);
        }
        let warm = refine_ch(&ev, mode, spec, seeds)?;
        Ok(if warm.value > full.value { warm } else { full })
    };
    let top = at(1.0, &[])?;
    if !top.violates() {
        return Ok(CriticalEfficiency { eta: 1.0, violated: false, optimum: top, probes: 1 });
    }
    let mut last = top;
    let mut probes = 1;
    let mut failure = None;
    // bisect on 1 - eta so the violating side is the lower end
    let y = bisect_last_true(
        &mut |y| {
            probes += 1;
            match at(1.0 - y, &[last.settings]) {
                Ok(v) if v.violates() => {
                    last = v;
                    true
                }
                Ok(_) => false,
                Err(e) => {
                    failure.get_or_insert(e);
                    false
                }
            }
        },
        0.0,
        1.0,
        EFFICIENCY_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(CriticalEfficiency { eta: 1.0 - y, violated: true, optimum: last, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vote::TernaryThreshold;

    fn spec() -> OptimizerSpec {
        OptimizerSpec::default()
    }

    #[test]
    fn fully_mixed_pairs() {
        // -1/2 - 1/2 + 3/4 - 1/4
        let u = ChInputs { p_plus_a: 0.5, p_plus_b: 0.5, p_pp: 0.25 };
        assert!((ch_value(&[[u; 2]; 2]) + 0.5).abs() < 1e-15);
        let ev = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority).with_noise(Noise::Werner { epsilon: 1.0 })).unwrap();
        assert!((ev.ch(&SettingsPoint::planar(0.3, 0.5)).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn tsirelson_point() {
        let ev = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority)).unwrap();
        let t = ev.table(&SettingsPoint::planar(FRAC_PI_4, FRAC_PI_4)).unwrap();
        let want = (2f64.sqrt() - 1.0) / 2.0;
        assert!((ch_value(&t) - want).abs() < 1e-12);
        let s = reid_s(&t).unwrap();
        assert!(s > 1.0);
        // B = 1/2 + 1/2 for maximally entangled pairs
        assert!((s - (want + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reid_examples() {
        let z = ChInputs::default();
        let mut t = [[z; 2]; 2];
        t[1][1] = ChInputs { p_plus_a: 0.3, p_plus_b: 0.2, p_pp: 0.0 };
        t[0][0] = ChInputs { p_plus_a: 0.0, p_plus_b: 0.0, p_pp: 0.0 };
        assert!((reid_s(&t).unwrap() - 1.0).abs() < 1e-15);
        t[0][1].p_pp = 0.5;
        assert!((reid_s(&t).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(reid_s(&[[z; 2]; 2]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ch_is_symmetric_under_exchanging_parties() {
        let ev = ChEvaluator::new(&Scenario::fixed(3, VoteRule::Majority)).unwrap();
        let p = SettingsPoint { theta: 0.6, angles: MeasurementAngles { alice: [0.1, 1.2], bob: [0.5, -0.4] } };
        let q = SettingsPoint { theta: 0.6, angles: MeasurementAngles { alice: p.angles.bob, bob: p.angles.alice } };
        let (a, b) = (ev.ch(&p).unwrap(), ev.ch(&q).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    /// Every deterministic local assignment of outcomes to each pair, for
    /// both settings on both sides, followed by the vote.
    #[test]
    fn deterministic_local_strategies_never_violate() {
        for m in 1..=3u32 {
            for rule in [VoteRule::Majority, VoteRule::THREE_QUARTERS, VoteRule::Unanimity] {
                let n = 4usize.pow(m);
                let vote = |code: usize, setting: usize| {
                    let plus = (0..m as usize).filter(|i| (code >> (2 * i + setting)) & 1 == 1).count() as u32;
                    rule.says_plus(plus, m - plus, EmptyEventPolicy::Minus)
                };
                for ca in 0..n {
                    for cb in 0..n {
                        let mut t = [[ChInputs::default(); 2]; 2];
                        for (i, row) in t.iter_mut().enumerate() {
                            for (j, cell) in row.iter_mut().enumerate() {
                                let (va, vb) = (vote(ca, i) as u8 as f64, vote(cb, j) as u8 as f64);
                                *cell = ChInputs { p_plus_a: va, p_plus_b: vb, p_pp: va * vb };
                            }
                        }
                        assert!(ch_value(&t) <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn single_pair_optimum() {
        let ev = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority)).unwrap();
        let v = maximize_ch(&ev, SettingsMode::Alpha, &spec()).unwrap();
        assert!((v.value - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-9);
        assert!((v.alpha.unwrap() - FRAC_PI_4).abs() < 1e-5);
        assert!(v.grid_index.is_some());
    }

    #[test]
    fn single_pair_werner_threshold() {
        let r = noise_resistance(&Scenario::fixed(1, VoteRule::Majority), SettingsMode::Alpha, &spec()).unwrap();
        assert!((r.epsilon - (1.0 - 0.5f64.sqrt())).abs() < 1e-5, "{}", r.epsilon);
        assert!(r.optimum.value.abs() < 1e-5);
    }

    #[test]
    fn ch_monotone_in_noise_and_efficiency() {
        let p = SettingsPoint::planar(0.5, 0.7);
        let mut prev = f64::INFINITY;
        for eps in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let ev = ChEvaluator::new(&Scenario::fixed(4, VoteRule::Majority).with_noise(Noise::Werner { epsilon: eps })).unwrap();
            let v = ev.ch(&p).unwrap();
            assert!(v <= prev + 1e-12);
            prev = v;
        }
        let mut prev = -f64::INFINITY;
        for eta in [0.5, 0.7, 0.9, 1.0] {
            let ev = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority).with_detection(Detection::Efficiency { eta })).unwrap();
            let v = ev.ch(&SettingsPoint::planar(FRAC_PI_4, FRAC_PI_4)).unwrap();
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn unit_efficiency_matches_lossless() {
        for rule in [VoteRule::Majority, VoteRule::Unanimity] {
            let p = SettingsPoint::planar(0.4, 0.6);
            let a = ChEvaluator::new(&Scenario::fixed(5, rule)).unwrap().ch(&p).unwrap();
            let b = ChEvaluator::new(&Scenario::fixed(5, rule).with_detection(Detection::Efficiency { eta: 1.0 }))
                .unwrap()
                .ch(&p)
                .unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn unanimity_shortcut_matches_general_path() {
        let p = SettingsPoint::planar(0.3, 0.5);
        let dist = planar_pair_probs(PairState::pure(0.5), 0.0, 0.3);
        let general = vote_probs_lossless(6, &dist, VoteRule::Unanimity, EmptyEventPolicy::Minus).unwrap();
        let ev = ChEvaluator::new(&Scenario::fixed(6, VoteRule::Unanimity)).unwrap();
        let t = ev.table(&p).unwrap();
        assert!((t[0][0].p_pp - general.p_pp).abs() < 1e-14);
        assert!((t[0][0].p_plus_a - general.p_plus_a).abs() < 1e-14);
    }

    #[test]
    fn poisson_weights_and_truncation() {
        let w = poisson_weights(2.0, None).unwrap();
        let total: f64 = w.iter().sum();
        assert!((1.0 - total) < 1e-10 && (1.0 - total) >= 0.0);
        let short = poisson_weights(2.0, Some(w.len() as u32 - 2));
        assert!(matches!(short, Err(Error::Config(_))));
        assert!((w[3] - (-2f64).exp() * 8.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn poisson_small_mean_has_no_plus() {
        let ev = ChEvaluator::new(&Scenario::poisson(1e-6, VoteRule::Majority)).unwrap();
        let t = ev.table(&SettingsPoint::planar(0.6, FRAC_PI_4)).unwrap();
        assert!(t[0][0].p_plus_a < 1e-5 && t[1][1].p_plus_b < 1e-5);
    }

    #[test]
    fn poisson_paths_agree() {
        // the count-table recursion against direct per-M evaluation
        let p = SettingsPoint::planar(0.5, 0.7);
        let s = Scenario::poisson(3.0, VoteRule::Majority);
        let ev = ChEvaluator::new(&s).unwrap();
        let w = poisson_weights(3.0, None).unwrap();
        let direct: f64 = w
            .iter()
            .enumerate()
            .map(|(m, &wm)| {
                if m == 0 {
                    return 0.0;
                }
                wm * ChEvaluator::new(&Scenario::fixed(m as u32, VoteRule::Majority)).unwrap().ch(&p).unwrap()
            })
            .sum();
        assert!((ev.ch(&p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn scenario_matrix() {
        let bad = [
            Scenario::fixed(0, VoteRule::Majority),
            Scenario::poisson(2.0, VoteRule::Majority).with_detection(Detection::OneLossEachSide),
            Scenario::fixed(3, VoteRule::Majority).with_noise(Noise::Rotation { sigma: 0.1, quadrature: None }),
            Scenario::symmetric(3, VoteRule::Majority).with_noise(Noise::Werner { epsilon: 0.1 }),
            Scenario::symmetric(3, VoteRule::Majority).with_detection(Detection::Efficiency { eta: 0.9 }),
            Scenario::symmetric(3, VoteRule::Ternary(TernaryThreshold::EmittedMinus(1))),
            Scenario::poisson(2.0, VoteRule::Ternary(TernaryThreshold::EmittedMinus(1))),
            Scenario::fixed(1, VoteRule::Majority).with_detection(Detection::OneLossEachSide),
            Scenario::fixed(3, VoteRule::Majority).with_detection(Detection::Efficiency { eta: 1.5 }),
        ];
        for s in bad {
            assert!(matches!(ChEvaluator::new(&s), Err(Error::Config(_))), "{s:?}");
        }
        let good = [
            Scenario::poisson(2.0, VoteRule::Unanimity).with_noise(Noise::Werner { epsilon: 0.1 }),
            Scenario::poisson(2.0, VoteRule::Majority).with_detection(Detection::Efficiency { eta: 0.9 }),
            Scenario::symmetric(3, VoteRule::Majority).with_detection(Detection::OneLossEachSide),
            Scenario::fixed(4, VoteRule::Ternary(TernaryThreshold::EmittedMinus(1))).with_detection(Detection::OneLossEachSide),
        ];
        for s in good {
            assert!(ChEvaluator::new(&s).is_ok(), "{s:?}");
        }
    }

    #[test]
    fn symmetric_single_pair_matches_independent() {
        let p = SettingsPoint::planar(0.7, FRAC_PI_4);
        let a = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority)).unwrap().ch(&p).unwrap();
        let b = ChEvaluator::new(&Scenario::symmetric(1, VoteRule::Majority)).unwrap().ch(&p).unwrap();
        assert!((a - b).abs() < 1e-10);
        // rotation noise at M = 1 behaves as werner noise
        let sigma = 0.2;
        let w = rotation_werner_w(sigma);
        let a = ChEvaluator::new(&Scenario::fixed(1, VoteRule::Majority).with_noise(Noise::Werner { epsilon: 1.0 - w }))
            .unwrap()
            .ch(&p)
            .unwrap();
        let b = ChEvaluator::new(
            &Scenario::symmetric(1, VoteRule::Majority).with_noise(Noise::Rotation { sigma, quadrature: None }),
        )
        .unwrap()
        .ch(&p)
        .unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn four_angles_reach_eberhard_regime() {
        let s = Scenario::fixed(1, VoteRule::Majority).with_detection(Detection::Efficiency { eta: 0.7 });
        let ev = ChEvaluator::new(&s).unwrap();
        let planar = maximize_ch(&ev, SettingsMode::AlphaTheta, &spec()).unwrap();
        let free = maximize_ch(&ev, SettingsMode::FourAngles, &spec()).unwrap();
        assert!(!planar.violates());
        assert!(free.violates(), "{free:?}");
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let s = Scenario::symmetric(4, VoteRule::THREE_QUARTERS).with_noise(Noise::Rotation { sigma: 0.1, quadrature: None });
        let j = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
    }
}
