//! The sweeps behind each experiment, and the pass/fail checks applied to
//! their results.

use std::f64::consts::FRAC_PI_4;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{
    critical_efficiency, maximize_ch, noise_resistance, reid_s, ChEvaluator, ChValue, CriticalEfficiency, Detection,
    Noise, NoiseResistance, ParticleModel, QuadratureOrders, Scenario, SettingsMode, Source,
};
use crate::entanglement::EntanglementReport;
use crate::error::Result;
use crate::numeric::{exponential_fit, power_law_fit, LinearFit};
use crate::optimize::OptimizerSpec;
use crate::vote::{EmptyEventPolicy, TernaryConvention, TernaryThreshold, VoteRule};

/// Settings family per rule: `auto` picks per command, see [`Command::auto_mode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModePolicy {
    #[default]
    Auto,
    Alpha,
    AlphaTheta,
    FourAngles,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FigChScaling,
    FigNoise,
    FigPoisson,
    FigEfficiency,
    LossStudy,
    FigIndist,
    Entanglement,
    Summary,
}

impl Command {
    pub const SWEEPS: [Command; 7] = [
        Command::FigChScaling,
        Command::FigNoise,
        Command::FigPoisson,
        Command::FigEfficiency,
        Command::LossStudy,
        Command::FigIndist,
        Command::Entanglement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::FigChScaling => "fig-ch-scaling",
            Command::FigNoise => "fig-noise",
            Command::FigPoisson => "fig-poisson",
            Command::FigEfficiency => "fig-efficiency",
            Command::LossStudy => "loss-study",
            Command::FigIndist => "fig-indist",
            Command::Entanglement => "entanglement",
            Command::Summary => "summary",
        }
    }

    /// Majority-type rules keep maximally entangled pairs; unanimity needs
    /// the state angle; noise thresholds report the optimal angle for every
    /// rule; efficiency thresholds need free angles.
    pub fn auto_mode(&self, rule: VoteRule) -> SettingsMode {
        match self {
            Command::FigNoise | Command::LossStudy => SettingsMode::AlphaTheta,
            Command::FigEfficiency => SettingsMode::FourAngles,
            _ => match rule {
                VoteRule::Majority | VoteRule::Fraction { .. } => SettingsMode::Alpha,
                _ => SettingsMode::AlphaTheta,
            },
        }
    }

    pub fn mode(&self, policy: ModePolicy, rule: VoteRule) -> SettingsMode {
        match policy {
            ModePolicy::Auto => self.auto_mode(rule),
            ModePolicy::Alpha => SettingsMode::Alpha,
            ModePolicy::AlphaTheta => SettingsMode::AlphaTheta,
            ModePolicy::FourAngles => SettingsMode::FourAngles,
            ModePolicy::Standard => SettingsMode::Standard,
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Knobs shared by every sweep.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Options {
    pub optimizer: OptimizerSpec,
    pub empty_event: EmptyEventPolicy,
    pub ternary: TernaryConvention,
    pub settings: ModePolicy,
    /// Rotation-noise quadrature; scaled with the photon number when absent.
    pub quadrature: Option<QuadratureOrders>,
}

impl Options {
    fn scenario(&self, source: Source, rule: VoteRule) -> Scenario {
        Scenario {
            source,
            empty_event: self.empty_event,
            ternary: self.ternary,
            ..Scenario::fixed(1, rule)
        }
    }
}

fn ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    items.par_iter().map(f).collect()
}

fn grid<A: Copy + Sync, B: Copy + Sync>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| (x, y))).collect()
}

// ---------------------------------------------------------------- sweeps

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub rule: VoteRule,
    pub pairs: u32,
    pub mode: SettingsMode,
    pub best: ChValue,
    /// CH at `alpha = theta = pi/4`.
    pub standard: f64,
    /// Optimum over `alpha` alone with maximally entangled pairs.
    pub theta_fixed: f64,
    pub reid_s: Option<f64>,
}

pub fn ch_scaling(pairs: &[u32], rules: &[VoteRule], opts: &Options) -> Result<Vec<ScalingRow>> {
    ordered(&grid(rules, pairs), |&(rule, m)| {
        let ev = ChEvaluator::new(&opts.scenario(Source::Fixed { pairs: m }, rule))?;
        let mode = Command::FigChScaling.mode(opts.settings, rule);
        let best = maximize_ch(&ev, mode, &opts.optimizer)?;
        let standard = maximize_ch(&ev, SettingsMode::Standard, &opts.optimizer)?.value;
        let theta_fixed = if mode == SettingsMode::Alpha {
            best.value
        } else {
            maximize_ch(&ev, SettingsMode::Alpha, &opts.optimizer)?.value
        };
        let reid_s = reid_s(&ev.table(&best.settings)?).ok();
        Ok(ScalingRow { rule, pairs: m, mode, best, standard, theta_fixed, reid_s })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRow {
    pub rule: VoteRule,
    pub pairs: u32,
    pub mode: SettingsMode,
    pub resistance: NoiseResistance,
}

pub fn noise_sweep(pairs: &[u32], rules: &[VoteRule], opts: &Options) -> Result<Vec<NoiseRow>> {
    ordered(&grid(rules, pairs), |&(rule, m)| {
        let mode = Command::FigNoise.mode(opts.settings, rule);
        let resistance = noise_resistance(&opts.scenario(Source::Fixed { pairs: m }, rule), mode, &opts.optimizer)?;
        Ok(NoiseRow { rule, pairs: m, mode, resistance })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonRow {
    pub rule: VoteRule,
    pub mu: f64,
    pub max_pairs: u32,
    pub mode: SettingsMode,
    pub best: ChValue,
    pub noise: Option<NoiseResistance>,
}

pub fn poisson_sweep(mus: &[f64], rules: &[VoteRule], noise_rules: &[VoteRule], opts: &Options) -> Result<Vec<PoissonRow>> {
    ordered(&grid(rules, mus), |&(rule, mu)| {
        let scenario = opts.scenario(Source::Poisson { mu, max_pairs: None }, rule);
        let ev = ChEvaluator::new(&scenario)?;
        let mode = Command::FigPoisson.mode(opts.settings, rule);
        let best = maximize_ch(&ev, mode, &opts.optimizer)?;
        let noise = if noise_rules.contains(&rule) {
            Some(noise_resistance(&scenario, mode, &opts.optimizer)?)
        } else {
            None
        };
        Ok(PoissonRow { rule, mu, max_pairs: ev.poisson_truncation().unwrap_or(0), mode, best, noise })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub rule: VoteRule,
    pub pairs: u32,
    pub eta: f64,
    pub best: ChValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRow {
    pub rule: VoteRule,
    pub pairs: u32,
    pub critical: CriticalEfficiency,
}

pub fn efficiency_curves(pairs: &[u32], rules: &[VoteRule], etas: &[f64], opts: &Options) -> Result<Vec<EfficiencyRow>> {
    let cases: Vec<(VoteRule, u32, f64)> =
        grid(rules, pairs).into_iter().flat_map(|(r, m)| etas.iter().map(move |&e| (r, m, e))).collect();
    ordered(&cases, |&(rule, m, eta)| {
        let s = opts.scenario(Source::Fixed { pairs: m }, rule).with_detection(Detection::Efficiency { eta });
        let best = maximize_ch(&ChEvaluator::new(&s)?, Command::FigEfficiency.mode(opts.settings, rule), &opts.optimizer)?;
        Ok(EfficiencyRow { rule, pairs: m, eta, best })
    })
}

pub fn critical_efficiencies(pairs: &[u32], rules: &[VoteRule], opts: &Options) -> Result<Vec<CriticalRow>> {
    ordered(&grid(rules, pairs), |&(rule, m)| {
        let s = opts.scenario(Source::Fixed { pairs: m }, rule);
        let critical = critical_efficiency(&s, Command::FigEfficiency.mode(opts.settings, rule), &opts.optimizer)?;
        Ok(CriticalRow { rule, pairs: m, critical })
    })
}

/// One curve of the loss study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossCase {
    pub particles: ParticleModel,
    pub rule: VoteRule,
    #[serde(default)]
    pub ternary: TernaryConvention,
}

impl LossCase {
    pub fn label(&self) -> String {
        let model = match self.particles {
            ParticleModel::Independent => "independent",
            ParticleModel::Symmetric => "symmetric",
        };
        match self.rule {
            VoteRule::Ternary(_) => format!("{model}/{}/{}", self.rule, convention_name(self.ternary)),
            rule => format!("{model}/{rule}"),
        }
    }

    /// The curves the loss study reports by default; the post-selected
    /// ternary curve is a diagnostic.
    pub fn defaults() -> Vec<LossCase> {
        let ind = |rule, ternary| LossCase { particles: ParticleModel::Independent, rule, ternary };
        let sym = |rule| LossCase { particles: ParticleModel::Symmetric, rule, ternary: TernaryConvention::NoRenormalization };
        let n1 = VoteRule::Ternary(TernaryThreshold::EmittedMinus(1));
        vec![
            ind(VoteRule::Majority, TernaryConvention::NoRenormalization),
            ind(VoteRule::Unanimity, TernaryConvention::NoRenormalization),
            ind(n1, TernaryConvention::NoRenormalization),
            ind(n1, TernaryConvention::PostSelectBoth),
            sym(VoteRule::Majority),
            sym(VoteRule::THREE_QUARTERS),
            sym(VoteRule::Unanimity),
        ]
    }
}

pub fn convention_name(c: TernaryConvention) -> &'static str {
    match c {
        TernaryConvention::NoRenormalization => "no-renormalization",
        TernaryConvention::PostSelectBoth => "post-select-both",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub case: LossCase,
    pub pairs: u32,
    pub best: ChValue,
}

pub fn loss_study(pairs: &[u32], cases: &[LossCase], opts: &Options) -> Result<Vec<LossRow>> {
    ordered(&grid(cases, pairs), |&(case, m)| {
        let s = Scenario {
            particles: case.particles,
            ternary: case.ternary,
            ..opts.scenario(Source::Fixed { pairs: m }, case.rule)
        }
        .with_detection(Detection::OneLossEachSide);
        let best = maximize_ch(&ChEvaluator::new(&s)?, Command::LossStudy.mode(opts.settings, case.rule), &opts.optimizer)?;
        Ok(LossRow { case, pairs: m, best })
    })
}

/// First pair number with a violation, per case label, in row order.
pub fn first_violations(rows: &[LossRow]) -> Vec<(String, Option<u32>)> {
    let mut out: Vec<(String, Option<u32>)> = Vec::new();
    for r in rows {
        let label = r.case.label();
        let slot = match out.iter_mut().find(|e| e.0 == label) {
            Some(e) => e,
            None => {
                out.push((label, None));
                out.last_mut().expect("just pushed")
            }
        };
        if slot.1.is_none() && r.best.violates() {
            slot.1 = Some(r.pairs);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndistRow {
    pub rule: VoteRule,
    pub pairs: u32,
    pub symmetric: ChValue,
    pub independent: ChValue,
    pub noise: Option<NoiseResistance>,
}

pub fn indist_study(pairs: &[u32], rules: &[VoteRule], noise_rules: &[VoteRule], opts: &Options) -> Result<Vec<IndistRow>> {
    ordered(&grid(rules, pairs), |&(rule, m)| {
        let sym = Scenario { particles: ParticleModel::Symmetric, ..opts.scenario(Source::Fixed { pairs: m }, rule) };
        let symmetric = maximize_ch(&ChEvaluator::new(&sym)?, SettingsMode::Alpha, &opts.optimizer)?;
        let ind = opts.scenario(Source::Fixed { pairs: m }, rule);
        let independent =
            maximize_ch(&ChEvaluator::new(&ind)?, Command::FigIndist.mode(opts.settings, rule), &opts.optimizer)?;
        let noise = if noise_rules.contains(&rule) {
            let sym = match opts.quadrature {
                Some(q) => sym.with_noise(Noise::Rotation { sigma: 0.0, quadrature: Some(q) }),
                None => sym,
            };
            Some(noise_resistance(&sym, SettingsMode::Alpha, &opts.optimizer)?)
        } else {
            None
        };
        Ok(IndistRow { rule, pairs: m, symmetric, independent, noise })
    })
}

// ---------------------------------------------------------------- checks

/// Tolerances and fit windows for the reproduced claims.
pub mod limits {
    pub const TSIRELSON_TOL: f64 = 1e-6;
    pub const TSIRELSON_ROW_TOL: f64 = 1e-4;
    pub const WERNER_THRESHOLD_TOL: f64 = 1e-5;
    pub const MAJORITY_FIT: (f64, f64) = (8.0, 24.0);
    pub const MAJORITY_SLOPE: (f64, f64) = (-0.6, -0.4);
    pub const ALPHA_WINDOW: (f64, f64) = (4.0, 20.0);
    pub const ALPHA_REL_TOL: f64 = 0.2;
    pub const STANDARD_FIT: (f64, f64) = (8.0, 24.0);
    pub const STANDARD_SLOPE: (f64, f64) = (-1.15, -0.85);
    pub const UNANIMITY_FIT: (f64, f64) = (2.0, 10.0);
    pub const EXP_R2_MIN: f64 = 0.99;
    pub const NOISE_FIT: (f64, f64) = (4.0, 16.0);
    pub const NOISE_SLOPE: (f64, f64) = (-1.15, -0.85);
    pub const NOISE_THETA_TOL: f64 = 0.01;
    pub const POISSON_ARGMAX: (f64, f64) = (1.0, 2.0);
    pub const POISSON_LARGE_MU: f64 = 8.0;
    pub const POISSON_CH_SLOPE: (f64, f64) = (-0.65, -0.35);
    pub const POISSON_EPS_SLOPE: (f64, f64) = (-1.15, -0.85);
    pub const ETA_SINGLE: f64 = 2.0 / 3.0;
    pub const ETA_SINGLE_TOL: f64 = 0.01;
    pub const LOSS_MAX_PAIRS: u32 = 20;
    pub const TERNARY_FIRST: u32 = 5;
    pub const SYMMETRIC_LOSS_FIRST: u32 = 10;
    pub const SPREAD_WINDOW: (f64, f64) = (2.0, 16.0);
    pub const SPREAD_MAX: f64 = 0.10;
    pub const SYMMETRIC_FIT: (f64, f64) = (4.0, 16.0);
    pub const SYMMETRIC_SLOPE: (f64, f64) = (-1.2, -0.8);
    pub const E_D_TWO_TOL: f64 = 1e-12;
    pub const RATIO_WINDOW: (f64, f64) = (1.9, 2.1);
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: String,
    pub claim: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(id: &str, claim: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { id: id.into(), claim: claim.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.id, self.claim, self.detail)
    }
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn window<'a>(pts: impl IntoIterator<Item = (f64, f64)> + 'a, (lo, hi): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    pts.into_iter().filter(|(x, _)| *x >= lo && *x <= hi).unzip()
}

fn describe(f: Option<LinearFit>) -> String {
    match f {
        Some(f) => format!("slope {:.4}, R2 {:.4}", f.slope, f.r_squared),
        None => "not enough points".into(),
    }
}

/// Log-log slope of `y(x)` over a window.
pub fn slope_in(pts: &[(f64, f64)], win: (f64, f64)) -> Option<LinearFit> {
    let (xs, ys) = window(pts.iter().copied(), win);
    if xs.len() < 2 {
        return None;
    }
    power_law_fit(&xs, &ys)
}

fn rule_points<R>(rows: &[R], rule: VoteRule, f: impl Fn(&R) -> Option<(VoteRule, f64, f64)>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(&f).filter(|(r, _, _)| *r == rule).map(|(_, x, y)| (x, y)).collect()
}

pub fn check_scaling(rows: &[ScalingRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    if let Some(r) = rows.iter().find(|r| r.pairs == 1 && r.rule == VoteRule::Majority) {
        let want = (2f64.sqrt() - 1.0) / 2.0;
        out.push(Check::new(
            "AC-1",
            "single-pair optimum equals (sqrt2-1)/2",
            (r.best.value - want).abs() < TSIRELSON_ROW_TOL,
            format!("CH*(1) = {:.9}", r.best.value),
        ));
    }
    let maj = rule_points(rows, VoteRule::Majority, |r| Some((r.rule, r.pairs as f64, r.best.value)));
    if !maj.is_empty() {
        let fit = slope_in(&maj, MAJORITY_FIT);
        out.push(Check::new(
            "AC-2",
            "majority CH* decays as M^-1/2 over M in [8,24]",
            fit.is_some_and(|f| within(f.slope, MAJORITY_SLOPE)),
            describe(fit),
        ));
        let mut worst: f64 = 0.0;
        for r in rows.iter().filter(|r| r.rule == VoteRule::Majority && within(r.pairs as f64, ALPHA_WINDOW)) {
            let predicted = std::f64::consts::PI / (2.0 * 2f64.sqrt()) / (r.pairs as f64).sqrt();
            worst = worst.max((r.best.alpha.unwrap_or(f64::NAN) / predicted - 1.0).abs());
        }
        out.push(Check::new(
            "AC-2",
            "optimal alpha within 20% of pi/(2 sqrt2) M^-1/2 for M in [4,20]",
            worst <= ALPHA_REL_TOL,
            format!("largest relative deviation {worst:.4}"),
        ));
        let std_pts = rule_points(rows, VoteRule::Majority, |r| Some((r.rule, r.pairs as f64, r.standard)));
        let fit = slope_in(&std_pts, STANDARD_FIT);
        out.push(Check::new(
            "AC-3",
            "majority CH at standard settings decays as M^-1",
            fit.is_some_and(|f| within(f.slope, STANDARD_SLOPE)),
            describe(fit),
        ));
    }
    let una: Vec<&ScalingRow> = rows
        .iter()
        .filter(|r| r.rule == VoteRule::Unanimity && within(r.pairs as f64, UNANIMITY_FIT))
        .collect();
    if una.len() >= 3 {
        let xs: Vec<f64> = una.iter().map(|r| r.pairs as f64).collect();
        let ys: Vec<f64> = una.iter().map(|r| r.best.value).collect();
        let fixed: Vec<f64> = una.iter().map(|r| r.theta_fixed).collect();
        let fit = exponential_fit(&xs, &ys);
        let fixed_fit = exponential_fit(&xs, &fixed);
        out.push(Check::new(
            "AC-4",
            "unanimity CH* decays exponentially (R2 > 0.99 over M in [2,10])",
            fit.is_some_and(|f| f.r_squared > EXP_R2_MIN),
            format!("optimized theta: {}; theta = pi/4: {}", describe(fit), describe(fixed_fit)),
        ));
        let thetas: Vec<f64> = una.iter().map(|r| r.best.theta.unwrap_or(f64::NAN)).collect();
        out.push(Check::new(
            "AC-4",
            "unanimity optimal theta strictly decreasing in M",
            thetas.windows(2).all(|w| w[1] < w[0]),
            format!("theta* = {}", join(&thetas, 4)),
        ));
    }
    out
}

fn join(xs: &[f64], digits: usize) -> String {
    xs.iter().map(|x| format!("{x:.digits$}")).collect::<Vec<_>>().join(" ")
}

pub fn check_noise(rows: &[NoiseRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    if let Some(r) = rows.iter().find(|r| r.pairs == 1) {
        let want = 1.0 - 0.5f64.sqrt();
        out.push(Check::new(
            "AC-1",
            "single-pair Werner threshold equals 1 - 1/sqrt2",
            (r.resistance.epsilon - want).abs() < WERNER_THRESHOLD_TOL,
            format!("eps*(1) = {:.8}", r.resistance.epsilon),
        ));
    }
    let mut rules: Vec<VoteRule> = Vec::new();
    for r in rows {
        if !rules.contains(&r.rule) {
            rules.push(r.rule);
        }
    }
    for &rule in &rules {
        let pts = rule_points(rows, rule, |r| Some((r.rule, r.pairs as f64, r.resistance.epsilon)));
        let fit = slope_in(&pts, NOISE_FIT);
        out.push(Check::new(
            "AC-5",
            &format!("{rule} noise resistance decays as M^-1 over M in [4,16]"),
            fit.is_some_and(|f| within(f.slope, NOISE_SLOPE)),
            describe(fit),
        ));
    }
    let mut losers = Vec::new();
    for r in rows.iter().filter(|r| r.rule == VoteRule::Majority) {
        for o in rows.iter().filter(|o| o.pairs == r.pairs && o.rule != r.rule) {
            if o.resistance.epsilon > r.resistance.epsilon + 1e-6 {
                losers.push(format!("M={} {} {:.5} > {:.5}", r.pairs, o.rule, o.resistance.epsilon, r.resistance.epsilon));
            }
        }
    }
    if rules.contains(&VoteRule::Majority) && rules.len() > 1 {
        out.push(Check::new(
            "AC-5",
            "majority is the most noise resistant rule at every M",
            losers.is_empty(),
            if losers.is_empty() { "holds at every M".into() } else { losers.join("; ") },
        ));
    }
    let mut worst: f64 = 0.0;
    for r in rows.iter().filter(|r| r.resistance.violated && r.pairs > 1) {
        if let Some(t) = r.resistance.optimum.theta {
            worst = worst.max((t - FRAC_PI_4).abs());
        }
    }
    out.push(Check::new(
        "AC-5",
        "optimal state at the noise threshold is maximally entangled",
        worst <= NOISE_THETA_TOL,
        format!("largest |theta* - pi/4| = {worst:.5}"),
    ));
    out
}

pub fn check_poisson(rows: &[PoissonRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    let maj: Vec<&PoissonRow> = rows.iter().filter(|r| r.rule == VoteRule::Majority).collect();
    if !maj.is_empty() {
        let best = maj.iter().max_by(|a, b| a.best.value.total_cmp(&b.best.value)).expect("nonempty");
        out.push(Check::new(
            "AC-6",
            "majority CH(mu) peaks for mu in [1,2]",
            within(best.mu, POISSON_ARGMAX),
            format!("argmax mu = {} with CH = {:.5}", best.mu, best.best.value),
        ));
        let pts: Vec<(f64, f64)> = maj.iter().map(|r| (r.mu, r.best.value)).collect();
        let fit = slope_in(&pts, (POISSON_LARGE_MU, f64::INFINITY));
        out.push(Check::new(
            "AC-6",
            "majority CH(mu) decays as mu^-1/2 for mu >= 8",
            fit.is_some_and(|f| within(f.slope, POISSON_CH_SLOPE)),
            describe(fit),
        ));
        let eps: Vec<(f64, f64)> = maj.iter().filter_map(|r| r.noise.as_ref().map(|n| (r.mu, n.epsilon))).collect();
        if !eps.is_empty() {
            let fit = slope_in(&eps, (POISSON_LARGE_MU, f64::INFINITY));
            out.push(Check::new(
                "AC-6",
                "majority noise resistance decays as mu^-1 for mu >= 8",
                fit.is_some_and(|f| within(f.slope, POISSON_EPS_SLOPE)),
                describe(fit),
            ));
        }
    }
    let una: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.rule == VoteRule::Unanimity && r.mu >= POISSON_LARGE_MU)
        .map(|r| (r.mu, r.best.value))
        .collect();
    if una.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = una.into_iter().unzip();
        let e = exponential_fit(&xs, &ys);
        let p = power_law_fit(&xs, &ys);
        out.push(Check::new(
            "AC-6",
            "unanimity CH(mu) decays slower than exponentially (exp R2 < power R2, mu >= 8)",
            matches!((e, p), (Some(e), Some(p)) if e.r_squared < p.r_squared),
            format!("exponential: {}; power: {}", describe(e), describe(p)),
        ));
    }
    out
}

pub fn check_efficiency(rows: &[CriticalRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    let single: Vec<&CriticalRow> = rows.iter().filter(|r| r.pairs == 1).collect();
    for r in &single {
        out.push(Check::new(
            "AC-7",
            &format!("{} single-pair critical efficiency is 2/3", r.rule),
            (r.critical.eta - ETA_SINGLE).abs() <= ETA_SINGLE_TOL,
            format!("eta* = {:.4}", r.critical.eta),
        ));
    }
    let base = single.iter().map(|r| r.critical.eta).fold(f64::NAN, f64::min);
    for r in rows.iter().filter(|r| r.pairs == 5) {
        out.push(Check::new(
            "AC-7",
            &format!("{} critical efficiency at M=5 exceeds the single-pair value", r.rule),
            r.critical.eta > base,
            format!("eta*(5) = {:.4}, eta*(1) = {:.4}", r.critical.eta, base),
        ));
    }
    out
}

pub fn check_loss(rows: &[LossRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    let firsts = first_violations(rows);
    let first = |label: &str| firsts.iter().find(|e| e.0 == label).map(|e| e.1);
    let show = |v: Option<u32>| v.map_or("none".to_string(), |m| format!("M={m}"));
    for rule in [VoteRule::Majority, VoteRule::Unanimity] {
        let label = LossCase { particles: ParticleModel::Independent, rule, ternary: TernaryConvention::NoRenormalization }.label();
        let worst = rows
            .iter()
            .filter(|r| r.case.label() == label && r.pairs <= LOSS_MAX_PAIRS)
            .map(|r| r.best.value)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst.is_finite() {
            out.push(Check::new(
                "AC-8",
                &format!("independent pairs, one loss per side, {rule}: no violation for M <= 20"),
                worst <= crate::bell::VIOLATION_THRESHOLD,
                format!("largest CH* = {worst:.3e}"),
            ));
        }
    }
    let n1 = VoteRule::Ternary(TernaryThreshold::EmittedMinus(1));
    let main = LossCase { particles: ParticleModel::Independent, rule: n1, ternary: TernaryConvention::NoRenormalization };
    let post = LossCase { ternary: TernaryConvention::PostSelectBoth, ..main };
    if let Some(f) = first(&main.label()) {
        let diag = first(&post.label()).map(|p| format!("; post-selected: {}", show(p))).unwrap_or_default();
        out.push(Check::new(
            "AC-8",
            "ternary vote N=M-1 first violates at M=5",
            f == Some(TERNARY_FIRST),
            format!("first violation {}{diag}", show(f)),
        ));
    }
    let sym = |rule| LossCase { particles: ParticleModel::Symmetric, rule, ternary: TernaryConvention::NoRenormalization }.label();
    if let Some(f) = first(&sym(VoteRule::Majority)) {
        let others: Vec<String> = [VoteRule::THREE_QUARTERS, VoteRule::Unanimity]
            .iter()
            .filter_map(|&r| first(&sym(r)).map(|v| format!("{r}: {}", show(v))))
            .collect();
        out.push(Check::new(
            "AC-11",
            "symmetric state with one loss per side: majority first violates at M=10",
            f == Some(SYMMETRIC_LOSS_FIRST),
            format!("majority first violation {}; {}", show(f), others.join(", ")),
        ));
        let early: Vec<String> = rows
            .iter()
            .filter(|r| r.case.particles == ParticleModel::Symmetric && !r.case.rule.is_ternary())
            .filter(|r| r.pairs < SYMMETRIC_LOSS_FIRST && r.best.violates())
            .map(|r| format!("{} at M={}", r.case.rule, r.pairs))
            .collect();
        out.push(Check::new(
            "AC-11",
            "symmetric state with one loss per side: no binary-vote violation for M < 10",
            early.is_empty(),
            if early.is_empty() { "none".into() } else { early.join(", ") },
        ));
    }
    out
}

pub fn check_indist(rows: &[IndistRow]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    let mut pairs: Vec<u32> = rows.iter().map(|r| r.pairs).collect();
    pairs.dedup();
    let mut worst = (0.0, 0u32);
    for &m in pairs.iter().filter(|&&m| within(m as f64, SPREAD_WINDOW)) {
        let vals: Vec<f64> = rows.iter().filter(|r| r.pairs == m).map(|r| r.symmetric.value).collect();
        if vals.len() < 2 {
            continue;
        }
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = (hi - lo) / hi;
        if spread > worst.0 {
            worst = (spread, m);
        }
    }
    out.push(Check::new(
        "AC-9",
        "symmetric CH* nearly independent of the rule (spread < 10%, M in [2,16])",
        worst.0 < SPREAD_MAX,
        format!("largest spread {:.4} at M={}", worst.0, worst.1),
    ));
    let mut rules: Vec<VoteRule> = Vec::new();
    for r in rows {
        if !rules.contains(&r.rule) {
            rules.push(r.rule);
        }
    }
    for &rule in &rules {
        let pts = rule_points(rows, rule, |r| Some((r.rule, r.pairs as f64, r.symmetric.value)));
        let fit = slope_in(&pts, SYMMETRIC_FIT);
        out.push(Check::new(
            "AC-9",
            &format!("symmetric {rule} CH* decays as M^-1"),
            fit.is_some_and(|f| within(f.slope, SYMMETRIC_SLOPE)),
            describe(fit),
        ));
    }
    let losses: Vec<String> = rows
        .iter()
        .filter(|r| r.rule == VoteRule::Majority && r.pairs >= 2 && r.independent.value <= r.symmetric.value)
        .map(|r| format!("M={}: {:.5} <= {:.5}", r.pairs, r.independent.value, r.symmetric.value))
        .collect();
    out.push(Check::new(
        "AC-9",
        "independent-pair majority CH* exceeds the symmetric state's at every M >= 2",
        losses.is_empty(),
        if losses.is_empty() { "holds".into() } else { losses.join("; ") },
    ));
    let eps = |rule: VoteRule| -> Vec<(u32, f64)> {
        rows.iter().filter(|r| r.rule == rule).filter_map(|r| r.noise.as_ref().map(|n| (r.pairs, n.epsilon))).collect()
    };
    let (una, maj) = (eps(VoteRule::Unanimity), eps(VoteRule::Majority));
    if !una.is_empty() && !maj.is_empty() {
        let bad: Vec<String> = una
            .iter()
            .filter_map(|&(m, e)| maj.iter().find(|x| x.0 == m).filter(|x| e < x.1 - 1e-6).map(|x| format!("M={m}: {e:.5} < {:.5}", x.1)))
            .collect();
        out.push(Check::new(
            "AC-10",
            "symmetric state: unanimity at least as noise resistant as majority",
            bad.is_empty(),
            if bad.is_empty() { "holds at every M".into() } else { bad.join("; ") },
        ));
        let pts: Vec<(f64, f64)> = una.iter().map(|&(m, e)| (m as f64, e)).collect();
        let fit = slope_in(&pts, SYMMETRIC_FIT);
        out.push(Check::new(
            "AC-10",
            "symmetric unanimity noise resistance decays as M^-1",
            fit.is_some_and(|f| within(f.slope, SYMMETRIC_SLOPE)),
            describe(fit),
        ));
    }
    out
}

pub fn check_entanglement(rows: &[EntanglementReport]) -> Vec<Check> {
    use limits::*;
    let mut out = Vec::new();
    if let Some(r) = rows.iter().find(|r| r.pairs == 2) {
        let want = 0.75 * 3f64.log2();
        out.push(Check::new(
            "AC-12",
            "E_d(2) = (3/4) log2 3",
            (r.distinguishable - want).abs() < E_D_TWO_TOL,
            format!("E_d(2) = {:.15}", r.distinguishable),
        ));
    }
    let bad: Vec<u32> = rows.iter().filter(|r| r.pairs <= 200 && r.indistinguishable <= r.distinguishable).map(|r| r.pairs).collect();
    out.push(Check::new(
        "AC-12",
        "E_i > E_d for every even M <= 200",
        bad.is_empty(),
        format!("{} values checked", rows.iter().filter(|r| r.pairs <= 200).count()),
    ));
    if let Some(r) = rows.iter().find(|r| r.pairs == 1000) {
        out.push(Check::new(
            "AC-12",
            "E_i/E_d at M=1000 lies in [1.9, 2.1]",
            within(r.ratio, RATIO_WINDOW),
            format!("ratio = {:.5}", r.ratio),
        ));
    }
    let tail: Vec<f64> = rows.iter().filter(|r| r.pairs >= 100).map(|r| r.ratio).collect();
    if tail.len() >= 2 {
        out.push(Check::new(
            "AC-12",
            "E_i/E_d approaches 2 monotonically for M >= 100",
            tail.windows(2).all(|w| (2.0 - w[1]).abs() < (2.0 - w[0]).abs()),
            format!("ratio from {:.4} to {:.4}", tail[0], tail[tail.len() - 1]),
        ));
    }
    out
}
