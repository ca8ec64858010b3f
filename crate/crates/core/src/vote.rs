//! Exact count statistics for `M` independent pairs measured globally, and
//! the vote rules that turn counts into binary (or ternary) outcomes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{count_ln, ln_choose, ln_factorial_table, CompensatedSum};
use crate::pair::PairOutcomeDist;

/// Threshold rule mapping detected counts to an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VoteRule {
    /// `+` iff `n_+ >= n_-`.
    Majority,
    /// `+` iff `n_+ >= ceil(num/den * m)`, with `1/2 < num/den < 1`.
    Fraction { num: u32, den: u32 },
    /// `+` iff every detected particle gave `+`.
    Unanimity,
    /// `+` iff `n_+ >= N`, `-` iff `n_- >= N`, otherwise discarded.
    Ternary(TernaryThreshold),
}

/// How the ternary threshold is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TernaryThreshold {
    Absolute(u32),
    /// `N = M - k` with `M` the number of emitted pairs.
    EmittedMinus(u32),
}

impl TernaryThreshold {
    pub fn resolve(&self, emitted: u32) -> u32 {
        match *self {
            TernaryThreshold::Absolute(n) => n,
            TernaryThreshold::EmittedMinus(k) => emitted.saturating_sub(k),
        }
    }
}

impl VoteRule {
    pub const TWO_THIRDS: VoteRule = VoteRule::Fraction { num: 2, den: 3 };
    pub const THREE_QUARTERS: VoteRule = VoteRule::Fraction { num: 3, den: 4 };

    pub fn fraction(num: u32, den: u32) -> Result<Self> {
        if den == 0 || 2 * num <= den || num >= den {
            return Err(invalid(format!("vote fraction {num}/{den} must lie in (1/2, 1)")));
        }
        Ok(VoteRule::Fraction { num, den })
    }

    pub fn is_ternary(&self) -> bool {
        matches!(self, VoteRule::Ternary(_))
    }

    /// Minimum `+` count for a `+` outcome given `m >= 1` detections.
    ///
    /// Ternary rules have no per-count threshold; use
    /// [`TernaryThreshold::resolve`] instead.
    pub fn threshold(&self, m: u32) -> u32 {
        match *self {
            VoteRule::Majority => m.div_ceil(2),
            VoteRule::Fraction { num, den } => ((num as u64 * m as u64).div_ceil(den as u64)) as u32,
            VoteRule::Unanimity => m,
            VoteRule::Ternary(_) => panic!("ternary rules have no binary threshold"),
        }
    }

    /// Binary `+` decision for `(n_+, n_-)` detections.
    pub fn says_plus(&self, n_plus: u32, n_minus: u32, empty: EmptyEventPolicy) -> bool {
        let m = n_plus + n_minus;
        if m == 0 {
            return empty == EmptyEventPolicy::LiteralRule;
        }
        n_plus >= self.threshold(m)
    }
}

impl fmt::Display for VoteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VoteRule::Majority => write!(f, "majority"),
            VoteRule::Fraction { num, den } => write!(f, "{num}/{den}"),
            VoteRule::Unanimity => write!(f, "unanimity"),
            VoteRule::Ternary(TernaryThreshold::Absolute(n)) => write!(f, "ternary:{n}"),
            VoteRule::Ternary(TernaryThreshold::EmittedMinus(k)) => write!(f, "ternary:M-{k}"),
        }
    }
}

impl FromStr for VoteRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "majority" => return Ok(VoteRule::Majority),
            "unanimity" | "unanimous" => return Ok(VoteRule::Unanimity),
            "two-thirds" => return Ok(VoteRule::TWO_THIRDS),
            "three-quarters" => return Ok(VoteRule::THREE_QUARTERS),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("ternary:") {
            let th = if let Some(k) = rest.strip_prefix("m-") {
                TernaryThreshold::EmittedMinus(k.parse().map_err(|_| invalid(format!("bad ternary rule '{s}'")))?)
            } else {
                TernaryThreshold::Absolute(rest.parse().map_err(|_| invalid(format!("bad ternary rule '{s}'")))?)
            };
            return Ok(VoteRule::Ternary(th));
        }
        if let Some((n, d)) = s.split_once('/') {
            let num = n.parse().map_err(|_| invalid(format!("bad vote fraction '{s}'")))?;
            let den = d.parse().map_err(|_| invalid(format!("bad vote fraction '{s}'")))?;
            return VoteRule::fraction(num, den);
        }
        Err(invalid(format!("unknown vote rule '{s}'")))
    }
}

impl Serialize for VoteRule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for VoteRule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Outcome assigned when a party detects nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyEventPolicy {
    /// No detection never yields `+`.
    #[default]
    Minus,
    /// Apply the rule literally: `0 >= 0` gives `+`.
    LiteralRule,
}

/// Treatment of discarded events in the ternary vote.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TernaryConvention {
    /// Discarded events are never `+`; probabilities keep their raw weight.
    #[default]
    NoRenormalization,
    /// Condition every probability on both parties giving a definite outcome.
    PostSelectBoth,
}

/// Per-particle detection probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    eta: f64,
}

impl DetectionModel {
    pub fn new(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid(format!("detection efficiency {eta} outside [0,1]")));
        }
        Ok(Self { eta })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// The three numbers CH needs from one settings pair.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ChInputs {
    pub p_plus_a: f64,
    pub p_plus_b: f64,
    pub p_pp: f64,
}

impl ChInputs {
    pub fn scaled(self, w: f64) -> Self {
        Self {
            p_plus_a: w * self.p_plus_a,
            p_plus_b: w * self.p_plus_b,
            p_pp: w * self.p_pp,
        }
    }

    pub fn add(self, o: Self) -> Self {
        Self {
            p_plus_a: self.p_plus_a + o.p_plus_a,
            p_plus_b: self.p_plus_b + o.p_plus_b,
            p_pp: self.p_pp + o.p_pp,
        }
    }

    /// Inputs produced when nobody detects anything.
    pub fn empty_event(policy: EmptyEventPolicy) -> Self {
        match policy {
            EmptyEventPolicy::Minus => Self::default(),
            EmptyEventPolicy::LiteralRule => Self { p_plus_a: 1.0, p_plus_b: 1.0, p_pp: 1.0 },
        }
    }
}

/// Detected counts `(n_+^A, n_-^A, n_+^B, n_-^B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountTuple {
    pub a_plus: u32,
    pub a_minus: u32,
    pub b_plus: u32,
    pub b_minus: u32,
}

impl CountTuple {
    pub fn alice_detected(&self) -> u32 {
        self.a_plus + self.a_minus
    }

    pub fn bob_detected(&self) -> u32 {
        self.b_plus + self.b_minus
    }
}

/// Sparse joint law of the detected counts of both parties.
#[derive(Debug, Clone, PartialEq)]
pub struct CountJointDistribution {
    pub emitted: u32,
    pub entries: Vec<(CountTuple, f64)>,
}

impl CountJointDistribution {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).collect::<CompensatedSum>().value()
    }

    pub fn probability(&self, t: CountTuple) -> f64 {
        self.entries
            .binary_search_by(|e| e.0.cmp(&t))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// Law of Alice's `(n_+, n_-)`.
    pub fn alice_law(&self) -> Vec<((u32, u32), f64)> {
        let mut map = std::collections::BTreeMap::new();
        for (t, p) in &self.entries {
            *map.entry((t.a_plus, t.a_minus)).or_insert(0.0) += p;
        }
        map.into_iter().collect()
    }

    /// Lossless counts of `m` pairs.
    pub fn lossless(m: u32, dist: &PairOutcomeDist) -> Self {
        let table = CountTable::build(m, dist);
        let mut entries = Vec::new();
        for x in 0..=m {
            for y in 0..=m {
                let p = table.get(x, y);
                if p > 0.0 {
                    entries.push((
                        CountTuple { a_plus: x, a_minus: m - x, b_plus: y, b_minus: m - y },
                        p,
                    ));
                }
            }
        }
        Self::from_entries(m, entries)
    }

    fn from_entries(emitted: u32, mut entries: Vec<(CountTuple, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        entries.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        Self { emitted, entries }
    }

    /// Independent sum with another count variable.
    fn convolve(&self, other: &[(CountTuple, f64)]) -> Vec<(CountTuple, f64)> {
        let mut out = Vec::with_capacity(self.entries.len() * other.len());
        for (t, p) in &self.entries {
            for (d, q) in other {
                out.push((
                    CountTuple {
                        a_plus: t.a_plus + d.a_plus,
                        a_minus: t.a_minus + d.a_minus,
                        b_plus: t.b_plus + d.b_plus,
                        b_minus: t.b_minus + d.b_minus,
                    },
                    p * q,
                ));
            }
        }
        out
    }
}

/// Joint law of `(n_+^A, n_+^B)` for lossless pairs, grown one pair at a time.
///
/// Every coefficient is nonnegative so the recursion is free of
/// cancellation; it yields all intermediate `M` for Poisson mixtures.
#[derive(Debug, Clone)]
pub struct CountTable {
    pairs: u32,
    stride: usize,
    probs: Vec<f64>,
    dist: [f64; 4],
}

impl CountTable {
    pub fn new(dist: &PairOutcomeDist, capacity: u32) -> Self {
        let stride = capacity as usize + 1;
        let mut probs = vec![0.0; stride * stride];
        probs[0] = 1.0;
        Self { pairs: 0, stride, probs, dist: dist.as_array() }
    }

    pub fn build(m: u32, dist: &PairOutcomeDist) -> Self {
        let mut t = Self::new(dist, m);
        for _ in 0..m {
            t.add_pair();
        }
        t
    }

    pub fn pairs(&self) -> u32 {
        self.pairs
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        if x > self.pairs || y > self.pairs {
            return 0.0;
        }
        self.probs[x as usize * self.stride + y as usize]
    }

    pub fn add_pair(&mut self) {
        let n = self.pairs as usize + 1;
        assert!(n < self.stride, "count table capacity exceeded");
        let [pp, pm, mp, mm] = self.dist;
        let s = self.stride;
        for x in (0..=n).rev() {
            for y in (0..=n).rev() {
                let mut v = mm * self.probs[x * s + y];
                if x > 0 {
                    v += pm * self.probs[(x - 1) * s + y];
                }
                if y > 0 {
                    v += mp * self.probs[x * s + y - 1];
                }
                if x > 0 && y > 0 {
                    v += pp * self.probs[(x - 1) * s + y - 1];
                }
                self.probs[x * s + y] = v;
            }
        }
        self.pairs += 1;
    }

    /// `(Pr[n_+^A >= na], Pr[n_+^B >= nb], Pr[both])`.
    pub fn tail_inputs(&self, na: u32, nb: u32) -> ChInputs {
        let m = self.pairs;
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        let mut j = CompensatedSum::new();
        for x in 0..=m {
            for y in 0..=m {
                let p = self.get(x, y);
                if x >= na {
                    a.add(p);
                    if y >= nb {
                        j.add(p);
                    }
                }
                if y >= nb {
                    b.add(p);
                }
            }
        }
        ChInputs { p_plus_a: a.value(), p_plus_b: b.value(), p_pp: j.value() }
    }

    /// Binary-vote inputs at the current pair count.
    pub fn vote_inputs(&self, rule_a: VoteRule, rule_b: VoteRule, empty: EmptyEventPolicy) -> ChInputs {
        if self.pairs == 0 {
            return ChInputs::empty_event(empty);
        }
        self.tail_inputs(rule_a.threshold(self.pairs), rule_b.threshold(self.pairs))
    }
}

fn check_binary(rule: VoteRule) -> Result<()> {
    if rule.is_ternary() {
        return Err(invalid("a binary vote rule is required here; use ternary_vote_probs"));
    }
    Ok(())
}

/// `Pr[n_+ >= N(M)]` for `M` lossless particles with single-particle `p_+`.
pub fn vote_marginal(m: u32, p_plus: f64, rule: VoteRule, empty: EmptyEventPolicy) -> Result<f64> {
    check_binary(rule)?;
    if !(0.0..=1.0).contains(&p_plus) {
        return Err(invalid(format!("p_+ = {p_plus} outside [0,1]")));
    }
    if m == 0 {
        return Ok(ChInputs::empty_event(empty).p_plus_a);
    }
    let n0 = rule.threshold(m);
    let (lp, lq) = (p_plus.ln(), (1.0 - p_plus).ln());
    let sum: CompensatedSum = (n0..=m)
        .map(|n| {
            let l = ln_choose(m as u64, n as u64) + count_ln(n as u64, lp) + count_ln((m - n) as u64, lq);
            l.exp()
        })
        .collect();
    Ok(sum.value().clamp(0.0, 1.0))
}

/// `Pr[n_+^A >= N_A(M), n_+^B >= N_B(M)]` by summing multinomial terms
/// in log space over `(n_++, n_+-, n_-+, n_--)`.
pub fn vote_joint(
    m: u32,
    dist: &PairOutcomeDist,
    rule_a: VoteRule,
    rule_b: VoteRule,
    empty: EmptyEventPolicy,
) -> Result<f64> {
    check_binary(rule_a)?;
    check_binary(rule_b)?;
    if m == 0 {
        return Ok(ChInputs::empty_event(empty).p_pp);
    }
    let na = rule_a.threshold(m);
    let nb = rule_b.threshold(m);
    let lf = ln_factorial_table(m as usize);
    let lp = dist.as_array().map(|p| p.max(0.0).ln());
    let mut acc = CompensatedSum::new();
    for npp in 0..=m {
        for npm in 0..=(m - npp) {
            if npp + npm < na {
                continue;
            }
            let rest = m - npp - npm;
            let start = nb.saturating_sub(npp);
            for nmp in start..=rest {
                let nmm = rest - nmp;
                let counts = [npp, npm, nmp, nmm];
                let mut l = lf[m as usize];
                for (c, lpi) in counts.iter().zip(lp.iter()) {
                    l += count_ln(*c as u64, *lpi) - lf[*c as usize];
                }
                acc.add(l.exp());
            }
        }
    }
    Ok(acc.value().clamp(0.0, 1.0))
}

/// Lossless fixed-`M` CH inputs via [`vote_marginal`] and [`vote_joint`].
pub fn vote_probs_lossless(m: u32, dist: &PairOutcomeDist, rule: VoteRule, empty: EmptyEventPolicy) -> Result<ChInputs> {
    Ok(ChInputs {
        p_plus_a: vote_marginal(m, dist.alice_plus(), rule, empty)?,
        p_plus_b: vote_marginal(m, dist.bob_plus(), rule, empty)?,
        p_pp: vote_joint(m, dist, rule, rule, empty)?,
    })
}

/// Per-pair category probabilities with each particle detected
/// independently with probability `eta`. Categories are ordered
/// Alice in `{+, -, none}` times Bob in `{+, -, none}`.
fn efficiency_categories(dist: &PairOutcomeDist, eta: f64) -> [(CountTuple, f64); 9] {
    let lost = 1.0 - eta;
    let pa = [dist.alice_plus(), 1.0 - dist.alice_plus()];
    let pb = [dist.bob_plus(), 1.0 - dist.bob_plus()];
    let joint = [[dist.p_pp, dist.p_pm], [dist.p_mp, dist.p_mm]];
    let tuple = |a: usize, b: usize| CountTuple {
        a_plus: (a == 0) as u32,
        a_minus: (a == 1) as u32,
        b_plus: (b == 0) as u32,
        b_minus: (b == 1) as u32,
    };
    let mut out = [(tuple(2, 2), 0.0); 9];
    for a in 0..3 {
        for b in 0..3 {
            let q = match (a, b) {
                (2, 2) => lost * lost,
                (2, _) => eta * lost * pb[b],
                (_, 2) => eta * lost * pa[a],
                _ => eta * eta * joint[a][b],
            };
            out[3 * a + b] = (tuple(a, b), q);
        }
    }
    out
}

/// Joint law of detected counts for `M` pairs and detectors of efficiency `eta`.
pub fn count_distribution_with_efficiency(m: u32, dist: &PairOutcomeDist, det: DetectionModel) -> CountJointDistribution {
    let cats = efficiency_categories(dist, det.eta());
    let d = m as usize + 1;
    let idx = |t: &CountTuple| {
        ((t.a_plus as usize * d + t.a_minus as usize) * d + t.b_plus as usize) * d + t.b_minus as usize
    };
    let mut cur = vec![0.0; d * d * d * d];
    cur[0] = 1.0;
    let mut support = vec![CountTuple { a_plus: 0, a_minus: 0, b_plus: 0, b_minus: 0 }];
    for _ in 0..m {
        let mut next = vec![0.0; cur.len()];
        let mut next_support = Vec::new();
        for t in &support {
            let p = cur[idx(t)];
            for (c, q) in &cats {
                if *q == 0.0 {
                    continue;
                }
                let n = CountTuple {
                    a_plus: t.a_plus + c.a_plus,
                    a_minus: t.a_minus + c.a_minus,
                    b_plus: t.b_plus + c.b_plus,
                    b_minus: t.b_minus + c.b_minus,
                };
                let k = idx(&n);
                if next[k] == 0.0 {
                    next_support.push(n);
                }
                next[k] += p * q;
            }
        }
        cur = next;
        support = next_support;
    }
    let entries = support.into_iter().map(|t| (t, cur[idx(&t)])).collect();
    CountJointDistribution::from_entries(m, entries)
}

/// Binary votes applied per party to its own detected total.
pub fn vote_probs_from_counts(
    counts: &CountJointDistribution,
    rule_a: VoteRule,
    rule_b: VoteRule,
    empty: EmptyEventPolicy,
) -> Result<ChInputs> {
    check_binary(rule_a)?;
    check_binary(rule_b)?;
    let mut a = CompensatedSum::new();
    let mut b = CompensatedSum::new();
    let mut j = CompensatedSum::new();
    for (t, p) in &counts.entries {
        let va = rule_a.says_plus(t.a_plus, t.a_minus, empty);
        let vb = rule_b.says_plus(t.b_plus, t.b_minus, empty);
        if va {
            a.add(*p);
        }
        if vb {
            b.add(*p);
        }
        if va && vb {
            j.add(*p);
        }
    }
    Ok(ChInputs { p_plus_a: a.value(), p_plus_b: b.value(), p_pp: j.value() })
}

pub fn vote_probs_with_efficiency(
    m: u32,
    dist: &PairOutcomeDist,
    det: DetectionModel,
    rule: VoteRule,
    empty: EmptyEventPolicy,
) -> Result<ChInputs> {
    vote_probs_from_counts(&count_distribution_with_efficiency(m, dist, det), rule, rule, empty)
}

/// Counts after exactly one particle is lost on each side, the lost
/// particles being chosen uniformly and independently.
pub fn one_loss_each_side_distribution(m: u32, dist: &PairOutcomeDist) -> Result<CountJointDistribution> {
    if m < 2 {
        return Err(invalid(format!("one loss per side needs at least 2 pairs, got {m}")));
    }
    let same = CountJointDistribution::lossless(m - 1, dist);
    let broken = CountJointDistribution::lossless(m - 2, dist);
    let (pa, pb) = (dist.alice_plus(), dist.bob_plus());
    let z = CountTuple { a_plus: 0, a_minus: 0, b_plus: 0, b_minus: 0 };
    let singles = [
        (CountTuple { a_plus: 1, b_plus: 1, ..z }, pa * pb),
        (CountTuple { a_plus: 1, b_minus: 1, ..z }, pa * (1.0 - pb)),
        (CountTuple { a_minus: 1, b_plus: 1, ..z }, (1.0 - pa) * pb),
        (CountTuple { a_minus: 1, b_minus: 1, ..z }, (1.0 - pa) * (1.0 - pb)),
    ];
    let w_same = 1.0 / m as f64;
    let mut entries: Vec<(CountTuple, f64)> = same.entries.iter().map(|(t, p)| (*t, p * w_same)).collect();
    entries.extend(broken.convolve(&singles).into_iter().map(|(t, p)| (t, p * (1.0 - w_same))));
    Ok(CountJointDistribution::from_entries(m, entries))
}

/// Ternary outcome: `Some(true)` for `+`, `Some(false)` for `-`, `None` if discarded.
fn ternary_outcome(n_plus: u32, n_minus: u32, threshold: u32) -> Option<bool> {
    if n_plus >= threshold {
        Some(true)
    } else if n_minus >= threshold {
        Some(false)
    } else {
        None
    }
}

/// CH inputs under the ternary vote with threshold `N`.
pub fn ternary_vote_probs(counts: &CountJointDistribution, threshold: u32, convention: TernaryConvention) -> Result<ChInputs> {
    for (t, _) in &counts.entries {
        for m in [t.alice_detected(), t.bob_detected()] {
            if 2 * threshold <= m {
                return Err(invalid(format!(
                    "ternary threshold {threshold} must exceed half of the {m} detected particles"
                )));
            }
        }
    }
    let mut a = CompensatedSum::new();
    let mut b = CompensatedSum::new();
    let mut j = CompensatedSum::new();
    let mut accepted = CompensatedSum::new();
    for (t, p) in &counts.entries {
        let oa = ternary_outcome(t.a_plus, t.a_minus, threshold);
        let ob = ternary_outcome(t.b_plus, t.b_minus, threshold);
        let both = oa.is_some() && ob.is_some();
        if convention == TernaryConvention::PostSelectBoth && !both {
            continue;
        }
        if both {
            accepted.add(*p);
        }
        if oa == Some(true) {
            a.add(*p);
        }
        if ob == Some(true) {
            b.add(*p);
        }
        if oa == Some(true) && ob == Some(true) {
            j.add(*p);
        }
    }
    let raw = ChInputs { p_plus_a: a.value(), p_plus_b: b.value(), p_pp: j.value() };
    match convention {
        TernaryConvention::NoRenormalization => Ok(raw),
        TernaryConvention::PostSelectBoth => {
            let acc = accepted.value();
            if acc <= 0.0 {
                Ok(ChInputs::default())
            } else {
                Ok(raw.scaled(1.0 / acc))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::{planar_pair_probs, PairState};
    use proptest::prelude::*;
    use std::collections::BTreeMap;
    use std::f64::consts::FRAC_PI_4;

    const E: EmptyEventPolicy = EmptyEventPolicy::Minus;

    /// Every labeled string of per-pair outcomes, with its probability.
    /// Outcome labels: 0 = ++, 1 = +-, 2 = -+, 3 = --.
    fn labeled_strings(m: u32, dist: &PairOutcomeDist) -> Vec<(Vec<usize>, f64)> {
        let p = dist.as_array();
        let total = 4usize.pow(m);
        (0..total)
            .map(|mut code| {
                let mut s = Vec::new();
                let mut prob = 1.0;
                for _ in 0..m {
                    s.push(code % 4);
                    prob *= p[code % 4];
                    code /= 4;
                }
                (s, prob)
            })
            .collect()
    }

    fn tuple_of(labels: &[usize]) -> CountTuple {
        let mut t = CountTuple { a_plus: 0, a_minus: 0, b_plus: 0, b_minus: 0 };
        for &l in labels {
            if l < 2 { t.a_plus += 1 } else { t.a_minus += 1 }
            if l % 2 == 0 { t.b_plus += 1 } else { t.b_minus += 1 }
        }
        t
    }

    fn brute_counts(m: u32, dist: &PairOutcomeDist) -> BTreeMap<CountTuple, f64> {
        let mut map = BTreeMap::new();
        for (s, p) in labeled_strings(m, dist) {
            *map.entry(tuple_of(&s)).or_insert(0.0) += p;
        }
        map
    }

    fn brute_efficiency(m: u32, dist: &PairOutcomeDist, eta: f64) -> BTreeMap<CountTuple, f64> {
        // labels per pair: Alice in {+,-,0} x Bob in {+,-,0}; each particle
        // is detected independently.
        let p = dist.as_array();
        let mut map = BTreeMap::new();
        for mut code in 0..9usize.pow(m) {
            let mut t = CountTuple { a_plus: 0, a_minus: 0, b_plus: 0, b_minus: 0 };
            let mut prob = 1.0;
            for _ in 0..m {
                let (a, b) = (code % 9 / 3, code % 3);
                code /= 9;
                // sum over the hidden outcome of undetected particles
                let mut q = 0.0;
                for oa in 0..2 {
                    for ob in 0..2 {
                        let ok_a = a == 2 || a == oa;
                        let ok_b = b == 2 || b == ob;
                        if ok_a && ok_b {
                            q += p[2 * oa + ob];
                        }
                    }
                }
                let da = if a == 2 { 1.0 - eta } else { eta };
                let db = if b == 2 { 1.0 - eta } else { eta };
                prob *= q * da * db;
                match a {
                    0 => t.a_plus += 1,
                    1 => t.a_minus += 1,
                    _ => {}
                }
                match b {
                    0 => t.b_plus += 1,
                    1 => t.b_minus += 1,
                    _ => {}
                }
            }
            *map.entry(t).or_insert(0.0) += prob;
        }
        map
    }

    fn brute_one_loss(m: u32, dist: &PairOutcomeDist) -> BTreeMap<CountTuple, f64> {
        let mut map = BTreeMap::new();
        let w = 1.0 / (m * m) as f64;
        for (s, p) in labeled_strings(m, dist) {
            for la in 0..m as usize {
                for lb in 0..m as usize {
                    let mut t = CountTuple { a_plus: 0, a_minus: 0, b_plus: 0, b_minus: 0 };
                    for (i, &l) in s.iter().enumerate() {
                        if i != la {
                            if l < 2 { t.a_plus += 1 } else { t.a_minus += 1 }
                        }
                        if i != lb {
                            if l % 2 == 0 { t.b_plus += 1 } else { t.b_minus += 1 }
                        }
                    }
                    *map.entry(t).or_insert(0.0) += p * w;
                }
            }
        }
        map
    }

    fn assert_same_law(got: &CountJointDistribution, want: &BTreeMap<CountTuple, f64>, tol: f64) {
        for (t, p) in want {
            assert!((got.probability(*t) - p).abs() < tol, "{t:?}: {} vs {p}", got.probability(*t));
        }
        for (t, p) in &got.entries {
            assert!((want.get(t).copied().unwrap_or(0.0) - p).abs() < tol);
        }
    }

    fn sample_dist() -> PairOutcomeDist {
        planar_pair_probs(PairState::new(0.6, 0.9).unwrap(), 0.2, 1.1)
    }

    #[test]
    fn thresholds() {
        assert_eq!(VoteRule::Majority.threshold(4), 2);
        assert_eq!(VoteRule::Majority.threshold(5), 3);
        assert_eq!(VoteRule::TWO_THIRDS.threshold(6), 4);
        assert_eq!(VoteRule::TWO_THIRDS.threshold(7), 5);
        assert_eq!(VoteRule::THREE_QUARTERS.threshold(8), 6);
        assert_eq!(VoteRule::THREE_QUARTERS.threshold(9), 7);
        assert_eq!(VoteRule::Unanimity.threshold(9), 9);
        for m in 1..60 {
            for r in [VoteRule::Majority, VoteRule::TWO_THIRDS, VoteRule::THREE_QUARTERS, VoteRule::Unanimity] {
                let n = r.threshold(m);
                assert!(n >= m.div_ceil(2) && n <= m);
            }
        }
        // ties go to "+"
        assert!(VoteRule::Majority.says_plus(2, 2, E));
        assert!(!VoteRule::Majority.says_plus(0, 0, E));
        assert!(VoteRule::Majority.says_plus(0, 0, EmptyEventPolicy::LiteralRule));
    }

    #[test]
    fn rule_names_round_trip() {
        for s in ["majority", "2/3", "3/4", "unanimity", "ternary:M-1", "ternary:4"] {
            let r: VoteRule = s.parse().unwrap();
            assert_eq!(r.to_string().to_ascii_lowercase(), s.to_ascii_lowercase());
        }
        assert!("1/2".parse::<VoteRule>().is_err());
        assert!("plurality".parse::<VoteRule>().is_err());
    }

    #[test]
    fn marginal_examples() {
        assert!((vote_marginal(2, 0.5, VoteRule::Unanimity, E).unwrap() - 0.25).abs() < 1e-15);
        for r in [VoteRule::Majority, VoteRule::Unanimity, VoteRule::THREE_QUARTERS] {
            assert!((vote_marginal(1, 0.37, r, E).unwrap() - 0.37).abs() < 1e-15);
        }
        // 10*.7^3*.3^2 + 5*.7^4*.3 + .7^5
        assert!((vote_marginal(5, 0.7, VoteRule::Majority, E).unwrap() - 0.83692).abs() < 1e-12);
        assert_eq!(vote_marginal(0, 0.7, VoteRule::Majority, E).unwrap(), 0.0);
        assert_eq!(vote_marginal(0, 0.7, VoteRule::Majority, EmptyEventPolicy::LiteralRule).unwrap(), 1.0);
    }

    #[test]
    fn joint_examples() {
        let d = sample_dist();
        let j = vote_joint(1, &d, VoteRule::Majority, VoteRule::Unanimity, E).unwrap();
        assert!((j - d.p_pp).abs() < 1e-15);
        let corr = PairOutcomeDist::new(0.5, 0.0, 0.0, 0.5).unwrap();
        let j = vote_joint(2, &corr, VoteRule::Unanimity, VoteRule::Unanimity, E).unwrap();
        assert!((j - 0.25).abs() < 1e-15);
    }

    #[test]
    fn joint_matches_labeled_enumeration_at_three_pairs() {
        let d = planar_pair_probs(PairState::maximally_entangled(), 0.0, FRAC_PI_4);
        let n = VoteRule::Majority.threshold(3);
        let want: f64 = labeled_strings(3, &d)
            .into_iter()
            .filter(|(s, _)| {
                let t = tuple_of(s);
                t.a_plus >= n && t.b_plus >= n
            })
            .map(|x| x.1)
            .sum();
        let got = vote_joint(3, &d, VoteRule::Majority, VoteRule::Majority, E).unwrap();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn lossless_operations_match_enumeration() {
        let rules = [VoteRule::Majority, VoteRule::TWO_THIRDS, VoteRule::THREE_QUARTERS, VoteRule::Unanimity];
        for m in 1..=4 {
            for d in [sample_dist(), PairOutcomeDist::uniform(), planar_pair_probs(PairState::pure(0.3), 0.0, 2.0)] {
                let brute = brute_counts(m, &d);
                assert_same_law(&CountJointDistribution::lossless(m, &d), &brute, 1e-12);
                for ra in rules {
                    for rb in rules {
                        let (na, nb) = (ra.threshold(m), rb.threshold(m));
                        let want_j: f64 = brute.iter().filter(|(t, _)| t.a_plus >= na && t.b_plus >= nb).map(|x| x.1).sum();
                        let want_a: f64 = brute.iter().filter(|(t, _)| t.a_plus >= na).map(|x| x.1).sum();
                        let got_j = vote_joint(m, &d, ra, rb, E).unwrap();
                        let got_a = vote_marginal(m, d.alice_plus(), ra, E).unwrap();
                        assert!((got_j - want_j).abs() < 1e-10);
                        assert!((got_a - want_a).abs() < 1e-10);
                        let table = CountTable::build(m, &d).vote_inputs(ra, rb, E);
                        assert!((table.p_pp - want_j).abs() < 1e-10);
                        assert!((table.p_plus_a - want_a).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn efficiency_matches_enumeration() {
        let d = sample_dist();
        for m in 1..=4 {
            for eta in [0.0, 0.35, 0.8, 1.0] {
                let got = count_distribution_with_efficiency(m, &d, DetectionModel::new(eta).unwrap());
                assert_same_law(&got, &brute_efficiency(m, &d, eta), 1e-12);
            }
        }
        let got = count_distribution_with_efficiency(2, &PairOutcomeDist::uniform(), DetectionModel::new(0.8).unwrap());
        assert_same_law(&got, &brute_efficiency(2, &PairOutcomeDist::uniform(), 0.8), 1e-12);
    }

    #[test]
    fn efficiency_vote_at_five_pairs_matches_enumeration() {
        let d = planar_pair_probs(PairState::new(0.5, 1.0).unwrap(), 0.0, 0.6);
        let brute = brute_efficiency(5, &d, 0.9);
        let (mut a, mut j) = (0.0, 0.0);
        for (t, p) in &brute {
            let va = VoteRule::Majority.says_plus(t.a_plus, t.a_minus, E);
            let vb = VoteRule::Majority.says_plus(t.b_plus, t.b_minus, E);
            if va { a += p }
            if va && vb { j += p }
        }
        let got = vote_probs_with_efficiency(5, &d, DetectionModel::new(0.9).unwrap(), VoteRule::Majority, E).unwrap();
        assert!((got.p_plus_a - a).abs() < 1e-10);
        assert!((got.p_pp - j).abs() < 1e-10);
    }

    #[test]
    fn efficiency_limits() {
        let d = sample_dist();
        let full = count_distribution_with_efficiency(4, &d, DetectionModel::new(1.0).unwrap());
        assert!(full.entries.iter().all(|(t, _)| t.alice_detected() == 4 && t.bob_detected() == 4));
        let none = count_distribution_with_efficiency(4, &d, DetectionModel::new(0.0).unwrap());
        assert_eq!(none.entries.len(), 1);
        assert!((none.entries[0].1 - 1.0).abs() < 1e-15);
        let lossless = vote_probs_lossless(4, &d, VoteRule::Majority, E).unwrap();
        let eff = vote_probs_with_efficiency(4, &d, DetectionModel::new(1.0).unwrap(), VoteRule::Majority, E).unwrap();
        assert!((lossless.p_pp - eff.p_pp).abs() < 1e-12);
        assert!((lossless.p_plus_b - eff.p_plus_b).abs() < 1e-12);
        assert!(DetectionModel::new(1.2).is_err());
    }

    #[test]
    fn one_loss_matches_enumeration() {
        for m in 2..=4 {
            let d = sample_dist();
            assert_same_law(&one_loss_each_side_distribution(m, &d).unwrap(), &brute_one_loss(m, &d), 1e-12);
        }
        assert!(one_loss_each_side_distribution(1, &sample_dist()).is_err());
    }

    #[test]
    fn one_loss_structure() {
        // two pairs: half the time the survivors are one intact pair
        let corr = PairOutcomeDist::new(0.5, 0.0, 0.0, 0.5).unwrap();
        let law = one_loss_each_side_distribution(2, &corr).unwrap();
        let t = |ap, am, bp, bm| CountTuple { a_plus: ap, a_minus: am, b_plus: bp, b_minus: bm };
        assert!((law.probability(t(1, 0, 1, 0)) - (0.5 * 0.5 + 0.5 * 0.25)).abs() < 1e-15);
        assert!((law.probability(t(1, 0, 0, 1)) - 0.5 * 0.25).abs() < 1e-15);
        // pairing information degrades
        let law = one_loss_each_side_distribution(3, &corr).unwrap();
        let agree: f64 = law.entries.iter().filter(|(t, _)| t.a_plus == t.b_plus).map(|x| x.1).sum();
        assert!(agree < 1.0 - 1e-3);
        // Alice's count law is binomial(M-1, p_+^A)
        let d = sample_dist();
        let law = one_loss_each_side_distribution(5, &d).unwrap();
        for ((np, nm), p) in law.alice_law() {
            assert_eq!(np + nm, 4);
            let b = ln_choose(4, np as u64).exp() * d.alice_plus().powi(np as i32) * (1.0 - d.alice_plus()).powi(nm as i32);
            assert!((p - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ternary_rules() {
        let d = sample_dist();
        let counts = CountJointDistribution::lossless(4, &d);
        let tern = ternary_vote_probs(&counts, 4, TernaryConvention::NoRenormalization).unwrap();
        let una = vote_probs_lossless(4, &d, VoteRule::Unanimity, E).unwrap();
        assert!((tern.p_plus_a - una.p_plus_a).abs() < 1e-12);
        assert!((tern.p_pp - una.p_pp).abs() < 1e-12);
        assert!(ternary_vote_probs(&counts, 2, TernaryConvention::NoRenormalization).is_err());
        let post = ternary_vote_probs(&counts, 3, TernaryConvention::PostSelectBoth).unwrap();
        assert!(post.p_pp <= post.p_plus_a.min(post.p_plus_b) + 1e-12);
        assert!(post.p_plus_a <= 1.0 + 1e-12);
    }

    fn any_dist() -> impl Strategy<Value = PairOutcomeDist> {
        (0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b, c, d)| {
            let s = a + b + c + d + 1e-9;
            PairOutcomeDist { p_pp: a / s, p_pm: b / s, p_mp: c / s, p_mm: 1.0 - (a + b + c) / s }
        })
    }

    proptest! {
        #[test]
        fn distributions_are_normalized(d in any_dist(), m in 2u32..7, eta in 0.0..=1.0f64) {
            prop_assert!((CountJointDistribution::lossless(m, &d).total() - 1.0).abs() < 1e-10);
            prop_assert!((count_distribution_with_efficiency(m, &d, DetectionModel::new(eta).unwrap()).total() - 1.0).abs() < 1e-10);
            prop_assert!((one_loss_each_side_distribution(m, &d).unwrap().total() - 1.0).abs() < 1e-10);
            prop_assert!(CountJointDistribution::lossless(m, &d).entries.iter().all(|e| e.1 >= 0.0));
        }

        #[test]
        fn marginal_monotone(m in 1u32..30, p in 0.0..1.0f64, dp in 0.0..0.2f64) {
            let q = (p + dp).min(1.0);
            for r in [VoteRule::Majority, VoteRule::THREE_QUARTERS, VoteRule::Unanimity] {
                prop_assert!(vote_marginal(m, q, r, E).unwrap() >= vote_marginal(m, p, r, E).unwrap() - 1e-12);
            }
            prop_assert!(vote_marginal(m, p, VoteRule::Majority, E).unwrap() + 1e-12 >= vote_marginal(m, p, VoteRule::THREE_QUARTERS, E).unwrap());
            prop_assert!(vote_marginal(m, p, VoteRule::THREE_QUARTERS, E).unwrap() + 1e-12 >= vote_marginal(m, p, VoteRule::Unanimity, E).unwrap());
        }

        #[test]
        fn binarized_no_signaling(theta in 0.0..FRAC_PI_4, chi_a in -3.0..3.0f64, b1 in -3.0..3.0f64, b2 in -3.0..3.0f64, eta in 0.3..=1.0f64, m in 1u32..5) {
            let s = PairState::pure(theta);
            let det = DetectionModel::new(eta).unwrap();
            let x = vote_probs_with_efficiency(m, &planar_pair_probs(s, chi_a, b1), det, VoteRule::Majority, E).unwrap();
            let y = vote_probs_with_efficiency(m, &planar_pair_probs(s, chi_a, b2), det, VoteRule::Majority, E).unwrap();
            prop_assert!((x.p_plus_a - y.p_plus_a).abs() < 1e-10);
            prop_assert!(x.p_pp <= x.p_plus_a.min(x.p_plus_b) + 1e-10);
        }
    }
}
