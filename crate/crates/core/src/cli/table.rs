use std::fs;
use std::path::Path;

use multipair_bell::bell::ChValue;
use multipair_bell::entanglement::EntanglementReport;
use multipair_bell::numeric::LinearFit;
use multipair_bell::study::{
    self, convention_name, limits, CriticalRow, EfficiencyRow, IndistRow, LossRow, NoiseRow, PoissonRow, ScalingRow,
};
use multipair_bell::vote::VoteRule;
use multipair_bell::{Error, Result};

use super::RunConfig;

/// A CSV table with a `#` metadata block in front.
pub struct Table {
    pub meta: Vec<String>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Printed after the run and kept in the metadata.
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(cfg: &RunConfig, header: &[&'static str]) -> Self {
        let quadrature = match cfg.quadrature {
            Some(q) => serde_json::to_string(&q).expect("serializes"),
            None => "scaled with the photon number".into(),
        };
        let meta = vec![
            format!("multipair-bell {} {}", cfg.command, env!("CARGO_PKG_VERSION")),
            format!("config-sha256: {}", cfg.hash()),
            format!("config: {}", cfg.canonical_json()),
            format!("optimizer: {}", serde_json::to_string(&cfg.optimizer).expect("serializes")),
            format!("quadrature: {quadrature}"),
        ];
        Self { meta, header: header.to_vec(), rows: Vec::new(), notes: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn fit(&mut self, name: &str, fit: Option<LinearFit>) {
        self.notes.push(match fit {
            Some(f) => format!("fit {name}: slope={} intercept={} r2={}", f.slope, f.intercept, f.r_squared),
            None => format!("fit {name}: not enough points"),
        });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Config(format!("{}: {e}", path.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut buf = String::new();
        for line in self.meta.iter().chain(&self.notes) {
            buf.push_str("# ");
            buf.push_str(line);
            buf.push('\n');
        }
        let mut w = csv::Writer::from_writer(buf.into_bytes());
        let csv_err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, bytes).map_err(io)
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn settings_cols(v: &ChValue) -> Vec<String> {
    let a = v.settings.angles;
    vec![
        num(v.value),
        opt(v.alpha),
        num(v.settings.theta),
        num(a.alice[0]),
        num(a.alice[1]),
        num(a.bob[0]),
        num(a.bob[1]),
        v.grid_index.map(|i| i.to_string()).unwrap_or_default(),
        v.refine_steps.to_string(),
    ]
}

const SETTINGS: [&str; 9] = ["ch", "alpha", "theta", "a1", "a2", "b1", "b2", "grid_index", "refine_steps"];

fn header(lead: &[&'static str], trail: &[&'static str]) -> Vec<&'static str> {
    lead.iter().chain(SETTINGS.iter()).chain(trail).copied().collect()
}

fn points<R>(rows: &[R], f: impl Fn(&R) -> Option<(f64, f64)>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(f).collect()
}

pub fn scaling(cfg: &RunConfig, rows: &[ScalingRow]) -> Result<Table> {
    let mut t = Table::new(cfg, &header(&["rule", "pairs", "mode"], &["ch_standard", "ch_theta_fixed", "reid_s"]));
    for r in rows {
        let mut row = vec![r.rule.to_string(), r.pairs.to_string(), mode_name(&r.mode)];
        row.extend(settings_cols(&r.best));
        row.extend([num(r.standard), num(r.theta_fixed), opt(r.reid_s)]);
        t.push(row);
    }
    for rule in distinct(rows.iter().map(|r| r.rule)) {
        let best = points(rows, |r| (r.rule == rule).then_some((r.pairs as f64, r.best.value)));
        t.fit(&format!("{rule} ch power law M in [8,24]"), study::slope_in(&best, limits::MAJORITY_FIT));
        let std = points(rows, |r| (r.rule == rule).then_some((r.pairs as f64, r.standard)));
        t.fit(&format!("{rule} standard-settings ch power law M in [8,24]"), study::slope_in(&std, limits::STANDARD_FIT));
    }
    let una: Vec<(f64, f64)> = points(rows, |r| {
        (r.rule == VoteRule::Unanimity && r.pairs >= 2 && r.pairs <= 10).then_some((r.pairs as f64, r.best.value))
    });
    if una.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = una.into_iter().unzip();
        t.fit("unanimity ch exponential M in [2,10]", multipair_bell::numeric::exponential_fit(&xs, &ys));
    }
    Ok(t)
}

fn mode_name<T: serde::Serialize>(m: &T) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn distinct<T: PartialEq>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

pub fn noise(cfg: &RunConfig, rows: &[NoiseRow]) -> Result<Table> {
    let mut t = Table::new(cfg, &header(&["rule", "pairs", "mode", "epsilon", "violated"], &["ch_noiseless", "probes"]));
    for r in rows {
        let n = &r.resistance;
        let mut row = vec![r.rule.to_string(), r.pairs.to_string(), mode_name(&r.mode), num(n.epsilon), n.violated.to_string()];
        row.extend(settings_cols(&n.optimum));
        row.extend([num(n.noiseless.value), n.probes.to_string()]);
        t.push(row);
    }
    for rule in distinct(rows.iter().map(|r| r.rule)) {
        let pts = points(rows, |r| (r.rule == rule).then_some((r.pairs as f64, r.resistance.epsilon)));
        t.fit(&format!("{rule} epsilon power law M in [4,16]"), study::slope_in(&pts, limits::NOISE_FIT));
    }
    Ok(t)
}

pub fn poisson(cfg: &RunConfig, rows: &[PoissonRow]) -> Result<Table> {
    let mut t = Table::new(cfg, &header(&["rule", "mu", "max_pairs", "mode"], &["epsilon"]));
    for r in rows {
        let mut row = vec![r.rule.to_string(), num(r.mu), r.max_pairs.to_string(), mode_name(&r.mode)];
        row.extend(settings_cols(&r.best));
        row.push(opt(r.noise.as_ref().map(|n| n.epsilon)));
        t.push(row);
    }
    for rule in distinct(rows.iter().map(|r| r.rule)) {
        let sel: Vec<&PoissonRow> = rows.iter().filter(|r| r.rule == rule).collect();
        if let Some(best) = sel.iter().max_by(|a, b| a.best.value.total_cmp(&b.best.value)) {
            t.notes.push(format!("{rule} ch peaks at mu={} with ch={}", best.mu, best.best.value));
        }
        let pts = points(&sel, |r| Some((r.mu, r.best.value)));
        t.fit(&format!("{rule} ch power law mu >= 8"), study::slope_in(&pts, (limits::POISSON_LARGE_MU, f64::INFINITY)));
        let eps = points(&sel, |r| r.noise.as_ref().map(|n| (r.mu, n.epsilon)));
        if !eps.is_empty() {
            t.fit(&format!("{rule} epsilon power law mu >= 8"), study::slope_in(&eps, (limits::POISSON_LARGE_MU, f64::INFINITY)));
        }
    }
    Ok(t)
}

pub fn efficiency(cfg: &RunConfig, curves: &[EfficiencyRow], critical: &[CriticalRow]) -> Result<Table> {
    let mut t = Table::new(cfg, &header(&["kind", "rule", "pairs", "eta", "violated"], &[]));
    for r in curves {
        let mut row = vec!["curve".into(), r.rule.to_string(), r.pairs.to_string(), num(r.eta), r.best.violates().to_string()];
        row.extend(settings_cols(&r.best));
        t.push(row);
    }
    for r in critical {
        let c = &r.critical;
        let mut row = vec!["critical".into(), r.rule.to_string(), r.pairs.to_string(), num(c.eta), c.violated.to_string()];
        row.extend(settings_cols(&c.optimum));
        t.push(row);
        t.notes.push(format!("{} M={} critical eta={}", r.rule, r.pairs, c.eta));
    }
    Ok(t)
}

pub fn loss(cfg: &RunConfig, rows: &[LossRow]) -> Result<Table> {
    let mut t = Table::new(cfg, &header(&["case", "model", "rule", "convention", "pairs", "violates"], &[]));
    for r in rows {
        let mut row = vec![
            r.case.label(),
            mode_name(&r.case.particles),
            r.case.rule.to_string(),
            convention_name(r.case.ternary).into(),
            r.pairs.to_string(),
            r.best.violates().to_string(),
        ];
        row.extend(settings_cols(&r.best));
        t.push(row);
    }
    for (label, first) in study::first_violations(rows) {
        t.notes.push(match first {
            Some(m) => format!("{label} first violation at M={m}"),
            None => format!("{label} no violation"),
        });
    }
    Ok(t)
}

pub fn indist(cfg: &RunConfig, rows: &[IndistRow]) -> Result<Table> {
    let mut t = Table::new(
        cfg,
        &[
            "rule",
            "pairs",
            "ch_symmetric",
            "alpha_symmetric",
            "ch_independent",
            "alpha_independent",
            "theta_independent",
            "sigma",
            "epsilon",
            "grid_index",
            "refine_steps",
        ],
    );
    for r in rows {
        t.push(vec![
            r.rule.to_string(),
            r.pairs.to_string(),
            num(r.symmetric.value),
            opt(r.symmetric.alpha),
            num(r.independent.value),
            opt(r.independent.alpha),
            num(r.independent.settings.theta),
            opt(r.noise.as_ref().and_then(|n| n.sigma)),
            opt(r.noise.as_ref().map(|n| n.epsilon)),
            r.symmetric.grid_index.map(|i| i.to_string()).unwrap_or_default(),
            r.symmetric.refine_steps.to_string(),
        ]);
    }
    for rule in distinct(rows.iter().map(|r| r.rule)) {
        let pts = points(rows, |r| (r.rule == rule).then_some((r.pairs as f64, r.symmetric.value)));
        t.fit(&format!("{rule} symmetric ch power law M in [4,16]"), study::slope_in(&pts, limits::SYMMETRIC_FIT));
        let eps = points(rows, |r| (r.rule == rule).then_some(()).and(r.noise.as_ref()).map(|n| (r.pairs as f64, n.epsilon)));
        if !eps.is_empty() {
            t.fit(&format!("{rule} symmetric epsilon power law M in [4,16]"), study::slope_in(&eps, limits::SYMMETRIC_FIT));
        }
    }
    Ok(t)
}

pub fn entanglement(cfg: &RunConfig, rows: &[EntanglementReport]) -> Result<Table> {
    let mut t = Table::new(cfg, &["pairs", "e_distinguishable", "e_indistinguishable", "ratio"]);
    for r in rows {
        t.push(vec![r.pairs.to_string(), num(r.distinguishable), num(r.indistinguishable), num(r.ratio)]);
    }
    if let Some(r) = rows.last() {
        t.notes.push(format!("ratio at M={} is {}", r.pairs, r.ratio));
    }
    Ok(t)
}
