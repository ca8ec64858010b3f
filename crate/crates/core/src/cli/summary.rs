//! Headline numbers collected from the cached sweep tables.

use std::collections::HashMap;
use std::path::Path;

use multipair_bell::numeric::{exponential_fit, LinearFit};
use multipair_bell::study::{limits, slope_in, Command};
use multipair_bell::{Error, Result};

use super::table::Table;
use super::RunConfig;

type Record = HashMap<String, String>;

fn load(path: &Path) -> Result<Vec<Record>> {
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(err)?;
    r.deserialize().collect::<std::result::Result<Vec<Record>, _>>().map_err(err)
}

fn f(r: &Record, key: &str) -> Option<f64> {
    r.get(key).and_then(|v| v.parse().ok())
}

fn s<'a>(r: &'a Record, key: &str) -> &'a str {
    r.get(key).map(String::as_str).unwrap_or("")
}

fn distinct<'a>(rows: &'a [Record], key: &str) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for r in rows {
        let v = s(r, key);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn series(rows: &[Record], rule: &str, x: &str, y: &str) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| s(r, "rule") == rule).filter_map(|r| Some((f(r, x)?, f(r, y)?))).collect()
}

fn fit_text(fit: Option<LinearFit>) -> (String, String) {
    match fit {
        Some(f) => (f.slope.to_string(), format!("r2={:.4}", f.r_squared)),
        None => (String::new(), "not enough points".into()),
    }
}

/// Rule with the largest `y` at each `x`, as "rule: count" tallies.
fn winners(rows: &[Record], x: &str, y: &str) -> String {
    let mut by_x: Vec<(f64, &str, f64)> = Vec::new();
    for r in rows {
        let (Some(xv), Some(yv)) = (f(r, x), f(r, y)) else { continue };
        match by_x.iter_mut().find(|e| e.0 == xv) {
            Some(e) if yv > e.2 => {
                e.1 = s(r, "rule");
                e.2 = yv;
            }
            Some(_) => {}
            None => by_x.push((xv, s(r, "rule"), yv)),
        }
    }
    let mut tally: Vec<(&str, usize)> = Vec::new();
    for (_, rule, _) in by_x {
        match tally.iter_mut().find(|t| t.0 == rule) {
            Some(t) => t.1 += 1,
            None => tally.push((rule, 1)),
        }
    }
    tally.iter().map(|(r, n)| format!("{r}: {n}")).collect::<Vec<_>>().join("; ")
}

pub fn summarize(cfg: &RunConfig) -> Result<Table> {
    let path = |c: Command| cfg.results_dir.join(format!("{c}.csv"));
    let missing: Vec<String> =
        Command::SWEEPS.iter().filter(|&&c| !path(c).exists()).map(|c| format!("multipair-bell {c}")).collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!(
            "cached results missing in {}; run first: {}",
            cfg.results_dir.display(),
            missing.join(", ")
        )));
    }
    let mut t = Table::new(cfg, &["quantity", "value", "detail"]);
    let mut add = |q: String, v: String, d: String| t.rows.push(vec![q, v, d]);

    let rows = load(&path(Command::FigChScaling))?;
    for rule in distinct(&rows, "rule") {
        let (v, d) = fit_text(slope_in(&series(&rows, rule, "pairs", "ch"), limits::MAJORITY_FIT));
        add(format!("{rule} max CH exponent in M"), v, d);
        let (v, d) = fit_text(slope_in(&series(&rows, rule, "pairs", "ch_standard"), limits::STANDARD_FIT));
        add(format!("{rule} standard-settings CH exponent in M"), v, d);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = series(&rows, "unanimity", "pairs", "ch")
        .into_iter()
        .filter(|(m, _)| *m >= limits::UNANIMITY_FIT.0 && *m <= limits::UNANIMITY_FIT.1)
        .unzip();
    if xs.len() >= 2 {
        let (v, d) = fit_text(exponential_fit(&xs, &ys));
        add("unanimity max CH exponential rate".into(), v, d);
    }
    add("rule with the largest CH per M".into(), winners(&rows, "pairs", "ch"), String::new());

    let rows = load(&path(Command::FigNoise))?;
    for rule in distinct(&rows, "rule") {
        let (v, d) = fit_text(slope_in(&series(&rows, rule, "pairs", "epsilon"), limits::NOISE_FIT));
        add(format!("{rule} noise resistance exponent in M"), v, d);
    }
    add("most noise-resistant rule per M".into(), winners(&rows, "pairs", "epsilon"), String::new());

    let rows = load(&path(Command::FigPoisson))?;
    for rule in distinct(&rows, "rule") {
        let pts = series(&rows, rule, "mu", "ch");
        if let Some(best) = pts.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            add(format!("{rule} CH peak mean pair number"), best.0.to_string(), format!("ch={}", best.1));
        }
        let (v, d) = fit_text(slope_in(&pts, (limits::POISSON_LARGE_MU, f64::INFINITY)));
        add(format!("{rule} CH exponent in mu"), v, d);
    }

    let rows = load(&path(Command::FigEfficiency))?;
    for r in rows.iter().filter(|r| s(r, "kind") == "critical") {
        add(
            format!("{} critical efficiency M={}", s(r, "rule"), s(r, "pairs")),
            s(r, "eta").to_string(),
            format!("violated={}", s(r, "violated")),
        );
    }

    let rows = load(&path(Command::LossStudy))?;
    for case in distinct(&rows, "case") {
        let first = rows.iter().find(|r| s(r, "case") == case && s(r, "violates") == "true").map(|r| s(r, "pairs"));
        add(format!("{case} first violation with one loss per side"), first.unwrap_or("none").to_string(), String::new());
    }

    let rows = load(&path(Command::FigIndist))?;
    for rule in distinct(&rows, "rule") {
        let (v, d) = fit_text(slope_in(&series(&rows, rule, "pairs", "ch_symmetric"), limits::SYMMETRIC_FIT));
        add(format!("{rule} symmetric CH exponent in M"), v, d);
    }
    add("most noise-resistant rule per M, symmetric".into(), winners(&rows, "pairs", "epsilon"), String::new());

    let rows = load(&path(Command::Entanglement))?;
    if let Some(r) = rows.last() {
        add(format!("entanglement ratio at M={}", s(r, "pairs")), s(r, "ratio").to_string(), String::new());
    }
    Ok(t)
}
