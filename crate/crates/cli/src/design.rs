//! `match`: panel, cumulative doses, distances, penalties, sinks, optimal
//! matching, balance.

use std::path::Path;

use pairdose::io::{
    load_panel, unit_records, week_starts, OutcomeSource, Panel, PanelPaths, UnitSpec,
};
use pairdose::longitudinal::{cumulative_dose, CumulativeDoseSpec};
use pairdose::matching::{
    add_sinks, apply_penalties, extract_pairs, mahalanobis_distances, optimal_nonbipartite_match,
    write_pairs_csv, Penalties,
};
use pairdose::model::{standardized_differences, validate_dataset, BalanceRow};
use serde::Serialize;

use crate::artifacts::RunDir;
use crate::config::{DesignConfig, Loaded};
use crate::CliError;

/// Loads the four panel files named in the config and records their hashes.
pub fn read_panel(loaded: &Loaded, run: &mut RunDir) -> Result<Panel, CliError> {
    let d = &loaded.config.data;
    let need = |p: &Option<std::path::PathBuf>, what: &str| {
        p.as_deref()
            .map(|p| loaded.resolve(p))
            .ok_or_else(|| CliError::Config(format!("data.{what} is required")))
    };
    let (cov, mob, cases, deaths) = (
        need(&d.covariates, "covariates")?,
        need(&d.mobility, "mobility")?,
        need(&d.cases, "cases")?,
        need(&d.deaths, "deaths")?,
    );
    for (role, p) in [
        ("covariates", &cov),
        ("mobility", &mob),
        ("cases", &cases),
        ("deaths", &deaths),
    ] {
        run.input(role, p)?;
    }
    Ok(load_panel(&PanelPaths {
        covariates: &cov,
        mobility: &mob,
        cases: &cases,
        deaths: &deaths,
    })?)
}

/// Cumulative dose of every county over the treatment window.
pub fn county_doses(panel: &Panel, design: &DesignConfig) -> Result<Vec<f64>, CliError> {
    let start = panel.day_index(design.treatment_start)?;
    let end = panel.day_index(design.treatment_end)?;
    if end < start {
        return Err(CliError::Config(
            "design.treatment_end precedes treatment_start".into(),
        ));
    }
    let spec = CumulativeDoseSpec::constant_reference(
        design.reference_level,
        end - start + 1,
        &design.weights,
        design.lag,
    )?;
    panel
        .counties
        .iter()
        .map(|c| Ok(cumulative_dose(&c.mobility[start..=end], &spec)?))
        .collect()
}

#[derive(Serialize)]
struct DroppedRow<'a> {
    fips: &'a str,
    reason: &'a str,
    detail: String,
}

#[derive(Serialize)]
struct DoseRow<'a> {
    id: &'a str,
    cumulative_dose: f64,
}

#[derive(Serialize)]
struct DesignSummary<'a> {
    n_counties_loaded: usize,
    n_missing_data: usize,
    n_units: usize,
    n_sinks: usize,
    n_dropped_by_sinks: usize,
    n_pairs: usize,
    total_distance: f64,
    max_abs_standardized_difference: f64,
    covariates: &'a [String],
    exact_keys: &'a [String],
    window_days: usize,
}

pub fn run(loaded: &Loaded, out: &Path) -> Result<String, CliError> {
    let design = loaded.design()?;
    let mut run = RunDir::create(out, "match", loaded.hash(), loaded.config.seed)?;
    let panel = read_panel(loaded, &mut run)?;

    let weeks = match &design.weeks {
        Some(w) => week_starts(w.first, w.count)?,
        None => Vec::new(),
    };
    let outcome = loaded
        .config
        .inference
        .as_ref()
        .and_then(|i| i.outcome.as_ref())
        .map_or(OutcomeSource::Cases, |o| o.source);
    let spec = UnitSpec {
        outcome,
        weeks,
        exact_keys: design.exact_keys.clone(),
    };
    let (units, names) = unit_records(&panel, &spec)?;
    let report = validate_dataset(&units)?;
    if !report.is_valid() {
        return Err(CliError::Validation(
            report.violations.iter().map(ToString::to_string).collect(),
        ));
    }

    let doses = county_doses(&panel, design)?;
    let labels: Vec<String> = units.iter().map(|u| u.id.clone()).collect();
    let x: Vec<Vec<f64>> = units.iter().map(|u| u.covariates.clone()).collect();
    let d = mahalanobis_distances(labels, &x, design.covariance, design.ridge)?;
    let keys: Vec<Vec<String>> = units.iter().map(|u| u.exact_keys.clone()).collect();
    let penalties = Penalties {
        exact: design.exact_penalty.unwrap_or(f64::INFINITY),
        dose_gap: design.dose_gap_penalty,
        min_gap: design.min_gap,
    };
    let d = apply_penalties(d, &keys, &doses, penalties)?;
    let d = add_sinks(d, design.sink_fraction)?;
    let m = optimal_nonbipartite_match(&d)?;
    let pairs = extract_pairs(&m, &d, &doses)?;
    let balance = standardized_differences(&pairs, &units, &names)?;

    run.csv("pairs.csv", |w| write_pairs_csv(&pairs, w))?;
    run.csv("balance.csv", |w| {
        write_rows(
            &["covariate", "mean_lo", "mean_hi", "standardized_difference"],
            &balance,
            w,
        )
    })?;
    let mut dropped: Vec<DroppedRow> = panel
        .dropped
        .iter()
        .map(|u| DroppedRow {
            fips: &u.fips,
            reason: "missing_data",
            detail: u.missing.join(";"),
        })
        .collect();
    dropped.extend(m.dropped.iter().map(|id| DroppedRow {
        fips: id,
        reason: "sink",
        detail: String::new(),
    }));
    dropped.sort_by(|a, b| a.fips.cmp(b.fips));
    run.csv("dropped.csv", |w| {
        write_rows(&["fips", "reason", "detail"], &dropped, w)
    })?;
    let dose_rows: Vec<DoseRow> = units
        .iter()
        .zip(&doses)
        .map(|(u, &cumulative_dose)| DoseRow {
            id: &u.id,
            cumulative_dose,
        })
        .collect();
    run.csv("doses.csv", |w| {
        write_rows(&["id", "cumulative_dose"], &dose_rows, w)
    })?;

    let summary = DesignSummary {
        n_counties_loaded: panel.counties.len() + panel.dropped.len(),
        n_missing_data: panel.dropped.len(),
        n_units: units.len(),
        n_sinks: d.n_sinks(),
        n_dropped_by_sinks: m.dropped.len(),
        n_pairs: pairs.len(),
        total_distance: pairs.iter().map(|p| p.distance).sum(),
        max_abs_standardized_difference: max_abs_difference(&balance),
        covariates: &names,
        exact_keys: &design.exact_keys,
        window_days: (design.treatment_end - design.treatment_start).num_days() as usize + 1,
    };
    run.json("design.json", &summary)?;
    run.finish()
}

fn max_abs_difference(rows: &[BalanceRow]) -> f64 {
    rows.iter()
        .map(|r| r.standardized_difference.abs())
        .fold(0.0, f64::max)
}

/// Writes a header row even when `rows` is empty.
pub(crate) fn write_rows<T: Serialize>(
    header: &[&str],
    rows: &[T],
    w: &mut Vec<u8>,
) -> pairdose::Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| pairdose::Error::Io {
        path: "<buffer>".into(),
        source: e,
    })?;
    Ok(())
}
