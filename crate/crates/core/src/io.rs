//! County panel files: covariates, daily mobility, cases, deaths, and
//! adjacency. Schemas are described in `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::AdjacencyGraph;
use crate::matching::fmt_f64;
use crate::model::{Series, UnitRecord};

/// Numeric columns of `covariates.csv`, after `fips,name`.
pub const COVARIATE_COLUMNS: [&str; 13] = [
    "female",
    "above_65",
    "black",
    "hispanic",
    "driving_alone",
    "smoking",
    "flu_vaccination",
    "some_college",
    "membership_associations",
    "rural",
    "below_poverty",
    "population_density",
    "population",
];

const POPULATION: usize = 12;
const PER: f64 = 100_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyRecord {
    pub fips: String,
    pub name: String,
    /// Values in [`COVARIATE_COLUMNS`] order.
    pub covariates: Vec<f64>,
    pub mobility: Vec<f64>,
    /// Raw daily counts.
    pub cases: Vec<f64>,
    pub deaths: Vec<f64>,
    pub cases_per_100k: Vec<f64>,
    pub deaths_per_100k: Vec<f64>,
}

impl CountyRecord {
    pub fn new(
        fips: String,
        name: String,
        covariates: Vec<f64>,
        mobility: Vec<f64>,
        cases: Vec<f64>,
        deaths: Vec<f64>,
    ) -> Result<Self> {
        if covariates.len() != COVARIATE_COLUMNS.len() {
            return Err(Error::DimensionMismatch(format!(
                "county {fips}: {} covariates, expected {}",
                covariates.len(),
                COVARIATE_COLUMNS.len()
            )));
        }
        let pop = covariates[POPULATION];
        if !(pop > 0.0 && pop.is_finite()) {
            return Err(Error::invalid(format!(
                "county {fips}: population must be positive, got {pop}"
            )));
        }
        let scale = |xs: &[f64]| xs.iter().map(|&x| x * PER / pop).collect();
        Ok(CountyRecord {
            cases_per_100k: scale(&cases),
            deaths_per_100k: scale(&deaths),
            fips,
            name,
            covariates,
            mobility,
            cases,
            deaths,
        })
    }

    pub fn population(&self) -> f64 {
        self.covariates[POPULATION]
    }

    pub fn covariate(&self, name: &str) -> Option<f64> {
        COVARIATE_COLUMNS
            .iter()
            .position(|c| *c == name)
            .map(|k| self.covariates[k])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedUnit {
    pub fips: String,
    /// Source files the unit is missing from.
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    /// Consecutive days shared by every daily series.
    pub dates: Vec<NaiveDate>,
    /// Joined counties sorted by FIPS code.
    pub counties: Vec<CountyRecord>,
    pub dropped: Vec<DroppedUnit>,
}

impl Panel {
    pub fn day_index(&self, date: NaiveDate) -> Result<usize> {
        let first = *self.dates.first().ok_or(Error::EmptyDataset)?;
        let k = (date - first).num_days();
        if k < 0 || k as usize >= self.dates.len() {
            return Err(Error::invalid(format!(
                "date {date} outside panel range {first}..={}",
                self.dates[self.dates.len() - 1]
            )));
        }
        Ok(k as usize)
    }

    pub fn county(&self, fips: &str) -> Option<&CountyRecord> {
        self.counties.iter().find(|c| c.fips == fips)
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(false)
        .flexible(true)
        .from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_num(s: &str, path: &str, line: u64, column: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| {
        Error::parse(
            path,
            line,
            format!("column {column}: cannot parse {s:?} as a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(Error::parse(
            path,
            line,
            format!("column {column}: non-finite value {s:?}"),
        ));
    }
    Ok(v)
}

type CovariateRow = (String, Vec<f64>);

/// Reads `covariates.csv`, keyed by FIPS code.
pub fn read_covariates<R: Read>(r: R, path: &str) -> Result<BTreeMap<String, CovariateRow>> {
    let mut rows = reader(r).into_records();
    let header = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))??;
    let expected: Vec<&str> = ["fips", "name"]
        .into_iter()
        .chain(COVARIATE_COLUMNS)
        .collect();
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::parse(
            path,
            line_of(&header),
            format!("header must be {}", expected.join(",")),
        ));
    }
    let mut out = BTreeMap::new();
    for rec in rows {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != expected.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        let fips = rec[0].trim().to_string();
        if fips.is_empty() {
            return Err(Error::parse(path, line, "empty fips"));
        }
        let values = (2..rec.len())
            .map(|k| parse_num(&rec[k], path, line, expected[k]))
            .collect::<Result<Vec<_>>>()?;
        if !(values[POPULATION] > 0.0) {
            return Err(Error::parse(path, line, "population must be positive"));
        }
        if out
            .insert(fips.clone(), (rec[1].trim().to_string(), values))
            .is_some()
        {
            return Err(Error::parse(path, line, format!("duplicate fips {fips}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub dates: Vec<NaiveDate>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

/// Reads a daily file: `fips` then one column per consecutive ISO date.
pub fn read_daily<R: Read>(r: R, path: &str) -> Result<DailySeries> {
    let mut rows = reader(r).into_records();
    let header = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))??;
    let hline = line_of(&header);
    if header.get(0).map(str::trim) != Some("fips") {
        return Err(Error::parse(path, hline, "first column must be fips"));
    }
    let dates = header
        .iter()
        .skip(1)
        .map(|s| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|_| Error::parse(path, hline, format!("column {s:?} is not an ISO date")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dates.is_empty() {
        return Err(Error::parse(path, hline, "no date columns"));
    }
    if let Some(w) = dates.windows(2).find(|w| w[1] != w[0] + Duration::days(1)) {
        return Err(Error::parse(
            path,
            hline,
            format!("dates must be consecutive days; {} follows {}", w[1], w[0]),
        ));
    }
    let mut out = BTreeMap::new();
    for rec in rows {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != header.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let fips = rec[0].trim().to_string();
        let values = (1..rec.len())
            .map(|k| parse_num(&rec[k], path, line, &header[k]))
            .collect::<Result<Vec<_>>>()?;
        if out.insert(fips.clone(), values).is_some() {
            return Err(Error::parse(path, line, format!("duplicate fips {fips}")));
        }
    }
    Ok(DailySeries { dates, rows: out })
}

pub struct PanelPaths<'a> {
    pub covariates: &'a Path,
    pub mobility: &'a Path,
    pub cases: &'a Path,
    pub deaths: &'a Path,
}

/// Loads and inner-joins the four panel files. Counties missing from any
/// file are listed in `dropped`.
pub fn load_panel(paths: &PanelPaths) -> Result<Panel> {
    let name = |p: &Path| p.display().to_string();
    let covs = read_covariates(open(paths.covariates)?, &name(paths.covariates))?;
    let mut daily = Vec::new();
    for (label, p) in [
        ("mobility", paths.mobility),
        ("cases", paths.cases),
        ("deaths", paths.deaths),
    ] {
        daily.push((label, name(p), read_daily(open(p)?, &name(p))?));
    }
    let dates = daily[0].2.dates.clone();
    for (_, path, s) in &daily[1..] {
        if s.dates != dates {
            return Err(Error::parse(
                path.clone(),
                1,
                format!("date columns do not align with {}", daily[0].1),
            ));
        }
    }
    join(
        covs,
        daily.into_iter().map(|(l, _, s)| (l, s.rows)).collect(),
        dates,
    )
}

fn join(
    covs: BTreeMap<String, CovariateRow>,
    mut daily: Vec<(&str, BTreeMap<String, Vec<f64>>)>,
    dates: Vec<NaiveDate>,
) -> Result<Panel> {
    let mut all: BTreeSet<String> = covs.keys().cloned().collect();
    for (_, rows) in &daily {
        all.extend(rows.keys().cloned());
    }
    let mut counties = Vec::new();
    let mut dropped = Vec::new();
    for fips in all {
        let mut missing = Vec::new();
        if !covs.contains_key(&fips) {
            missing.push("covariates".to_string());
        }
        for (label, rows) in &daily {
            if !rows.contains_key(&fips) {
                missing.push(label.to_string());
            }
        }
        if !missing.is_empty() {
            dropped.push(DroppedUnit { fips, missing });
            continue;
        }
        let (name, values) = covs[&fips].clone();
        let mut take = |k: usize| daily[k].1.remove(&fips).unwrap_or_default();
        let (mobility, cases, deaths) = (take(0), take(1), take(2));
        counties.push(CountyRecord::new(
            fips, name, values, mobility, cases, deaths,
        )?);
    }
    Ok(Panel {
        dates,
        counties,
        dropped,
    })
}

pub fn write_covariates<W: Write>(counties: &[CountyRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["fips", "name"].into_iter().chain(COVARIATE_COLUMNS))?;
    for c in counties {
        let mut row = vec![c.fips.clone(), c.name.clone()];
        row.extend(c.covariates.iter().map(|&v| fmt_f64(v)));
        wr.write_record(&row)?;
    }
    flush(wr)
}

pub fn write_daily<'a, W: Write>(
    dates: &[NaiveDate],
    rows: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    w: W,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["fips".to_string()];
    header.extend(dates.iter().map(|d| d.format("%Y-%m-%d").to_string()));
    wr.write_record(&header)?;
    for (fips, values) in rows {
        let mut row = vec![fips.to_string()];
        row.extend(values.iter().map(|&v| fmt_f64(v)));
        wr.write_record(&row)?;
    }
    flush(wr)
}

fn flush<W: Write>(mut wr: csv::Writer<W>) -> Result<()> {
    wr.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

/// A daily series file name and the county field it holds.
pub type SeriesColumn = (&'static str, fn(&CountyRecord) -> &[f64]);

/// Writes `covariates.csv`, `mobility.csv`, `cases.csv` and `deaths.csv`
/// (raw counts) into `dir`.
pub fn write_panel(panel: &Panel, dir: &Path) -> Result<()> {
    let c = &panel.counties;
    write_covariates(c, create(&dir.join("covariates.csv"))?)?;
    let series: [SeriesColumn; 3] = [
        ("mobility.csv", |c| &c.mobility),
        ("cases.csv", |c| &c.cases),
        ("deaths.csv", |c| &c.deaths),
    ];
    for (file, get) in series {
        write_daily(
            &panel.dates,
            c.iter().map(|r| (r.fips.as_str(), get(r))),
            create(&dir.join(file))?,
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeSource {
    Cases,
    Deaths,
}

impl OutcomeSource {
    pub fn per_100k(self, c: &CountyRecord) -> &[f64] {
        match self {
            OutcomeSource::Cases => &c.cases_per_100k,
            OutcomeSource::Deaths => &c.deaths_per_100k,
        }
    }

    fn raw(self, c: &CountyRecord) -> &[f64] {
        match self {
            OutcomeSource::Cases => &c.cases,
            OutcomeSource::Deaths => &c.deaths,
        }
    }
}

/// `n` consecutive week starts beginning at `first`, which must be a Monday.
pub fn week_starts(first: NaiveDate, n: usize) -> Result<Vec<NaiveDate>> {
    if first.weekday() != Weekday::Mon {
        return Err(Error::invalid(format!(
            "week start {first} is a {}, not a Monday",
            first.weekday()
        )));
    }
    Ok((0..n).map(|k| first + Duration::weeks(k as i64)).collect())
}

/// Sum over the closed-open week `[start, start + 7)`, per 100,000.
fn weekly_sum(
    c: &CountyRecord,
    source: OutcomeSource,
    dates: &[NaiveDate],
    start: NaiveDate,
) -> Result<f64> {
    let first = dates[0];
    let k = (start - first).num_days();
    if k < 0 || k as usize + 7 > dates.len() {
        return Err(Error::invalid(format!(
            "week starting {start} outside panel range {first}..={}",
            dates[dates.len() - 1]
        )));
    }
    let raw: f64 = source.raw(c)[k as usize..k as usize + 7].iter().sum();
    Ok(raw * PER / c.population())
}

/// Weekly cases per 100,000 for every week start, followed by weekly
/// deaths per 100,000.
pub fn weekly_outcome_covariates(
    c: &CountyRecord,
    dates: &[NaiveDate],
    weeks: &[NaiveDate],
) -> Result<Vec<f64>> {
    if dates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::with_capacity(2 * weeks.len());
    for source in [OutcomeSource::Cases, OutcomeSource::Deaths] {
        for &w in weeks {
            if w.weekday() != Weekday::Mon {
                return Err(Error::invalid(format!("week start {w} is not a Monday")));
            }
            out.push(weekly_sum(c, source, dates, w)?);
        }
    }
    Ok(out)
}

/// Column names matching [`weekly_outcome_covariates`].
pub fn weekly_covariate_names(weeks: &[NaiveDate]) -> Vec<String> {
    ["cases", "deaths"]
        .iter()
        .flat_map(|s| {
            weeks
                .iter()
                .map(move |w| format!("{s}_week_{}", w.format("%Y-%m-%d")))
        })
        .collect()
}

/// Matching covariates, exact keys, and trajectories for each county.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub outcome: OutcomeSource,
    /// Week starts for weekly case and death covariates.
    pub weeks: Vec<NaiveDate>,
    /// Covariate columns used as exact-match keys.
    pub exact_keys: Vec<String>,
}

/// Builds unit records: the 13 static covariates then the weekly
/// covariates, the mobility trajectory as dose, and the chosen outcome per
/// 100,000 as outcome trajectory. Returns the covariate names alongside.
pub fn unit_records(panel: &Panel, spec: &UnitSpec) -> Result<(Vec<UnitRecord>, Vec<String>)> {
    for k in &spec.exact_keys {
        if !COVARIATE_COLUMNS.contains(&k.as_str()) {
            return Err(Error::invalid(format!(
                "unknown exact-match covariate {k:?}"
            )));
        }
    }
    let mut names: Vec<String> = COVARIATE_COLUMNS.iter().map(|s| s.to_string()).collect();
    names.extend(weekly_covariate_names(&spec.weeks));
    let units = panel
        .counties
        .iter()
        .map(|c| {
            let mut covariates = c.covariates.clone();
            covariates.extend(weekly_outcome_covariates(c, &panel.dates, &spec.weeks)?);
            let exact_keys = spec
                .exact_keys
                .iter()
                .map(|k| fmt_f64(c.covariate(k).unwrap_or(f64::NAN)))
                .collect();
            Ok(UnitRecord {
                id: c.fips.clone(),
                covariates,
                exact_keys,
                dose: Series::Trajectory(c.mobility.clone()),
                outcome: Series::Trajectory(spec.outcome.per_100k(c).to_vec()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((units, names))
}

/// Reads `adjacency.csv` (`fips_a,fips_b`). Ids not in `known` are kept and
/// reported, as are dropped self-loops. An empty file is an empty graph.
pub fn read_adjacency<R: Read>(
    r: R,
    path: &str,
    known: Option<&HashSet<String>>,
) -> Result<(AdjacencyGraph, Vec<String>)> {
    let mut rows = reader(r).into_records();
    let Some(header) = rows.next() else {
        return Ok((AdjacencyGraph::empty(), Vec::new()));
    };
    let header = header?;
    if header.iter().map(str::trim).ne(["fips_a", "fips_b"]) {
        return Err(Error::parse(
            path,
            line_of(&header),
            "header must be fips_a,fips_b",
        ));
    }
    let mut edges = Vec::new();
    for rec in rows {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                line_of(&rec),
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        edges.push((rec[0].trim().to_string(), rec[1].trim().to_string()));
    }
    let (g, mut warnings) = AdjacencyGraph::from_edges(&edges);
    if let Some(known) = known {
        let unknown: BTreeSet<&str> = g
            .ids()
            .iter()
            .map(String::as_str)
            .filter(|id| !known.contains(*id))
            .collect();
        warnings.extend(
            unknown
                .into_iter()
                .map(|id| format!("adjacency id {id} is not in the panel")),
        );
    }
    Ok((g, warnings))
}

pub fn load_adjacency(
    path: &Path,
    known: Option<&HashSet<String>>,
) -> Result<(AdjacencyGraph, Vec<String>)> {
    read_adjacency(open(path)?, &path.display().to_string(), known)
}

pub fn write_adjacency<W: Write>(g: &AdjacencyGraph, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["fips_a", "fips_b"])?;
    for (a, b) in g.edges() {
        wr.write_record([a, b])?;
    }
    flush(wr)
}

/// Per-unit scalar outcomes, `id,outcome`.
pub fn read_outcomes<R: Read>(r: R, path: &str) -> Result<HashMap<String, f64>> {
    let mut rows = reader(r).into_records();
    let header = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))??;
    if header.iter().map(str::trim).ne(["id", "outcome"]) {
        return Err(Error::parse(
            path,
            line_of(&header),
            "header must be id,outcome",
        ));
    }
    let mut out = HashMap::new();
    for rec in rows {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        let v = parse_num(&rec[1], path, line, "outcome")?;
        if out.insert(id.clone(), v).is_some() {
            return Err(Error::parse(path, line, format!("duplicate id {id}")));
        }
    }
    Ok(out)
}

/// Writes outcomes sorted by id.
pub fn write_outcomes<W: Write>(outcomes: &HashMap<String, f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["id", "outcome"])?;
    let sorted: BTreeMap<_, _> = outcomes.iter().collect();
    for (id, v) in sorted {
        wr.write_record([id.clone(), fmt_f64(*v)])?;
    }
    flush(wr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn county(fips: &str, pop: f64, days: usize) -> CountyRecord {
        let mut cov = vec![0.5; 13];
        cov[POPULATION] = pop;
        CountyRecord::new(
            fips.into(),
            format!("County {fips}"),
            cov,
            vec![0.0; days],
            vec![0.0; days],
            vec![0.0; days],
        )
        .unwrap()
    }

    const COVS: &str = "fips,name,female,above_65,black,hispanic,driving_alone,smoking,flu_vaccination,some_college,membership_associations,rural,below_poverty,population_density,population\n\
        01001,A,0.5,0.2,0.1,0.05,0.8,0.2,0.4,0.5,12,1,0.15,90,250000\n\
        01003,B,0.5,0.2,0.1,0.05,0.8,0.2,0.4,0.5,12,0,0.15,90,100000\n";

    #[test]
    fn per_100k_scaling() {
        let mut c = county("1", 250_000.0, 7);
        c = CountyRecord::new(
            c.fips,
            c.name,
            c.covariates,
            c.mobility,
            vec![0.0; 7],
            vec![5.0, 0., 0., 0., 0., 0., 0.],
        )
        .unwrap();
        let weeks = week_starts(d("2020-04-20"), 1).unwrap();
        let dates: Vec<_> = (0..7)
            .map(|k| d("2020-04-20") + Duration::days(k))
            .collect();
        let v = weekly_outcome_covariates(&c, &dates, &weeks).unwrap();
        assert_eq!(v, vec![0.0, 2.0]);
    }

    #[test]
    fn week_boundary_attribution() {
        let dates: Vec<_> = (0..14)
            .map(|k| d("2020-04-20") + Duration::days(k))
            .collect();
        let mut deaths = vec![0.0; 14];
        deaths[7] = 1.0; // Monday 2020-04-27
        let c = county("1", 100_000.0, 14);
        let c = CountyRecord::new(
            c.fips,
            c.name,
            c.covariates,
            c.mobility,
            vec![0.0; 14],
            deaths,
        )
        .unwrap();
        let weeks = week_starts(d("2020-04-20"), 2).unwrap();
        assert_eq!(
            weekly_outcome_covariates(&c, &dates, &weeks).unwrap(),
            vec![0.0, 0.0, 0.0, 1.0]
        );
        assert!(
            weekly_outcome_covariates(&c, &dates, &week_starts(d("2020-04-27"), 2).unwrap())
                .is_err()
        );
        assert!(week_starts(d("2020-04-21"), 1).is_err());
    }

    #[test]
    fn ten_weeks_give_twenty_covariates() {
        let dates: Vec<_> = (0..70)
            .map(|k| d("2020-04-20") + Duration::days(k))
            .collect();
        let c = county("1", 1000.0, 70);
        let weeks = week_starts(d("2020-04-20"), 10).unwrap();
        let v = weekly_outcome_covariates(&c, &dates, &weeks).unwrap();
        assert_eq!(v, vec![0.0; 20]);
        assert_eq!(weekly_covariate_names(&weeks).len(), 20);
        assert_eq!(weekly_covariate_names(&weeks)[10], "deaths_week_2020-04-20");
    }

    #[test]
    fn covariates_parse_and_reject() {
        let m = read_covariates(COVS.as_bytes(), "c.csv").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["01001"].1[POPULATION], 250000.0);
        let bad = COVS.replace("0.8,0.2,0.4,0.5,12,0", "0.8,x,0.4,0.5,12,0");
        let err = read_covariates(bad.as_bytes(), "c.csv")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("c.csv:3:"), "{err}");
        assert!(read_covariates("fips,name\n".as_bytes(), "c.csv").is_err());
    }

    #[test]
    fn daily_rejects_gaps_and_missing_key() {
        assert!(read_daily("fips,2020-04-20,2020-04-22\n1,0,0\n".as_bytes(), "m.csv").is_err());
        assert!(read_daily("id,2020-04-20\n1,0\n".as_bytes(), "m.csv").is_err());
        let e = read_daily("fips,2020-04-20\n1,0\n2\n".as_bytes(), "m.csv")
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("m.csv:3:"), "{e}");
    }

    #[test]
    fn join_drops_incomplete_units() {
        let covs = read_covariates(COVS.as_bytes(), "c").unwrap();
        let s = "fips,2020-04-20,2020-04-21\n01001,0.1,0.2\n01003,0.1,0.2\n";
        let partial = "fips,2020-04-20,2020-04-21\n01001,0.1,0.2\n";
        let rows = |t: &str| read_daily(t.as_bytes(), "x").unwrap();
        let p = join(
            covs,
            vec![
                ("mobility", rows(partial).rows),
                ("cases", rows(s).rows),
                ("deaths", rows(s).rows),
            ],
            rows(s).dates,
        )
        .unwrap();
        assert_eq!(p.counties.len(), 1);
        assert_eq!(
            p.dropped,
            vec![DroppedUnit {
                fips: "01003".into(),
                missing: vec!["mobility".into()]
            }]
        );
    }

    #[test]
    fn adjacency_symmetry_loops_and_unknowns() {
        let (g, w) = read_adjacency("".as_bytes(), "a", None).unwrap();
        assert_eq!(g.n_nodes(), 0);
        assert!(w.is_empty());
        let known: HashSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let (g, w) = read_adjacency(
            "fips_a,fips_b\na,b\nb,a\nc,c\nb,z\n".as_bytes(),
            "a",
            Some(&known),
        )
        .unwrap();
        assert!(g.has_edge("b", "a") && g.has_edge("a", "b"));
        assert_eq!(g.n_edges(), 2);
        assert_eq!(w.len(), 2);
        assert!(w[0].contains("self-loop"));
        assert!(w[1].contains("z"));
    }

    #[test]
    fn outcomes_round_trip() {
        let m: HashMap<String, f64> = [("b".to_string(), 0.1), ("a".to_string(), -3.25)]
            .into_iter()
            .collect();
        let mut buf = Vec::new();
        write_outcomes(&m, &mut buf).unwrap();
        assert_eq!(read_outcomes(buf.as_slice(), "o").unwrap(), m);
    }
}
