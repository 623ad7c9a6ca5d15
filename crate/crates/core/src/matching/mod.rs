//! Distance matrices, design penalties, sinks, and optimal nonbipartite
//! matching.

mod blossom;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MatchedPair;

/// Symmetric `n x n` distances over units followed by sinks.
/// `+inf` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    labels: Vec<String>,
    n_units: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix over units only. `entries` is row-major `n x n`.
    pub fn from_entries(labels: Vec<String>, entries: Vec<f64>) -> Result<Self> {
        let n = labels.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels need {} entries, got {}",
                n,
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::invalid(format!("nonzero diagonal at {}", labels[i])));
            }
            for j in 0..i {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b {
                    return Err(Error::invalid(format!(
                        "asymmetric entry ({}, {}): {a} vs {b}",
                        labels[i], labels[j]
                    )));
                }
                if a.is_nan() || a < 0.0 {
                    return Err(Error::invalid(format!(
                        "entry ({}, {}) must be nonnegative, got {a}",
                        labels[i], labels[j]
                    )));
                }
            }
        }
        Ok(DistanceMatrix {
            n_units: n,
            labels,
            entries,
        })
    }

    /// Builds a matrix from a function of index pairs `i < j`.
    pub fn from_fn(labels: Vec<String>, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = labels.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        DistanceMatrix {
            n_units: n,
            labels,
            entries,
        }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_sinks(&self) -> usize {
        self.n() - self.n_units
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn is_sink(&self, i: usize) -> bool {
        i >= self.n_units
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n() + j]
    }

    fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        let n = self.n();
        self.entries[i * n + j] += v;
        self.entries[j * n + i] += v;
    }

    /// Writes the matrix as CSV: a header of labels, then one row per label.
    /// Infinite entries are written as `inf`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.labels)?;
        let n = self.n();
        for i in 0..n {
            wr.write_record(self.entries[i * n..(i + 1) * n].iter().map(|v| fmt_f64(*v)))?;
        }
        wr.flush().map_err(|e| Error::Io {
            path: "<matrix>".into(),
            source: e,
        })?;
        Ok(())
    }

    /// Reads a matrix written by [`DistanceMatrix::write_csv`]. Labels
    /// starting with `sink_` after the last unit are treated as sinks.
    pub fn read_csv<R: Read>(r: R, path: &str) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let labels: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let n = labels.len();
        let mut entries = Vec::with_capacity(n * n);
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let line = row as u64 + 2;
            if rec.len() != n {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {n} fields, got {}", rec.len()),
                ));
            }
            for field in rec.iter() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("bad number {field:?}")))?;
                entries.push(v);
            }
        }
        let n_sinks = labels
            .iter()
            .rev()
            .take_while(|l| l.starts_with("sink_"))
            .count();
        let mut d = DistanceMatrix::from_entries(labels, entries)?;
        d.n_units = n - n_sinks;
        Ok(d)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    Sample,
    Identity,
    RankRobust,
}

/// Ridge added to the covariance diagonal before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    Off,
    /// `1e-8 * trace / p`.
    Default,
    Value(f64),
}

/// Replaces each value by its rank (1-based), averaging over ties.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Squared Mahalanobis distances `(x_i - x_j)' S^-1 (x_i - x_j)` between all
/// rows of `x`.
pub fn mahalanobis_distances(
    labels: Vec<String>,
    x: &[Vec<f64>],
    mode: CovarianceMode,
    ridge: Ridge,
) -> Result<DistanceMatrix> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid(
            "at least two units are needed for a distance matrix",
        ));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    let p = x[0].len();
    if let Some((i, row)) = x.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(Error::DimensionMismatch(format!(
            "unit {} has {} covariates, expected {p}",
            labels[i],
            row.len()
        )));
    }
    let mut data = DMatrix::from_fn(n, p, |i, k| x[i][k]);
    if mode == CovarianceMode::RankRobust {
        for k in 0..p {
            let col: Vec<f64> = data.column(k).iter().copied().collect();
            data.set_column(k, &DVector::from_vec(average_ranks(&col)));
        }
    }

    let white = match mode {
        CovarianceMode::Identity => data,
        CovarianceMode::Sample | CovarianceMode::RankRobust => {
            let mean = data.row_mean();
            let mut centered = data.clone();
            for mut row in centered.row_iter_mut() {
                row -= &mean;
            }
            let mut cov = centered.transpose() * &centered / (n as f64 - 1.0);
            let lambda = match ridge {
                Ridge::Off => 0.0,
                Ridge::Default => 1e-8 * cov.trace() / p as f64,
                Ridge::Value(v) => v,
            };
            for k in 0..p {
                cov[(k, k)] += lambda;
            }
            let max_diag = (0..p).map(|k| cov[(k, k)]).fold(0.0f64, f64::max);
            let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
            let l = chol.l();
            if (0..p).any(|k| l[(k, k)] * l[(k, k)] <= 1e-12 * max_diag) {
                return Err(Error::SingularCovariance);
            }
            // Rows of L^-1 x' are the whitened observations.
            let xt = data.transpose();
            let solved = l
                .solve_lower_triangular(&xt)
                .ok_or(Error::SingularCovariance)?;
            solved.transpose()
        }
    };

    let rows: Vec<Vec<f64>> = white
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    Ok(DistanceMatrix::from_fn(labels, |i, j| {
        rows[i]
            .iter()
            .zip(&rows[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    pub exact: f64,
    pub dose_gap: f64,
    pub min_gap: f64,
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties {
            exact: 0.0,
            dose_gap: 0.0,
            min_gap: 0.0,
        }
    }
}

/// Adds `exact` where exact-match keys differ and `dose_gap` where doses lie
/// closer than `min_gap`. Only unit-unit entries are touched.
pub fn apply_penalties(
    mut d: DistanceMatrix,
    exact_keys: &[Vec<String>],
    doses: &[f64],
    penalties: Penalties,
) -> Result<DistanceMatrix> {
    let n = d.n_units();
    if exact_keys.len() != n || doses.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} units but {} key rows and {} doses",
            exact_keys.len(),
            doses.len()
        )));
    }
    if !(penalties.exact >= 0.0 && penalties.dose_gap >= 0.0) {
        return Err(Error::invalid("penalties must be nonnegative"));
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut add = 0.0;
            if exact_keys[i] != exact_keys[j] {
                add += penalties.exact;
            }
            if (doses[i] - doses[j]).abs() < penalties.min_gap {
                add += penalties.dose_gap;
            }
            if add != 0.0 {
                d.add_sym(i, j, add);
            }
        }
    }
    Ok(d)
}

/// Number of sinks `add_sinks` appends for `n_units` units.
pub fn sink_count(n_units: usize, sink_fraction: f64) -> usize {
    let mut s = (sink_fraction * n_units as f64).round() as usize;
    if (n_units + s) % 2 == 1 {
        s += 1;
    }
    s
}

/// Appends sinks at distance 0 from every unit and `+inf` from each other.
pub fn add_sinks(d: DistanceMatrix, sink_fraction: f64) -> Result<DistanceMatrix> {
    if !(0.0..1.0).contains(&sink_fraction) {
        return Err(Error::invalid(format!(
            "sink fraction must lie in [0, 1), got {sink_fraction}"
        )));
    }
    if d.n_sinks() > 0 {
        return Err(Error::invalid("matrix already has sinks"));
    }
    let n0 = d.n();
    let s = sink_count(n0, sink_fraction);
    if s == 0 {
        return Ok(d);
    }
    let n = n0 + s;
    if n % 2 == 1 {
        return Err(Error::OddSize(n));
    }
    let mut labels = d.labels;
    labels.extend((0..s).map(|k| format!("sink_{k}")));
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            entries[i * n + j] = if i < n0 && j < n0 {
                d.entries[i * n0 + j]
            } else if i >= n0 && j >= n0 && i != j {
                f64::INFINITY
            } else {
                0.0
            };
        }
    }
    Ok(DistanceMatrix {
        labels,
        n_units: n0,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Index pairs `(i, j)` with `i < j`, sorted by `i`.
    pub pairs: Vec<(usize, usize)>,
    pub total_distance: f64,
    /// Units paired with a sink.
    pub dropped: Vec<String>,
}

/// Minimum-weight perfect matching. Forbidden (`+inf`) entries are left out
/// of the graph, so an optimum never uses one; if no perfect matching exists
/// over the finite entries the instance is infeasible.
pub fn optimal_nonbipartite_match(d: &DistanceMatrix) -> Result<MatchResult> {
    let n = d.n();
    if n % 2 == 1 {
        return Err(Error::OddSize(n));
    }
    if n == 0 {
        return Ok(MatchResult {
            pairs: vec![],
            total_distance: 0.0,
            dropped: vec![],
        });
    }
    if n > u32::MAX as usize / 2 {
        return Err(Error::invalid("instance too large"));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let v = d.get(i, j);
            if v.is_finite() {
                edges.push((i as u32, j as u32, -v));
            }
        }
    }
    let mut solver = blossom::Solver::new(n, &edges, true);
    solver.warm_start();
    let mate = solver.solve();
    drop(edges);

    let mut pairs = Vec::with_capacity(n / 2);
    for (i, m) in mate.iter().enumerate() {
        match m {
            None => return Err(Error::Infeasible),
            Some(j) if i < *j => pairs.push((i, *j)),
            Some(_) => {}
        }
    }
    let total_distance = pairs.iter().map(|&(i, j)| d.get(i, j)).sum();
    if !f64::is_finite(total_distance) {
        return Err(Error::Infeasible);
    }
    let mut dropped = Vec::new();
    for &(i, j) in &pairs {
        match (d.is_sink(i), d.is_sink(j)) {
            (false, true) => dropped.push(d.labels[i].clone()),
            (true, false) => dropped.push(d.labels[j].clone()),
            _ => {}
        }
    }
    Ok(MatchResult {
        pairs,
        total_distance,
        dropped,
    })
}

/// Turns a matching into pairs of real units; `doses[i]` is the (cumulative)
/// dose of the `i`-th unit label.
pub fn extract_pairs(
    m: &MatchResult,
    d: &DistanceMatrix,
    doses: &[f64],
) -> Result<Vec<MatchedPair>> {
    if doses.len() != d.n_units() {
        return Err(Error::DimensionMismatch(format!(
            "{} doses for {} units",
            doses.len(),
            d.n_units()
        )));
    }
    Ok(m.pairs
        .iter()
        .filter(|&&(i, j)| !d.is_sink(i) && !d.is_sink(j))
        .map(|&(i, j)| {
            MatchedPair::ordered(
                (&d.labels[i], doses[i]),
                (&d.labels[j], doses[j]),
                d.get(i, j),
            )
        })
        .collect())
}

/// Writes pairs as CSV with columns `unit_lo,unit_hi,distance,dose_lo,dose_hi`.
pub fn write_pairs_csv<W: Write>(pairs: &[MatchedPair], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in pairs {
        wr.serialize(p)?;
    }
    wr.flush().map_err(|e| Error::Io {
        path: "<pairs>".into(),
        source: e,
    })?;
    Ok(())
}

/// Reads pairs written by [`write_pairs_csv`]. Lines starting with `#` are
/// skipped.
pub fn read_pairs_csv<R: Read>(r: R, path: &str) -> Result<Vec<MatchedPair>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for (row, rec) in rd.deserialize::<MatchedPair>().enumerate() {
        let p = rec.map_err(|e| Error::parse(path, row as u64 + 2, e.to_string()))?;
        if p.unit_lo == p.unit_hi || !(p.dose_lo <= p.dose_hi) {
            return Err(Error::parse(
                path,
                row as u64 + 2,
                "pair must join two units with dose_lo <= dose_hi",
            ));
        }
        out.push(p);
    }
    Ok(out)
}
