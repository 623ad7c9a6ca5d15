//! Shared domain types: study units, matched pairs, dose-response
//! hypotheses, and covariate-balance diagnostics.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A treatment dose or outcome: either one scalar or a daily trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Scalar(f64),
    Trajectory(Vec<f64>),
}

impl Series {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            Series::Scalar(v) => Some(*v),
            Series::Trajectory(_) => None,
        }
    }

    pub fn trajectory(&self) -> Option<&[f64]> {
        match self {
            Series::Scalar(_) => None,
            Series::Trajectory(t) => Some(t),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Series::Scalar(v) => std::slice::from_ref(v),
            Series::Trajectory(t) => t,
        }
    }
}

/// One study unit (e.g. a county).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: String,
    pub covariates: Vec<f64>,
    /// Categorical tokens that pairs must share (e.g. the rural flag).
    pub exact_keys: Vec<String>,
    pub dose: Series,
    pub outcome: Series,
}

/// Two units paired by the design. `unit_lo` carries the smaller dose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub unit_lo: String,
    pub unit_hi: String,
    pub distance: f64,
    pub dose_lo: f64,
    pub dose_hi: f64,
}

impl MatchedPair {
    /// Orders two units by dose; equal doses put the lexicographically
    /// smaller id first.
    pub fn ordered(a: (&str, f64), b: (&str, f64), distance: f64) -> Self {
        let a_first = a.1 < b.1 || (a.1 == b.1 && a.0 <= b.0);
        let (lo, hi) = if a_first { (a, b) } else { (b, a) };
        MatchedPair {
            unit_lo: lo.0.to_string(),
            unit_hi: hi.0.to_string(),
            distance,
            dose_lo: lo.1,
            dose_hi: hi.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Null,
    Proportional,
    Kink,
    /// Kink model acting on the log of the outcome.
    KinkLog,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Null => "null",
            Family::Proportional => "proportional",
            Family::Kink => "kink",
            Family::KinkLog => "kink_log",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Log,
}

impl Link {
    /// Maps an outcome onto the analysis scale. Returns `None` when the log
    /// link meets a nonpositive argument.
    pub fn apply(self, y: f64, log_offset: f64) -> Option<f64> {
        match self {
            Link::Identity => Some(y),
            Link::Log => {
                let arg = y + log_offset;
                (arg > 0.0).then(|| arg.ln())
            }
        }
    }

    pub fn invert(self, v: f64, log_offset: f64) -> f64 {
        match self {
            Link::Identity => v,
            Link::Log => v.exp() - log_offset,
        }
    }
}

/// A parametric contrast `f(z; z*, theta) = Y(z) - Y(z*)` on the link scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseHypothesis {
    pub family: Family,
    /// Activation threshold; `f64::INFINITY` disables the effect.
    pub tau: f64,
    pub beta: f64,
    pub reference_dose: f64,
    pub link: Link,
    pub log_offset: f64,
}

impl Default for DoseResponseHypothesis {
    fn default() -> Self {
        Self::null()
    }
}

impl DoseResponseHypothesis {
    pub fn null() -> Self {
        DoseResponseHypothesis {
            family: Family::Null,
            tau: f64::INFINITY,
            beta: 0.0,
            reference_dose: 0.0,
            link: Link::Identity,
            log_offset: 1.0,
        }
    }

    pub fn kink(tau: f64, beta: f64) -> Self {
        DoseResponseHypothesis {
            family: Family::Kink,
            tau,
            beta,
            ..Self::null()
        }
    }

    pub fn kink_log(tau: f64, beta: f64) -> Self {
        DoseResponseHypothesis {
            family: Family::KinkLog,
            tau,
            beta,
            link: Link::Log,
            ..Self::null()
        }
    }

    pub fn proportional(beta: f64) -> Self {
        DoseResponseHypothesis {
            family: Family::Proportional,
            beta,
            ..Self::null()
        }
    }

    pub fn with_reference(mut self, reference_dose: f64) -> Self {
        self.reference_dose = reference_dose;
        self
    }

    pub fn with_link(mut self, link: Link, log_offset: f64) -> Self {
        self.link = link;
        self.log_offset = log_offset;
        self
    }

    /// Same family and link, different parameters.
    pub fn at(mut self, tau: f64, beta: f64) -> Self {
        self.tau = tau;
        self.beta = beta;
        self
    }

    /// The scale on which `f` acts. `KinkLog` always uses the log link.
    pub fn effective_link(&self) -> Link {
        match self.family {
            Family::KinkLog => Link::Log,
            _ => self.link,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::invalid(format!(
                "beta must be finite, got {}",
                self.beta
            )));
        }
        if self.tau.is_nan() || !self.reference_dose.is_finite() {
            return Err(Error::invalid("tau and reference dose must be numbers"));
        }
        if !(self.log_offset >= 0.0) {
            return Err(Error::invalid("log offset must be nonnegative"));
        }
        if matches!(self.family, Family::Kink | Family::KinkLog) && self.tau < self.reference_dose {
            return Err(Error::invalid(format!(
                "kink threshold {} lies below the reference dose {}",
                self.tau, self.reference_dose
            )));
        }
        Ok(())
    }
}

/// Evaluates `f(z; z*, theta)`.
pub fn evaluate_model(h: &DoseResponseHypothesis, z: f64) -> f64 {
    match h.family {
        Family::Null => 0.0,
        Family::Proportional => h.beta * (z - h.reference_dose),
        Family::Kink | Family::KinkLog => {
            if z <= h.tau {
                0.0
            } else {
                h.beta * (z - h.tau)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    CovariateLengthMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    ExactKeyCountMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    TrajectoryLengthMismatch {
        id: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    MixedSeriesKinds {
        id: String,
        field: &'static str,
    },
    NonFinite {
        id: String,
        field: &'static str,
    },
    DuplicateId {
        id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CovariateLengthMismatch { id, expected, found } => write!(
                f,
                "covariate length mismatch: unit {id} has {found}, expected {expected}"
            ),
            Violation::ExactKeyCountMismatch { id, expected, found } => write!(
                f,
                "exact key count mismatch: unit {id} has {found}, expected {expected}"
            ),
            Violation::TrajectoryLengthMismatch { id, field, expected, found } => write!(
                f,
                "trajectory length mismatch: unit {id} {field} has {found} days, expected {expected}"
            ),
            Violation::MixedSeriesKinds { id, field } => {
                write!(f, "mixed scalar/trajectory {field}: unit {id}")
            }
            Violation::NonFinite { id, field } => write!(f, "non-finite value in {field}: unit {id}"),
            Violation::DuplicateId { id } => write!(f, "duplicate id: {id}"),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the dataset-level invariants; the dataset is accepted iff the
/// returned report is empty.
pub fn validate_dataset(units: &[UnitRecord]) -> Result<ValidationReport> {
    let first = units.first().ok_or(Error::EmptyDataset)?;
    let mut report = ValidationReport::default();
    let n_cov = first.covariates.len();
    let n_keys = first.exact_keys.len();
    let mut seen = HashSet::new();

    let shape = |s: &Series| match s {
        Series::Scalar(_) => None,
        Series::Trajectory(t) => Some(t.len()),
    };
    let dose_shape = shape(&first.dose);
    let outcome_shape = shape(&first.outcome);

    for u in units {
        if !seen.insert(u.id.as_str()) {
            report
                .violations
                .push(Violation::DuplicateId { id: u.id.clone() });
        }
        if u.covariates.len() != n_cov {
            report.violations.push(Violation::CovariateLengthMismatch {
                id: u.id.clone(),
                expected: n_cov,
                found: u.covariates.len(),
            });
        }
        if u.exact_keys.len() != n_keys {
            report.violations.push(Violation::ExactKeyCountMismatch {
                id: u.id.clone(),
                expected: n_keys,
                found: u.exact_keys.len(),
            });
        }
        if u.covariates.iter().any(|v| !v.is_finite()) {
            report.violations.push(Violation::NonFinite {
                id: u.id.clone(),
                field: "covariates",
            });
        }
        for (field, series, expected) in [
            ("dose", &u.dose, dose_shape),
            ("outcome", &u.outcome, outcome_shape),
        ] {
            match (shape(series), expected) {
                (None, None) => {}
                (Some(found), Some(expected)) if found != expected => {
                    report.violations.push(Violation::TrajectoryLengthMismatch {
                        id: u.id.clone(),
                        field,
                        expected,
                        found,
                    })
                }
                (Some(_), Some(_)) => {}
                _ => report.violations.push(Violation::MixedSeriesKinds {
                    id: u.id.clone(),
                    field,
                }),
            }
            if series.values().iter().any(|v| !v.is_finite()) {
                report.violations.push(Violation::NonFinite {
                    id: u.id.clone(),
                    field,
                });
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_lo: f64,
    pub mean_hi: f64,
    pub standardized_difference: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Standardized mean difference between the lower-dose and higher-dose
/// members of each pair, one row per covariate. The pooled SD is
/// `sqrt((s_lo^2 + s_hi^2) / 2)` with sample variances.
pub fn standardized_differences(
    pairs: &[MatchedPair],
    units: &[UnitRecord],
    covariate_names: &[String],
) -> Result<Vec<BalanceRow>> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let by_id: HashMap<&str, &UnitRecord> = units.iter().map(|u| (u.id.as_str(), u)).collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownUnit(id.to_string()))
    };
    let mut lo_units = Vec::with_capacity(pairs.len());
    let mut hi_units = Vec::with_capacity(pairs.len());
    for p in pairs {
        lo_units.push(lookup(&p.unit_lo)?);
        hi_units.push(lookup(&p.unit_hi)?);
    }
    let mut rows = Vec::with_capacity(covariate_names.len());
    for (k, name) in covariate_names.iter().enumerate() {
        let column = |us: &[&UnitRecord]| -> Result<Vec<f64>> {
            us.iter()
                .map(|u| {
                    u.covariates.get(k).copied().ok_or_else(|| {
                        Error::DimensionMismatch(format!("unit {} lacks covariate {name}", u.id))
                    })
                })
                .collect()
        };
        let lo = column(&lo_units)?;
        let hi = column(&hi_units)?;
        let (mean_lo, var_lo) = mean_var(&lo);
        let (mean_hi, var_hi) = mean_var(&hi);
        let pooled = ((var_lo + var_hi) / 2.0).sqrt();
        let diff = mean_hi - mean_lo;
        let standardized_difference = if diff == 0.0 {
            0.0
        } else if pooled == 0.0 {
            f64::INFINITY.copysign(diff)
        } else {
            diff / pooled
        };
        rows.push(BalanceRow {
            covariate: name.clone(),
            mean_lo,
            mean_hi,
            standardized_difference,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(id: &str, cov: Vec<f64>) -> UnitRecord {
        UnitRecord {
            id: id.into(),
            covariates: cov,
            exact_keys: vec!["0".into()],
            dose: Series::Scalar(0.5),
            outcome: Series::Scalar(1.0),
        }
    }

    #[test]
    fn well_formed_dataset_has_empty_report() {
        let units: Vec<_> = (0..4)
            .map(|i| unit(&format!("u{i}"), vec![1.0, 2.0, 3.0]))
            .collect();
        assert!(validate_dataset(&units).unwrap().is_valid());
    }

    #[test]
    fn covariate_length_mismatch_is_reported() {
        let units = vec![
            unit("a", vec![1.0, 2.0, 3.0]),
            unit("b", vec![1.0, 2.0, 3.0, 4.0]),
        ];
        let report = validate_dataset(&units).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0]
            .to_string()
            .starts_with("covariate length mismatch"));
    }

    #[test]
    fn duplicate_id_is_reported() {
        let units = vec![unit("06037", vec![1.0]), unit("06037", vec![2.0])];
        let report = validate_dataset(&units).unwrap();
        assert!(report
            .violations
            .iter()
            .any(|v| v.to_string().starts_with("duplicate id")));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(matches!(validate_dataset(&[]), Err(Error::EmptyDataset)));
    }

    #[test]
    fn nan_and_trajectory_mismatch_are_reported() {
        let mut a = unit("a", vec![f64::NAN]);
        a.dose = Series::Trajectory(vec![0.1, 0.2]);
        let mut b = unit("b", vec![1.0]);
        b.dose = Series::Trajectory(vec![0.1]);
        let report = validate_dataset(&[a, b]).unwrap();
        let msgs: Vec<_> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(msgs.iter().any(|m| m.starts_with("non-finite")));
        assert!(msgs
            .iter()
            .any(|m| m.starts_with("trajectory length mismatch")));
    }

    #[test]
    fn kink_model_values() {
        assert_eq!(
            evaluate_model(&DoseResponseHypothesis::kink(1.0, 0.5), 0.7),
            0.0
        );
        let v = evaluate_model(&DoseResponseHypothesis::kink(1.0, 0.3), 2.2);
        assert!((v - 0.36).abs() < 1e-15);
        let inf = DoseResponseHypothesis::kink(f64::INFINITY, 3.0);
        assert_eq!(evaluate_model(&inf, 5.0), 0.0);
        assert_eq!(evaluate_model(&DoseResponseHypothesis::null(), 5.0), 0.0);
    }

    #[test]
    fn proportional_is_zero_at_reference() {
        let h = DoseResponseHypothesis::proportional(2.0).with_reference(-0.5);
        assert_eq!(evaluate_model(&h, -0.5), 0.0);
        assert_eq!(evaluate_model(&h, 0.5), 2.0);
    }

    #[test]
    fn kink_below_reference_is_rejected() {
        let h = DoseResponseHypothesis::kink(-1.0, 1.0);
        assert!(h.validate().is_err());
        assert!(DoseResponseHypothesis::kink(0.3, 1.0).validate().is_ok());
    }

    fn pair(lo: &str, hi: &str) -> MatchedPair {
        MatchedPair::ordered((lo, 0.0), (hi, 1.0), 0.0)
    }

    #[test]
    fn identical_groups_have_zero_difference() {
        let units = vec![unit("a", vec![1.0, 5.0]), unit("b", vec![1.0, 5.0])];
        let names = vec!["x".to_string(), "y".to_string()];
        let rows = standardized_differences(&[pair("a", "b")], &units, &names).unwrap();
        assert!(rows.iter().all(|r| r.standardized_difference == 0.0));
    }

    #[test]
    fn degenerate_spread_keeps_sign() {
        let units = vec![
            unit("a", vec![0.0]),
            unit("b", vec![1.0]),
            unit("c", vec![0.0]),
            unit("d", vec![1.0]),
        ];
        let names = vec!["x".to_string()];
        let rows =
            standardized_differences(&[pair("a", "b"), pair("c", "d")], &units, &names).unwrap();
        assert!(rows[0].standardized_difference > 0.0);
    }

    #[test]
    fn hand_computed_standardized_difference() {
        // lo = {0.48, 0.50, 0.52}, hi = {0.49, 0.51, 0.53}
        // means 0.50 / 0.51, both sample variances 4e-4, pooled sd 0.02 -> 0.5
        let units = vec![
            unit("a", vec![0.48]),
            unit("b", vec![0.49]),
            unit("c", vec![0.50]),
            unit("d", vec![0.51]),
            unit("e", vec![0.52]),
            unit("f", vec![0.53]),
        ];
        let pairs = [pair("a", "b"), pair("c", "d"), pair("e", "f")];
        let rows = standardized_differences(&pairs, &units, &["female".to_string()]).unwrap();
        assert!((rows[0].standardized_difference - 0.5).abs() < 1e-9);
    }

    #[test]
    fn unresolved_id_is_an_error() {
        let units = vec![unit("a", vec![0.0])];
        let err = standardized_differences(&[pair("a", "zz")], &units, &["x".into()]);
        assert!(matches!(err, Err(Error::UnknownUnit(id)) if id == "zz"));
    }

    #[test]
    fn tie_ordering_uses_id() {
        let p = MatchedPair::ordered(("b", 0.3), ("a", 0.3), 1.0);
        assert_eq!(p.unit_lo, "a");
        let p = MatchedPair::ordered(("b", 0.2), ("a", 0.4), 1.0);
        assert_eq!(p.unit_lo, "b");
    }

    proptest! {
        #[test]
        fn kink_is_continuous_piecewise_linear(tau in 0.0f64..3.0, beta in -3.0f64..3.0, z in 0.0f64..4.0) {
            let h = DoseResponseHypothesis::kink(tau, beta);
            let eps = 1e-7;
            let jump = (evaluate_model(&h, z + eps) - evaluate_model(&h, z - eps)).abs();
            prop_assert!(jump <= beta.abs() * 2.0 * eps + 1e-12);
            prop_assert_eq!(evaluate_model(&h, h.reference_dose), 0.0);
        }

        #[test]
        fn every_family_vanishes_at_reference(zs in -2.0f64..2.0, beta in -5.0f64..5.0, excess in 0.0f64..2.0) {
            for h in [
                DoseResponseHypothesis::null(),
                DoseResponseHypothesis::proportional(beta),
                DoseResponseHypothesis::kink(excess, beta),
                DoseResponseHypothesis::kink_log(excess, beta),
            ] {
                let h = h.with_reference(zs).at(zs + excess, beta);
                prop_assert_eq!(evaluate_model(&h, zs), 0.0);
            }
        }

        #[test]
        fn balance_is_antisymmetric(vals in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let units: Vec<_> = vals.iter().enumerate().map(|(i, v)| unit(&format!("u{i}"), vec![*v])).collect();
            let fwd: Vec<_> = (0..3).map(|i| pair(&format!("u{}", 2 * i), &format!("u{}", 2 * i + 1))).collect();
            let rev: Vec<_> = fwd.iter().map(|p| MatchedPair { unit_lo: p.unit_hi.clone(), unit_hi: p.unit_lo.clone(), ..p.clone() }).collect();
            let names = vec!["x".to_string()];
            let a = standardized_differences(&fwd, &units, &names).unwrap()[0].standardized_difference;
            let b = standardized_differences(&rev, &units, &names).unwrap()[0].standardized_difference;
            prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0) || (a.is_infinite() && a == -b));
        }
    }
}
