//! Cumulative doses of treatment trajectories, W-equivalence, aggregate
//! outcomes, and reduction of a longitudinal panel to a static one.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Series, UnitRecord};

/// Shape of the weight function before the lag days are zeroed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightShape {
    Uniform,
    /// Linearly decreasing: the first day weighs the most.
    Early,
    /// Linearly increasing: the last active day weighs the most.
    Late,
    Custom {
        weights: Vec<f64>,
    },
}

/// Reference trajectory, weights, and lag. Weights are zero on the last
/// `lag` days and sum to one over the remaining days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeDoseSpec {
    reference: Vec<f64>,
    weights: Vec<f64>,
    /// Weights before normalization.
    raw: Vec<f64>,
    lag: usize,
}

impl CumulativeDoseSpec {
    pub fn new(reference: Vec<f64>, shape: &WeightShape, lag: usize) -> Result<Self> {
        let n = reference.len();
        if lag >= n {
            return Err(Error::invalid(format!(
                "lag {lag} leaves no weighted day in a {n}-day window"
            )));
        }
        if reference.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("reference trajectory must be finite"));
        }
        let active = n - lag;
        let mut raw: Vec<f64> = match shape {
            WeightShape::Uniform => vec![1.0; n],
            WeightShape::Early => (0..n).map(|t| (active - t.min(active)) as f64).collect(),
            WeightShape::Late => (0..n).map(|t| (t + 1) as f64).collect(),
            WeightShape::Custom { weights } => {
                if weights.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{} custom weights for a {n}-day window",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::invalid("weights must be finite and nonnegative"));
                }
                weights.clone()
            }
        };
        for w in raw.iter_mut().skip(active) {
            *w = 0.0;
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights vanish on every active day"));
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(CumulativeDoseSpec {
            reference,
            weights,
            raw,
            lag,
        })
    }

    /// Constant reference `level` over `days` days.
    pub fn constant_reference(
        level: f64,
        days: usize,
        shape: &WeightShape,
        lag: usize,
    ) -> Result<Self> {
        Self::new(vec![level; days], shape, lag)
    }

    pub fn len(&self) -> usize {
        self.reference.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference.is_empty()
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lag(&self) -> usize {
        self.lag
    }
}

/// `sum_t w(t) (z_t - z*_t)`.
///
/// Inputs are taken at their shortest decimal representation (the value a
/// CSV cell denotes) and the sum is formed exactly, then rounded once. A
/// uniform three-day window with `z = (-0.3, -0.4, -0.5)` against `-0.5`
/// gives exactly `0.1`, and the result does not depend on summation order.
pub fn cumulative_dose(z: &[f64], spec: &CumulativeDoseSpec) -> Result<f64> {
    if z.len() != spec.len() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} days, spec has {}",
            z.len(),
            spec.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Ok(z
            .iter()
            .zip(&spec.reference)
            .zip(&spec.weights)
            .map(|((z, r), w)| w * (z - r))
            .sum());
    }
    let mut num = BigRational::zero();
    let mut den = BigRational::zero();
    for ((&zt, &rt), &wt) in z.iter().zip(&spec.reference).zip(&spec.raw) {
        if wt == 0.0 {
            continue;
        }
        let w = decimal(wt);
        num += &w * (decimal(zt) - decimal(rt));
        den += w;
    }
    Ok((num / den).to_f64().unwrap_or(f64::NAN))
}

/// Exact value of the shortest decimal string that round-trips to `x`.
fn decimal(x: f64) -> BigRational {
    let s = format!("{x}");
    let (int, frac) = s.split_once('.').unwrap_or((&s, ""));
    let digits: BigInt = format!("{int}{frac}")
        .parse()
        .expect("finite float formats as a decimal");
    BigRational::new(digits, BigInt::from(10u8).pow(frac.len() as u32))
}

/// Whether two trajectories have the same cumulative dose, up to
/// `1e-12 * max |z - z*|`.
pub fn w_equivalent(z1: &[f64], z2: &[f64], spec: &CumulativeDoseSpec) -> Result<bool> {
    let (c1, c2) = (cumulative_dose(z1, spec)?, cumulative_dose(z2, spec)?);
    let scale = z1
        .iter()
        .chain(z2)
        .zip(spec.reference.iter().chain(&spec.reference))
        .map(|(z, r)| (z - r).abs())
        .fold(0.0f64, f64::max);
    Ok((c1 - c2).abs() <= 1e-12 * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Sum,
    Mean,
}

/// Outcome window `[start, start + len)` in trajectory days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateOutcomeSpec {
    pub start: usize,
    pub len: usize,
    #[serde(default)]
    pub aggregator: Aggregator,
}

pub fn aggregate_outcome(y: &[f64], spec: &AggregateOutcomeSpec) -> Result<f64> {
    let end = spec
        .start
        .checked_add(spec.len)
        .filter(|&e| e <= y.len() && spec.len > 0);
    let end = end.ok_or_else(|| {
        Error::invalid(format!(
            "outcome window [{}, {}) outside a {}-day trajectory",
            spec.start,
            spec.start + spec.len,
            y.len()
        ))
    })?;
    let total: f64 = y[spec.start..end].iter().sum();
    Ok(match spec.aggregator {
        Aggregator::Sum => total,
        Aggregator::Mean => total / spec.len as f64,
    })
}

/// Replaces each unit's dose trajectory by its cumulative dose over the
/// days `dose_start..dose_start + cd_spec.len()` and its outcome trajectory
/// by the aggregate outcome. Scalar doses or outcomes are kept as they are.
pub fn reduce_to_static(
    units: &[UnitRecord],
    cd_spec: &CumulativeDoseSpec,
    dose_start: usize,
    agg_spec: &AggregateOutcomeSpec,
) -> Result<Vec<UnitRecord>> {
    units
        .iter()
        .map(|u| {
            let dose = match &u.dose {
                Series::Scalar(v) => *v,
                Series::Trajectory(z) => {
                    let window =
                        z.get(dose_start..dose_start + cd_spec.len())
                            .ok_or_else(|| {
                                Error::DimensionMismatch(format!(
                                    "unit {}: dose window [{dose_start}, {}) outside {} days",
                                    u.id,
                                    dose_start + cd_spec.len(),
                                    z.len()
                                ))
                            })?;
                    cumulative_dose(window, cd_spec)?
                }
            };
            let outcome = match &u.outcome {
                Series::Scalar(v) => *v,
                Series::Trajectory(y) => aggregate_outcome(y, agg_spec)?,
            };
            Ok(UnitRecord {
                dose: Series::Scalar(dose),
                outcome: Series::Scalar(outcome),
                ..u.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(reference: Vec<f64>, lag: usize) -> CumulativeDoseSpec {
        CumulativeDoseSpec::new(reference, &WeightShape::Uniform, lag).unwrap()
    }

    #[test]
    fn reference_has_zero_dose() {
        let s = uniform(vec![-0.5; 4], 1);
        assert_eq!(cumulative_dose(&[-0.5; 4], &s).unwrap(), 0.0);
    }

    #[test]
    fn three_day_example() {
        let s = uniform(vec![-0.5; 3], 0);
        let cd = cumulative_dose(&[-0.3, -0.4, -0.5], &s).unwrap();
        assert_eq!(cd, 0.1);
        // Plain binary arithmetic lands one ulp below.
        assert_eq!(
            ((-0.3f64 + 0.5) + (-0.4 + 0.5) + 0.0) / 3.0,
            0.09999999999999999
        );
    }

    #[test]
    fn decimals_are_exact() {
        assert_eq!(decimal(-0.3), BigRational::new((-3).into(), 10.into()));
        assert_eq!(decimal(1e-7), BigRational::new(1.into(), 10_000_000.into()));
        assert_eq!(decimal(-0.0), BigRational::zero());
        assert_eq!(
            decimal(2.5e20),
            BigRational::from_integer(BigInt::from(250_000_000_000_000_000_000u128))
        );
    }

    #[test]
    fn non_finite_dose_propagates() {
        let s = uniform(vec![0.0; 2], 0);
        assert!(cumulative_dose(&[f64::NAN, 1.0], &s).unwrap().is_nan());
    }

    #[test]
    fn zero_reference_is_proportional_to_total() {
        let s = uniform(vec![0.0; 5], 0);
        let z = [1.0, 2.0, 0.5, 0.0, 1.5];
        let cd = cumulative_dose(&z, &s).unwrap();
        assert!((cd - z.iter().sum::<f64>() / 5.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(cumulative_dose(&[0.0, 1.0], &uniform(vec![0.0; 3], 0)).is_err());
    }

    #[test]
    fn weights_respect_lag() {
        for shape in [WeightShape::Uniform, WeightShape::Early, WeightShape::Late] {
            let s = CumulativeDoseSpec::new(vec![0.0; 10], &shape, 3).unwrap();
            assert!(s.weights()[7..].iter().all(|&w| w == 0.0));
            assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(s.weights().iter().all(|&w| (0.0..=1.0).contains(&w)));
        }
        let early = CumulativeDoseSpec::new(vec![0.0; 4], &WeightShape::Early, 0).unwrap();
        assert!(early.weights()[0] > early.weights()[3]);
        assert!(CumulativeDoseSpec::new(vec![0.0; 3], &WeightShape::Uniform, 3).is_err());
    }

    #[test]
    fn w_equivalence_examples() {
        let s = uniform(vec![0.0; 2], 0);
        assert!(w_equivalent(&[0.1, 0.3], &[0.1, 0.3], &s).unwrap());
        assert!(w_equivalent(&[0.0, 0.2], &[0.2, 0.0], &s).unwrap());
        assert!(!w_equivalent(&[0.0, 0.2], &[0.0, 0.9], &s).unwrap());
        let lagged = uniform(vec![0.0; 2], 1);
        assert!(w_equivalent(&[0.0, 0.2], &[0.0, 0.9], &lagged).unwrap());
    }

    #[test]
    fn aggregate_windows() {
        let spec = AggregateOutcomeSpec {
            start: 1,
            len: 1,
            aggregator: Aggregator::Sum,
        };
        assert_eq!(aggregate_outcome(&[0.0; 4], &spec).unwrap(), 0.0);
        assert_eq!(aggregate_outcome(&[1.0, 7.0, 3.0], &spec).unwrap(), 7.0);
        let weekly = [2.0, 0.4, 1.2, 3.0, 0.0, 5.6];
        let five = AggregateOutcomeSpec {
            start: 1,
            len: 5,
            aggregator: Aggregator::Sum,
        };
        assert!((aggregate_outcome(&weekly, &five).unwrap() - 10.2).abs() < 1e-12);
        let out = AggregateOutcomeSpec {
            start: 4,
            len: 3,
            aggregator: Aggregator::Sum,
        };
        assert!(aggregate_outcome(&weekly, &out).is_err());
    }

    #[test]
    fn reduce_builds_scalar_units() {
        let unit = |id: &str, z: Vec<f64>| UnitRecord {
            id: id.into(),
            covariates: vec![1.0],
            exact_keys: vec![],
            dose: Series::Trajectory(z),
            outcome: Series::Trajectory(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
        };
        let units = vec![
            unit("a", vec![9.0, 0.0, 0.2, 9.0]),
            unit("b", vec![9.0, 0.2, 0.0, 9.0]),
        ];
        let s = uniform(vec![0.0; 2], 0);
        let agg = AggregateOutcomeSpec {
            start: 3,
            len: 2,
            aggregator: Aggregator::Sum,
        };
        let out = reduce_to_static(&units, &s, 1, &agg).unwrap();
        assert_eq!(out[0].dose, out[1].dose);
        assert_eq!(out[0].outcome, Series::Scalar(9.0));
        assert!(reduce_to_static(&units, &s, 3, &agg).is_err());
    }

    proptest! {
        #[test]
        fn linear_in_trajectory(
            z1 in proptest::collection::vec(-1.0f64..1.0, 12),
            z2 in proptest::collection::vec(-1.0f64..1.0, 12),
            a in -3.0f64..3.0, b in -3.0f64..3.0,
            lag in 0usize..6,
        ) {
            let s = CumulativeDoseSpec::new(vec![-0.5; 12], &WeightShape::Early, lag).unwrap();
            let zero = cumulative_dose(s.reference(), &s).unwrap();
            prop_assert_eq!(zero, 0.0);
            // Linearity of the excess dose map z - z*.
            let mix: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| -0.5 + a * (x + 0.5) + b * (y + 0.5)).collect();
            let lhs = cumulative_dose(&mix, &s).unwrap();
            let rhs = a * cumulative_dose(&z1, &s).unwrap() + b * cumulative_dose(&z2, &s).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn uniform_weights_ignore_day_order(z in proptest::collection::vec(-1.0f64..1.0, 2..30), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let s = uniform(vec![-0.5; z.len()], 0);
            let mut p = z.clone();
            p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (a, b) = (cumulative_dose(&z, &s).unwrap(), cumulative_dose(&p, &s).unwrap());
            prop_assert!((a - b).abs() <= 1e-12);
            prop_assert!(w_equivalent(&z, &p, &s).unwrap());
        }
    }
}
