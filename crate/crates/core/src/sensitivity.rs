//! Sensitivity of randomization tests to biased within-pair assignment.
//!
//! Under bias `Gamma_i` the observed assignment of pair `i` is kept with
//! probability `Gamma_i / (1 + Gamma_i)`, which favors the observed
//! configuration and so makes rejection harder.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{EngineOptions, FlipPlan, ImputedPairTable, KsStatistic, Reference};
use crate::matching::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// `Gamma_i = exp(lambda)` for every pair.
    Constant,
    /// `Gamma_i = exp(lambda * |dose_hi - dose_lo|)`.
    DoseGapProportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaModel {
    pub mode: GammaMode,
    pub lambda: f64,
}

impl GammaModel {
    pub fn constant_gamma(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0) {
            return Err(Error::invalid(format!(
                "Gamma must be at least 1, got {gamma}"
            )));
        }
        Ok(GammaModel {
            mode: GammaMode::Constant,
            lambda: gamma.ln(),
        })
    }

    pub fn gammas(&self, table: &ImputedPairTable) -> Vec<f64> {
        table
            .rows
            .iter()
            .map(|r| match self.mode {
                GammaMode::Constant => self.lambda.exp(),
                GammaMode::DoseGapProportional => {
                    (self.lambda * (r.dose_hi - r.dose_lo).abs()).exp()
                }
            })
            .collect()
    }
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedReport {
    pub lambda: f64,
    pub median_gamma: f64,
    pub reference: Reference,
}

/// KS p-value when each pair flips with probability `1 / (1 + Gamma_i)`.
pub fn biased_p_value(
    table: &ImputedPairTable,
    model: &GammaModel,
    opts: &EngineOptions,
) -> Result<BiasedReport> {
    if !(model.lambda >= 0.0) {
        return Err(Error::invalid(format!(
            "lambda must be nonnegative, got {}",
            model.lambda
        )));
    }
    let gammas = model.gammas(table);
    let q: Vec<f64> = gammas.iter().map(|g| 1.0 / (1.0 + g)).collect();
    let reference = FlipPlan::new(&q, opts)?.evaluate(&KsStatistic::new(table))?;
    Ok(BiasedReport {
        lambda: model.lambda,
        median_gamma: median(&gammas),
        reference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub median_gamma: f64,
    /// p-value with bias exactly `lambda`.
    pub p_at_lambda: f64,
    /// Largest p-value over the evaluated bias levels up to `lambda`.
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Changepoint {
    pub lambda: f64,
    pub median_gamma: f64,
    /// True when every grid point stays significant, so the reported
    /// value is only a lower bound.
    pub beyond_grid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub mode: GammaMode,
    pub alpha: f64,
    pub points: Vec<CurvePoint>,
    /// Largest bias at which the test still rejects; `None` when it does
    /// not reject even without bias.
    pub changepoint: Option<Changepoint>,
}

impl SensitivityCurve {
    /// CSV with columns `lambda,median_gamma,p,p_at_lambda`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "median_gamma", "p", "p_at_lambda"])?;
        for p in &self.points {
            wr.write_record([
                fmt_f64(p.lambda),
                fmt_f64(p.median_gamma),
                fmt_f64(p.p),
                fmt_f64(p.p_at_lambda),
            ])?;
        }
        wr.flush().map_err(|e| Error::Io {
            path: "<curve>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Sensitivity p-values over an increasing grid of bias scales.
///
/// A bias bound `lambda` admits every bias level up to it, so the reported
/// `p` is the running maximum of the single-level p-values. The changepoint
/// is located on the grid and then refined by `refine_steps` bisections.
pub fn sensitivity_curve(
    table: &ImputedPairTable,
    mode: GammaMode,
    lambda_grid: &[f64],
    alpha: f64,
    refine_steps: usize,
    opts: &EngineOptions,
) -> Result<SensitivityCurve> {
    if lambda_grid.is_empty() {
        return Err(Error::invalid("empty lambda grid"));
    }
    if lambda_grid.windows(2).any(|w| !(w[0] < w[1])) || !(lambda_grid[0] >= 0.0) {
        return Err(Error::invalid(
            "lambda grid must be nonnegative and strictly increasing",
        ));
    }
    let eval = |lambda: f64| biased_p_value(table, &GammaModel { mode, lambda }, opts);
    let mut points: Vec<CurvePoint> = Vec::with_capacity(lambda_grid.len());
    let mut running = f64::NEG_INFINITY;
    for &lambda in lambda_grid {
        let r = eval(lambda)?;
        running = running.max(r.reference.p_value);
        points.push(CurvePoint {
            lambda,
            median_gamma: r.median_gamma,
            p_at_lambda: r.reference.p_value,
            p: running,
        });
    }

    let last_sig = points.iter().rposition(|p| p.p <= alpha);
    let changepoint = match last_sig {
        None => None,
        Some(k) if k + 1 == points.len() => Some(Changepoint {
            lambda: points[k].lambda,
            median_gamma: points[k].median_gamma,
            beyond_grid: true,
        }),
        Some(k) => {
            let (mut lo, mut hi) = (points[k].lambda, points[k + 1].lambda);
            let mut lo_gamma = points[k].median_gamma;
            let mut bound = points[k].p;
            for _ in 0..refine_steps {
                let mid = 0.5 * (lo + hi);
                let r = eval(mid)?;
                let p = bound.max(r.reference.p_value);
                if p <= alpha {
                    lo = mid;
                    lo_gamma = r.median_gamma;
                    bound = p;
                } else {
                    hi = mid;
                }
            }
            Some(Changepoint {
                lambda: lo,
                median_gamma: lo_gamma,
                beyond_grid: false,
            })
        }
    };
    Ok(SensitivityCurve {
        mode,
        alpha,
        points,
        changepoint,
    })
}
