//! Deterministic discrete-day SIR model driven by a mobility dose, used to
//! audit cumulative-dose equivalence and to generate synthetic data.
//!
//! Compartments are stored as integers in millionths of a person, so
//! `S + I + R` is conserved exactly. Daily transmission is
//! `beta_t = beta0 * (1 + z_t)` clipped at zero.

use std::collections::HashMap;

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interference::AdjacencyGraph;
use crate::io::{CountyRecord, Panel};
use crate::longitudinal::{cumulative_dose, CumulativeDoseSpec};
use crate::model::{evaluate_model, DoseResponseHypothesis, Link, MatchedPair};
use crate::rng::draw_stream;

/// Compartment units per person.
pub const SCALE: u64 = 1_000_000;

fn default_death_fraction() -> f64 {
    0.01
}

fn default_death_delay() -> usize {
    14
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SirConfig {
    pub population: u64,
    pub beta0: f64,
    pub gamma: f64,
    /// Fraction of the population infected on day 0.
    pub initial_infected: f64,
    pub horizon: usize,
    /// Deaths proxy: this fraction of recoveries...
    #[serde(default = "default_death_fraction")]
    pub death_fraction: f64,
    /// ...reported this many days later.
    #[serde(default = "default_death_delay")]
    pub death_delay: usize,
}

impl SirConfig {
    pub fn new(
        population: u64,
        beta0: f64,
        gamma: f64,
        initial_infected: f64,
        horizon: usize,
    ) -> Self {
        SirConfig {
            population,
            beta0,
            gamma,
            initial_infected,
            horizon,
            death_fraction: default_death_fraction(),
            death_delay: default_death_delay(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.population > 1_000_000_000_000 {
            return Err(Error::invalid(format!(
                "population {} outside 1..=1e12",
                self.population
            )));
        }
        for (name, v) in [("beta0", self.beta0), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be a nonnegative rate, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma must be at most 1 per day, got {}",
                self.gamma
            )));
        }
        for (name, v) in [
            ("initial_infected", self.initial_infected),
            ("death_fraction", self.death_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SirState {
    pub s: u64,
    pub i: u64,
    pub r: u64,
}

impl SirState {
    pub fn total(&self) -> u64 {
        self.s + self.i + self.r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SirRun {
    /// States on days `0..=horizon`.
    pub states: Vec<SirState>,
    /// New infections per day in persons; day 0 holds the initial seed.
    pub new_cases: Vec<f64>,
    pub recoveries: Vec<f64>,
    pub deaths: Vec<f64>,
}

impl SirRun {
    pub fn infected(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.i as f64 / SCALE as f64)
            .collect()
    }

    pub fn susceptible(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.s as f64 / SCALE as f64)
            .collect()
    }

    /// New cases over days `from..=to`.
    pub fn cases_between(&self, from: usize, to: usize) -> f64 {
        self.new_cases[from..=to].iter().sum()
    }
}

fn persons(units: u64) -> f64 {
    units as f64 / SCALE as f64
}

/// Runs the model for `config.horizon` days. Step `t` (from day `t-1` to
/// day `t`) uses `dose[t-1]`; days past the end of `dose` use dose 0.
pub fn simulate(config: &SirConfig, dose: &[f64]) -> Result<SirRun> {
    config.validate()?;
    let n = config.population * SCALE;
    let i0 = ((config.initial_infected * n as f64).round() as u64).min(n);
    let mut st = SirState {
        s: n - i0,
        i: i0,
        r: 0,
    };
    let mut states = Vec::with_capacity(config.horizon + 1);
    let mut new_cases = Vec::with_capacity(config.horizon + 1);
    let mut recoveries = Vec::with_capacity(config.horizon + 1);
    states.push(st);
    new_cases.push(persons(i0));
    recoveries.push(0.0);
    for t in 1..=config.horizon {
        let z = dose.get(t - 1).copied().unwrap_or(0.0);
        let beta = (config.beta0 * (1.0 + z)).max(0.0);
        let force = beta * st.s as f64 * st.i as f64 / n as f64;
        let inf = (force.round() as u64).min(st.s);
        let rec = ((config.gamma * st.i as f64).round() as u64).min(st.i);
        st = SirState {
            s: st.s - inf,
            i: st.i + inf - rec,
            r: st.r + rec,
        };
        states.push(st);
        new_cases.push(persons(inf));
        recoveries.push(persons(rec));
    }
    let deaths = (0..=config.horizon)
        .map(|t| {
            if t >= config.death_delay {
                config.death_fraction * recoveries[t - config.death_delay]
            } else {
                0.0
            }
        })
        .collect();
    Ok(SirRun {
        states,
        new_cases,
        recoveries,
        deaths,
    })
}

/// Relative difference `|a - b| / mean(|a|, |b|)`, zero when equal.
pub fn relative_discrepancy(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / ((a.abs() + b.abs()) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySummary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl DiscrepancySummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        DiscrepancySummary {
            mean: values.iter().sum::<f64>() / n,
            median: crate::sensitivity::median(values),
            max: values.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub n_pairs: usize,
    pub seed: u64,
    /// Outcome: new cases over the days after the treatment window.
    pub outcome_days: usize,
    pub equal_cd: DiscrepancySummary,
    pub control: DiscrepancySummary,
    pub equal_cd_values: Vec<f64>,
    pub control_values: Vec<f64>,
}

/// Range of the random daily doses drawn by the audit.
pub const AUDIT_DOSE_RANGE: (f64, f64) = (-0.6, 0.2);

/// Moves `z` onto the slice of trajectories with cumulative dose `target`
/// along the weight vector, the closest such point in Euclidean norm.
pub fn project_to_cd(z: &[f64], target: f64, spec: &CumulativeDoseSpec) -> Result<Vec<f64>> {
    let w = spec.weights();
    let norm2: f64 = w.iter().map(|x| x * x).sum();
    let shift = (target - cumulative_dose(z, spec)?) / norm2;
    Ok(z.iter().zip(w).map(|(zi, wi)| zi + shift * wi).collect())
}

/// New cases after the treatment window of length `spec.len()`.
fn post_window_cases(config: &SirConfig, z: &[f64], window: usize) -> Result<f64> {
    let run = simulate(config, z)?;
    Ok(run.cases_between(window + 1, config.horizon))
}

/// Simulates pairs of random dose trajectories over the treatment window.
/// In the equal-CD arm the second trajectory is projected to the first's
/// cumulative dose; the control arm keeps it unprojected. Reports the
/// relative discrepancy of post-window cases in each arm.
pub fn audit_w_equivalence(
    config: &SirConfig,
    spec: &CumulativeDoseSpec,
    n_pairs: usize,
    seed: u64,
) -> Result<AuditReport> {
    if n_pairs == 0 {
        return Err(Error::invalid("audit needs at least one trajectory pair"));
    }
    let window = spec.len();
    if config.horizon <= window {
        return Err(Error::invalid(format!(
            "horizon {} leaves no outcome days after a {window}-day window",
            config.horizon
        )));
    }
    config.validate()?;
    let (lo, hi) = AUDIT_DOSE_RANGE;
    let results = (0..n_pairs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = draw_stream(seed, k);
            let z1: Vec<f64> = (0..window).map(|_| rng.random_range(lo..hi)).collect();
            let z2: Vec<f64> = (0..window).map(|_| rng.random_range(lo..hi)).collect();
            let z2_eq = project_to_cd(&z2, cumulative_dose(&z1, spec)?, spec)?;
            let y1 = post_window_cases(config, &z1, window)?;
            let eq = relative_discrepancy(y1, post_window_cases(config, &z2_eq, window)?);
            let ctl = relative_discrepancy(y1, post_window_cases(config, &z2, window)?);
            Ok((eq, ctl))
        })
        .collect::<Result<Vec<_>>>()?;
    let (equal_cd_values, control_values): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok(AuditReport {
        n_pairs,
        seed,
        outcome_days: config.horizon - window,
        equal_cd: DiscrepancySummary::of(&equal_cd_values),
        control: DiscrepancySummary::of(&control_values),
        equal_cd_values,
        control_values,
    })
}

/// Dose-response truth used to generate outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    Model {
        hypothesis: DoseResponseHypothesis,
    },
    /// Piecewise constant: `values[k]` on `(knots[k], knots[k+1]]`, with the
    /// first piece closed on the left; zero outside.
    Step {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Truth {
    pub fn validate(&self) -> Result<()> {
        match self {
            Truth::Model { hypothesis } => hypothesis.validate(),
            Truth::Step { knots, values } => {
                if knots.len() != values.len() + 1 || values.is_empty() {
                    return Err(Error::invalid("step truth needs one more knot than values"));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("step knots must be strictly increasing"));
                }
                Ok(())
            }
        }
    }

    /// Shift of the outcome at dose `z`, on the hypothesis link scale for
    /// model truths.
    pub fn effect(&self, z: f64) -> f64 {
        match self {
            Truth::Model { hypothesis } => evaluate_model(hypothesis, z),
            Truth::Step { knots, values } => {
                if z == knots[0] {
                    return values[0];
                }
                (0..values.len())
                    .find(|&k| knots[k] < z && z <= knots[k + 1])
                    .map_or(0.0, |k| values[k])
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedFixture {
    pub pairs: Vec<MatchedPair>,
    pub outcomes: HashMap<String, f64>,
}

/// Range of fixture doses.
pub const FIXTURE_DOSE_RANGE: (f64, f64) = (0.0, 4.0);

/// `n_pairs` pre-formed pairs with doses uniform on `[0, 4)` and baseline
/// outcomes normal with mean 0 and sd `noise_sd`. Observed outcomes add the
/// truth's effect at the observed dose. For a log-link model truth the
/// baseline is `exp` of the normal draw and the effect multiplies
/// `y + log_offset`.
pub fn generate_matched_fixture(
    n_pairs: usize,
    truth: &Truth,
    noise_sd: f64,
    seed: u64,
) -> Result<MatchedFixture> {
    if n_pairs == 0 {
        return Err(Error::invalid("fixture needs at least one pair"));
    }
    truth.validate()?;
    let normal = Normal::new(0.0, noise_sd)
        .map_err(|e| Error::invalid(format!("noise sd {noise_sd}: {e}")))?;
    let log = match truth {
        Truth::Model { hypothesis } => {
            (hypothesis.effective_link() == Link::Log).then_some(hypothesis.log_offset)
        }
        Truth::Step { .. } => None,
    };
    let (lo, hi) = FIXTURE_DOSE_RANGE;
    let width = n_pairs.to_string().len().max(4);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut outcomes = HashMap::with_capacity(2 * n_pairs);
    for i in 0..n_pairs {
        let mut rng = draw_stream(seed, i as u64);
        let mut unit = |suffix: char| {
            let id = format!("p{i:0width$}{suffix}");
            let z = rng.random_range(lo..hi);
            let e: f64 = normal.sample(&mut rng);
            let y = match log {
                None => e + truth.effect(z),
                Some(off) => Link::Log.invert(
                    Link::Log.apply(e.exp(), off).unwrap_or(0.0) + truth.effect(z),
                    off,
                ),
            };
            (id, z, y)
        };
        let (a, b) = (unit('a'), unit('b'));
        pairs.push(MatchedPair::ordered(
            (a.0.as_str(), a.1),
            (b.0.as_str(), b.1),
            0.0,
        ));
        outcomes.insert(a.0, a.2);
        outcomes.insert(b.0, b.2);
    }
    Ok(MatchedFixture { pairs, outcomes })
}

/// Synthetic county panel of `n_counties` on a grid, with daily mobility
/// and case and death counts from the SIR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPanelConfig {
    pub n_counties: usize,
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub gamma: f64,
    pub death_fraction: f64,
    pub death_delay: usize,
}

impl Default for SyntheticPanelConfig {
    fn default() -> Self {
        SyntheticPanelConfig {
            n_counties: 30,
            start: NaiveDate::from_ymd_opt(2020, 4, 20).expect("valid date"),
            days: 105,
            seed: 2020,
            gamma: 0.1,
            death_fraction: default_death_fraction(),
            death_delay: default_death_delay(),
        }
    }
}

fn round_to(x: f64, digits: i32) -> f64 {
    let m = 10f64.powi(digits);
    (x * m).round() / m
}

/// Generates counties with FIPS codes `99001, 99002, ...` laid out on a
/// grid six columns wide; the graph links grid neighbors.
pub fn generate_synthetic_panel(cfg: &SyntheticPanelConfig) -> Result<(Panel, AdjacencyGraph)> {
    if cfg.n_counties == 0 || cfg.days == 0 {
        return Err(Error::invalid(
            "synthetic panel needs at least one county and one day",
        ));
    }
    let dates: Vec<NaiveDate> = (0..cfg.days as i64)
        .map(|k| cfg.start + Duration::days(k))
        .collect();
    let noise = Normal::new(0.0, 0.03).expect("valid sd");
    let fips = |k: usize| format!("{:05}", 99001 + k);
    let counties = (0..cfg.n_counties)
        .map(|k| {
            let mut rng = draw_stream(cfg.seed, k as u64);
            let rural = rng.random_bool(0.6);
            let population = if rural {
                rng.random_range(5_000..60_000)
            } else {
                rng.random_range(60_000..900_000)
            };
            let area: f64 = rng.random_range(300.0..1500.0);
            let covariates = vec![
                round_to(rng.random_range(0.47..0.53), 4),
                round_to(rng.random_range(0.12..0.28), 4),
                round_to(rng.random_range(0.0..0.25), 4),
                round_to(rng.random_range(0.0..0.3), 4),
                round_to(rng.random_range(0.7..0.88), 4),
                round_to(rng.random_range(0.12..0.24), 4),
                round_to(rng.random_range(0.3..0.5), 4),
                round_to(rng.random_range(0.45..0.7), 4),
                round_to(rng.random_range(6.0..18.0), 2),
                if rural { 1.0 } else { 0.0 },
                round_to(rng.random_range(0.08..0.22), 4),
                round_to(population as f64 / area, 1),
                population as f64,
            ];
            let base: f64 = rng.random_range(-0.45..0.05);
            let mobility: Vec<f64> = (0..cfg.days)
                .map(|t| {
                    let trend = 0.1 * t as f64 / cfg.days as f64;
                    let weekly = 0.05 * (2.0 * std::f64::consts::PI * t as f64 / 7.0).sin();
                    round_to(base + trend + weekly + noise.sample(&mut rng), 4)
                })
                .collect();
            let sir = SirConfig {
                population,
                beta0: rng.random_range(0.1..0.16),
                gamma: cfg.gamma,
                initial_infected: rng.random_range(0.0005..0.002),
                horizon: cfg.days - 1,
                death_fraction: cfg.death_fraction,
                death_delay: cfg.death_delay,
            };
            let run = simulate(&sir, &mobility)?;
            let cases = run.new_cases.iter().map(|x| x.round()).collect();
            let deaths = run.deaths.iter().map(|x| x.round()).collect();
            CountyRecord::new(
                fips(k),
                format!("Synthetic County {}", k + 1),
                covariates,
                mobility,
                cases,
                deaths,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    const COLS: usize = 6;
    let mut edges = Vec::new();
    for k in 0..cfg.n_counties {
        if k % COLS + 1 < COLS && k + 1 < cfg.n_counties {
            edges.push((fips(k), fips(k + 1)));
        }
        if k + COLS < cfg.n_counties {
            edges.push((fips(k), fips(k + COLS)));
        }
    }
    let (graph, _) = AdjacencyGraph::from_edges(&edges);
    Ok((
        Panel {
            dates,
            counties,
            dropped: Vec::new(),
        },
        graph,
    ))
}
