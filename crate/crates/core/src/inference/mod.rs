//! Randomization tests of dose-response hypotheses on matched pairs.

mod engine;
pub(crate) mod impute;
mod ks;

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use engine::{
    reference_distribution, EngineOptions, FlipPlan, FlipStatistic, Flips, Mode, Reference,
};
pub use impute::{impute_pair_table, link_outcome, ImputedPair, ImputedPairTable};
pub use ks::{ks_statistic, ks_two_sample, KsStatistic};

use crate::error::{Error, Result};
use crate::matching::fmt_f64;
use crate::model::{DoseResponseHypothesis, Family, MatchedPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic_observed: f64,
    pub p_value: f64,
    pub mode: Mode,
    /// Monte Carlo draws requested.
    pub mc_draws: u64,
    /// Size of the reference distribution actually used.
    pub reference_size: u64,
    pub enumeration_cap: u64,
    pub seed: u64,
    pub n_pairs: usize,
    pub reference_mean: f64,
    pub reference_max: f64,
    pub model: DoseResponseHypothesis,
}

impl TestReport {
    pub fn new(
        r: Reference,
        opts: &EngineOptions,
        n_pairs: usize,
        model: DoseResponseHypothesis,
    ) -> Self {
        TestReport {
            statistic_observed: r.statistic_observed,
            p_value: r.p_value,
            mode: r.mode,
            mc_draws: opts.mc_draws,
            reference_size: r.draws,
            enumeration_cap: opts.enumeration_cap,
            seed: opts.seed,
            n_pairs,
            reference_mean: r.reference_mean,
            reference_max: r.reference_max,
            model,
        }
    }
}

/// KS randomization p-value of an imputed table under uniform flips.
pub fn randomization_p_value(table: &ImputedPairTable, opts: &EngineOptions) -> Result<Reference> {
    FlipPlan::uniform(table.len(), opts)?.evaluate(&KsStatistic::new(table))
}

/// Tests a single fully specified hypothesis.
pub fn test_fixed(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    h: &DoseResponseHypothesis,
    opts: &EngineOptions,
) -> Result<TestReport> {
    let table = impute_pair_table(pairs, outcomes, h)?;
    let r = randomization_p_value(&table, opts)?;
    Ok(TestReport::new(r, opts, pairs.len(), *h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueSurface {
    pub family: Family,
    pub tau_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    /// `p[i][j]` is the p-value at `(tau_grid[i], beta_grid[j])`.
    pub p: Vec<Vec<f64>>,
    pub statistic: Vec<Vec<f64>>,
    pub tau_hat: f64,
    pub beta_hat: f64,
    pub p_max: f64,
    pub mode: Mode,
    pub seed: u64,
    pub mc_draws: u64,
}

impl PValueSurface {
    /// Long-format CSV with columns `tau,beta,statistic,p`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["tau", "beta", "statistic", "p"])?;
        for (i, &tau) in self.tau_grid.iter().enumerate() {
            for (j, &beta) in self.beta_grid.iter().enumerate() {
                wr.write_record([
                    fmt_f64(tau),
                    fmt_f64(beta),
                    fmt_f64(self.statistic[i][j]),
                    fmt_f64(self.p[i][j]),
                ])?;
            }
        }
        wr.flush().map_err(|e| Error::Io {
            path: "<surface>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Evaluates the p-value at every `(tau, beta)` cell; `base` supplies the
/// family, link and reference dose. All cells share one set of draws.
pub fn pvalue_surface(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    base: &DoseResponseHypothesis,
    tau_grid: &[f64],
    beta_grid: &[f64],
    opts: &EngineOptions,
) -> Result<PValueSurface> {
    if tau_grid.is_empty() || beta_grid.is_empty() {
        return Err(Error::invalid("p-value surface needs nonempty grids"));
    }
    let plan = FlipPlan::uniform(pairs.len(), opts)?;
    let mut p = vec![vec![0.0; beta_grid.len()]; tau_grid.len()];
    let mut statistic = p.clone();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (i, &tau) in tau_grid.iter().enumerate() {
        for (j, &beta) in beta_grid.iter().enumerate() {
            let h = base.at(tau, beta);
            let table = impute_pair_table(pairs, outcomes, &h)?;
            let r = plan.evaluate(&KsStatistic::new(&table))?;
            p[i][j] = r.p_value;
            statistic[i][j] = r.statistic_observed;
            if r.p_value > best.0 {
                best = (r.p_value, i, j);
            }
        }
    }
    Ok(PValueSurface {
        family: base.family,
        tau_grid: tau_grid.to_vec(),
        beta_grid: beta_grid.to_vec(),
        p,
        statistic,
        tau_hat: tau_grid[best.1],
        beta_hat: beta_grid[best.2],
        p_max: best.0,
        mode: plan.mode(),
        seed: opts.seed,
        mc_draws: opts.mc_draws,
    })
}

/// A finite set of `(tau, beta)` parameter points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBox {
    pub points: Vec<(f64, f64)>,
}

impl ThetaBox {
    pub fn grid(taus: &[f64], betas: &[f64]) -> Self {
        ThetaBox {
            points: taus
                .iter()
                .flat_map(|&t| betas.iter().map(move |&b| (t, b)))
                .collect(),
        }
    }

    pub fn single(tau: f64, beta: f64) -> Self {
        ThetaBox {
            points: vec![(tau, beta)],
        }
    }
}

/// Evenly spaced grid `start, start + step, ...` up to `stop` inclusive.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::invalid(format!(
            "bad grid {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeMode {
    /// The box is the user's bounded parameter range; gamma = 0.
    BoundedBox,
    /// The box is a level-gamma confidence set; reject iff
    /// `p_max + gamma <= alpha`.
    BergerBoos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeReport {
    pub family: Family,
    pub mode: CompositeMode,
    pub gamma: f64,
    pub alpha: f64,
    pub threshold: f64,
    pub p_max: f64,
    pub tau_hat: f64,
    pub beta_hat: f64,
    pub n_points: usize,
    pub reject: bool,
    /// True when the box came from the heuristic pre-screen.
    pub heuristic_box: bool,
    pub seed: u64,
    pub mc_draws: u64,
}

/// Tests the union of hypotheses over `theta_box`: the largest p-value over
/// the box is compared against `alpha - gamma`.
#[allow(clippy::too_many_arguments)]
pub fn composite_test(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    base: &DoseResponseHypothesis,
    theta_box: &ThetaBox,
    gamma: f64,
    alpha: f64,
    opts: &EngineOptions,
) -> Result<CompositeReport> {
    if theta_box.points.is_empty() {
        return Err(Error::invalid(
            "composite test needs a nonempty parameter box",
        ));
    }
    if !(0.0..1.0).contains(&alpha) || !(0.0 <= gamma && gamma < alpha) {
        return Err(Error::invalid(format!(
            "need 0 <= gamma < alpha < 1, got gamma={gamma} alpha={alpha}"
        )));
    }
    let plan = FlipPlan::uniform(pairs.len(), opts)?;
    let mut best = (f64::NEG_INFINITY, f64::NAN, f64::NAN);
    for &(tau, beta) in &theta_box.points {
        let table = impute_pair_table(pairs, outcomes, &base.at(tau, beta))?;
        let p = plan.evaluate(&KsStatistic::new(&table))?.p_value;
        if p > best.0 {
            best = (p, tau, beta);
        }
    }
    let threshold = alpha - gamma;
    Ok(CompositeReport {
        family: base.family,
        mode: if gamma == 0.0 {
            CompositeMode::BoundedBox
        } else {
            CompositeMode::BergerBoos
        },
        gamma,
        alpha,
        threshold,
        p_max: best.0,
        tau_hat: best.1,
        beta_hat: best.2,
        n_points: theta_box.points.len(),
        reject: best.0 + gamma <= alpha,
        heuristic_box: false,
        seed: opts.seed,
        mc_draws: opts.mc_draws,
    })
}

/// Heuristic stand-in for a level-gamma confidence set: the points of a
/// coarse box whose p-value exceeds `gamma`. Not guaranteed to cover.
pub fn heuristic_prescreen(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    base: &DoseResponseHypothesis,
    coarse: &ThetaBox,
    gamma: f64,
    opts: &EngineOptions,
) -> Result<ThetaBox> {
    let plan = FlipPlan::uniform(pairs.len(), opts)?;
    let mut kept = Vec::new();
    for &(tau, beta) in &coarse.points {
        let table = impute_pair_table(pairs, outcomes, &base.at(tau, beta))?;
        if plan.evaluate(&KsStatistic::new(&table))?.p_value > gamma {
            kept.push((tau, beta));
        }
    }
    Ok(ThetaBox { points: kept })
}

/// Composite test over the pre-screened box, flagged as heuristic.
#[allow(clippy::too_many_arguments)]
pub fn composite_test_prescreened(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    base: &DoseResponseHypothesis,
    coarse: &ThetaBox,
    gamma: f64,
    alpha: f64,
    opts: &EngineOptions,
) -> Result<CompositeReport> {
    let kept = heuristic_prescreen(pairs, outcomes, base, coarse, gamma, opts)?;
    if kept.points.is_empty() {
        // Nothing survives the screen: every point is implausible at level gamma.
        return Ok(CompositeReport {
            family: base.family,
            mode: CompositeMode::BergerBoos,
            gamma,
            alpha,
            threshold: alpha - gamma,
            p_max: 0.0,
            tau_hat: f64::NAN,
            beta_hat: f64::NAN,
            n_points: 0,
            reject: true,
            heuristic_box: true,
            seed: opts.seed,
            mc_draws: opts.mc_draws,
        });
    }
    let mut r = composite_test(pairs, outcomes, base, &kept, gamma, alpha, opts)?;
    r.heuristic_box = true;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanModel {
    pub name: String,
    pub base: DoseResponseHypothesis,
    pub theta_box: ThetaBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub reports: Vec<(String, CompositeReport)>,
    /// Name of the first model not rejected; `None` means all rejected.
    pub selected: Option<String>,
}

/// Tests models in the given order and stops at the first one not
/// rejected. No multiplicity correction is applied.
pub fn sequential_model_scan(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    models: &[ScanModel],
    alpha: f64,
    opts: &EngineOptions,
) -> Result<ScanReport> {
    let mut reports = Vec::new();
    for m in models {
        let r = composite_test(pairs, outcomes, &m.base, &m.theta_box, 0.0, alpha, opts)?;
        let reject = r.reject;
        reports.push((m.name.clone(), r));
        if !reject {
            return Ok(ScanReport {
                reports,
                selected: Some(m.name.clone()),
            });
        }
    }
    Ok(ScanReport {
        reports,
        selected: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(i: usize, shift: f64, seed: u64) -> (Vec<MatchedPair>, HashMap<String, f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        let mut out = HashMap::new();
        for k in 0..i {
            let (a, b) = (format!("a{k}"), format!("b{k}"));
            pairs.push(MatchedPair::ordered((&a, 0.5), (&b, 2.0), 0.0));
            out.insert(a, rng.random::<f64>());
            out.insert(b, rng.random::<f64>() + shift);
        }
        (pairs, out)
    }

    fn brute_p(lo: &[f64], hi: &[f64]) -> f64 {
        let n = lo.len();
        let t_obs = ks_two_sample(lo, hi);
        let mut count = 0;
        for mask in 0..1u32 << n {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in 0..n {
                if (mask >> i) & 1 == 1 {
                    a.push(hi[i]);
                    b.push(lo[i]);
                } else {
                    a.push(lo[i]);
                    b.push(hi[i]);
                }
            }
            if ks_two_sample(&a, &b) >= t_obs {
                count += 1;
            }
        }
        count as f64 / (1u32 << n) as f64
    }

    #[test]
    fn two_pair_exact_p_matches_hand_count() {
        // lo {1, 3}, hi {2, 4}: t_obs = 0.5. The four assignments give
        // 0.5, 0.5 (flip pair 0: {2,3} vs {1,4}), 0.5, 0.5.
        let pairs = vec![
            MatchedPair::ordered(("a", 0.0), ("b", 1.0), 0.0),
            MatchedPair::ordered(("c", 0.0), ("d", 1.0), 0.0),
        ];
        let out: HashMap<String, f64> = [("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        let r = test_fixed(
            &pairs,
            &out,
            &DoseResponseHypothesis::null(),
            &EngineOptions::default(),
        )
        .unwrap();
        assert_eq!(r.statistic_observed, 0.5);
        assert_eq!(r.p_value, brute_p(&[1.0, 3.0], &[2.0, 4.0]));
        assert_eq!(r.mode, Mode::Exact);
    }

    #[test]
    fn exact_p_matches_brute_force() {
        for seed in 0..20 {
            let (pairs, out) = data(7, 0.3, seed);
            let lo: Vec<f64> = pairs.iter().map(|p| out[&p.unit_lo]).collect();
            let hi: Vec<f64> = pairs.iter().map(|p| out[&p.unit_hi]).collect();
            let r = test_fixed(
                &pairs,
                &out,
                &DoseResponseHypothesis::null(),
                &EngineOptions::default(),
            )
            .unwrap();
            assert_eq!(r.p_value, brute_p(&lo, &hi));
        }
    }

    #[test]
    fn exact_p_is_seed_invariant() {
        let (pairs, out) = data(8, 0.2, 4);
        let h = DoseResponseHypothesis::kink(1.0, 0.2);
        let a = test_fixed(
            &pairs,
            &out,
            &h,
            &EngineOptions {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b = test_fixed(
            &pairs,
            &out,
            &h,
            &EngineOptions {
                seed: 99,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn null_reductions_are_bit_identical() {
        let (pairs, out) = data(30, 0.4, 5);
        let opts = EngineOptions {
            mc_draws: 300,
            seed: 8,
            enumeration_cap: 1 << 16,
        };
        let null = test_fixed(&pairs, &out, &DoseResponseHypothesis::null(), &opts).unwrap();
        let zero_slope =
            test_fixed(&pairs, &out, &DoseResponseHypothesis::kink(1.0, 0.0), &opts).unwrap();
        let inf_tau = test_fixed(
            &pairs,
            &out,
            &DoseResponseHypothesis::kink(f64::INFINITY, 3.0),
            &opts,
        )
        .unwrap();
        assert_eq!(null.p_value.to_bits(), zero_slope.p_value.to_bits());
        assert_eq!(null.p_value.to_bits(), inf_tau.p_value.to_bits());
    }

    #[test]
    fn surface_cells_equal_single_tests() {
        let (pairs, out) = data(25, 0.5, 6);
        let opts = EngineOptions {
            mc_draws: 200,
            seed: 2,
            enumeration_cap: 1 << 16,
        };
        let base = DoseResponseHypothesis::kink(0.0, 0.0);
        let taus = [0.4, f64::INFINITY];
        let betas = [0.0, 0.3];
        let s = pvalue_surface(&pairs, &out, &base, &taus, &betas, &opts).unwrap();
        let null = test_fixed(&pairs, &out, &DoseResponseHypothesis::null(), &opts).unwrap();
        assert_eq!(s.p[1][1], null.p_value);
        let single = test_fixed(&pairs, &out, &base.at(0.4, 0.3), &opts).unwrap();
        assert_eq!(s.p[0][1], single.p_value);
        assert!(s.p.iter().flatten().all(|&p| p <= s.p_max));
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn berger_boos_threshold() {
        let (pairs, out) = data(10, 0.0, 7);
        let r = composite_test(
            &pairs,
            &out,
            &DoseResponseHypothesis::kink(0.0, 0.0),
            &ThetaBox::single(1.0, 0.5),
            0.01,
            0.05,
            &EngineOptions::default(),
        )
        .unwrap();
        assert!((r.threshold - 0.04).abs() < 1e-15);
        assert_eq!(r.mode, CompositeMode::BergerBoos);
        assert_eq!(r.reject, r.p_max + 0.01 <= 0.05);
    }

    #[test]
    fn composite_rejects_bad_arguments() {
        let (pairs, out) = data(4, 0.0, 7);
        let h = DoseResponseHypothesis::null();
        let o = EngineOptions::default();
        assert!(composite_test(
            &pairs,
            &out,
            &h,
            &ThetaBox { points: vec![] },
            0.0,
            0.05,
            &o
        )
        .is_err());
        assert!(composite_test(
            &pairs,
            &out,
            &h,
            &ThetaBox::single(0.0, 0.0),
            0.05,
            0.05,
            &o
        )
        .is_err());
    }

    #[test]
    fn single_point_box_reduces_to_fixed_test() {
        let (pairs, out) = data(12, 0.2, 9);
        let o = EngineOptions::default();
        let c = composite_test(
            &pairs,
            &out,
            &DoseResponseHypothesis::null(),
            &ThetaBox::single(0.0, 0.0),
            0.0,
            0.05,
            &o,
        )
        .unwrap();
        let f = test_fixed(&pairs, &out, &DoseResponseHypothesis::null(), &o).unwrap();
        assert_eq!(c.p_max, f.p_value);
    }

    #[test]
    fn scan_stops_at_first_plausible_model() {
        let (pairs, out) = data(12, 0.0, 10);
        let o = EngineOptions::default();
        let models = vec![
            ScanModel {
                name: "null".into(),
                base: DoseResponseHypothesis::null(),
                theta_box: ThetaBox::single(0.0, 0.0),
            },
            ScanModel {
                name: "kink".into(),
                base: DoseResponseHypothesis::kink(0.0, 0.0),
                theta_box: ThetaBox::grid(&[0.5, 1.0], &[0.5]),
            },
        ];
        let s = sequential_model_scan(&pairs, &out, &models, 0.05, &o).unwrap();
        let single = composite_test(
            &pairs,
            &out,
            &models[0].base,
            &models[0].theta_box,
            0.0,
            0.05,
            &o,
        )
        .unwrap();
        assert_eq!(s.reports[0].1, single);
        if !single.reject {
            assert_eq!(s.selected.as_deref(), Some("null"));
            assert_eq!(s.reports.len(), 1);
        }

        let (pairs, out) = data(12, 50.0, 10);
        let s = sequential_model_scan(&pairs, &out, &models[..1], 0.05, &o).unwrap();
        assert_eq!(s.selected, None);
    }

    #[test]
    fn prescreen_keeps_only_plausible_points() {
        let (pairs, out) = data(10, 0.0, 12);
        let o = EngineOptions::default();
        let coarse = ThetaBox::grid(&[0.0], &[0.0, 5.0]);
        let kept = heuristic_prescreen(
            &pairs,
            &out,
            &DoseResponseHypothesis::proportional(0.0),
            &coarse,
            0.01,
            &o,
        )
        .unwrap();
        assert!(kept.points.contains(&(0.0, 0.0)));
        assert!(!kept.points.contains(&(0.0, 5.0)));
        let r = composite_test_prescreened(
            &pairs,
            &out,
            &DoseResponseHypothesis::proportional(0.0),
            &coarse,
            0.01,
            0.05,
            &o,
        )
        .unwrap();
        assert!(r.heuristic_box);
    }

    #[test]
    fn linear_grid_includes_endpoint() {
        let g = linear_grid(0.0, 0.7, 0.02).unwrap();
        assert_eq!(g.len(), 36);
        assert!((g[35] - 0.7).abs() < 1e-12);
        assert_eq!(linear_grid(0.0, 4.0, 0.2).unwrap().len(), 21);
    }
}
