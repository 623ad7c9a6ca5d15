//! Reference distributions over within-pair flips, exact or Monte Carlo.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::draw_stream;

/// One assignment: bit `i` set means pair `i` is flipped relative to the
/// observed assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flips {
    words: Vec<u64>,
    n: usize,
}

impl Flips {
    pub fn none(n: usize) -> Self {
        Flips {
            words: vec![0; n.div_ceil(64).max(1)],
            n,
        }
    }

    pub fn from_mask(n: usize, mask: u64) -> Self {
        let mut f = Flips::none(n);
        f.words[0] = mask;
        f
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        let bit = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }
}

/// A test statistic evaluated on the assignment described by `flips`.
pub trait FlipStatistic: Sync {
    fn n_pairs(&self) -> usize;
    fn evaluate(&self, flips: &Flips) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub mc_draws: u64,
    pub seed: u64,
    /// Enumerate all `2^I` assignments when `2^I` does not exceed this.
    pub enumeration_cap: u64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            mc_draws: 10_000,
            seed: 0,
            enumeration_cap: 1 << 16,
        }
    }
}

impl EngineOptions {
    pub fn mode_for(&self, n_pairs: usize) -> Mode {
        if n_pairs < 64 && (1u64 << n_pairs) <= self.enumeration_cap {
            Mode::Exact
        } else {
            Mode::MonteCarlo
        }
    }
}

/// The assignments of a reference distribution with their probabilities.
/// Built once and reused across statistics (e.g. every cell of a grid).
#[derive(Debug, Clone)]
pub struct FlipPlan {
    n_pairs: usize,
    mode: Mode,
    configs: PlanConfigs,
}

#[derive(Debug, Clone)]
enum PlanConfigs {
    /// Mask `m` enumerates assignment `m` with probability `weights[m]`.
    Exact { weights: Vec<f64> },
    /// Equally weighted sampled assignments.
    Sampled(Vec<Flips>),
}

impl FlipPlan {
    /// `flip_prob[i]` is the probability that pair `i` is flipped relative
    /// to the observed assignment; 0.5 everywhere is pure randomization.
    pub fn new(flip_prob: &[f64], opts: &EngineOptions) -> Result<Self> {
        let n = flip_prob.len();
        if let Some(q) = flip_prob.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::invalid(format!(
                "flip probability {q} outside [0, 1]"
            )));
        }
        let mode = opts.mode_for(n);
        let configs = match mode {
            Mode::Exact => {
                let weights = (0..1u64 << n)
                    .into_par_iter()
                    .map(|mask| {
                        let mut w = 1.0;
                        for (i, &q) in flip_prob.iter().enumerate() {
                            w *= if (mask >> i) & 1 == 1 { q } else { 1.0 - q };
                        }
                        w
                    })
                    .collect();
                PlanConfigs::Exact { weights }
            }
            Mode::MonteCarlo => {
                if opts.mc_draws == 0 {
                    return Err(Error::invalid("Monte Carlo mode needs at least one draw"));
                }
                let draws = (0..opts.mc_draws)
                    .into_par_iter()
                    .map(|d| {
                        let mut rng = draw_stream(opts.seed, d);
                        let mut f = Flips::none(n);
                        for (i, &q) in flip_prob.iter().enumerate() {
                            let u: f64 = rng.random();
                            if u < q {
                                f.set(i, true);
                            }
                        }
                        f
                    })
                    .collect();
                PlanConfigs::Sampled(draws)
            }
        };
        Ok(FlipPlan {
            n_pairs: n,
            mode,
            configs,
        })
    }

    pub fn uniform(n_pairs: usize, opts: &EngineOptions) -> Result<Self> {
        Self::new(&vec![0.5; n_pairs], opts)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Number of assignments in the reference distribution.
    pub fn size(&self) -> u64 {
        match &self.configs {
            PlanConfigs::Exact { weights } => weights.len() as u64,
            PlanConfigs::Sampled(d) => d.len() as u64,
        }
    }

    /// Reference distribution of `stat` and the p-value
    /// `P(T >= t_obs)`.
    pub fn evaluate<S: FlipStatistic>(&self, stat: &S) -> Result<Reference> {
        if stat.n_pairs() != self.n_pairs {
            return Err(Error::DimensionMismatch(format!(
                "statistic over {} pairs, plan over {}",
                stat.n_pairs(),
                self.n_pairs
            )));
        }
        let t_obs = stat.evaluate(&Flips::none(self.n_pairs));
        let (values, weights): (Vec<f64>, Option<&[f64]>) = match &self.configs {
            PlanConfigs::Exact { weights } => {
                let n = self.n_pairs;
                let v = (0..weights.len() as u64)
                    .into_par_iter()
                    .map(|m| stat.evaluate(&Flips::from_mask(n, m)))
                    .collect();
                (v, Some(weights.as_slice()))
            }
            PlanConfigs::Sampled(draws) => {
                (draws.par_iter().map(|f| stat.evaluate(f)).collect(), None)
            }
        };

        // Sequential sums keep the result independent of thread count.
        let (p_value, mean) = match weights {
            Some(w) => {
                let mut p = 0.0;
                let mut mean = 0.0;
                for (&t, &wt) in values.iter().zip(w) {
                    if t >= t_obs {
                        p += wt;
                    }
                    mean += wt * t;
                }
                (p.min(1.0), mean)
            }
            None => {
                let count = values.iter().filter(|&&t| t >= t_obs).count();
                let n = values.len() as f64;
                (count as f64 / n, values.iter().sum::<f64>() / n)
            }
        };
        let max = match weights {
            Some(w) => values
                .iter()
                .zip(w)
                .filter(|(_, &wt)| wt > 0.0)
                .map(|(t, _)| *t)
                .fold(f64::NEG_INFINITY, f64::max),
            None => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        Ok(Reference {
            statistic_observed: t_obs,
            p_value,
            mode: self.mode,
            draws: self.size(),
            reference_mean: mean,
            reference_max: max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub statistic_observed: f64,
    pub p_value: f64,
    pub mode: Mode,
    /// Assignments enumerated (exact) or sampled (Monte Carlo).
    pub draws: u64,
    pub reference_mean: f64,
    pub reference_max: f64,
}

/// Randomization p-value of `stat` under independent flips with the given
/// probabilities.
pub fn reference_distribution<S: FlipStatistic>(
    stat: &S,
    flip_prob: &[f64],
    opts: &EngineOptions,
) -> Result<Reference> {
    FlipPlan::new(flip_prob, opts)?.evaluate(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(usize);
    impl FlipStatistic for Constant {
        fn n_pairs(&self) -> usize {
            self.0
        }
        fn evaluate(&self, _: &Flips) -> f64 {
            0.0
        }
    }

    /// Number of flipped pairs among the first two, negated so that the
    /// observed assignment is extreme.
    struct FlipCount(usize);
    impl FlipStatistic for FlipCount {
        fn n_pairs(&self) -> usize {
            self.0
        }
        fn evaluate(&self, f: &Flips) -> f64 {
            -((0..self.0).filter(|&i| f.get(i)).count() as f64)
        }
    }

    #[test]
    fn degenerate_statistic_has_p_one() {
        for cap in [0, 1 << 16] {
            let opts = EngineOptions {
                mc_draws: 50,
                seed: 1,
                enumeration_cap: cap,
            };
            let r = reference_distribution(&Constant(5), &[0.5; 5], &opts).unwrap();
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn exact_mode_counts_configurations() {
        let opts = EngineOptions::default();
        let r = reference_distribution(&FlipCount(3), &[0.5; 3], &opts).unwrap();
        assert_eq!(r.mode, Mode::Exact);
        assert_eq!(r.draws, 8);
        assert_eq!(r.p_value, 1.0 / 8.0);
    }

    #[test]
    fn mode_switches_at_cap() {
        let opts = EngineOptions {
            enumeration_cap: 1 << 4,
            ..Default::default()
        };
        assert_eq!(opts.mode_for(4), Mode::Exact);
        assert_eq!(opts.mode_for(5), Mode::MonteCarlo);
        assert_eq!(EngineOptions::default().mode_for(64), Mode::MonteCarlo);
    }

    #[test]
    fn never_flipping_puts_all_mass_on_observed() {
        let r =
            reference_distribution(&FlipCount(4), &[0.0; 4], &EngineOptions::default()).unwrap();
        assert_eq!(r.p_value, 1.0);
        let mc = EngineOptions {
            enumeration_cap: 0,
            mc_draws: 100,
            seed: 3,
        };
        assert_eq!(
            reference_distribution(&FlipCount(4), &[0.0; 4], &mc)
                .unwrap()
                .p_value,
            1.0
        );
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let mc = EngineOptions {
            enumeration_cap: 0,
            mc_draws: 500,
            seed: 11,
        };
        let a = reference_distribution(&FlipCount(6), &[0.5; 6], &mc).unwrap();
        let b = reference_distribution(&FlipCount(6), &[0.5; 6], &mc).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| reference_distribution(&FlipCount(6), &[0.5; 6], &mc).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn invalid_probability_is_rejected() {
        assert!(FlipPlan::new(&[0.5, 1.5], &EngineOptions::default()).is_err());
    }

    #[test]
    fn flips_bit_operations() {
        let mut f = Flips::none(130);
        f.set(129, true);
        f.set(3, true);
        assert!(f.get(129) && f.get(3) && !f.get(64));
        f.set(3, false);
        assert!(!f.get(3));
    }
}
