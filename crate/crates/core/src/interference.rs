//! Local interference: neighbor doses scale the direct effect through a
//! logistic spillover factor, and every randomization draw re-imputes
//! outcomes under the drawn assignment.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ks_two_sample;
use crate::inference::{
    impute::lookup, link_outcome, EngineOptions, FlipPlan, FlipStatistic, Flips, PValueSurface,
    TestReport,
};
use crate::model::{evaluate_model, DoseResponseHypothesis, Family, MatchedPair};

/// Undirected graph over unit ids without self-loops.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdjacencyGraph {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a symmetric graph from an edge list. Duplicates collapse;
    /// self-loops are dropped and reported.
    pub fn from_edges<S: AsRef<str>>(edges: &[(S, S)]) -> (Self, Vec<String>) {
        let mut g = AdjacencyGraph::default();
        let mut warnings = Vec::new();
        let mut sets: Vec<BTreeSet<usize>> = Vec::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a == b {
                warnings.push(format!("self-loop on {a} dropped"));
                continue;
            }
            let ia = g.intern(a, &mut sets);
            let ib = g.intern(b, &mut sets);
            sets[ia].insert(ib);
            sets[ib].insert(ia);
        }
        g.neighbors = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        (g, warnings)
    }

    fn intern(&mut self, id: &str, sets: &mut Vec<BTreeSet<usize>>) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        sets.push(BTreeSet::new());
        i
    }

    pub fn n_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Neighbor ids of `id`; empty when `id` is not in the graph.
    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &str> {
        self.index
            .get(id)
            .map(|&i| self.neighbors[i].as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&j| self.ids[j].as_str())
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) => self.neighbors[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    /// Edges as `(a, b)` with `a < b` in node order.
    pub fn edges(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        for (i, ns) in self.neighbors.iter().enumerate() {
            for &j in ns {
                if i < j {
                    out.push((self.ids[i].as_str(), self.ids[j].as_str()));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceParams {
    /// Logistic steepness.
    pub k: f64,
    /// Logistic midpoint in cumulative-dose units.
    pub s: f64,
    /// Average neighbor doses (true) or add them up (false).
    #[serde(default = "default_true")]
    pub normalized: bool,
}

fn default_true() -> bool {
    true
}

impl InterferenceParams {
    pub fn new(k: f64, s: f64) -> Self {
        InterferenceParams {
            k,
            s,
            normalized: true,
        }
    }
}

/// Aggregate neighbor dose: the mean (or sum) of the neighbors' cumulative
/// doses. Neighbors without a known dose are skipped; `None` means no
/// neighbor contributed.
pub fn neighbor_mean_excess_dose<'a>(
    neighbor_doses: impl Iterator<Item = Option<f64>> + 'a,
    normalized: bool,
) -> Option<f64> {
    let mut vals: Vec<f64> = neighbor_doses.flatten().collect();
    if vals.is_empty() {
        return None;
    }
    // A fixed summation order makes the result independent of labeling.
    vals.sort_by(f64::total_cmp);
    let total: f64 = vals.iter().sum();
    Some(if normalized {
        total / vals.len() as f64
    } else {
        total
    })
}

/// Logistic factor `1 / (1 + exp(-k (d - s)))`; 0 without neighbors.
pub fn spillover_factor(d: Option<f64>, p: &InterferenceParams) -> f64 {
    let Some(d) = d else { return 0.0 };
    let x = p.k * (d - p.s);
    if x.is_nan() {
        return 0.0;
    }
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Shared inputs of an interference analysis.
#[derive(Debug, Clone)]
pub struct InterferenceContext<'a> {
    pub graph: &'a AdjacencyGraph,
    /// Observed cumulative doses of units outside the matched sample.
    pub fixed_doses: &'a HashMap<String, f64>,
    pub params: InterferenceParams,
}

#[derive(Debug, Clone, Copy)]
enum NeighborRef {
    /// Slot `2i` is the lower-dose unit of pair `i`, `2i + 1` the other.
    Slot(usize),
    Fixed(f64),
}

/// Outcomes of one pair under a given assignment, on the link scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignedPair {
    pub flipped: bool,
    /// Outcome of `unit_lo` at the dose it receives under the assignment.
    pub unit_lo_outcome: f64,
    pub unit_hi_outcome: f64,
    /// Outcome of the unit assigned the lower dose.
    pub lo_group: f64,
    /// Outcome of the unit assigned the higher dose, moved to the lower dose.
    pub hi_group_at_lo_dose: f64,
}

/// Pair table prepared for repeated re-imputation.
#[derive(Debug, Clone)]
pub struct InterferenceModel {
    h: DoseResponseHypothesis,
    params: InterferenceParams,
    doses: Vec<(f64, f64)>,
    y_obs: Vec<f64>,
    neighbors: Vec<Vec<NeighborRef>>,
    /// Direct-plus-spillover effect of each slot at its observed dose.
    observed_effect: Vec<f64>,
}

impl InterferenceModel {
    pub fn new(
        pairs: &[MatchedPair],
        outcomes: &HashMap<String, f64>,
        h: &DoseResponseHypothesis,
        ctx: &InterferenceContext,
    ) -> Result<Self> {
        h.validate()?;
        if h.family == Family::Null {
            return Err(Error::invalid(
                "interference tests need a kink, kink_log or proportional model",
            ));
        }
        let link = h.effective_link();
        let mut slot_of: HashMap<&str, usize> = HashMap::new();
        let mut y_obs = Vec::with_capacity(2 * pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            for (k, id) in [&p.unit_lo, &p.unit_hi].into_iter().enumerate() {
                if slot_of.insert(id.as_str(), 2 * i + k).is_some() {
                    return Err(Error::invalid(format!(
                        "unit {id} appears in more than one pair"
                    )));
                }
                y_obs.push(link_outcome(id, lookup(outcomes, id)?, link, h.log_offset)?);
            }
        }
        let neighbors = pairs
            .iter()
            .flat_map(|p| [&p.unit_lo, &p.unit_hi])
            .map(|id| {
                ctx.graph
                    .neighbors(id)
                    .filter_map(|nb| match slot_of.get(nb) {
                        Some(&s) => Some(NeighborRef::Slot(s)),
                        None => ctx.fixed_doses.get(nb).map(|&d| NeighborRef::Fixed(d)),
                    })
                    .collect()
            })
            .collect();
        let mut model = InterferenceModel {
            h: *h,
            params: ctx.params,
            doses: pairs.iter().map(|p| (p.dose_lo, p.dose_hi)).collect(),
            y_obs,
            neighbors,
            observed_effect: Vec::new(),
        };
        let none = Flips::none(pairs.len());
        let obs_factor = model.factors(&none);
        model.observed_effect = (0..2 * pairs.len())
            .map(|slot| model.effect(model.slot_dose(slot, &none), obs_factor[slot]))
            .collect();
        Ok(model)
    }

    pub fn n_pairs(&self) -> usize {
        self.doses.len()
    }

    fn slot_dose(&self, slot: usize, flips: &Flips) -> f64 {
        let (lo, hi) = self.doses[slot / 2];
        let is_lo_unit = slot.is_multiple_of(2);
        if is_lo_unit != flips.get(slot / 2) {
            lo
        } else {
            hi
        }
    }

    fn effect(&self, dose: f64, factor: f64) -> f64 {
        evaluate_model(&self.h, dose) * (1.0 + factor)
    }

    fn factors(&self, flips: &Flips) -> Vec<f64> {
        self.neighbors
            .iter()
            .map(|ns| {
                let d = neighbor_mean_excess_dose(
                    ns.iter().map(|r| {
                        Some(match *r {
                            NeighborRef::Slot(s) => self.slot_dose(s, flips),
                            NeighborRef::Fixed(d) => d,
                        })
                    }),
                    self.params.normalized,
                );
                spillover_factor(d, &self.params)
            })
            .collect()
    }

    /// Imputes every pair's outcomes under the assignment `flips`.
    pub fn impute(&self, flips: &Flips) -> Vec<AssignedPair> {
        let c = self.factors(flips);
        (0..self.n_pairs())
            .map(|i| {
                let (lo, hi) = self.doses[i];
                let flipped = flips.get(i);
                let (s_lo, s_hi) = (2 * i, 2 * i + 1);
                let at = |slot: usize, dose: f64| {
                    self.y_obs[slot] + (self.effect(dose, c[slot]) - self.observed_effect[slot])
                };
                let lo_unit_at_lo = at(s_lo, lo);
                let hi_unit_at_lo = at(s_hi, lo);
                if flipped {
                    AssignedPair {
                        flipped,
                        unit_lo_outcome: at(s_lo, hi),
                        unit_hi_outcome: hi_unit_at_lo,
                        lo_group: hi_unit_at_lo,
                        hi_group_at_lo_dose: lo_unit_at_lo,
                    }
                } else {
                    AssignedPair {
                        flipped,
                        unit_lo_outcome: lo_unit_at_lo,
                        unit_hi_outcome: at(s_hi, hi),
                        lo_group: lo_unit_at_lo,
                        hi_group_at_lo_dose: hi_unit_at_lo,
                    }
                }
            })
            .collect()
    }
}

impl FlipStatistic for InterferenceModel {
    fn n_pairs(&self) -> usize {
        self.doses.len()
    }

    fn evaluate(&self, flips: &Flips) -> f64 {
        let rows = self.impute(flips);
        let a: Vec<f64> = rows.iter().map(|r| r.lo_group).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.hi_group_at_lo_dose).collect();
        ks_two_sample(&a, &b)
    }
}

/// Imputes outcomes under `assignment` (one flip flag per pair).
pub fn impute_under_interference(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    h: &DoseResponseHypothesis,
    ctx: &InterferenceContext,
    assignment: &[bool],
) -> Result<Vec<AssignedPair>> {
    if assignment.len() != pairs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} flips for {} pairs",
            assignment.len(),
            pairs.len()
        )));
    }
    let model = InterferenceModel::new(pairs, outcomes, h, ctx)?;
    let mut flips = Flips::none(pairs.len());
    for (i, &f) in assignment.iter().enumerate() {
        flips.set(i, f);
    }
    Ok(model.impute(&flips))
}

/// Randomization test of `h` with spillover: each draw re-imputes all
/// outcomes under the drawn assignment before computing the KS statistic.
pub fn test_interference(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    h: &DoseResponseHypothesis,
    ctx: &InterferenceContext,
    opts: &EngineOptions,
) -> Result<TestReport> {
    let model = InterferenceModel::new(pairs, outcomes, h, ctx)?;
    let r = FlipPlan::uniform(pairs.len(), opts)?.evaluate(&model)?;
    Ok(TestReport::new(r, opts, pairs.len(), *h))
}

/// p-value surface under spillover; all cells share one set of draws.
pub fn interference_surface(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    base: &DoseResponseHypothesis,
    ctx: &InterferenceContext,
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
            let model = InterferenceModel::new(pairs, outcomes, &base.at(tau, beta), ctx)?;
            let r = plan.evaluate(&model)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::test_fixed;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(i: usize, seed: u64) -> (Vec<MatchedPair>, HashMap<String, f64>, AdjacencyGraph) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        let mut out = HashMap::new();
        let mut edges = Vec::new();
        for k in 0..i {
            let (a, b) = (format!("a{k}"), format!("b{k}"));
            let (da, db) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            pairs.push(MatchedPair::ordered((&a, da), (&b, db), 0.0));
            out.insert(a.clone(), rng.random_range(1.0..5.0));
            out.insert(b.clone(), rng.random_range(1.0..5.0));
            if k > 0 {
                edges.push((a.clone(), format!("b{}", k - 1)));
            }
            edges.push((a, "outside".to_string()));
        }
        (pairs, out, AdjacencyGraph::from_edges(&edges).0)
    }

    #[test]
    fn graph_symmetrizes_and_drops_self_loops() {
        let (g, warn) =
            AdjacencyGraph::from_edges(&[("a", "b"), ("b", "a"), ("c", "c"), ("a", "b")]);
        assert!(g.has_edge("a", "b") && g.has_edge("b", "a"));
        assert_eq!(g.n_edges(), 1);
        assert_eq!(warn.len(), 1);
        assert!(!g.contains("c"));
        let (e, _) = AdjacencyGraph::from_edges::<&str>(&[]);
        assert_eq!(e.n_nodes(), 0);
    }

    #[test]
    fn neighbor_means() {
        assert_eq!(
            neighbor_mean_excess_dose([Some(0.0), Some(0.0)].into_iter(), true),
            Some(0.0)
        );
        let m = neighbor_mean_excess_dose([Some(0.2), Some(0.4)].into_iter(), true).unwrap();
        assert!((m - 0.3).abs() < 1e-15);
        assert_eq!(neighbor_mean_excess_dose(std::iter::empty(), true), None);
        assert_eq!(neighbor_mean_excess_dose([None].into_iter(), true), None);
        let s = neighbor_mean_excess_dose([Some(0.2), Some(0.4)].into_iter(), false).unwrap();
        assert!((s - 0.6).abs() < 1e-15);
    }

    #[test]
    fn logistic_values() {
        let p = InterferenceParams::new(5.0, 1.0);
        assert_eq!(spillover_factor(Some(1.0), &p), 0.5);
        assert_eq!(spillover_factor(Some(1e6), &p), 1.0);
        assert_eq!(spillover_factor(None, &p), 0.0);
        assert!((spillover_factor(Some(0.5), &p) - 1.0 / (1.0 + 2.5f64.exp())).abs() < 1e-15);
        assert!((spillover_factor(Some(0.5), &p) - 0.0759).abs() < 1e-4);
        assert_eq!(spillover_factor(Some(-1e6), &p), 0.0);
    }

    #[test]
    fn empty_graph_matches_plain_test_bitwise() {
        let (pairs, out, _) = fixture(40, 1);
        let g = AdjacencyGraph::empty();
        let fixed = HashMap::new();
        let ctx = InterferenceContext {
            graph: &g,
            fixed_doses: &fixed,
            params: InterferenceParams::new(5.0, 0.2),
        };
        let h = DoseResponseHypothesis::kink(0.3, 1.5);
        let opts = EngineOptions {
            mc_draws: 400,
            seed: 5,
            enumeration_cap: 1 << 16,
        };
        let a = test_interference(&pairs, &out, &h, &ctx, &opts).unwrap();
        let b = test_fixed(&pairs, &out, &h, &opts).unwrap();
        assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
        assert_eq!(
            a.statistic_observed.to_bits(),
            b.statistic_observed.to_bits()
        );
    }

    #[test]
    fn empty_graph_surface_matches_plain_surface() {
        let (pairs, out, _) = fixture(9, 3);
        let g = AdjacencyGraph::empty();
        let fixed = HashMap::new();
        let ctx = InterferenceContext {
            graph: &g,
            fixed_doses: &fixed,
            params: InterferenceParams::new(5.0, 0.2),
        };
        let base = DoseResponseHypothesis::kink(0.0, 0.0);
        let opts = EngineOptions::default();
        let (taus, betas) = ([0.1, 0.5], [0.0, 1.0, 3.0]);
        let a = interference_surface(&pairs, &out, &base, &ctx, &taus, &betas, &opts).unwrap();
        let b =
            crate::inference::pvalue_surface(&pairs, &out, &base, &taus, &betas, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observed_assignment_reproduces_observed_outcomes() {
        let (pairs, out, g) = fixture(10, 2);
        let fixed = HashMap::from([("outside".to_string(), 0.8)]);
        let ctx = InterferenceContext {
            graph: &g,
            fixed_doses: &fixed,
            params: InterferenceParams::new(5.0, 0.5),
        };
        let h = DoseResponseHypothesis::kink(0.2, 2.0);
        let rows = impute_under_interference(&pairs, &out, &h, &ctx, &[false; 10]).unwrap();
        for (r, p) in rows.iter().zip(&pairs) {
            assert_eq!(r.unit_lo_outcome, out[&p.unit_lo]);
            assert_eq!(r.unit_hi_outcome, out[&p.unit_hi]);
        }
    }

    #[test]
    fn mutual_neighbor_pair_by_hand() {
        // Doses 0.2 and 0.8, kink tau = 0.1, beta = 2, k = 4, s = 0.5.
        let pairs = vec![MatchedPair::ordered(("x", 0.2), ("y", 0.8), 0.0)];
        let out = HashMap::from([("x".to_string(), 1.0), ("y".to_string(), 3.0)]);
        let (g, _) = AdjacencyGraph::from_edges(&[("x", "y")]);
        let fixed = HashMap::new();
        let params = InterferenceParams::new(4.0, 0.5);
        let ctx = InterferenceContext {
            graph: &g,
            fixed_doses: &fixed,
            params,
        };
        let h = DoseResponseHypothesis::kink(0.1, 2.0);
        let f = |z: f64| if z <= 0.1 { 0.0 } else { 2.0 * (z - 0.1) };
        let c = |d: f64| 1.0 / (1.0 + (-4.0 * (d - 0.5)).exp());
        // Observed: x sees y at 0.8, y sees x at 0.2.
        let eff_x_obs = f(0.2) * (1.0 + c(0.8));
        let eff_y_obs = f(0.8) * (1.0 + c(0.2));
        // Flipped: x gets 0.8 and sees 0.2; y gets 0.2 and sees 0.8.
        let x_flip = 1.0 - eff_x_obs + f(0.8) * (1.0 + c(0.2));
        let y_flip = 3.0 - eff_y_obs + f(0.2) * (1.0 + c(0.8));
        let rows = impute_under_interference(&pairs, &out, &h, &ctx, &[true]).unwrap();
        assert!((rows[0].unit_lo_outcome - x_flip).abs() < 1e-12);
        assert!((rows[0].unit_hi_outcome - y_flip).abs() < 1e-12);
        assert!((rows[0].lo_group - y_flip).abs() < 1e-12);
        // x moved back to the low dose while y stays at 0.2.
        let x_at_lo = 1.0 - eff_x_obs + f(0.2) * (1.0 + c(0.2));
        assert!((rows[0].hi_group_at_lo_dose - x_at_lo).abs() < 1e-12);
    }

    #[test]
    fn vanishing_spillover_is_close_to_plain_test() {
        let (pairs, out, g) = fixture(30, 3);
        let fixed = HashMap::from([("outside".to_string(), 0.5)]);
        let ctx = InterferenceContext {
            graph: &g,
            fixed_doses: &fixed,
            params: InterferenceParams::new(5.0, 1e3),
        };
        let h = DoseResponseHypothesis::kink(0.3, 1.0);
        let opts = EngineOptions {
            mc_draws: 2000,
            seed: 9,
            enumeration_cap: 1 << 16,
        };
        let a = test_interference(&pairs, &out, &h, &ctx, &opts).unwrap();
        let b = test_fixed(&pairs, &out, &h, &opts).unwrap();
        assert!((a.p_value - b.p_value).abs() <= 3.0 * (0.25f64 / 2000.0).sqrt());
    }

    #[test]
    fn relabeling_counties_preserves_report() {
        let (pairs, out, g) = fixture(25, 4);
        let rename = |s: &str| format!("z{}", s.chars().rev().collect::<String>());
        let pairs2: Vec<MatchedPair> = pairs
            .iter()
            .map(|p| MatchedPair {
                unit_lo: rename(&p.unit_lo),
                unit_hi: rename(&p.unit_hi),
                ..p.clone()
            })
            .collect();
        let out2: HashMap<String, f64> = out.iter().map(|(k, v)| (rename(k), *v)).collect();
        let mut edges: Vec<(String, String)> = g
            .edges()
            .into_iter()
            .map(|(a, b)| (rename(b), rename(a)))
            .collect();
        edges.reverse();
        let (g2, _) = AdjacencyGraph::from_edges(&edges);
        let fixed = HashMap::from([("outside".to_string(), 0.4)]);
        let fixed2 = HashMap::from([(rename("outside"), 0.4)]);
        let params = InterferenceParams::new(5.0, 0.4);
        let h = DoseResponseHypothesis::kink(0.2, 1.0);
        let opts = EngineOptions {
            mc_draws: 300,
            seed: 2,
            enumeration_cap: 1 << 16,
        };
        let a = test_interference(
            &pairs,
            &out,
            &h,
            &InterferenceContext {
                graph: &g,
                fixed_doses: &fixed,
                params,
            },
            &opts,
        )
        .unwrap();
        let b = test_interference(
            &pairs2,
            &out2,
            &h,
            &InterferenceContext {
                graph: &g2,
                fixed_doses: &fixed2,
                params,
            },
            &opts,
        )
        .unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.statistic_observed, b.statistic_observed);
    }

    #[test]
    fn spillover_never_exceeds_direct_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let p =
                InterferenceParams::new(rng.random_range(-20.0..20.0), rng.random_range(-2.0..2.0));
            let c = spillover_factor(Some(rng.random_range(-5.0..5.0)), &p);
            assert!((0.0..=1.0).contains(&c));
        }
    }
}
