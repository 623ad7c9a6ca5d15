use super::engine::{FlipStatistic, Flips};
use super::impute::ImputedPairTable;

/// Largest gap between the two empirical CDFs, counted in observations:
/// `values` holds `(value, in_first_group)` sorted by value. Ties are
/// consumed as a block before the gap is read, which evaluates both
/// right-continuous step functions at every jump point.
fn max_gap(values: impl Iterator<Item = (f64, bool)>) -> u32 {
    let mut gap: i64 = 0;
    let mut best: i64 = 0;
    let mut prev: Option<f64> = None;
    for (v, first) in values {
        if prev.is_some_and(|p| p != v) {
            best = best.max(gap.abs());
        }
        gap += if first { 1 } else { -1 };
        prev = Some(v);
    }
    best.max(gap.abs()) as u32
}

/// Two-sample KS statistic between equal-size samples `a` and `b`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "samples must have equal size");
    if a.is_empty() {
        return 0.0;
    }
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    max_gap(all.into_iter()) as f64 / a.len() as f64
}

/// The KS statistic of a pair table as a function of the within-pair flips.
///
/// Pair `i` contributes `y_lo_obs` and `y_hi_at_lo_dose`; the first lands in
/// the lower-dose group unless the pair is flipped.
#[derive(Debug, Clone)]
pub struct KsStatistic {
    sorted: Vec<(f64, u32)>,
    n_pairs: usize,
}

impl KsStatistic {
    pub fn new(table: &ImputedPairTable) -> Self {
        let mut sorted = Vec::with_capacity(2 * table.len());
        for (i, r) in table.rows.iter().enumerate() {
            sorted.push((r.y_lo_obs, (i as u32) << 1));
            sorted.push((r.y_hi_at_lo_dose, ((i as u32) << 1) | 1));
        }
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
        KsStatistic {
            sorted,
            n_pairs: table.len(),
        }
    }
}

impl FlipStatistic for KsStatistic {
    fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    fn evaluate(&self, flips: &Flips) -> f64 {
        if self.n_pairs == 0 {
            return 0.0;
        }
        let gap = max_gap(self.sorted.iter().map(|&(v, tag)| {
            let pair = (tag >> 1) as usize;
            let second = tag & 1 == 1;
            (v, second == flips.get(pair))
        }));
        gap as f64 / self.n_pairs as f64
    }
}

/// Observed KS statistic of a table.
pub fn ks_statistic(table: &ImputedPairTable) -> f64 {
    KsStatistic::new(table).evaluate(&Flips::none(table.len()))
}
