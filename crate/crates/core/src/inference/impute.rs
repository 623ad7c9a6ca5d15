use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate_model, DoseResponseHypothesis, Link, MatchedPair};

/// Both potential outcomes of one pair, on the link scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputedPair {
    pub y_lo_obs: f64,
    pub y_hi_obs: f64,
    pub y_lo_at_hi_dose: f64,
    pub y_hi_at_lo_dose: f64,
    pub dose_lo: f64,
    pub dose_hi: f64,
}

impl ImputedPair {
    /// Fills in the unobserved outcomes from the observed ones (link scale).
    pub fn impute(
        y_lo_obs: f64,
        y_hi_obs: f64,
        dose_lo: f64,
        dose_hi: f64,
        h: &DoseResponseHypothesis,
    ) -> Self {
        let f_lo = evaluate_model(h, dose_lo);
        let f_hi = evaluate_model(h, dose_hi);
        ImputedPair {
            y_lo_obs,
            y_hi_obs,
            y_lo_at_hi_dose: y_lo_obs + (f_hi - f_lo),
            y_hi_at_lo_dose: y_hi_obs + (f_lo - f_hi),
            dose_lo,
            dose_hi,
        }
    }

    /// Observed outcomes `(lo, hi)` had the other unit of the pair received
    /// the lower dose.
    pub fn flipped_observation(&self) -> (f64, f64) {
        (self.y_hi_at_lo_dose, self.y_lo_at_hi_dose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedPairTable {
    pub rows: Vec<ImputedPair>,
    pub link: Link,
    pub log_offset: f64,
}

impl ImputedPairTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Maps an observed outcome to the link scale, naming the unit on failure.
pub fn link_outcome(unit: &str, y: f64, link: Link, log_offset: f64) -> Result<f64> {
    link.apply(y, log_offset)
        .ok_or_else(|| Error::NonPositiveOutcome {
            unit: unit.to_string(),
            value: y,
            offset: log_offset,
        })
}

pub(crate) fn lookup(outcomes: &HashMap<String, f64>, id: &str) -> Result<f64> {
    outcomes
        .get(id)
        .copied()
        .ok_or_else(|| Error::UnknownUnit(id.to_string()))
}

/// Imputes the science table of every pair under `h`.
pub fn impute_pair_table(
    pairs: &[MatchedPair],
    outcomes: &HashMap<String, f64>,
    h: &DoseResponseHypothesis,
) -> Result<ImputedPairTable> {
    h.validate()?;
    let link = h.effective_link();
    let rows = pairs
        .iter()
        .map(|p| {
            let lo = link_outcome(
                &p.unit_lo,
                lookup(outcomes, &p.unit_lo)?,
                link,
                h.log_offset,
            )?;
            let hi = link_outcome(
                &p.unit_hi,
                lookup(outcomes, &p.unit_hi)?,
                link,
                h.log_offset,
            )?;
            Ok(ImputedPair::impute(lo, hi, p.dose_lo, p.dose_hi, h))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImputedPairTable {
        rows,
        link,
        log_offset: h.log_offset,
    })
}
