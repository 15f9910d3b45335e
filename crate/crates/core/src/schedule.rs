//! Coupled sample-size rule between the subject count `m` and the data
//! count `l`:
//!
//! ```text
//! l > 2 (B_z - A_z)^2 / eps^2 · ln m + (B_z - A_z)^2 / (B_τ - A_τ)^2 · m
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Widths of the loss range (`B_z - A_z`) and local-risk range
/// (`B_τ - A_τ`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSpec {
    pub bz: f64,
    pub btau: f64,
}

impl RangeSpec {
    pub fn new(bz: f64, btau: f64) -> Result<Self> {
        if !(bz > 0.0 && bz.is_finite() && btau > 0.0 && btau.is_finite()) {
            return Err(domain(format!(
                "ranges must be positive, got bz={bz}, btau={btau}"
            )));
        }
        Ok(Self { bz, btau })
    }

    /// Losses normalized to `[0, 1]`.
    pub fn unit() -> Self {
        Self { bz: 1.0, btau: 1.0 }
    }
}

impl Default for RangeSpec {
    fn default() -> Self {
        Self::unit()
    }
}

/// Right-hand side of the coupled rule.
pub fn rule_rhs(m: u64, eps: f64, ranges: &RangeSpec) -> Result<f64> {
    if m == 0 {
        return Err(domain("m must be at least 1"));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    let bz2 = ranges.bz * ranges.bz;
    let m = m as f64;
    Ok(2.0 * bz2 / (eps * eps) * m.ln() + bz2 / (ranges.btau * ranges.btau) * m)
}

/// Smallest integer `l` strictly above the rule's right-hand side.
pub fn min_data_samples(m: u64, eps: f64, ranges: &RangeSpec) -> Result<u64> {
    let rhs = rule_rhs(m, eps, ranges)?;
    if rhs >= u64::MAX as f64 {
        return Err(domain(format!("required sample count {rhs} overflows")));
    }
    Ok(rhs.floor() as u64 + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleStep {
    pub m: u64,
    pub l: u64,
    pub rhs: f64,
}

/// `(m, l)` pairs for strictly increasing `m_values`.
///
/// Fails if two consecutive steps would share the same `l`, which can happen
/// when `(bz / btau)^2` is small.
pub fn make_schedule(m_values: &[u64], eps: f64, ranges: &RangeSpec) -> Result<Vec<ScheduleStep>> {
    if m_values.is_empty() {
        return Err(domain("schedule needs at least one m value"));
    }
    if let Some(w) = m_values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(domain(format!(
            "m values must be strictly increasing, got {} then {}",
            w[0], w[1]
        )));
    }
    let steps: Vec<ScheduleStep> = m_values
        .iter()
        .map(|&m| {
            Ok(ScheduleStep {
                m,
                l: min_data_samples(m, eps, ranges)?,
                rhs: rule_rhs(m, eps, ranges)?,
            })
        })
        .collect::<Result<_>>()?;
    if let Some(w) = steps.windows(2).find(|w| w[1].l <= w[0].l) {
        return Err(domain(format!(
            "m = {} and m = {} both need l = {}; l must increase along the schedule",
            w[0].m, w[1].m, w[1].l
        )));
    }
    Ok(steps)
}
