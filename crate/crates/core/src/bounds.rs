//! Uniform-convergence bound for the empirical global risk and its inversion
//! into an error margin `eps_{l,m}` at confidence `1 - eta`.
//!
//! ```text
//! bound(eps) = 4 exp{ H_τ(2m) - m (eps - 1/m)^2 / (B_τ - A_τ)^2 }
//!            + 4 exp{ ln m + H_z(2l) - l (eps - 1/l)^2 / (B_z - A_z)^2 }
//! ```
//!
//! In growth-bound mode each entropy is replaced by `h (1 + ln(2n / h))`.
//! Terms are formed in log space; a term whose log falls below
//! `ln(1e-300)` saturates to zero.

use serde::{Deserialize, Serialize};

use crate::capacity::growth_bound;
use crate::error::{domain, Error, Result};
use crate::schedule::RangeSpec;

/// Log-space floor below which a bound term is reported as zero.
pub const LOG_UNDERFLOW: f64 = -690.775_527_898_213_7; // ln(1e-300)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    /// Annealed entropies `Ĥ_τ(2m)` and `Ĥ_z(2l)`.
    Entropies { h_tau_2m: f64, h_z_2l: f64 },
    /// Subject and data dimensions `h_τ`, `h_z`.
    Dimensions { h_tau: u64, h_z: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: u64,
    pub l: u64,
    pub ranges: RangeSpec,
    pub capacity: Capacity,
}

impl BoundInputs {
    pub fn new(m: u64, l: u64, ranges: RangeSpec, capacity: Capacity) -> Result<Self> {
        let inp = Self {
            m,
            l,
            ranges,
            capacity,
        };
        inp.validate()?;
        Ok(inp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 {
            return Err(domain("m and l must be at least 1"));
        }
        RangeSpec::new(self.ranges.bz, self.ranges.btau)?;
        match self.capacity {
            Capacity::Entropies { h_tau_2m, h_z_2l } => {
                if !(h_tau_2m >= 0.0 && h_z_2l >= 0.0 && h_tau_2m.is_finite() && h_z_2l.is_finite())
                {
                    return Err(domain("entropies must be finite and nonnegative"));
                }
            }
            Capacity::Dimensions { h_tau, h_z } => {
                if h_tau == 0 || h_z == 0 {
                    return Err(domain("dimensions must be at least 1"));
                }
                if 2 * self.m < h_tau || 2 * self.l < h_z {
                    return Err(domain(format!(
                        "growth bound needs 2m >= h_tau and 2l >= h_z (m={}, l={}, h_tau={h_tau}, h_z={h_z})",
                        self.m, self.l
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(Ĥ_τ(2m), Ĥ_z(2l))`, substituting the growth bound in dimension mode.
    pub fn entropies(&self) -> Result<(f64, f64)> {
        match self.capacity {
            Capacity::Entropies { h_tau_2m, h_z_2l } => Ok((h_tau_2m, h_z_2l)),
            Capacity::Dimensions { h_tau, h_z } => Ok((
                growth_bound(h_tau, 2 * self.m)?,
                growth_bound(h_z, 2 * self.l)?,
            )),
        }
    }

    fn eps_floor(&self) -> f64 {
        (1.0 / self.m as f64).max(1.0 / self.l as f64)
    }
}

/// Both terms of the bound at one `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundTerms {
    pub log_term1: f64,
    pub log_term2: f64,
    pub term1: f64,
    pub term2: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.term1 + self.term2
    }

    /// `ln(term1 + term2)` without underflow.
    pub fn log_total(&self) -> f64 {
        let hi = self.log_term1.max(self.log_term2);
        let lo = self.log_term1.min(self.log_term2);
        hi + (lo - hi).exp().ln_1p()
    }
}

fn saturate(log: f64) -> f64 {
    if log < LOG_UNDERFLOW {
        0.0
    } else {
        log.exp()
    }
}

pub fn bound_terms(inp: &BoundInputs, eps: f64) -> Result<BoundTerms> {
    inp.validate()?;
    if !eps.is_finite() || eps <= inp.eps_floor() {
        return Err(domain(format!(
            "eps = {eps} must exceed max(1/m, 1/l) = {}",
            inp.eps_floor()
        )));
    }
    let (h_tau, h_z) = inp.entropies()?;
    let m = inp.m as f64;
    let l = inp.l as f64;
    let btau2 = inp.ranges.btau * inp.ranges.btau;
    let bz2 = inp.ranges.bz * inp.ranges.bz;
    let d1 = eps - 1.0 / m;
    let d2 = eps - 1.0 / l;
    let ln4 = 4f64.ln();
    let log_term1 = ln4 + h_tau - m * d1 * d1 / btau2;
    let log_term2 = ln4 + m.ln() + h_z - l * d2 * d2 / bz2;
    Ok(BoundTerms {
        log_term1,
        log_term2,
        term1: saturate(log_term1),
        term2: saturate(log_term2),
    })
}

/// Raw two-term bound on `P{sup_α (R(α) - R_emp(α)) > eps}`; values at or
/// above one are vacuous but returned unclamped.
pub fn uniform_convergence_bound(inp: &BoundInputs, eps: f64) -> Result<f64> {
    Ok(bound_terms(inp, eps)?.total())
}

/// The `eps` at which the bound equals `eta`, searched on
/// `(max(1/m, 1/l), bz + btau]`.
pub fn solve_epsilon(eta: f64, inp: &BoundInputs) -> Result<f64> {
    solve_epsilon_with_max(eta, inp, inp.ranges.bz + inp.ranges.btau)
}

pub fn solve_epsilon_with_max(eta: f64, inp: &BoundInputs, eps_max: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(domain(format!("eta must lie in (0, 1), got {eta}")));
    }
    inp.validate()?;
    let target = eta.ln();
    let mut lo = inp.eps_floor();
    let mut hi = eps_max;
    if hi.is_nan() || hi <= lo {
        return Err(domain(format!(
            "eps_max = {eps_max} is below max(1/m, 1/l) = {lo}"
        )));
    }
    let at_hi = bound_terms(inp, hi)?;
    if at_hi.log_total() >= target {
        return Err(Error::Infeasible {
            eta,
            eps_max,
            bound: at_hi.total(),
        });
    }
    // at eps = max(1/m, 1/l) one term is at least 4 > eta, so the bracket is valid.
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bound_terms(inp, mid)?.log_total() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_entropy(m: u64, l: u64) -> BoundInputs {
        BoundInputs::new(
            m,
            l,
            RangeSpec::unit(),
            Capacity::Entropies {
                h_tau_2m: 0.0,
                h_z_2l: 0.0,
            },
        )
        .unwrap()
    }

    // 4e^{-24.01} + 4e^{ln 100 - 1e4 * 0.4999^2}, 50-digit reference
    const REFERENCE: f64 = 1.495_028_531_177_704_8e-10;

    #[test]
    fn bound_reference_value() {
        let inp = zero_entropy(100, 10_000);
        let b = uniform_convergence_bound(&inp, 0.5).unwrap();
        assert!((b / REFERENCE - 1.0).abs() < 1e-12, "{b}");
        let t = bound_terms(&inp, 0.5).unwrap();
        assert_eq!(t.term2, 0.0);
        assert!(t.log_term2 < LOG_UNDERFLOW);
    }

    #[test]
    fn eps_at_floor_is_rejected() {
        let inp = zero_entropy(100, 10_000);
        assert!(uniform_convergence_bound(&inp, 0.01).is_err());
        assert!(uniform_convergence_bound(&inp, 0.0).is_err());
    }

    #[test]
    fn doubling_l_never_increases_second_term() {
        let mut prev = f64::INFINITY;
        for l in [1_000u64, 2_000, 4_000, 8_000, 16_000, 100_000, 1_000_000] {
            let inp = BoundInputs::new(
                50,
                l,
                RangeSpec::unit(),
                Capacity::Entropies {
                    h_tau_2m: 1.0,
                    h_z_2l: 0.01 * l as f64,
                },
            )
            .unwrap();
            let t = bound_terms(&inp, 0.3).unwrap();
            assert!(t.log_term2 <= prev);
            prev = t.log_term2;
        }
    }

    #[test]
    fn inverse_of_reference() {
        let inp = zero_entropy(100, 10_000);
        for factor in [1.0 + 1e-6, 1.0 - 1e-6] {
            let eps = solve_epsilon(REFERENCE * factor, &inp).unwrap();
            assert!((eps - 0.5).abs() < 1e-4, "{eps}");
        }
    }

    #[test]
    fn round_trip() {
        let inp = BoundInputs::new(
            200,
            5_000,
            RangeSpec::unit(),
            Capacity::Dimensions { h_tau: 2, h_z: 3 },
        )
        .unwrap();
        for eta in [0.5, 0.05, 0.001] {
            let eps = solve_epsilon(eta, &inp).unwrap();
            let back = uniform_convergence_bound(&inp, eps).unwrap();
            assert!((back - eta).abs() < 1e-7, "eta {eta} -> {back}");
        }
    }

    #[test]
    fn infeasible_and_domain() {
        let inp = BoundInputs::new(
            2,
            3,
            RangeSpec::unit(),
            Capacity::Dimensions { h_tau: 1, h_z: 1 },
        )
        .unwrap();
        assert!(matches!(
            solve_epsilon(0.05, &inp),
            Err(Error::Infeasible { .. })
        ));
        assert!(solve_epsilon(1.5, &inp).is_err());
        assert!(BoundInputs::new(
            2,
            3,
            RangeSpec::unit(),
            Capacity::Dimensions { h_tau: 5, h_z: 1 }
        )
        .is_err());
    }

    fn rate_inputs(m: u64, l: u64, rate: f64) -> BoundInputs {
        BoundInputs::new(
            m,
            l,
            RangeSpec::unit(),
            Capacity::Entropies {
                h_tau_2m: rate * 2.0 * m as f64,
                h_z_2l: rate * 2.0 * l as f64,
            },
        )
        .unwrap()
    }

    #[test]
    fn more_data_shrinks_eps() {
        let eta = 0.05;
        for m in [100u64, 200, 400] {
            for l in [10u64, 20, 40] {
                let e1 = solve_epsilon(eta, &rate_inputs(m, l, 0.01)).unwrap();
                let e2 = solve_epsilon(eta, &rate_inputs(m, 100 * l, 0.01)).unwrap();
                assert!(e2 < e1, "m={m} l={l}: {e2} !< {e1}");
            }
        }
    }

    #[test]
    fn more_data_never_hurts_when_subjects_dominate() {
        let small = rate_inputs(20, 1_000, 0.01);
        let big = rate_inputs(20, 100_000, 0.01);
        assert!(solve_epsilon(0.05, &big).unwrap() <= solve_epsilon(0.05, &small).unwrap());
    }
}
