//! Risk functionals over finite weighted distributions.
//!
//! Sums run subjects outer, samples inner, in ascending index order. A
//! uniform distribution is summed and then divided by its size, so with
//! uniform data and subjects `global_risk` is literally
//! `(1/m) Σ_j (1/l) Σ_i Q(z_i, τ_j, α)`.

use rand::Rng;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{
    basic_loss, FiniteClass, HypothesisPair, LossSpec, Predictor, Sample, SubjectToken,
};

/// Weight-sum tolerance for non-uniform distributions.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite probability measure. Atoms may repeat; an empirical measure over
/// draws keeps one atom per draw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDistribution<T> {
    atoms: Vec<(T, f64)>,
    cumulative: Vec<f64>,
    uniform: bool,
}

impl<T> FiniteDistribution<T> {
    pub fn new(atoms: Vec<(T, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if let Some((_, w)) = atoms
            .iter()
            .find(|(_, w)| !(w.is_finite() && (0.0..=1.0).contains(w)))
        {
            return Err(Error::InvalidDistribution(format!(
                "weight {w} outside [0, 1]"
            )));
        }
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "weights sum to {total}"
            )));
        }
        let uniform = atoms.iter().all(|(_, w)| *w == atoms[0].1);
        let cumulative = cumulative(atoms.iter().map(|(_, w)| *w));
        Ok(Self {
            atoms,
            cumulative,
            uniform,
        })
    }

    /// Equal weight on every item; the empirical measure of a sample.
    pub fn uniform(items: Vec<T>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let w = 1.0 / items.len() as f64;
        let atoms: Vec<(T, f64)> = items.into_iter().map(|t| (t, w)).collect();
        let cumulative = cumulative(atoms.iter().map(|(_, w)| *w));
        Ok(Self {
            atoms,
            cumulative,
            uniform: true,
        })
    }

    pub fn atoms(&self) -> &[(T, f64)] {
        &self.atoms
    }

    pub fn items(&self) -> impl Iterator<Item = &T> {
        self.atoms.iter().map(|(t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// `E[f]`, summing in atom order.
    pub fn expect<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(&T) -> Result<f64>,
    {
        if self.uniform {
            let mut total = 0.0;
            for (t, _) in &self.atoms {
                total += f(t)?;
            }
            Ok(total / self.atoms.len() as f64)
        } else {
            let mut total = 0.0;
            for (t, w) in &self.atoms {
                total += w * f(t)?;
            }
            Ok(total)
        }
    }

    /// One draw by inverse CDF.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.atoms.len() - 1)
    }
}

impl<T: Clone> FiniteDistribution<T> {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.atoms[self.sample_index(rng)].0.clone()
    }

    /// `n` i.i.d. draws.
    pub fn draw_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<T> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// `R_t(g) = ∫ L(z, g(z)) dF(z)` for a subject-invariant predictor.
pub fn traditional_risk(
    g: &Predictor,
    data: &FiniteDistribution<Sample>,
    loss: &LossSpec,
) -> Result<f64> {
    if !g.is_subject_invariant() {
        return Err(domain(
            "traditional risk needs a subject-invariant predictor",
        ));
    }
    data.expect(|z| Ok(loss.eval(z.y(), g.predict(z, 0)?)))
}

/// `R^lo(α, τ) = ∫ Q(z, τ, α) dF(z)`.
pub fn local_risk(
    hyp: &HypothesisPair,
    tau: &SubjectToken,
    data: &FiniteDistribution<Sample>,
    loss: &LossSpec,
) -> Result<f64> {
    data.expect(|z| basic_loss(loss, z, tau, hyp))
}

/// `R(α) = ∬ Q(z, τ, α) dF(z) dF(τ)`; with uniform distributions this is
/// the empirical global risk.
pub fn global_risk(
    hyp: &HypothesisPair,
    data: &FiniteDistribution<Sample>,
    subjects: &FiniteDistribution<SubjectToken>,
    loss: &LossSpec,
) -> Result<f64> {
    hyp.h.check_subjects(subjects)?;
    subjects.expect(|tau| local_risk(hyp, tau, data, loss))
}

/// `R_emp(α, m, l) = (1/m) Σ_j (1/l) Σ_i Q(z_i, τ_j, α)` over raw draws.
pub fn empirical_global_risk(
    hyp: &HypothesisPair,
    data: &[Sample],
    subjects: &[SubjectToken],
    loss: &LossSpec,
) -> Result<f64> {
    if data.is_empty() || subjects.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut outer = 0.0;
    for tau in subjects {
        let mut inner = 0.0;
        for z in data {
            inner += basic_loss(loss, z, tau, hyp)?;
        }
        outer += inner / data.len() as f64;
    }
    Ok(outer / subjects.len() as f64)
}

/// Index and value of the smallest entry; ties go to the lowest index.
pub(crate) fn argmin<I>(values: I) -> Option<(usize, f64)>
where
    I: IntoIterator<Item = f64>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v >= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// Outcome of comparing the ERM and EGRM infima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskGap {
    pub erm_risk: f64,
    pub erm_index: usize,
    pub egrm_risk: f64,
    pub egrm_index: usize,
    /// `inf R_t - inf R_s`.
    pub gap: f64,
}

/// `ΔR* = inf_{erm_class} R_t − inf_{egrm_class} R_s`.
pub fn risk_gap(
    erm_class: &FiniteClass<Predictor>,
    egrm_class: &FiniteClass<HypothesisPair>,
    data: &FiniteDistribution<Sample>,
    subjects: &FiniteDistribution<SubjectToken>,
    loss: &LossSpec,
) -> Result<RiskGap> {
    let erm: Vec<f64> = erm_class
        .iter()
        .map(|g| traditional_risk(g, data, loss))
        .collect::<Result<_>>()?;
    let egrm: Vec<f64> = egrm_class
        .iter()
        .map(|h| global_risk(h, data, subjects, loss))
        .collect::<Result<_>>()?;
    let (erm_index, erm_risk) = argmin(erm).ok_or(Error::EmptyClass)?;
    let (egrm_index, egrm_risk) = argmin(egrm).ok_or(Error::EmptyClass)?;
    Ok(RiskGap {
        erm_risk,
        erm_index,
        egrm_risk,
        egrm_index,
        gap: erm_risk - egrm_risk,
    })
}
