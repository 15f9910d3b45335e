//! Separation counts of indicator sets `θ{f(p) - β}`, annealed entropies,
//! brute-force shattering dimensions and the growth-function bound.
//!
//! `θ(u) = 1` for `u >= 0`. A separation is a distinct binary pattern over
//! the points; `N` counts distinct patterns, not `(f, β)` pairs.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{
    basic_loss, FiniteClass, HypothesisPair, LossSpec, Sample, SubjectSet, SubjectToken,
};
use crate::risk::{local_risk, FiniteDistribution};
use crate::stats::{bootstrap_percentile, mean, stream_rng, Estimate};

/// Largest point count a pattern key can hold.
pub const MAX_POINTS: usize = 128;
/// Largest subset size searched by [`brute_dimension`].
pub const MAX_DIMENSION_SEARCH: usize = 20;
/// Default number of thresholds in a linear β grid.
pub const DEFAULT_GRID_SIZE: usize = 32;

pub type RealFn<P> = Arc<dyn Fn(&P) -> f64 + Send + Sync>;

#[derive(Debug, Clone, PartialEq)]
pub enum BetaGrid {
    /// Finite, strictly increasing thresholds.
    Fixed(Vec<f64>),
    /// Every function value observed on the current points, plus one
    /// threshold above all of them. Realizes every pattern a continuum of
    /// thresholds can produce.
    Complete,
}

/// A finite real-valued function class together with its thresholds.
#[derive(Clone)]
pub struct IndicatorClass<P> {
    functions: Vec<RealFn<P>>,
    grid: BetaGrid,
}

impl<P> fmt::Debug for IndicatorClass<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IndicatorClass")
            .field("functions", &self.functions.len())
            .field("grid", &self.grid)
            .finish()
    }
}

impl<P> IndicatorClass<P> {
    pub fn new(functions: Vec<RealFn<P>>, grid: BetaGrid) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::EmptyClass);
        }
        if let BetaGrid::Fixed(g) = &grid {
            if g.is_empty() {
                return Err(domain("beta grid must be nonempty"));
            }
            if g.iter().any(|b| !b.is_finite()) || g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(domain("beta grid must be finite and strictly increasing"));
            }
        }
        Ok(Self { functions, grid })
    }

    /// Linear grid of `size` thresholds spanning the function values seen on
    /// `reference` points.
    pub fn with_linear_grid(
        functions: Vec<RealFn<P>>,
        reference: &[P],
        size: usize,
    ) -> Result<Self> {
        if size == 0 || reference.is_empty() {
            return Err(domain(
                "linear grid needs a positive size and reference points",
            ));
        }
        let (lo, hi) = functions
            .iter()
            .flat_map(|f| reference.iter().map(move |p| f(p)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        Self::new(functions, BetaGrid::Fixed(linspace(lo, hi, size)))
    }

    pub fn functions(&self) -> &[RealFn<P>] {
        &self.functions
    }

    pub fn grid(&self) -> &BetaGrid {
        &self.grid
    }
}

/// `size` evenly spaced values from `lo` to `hi`; a single value when the
/// range is degenerate.
pub fn linspace(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..size)
        .map(|i| lo + (hi - lo) * i as f64 / (size - 1) as f64)
        .collect()
}

/// The single function `f(x) = x`: indicators are half-lines `x >= β`.
pub fn threshold_family(grid: BetaGrid) -> Result<IndicatorClass<f64>> {
    IndicatorClass::new(vec![Arc::new(|x: &f64| *x)], grid)
}

/// Interval indicators `1{a <= x <= b}` for every pair of endpoints `a <= b`.
pub fn interval_family(endpoints: &[f64], grid: BetaGrid) -> Result<IndicatorClass<f64>> {
    let mut functions: Vec<RealFn<f64>> = Vec::new();
    for (i, &a) in endpoints.iter().enumerate() {
        for &b in &endpoints[i..] {
            if a <= b {
                functions.push(Arc::new(
                    move |x: &f64| if a <= *x && *x <= b { 1.0 } else { 0.0 },
                ));
            }
        }
    }
    IndicatorClass::new(functions, grid)
}

/// Constant functions `f ≡ c`.
pub fn constant_family(values: &[f64], grid: BetaGrid) -> Result<IndicatorClass<f64>> {
    let functions = values
        .iter()
        .map(|&c| Arc::new(move |_: &f64| c) as RealFn<f64>)
        .collect();
    IndicatorClass::new(functions, grid)
}

/// Local-risk functions `τ ↦ R^lo(τ, α)`, one per class member, tabulated
/// on the subject tokens of `subjects`.
pub fn local_risk_indicators(
    class: &FiniteClass<HypothesisPair>,
    subjects: &SubjectSet,
    data: &FiniteDistribution<Sample>,
    loss: &LossSpec,
    grid: BetaGrid,
) -> Result<IndicatorClass<SubjectToken>> {
    let mut functions: Vec<RealFn<SubjectToken>> = Vec::with_capacity(class.len());
    for hyp in class.iter() {
        let table: Vec<f64> = subjects
            .tokens()
            .iter()
            .map(|t| local_risk(hyp, t, data, loss))
            .collect::<Result<_>>()?;
        functions.push(Arc::new(move |t: &SubjectToken| {
            table.get(t.id).copied().unwrap_or(f64::NAN)
        }));
    }
    IndicatorClass::new(functions, grid)
}

/// Basic-loss functions `z ↦ Q(z, τ, α)` under a fixed subject, one per
/// class member, tabulated on `support`. Points outside the support
/// evaluate to NaN and never pass a threshold.
pub fn basic_loss_indicators(
    class: &FiniteClass<HypothesisPair>,
    tau: &SubjectToken,
    support: &[Sample],
    loss: &LossSpec,
    grid: BetaGrid,
) -> Result<IndicatorClass<Sample>> {
    let mut functions: Vec<RealFn<Sample>> = Vec::with_capacity(class.len());
    for hyp in class.iter() {
        let table: HashMap<_, f64> = support
            .iter()
            .map(|z| Ok((z.key(), basic_loss(loss, z, tau, hyp)?)))
            .collect::<Result<_>>()?;
        functions.push(Arc::new(move |z: &Sample| {
            table.get(&z.key()).copied().unwrap_or(f64::NAN)
        }));
    }
    IndicatorClass::new(functions, grid)
}

/// Number of distinct patterns `(θ{f(p) - β})_p` over all `(f, β)`.
pub fn separation_count<P>(cls: &IndicatorClass<P>, points: &[P]) -> Result<u64> {
    let n = points.len();
    if n == 0 {
        return Err(domain("separation count needs at least one point"));
    }
    if n > MAX_POINTS {
        return Err(Error::SizeLimit {
            what: "point count",
            size: n as u128,
            limit: MAX_POINTS as u128,
            hint: "",
        });
    }
    let values: Vec<Vec<f64>> = cls
        .functions
        .iter()
        .map(|f| points.iter().map(|p| f(p)).collect())
        .collect();
    let betas: Vec<f64> = match &cls.grid {
        BetaGrid::Fixed(g) => g.clone(),
        BetaGrid::Complete => {
            let mut all: Vec<f64> = values
                .iter()
                .flatten()
                .copied()
                .filter(|v| v.is_finite())
                .collect();
            all.sort_by(|a, b| a.total_cmp(b));
            all.dedup();
            let top = all.last().copied().unwrap_or(0.0);
            all.push(top + 1.0);
            all
        }
    };
    let mut patterns: HashSet<u128> = HashSet::new();
    for row in &values {
        for &beta in &betas {
            let key = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v - beta >= 0.0)
                .fold(0u128, |k, (i, _)| k | (1u128 << i));
            patterns.insert(key);
        }
    }
    Ok(patterns.len() as u64)
}

/// Source of i.i.d. points for annealed-entropy estimation.
pub trait PointSource<P>: Sync {
    fn draw(&self, rng: &mut ChaCha8Rng) -> P;
}

impl<T: Clone + Sync> PointSource<T> for FiniteDistribution<T> {
    fn draw(&self, rng: &mut ChaCha8Rng) -> T {
        FiniteDistribution::draw(self, rng)
    }
}

/// Continuous uniform points on `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformInterval {
    pub lo: f64,
    pub hi: f64,
}

impl PointSource<f64> for UniformInterval {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen_range(self.lo..self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityReport {
    pub n: usize,
    pub reps: usize,
    /// Mean separation count over the replications.
    pub mean_separation_count: f64,
    pub min_separation_count: u64,
    pub max_separation_count: u64,
    /// `Ĥ(n) = ln E N`, with a percentile-bootstrap 95% interval.
    pub annealed_entropy: Estimate,
    /// `Ĥ(n) / n`.
    pub entropy_rate: f64,
}

/// Monte Carlo estimate of `ln E N(p_1, ..., p_n)` over `reps` draws of `n`
/// i.i.d. points.
pub fn annealed_entropy<P, S>(
    cls: &IndicatorClass<P>,
    n: usize,
    source: &S,
    reps: usize,
    seed: u64,
) -> Result<CapacityReport>
where
    P: Send,
    S: PointSource<P>,
{
    if reps == 0 {
        return Err(domain("reps must be at least 1"));
    }
    if n == 0 {
        return Err(domain("n must be at least 1"));
    }
    let counts: Vec<u64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let points: Vec<P> = (0..n).map(|_| source.draw(&mut rng)).collect();
            separation_count(cls, &points)
        })
        .collect::<Result<_>>()?;
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let entropy = bootstrap_percentile(&as_f64, seed, |xs| mean(xs).ln());
    Ok(CapacityReport {
        n,
        reps,
        mean_separation_count: mean(&as_f64),
        min_separation_count: *counts.iter().min().expect("reps >= 1"),
        max_separation_count: *counts.iter().max().expect("reps >= 1"),
        entropy_rate: entropy.value / n as f64,
        annealed_entropy: entropy,
    })
}

/// Largest `n <= max_n` such that some `n`-subset of `pool` is shattered;
/// zero when no single point is.
pub fn brute_dimension<P: Clone + Sync>(
    cls: &IndicatorClass<P>,
    pool: &[P],
    max_n: usize,
) -> Result<usize> {
    if max_n > MAX_DIMENSION_SEARCH {
        return Err(Error::SizeLimit {
            what: "dimension search depth",
            size: max_n as u128,
            limit: MAX_DIMENSION_SEARCH as u128,
            hint: "",
        });
    }
    let mut best = 0;
    for n in 1..=max_n.min(pool.len()) {
        if !some_subset_shattered(cls, pool, n)? {
            break;
        }
        best = n;
    }
    Ok(best)
}

fn some_subset_shattered<P: Clone + Sync>(
    cls: &IndicatorClass<P>,
    pool: &[P],
    n: usize,
) -> Result<bool> {
    let full = 1u64 << n;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let subset: Vec<P> = idx.iter().map(|&i| pool[i].clone()).collect();
        if separation_count(cls, &subset)? == full {
            return Ok(true);
        }
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(false);
            }
            i -= 1;
            if idx[i] < pool.len() - n + i {
                break;
            }
        }
        idx[i] += 1;
        for k in i + 1..n {
            idx[k] = idx[k - 1] + 1;
        }
    }
}

/// `h (ln(n / h) + 1)`, the growth-function bound for dimension `h`.
pub fn growth_bound(h: u64, n: u64) -> Result<f64> {
    if h == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    if n < h {
        return Err(domain(format!(
            "growth bound needs n >= h, got n={n}, h={h}"
        )));
    }
    let h = h as f64;
    Ok(h * ((n as f64 / h).ln() + 1.0))
}

/// `(min, max)` of the local risk over every `(member, subject)` pair:
/// empirical `A_τ` and `B_τ`.
pub fn empirical_local_risk_range(
    class: &FiniteClass<HypothesisPair>,
    subjects: &FiniteDistribution<SubjectToken>,
    data: &FiniteDistribution<Sample>,
    loss: &LossSpec,
) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for hyp in class.iter() {
        hyp.h.check_subjects(subjects)?;
        for tau in subjects.items() {
            let r = local_risk(hyp, tau, data, loss)?;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}
