//! Monte Carlo checks over finite hypothesis classes with a known finite
//! truth: deviation probabilities of the one-sided empirical process, the
//! subject/data decomposition, consistency traces over level sets,
//! unbiasedness of the empirical global risk, and the risk gap on
//! multi-label data.
//!
//! Every replication draws `l` samples and then `m` subjects from its own
//! generator `stream_rng(seed, stream)`, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{confusion_error, multilabel_dataset, MultiLabelSpec};
use crate::error::{domain, Error, Result};
use crate::model::{
    basic_loss, Assignment, FiniteClass, HypothesisPair, LossKind, LossSpec, Predictor, Sample,
    SubjectSet,
};
use crate::risk::{global_risk, local_risk, FiniteDistribution};
use crate::solver::TabularClass;
use crate::stats::{bootstrap_percentile, mean, stream_rng, variance, wilson, Estimate};

/// Known generative model: a finite data distribution and a subject set.
#[derive(Debug, Clone)]
pub struct Truth {
    pub data: FiniteDistribution<Sample>,
    pub subjects: SubjectSet,
}

/// One estimate per `(m, l)` step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepEstimate {
    pub m: usize,
    pub l: usize,
    pub estimate: Estimate,
    /// Two-sided deviation probability, reported as auxiliary data.
    pub two_sided: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub replications: usize,
    pub seed: u64,
    /// The estimate at the last step.
    pub estimate: Estimate,
    pub per_step: Vec<StepEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub replications: usize,
    pub seed: u64,
    pub m: usize,
    pub l: usize,
    pub eps: f64,
    /// `P{sup (R - R_emp) > eps}`.
    pub lhs: Estimate,
    /// Subject term at `eps / 2`.
    pub subject_term: Estimate,
    /// Sum over the `m` drawn subjects of the data terms at `eps / 2`.
    pub data_terms_sum: Estimate,
    /// Largest single data term.
    pub data_term_max: f64,
    /// `lhs.ci_low > subject_term.ci_high + data_terms_sum.ci_high`.
    pub violation: bool,
}

impl DecompositionReport {
    pub fn rhs(&self) -> f64 {
        self.subject_term.value + self.data_terms_sum.value
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub replications: usize,
    pub seed: u64,
    pub mean: Estimate,
    pub true_risk: f64,
    pub std_error: f64,
    /// `None` when a single replication leaves no spread to judge by.
    pub pass: Option<bool>,
}

/// Per-member loss tables on the truth's support.
struct Tables {
    /// `q[α][atom][token]`.
    q: Vec<Vec<Vec<f64>>>,
    /// `local[α][token]`.
    local: Vec<Vec<f64>>,
    /// `risk[α]`.
    risk: Vec<f64>,
}

impl Tables {
    fn new(class: &FiniteClass<HypothesisPair>, truth: &Truth, loss: &LossSpec) -> Result<Self> {
        let subjects = truth.subjects.distribution();
        let tokens = truth.subjects.tokens();
        let mut q = Vec::with_capacity(class.len());
        let mut local = Vec::with_capacity(class.len());
        let mut risk = Vec::with_capacity(class.len());
        for hyp in class.iter() {
            risk.push(global_risk(hyp, &truth.data, &subjects, loss)?);
            local.push(
                tokens
                    .iter()
                    .map(|t| local_risk(hyp, t, &truth.data, loss))
                    .collect::<Result<Vec<_>>>()?,
            );
            q.push(
                truth
                    .data
                    .items()
                    .map(|z| tokens.iter().map(|t| basic_loss(loss, z, t, hyp)).collect())
                    .collect::<Result<Vec<Vec<_>>>>()?,
            );
        }
        Ok(Self { q, local, risk })
    }
}

/// Sup statistics of one replication.
struct Draw {
    /// `max_α (R - R_emp)`.
    sup_dev: f64,
    /// `max_α |R - R_emp|`.
    sup_abs: f64,
    /// `max_α (R - (1/m) Σ_k R^lo(τ_k))`.
    subject_sup: f64,
    /// `max_α (R^lo(τ_k) - (1/l) Σ_i Q(z_i, τ_k))` for each drawn subject.
    data_sups: Vec<f64>,
    /// `R_emp` per member.
    remp: Vec<f64>,
}

fn draw_indices(
    truth: &Truth,
    m: usize,
    l: usize,
    seed: u64,
    stream: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream_rng(seed, stream);
    let subjects = truth.subjects.distribution();
    let zs = (0..l).map(|_| truth.data.sample_index(&mut rng)).collect();
    let ts = (0..m).map(|_| subjects.sample_index(&mut rng)).collect();
    (zs, ts)
}

fn replicate(tables: &Tables, zs: &[usize], ts: &[usize]) -> Draw {
    let n_tokens = tables.local.first().map_or(0, Vec::len);
    let l = zs.len() as f64;
    let m = ts.len() as f64;
    let mut draw = Draw {
        sup_dev: f64::NEG_INFINITY,
        sup_abs: 0.0,
        subject_sup: f64::NEG_INFINITY,
        data_sups: vec![f64::NEG_INFINITY; ts.len()],
        remp: Vec::with_capacity(tables.risk.len()),
    };
    for (a, q) in tables.q.iter().enumerate() {
        // same summation order as the literal double average
        let inner: Vec<f64> = (0..n_tokens)
            .map(|t| {
                let mut s = 0.0;
                for &i in zs {
                    s += q[i][t];
                }
                s / l
            })
            .collect();
        let mut outer = 0.0;
        let mut lo_sum = 0.0;
        for (k, &t) in ts.iter().enumerate() {
            outer += inner[t];
            lo_sum += tables.local[a][t];
            draw.data_sups[k] = draw.data_sups[k].max(tables.local[a][t] - inner[t]);
        }
        let remp = outer / m;
        let r = tables.risk[a];
        draw.sup_dev = draw.sup_dev.max(r - remp);
        draw.sup_abs = draw.sup_abs.max((r - remp).abs());
        draw.subject_sup = draw.subject_sup.max(r - lo_sum / m);
        draw.remp.push(remp);
    }
    draw
}

fn check_sizes(m: usize, l: usize, reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(domain("reps must be at least 1"));
    }
    if m == 0 || l == 0 {
        return Err(domain("m and l must be at least 1"));
    }
    Ok(())
}

fn run<T, F>(truth: &Truth, m: usize, l: usize, reps: usize, seed: u64, base: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Vec<usize>, Vec<usize>) -> T + Sync,
{
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let (zs, ts) = draw_indices(truth, m, l, seed, base + r);
            f(zs, ts)
        })
        .collect()
}

/// Streams of step `s` start at `s << 32`.
fn step_base(step: usize) -> u64 {
    (step as u64) << 32
}

#[allow(clippy::too_many_arguments)]
fn deviation_step(
    tables: &Tables,
    truth: &Truth,
    eps: f64,
    m: usize,
    l: usize,
    reps: usize,
    seed: u64,
    base: u64,
) -> StepEstimate {
    let hits: Vec<(bool, bool)> = run(truth, m, l, reps, seed, base, |zs, ts| {
        let d = replicate(tables, &zs, &ts);
        (d.sup_dev > eps, d.sup_abs > eps)
    });
    let one = hits.iter().filter(|h| h.0).count();
    let two = hits.iter().filter(|h| h.1).count();
    StepEstimate {
        m,
        l,
        estimate: wilson(one, reps),
        two_sided: Some(wilson(two, reps)),
    }
}

/// `P{max_α (R(α) - R_emp(α, m, l)) > eps}` with a Wilson interval.
#[allow(clippy::too_many_arguments)]
pub fn deviation_probability(
    class: &FiniteClass<HypothesisPair>,
    truth: &Truth,
    loss: &LossSpec,
    eps: f64,
    m: usize,
    l: usize,
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    deviation_trace(class, truth, loss, eps, &[(m, l)], reps, seed)
}

/// [`deviation_probability`] at each `(m, l)` step, with independent
/// replications per step.
pub fn deviation_trace(
    class: &FiniteClass<HypothesisPair>,
    truth: &Truth,
    loss: &LossSpec,
    eps: f64,
    steps: &[(usize, usize)],
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    check_eps(eps)?;
    let tables = Tables::new(class, truth, loss)?;
    let per_step = steps
        .iter()
        .enumerate()
        .map(|(s, &(m, l))| {
            check_sizes(m, l, reps)?;
            Ok(deviation_step(
                &tables,
                truth,
                eps,
                m,
                l,
                reps,
                seed,
                step_base(s),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    report(reps, seed, per_step)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(domain(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

fn report(reps: usize, seed: u64, per_step: Vec<StepEstimate>) -> Result<ExperimentReport> {
    let last = per_step
        .last()
        .ok_or_else(|| domain("at least one step required"))?;
    Ok(ExperimentReport {
        replications: reps,
        seed,
        estimate: last.estimate,
        per_step,
    })
}

/// Left side at `eps` against the subject term plus the summed data terms,
/// both at `eps / 2`.
#[allow(clippy::too_many_arguments)]
pub fn decomposition_check(
    class: &FiniteClass<HypothesisPair>,
    truth: &Truth,
    loss: &LossSpec,
    eps: f64,
    m: usize,
    l: usize,
    reps: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    check_eps(eps)?;
    check_sizes(m, l, reps)?;
    let tables = Tables::new(class, truth, loss)?;
    let half = eps / 2.0;
    let draws: Vec<(bool, bool, Vec<bool>)> = run(truth, m, l, reps, seed, 0, |zs, ts| {
        let d = replicate(&tables, &zs, &ts);
        (
            d.sup_dev > eps,
            d.subject_sup > half,
            d.data_sups.iter().map(|&s| s > half).collect(),
        )
    });
    let lhs = wilson(draws.iter().filter(|d| d.0).count(), reps);
    let subject_term = wilson(draws.iter().filter(|d| d.1).count(), reps);
    let per_rep: Vec<f64> = draws
        .iter()
        .map(|d| d.2.iter().filter(|&&b| b).count() as f64)
        .collect();
    let data_terms_sum = bootstrap_percentile(&per_rep, seed, mean);
    let data_term_max = (0..m)
        .map(|k| draws.iter().filter(|d| d.2[k]).count() as f64 / reps as f64)
        .fold(0.0, f64::max);
    let violation = lhs.ci_low > subject_term.ci_high + data_terms_sum.ci_high;
    Ok(DecompositionReport {
        replications: reps,
        seed,
        m,
        l,
        eps,
        lhs,
        subject_term,
        data_terms_sum,
        data_term_max,
        violation,
    })
}

/// Indices of the members with true risk at least `c`.
pub fn level_set(
    class: &FiniteClass<HypothesisPair>,
    truth: &Truth,
    loss: &LossSpec,
    c: f64,
) -> Result<Vec<usize>> {
    let subjects = truth.subjects.distribution();
    let risks: Vec<f64> = class
        .iter()
        .map(|h| global_risk(h, &truth.data, &subjects, loss))
        .collect::<Result<_>>()?;
    let kept: Vec<usize> = (0..risks.len()).filter(|&i| risks[i] >= c).collect();
    if kept.is_empty() {
        return Err(Error::EmptyLevelSet {
            c,
            max_risk: risks.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    Ok(kept)
}

/// `E |inf_{Λ(c)} R_emp - inf_{Λ(c)} R|` along `steps`, with bootstrap
/// intervals.
pub fn consistency_trace(
    class: &FiniteClass<HypothesisPair>,
    truth: &Truth,
    loss: &LossSpec,
    c: f64,
    steps: &[(usize, usize)],
    reps: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let kept = level_set(class, truth, loss, c)?;
    let restricted = FiniteClass::new(kept.iter().map(|&i| class.members()[i].clone()).collect())?;
    let tables = Tables::new(&restricted, truth, loss)?;
    let inf_r = tables.risk.iter().copied().fold(f64::INFINITY, f64::min);
    let per_step = steps
        .iter()
        .enumerate()
        .map(|(s, &(m, l))| {
            check_sizes(m, l, reps)?;
            let devs: Vec<f64> = run(truth, m, l, reps, seed, step_base(s), |zs, ts| {
                let d = replicate(&tables, &zs, &ts);
                (d.remp.iter().copied().fold(f64::INFINITY, f64::min) - inf_r).abs()
            });
            Ok(StepEstimate {
                m,
                l,
                estimate: bootstrap_percentile(&devs, seed, mean),
                two_sided: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report(reps, seed, per_step)
}

/// Mean of `R_emp(α)` over replications against the exact `R(α)`; passes
/// within three standard errors.
#[allow(clippy::too_many_arguments)]
pub fn unbiasedness_check(
    hyp: &HypothesisPair,
    truth: &Truth,
    loss: &LossSpec,
    m: usize,
    l: usize,
    reps: usize,
    seed: u64,
) -> Result<UnbiasednessReport> {
    check_sizes(m, l, reps)?;
    let class = FiniteClass::new(vec![hyp.clone()])?;
    let tables = Tables::new(&class, truth, loss)?;
    let remps: Vec<f64> = run(truth, m, l, reps, seed, 0, |zs, ts| {
        replicate(&tables, &zs, &ts).remp[0]
    });
    let true_risk = tables.risk[0];
    let std_error = (variance(&remps) / reps as f64).sqrt();
    let mean_est = bootstrap_percentile(&remps, seed, mean);
    let pass = (reps > 1).then(|| (mean_est.value - true_risk).abs() <= 3.0 * std_error + 1e-12);
    Ok(UnbiasednessReport {
        replications: reps,
        seed,
        mean: mean_est,
        true_risk,
        std_error,
        pass,
    })
}

/// Measured risk gap on clean multi-label data against its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCheck {
    pub erm_risk: f64,
    pub egrm_risk: f64,
    pub gap: f64,
    pub confusion_error: f64,
}

impl GapCheck {
    pub fn matches(&self, tol: f64) -> bool {
        (self.gap - self.confusion_error).abs() <= tol
    }
}

/// Squared loss with an upper bound wide enough that no label pair is
/// clamped.
pub fn unclamped_squared_loss(spec: &MultiLabelSpec) -> LossSpec {
    let span = spec.label_span();
    LossSpec::new(LossKind::Squared, 0.0, (span * span).max(1.0)).expect("positive upper bound")
}

/// Exact ERM and EGRM (one subject per label slot) over lookup tables whose
/// candidates are the observed labels and their means.
pub fn gap_check(spec: &MultiLabelSpec, loss: &LossSpec) -> Result<GapCheck> {
    let data = multilabel_dataset(spec)?;
    let class = TabularClass::from_labels_and_means(&data.samples)?;
    let dist = FiniteDistribution::uniform(data.samples)?;
    let subjects = SubjectSet::uniform(spec.labels_per_input)?;
    let erm = class.erm_fit(&dist, loss)?;
    let egrm = class.egrm_fit(&dist, &subjects, loss, 1 << 20)?;
    Ok(GapCheck {
        erm_risk: erm.risk,
        egrm_risk: egrm.risk,
        gap: erm.risk - egrm.risk,
        confusion_error: confusion_error(spec, loss)?,
    })
}

/// Every `(g, h)` pair, `g`-major.
pub fn product_class(gs: &[Predictor], hs: &[Assignment]) -> Result<FiniteClass<HypothesisPair>> {
    FiniteClass::new(
        gs.iter()
            .flat_map(|g| {
                hs.iter()
                    .map(move |h| HypothesisPair::new(g.clone(), h.clone()))
            })
            .collect(),
    )
}

/// The 16-candidate instance: samples `(0, 0)` and `(0, 1)` under a uniform
/// truth, two subjects, per-subject constants in `{0, 1}` and every hard
/// assignment.
pub fn conflict_instance() -> Result<(FiniteClass<HypothesisPair>, Truth)> {
    let samples = vec![Sample::scalar(0.0, 0.0)?, Sample::scalar(0.0, 1.0)?];
    let subjects = SubjectSet::uniform(2)?;
    let gs: Vec<Predictor> = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        .iter()
        .map(|v| Predictor::PerSubject(v.to_vec()))
        .collect();
    let hs = Assignment::all_hard(&samples, &subjects, 1 << 10)?;
    let class = product_class(&gs, &hs)?;
    let truth = Truth {
        data: FiniteDistribution::uniform(samples)?,
        subjects,
    };
    Ok((class, truth))
}

/// Three coordinate predictors `g_k(x) = x_k` on `x ∈ {0,1}^3` with
/// independent Bernoulli coordinates and `y = 0`; under absolute loss the
/// true risks equal `probs`.
pub fn coordinate_instance(probs: [f64; 3]) -> Result<(FiniteClass<HypothesisPair>, Truth)> {
    let mut atoms = Vec::with_capacity(8);
    for bits in 0..8u32 {
        let x: Vec<f64> = (0..3).map(|k| f64::from((bits >> k) & 1)).collect();
        let w: f64 = (0..3)
            .map(|k| {
                if x[k] == 1.0 {
                    probs[k]
                } else {
                    1.0 - probs[k]
                }
            })
            .product();
        if w > 0.0 {
            atoms.push((Sample::new(x, 0.0)?, w));
        }
    }
    let class = FiniteClass::new(
        (0..3)
            .map(|k| {
                let mut weights = vec![0.0; 3];
                weights[k] = 1.0;
                HypothesisPair::lift(Predictor::Affine {
                    weights: vec![weights],
                    bias: vec![0.0],
                })
            })
            .collect(),
    )?;
    let truth = Truth {
        data: FiniteDistribution::new(atoms)?,
        subjects: SubjectSet::uniform(1)?,
    };
    Ok((class, truth))
}
