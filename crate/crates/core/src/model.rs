//! Domain types shared by every risk functional: samples, subject tokens,
//! bounded losses, the joint hypothesis `(g, h)` and the basic loss
//! `Q(z, τ, α) = L0(z, τ, g(z, τ)) · h(z, τ)`.
//!
//! `g` is a point predictor evaluated per subject. `h` is a density ratio
//! `p(τ|z) / p(τ)`, so every row of an assignment satisfies
//! `Σ_j h(z, τ_j) · prior(τ_j) = 1`.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::risk::FiniteDistribution;

/// Tolerance on `Σ_j h(z, τ_j) · prior(τ_j) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Tolerance on the sum of subject priors.
pub const PRIOR_SUM_TOL: f64 = 1e-12;

/// One observation `z = (x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    x: Vec<f64>,
    y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(domain(format!(
                "sample coordinates must be finite, got x={x:?}, y={y}"
            )));
        }
        Ok(Self { x, y })
    }

    /// Sample with a single scalar feature.
    pub fn scalar(x: f64, y: f64) -> Result<Self> {
        Self::new(vec![x], y)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    /// Exact identity of the sample, usable as a hash key.
    pub fn key(&self) -> SampleKey {
        let mut bits: Vec<u64> = self.x.iter().map(|&v| canonical_bits(v)).collect();
        bits.push(canonical_bits(self.y));
        SampleKey(bits)
    }

    /// Exact identity of the input `x` alone.
    pub fn input_key(&self) -> InputKey {
        InputKey::of(&self.x)
    }
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(x={:?}, y={})", self.x, self.y)
    }
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same point
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleKey(Vec<u64>);

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputKey(Vec<u64>);

impl InputKey {
    pub fn of(x: &[f64]) -> Self {
        InputKey(x.iter().map(|&v| canonical_bits(v)).collect())
    }
}

/// One subject `τ_j` with its prior weight under `F(τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectToken {
    pub id: usize,
    pub prior: f64,
}

/// The population of subject tokens: ids `0..m` with priors summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectSet {
    tokens: Vec<SubjectToken>,
    uniform: bool,
}

impl SubjectSet {
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(domain("subject set needs at least one subject"));
        }
        let prior = 1.0 / m as f64;
        Ok(Self {
            tokens: (0..m).map(|id| SubjectToken { id, prior }).collect(),
            uniform: true,
        })
    }

    pub fn from_priors(priors: &[f64]) -> Result<Self> {
        if priors.is_empty() {
            return Err(domain("subject set needs at least one subject"));
        }
        if let Some(p) = priors.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(domain(format!("subject prior {p} outside (0, 1]")));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(domain(format!("subject priors sum to {total}, expected 1")));
        }
        let uniform = priors.iter().all(|&p| p == priors[0]);
        Ok(Self {
            tokens: priors
                .iter()
                .enumerate()
                .map(|(id, &prior)| SubjectToken { id, prior })
                .collect(),
            uniform,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[SubjectToken] {
        &self.tokens
    }

    pub fn priors(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.prior).collect()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// `F(τ)` as a finite distribution weighted by the priors.
    pub fn distribution(&self) -> FiniteDistribution<SubjectToken> {
        if self.uniform {
            FiniteDistribution::uniform(self.tokens.clone()).expect("subject set is nonempty")
        } else {
            FiniteDistribution::new(self.tokens.iter().map(|t| (*t, t.prior)).collect())
                .expect("priors validated at construction")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Squared,
    Absolute,
    /// Misclassified iff `|g - y| >= 0.5`.
    ZeroOne,
}

/// A loss with its clamping range `[A_z, B_z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lower: f64,
    pub upper: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(domain(format!(
                "loss range needs finite lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { kind, lower, upper })
    }

    /// Loss clamped into `[0, 1]`.
    pub fn unit(kind: LossKind) -> Self {
        Self {
            kind,
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    /// `L0(y, prediction)` clamped into `[lower, upper]`.
    pub fn eval(&self, y: f64, prediction: f64) -> f64 {
        let diff = prediction - y;
        let raw = match self.kind {
            LossKind::Squared => diff * diff,
            LossKind::Absolute => diff.abs(),
            LossKind::ZeroOne => {
                if diff.abs() >= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        raw.clamp(self.lower, self.upper)
    }
}

/// Lookup-table predictor: one row per distinct input, each row holding
/// either one shared value or one value per subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct TablePredictor {
    inputs: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    index: HashMap<InputKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    inputs: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<TableRepr> for TablePredictor {
    type Error = Error;
    fn try_from(r: TableRepr) -> Result<Self> {
        TablePredictor::new(r.inputs, r.values)
    }
}

impl From<TablePredictor> for TableRepr {
    fn from(t: TablePredictor) -> Self {
        TableRepr {
            inputs: t.inputs,
            values: t.values,
        }
    }
}

impl PartialEq for TablePredictor {
    fn eq(&self, other: &Self) -> bool {
        self.inputs == other.inputs && self.values == other.values
    }
}

impl TablePredictor {
    pub fn new(inputs: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.len() != values.len() {
            return Err(domain("table needs one value row per input"));
        }
        let mut index = HashMap::with_capacity(inputs.len());
        for (i, x) in inputs.iter().enumerate() {
            if values[i].is_empty() {
                return Err(domain("table rows must be nonempty"));
            }
            if index.insert(InputKey::of(x), i).is_some() {
                return Err(domain(format!("duplicate table input {x:?}")));
            }
        }
        Ok(Self {
            inputs,
            values,
            index,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    fn lookup(&self, x: &[f64], subject: usize) -> std::result::Result<f64, String> {
        let row = self
            .index
            .get(&InputKey::of(x))
            .ok_or_else(|| "input not in table".to_string())?;
        pick(&self.values[*row], subject)
    }
}

fn pick(values: &[f64], subject: usize) -> std::result::Result<f64, String> {
    match values.len() {
        1 => Ok(values[0]),
        n if subject < n => Ok(values[subject]),
        n => Err(format!(
            "subject index out of range for {n} per-subject entries"
        )),
    }
}

/// The per-subject predictor `g(z, τ; α_g)`.
///
/// Per-subject variants with a single entry are broadcast to every subject;
/// those are the τ-constant predictors used on the ERM side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    Constant(f64),
    PerSubject(Vec<f64>),
    /// `g(x, τ_j) = weights[j] · x + bias[j]`.
    Affine {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Table(TablePredictor),
}

impl Predictor {
    /// True when the prediction does not depend on the subject.
    pub fn is_subject_invariant(&self) -> bool {
        match self {
            Predictor::Constant(_) => true,
            Predictor::PerSubject(v) => v.len() == 1,
            Predictor::Affine { bias, .. } => bias.len() == 1,
            Predictor::Table(t) => t.values.iter().all(|r| r.len() == 1),
        }
    }

    pub fn predict(&self, z: &Sample, subject: usize) -> Result<f64> {
        let raw = match self {
            Predictor::Constant(c) => Ok(*c),
            Predictor::PerSubject(v) => pick(v, subject),
            Predictor::Affine { weights, bias } => {
                if weights.len() != bias.len() {
                    Err("affine weights and bias lengths differ".to_string())
                } else {
                    let j = if bias.len() == 1 { 0 } else { subject };
                    match (weights.get(j), bias.get(j)) {
                        (Some(w), Some(b)) if w.len() == z.x.len() => {
                            Ok(w.iter().zip(&z.x).map(|(a, x)| a * x).sum::<f64>() + b)
                        }
                        (Some(_), Some(_)) => Err("affine weight dimension mismatch".into()),
                        _ => Err("subject index out of range for affine predictor".into()),
                    }
                }
            }
            Predictor::Table(t) => t.lookup(&z.x, subject),
        };
        match raw {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(Error::Evaluation {
                sample: z.to_string(),
                subject,
                reason: format!("prediction g is not finite ({v})"),
            }),
            Err(reason) => Err(Error::Evaluation {
                sample: z.to_string(),
                subject,
                reason,
            }),
        }
    }
}

/// Normalized assignment rows keyed by sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "AssignmentRepr", into = "AssignmentRepr")]
pub struct AssignmentTable {
    samples: Vec<Sample>,
    rows: Vec<Vec<f64>>,
    priors: Vec<f64>,
    index: HashMap<SampleKey, usize>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentRepr {
    samples: Vec<Sample>,
    rows: Vec<Vec<f64>>,
    priors: Vec<f64>,
}

impl TryFrom<AssignmentRepr> for AssignmentTable {
    type Error = Error;
    fn try_from(r: AssignmentRepr) -> Result<Self> {
        let subjects = SubjectSet::from_priors(&r.priors)?;
        let table = normalize_assignment(&r.samples, &r.rows, &subjects)?;
        Ok(table)
    }
}

impl From<AssignmentTable> for AssignmentRepr {
    fn from(t: AssignmentTable) -> Self {
        AssignmentRepr {
            samples: t.samples,
            rows: t.rows,
            priors: t.priors,
        }
    }
}

impl PartialEq for AssignmentTable {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples && self.rows == other.rows && self.priors == other.priors
    }
}

impl AssignmentTable {
    /// Hard assignment: sample `i` goes entirely to subject `choices[i]`.
    pub fn hard(samples: &[Sample], choices: &[usize], subjects: &SubjectSet) -> Result<Self> {
        if samples.len() != choices.len() {
            return Err(domain("one subject choice per sample required"));
        }
        let m = subjects.len();
        let rows: Vec<Vec<f64>> = choices
            .iter()
            .map(|&c| {
                if c >= m {
                    return Err(domain(format!("subject choice {c} out of range for m={m}")));
                }
                let mut row = vec![0.0; m];
                row[c] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        normalize_assignment(samples, &rows, subjects)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn row_of(&self, z: &Sample) -> Option<&[f64]> {
        self.index.get(&z.key()).map(|&i| self.rows[i].as_slice())
    }
}

/// The assignment weight `h(z, τ; α_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// `h ≡ 1`; normalized against any subject set.
    Uniform,
    Table(AssignmentTable),
}

impl Assignment {
    pub fn weight(&self, z: &Sample, tau: &SubjectToken) -> Result<f64> {
        match self {
            Assignment::Uniform => Ok(1.0),
            Assignment::Table(t) => {
                check_token(&t.priors, tau)?;
                t.row_of(z)
                    .map(|row| row[tau.id])
                    .ok_or_else(|| Error::Evaluation {
                        sample: z.to_string(),
                        subject: tau.id,
                        reason: "sample not covered by assignment table".into(),
                    })
            }
        }
    }

    /// Fails when any token in `subjects` is foreign to the subject set the
    /// assignment was normalized against.
    pub fn check_subjects(&self, subjects: &FiniteDistribution<SubjectToken>) -> Result<()> {
        match self {
            Assignment::Uniform => Ok(()),
            Assignment::Table(t) => subjects
                .atoms()
                .iter()
                .try_for_each(|(tau, _)| check_token(&t.priors, tau)),
        }
    }

    /// Enumerates every hard assignment of the distinct `samples` onto the
    /// subjects, first sample most significant.
    pub fn all_hard(samples: &[Sample], subjects: &SubjectSet, cap: u128) -> Result<Vec<Self>> {
        let m = subjects.len();
        let n = samples.len();
        let total = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if total > cap {
            return Err(Error::SizeLimit {
                what: "hard assignment count",
                size: total,
                limit: cap,
                hint: "",
            });
        }
        let mut choices = vec![0usize; n];
        let mut out = Vec::with_capacity(total as usize);
        loop {
            out.push(Assignment::Table(AssignmentTable::hard(
                samples, &choices, subjects,
            )?));
            // odometer increment, last sample fastest
            let mut pos = n;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                choices[pos] += 1;
                if choices[pos] < m {
                    break;
                }
                choices[pos] = 0;
            }
        }
    }
}

fn check_token(priors: &[f64], tau: &SubjectToken) -> Result<()> {
    match priors.get(tau.id) {
        Some(p) if *p == tau.prior => Ok(()),
        Some(p) => Err(Error::SubjectMismatch(format!(
            "subject {} has prior {} but assignment expects {}",
            tau.id, tau.prior, p
        ))),
        None => Err(Error::SubjectMismatch(format!(
            "subject {} outside an assignment over {} subjects",
            tau.id,
            priors.len()
        ))),
    }
}

/// A joint hypothesis `α = (α_g, α_h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPair {
    pub g: Predictor,
    pub h: Assignment,
}

impl HypothesisPair {
    pub fn new(g: Predictor, h: Assignment) -> Self {
        Self { g, h }
    }

    /// The τ-constant lift of an ERM predictor: same `g`, `h ≡ 1`.
    pub fn lift(g: Predictor) -> Self {
        Self {
            g,
            h: Assignment::Uniform,
        }
    }

    /// Checks `Σ_j h(z, τ_j) · prior(τ_j) = 1` on every sample of `data`.
    pub fn check_normalized(&self, data: &[Sample], subjects: &SubjectSet) -> Result<()> {
        for z in data {
            let mut total = 0.0;
            for tau in subjects.tokens() {
                let h = self.h.weight(z, tau)?;
                if h < 0.0 {
                    return Err(domain(format!("negative assignment weight at {z}")));
                }
                total += h * tau.prior;
            }
            if (total - 1.0).abs() > NORMALIZATION_TOL {
                return Err(domain(format!(
                    "assignment row at {z} sums to {total} against the priors"
                )));
            }
        }
        Ok(())
    }
}

/// Nonempty, stably ordered set of hypotheses. Enumeration order is the
/// tie-breaking order of every solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteClass<T> {
    members: Vec<T>,
}

impl<T> FiniteClass<T> {
    pub fn new(members: Vec<T>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyClass);
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[T] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.members.iter()
    }
}

/// `Q(z, τ, α) = L0(z, τ, g(z, τ)) · h(z, τ)` with `L0` clamped into the
/// loss range.
pub fn basic_loss(
    loss: &LossSpec,
    z: &Sample,
    tau: &SubjectToken,
    hyp: &HypothesisPair,
) -> Result<f64> {
    let prediction = hyp.g.predict(z, tau.id)?;
    let h = hyp.h.weight(z, tau)?;
    if !h.is_finite() {
        return Err(Error::Evaluation {
            sample: z.to_string(),
            subject: tau.id,
            reason: format!("assignment weight h is not finite ({h})"),
        });
    }
    Ok(loss.eval(z.y, prediction) * h)
}

/// Rescales each raw row so that `Σ_j h_j · prior_j = 1`, keeping the
/// proportions of the raw weights.
pub fn normalize_assignment(
    samples: &[Sample],
    raw: &[Vec<f64>],
    subjects: &SubjectSet,
) -> Result<AssignmentTable> {
    if samples.len() != raw.len() {
        return Err(domain("one raw weight row per sample required"));
    }
    let m = subjects.len();
    let priors = subjects.priors();
    let mut index = HashMap::with_capacity(samples.len());
    let mut rows = Vec::with_capacity(raw.len());
    for (i, (z, row)) in samples.iter().zip(raw).enumerate() {
        if row.len() != m {
            return Err(domain(format!(
                "raw row for {z} has {} entries, expected {m}",
                row.len()
            )));
        }
        if row.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(domain(format!(
                "raw weights for {z} must be finite and nonnegative"
            )));
        }
        let mass: f64 = row.iter().zip(&priors).map(|(w, p)| w * p).sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateAssignment {
                sample: z.to_string(),
            });
        }
        rows.push(row.iter().map(|w| w / mass).collect::<Vec<_>>());
        if index.insert(z.key(), i).is_some() {
            return Err(domain(format!("duplicate sample {z} in assignment")));
        }
    }
    Ok(AssignmentTable {
        samples: samples.to_vec(),
        rows,
        priors,
        index,
    })
}
