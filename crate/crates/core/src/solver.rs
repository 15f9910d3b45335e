//! Fitting procedures: exhaustive ERM/EGRM search over finite classes, exact
//! block-wise search over lookup-table classes, and hard-assignment
//! alternating minimization with seeded restarts.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{
    Assignment, AssignmentTable, FiniteClass, HypothesisPair, InputKey, LossKind, LossSpec,
    Predictor, Sample, SampleKey, SubjectSet, SubjectToken, TablePredictor,
};
use crate::risk::{argmin, global_risk, traditional_risk, FiniteDistribution};
use crate::stats::stream_rng;

/// Default cap on `|g_class| · |h_class|` for exhaustive EGRM search.
pub const DEFAULT_PRODUCT_CAP: u128 = 10_000_000;

/// Slack allowed when checking that a trace never increases.
pub const DESCENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<H> {
    pub hypothesis: H,
    pub risk: f64,
    pub iterations: usize,
    /// Risk before the first iteration followed by the risk after each one.
    pub trace: Vec<f64>,
    /// Class indices of the selected member (exhaustive fits), or the
    /// winning restart (alternating fits).
    pub indices: Vec<usize>,
}

impl<H> FitResult<H> {
    fn single(hypothesis: H, risk: f64, indices: Vec<usize>) -> Self {
        Self {
            hypothesis,
            risk,
            iterations: 0,
            trace: vec![risk],
            indices,
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] <= w[0] + DESCENT_TOL)
    }
}

/// Member of `class` minimizing traditional risk; ties go to the lowest index.
pub fn erm_fit(
    class: &FiniteClass<Predictor>,
    data: &FiniteDistribution<Sample>,
    loss: &LossSpec,
) -> Result<FitResult<Predictor>> {
    let risks: Vec<f64> = class
        .iter()
        .map(|g| traditional_risk(g, data, loss))
        .collect::<Result<_>>()?;
    let (i, risk) = argmin(risks).ok_or(Error::EmptyClass)?;
    Ok(FitResult::single(class.members()[i].clone(), risk, vec![i]))
}

/// Exact minimizer of the global risk over `g_class × h_class`, ties broken
/// lexicographically on `(g index, h index)`.
pub fn egrm_fit_exhaustive(
    g_class: &FiniteClass<Predictor>,
    h_class: &FiniteClass<Assignment>,
    data: &FiniteDistribution<Sample>,
    subjects: &FiniteDistribution<SubjectToken>,
    loss: &LossSpec,
    cap: u128,
) -> Result<FitResult<HypothesisPair>> {
    let size = g_class.len() as u128 * h_class.len() as u128;
    if size > cap {
        return Err(Error::SizeLimit {
            what: "product class",
            size,
            limit: cap,
            hint: "; use egrm_fit_alternating for classes this large",
        });
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (gi, g) in g_class.iter().enumerate() {
        for (hi, h) in h_class.iter().enumerate() {
            let hyp = HypothesisPair::new(g.clone(), h.clone());
            let r = global_risk(&hyp, data, subjects, loss)?;
            if best.is_none_or(|(_, _, b)| r < b) {
                best = Some((gi, hi, r));
            }
        }
    }
    let (gi, hi, risk) = best.ok_or(Error::EmptyClass)?;
    let hyp = HypothesisPair::new(g_class.members()[gi].clone(), h_class.members()[hi].clone());
    Ok(FitResult::single(hyp, risk, vec![gi, hi]))
}

/// Lookup-table class: `g(x_b, τ_j)` ranges over `candidates[b]`
/// independently for every input `b` (and every subject on the EGRM side);
/// `h` ranges over all hard assignments.
///
/// The product class is astronomically large, but under hard assignments
/// the global risk is a sum of independent per-input blocks, so the exact
/// infimum is found by exhaustive enumeration inside each block.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularClass {
    inputs: Vec<Vec<f64>>,
    candidates: Vec<Vec<f64>>,
    index: HashMap<InputKey, usize>,
}

impl TabularClass {
    pub fn new(inputs: Vec<Vec<f64>>, candidates: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::EmptyClass);
        }
        if inputs.len() != candidates.len() {
            return Err(domain("one candidate list per input required"));
        }
        let mut index = HashMap::new();
        for (b, x) in inputs.iter().enumerate() {
            if candidates[b].is_empty() || candidates[b].iter().any(|c| !c.is_finite()) {
                return Err(domain(format!("input {x:?} needs finite candidates")));
            }
            if index.insert(InputKey::of(x), b).is_some() {
                return Err(domain(format!("duplicate input {x:?}")));
            }
        }
        Ok(Self {
            inputs,
            candidates,
            index,
        })
    }

    /// Inputs of `data` in first-seen order; candidates are the distinct
    /// labels observed at each input plus their mean.
    pub fn from_labels_and_means(data: &[Sample]) -> Result<Self> {
        let mut inputs: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<Vec<f64>> = Vec::new();
        let mut seen: HashMap<InputKey, usize> = HashMap::new();
        for z in data {
            let b = *seen.entry(z.input_key()).or_insert_with(|| {
                inputs.push(z.x().to_vec());
                labels.push(Vec::new());
                inputs.len() - 1
            });
            labels[b].push(z.y());
        }
        let candidates = labels
            .into_iter()
            .map(|ys| {
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let mut c: Vec<f64> = Vec::new();
                for y in ys.into_iter().chain(std::iter::once(mean)) {
                    if !c.contains(&y) {
                        c.push(y);
                    }
                }
                c
            })
            .collect();
        Self::new(inputs, candidates)
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    fn blocks(&self, data: &FiniteDistribution<Sample>) -> Result<Vec<Vec<(f64, f64)>>> {
        let mut blocks = vec![Vec::new(); self.inputs.len()];
        for (z, w) in data.atoms() {
            let b = self
                .index
                .get(&z.input_key())
                .ok_or_else(|| Error::Evaluation {
                    sample: z.to_string(),
                    subject: 0,
                    reason: "input not covered by tabular class".into(),
                })?;
            blocks[*b].push((z.y(), *w));
        }
        Ok(blocks)
    }

    /// Every member of the ERM side, in enumeration order (first input most
    /// significant). Intended for cross-checks on small instances.
    pub fn erm_members(&self, cap: u128) -> Result<Vec<Predictor>> {
        let radices: Vec<usize> = self.candidates.iter().map(Vec::len).collect();
        enumerate_tuples(&radices, cap)?
            .into_iter()
            .map(|t| {
                let values = t
                    .iter()
                    .enumerate()
                    .map(|(b, &c)| vec![self.candidates[b][c]])
                    .collect();
                Ok(Predictor::Table(TablePredictor::new(
                    self.inputs.clone(),
                    values,
                )?))
            })
            .collect()
    }

    /// Every `g` of the EGRM side for `m` subjects, in enumeration order.
    pub fn egrm_predictors(&self, m: usize, cap: u128) -> Result<Vec<Predictor>> {
        let radices: Vec<usize> = self
            .candidates
            .iter()
            .flat_map(|c| std::iter::repeat_n(c.len(), m))
            .collect();
        enumerate_tuples(&radices, cap)?
            .into_iter()
            .map(|t| {
                let values = t
                    .chunks(m)
                    .enumerate()
                    .map(|(b, row)| row.iter().map(|&c| self.candidates[b][c]).collect())
                    .collect();
                Ok(Predictor::Table(TablePredictor::new(
                    self.inputs.clone(),
                    values,
                )?))
            })
            .collect()
    }

    /// Exact ERM over the class.
    pub fn erm_fit(
        &self,
        data: &FiniteDistribution<Sample>,
        loss: &LossSpec,
    ) -> Result<FitResult<Predictor>> {
        let blocks = self.blocks(data)?;
        let mut chosen = Vec::with_capacity(blocks.len());
        let mut values = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            let costs = self.candidates[b]
                .iter()
                .map(|&c| block.iter().map(|&(y, w)| w * loss.eval(y, c)).sum::<f64>());
            let (i, _) = argmin(costs).expect("candidates are nonempty");
            chosen.push(i);
            values.push(vec![self.candidates[b][i]]);
        }
        let g = Predictor::Table(TablePredictor::new(self.inputs.clone(), values)?);
        let risk = traditional_risk(&g, data, loss)?;
        Ok(FitResult::single(g, risk, chosen))
    }

    /// Exact EGRM over per-subject tables and hard assignments onto
    /// `subjects`. `block_cap` bounds the `|candidates|^m` tuples searched
    /// per input.
    pub fn egrm_fit(
        &self,
        data: &FiniteDistribution<Sample>,
        subjects: &SubjectSet,
        loss: &LossSpec,
        block_cap: u128,
    ) -> Result<FitResult<HypothesisPair>> {
        let m = subjects.len();
        let blocks = self.blocks(data)?;
        let mut values = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            let cands = &self.candidates[b];
            let tuples = enumerate_tuples(&vec![cands.len(); m], block_cap)?;
            let costs = tuples.iter().map(|t| {
                block
                    .iter()
                    .map(|&(y, w)| {
                        let best = t
                            .iter()
                            .map(|&c| loss.eval(y, cands[c]))
                            .fold(f64::INFINITY, f64::min);
                        w * best
                    })
                    .sum::<f64>()
            });
            let (i, _) = argmin(costs).expect("at least one tuple");
            values.push(tuples[i].iter().map(|&c| cands[c]).collect::<Vec<f64>>());
        }
        let g = Predictor::Table(TablePredictor::new(self.inputs.clone(), values)?);
        let h = assignment_step(&g, data, subjects, loss)?;
        let hyp = HypothesisPair::new(g, Assignment::Table(h));
        let risk = global_risk(&hyp, data, &subjects.distribution(), loss)?;
        Ok(FitResult::single(hyp, risk, vec![]))
    }
}

fn enumerate_tuples(radices: &[usize], cap: u128) -> Result<Vec<Vec<usize>>> {
    let total = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .unwrap_or(u128::MAX);
    if total > cap {
        return Err(Error::SizeLimit {
            what: "tuple enumeration",
            size: total,
            limit: cap,
            hint: "",
        });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut t = vec![0usize; radices.len()];
    loop {
        out.push(t.clone());
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            t[pos] += 1;
            if t[pos] < radices[pos] {
                break;
            }
            t[pos] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlternatingConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl AlternatingConfig {
    pub fn new(max_iters: usize, tol: f64, restarts: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            max_iters,
            tol,
            restarts,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(domain("max_iters must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(domain("tol must be positive"));
        }
        if self.restarts == 0 {
            return Err(domain("restarts must be at least 1"));
        }
        Ok(())
    }
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-12,
            restarts: 20,
            seed: 0,
        }
    }
}

/// Parametric `g` families the alternating solver can refit per subject.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorFamily {
    /// Per-subject constant restricted to a finite candidate set; refit is
    /// an exhaustive argmin over the candidates.
    ConstantGrid(Vec<f64>),
    /// Per-subject real constant; refit is the weighted mean (squared),
    /// weighted median (absolute) or best observed label (zero-one).
    Constant,
    /// Per-(input, subject) real table, refit cell by cell like `Constant`.
    Table,
    /// Per-subject affine map, refit by weighted least squares. Squared
    /// loss only.
    Affine,
}

/// One data atom as seen by the solver.
struct Atom<'a> {
    z: &'a Sample,
    w: f64,
    distinct: usize,
    input: usize,
}

struct Problem<'a> {
    atoms: Vec<Atom<'a>>,
    distinct: Vec<Sample>,
    inputs: Vec<Vec<f64>>,
    data: &'a FiniteDistribution<Sample>,
    subjects: &'a SubjectSet,
    subject_dist: FiniteDistribution<SubjectToken>,
    loss: &'a LossSpec,
    family: &'a PredictorFamily,
}

impl<'a> Problem<'a> {
    fn new(
        family: &'a PredictorFamily,
        data: &'a FiniteDistribution<Sample>,
        subjects: &'a SubjectSet,
        loss: &'a LossSpec,
    ) -> Result<Self> {
        match family {
            PredictorFamily::ConstantGrid(c) if c.is_empty() => {
                return Err(domain("constant grid family needs candidates"))
            }
            PredictorFamily::Affine if loss.kind != LossKind::Squared => {
                return Err(Error::Unsupported(
                    "affine family requires squared loss".into(),
                ))
            }
            _ => {}
        }
        let mut distinct = Vec::new();
        let mut inputs = Vec::new();
        let mut dkeys: HashMap<SampleKey, usize> = HashMap::new();
        let mut ikeys: HashMap<InputKey, usize> = HashMap::new();
        let mut atoms = Vec::with_capacity(data.len());
        for (z, w) in data.atoms() {
            let d = *dkeys.entry(z.key()).or_insert_with(|| {
                distinct.push(z.clone());
                distinct.len() - 1
            });
            let i = *ikeys.entry(z.input_key()).or_insert_with(|| {
                inputs.push(z.x().to_vec());
                inputs.len() - 1
            });
            atoms.push(Atom {
                z,
                w: *w,
                distinct: d,
                input: i,
            });
        }
        Ok(Self {
            atoms,
            distinct,
            inputs,
            data,
            subjects,
            subject_dist: subjects.distribution(),
            loss,
            family,
        })
    }

    fn m(&self) -> usize {
        self.subjects.len()
    }

    fn initial_predictor(&self) -> Result<Predictor> {
        let m = self.m();
        Ok(match self.family {
            PredictorFamily::ConstantGrid(c) => Predictor::PerSubject(vec![c[0]; m]),
            PredictorFamily::Constant => Predictor::PerSubject(vec![0.0; m]),
            PredictorFamily::Table => Predictor::Table(TablePredictor::new(
                self.inputs.clone(),
                vec![vec![0.0; m]; self.inputs.len()],
            )?),
            PredictorFamily::Affine => {
                let d = self.atoms[0].z.x().len();
                Predictor::Affine {
                    weights: vec![vec![0.0; d]; m],
                    bias: vec![0.0; m],
                }
            }
        })
    }

    fn risk(&self, hyp: &HypothesisPair) -> Result<f64> {
        global_risk(hyp, self.data, &self.subject_dist, self.loss)
    }

    fn hard(&self, choices: &[usize]) -> Result<Assignment> {
        Ok(Assignment::Table(AssignmentTable::hard(
            &self.distinct,
            choices,
            self.subjects,
        )?))
    }

    /// Per-subject refit of `g` for fixed hard `choices` (indexed by
    /// distinct sample). Each refit is kept only if it does not increase
    /// that subject's weighted loss.
    fn fit_step(&self, g: &Predictor, choices: &[usize]) -> Result<Predictor> {
        let m = self.m();
        let loss = self.loss;
        let members = |j: usize| self.atoms.iter().filter(move |a| choices[a.distinct] == j);
        match (self.family, g) {
            (PredictorFamily::ConstantGrid(cands), Predictor::PerSubject(old)) => {
                let mut vals = old.clone();
                for (j, val) in vals.iter_mut().enumerate().take(m) {
                    let pts: Vec<(f64, f64)> = members(j).map(|a| (a.z.y(), a.w)).collect();
                    if pts.is_empty() {
                        continue;
                    }
                    let (i, _) = argmin(cands.iter().map(|&c| weighted_loss(loss, &pts, c)))
                        .expect("nonempty candidates");
                    *val = guarded(loss, &pts, *val, cands[i]);
                }
                Ok(Predictor::PerSubject(vals))
            }
            (PredictorFamily::Constant, Predictor::PerSubject(old)) => {
                let mut vals = old.clone();
                for (j, val) in vals.iter_mut().enumerate().take(m) {
                    let pts: Vec<(f64, f64)> = members(j).map(|a| (a.z.y(), a.w)).collect();
                    if let Some(c) = closed_form_constant(loss, &pts) {
                        *val = guarded(loss, &pts, *val, c);
                    }
                }
                Ok(Predictor::PerSubject(vals))
            }
            (PredictorFamily::Table, Predictor::Table(t)) => {
                let mut values = t.values().to_vec();
                for (j, _) in self.subjects.tokens().iter().enumerate() {
                    for (b, row) in values.iter_mut().enumerate() {
                        let pts: Vec<(f64, f64)> = members(j)
                            .filter(|a| a.input == b)
                            .map(|a| (a.z.y(), a.w))
                            .collect();
                        if let Some(c) = closed_form_constant(loss, &pts) {
                            row[j] = guarded(loss, &pts, row[j], c);
                        }
                    }
                }
                Ok(Predictor::Table(TablePredictor::new(
                    t.inputs().to_vec(),
                    values,
                )?))
            }
            (PredictorFamily::Affine, Predictor::Affine { weights, bias }) => {
                let mut weights = weights.clone();
                let mut bias = bias.clone();
                for j in 0..m {
                    let pts: Vec<&Atom> = members(j).collect();
                    if pts.is_empty() {
                        continue;
                    }
                    let cost = |w: &[f64], b: f64| -> f64 {
                        pts.iter()
                            .map(|a| {
                                let p = w.iter().zip(a.z.x()).map(|(u, x)| u * x).sum::<f64>() + b;
                                a.w * loss.eval(a.z.y(), p)
                            })
                            .sum()
                    };
                    if let Some((w, b)) = weighted_least_squares(&pts) {
                        if cost(&w, b) <= cost(&weights[j], bias[j]) {
                            weights[j] = w;
                            bias[j] = b;
                        }
                    }
                }
                Ok(Predictor::Affine { weights, bias })
            }
            _ => Err(domain("initial predictor does not belong to the family")),
        }
    }

    /// Runs the alternation from `(g, h)`.
    fn descend(
        &self,
        mut g: Predictor,
        h: Assignment,
        cfg: &AlternatingConfig,
    ) -> Result<FitResult<HypothesisPair>> {
        let mut hyp = HypothesisPair::new(g.clone(), h);
        let mut prev = self.risk(&hyp)?;
        if !prev.is_finite() {
            return Err(Error::Divergence {
                iteration: 0,
                risk: prev,
            });
        }
        let mut trace = vec![prev];
        let mut iterations = 0;
        for it in 1..=cfg.max_iters {
            iterations = it;
            let choices = self.assign(&g)?;
            g = self.fit_step(&g, &choices)?;
            let candidate = HypothesisPair::new(g.clone(), self.hard(&choices)?);
            let r = self.risk(&candidate)?;
            if !r.is_finite() {
                return Err(Error::Divergence {
                    iteration: it,
                    risk: r,
                });
            }
            trace.push(r);
            hyp = candidate;
            if prev - r < cfg.tol {
                break;
            }
            prev = r;
        }
        let risk = *trace.last().expect("trace is nonempty");
        Ok(FitResult {
            hypothesis: hyp,
            risk,
            iterations,
            trace,
            indices: vec![],
        })
    }

    /// Assignment step: each distinct sample goes to its lowest-loss
    /// subject, ties to the lowest id.
    fn assign(&self, g: &Predictor) -> Result<Vec<usize>> {
        self.distinct
            .iter()
            .map(|z| {
                let losses = self
                    .subjects
                    .tokens()
                    .iter()
                    .map(|t| g.predict(z, t.id).map(|p| self.loss.eval(z.y(), p)))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(argmin(losses).expect("subjects nonempty").0)
            })
            .collect()
    }

    fn restart(&self, cfg: &AlternatingConfig, index: usize) -> Result<FitResult<HypothesisPair>> {
        let mut rng = stream_rng(cfg.seed, index as u64);
        let m = self.m();
        let choices: Vec<usize> = (0..self.distinct.len())
            .map(|_| rng.gen_range(0..m))
            .collect();
        let g = self.fit_step(&self.initial_predictor()?, &choices)?;
        let h = self.hard(&choices)?;
        let mut fit = self.descend(g, h, cfg)?;
        fit.indices = vec![index];
        Ok(fit)
    }
}

fn weighted_loss(loss: &LossSpec, pts: &[(f64, f64)], c: f64) -> f64 {
    pts.iter().map(|&(y, w)| w * loss.eval(y, c)).sum()
}

fn guarded(loss: &LossSpec, pts: &[(f64, f64)], old: f64, new: f64) -> f64 {
    if weighted_loss(loss, pts, new) <= weighted_loss(loss, pts, old) {
        new
    } else {
        old
    }
}

fn closed_form_constant(loss: &LossSpec, pts: &[(f64, f64)]) -> Option<f64> {
    if pts.is_empty() {
        return None;
    }
    let total: f64 = pts.iter().map(|p| p.1).sum();
    match loss.kind {
        LossKind::Squared => {
            if total > 0.0 {
                Some(pts.iter().map(|&(y, w)| y * w).sum::<f64>() / total)
            } else {
                None
            }
        }
        LossKind::Absolute => {
            let mut sorted = pts.to_vec();
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            for (y, w) in &sorted {
                acc += w;
                if acc >= total / 2.0 {
                    return Some(*y);
                }
            }
            sorted.last().map(|p| p.0)
        }
        LossKind::ZeroOne => {
            let labels: Vec<f64> = pts.iter().map(|p| p.0).collect();
            argmin(labels.iter().map(|&c| weighted_loss(loss, pts, c))).map(|(i, _)| labels[i])
        }
    }
}

fn weighted_least_squares(pts: &[&Atom]) -> Option<(Vec<f64>, f64)> {
    let d = pts[0].z.x().len();
    let n = pts.len();
    let mut a = DMatrix::<f64>::zeros(n, d + 1);
    let mut b = DVector::<f64>::zeros(n);
    for (r, p) in pts.iter().enumerate() {
        let s = p.w.sqrt();
        for (c, x) in p.z.x().iter().enumerate() {
            a[(r, c)] = s * x;
        }
        a[(r, d)] = s;
        b[r] = s * p.z.y();
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, d).iter().copied().collect(), sol[d]))
}

/// Hard assignment minimizing the global risk for fixed `g`.
pub fn assignment_step(
    g: &Predictor,
    data: &FiniteDistribution<Sample>,
    subjects: &SubjectSet,
    loss: &LossSpec,
) -> Result<AssignmentTable> {
    let fam = PredictorFamily::Constant;
    let p = Problem::new(&fam, data, subjects, loss)?;
    let choices = p.assign(g)?;
    AssignmentTable::hard(&p.distinct, &choices, subjects)
}

/// Hard-assignment alternating minimization of the empirical global risk
/// with `cfg.restarts` seeded random restarts. Returns the best restart
/// (lowest risk, then lowest restart index).
pub fn egrm_fit_alternating(
    family: &PredictorFamily,
    data: &FiniteDistribution<Sample>,
    subjects: &SubjectSet,
    loss: &LossSpec,
    cfg: &AlternatingConfig,
) -> Result<FitResult<HypothesisPair>> {
    cfg.validate()?;
    let problem = Problem::new(family, data, subjects, loss)?;
    let fits: Vec<Result<FitResult<HypothesisPair>>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| problem.restart(cfg, r))
        .collect();
    let mut best: Option<FitResult<HypothesisPair>> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().is_none_or(|b| fit.risk < b.risk) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Alternating minimization started from a given hypothesis, whose `g` must
/// belong to `family`.
pub fn egrm_fit_alternating_from(
    family: &PredictorFamily,
    init: &HypothesisPair,
    data: &FiniteDistribution<Sample>,
    subjects: &SubjectSet,
    loss: &LossSpec,
    cfg: &AlternatingConfig,
) -> Result<FitResult<HypothesisPair>> {
    cfg.validate()?;
    let problem = Problem::new(family, data, subjects, loss)?;
    problem.descend(init.g.clone(), init.h.clone(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64, y: f64) -> Sample {
        Sample::scalar(x, y).unwrap()
    }

    fn sq() -> LossSpec {
        LossSpec::unit(LossKind::Squared)
    }

    fn conflict() -> Vec<Sample> {
        vec![s(0.0, 0.0), s(0.0, 1.0)]
    }

    fn constants(v: &[f64]) -> FiniteClass<Predictor> {
        FiniteClass::new(v.iter().map(|&c| Predictor::Constant(c)).collect()).unwrap()
    }

    /// The 16-candidate instance: per-subject constants in {0,1} × all hard
    /// assignments of two samples onto two subjects.
    fn sixteen() -> (FiniteClass<Predictor>, FiniteClass<Assignment>, SubjectSet) {
        let subjects = SubjectSet::uniform(2).unwrap();
        let mut gs = Vec::new();
        for a in [0.0, 1.0] {
            for b in [0.0, 1.0] {
                gs.push(Predictor::PerSubject(vec![a, b]));
            }
        }
        let hs = Assignment::all_hard(&conflict(), &subjects, 1 << 10).unwrap();
        (
            FiniteClass::new(gs).unwrap(),
            FiniteClass::new(hs).unwrap(),
            subjects,
        )
    }

    #[test]
    fn erm_examples() {
        let data = FiniteDistribution::uniform(conflict()).unwrap();
        let fit = erm_fit(&constants(&[0.0, 0.5, 1.0]), &data, &sq()).unwrap();
        assert_eq!(fit.hypothesis, Predictor::Constant(0.5));
        assert_eq!(fit.risk, 0.25);

        let single = FiniteDistribution::uniform(vec![s(0.0, 1.0)]).unwrap();
        let fit = erm_fit(&constants(&[0.0, 1.0]), &single, &sq()).unwrap();
        assert_eq!(fit.hypothesis, Predictor::Constant(1.0));
        assert_eq!(fit.risk, 0.0);

        let fit = erm_fit(&constants(&[0.25, 0.75]), &data, &sq()).unwrap();
        assert_eq!(fit.indices, vec![0]);
        assert_eq!(fit.risk, 0.3125);
    }

    #[test]
    fn exhaustive_sixteen_candidates() {
        let (gs, hs, subjects) = sixteen();
        let data = FiniteDistribution::uniform(conflict()).unwrap();
        let fit = egrm_fit_exhaustive(
            &gs,
            &hs,
            &data,
            &subjects.distribution(),
            &sq(),
            DEFAULT_PRODUCT_CAP,
        )
        .unwrap();
        assert_eq!(fit.risk, 0.0);
        // first optimum in (g, h) order: g = (0, 1), h = (τ0, τ1)
        assert_eq!(fit.indices, vec![1, 1]);

        let err =
            egrm_fit_exhaustive(&gs, &hs, &data, &subjects.distribution(), &sq(), 1).unwrap_err();
        match err {
            Error::SizeLimit { size, hint, .. } => {
                assert_eq!(size, 16);
                assert!(hint.contains("alternating"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exhaustive_single_subject_reduces_to_erm() {
        let data =
            FiniteDistribution::uniform(vec![s(0.0, 0.2), s(1.0, 0.9), s(2.0, 0.4)]).unwrap();
        let grid = [0.0, 0.3, 0.5, 0.6, 1.0];
        let erm = erm_fit(&constants(&grid), &data, &sq()).unwrap();
        let one = SubjectSet::uniform(1).unwrap();
        let hs = FiniteClass::new(vec![Assignment::Uniform]).unwrap();
        let egrm = egrm_fit_exhaustive(
            &constants(&grid),
            &hs,
            &data,
            &one.distribution(),
            &sq(),
            100,
        )
        .unwrap();
        assert_eq!(egrm.risk.to_bits(), erm.risk.to_bits());
        assert_eq!(egrm.hypothesis.g, erm.hypothesis);
    }

    #[test]
    fn alternating_fixed_point() {
        let (gs, hs, subjects) = sixteen();
        let data = FiniteDistribution::uniform(conflict()).unwrap();
        let opt =
            egrm_fit_exhaustive(&gs, &hs, &data, &subjects.distribution(), &sq(), 100).unwrap();
        let fam = PredictorFamily::ConstantGrid(vec![0.0, 1.0]);
        let cfg = AlternatingConfig::new(50, 1e-12, 1, 0).unwrap();
        let fit = egrm_fit_alternating_from(&fam, &opt.hypothesis, &data, &subjects, &sq(), &cfg)
            .unwrap();
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.risk, 0.0);
        assert_eq!(fit.hypothesis, opt.hypothesis);
    }

    #[test]
    fn alternating_restarts_reach_oracle() {
        let (gs, hs, subjects) = sixteen();
        let data = FiniteDistribution::uniform(conflict()).unwrap();
        let opt =
            egrm_fit_exhaustive(&gs, &hs, &data, &subjects.distribution(), &sq(), 100).unwrap();
        let fam = PredictorFamily::ConstantGrid(vec![0.0, 1.0]);
        let cfg = AlternatingConfig::new(50, 1e-12, 20, 7).unwrap();
        let fit = egrm_fit_alternating(&fam, &data, &subjects, &sq(), &cfg).unwrap();
        assert!((fit.risk - opt.risk).abs() < 1e-9);
        assert!(fit.is_monotone());
    }

    #[test]
    fn alternating_single_iteration_trace() {
        let subjects = SubjectSet::uniform(2).unwrap();
        let data =
            FiniteDistribution::uniform(vec![s(0.0, 0.1), s(0.0, 0.9), s(1.0, 0.5), s(2.0, 0.3)])
                .unwrap();
        for fam in [
            PredictorFamily::Constant,
            PredictorFamily::Table,
            PredictorFamily::Affine,
        ] {
            let cfg = AlternatingConfig::new(1, 1e-12, 1, 3).unwrap();
            let fit = egrm_fit_alternating(&fam, &data, &subjects, &sq(), &cfg).unwrap();
            assert!(fit.trace.len() <= 2);
            assert!(fit.is_monotone(), "{fam:?}: {:?}", fit.trace);
        }
    }

    #[test]
    fn alternating_is_deterministic() {
        let subjects = SubjectSet::uniform(3).unwrap();
        let data: Vec<Sample> = (0..12)
            .map(|i| s((i % 4) as f64, ((i * 7) % 5) as f64 / 4.0))
            .collect();
        let data = FiniteDistribution::uniform(data).unwrap();
        let cfg = AlternatingConfig::new(30, 1e-12, 8, 99).unwrap();
        let a =
            egrm_fit_alternating(&PredictorFamily::Table, &data, &subjects, &sq(), &cfg).unwrap();
        let b =
            egrm_fit_alternating(&PredictorFamily::Table, &data, &subjects, &sq(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.risk.to_bits(), b.risk.to_bits());
    }

    #[test]
    fn affine_needs_squared_loss() {
        let subjects = SubjectSet::uniform(2).unwrap();
        let data = FiniteDistribution::uniform(conflict()).unwrap();
        let err = egrm_fit_alternating(
            &PredictorFamily::Affine,
            &data,
            &subjects,
            &LossSpec::unit(LossKind::Absolute),
            &AlternatingConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn config_validation() {
        assert!(AlternatingConfig::new(0, 1e-9, 1, 0).is_err());
        assert!(AlternatingConfig::new(1, 0.0, 1, 0).is_err());
        assert!(AlternatingConfig::new(1, 1e-9, 0, 0).is_err());
    }

    #[test]
    fn closed_forms() {
        let abs = LossSpec::new(LossKind::Absolute, 0.0, 10.0).unwrap();
        let pts = [(1.0, 0.2), (5.0, 0.5), (2.0, 0.3)];
        assert_eq!(closed_form_constant(&abs, &pts), Some(2.0));
        let zo = LossSpec::unit(LossKind::ZeroOne);
        assert_eq!(
            closed_form_constant(&zo, &[(1.0, 0.2), (0.0, 0.5)]),
            Some(0.0)
        );
        assert_eq!(closed_form_constant(&sq(), &[]), None);
    }

    #[test]
    fn tabular_matches_full_product_enumeration() {
        let items = vec![s(0.0, 0.0), s(0.0, 2.0), s(1.0, 1.0), s(1.0, 3.0)];
        let loss = LossSpec::new(LossKind::Squared, 0.0, 9.0).unwrap();
        let data = FiniteDistribution::uniform(items.clone()).unwrap();
        let subjects = SubjectSet::uniform(2).unwrap();
        let class = TabularClass::from_labels_and_means(&items).unwrap();
        assert_eq!(class.candidates()[0], vec![0.0, 2.0, 1.0]);

        let erm_block = class.erm_fit(&data, &loss).unwrap();
        let erm_full = erm_fit(
            &FiniteClass::new(class.erm_members(1 << 20).unwrap()).unwrap(),
            &data,
            &loss,
        )
        .unwrap();
        assert!((erm_block.risk - erm_full.risk).abs() < 1e-12);
        assert!((erm_block.risk - 1.0).abs() < 1e-12);

        let egrm_block = class.egrm_fit(&data, &subjects, &loss, 1 << 20).unwrap();
        let gs = FiniteClass::new(class.egrm_predictors(2, 1 << 20).unwrap()).unwrap();
        let hs =
            FiniteClass::new(Assignment::all_hard(&items, &subjects, 1 << 20).unwrap()).unwrap();
        let egrm_full = egrm_fit_exhaustive(
            &gs,
            &hs,
            &data,
            &subjects.distribution(),
            &loss,
            DEFAULT_PRODUCT_CAP,
        )
        .unwrap();
        assert!((egrm_block.risk - egrm_full.risk).abs() < 1e-12);
        assert_eq!(egrm_block.risk, 0.0);
    }
}
