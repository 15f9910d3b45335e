//! One function per subcommand. Each validates its section, runs the
//! library, and returns artifacts without touching the filesystem.

use std::path::Path;
use std::sync::Arc;

use sublearn::bounds::{bound_terms, solve_epsilon, BoundInputs, Capacity};
use sublearn::capacity::{
    annealed_entropy, brute_dimension, growth_bound, interval_family, linspace, threshold_family,
    BetaGrid, IndicatorClass, RealFn, UniformInterval,
};
use sublearn::datagen::{multilabel_dataset, MultiLabelSpec};
use sublearn::model::{
    FiniteClass, HypothesisPair, LossKind, LossSpec, Predictor, Sample, SubjectSet,
};
use sublearn::montecarlo::{
    conflict_instance, consistency_trace, coordinate_instance, decomposition_check,
    deviation_trace, gap_check, unbiasedness_check, unclamped_squared_loss, Truth,
};
use sublearn::risk::FiniteDistribution;
use sublearn::schedule::{make_schedule, RangeSpec};
use sublearn::solver::{egrm_fit_alternating, AlternatingConfig, TabularClass};

use crate::config::{
    invalid, BoundsConfig, CapacityConfig, Config, FamilyKind, FitConfig, FitMethod, GapConfig,
    GenConfig, GridConfig, Instance, Labels, ScheduleConfig, VerifyConfig,
};
use crate::report::{Csv, Summary};
use crate::{CliError, Command, Outcome};

pub fn run(command: Command, config: &Config, seed: u64) -> Result<Outcome, CliError> {
    fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing section `[{name}]`")))
    }
    let name = command.name();
    match command {
        Command::Gen => gen(section(&config.gen, name)?, seed),
        Command::Fit => fit(section(&config.fit, name)?, seed),
        Command::Gap => gap(section(&config.gap, name)?, seed),
        Command::Schedule => schedule(section(&config.schedule, name)?, seed),
        Command::Capacity => capacity(section(&config.capacity, name)?, seed),
        Command::Bounds => bounds(section(&config.bounds, name)?, seed),
        Command::Verify => verify(section(&config.verify, name)?, seed),
    }
}

fn multilabel_spec(labels: &Labels<'_>, seed: u64, key: &str) -> Result<MultiLabelSpec, CliError> {
    let random = (labels.n_inputs, labels.labels_per_input, labels.n_levels);
    let spec = match (labels.label_table, random) {
        (Some(table), (None, None, None)) => {
            MultiLabelSpec::new(table.clone(), labels.noise_sd, seed)
        }
        (None, (Some(n), Some(k), Some(levels))) => MultiLabelSpec::random(n, k, levels, seed)
            .and_then(|s| {
                let s = MultiLabelSpec {
                    noise_sd: labels.noise_sd,
                    ..s
                };
                s.validate().map(|_| s)
            }),
        _ => {
            return Err(CliError::Config(format!(
                "{key}: give either label_table or all of n_inputs, labels_per_input, n_levels"
            )))
        }
    };
    spec.map_err(|e| invalid(key, e))
}

fn gen(cfg: &GenConfig, seed: u64) -> Result<Outcome, CliError> {
    let spec = multilabel_spec(&cfg.labels(), seed, "gen")?;
    let data = multilabel_dataset(&spec)?;
    let dims = data.samples.first().map_or(0, |z| z.x().len());
    let mut header: Vec<String> = vec!["sample_id".into()];
    header.extend((0..dims).map(|d| format!("x{d}")));
    header.push("y".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header_refs);
    for (i, z) in data.samples.iter().enumerate() {
        let mut row = vec![i.into()];
        row.extend(z.x().iter().map(|&v| v.into()));
        row.push(z.y().into());
        csv.row(row);
    }
    let mut summary = Summary::new("gen", seed, cfg);
    summary
        .put("n_samples", data.samples.len())
        .put("label_table", &spec.label_table)
        .put("latent", &data.latent);
    Ok(Outcome {
        summary: format!("gen: wrote {} samples", data.samples.len()),
        artifacts: vec![
            csv.into_artifact("dataset.csv"),
            summary.into_artifact("gen.json"),
        ],
        violation: false,
    })
}

/// Reads a dataset written by `gen`.
pub fn read_dataset(path: &Path) -> Result<Vec<Sample>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("fit.data: cannot read {}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| CliError::Config(format!("fit.data: line {line}: {what}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad(1, "empty file"))?
        .split(',')
        .collect();
    if header.len() < 2 || header[0] != "sample_id" || header[header.len() - 1] != "y" {
        return Err(bad(1, "header must be sample_id,x...,y"));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(i + 2, "wrong number of cells"));
        }
        let nums = cells[1..]
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| bad(i + 2, &e.to_string()))?;
        let (y, x) = nums.split_last().expect("at least one column");
        samples.push(Sample::new(x.to_vec(), *y).map_err(|e| bad(i + 2, &e.to_string()))?);
    }
    if samples.is_empty() {
        return Err(bad(2, "no samples"));
    }
    Ok(samples)
}

fn squared_loss_for(samples: &[Sample]) -> LossSpec {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
            (lo.min(z.y()), hi.max(z.y()))
        });
    let span = hi - lo;
    LossSpec::new(LossKind::Squared, 0.0, (span * span).max(1.0)).expect("positive upper bound")
}

fn fit(cfg: &FitConfig, seed: u64) -> Result<Outcome, CliError> {
    let labels = cfg.labels();
    let samples = match &cfg.data {
        Some(path) => {
            if labels.label_table.is_some() || labels.n_inputs.is_some() {
                return Err(CliError::Config(
                    "fit: data and label keys are mutually exclusive".into(),
                ));
            }
            read_dataset(path)?
        }
        None => multilabel_dataset(&multilabel_spec(&labels, seed, "fit")?)?.samples,
    };
    let subjects = SubjectSet::uniform(cfg.subjects).map_err(|e| invalid("fit.subjects", e))?;
    let loss = match &cfg.loss {
        Some(l) => l.spec("fit.loss")?,
        None => squared_loss_for(&samples),
    };
    let dist = FiniteDistribution::uniform(samples.clone())?;
    let mut summary = Summary::new("fit", seed, cfg);
    summary.put("loss", loss).put("n_samples", samples.len());
    let mut csv = Csv::new(&["iteration", "risk"]);
    let (risk, monotone) = match cfg.method {
        FitMethod::Alternating => {
            let acfg = AlternatingConfig::new(cfg.max_iters, cfg.tol, cfg.restarts, seed)
                .map_err(|e| invalid("fit", e))?;
            let fit = egrm_fit_alternating(&cfg.family, &dist, &subjects, &loss, &acfg)?;
            for (i, r) in fit.trace.iter().enumerate() {
                csv.row(vec![i.into(), (*r).into()]);
            }
            summary
                .put("risk", fit.risk)
                .put("iterations", fit.iterations)
                .put("restart", fit.indices.first())
                .put("hypothesis", &fit.hypothesis);
            (fit.risk, fit.is_monotone())
        }
        FitMethod::Exhaustive => {
            let class = TabularClass::from_labels_and_means(&samples)?;
            let fit = class.egrm_fit(&dist, &subjects, &loss, 1 << 20)?;
            csv.row(vec![0usize.into(), fit.risk.into()]);
            summary
                .put("risk", fit.risk)
                .put("hypothesis", &fit.hypothesis);
            (fit.risk, true)
        }
        FitMethod::Erm => {
            let class = TabularClass::from_labels_and_means(&samples)?;
            let fit = class.erm_fit(&dist, &loss)?;
            csv.row(vec![0usize.into(), fit.risk.into()]);
            summary
                .put("risk", fit.risk)
                .put("hypothesis", &fit.hypothesis);
            (fit.risk, true)
        }
    };
    summary.put("flags", serde_json::json!({ "monotone_trace": monotone }));
    Ok(Outcome {
        summary: format!("fit: risk {risk}"),
        artifacts: vec![
            csv.into_artifact("fit.csv"),
            summary.into_artifact("fit.json"),
        ],
        violation: !monotone,
    })
}

fn gap(cfg: &GapConfig, seed: u64) -> Result<Outcome, CliError> {
    if cfg.instances == 0 {
        return Err(CliError::Config("gap.instances: must be at least 1".into()));
    }
    if cfg.label_table.is_some() && cfg.instances != 1 {
        return Err(CliError::Config(
            "gap.instances: an explicit label_table is a single instance".into(),
        ));
    }
    let mut csv = Csv::new(&[
        "instance",
        "n_inputs",
        "labels_per_input",
        "erm_risk",
        "egrm_risk",
        "gap",
        "confusion_error",
    ]);
    let mut checks = Vec::with_capacity(cfg.instances);
    for i in 0..cfg.instances {
        let spec = multilabel_spec(&cfg.labels(), seed.wrapping_add(i as u64), "gap")?;
        let g = gap_check(&spec, &unclamped_squared_loss(&spec))?;
        csv.row(vec![
            i.into(),
            spec.n_inputs.into(),
            spec.labels_per_input.into(),
            g.erm_risk.into(),
            g.egrm_risk.into(),
            g.gap.into(),
            g.confusion_error.into(),
        ]);
        checks.push(g);
    }
    let all_match = checks.iter().all(|g| g.matches(cfg.tol));
    let max_diff = checks
        .iter()
        .map(|g| (g.gap - g.confusion_error).abs())
        .fold(0.0, f64::max);
    let mut summary = Summary::new("gap", seed, cfg);
    if let [only] = checks.as_slice() {
        summary
            .put("erm_risk", only.erm_risk)
            .put("egrm_risk", only.egrm_risk)
            .put("gap", only.gap)
            .put("confusion_error", only.confusion_error);
    }
    summary
        .put("instances", cfg.instances)
        .put("max_abs_difference", max_diff)
        .put(
            "flags",
            serde_json::json!({ "gap_equals_confusion_error": all_match }),
        );
    Ok(Outcome {
        summary: format!(
            "gap: {} instance(s), max |gap - confusion| = {max_diff:e}",
            cfg.instances
        ),
        artifacts: vec![
            csv.into_artifact("gap.csv"),
            summary.into_artifact("gap.json"),
        ],
        violation: !all_match,
    })
}

fn schedule(cfg: &ScheduleConfig, seed: u64) -> Result<Outcome, CliError> {
    let ranges = RangeSpec::new(cfg.bz, cfg.btau).map_err(|e| invalid("schedule", e))?;
    let steps =
        make_schedule(&cfg.m_values, cfg.eps, &ranges).map_err(|e| invalid("schedule", e))?;
    let mut csv = Csv::new(&["m", "l", "rhs"]);
    for s in &steps {
        csv.row(vec![s.m.into(), s.l.into(), s.rhs.into()]);
    }
    let mut summary = Summary::new("schedule", seed, cfg);
    summary.put("steps", steps.len());
    Ok(Outcome {
        summary: format!("schedule: {} steps", steps.len()),
        artifacts: vec![
            csv.into_artifact("schedule.csv"),
            summary.into_artifact("schedule.json"),
        ],
        violation: false,
    })
}

fn indicator_class(cfg: &CapacityConfig) -> Result<IndicatorClass<f64>, CliError> {
    let class = match (cfg.family, cfg.grid) {
        (FamilyKind::Threshold, GridConfig::Named(_)) => threshold_family(BetaGrid::Complete),
        (FamilyKind::Threshold, GridConfig::Size(k)) => IndicatorClass::with_linear_grid(
            vec![Arc::new(|x: &f64| *x) as RealFn<f64>],
            &[cfg.lo, cfg.hi],
            k,
        ),
        (FamilyKind::Interval, grid) => {
            if cfg.endpoints < 2 {
                return Err(CliError::Config(
                    "capacity.endpoints: must be at least 2".into(),
                ));
            }
            let beta = match grid {
                GridConfig::Named(_) => BetaGrid::Complete,
                GridConfig::Size(k) => BetaGrid::Fixed(linspace(0.0, 1.0, k)),
            };
            interval_family(&linspace(cfg.lo, cfg.hi, cfg.endpoints), beta)
        }
    };
    class.map_err(|e| invalid("capacity", e))
}

fn capacity(cfg: &CapacityConfig, seed: u64) -> Result<Outcome, CliError> {
    if !(cfg.lo < cfg.hi && cfg.lo.is_finite() && cfg.hi.is_finite()) {
        return Err(CliError::Config("capacity: need finite lo < hi".into()));
    }
    if cfg.n_values.is_empty() {
        return Err(CliError::Config(
            "capacity.n_values: must be nonempty".into(),
        ));
    }
    let class = indicator_class(cfg)?;
    let pool: Vec<f64> = (0..10)
        .map(|j| cfg.lo + (cfg.hi - cfg.lo) * (j as f64 + 0.5) / 10.0)
        .collect();
    let dimension =
        brute_dimension(&class, &pool, cfg.max_dimension).map_err(|e| invalid("capacity", e))?;
    let source = UniformInterval {
        lo: cfg.lo,
        hi: cfg.hi,
    };
    let mut csv = Csv::new(&["n", "N_mean", "H_hat", "H_rate", "CI_low", "CI_high"]);
    let mut rows = Vec::new();
    let mut within = true;
    for (i, &n) in cfg.n_values.iter().enumerate() {
        let rep = annealed_entropy(&class, n, &source, cfg.reps, seed.wrapping_add(i as u64))
            .map_err(|e| invalid("capacity", e))?;
        let e = rep.annealed_entropy;
        csv.row(vec![
            n.into(),
            rep.mean_separation_count.into(),
            e.value.into(),
            rep.entropy_rate.into(),
            e.ci_low.into(),
            e.ci_high.into(),
        ]);
        let bound = if dimension == 0 {
            Some(0.0)
        } else {
            growth_bound(dimension as u64, n as u64).ok()
        };
        if let Some(b) = bound {
            within &= e.value <= b + 1e-12;
        }
        rows.push(serde_json::json!({ "n": n, "report": rep, "growth_bound": bound }));
    }
    let rates: Vec<(usize, f64)> = cfg
        .n_values
        .iter()
        .zip(&rows)
        .filter(|(&n, _)| n >= 8)
        .map(|(&n, r)| (n, r["report"]["entropy_rate"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    let decreasing = rates
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1);
    let mut summary = Summary::new("capacity", seed, cfg);
    summary.put("dimension", dimension).put("rows", rows).put(
        "flags",
        serde_json::json!({ "within_growth_bound": within, "rate_decreasing_from_8": decreasing }),
    );
    Ok(Outcome {
        summary: format!(
            "capacity: dimension {dimension}, {} sizes",
            cfg.n_values.len()
        ),
        artifacts: vec![
            csv.into_artifact("capacity.csv"),
            summary.into_artifact("capacity.json"),
        ],
        violation: !(within && decreasing),
    })
}

fn bounds(cfg: &BoundsConfig, seed: u64) -> Result<Outcome, CliError> {
    let ranges = RangeSpec::new(cfg.bz, cfg.btau).map_err(|e| invalid("bounds", e))?;
    let capacity = match (cfg.h_tau, cfg.h_z, cfg.h_tau_2m, cfg.h_z_2l) {
        (Some(h_tau), Some(h_z), None, None) => Capacity::Dimensions { h_tau, h_z },
        (None, None, Some(h_tau_2m), Some(h_z_2l)) => Capacity::Entropies { h_tau_2m, h_z_2l },
        _ => {
            return Err(CliError::Config(
                "bounds: give either h_tau and h_z, or h_tau_2m and h_z_2l".into(),
            ))
        }
    };
    if cfg.m_values.is_empty() || cfg.l_values.is_empty() {
        return Err(CliError::Config(
            "bounds: m_values and l_values must be nonempty".into(),
        ));
    }
    let mut csv = Csv::new(&["m", "l", "h_tau", "h_z", "eps", "eta", "term1", "term2"]);
    let mut worst: f64 = 0.0;
    for &m in &cfg.m_values {
        for &l in &cfg.l_values {
            let key = format!("bounds (m={m}, l={l})");
            let inp = BoundInputs::new(m, l, ranges, capacity).map_err(|e| invalid(&key, e))?;
            let eps = solve_epsilon(cfg.eta, &inp).map_err(|e| invalid(&key, e))?;
            let t = bound_terms(&inp, eps)?;
            worst = worst.max((t.total() - cfg.eta).abs());
            let (ht, hz) = match capacity {
                Capacity::Dimensions { h_tau, h_z } => (h_tau.into(), h_z.into()),
                Capacity::Entropies { h_tau_2m, h_z_2l } => (h_tau_2m.into(), h_z_2l.into()),
            };
            csv.row(vec![
                m.into(),
                l.into(),
                ht,
                hz,
                eps.into(),
                cfg.eta.into(),
                t.term1.into(),
                t.term2.into(),
            ]);
        }
    }
    let round_trip = worst < 1e-7;
    let mut summary = Summary::new("bounds", seed, cfg);
    summary
        .put("cells", cfg.m_values.len() * cfg.l_values.len())
        .put("max_round_trip_error", worst)
        .put("flags", serde_json::json!({ "round_trip": round_trip }));
    Ok(Outcome {
        summary: format!("bounds: {} cells", cfg.m_values.len() * cfg.l_values.len()),
        artifacts: vec![
            csv.into_artifact("bounds.csv"),
            summary.into_artifact("bounds.json"),
        ],
        violation: !round_trip,
    })
}

/// Class, truth, loss and loss width (`B - A` of `Q`) for a named instance.
pub fn instance(
    which: Instance,
) -> Result<(FiniteClass<HypothesisPair>, Truth, LossSpec, f64), CliError> {
    Ok(match which {
        Instance::Bernoulli => {
            let truth = Truth {
                data: FiniteDistribution::uniform(vec![
                    Sample::scalar(0.0, 0.0)?,
                    Sample::scalar(0.0, 1.0)?,
                ])?,
                subjects: SubjectSet::uniform(1)?,
            };
            let class = FiniteClass::new(vec![HypothesisPair::lift(Predictor::Constant(0.0))])?;
            (class, truth, LossSpec::unit(LossKind::Absolute), 1.0)
        }
        Instance::Conflict => {
            let (class, truth) = conflict_instance()?;
            // hard assignments onto two uniform subjects weigh 2
            (class, truth, LossSpec::unit(LossKind::Squared), 2.0)
        }
        Instance::Coordinate => {
            let (class, truth) = coordinate_instance([0.2, 0.5, 0.8])?;
            (class, truth, LossSpec::unit(LossKind::Absolute), 1.0)
        }
    })
}

fn verify(cfg: &VerifyConfig, seed: u64) -> Result<Outcome, CliError> {
    let (class, truth, loss, width) = instance(cfg.instance)?;
    let ranges = RangeSpec::new(width, width).expect("positive width");
    let steps = make_schedule(&cfg.m_values, cfg.eps, &ranges).map_err(|e| invalid("verify", e))?;
    let pairs: Vec<(usize, usize)> = steps.iter().map(|s| (s.m as usize, s.l as usize)).collect();
    let trace = deviation_trace(&class, &truth, &loss, cfg.eps, &pairs, cfg.reps, seed)
        .map_err(|e| invalid("verify", e))?;
    let mut csv = Csv::new(&[
        "m",
        "l",
        "estimate",
        "ci_low",
        "ci_high",
        "two_sided",
        "two_sided_ci_low",
        "two_sided_ci_high",
        "hoeffding",
    ]);
    let mut hoeffding_ok = true;
    for s in &trace.per_step {
        let two = s
            .two_sided
            .expect("deviation steps carry a two-sided estimate");
        let hoeffding = (-2.0 * s.l as f64 * cfg.eps * cfg.eps / (width * width)).exp();
        if class.len() == 1 {
            hoeffding_ok &= s.estimate.value <= hoeffding + 3.0 * s.estimate.half_width();
        }
        csv.row(vec![
            s.m.into(),
            s.l.into(),
            s.estimate.value.into(),
            s.estimate.ci_low.into(),
            s.estimate.ci_high.into(),
            two.value.into(),
            two.ci_low.into(),
            two.ci_high.into(),
            hoeffding.into(),
        ]);
    }
    let nonincreasing = trace.per_step.windows(2).all(|w| {
        let slack = 2.0 * w[0].estimate.half_width().max(w[1].estimate.half_width());
        w[1].estimate.value <= w[0].estimate.value + slack
    });
    let &(m_last, l_last) = pairs.last().expect("schedule is nonempty");
    let decomposition = decomposition_check(
        &class, &truth, &loss, cfg.eps, m_last, l_last, cfg.reps, seed,
    )?;
    let (m0, l0) = pairs[0];
    let unbiased = unbiasedness_check(&class.members()[0], &truth, &loss, m0, l0, cfg.reps, seed)?;
    let consistency = cfg
        .c
        .map(|c| consistency_trace(&class, &truth, &loss, c, &pairs, cfg.reps, seed))
        .transpose()
        .map_err(|e| invalid("verify.c", e))?;
    let consistency_ok = consistency.as_ref().map(|t| {
        let first = t.per_step[0].estimate.value;
        t.estimate.value <= first
    });
    let mut flags = serde_json::Map::new();
    flags.insert("nonincreasing".into(), nonincreasing.into());
    if class.len() == 1 {
        flags.insert("hoeffding".into(), hoeffding_ok.into());
    }
    flags.insert("decomposition".into(), (!decomposition.violation).into());
    flags.insert(
        "unbiased".into(),
        serde_json::to_value(unbiased.pass).expect("bool"),
    );
    if let Some(ok) = consistency_ok {
        flags.insert("consistency".into(), ok.into());
    }
    let violation = flags.values().any(|v| v == &serde_json::Value::Bool(false));
    let mut summary = Summary::new("verify", seed, cfg);
    summary
        .put("deviation", &trace)
        .put("decomposition", &decomposition)
        .put("unbiasedness", &unbiased);
    if let Some(t) = &consistency {
        summary.put("consistency", t);
    }
    summary.put("flags", flags);
    Ok(Outcome {
        summary: format!(
            "verify: {} steps, final deviation probability {}",
            trace.per_step.len(),
            trace.estimate.value
        ),
        artifacts: vec![
            csv.into_artifact("verify.csv"),
            summary.into_artifact("verify.json"),
        ],
        violation,
    })
}
