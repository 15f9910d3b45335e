//! Acceptance suite: one pass/fail line per criterion. Exits non-zero if
//! any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use sublearn::bounds::{
    bound_terms, solve_epsilon, uniform_convergence_bound, BoundInputs, Capacity,
};
use sublearn::capacity::{
    annealed_entropy, brute_dimension, growth_bound, interval_family, linspace, threshold_family,
    BetaGrid, UniformInterval,
};
use sublearn::datagen::{multilabel_dataset, MultiLabelSpec};
use sublearn::model::{
    Assignment, FiniteClass, HypothesisPair, LossKind, LossSpec, Predictor, Sample, SubjectSet,
};
use sublearn::montecarlo::{
    conflict_instance, decomposition_check, deviation_trace, gap_check, unclamped_squared_loss,
    Truth,
};
use sublearn::risk::FiniteDistribution;
use sublearn::schedule::{make_schedule, min_data_samples, RangeSpec};
use sublearn::solver::{
    egrm_fit_alternating, egrm_fit_exhaustive, erm_fit, AlternatingConfig, PredictorFamily,
    TabularClass, DEFAULT_PRODUCT_CAP,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, u64);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn risk_gap_reproduction() -> Check {
    let labels = vec![vec![0.0, 1.0, 2.0]];
    let spec = MultiLabelSpec::new(labels, 0.0, 0).map_err(e)?;
    let samples = multilabel_dataset(&spec).map_err(e)?.samples;
    let data = FiniteDistribution::uniform(samples.clone()).map_err(e)?;
    let loss = LossSpec::new(LossKind::Squared, 0.0, 4.0).map_err(e)?;
    let values = [0.0, 1.0, 2.0];
    let erm_class =
        FiniteClass::new(values.iter().map(|&c| Predictor::Constant(c)).collect()).map_err(e)?;
    let erm = erm_fit(&erm_class, &data, &loss).map_err(e)?;
    let subjects = SubjectSet::uniform(3).map_err(e)?;
    let mut gs = Vec::new();
    for &a in &values {
        for &b in &values {
            for &c in &values {
                gs.push(Predictor::PerSubject(vec![a, b, c]));
            }
        }
    }
    let hs = Assignment::all_hard(&samples, &subjects, 1 << 10).map_err(e)?;
    let egrm = egrm_fit_exhaustive(
        &FiniteClass::new(gs).map_err(e)?,
        &FiniteClass::new(hs).map_err(e)?,
        &data,
        &subjects.distribution(),
        &loss,
        DEFAULT_PRODUCT_CAP,
    )
    .map_err(e)?;
    ensure(
        (erm.risk - 2.0 / 3.0).abs() <= 1e-9,
        format!("erm risk {}", erm.risk),
    )?;
    ensure(egrm.risk.abs() <= 1e-9, format!("egrm risk {}", egrm.risk))?;
    ensure((erm.risk - egrm.risk - 2.0 / 3.0).abs() <= 1e-9, "gap")?;
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let n = 1 + (i % 6) as usize;
        let k = 1 + ((i / 6) % 3) as usize;
        let spec = MultiLabelSpec::random(n, k, 3, i).map_err(e)?;
        let g = gap_check(&spec, &unclamped_squared_loss(&spec)).map_err(e)?;
        ensure(
            g.egrm_risk <= g.erm_risk + 1e-12,
            format!("instance {i}: egrm above erm"),
        )?;
        worst = worst.max((g.gap - g.confusion_error).abs());
    }
    ensure(worst <= 1e-9, format!("max |gap - confusion| = {worst:e}"))?;
    Ok(format!(
        "apple gap {:.6}, 100 instances max diff {worst:e}",
        erm.risk - egrm.risk
    ))
}

fn single_subject_reduction() -> Check {
    let one = SubjectSet::uniform(1).map_err(e)?;
    let uniform = FiniteClass::new(vec![Assignment::Uniform]).map_err(e)?;
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let spec = MultiLabelSpec::random(
            1 + (i % 3) as usize,
            1 + ((i / 3) % 3) as usize,
            4,
            1000 + i,
        )
        .map_err(e)?;
        let samples = multilabel_dataset(&spec).map_err(e)?.samples;
        let data = FiniteDistribution::uniform(samples.clone()).map_err(e)?;
        let loss = unclamped_squared_loss(&spec);
        let members = TabularClass::from_labels_and_means(&samples)
            .and_then(|c| c.erm_members(100_000))
            .map_err(e)?;
        let class = FiniteClass::new(members).map_err(e)?;
        let erm = erm_fit(&class, &data, &loss).map_err(e)?;
        let egrm = egrm_fit_exhaustive(
            &class,
            &uniform,
            &data,
            &one.distribution(),
            &loss,
            DEFAULT_PRODUCT_CAP,
        )
        .map_err(e)?;
        worst = worst.max((erm.risk - egrm.risk).abs());
    }
    ensure(worst <= 1e-12, format!("max diff {worst:e}"))?;
    Ok(format!("50 instances, max diff {worst:e}"))
}

fn bernoulli() -> Result<(FiniteClass<HypothesisPair>, Truth), String> {
    let truth = Truth {
        data: FiniteDistribution::uniform(vec![
            Sample::scalar(0.0, 0.0).map_err(e)?,
            Sample::scalar(0.0, 1.0).map_err(e)?,
        ])
        .map_err(e)?,
        subjects: SubjectSet::uniform(1).map_err(e)?,
    };
    let class =
        FiniteClass::new(vec![HypothesisPair::lift(Predictor::Constant(0.0))]).map_err(e)?;
    Ok((class, truth))
}

fn coupled_convergence() -> Check {
    let (class, truth) = bernoulli()?;
    let eps = 0.5;
    let steps: Vec<(usize, usize)> = [4u64, 8, 16, 32]
        .iter()
        .map(|&m| {
            Ok((
                m as usize,
                min_data_samples(m, eps, &RangeSpec::unit()).map_err(e)? as usize,
            ))
        })
        .collect::<Result<_, String>>()?;
    let rep = deviation_trace(
        &class,
        &truth,
        &LossSpec::unit(LossKind::Absolute),
        eps,
        &steps,
        2000,
        11,
    )
    .map_err(e)?;
    for w in rep.per_step.windows(2) {
        let slack = 2.0 * w[0].estimate.half_width().max(w[1].estimate.half_width());
        ensure(
            w[1].estimate.value <= w[0].estimate.value + slack,
            format!("increase at m={}", w[1].m),
        )?;
    }
    for s in &rep.per_step {
        let hoeffding = (-2.0 * s.l as f64 * eps * eps).exp();
        ensure(
            s.estimate.value <= hoeffding + 3.0 * s.estimate.half_width(),
            format!(
                "m={} l={}: {} above Hoeffding {hoeffding:e}",
                s.m, s.l, s.estimate.value
            ),
        )?;
    }
    let est: Vec<String> = rep
        .per_step
        .iter()
        .map(|s| format!("{}:{}", s.l, s.estimate.value))
        .collect();
    Ok(format!("l:estimate {}", est.join(" ")))
}

fn decomposition() -> Check {
    let (class, truth) = conflict_instance().map_err(e)?;
    let rep = decomposition_check(
        &class,
        &truth,
        &LossSpec::unit(LossKind::Squared),
        0.4,
        4,
        32,
        2000,
        5,
    )
    .map_err(e)?;
    ensure(!rep.violation, "violation flagged")?;
    ensure(
        rep.lhs.value <= rep.rhs(),
        format!("lhs {} > rhs {}", rep.lhs.value, rep.rhs()),
    )?;
    Ok(format!(
        "lhs {:.4}, subject {:.4}, data sum {:.4}",
        rep.lhs.value, rep.subject_term.value, rep.data_terms_sum.value
    ))
}

fn capacity() -> Check {
    let pool: Vec<f64> = (0..10).map(|j| (j as f64 + 0.5) / 10.0).collect();
    let thresholds = threshold_family(BetaGrid::Complete).map_err(e)?;
    let intervals = interval_family(&linspace(0.0, 1.0, 41), BetaGrid::Complete).map_err(e)?;
    let h_thr = brute_dimension(&thresholds, &pool, 4).map_err(e)?;
    let h_int = brute_dimension(&intervals, &pool, 4).map_err(e)?;
    ensure(
        h_thr == 1 && h_int == 2,
        format!("dimensions {h_thr}, {h_int}"),
    )?;
    let src = UniformInterval { lo: 0.0, hi: 1.0 };
    let ns = [2usize, 4, 8, 16, 32, 64];
    for (cls, h, name) in [
        (&thresholds, h_thr, "threshold"),
        (&intervals, h_int, "interval"),
    ] {
        let mut rates = Vec::new();
        for (i, &n) in ns.iter().enumerate() {
            let rep = annealed_entropy(cls, n, &src, 200, 40 + i as u64).map_err(e)?;
            let bound = growth_bound(h as u64, n as u64).map_err(e)?;
            ensure(
                rep.annealed_entropy.value <= bound,
                format!("{name} n={n}: {} > {bound}", rep.annealed_entropy.value),
            )?;
            if n >= 8 {
                rates.push(rep.entropy_rate);
            }
        }
        ensure(
            rates.windows(2).all(|w| w[1] < w[0]),
            format!("{name} rates not decreasing: {rates:?}"),
        )?;
    }
    Ok(format!("dimensions threshold {h_thr}, interval {h_int}"))
}

fn bound_inversion() -> Check {
    let mut worst: f64 = 0.0;
    for m in [50u64, 200, 800] {
        for l in [1_000u64, 10_000, 100_000] {
            let inp = BoundInputs::new(
                m,
                l,
                RangeSpec::unit(),
                Capacity::Dimensions { h_tau: 1, h_z: 2 },
            )
            .map_err(e)?;
            for eta in [0.5, 0.05, 0.001] {
                let eps = solve_epsilon(eta, &inp).map_err(e)?;
                worst = worst.max((uniform_convergence_bound(&inp, eps).map_err(e)? - eta).abs());
            }
        }
    }
    ensure(worst <= 1e-7, format!("round trip error {worst:e}"))?;
    for target in [0.3, 0.5, 1.0] {
        let steps =
            make_schedule(&[4, 8, 16, 32, 64, 128, 256], target, &RangeSpec::unit()).map_err(e)?;
        let eps: Vec<f64> = steps
            .iter()
            .map(|s| {
                let inp = BoundInputs::new(
                    s.m,
                    s.l,
                    RangeSpec::unit(),
                    Capacity::Dimensions { h_tau: 1, h_z: 2 },
                )
                .map_err(e)?;
                let x = solve_epsilon(0.05, &inp).map_err(e)?;
                bound_terms(&inp, x).map_err(e)?;
                Ok(x)
            })
            .collect::<Result<_, String>>()?;
        ensure(
            eps.windows(2).all(|w| w[1] < w[0]),
            format!("eps not decreasing: {eps:?}"),
        )?;
    }
    Ok(format!("max round trip error {worst:e}"))
}

fn solver_quality() -> Check {
    let grid = [0.0, 1.0, 2.0];
    let loss = LossSpec::new(LossKind::Squared, 0.0, 4.0).map_err(e)?;
    let mut matched = 0;
    let total = 200;
    for i in 0..total as u64 {
        let spec = MultiLabelSpec::random(
            1 + (i % 3) as usize,
            1 + ((i / 3) % 3) as usize,
            3,
            5000 + i,
        )
        .map_err(e)?;
        let samples = multilabel_dataset(&spec).map_err(e)?.samples;
        let mut distinct: Vec<Sample> = Vec::new();
        for z in &samples {
            if !distinct.contains(z) {
                distinct.push(z.clone());
            }
        }
        let m = if distinct.len() <= 5 {
            2 + (i % 2) as usize
        } else {
            2
        };
        let subjects = SubjectSet::uniform(m).map_err(e)?;
        let data = FiniteDistribution::uniform(samples).map_err(e)?;
        let mut gs = vec![Vec::new()];
        for _ in 0..m {
            gs = gs
                .into_iter()
                .flat_map(|p: Vec<f64>| grid.iter().map(move |&c| [p.clone(), vec![c]].concat()))
                .collect();
        }
        let gs =
            FiniteClass::new(gs.into_iter().map(Predictor::PerSubject).collect()).map_err(e)?;
        let hs = FiniteClass::new(Assignment::all_hard(&distinct, &subjects, 1 << 16).map_err(e)?)
            .map_err(e)?;
        let oracle = egrm_fit_exhaustive(
            &gs,
            &hs,
            &data,
            &subjects.distribution(),
            &loss,
            DEFAULT_PRODUCT_CAP,
        )
        .map_err(e)?;
        let cfg = AlternatingConfig::new(100, 1e-12, 20, i).map_err(e)?;
        let fit = egrm_fit_alternating(
            &PredictorFamily::ConstantGrid(grid.to_vec()),
            &data,
            &subjects,
            &loss,
            &cfg,
        )
        .map_err(e)?;
        ensure(fit.is_monotone(), format!("instance {i}: trace increases"))?;
        ensure(
            fit.risk >= oracle.risk - 1e-12,
            format!("instance {i}: below the oracle"),
        )?;
        if (fit.risk - oracle.risk).abs() <= 1e-6 {
            matched += 1;
        }
    }
    let rate = matched as f64 / total as f64;
    ensure(rate >= 0.95, format!("matched {matched}/{total}"))?;
    Ok(format!("matched {matched}/{total}"))
}

const CONFIG: &str = r#"
seed = 7

[gen]
n_inputs = 4
labels_per_input = 2
n_levels = 3
noise_sd = 0.1

[fit]
label_table = [[0.0, 1.0, 2.0], [1.0, 1.0, 0.0]]
subjects = 3
method = "alternating"

[gap]
n_inputs = 3
labels_per_input = 3
n_levels = 3
instances = 5

[schedule]
m_values = [1, 10]
eps = 0.5

[capacity]
family = "interval"
n_values = [2, 8, 32]
reps = 50

[bounds]
m_values = [50, 100]
l_values = [1000, 5000]
eta = 0.05
h_tau = 1
h_z = 2

[verify]
instance = "conflict"
eps = 0.4
m_values = [4, 8]
reps = 200
c = 0.0
"#;

fn run_cli(dir: &Path, command: &str, config: &Path, jobs: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_sublearn"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(dir)
        .args(["--jobs", jobs])
        .output()
        .map_err(e)?;
    ensure(
        status.status.success(),
        format!(
            "{command} exited with {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr)
        ),
    )
}

fn reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(e)?;
    let config = tmp.path().join("config.toml");
    std::fs::write(&config, CONFIG).map_err(e)?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let commands = [
        "gen", "fit", "gap", "schedule", "capacity", "bounds", "verify",
    ];
    for c in commands {
        run_cli(&a, c, &config, "1")?;
        run_cli(&b, c, &config, "4")?;
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .map_err(e)?
        .map(|d| d.map(|d| d.file_name()))
        .collect::<Result<_, _>>()
        .map_err(e)?;
    names.sort();
    ensure(
        names.len() == 2 * commands.len(),
        format!("{} artifacts", names.len()),
    )?;
    for n in &names {
        let x = std::fs::read(a.join(n)).map_err(e)?;
        let y = std::fs::read(b.join(n)).map_err(e)?;
        ensure(x == y, format!("{} differs", n.to_string_lossy()))?;
    }
    Ok(format!(
        "{} artifacts byte-identical across reruns",
        names.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("risk-gap reproduction", risk_gap_reproduction, 10),
        ("single-subject reduction", single_subject_reduction, 5),
        ("coupled convergence", coupled_convergence, 60),
        ("decomposition", decomposition, 60),
        ("capacity", capacity, 30),
        ("bound inversion", bound_inversion, 5),
        ("solver quality", solver_quality, 60),
        ("reproducibility", reproducibility, 600),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took > Duration::from_secs(*limit) {
                Err(format!("{detail}; took {took:.2?}, limit {limit} s"))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("criterion {} PASS {name} ({took:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name} ({took:.2?}): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
