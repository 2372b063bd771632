//! Acceptance run: one line per criterion, then a non-zero exit if any
//! asserted criterion failed. The ablation direction (5) is reported but
//! not asserted; see the README.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use erd_cli::pipeline::evaluator_name;
use erd_cli::{run_benchmark, BenchmarkRun, Pipeline, PipelineConfig};
use erd_core::corpus::{Corpus, Label, Split, UserHistory};
use erd_core::metrics::{erde, latency_cost, Decision, MetricsConfig, Verdict};
use erd_core::model::{
    accumulate_gradient, ce_loss_and_grad, predict_proba, FeatureVector, ModelMeta, ModelParams,
};
use erd_core::trainer::{temporal_loss, LossMode};
use erd_core::TimeMode;
use erd_core::corpus::TimedWindow;
use erd_server::{client_run, policy_decide, Action, CreateRunRequest, InProcess, PolicyConfig, Registry, Scoring};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ABLATION_SEEDS: std::ops::RangeInclusive<u64> = 7..=11;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

// ---------------------------------------------------------------- 1

fn erde_oracle(labels: &[bool], flagged: &[bool], ks: &[usize], theta: usize, c_fp: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..labels.len() {
        sum += match (flagged[i], labels[i]) {
            (true, false) => c_fp,
            (false, true) => 1.0,
            (true, true) => 1.0 - 1.0 / (1.0 + (ks[i] as f64 - theta as f64).exp()),
            (false, false) => 0.0,
        };
    }
    sum / labels.len() as f64
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let n = rng.random_range(1..=20);
        let theta = [5, 30, 50][set % 3];
        let c_fp = rng.random_range(0.0..1.0);
        let mut users = vec![];
        let (mut labels, mut flagged, mut ks) = (vec![], vec![], vec![]);
        let mut decisions = vec![];
        for i in 0..n {
            let total = rng.random_range(1..120);
            let k = rng.random_range(1..=total);
            let label = rng.random_bool(0.5);
            let flag = rng.random_bool(0.5);
            let l = if label { Label::Positive } else { Label::Negative };
            users.push(UserHistory::new(format!("u{i}"), l, vec!["x".to_string(); total]).unwrap());
            let v = if flag { Verdict::Positive } else { Verdict::Negative };
            decisions.push(Decision::new(format!("u{i}"), v, k));
            labels.push(label);
            flagged.push(flag);
            ks.push(k);
        }
        let gold = Corpus::new("c1", Split::Test, users).unwrap();
        let cfg = MetricsConfig { theta, report_thetas: vec![theta], c_fp: Some(c_fp), ..Default::default() };
        let got: f64 = erde(&decisions, &gold, &cfg).unwrap();
        worst = worst.max((got - erde_oracle(&labels, &flagged, &ks, theta, c_fp)).abs());
    }
    let mut half = true;
    let mut symmetry = 0.0f64;
    for theta in 1..=60 {
        half &= latency_cost::<f64>(theta, theta) == 0.5;
        for d in 0..theta {
            let s = latency_cost::<f64>(theta + d, theta) + latency_cost::<f64>(theta - d, theta);
            symmetry = symmetry.max((s - 1.0).abs());
        }
    }
    let elapsed = started.elapsed();
    Outcome::new(
        worst <= 1e-12 && half && symmetry <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("max |erde - oracle| {worst:.2e}, lc(θ)=0.5 {half}, symmetry {symmetry:.2e}, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- 2

/// The temporal loss written out directly, one branch per case.
fn listing_oracle(
    pred_probs: &[f64],
    pred_labels: &[u8],
    pred_times: &[usize],
    real_labels: &[u8],
    real_times: &[usize],
    theta: usize,
) -> f64 {
    let mut total_loss = vec![];
    for i in 0..pred_probs.len() {
        let pred = pred_labels[i];
        let real = real_labels[i];
        if pred == 1 && pred == real && (real_times[i] < pred_times[i] || theta < pred_times[i]) {
            total_loss.push(1.0);
        } else if real == 1 {
            total_loss.push(-pred_probs[i].ln());
        } else {
            total_loss.push(-(1.0 - pred_probs[i]).ln());
        }
    }
    total_loss.iter().sum::<f64>() / total_loss.len() as f64
}

fn label(b: u8) -> Label {
    if b == 1 {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut delayed = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let pred: Vec<u8> = probs.iter().map(|&p| (p > 0.5) as u8).collect();
        let real: Vec<u8> = (0..n).map(|_| rng.random_bool(0.5) as u8).collect();
        let pt: Vec<usize> = (0..n).map(|_| rng.random_range(1..60)).collect();
        let rt: Vec<usize> = (0..n).map(|_| rng.random_range(1..60)).collect();
        let expected = listing_oracle(&probs, &pred, &pt, &real, &rt, 30);
        let pl: Vec<Label> = pred.iter().map(|&b| label(b)).collect();
        let rl: Vec<Label> = real.iter().map(|&b| label(b)).collect();
        let got = temporal_loss(&probs, &pl, &pt, &rl, &rt, 30, LossMode::ConstantPaper).unwrap();
        delayed += got.delayed.iter().filter(|&&d| d).count();
        if got.mean != expected {
            mismatches += 1;
        }
    }
    use Label::{Negative as N, Positive as P};
    let mixed: f64 = temporal_loss(&[0.8, 0.9, 0.2], &[P, P, N], &[35, 10, 10], &[P, P, N], &[100, 100, 100], 30, LossMode::ConstantPaper)
        .unwrap()
        .mean;
    Outcome::new(
        mismatches == 0 && delayed > 0 && (mixed - 0.4428).abs() <= 1e-4,
        format!("{mismatches}/200 batches differ ({delayed} delayed samples), mixed batch {mixed:.6}"),
    )
}

// ---------------------------------------------------------------- 3

const WORDS: &[&str] = &["hoy", "triste", "casa", "solo", "sol", "miedo", "perro", "noche"];

fn random_instance(rng: &mut ChaCha8Rng) -> (ModelParams<f64>, Vec<FeatureVector<f64>>, Vec<Label>, Vec<Label>, Vec<usize>, Vec<usize>) {
    let meta = ModelMeta { dim: 64, mode: TimeMode::Temporal, ..ModelMeta::default() };
    let mut params = ModelParams::zeros(meta).unwrap();
    for v in &mut params.values {
        *v = rng.random_range(-0.3..0.3);
    }
    let n = rng.random_range(1..9);
    let (mut xs, mut pl, mut rl, mut pt, mut rt) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let len = rng.random_range(1..12);
        let text: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        xs.push(params.featurize(&TimedWindow::from_text("u", text.join(" "), rng.random_range(1..120))));
        pl.push(if rng.random_bool(0.6) { Label::Positive } else { Label::Negative });
        rl.push(if rng.random_bool(0.6) { Label::Positive } else { Label::Negative });
        pt.push(rng.random_range(1..80));
        rt.push(rng.random_range(1..80));
    }
    (params, xs, pl, rl, pt, rt)
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn numeric_gradient(params: &ModelParams<f64>, coords: &[usize], f: &dyn Fn(&ModelParams<f64>) -> f64) -> Vec<f64> {
    const H: f64 = 1e-5;
    coords
        .iter()
        .map(|&i| {
            let mut plus = params.clone();
            plus.values[i] += H;
            let mut minus = params.clone();
            minus.values[i] -= H;
            (f(&plus) - f(&minus)) / (2.0 * H)
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (params, xs, pl, rl, pt, rt) = random_instance(&mut rng);
        let mut coords: Vec<usize> = xs.iter().flat_map(|x| x.text.iter().map(|&(i, _)| i as usize)).collect();
        coords.extend(params.meta.dim..params.meta.n_params());
        coords.sort_unstable();
        coords.dedup();

        let weighted = |p: &ModelParams<f64>| {
            let probs: Vec<f64> = xs.iter().map(|x| predict_proba(p, x).unwrap().probability).collect();
            temporal_loss(&probs, &pl, &pt, &rl, &rt, 30, LossMode::WeightedCe).unwrap()
        };
        let loss = weighted(&params);
        let mut grad = vec![0.0; params.values.len()];
        for (x, d) in xs.iter().zip(&loss.dlogit) {
            accumulate_gradient(&mut grad, &params.meta, x, d / xs.len() as f64);
        }
        let analytic: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        let numeric = numeric_gradient(&params, &coords, &|p| weighted(p).mean);
        worst = worst.max(relative_error(&analytic, &numeric));

        let batch: Vec<(FeatureVector<f64>, Label)> = xs.iter().cloned().zip(rl.iter().copied()).collect();
        let (_, grad) = ce_loss_and_grad(&params, &batch).unwrap();
        let analytic: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        let numeric = numeric_gradient(&params, &coords, &|p| ce_loss_and_grad(p, &batch).unwrap().0);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let elapsed = started.elapsed();
    Outcome::new(
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} over 50 instances, {elapsed:.2?}"),
    )
}

// ---------------------------------------------------------------- 4-7, 9

fn erde30(run: &erd_server::ClientRun) -> f64 {
    run.report.erde_for(30).expect("ERDE30 reported")
}

fn criterion_4(run: &BenchmarkRun) -> Outcome {
    let r = &run.per_round.report;
    let e = erde30(&run.per_round);
    Outcome::new(
        r.f1 >= 0.80 && e <= 0.25 && run.elapsed < Duration::from_secs(120),
        format!("seed {} temporal via mock-server: F1 {:.4}, ERDE30 {e:.4}, {:.2?}", run.seed, r.f1, run.elapsed),
    )
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn criterion_5(base: &PipelineConfig, temporal_seed7: &BenchmarkRun, sliding_seed7: &BenchmarkRun) -> Outcome {
    let mut per_mode: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for seed in ABLATION_SEEDS {
        for (name, mode, pinned) in [("temporal", TimeMode::Temporal, temporal_seed7), ("sliding_window", TimeMode::SlidingWindow, sliding_seed7)] {
            let value = if seed == pinned.seed {
                erde30(&pinned.per_round)
            } else {
                erde30(&run_benchmark(base, seed, mode).expect("benchmark run").per_round)
            };
            per_mode.entry(name).or_default().push(value);
        }
    }
    let t = median(per_mode["temporal"].clone());
    let s = median(per_mode["sliding_window"].clone());
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    Outcome::new(
        t <= s,
        format!(
            "median ERDE30 temporal {t:.4} vs sliding_window {s:.4} (seeds 7..=11; temporal [{}], sliding [{}])",
            fmt(&per_mode["temporal"]),
            fmt(&per_mode["sliding_window"])
        ),
    )
}

fn criterion_6(runs: &[&BenchmarkRun]) -> Outcome {
    let mut equal = true;
    let mut later = 0;
    let mut missing = 0;
    for run in runs {
        equal &= run.checkpoint.report == run.offline;
        let fast = run.per_round.alarm_rounds();
        for (user, r) in run.checkpoint.alarm_rounds() {
            match fast.get(user) {
                Some(&f) if f <= r => {}
                Some(_) => later += 1,
                None => missing += 1,
            }
        }
    }
    Outcome::new(
        equal && later == 0 && missing == 0,
        format!("checkpoint client == offline report: {equal}; per-round alarms later: {later}, never: {missing}"),
    )
}

fn criterion_7(run: &BenchmarkRun) -> Outcome {
    let p = |threshold, min_delay| PolicyConfig { threshold, min_delay, ..PolicyConfig::default() };
    let cases = [
        (0.7, 50, p(0.7, 5), Action::Continue),
        (0.7000000000000001, 50, p(0.7, 5), Action::Alarm),
        (0.9, 4, p(0.7, 5), Action::Continue),
        (0.9, 5, p(0.7, 5), Action::Alarm),
        (0.75, 12, p(0.7, 10), Action::Alarm),
        (0.95, 3, p(0.7, 5), Action::Continue),
        (1.0, 1, p(0.7, 1), Action::Alarm),
        (0.0, 100, p(0.7, 1), Action::Continue),
    ];
    let boundary_failures = cases.iter().filter(|(s, k, pol, want)| policy_decide(*s, *k, pol) != *want).count();

    // a model that never fires: every user must end negative at its own history length
    let silent = ModelParams::zeros(run.params.meta.clone()).unwrap();
    let registry = Registry::new(MetricsConfig::default());
    registry.add_corpus(run.test.clone());
    let mut endpoint = InProcess(Arc::new(registry));
    let silent_run = client_run(&mut endpoint, &CreateRunRequest::new(run.test.name.clone()), &silent, &PolicyConfig::default(), None).unwrap();
    let totals: BTreeMap<&str, usize> = run.test.users.iter().map(|u| (u.user_id.as_str(), u.total_posts())).collect();
    let mut exhaustion_failures = 0;
    for d in silent_run.decisions.iter().chain(&run.per_round.decisions) {
        if !d.verdict.is_positive() && d.k != totals[d.user_id.as_str()] {
            exhaustion_failures += 1;
        }
    }
    exhaustion_failures += silent_run.decisions.iter().filter(|d| d.verdict.is_positive()).count();
    Outcome::new(
        boundary_failures == 0 && exhaustion_failures == 0 && silent_run.decisions.len() == run.test.len(),
        format!("{} boundary cases, {boundary_failures} wrong; exhaustion negatives wrong: {exhaustion_failures}", cases.len()),
    )
}

fn criterion_9(temporal: &BenchmarkRun, sliding: &BenchmarkRun) -> Outcome {
    let spread = |run: &BenchmarkRun| {
        let ps: Vec<f64> = run.probe.iter().map(|p| p.probability).collect();
        ps.iter().cloned().fold(f64::MIN, f64::max) - ps.iter().cloned().fold(f64::MAX, f64::min)
    };
    let t = spread(temporal);
    let s = spread(sliding);
    let first = temporal.probe.first().map(|p| p.probability).unwrap_or(0.0);
    let last = temporal.probe.last().map(|p| p.probability).unwrap_or(0.0);
    Outcome::new(
        t > 0.01 && s == 0.0 && temporal.probe.len() == 10,
        format!("temporal max-min {t:.4} (t=10 {first:.4}, t=100 {last:.4}); sliding_window max-min {s:e}"),
    )
}

// ---------------------------------------------------------------- 8

fn full_pipeline(root: &Path) -> Result<(), erd_cli::CliError> {
    let p = Pipeline::new(PipelineConfig::default(), root)?;
    p.generate()?;
    for mode in [TimeMode::Temporal, TimeMode::SlidingWindow] {
        let mut cfg = p.cfg.clone();
        cfg.train.mode = mode;
        Pipeline::new(cfg, root)?.train()?;
    }
    let server = p.spawn_server("127.0.0.1:0".parse().unwrap())?;
    for mode in [TimeMode::Temporal, TimeMode::SlidingWindow] {
        let ckpt = p.best_checkpoint(mode);
        p.evaluate(&ckpt, &p.corpus_file(Split::Test), &mode.to_string())?;
        for scoring in [Scoring::PerRound, Scoring::Checkpoint] {
            let policy = PolicyConfig { scoring, ..p.cfg.policy.clone() };
            let out = p.http_client(&server.base_url(), &ckpt, &mode.to_string(), &policy)?;
            assert_eq!(out.record.evaluator, evaluator_name(scoring));
        }
    }
    server.shutdown().map_err(erd_cli::CliError::Server)?;
    p.report()?;
    Ok(())
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != erd_cli::manifest::MANIFEST_FILE) {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if let Err(e) = full_pipeline(a.path()).and_then(|_| full_pipeline(b.path())) {
        return Outcome::new(false, format!("pipeline failed: {e}"));
    }
    let fa = files_under(a.path());
    let fb = files_under(b.path());
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let kinds = ["corpus/", "checkpoints/", "logs/decisions_", "reports/"];
    let covered = kinds.iter().all(|k| fa.keys().any(|p| p.to_string_lossy().starts_with(k)));
    Outcome::new(
        differing.is_empty() && covered,
        format!("{} files compared, differing: {:?}", fa.len(), differing),
    )
}

fn main() -> ExitCode {
    let base = PipelineConfig::default();
    let temporal = run_benchmark(&base, 7, TimeMode::Temporal).expect("temporal benchmark");
    let sliding = run_benchmark(&base, 7, TimeMode::SlidingWindow).expect("sliding_window benchmark");

    let results = [
        (1, true, criterion_1()),
        (2, true, criterion_2()),
        (3, true, criterion_3()),
        (4, true, criterion_4(&temporal)),
        (5, false, criterion_5(&base, &temporal, &sliding)),
        (6, true, criterion_6(&[&temporal, &sliding])),
        (7, true, criterion_7(&temporal)),
        (8, true, criterion_8()),
        (9, true, criterion_9(&temporal, &sliding)),
    ];
    let mut failed = vec![];
    for (n, asserted, o) in &results {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        let note = if *asserted { "" } else { " [reported, not asserted]" };
        println!("criterion {n}: {verdict} {}{note}", o.detail);
        if *asserted && !o.pass {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("asserted criteria failed: {failed:?}");
        ExitCode::FAILURE
    }
}
