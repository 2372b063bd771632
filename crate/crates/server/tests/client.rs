use std::sync::Arc;
use std::time::Duration;

use erd_core::corpus::{generate_synthetic, Corpus, Split, SyntheticSpec};
use erd_core::metrics::Verdict;
use erd_core::trainer::{fit, validate_epoch, DecisionRule};
use erd_core::{ModelParams, TimeMode, TrainConfig};
use erd_server::{
    client_run, decision_log_csv, policy_decide, spawn_server, Action, ClientError, CreateRunRequest, Endpoint,
    ErrorKind, HttpEndpoint, InProcess, PolicyConfig, Registry, RetryPolicy, Scoring,
};

fn policy(threshold: f64, min_delay: usize) -> PolicyConfig {
    PolicyConfig { threshold, min_delay, ..PolicyConfig::default() }
}

#[test]
fn policy_boundaries() {
    assert_eq!(policy_decide(0.75, 12, &policy(0.7, 10)), Action::Alarm);
    assert_eq!(policy_decide(0.95, 3, &policy(0.7, 5)), Action::Continue);
    assert_eq!(policy_decide(0.7, 50, &policy(0.7, 5)), Action::Continue);
    assert_eq!(policy_decide(0.7000000000000001, 50, &policy(0.7, 5)), Action::Alarm);
    assert_eq!(policy_decide(0.9, 5, &policy(0.7, 5)), Action::Alarm);
    assert_eq!(policy_decide(0.9, 4, &policy(0.7, 5)), Action::Continue);
    assert_eq!(policy_decide(1.0, 1, &policy(0.7, 1)), Action::Alarm);
    assert_eq!(policy_decide(0.0, 100, &policy(0.7, 1)), Action::Continue);
}

#[test]
fn policy_rejects_bad_settings() {
    assert!(policy(0.0, 5).validate().is_err());
    assert!(policy(1.0, 5).validate().is_err());
    assert!(policy(0.7, 0).validate().is_err());
    assert!(PolicyConfig { window_size: 0, ..PolicyConfig::default() }.validate().is_err());
    assert!(PolicyConfig::default().validate().is_ok());
}

struct Bench {
    test: Corpus,
    params: ModelParams,
    cfg: TrainConfig,
}

/// A small trained model and a held-out corpus it has not seen.
fn bench(mode: TimeMode) -> Bench {
    let spec = SyntheticSpec { seed: 21, n_users: 160, positive_ratio: 0.45, ..Default::default() };
    let all = generate_synthetic(&spec).unwrap();
    let (rest, mut test) = all.split_stratified(60, 21, Split::Test).unwrap();
    test.name = "heldout".into();
    let (train, val) = rest.split_stratified(20, 21, Split::Trial).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        mode,
        validation_rule: DecisionRule { threshold: 0.7, min_delay: 5 },
        ..Default::default()
    };
    let params = fit(&train, &val, &cfg, |_, _, _| Ok(())).unwrap().best_params;
    Bench { test, params, cfg }
}

fn registry(c: &Corpus) -> Arc<Registry> {
    let reg = Registry::default();
    reg.add_corpus(c.clone());
    Arc::new(reg)
}

fn request(b: &Bench) -> CreateRunRequest {
    CreateRunRequest { metrics: Some(b.cfg.metrics_for_validation()), ..CreateRunRequest::new("heldout") }
}

#[test]
fn checkpoint_client_matches_offline_validation() {
    for mode in [TimeMode::Temporal, TimeMode::SlidingWindow] {
        let b = bench(mode);
        let offline = validate_epoch(&b.params, &b.test, &b.cfg).unwrap();
        let pol = PolicyConfig { scoring: Scoring::Checkpoint, ..policy(0.7, 5) };
        let online = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &pol, None).unwrap();
        assert_eq!(online.decisions, offline.decisions, "{mode}");
        assert_eq!(online.report, offline.report, "{mode}");
        assert!(online.report.counts.tp > 0, "the model should flag someone");
    }
}

#[test]
fn per_round_client_is_never_later() {
    let b = bench(TimeMode::Temporal);
    let reg = registry(&b.test);
    let ckpt = PolicyConfig { scoring: Scoring::Checkpoint, ..policy(0.7, 5) };
    let slow = client_run(&mut InProcess(reg.clone()), &request(&b), &b.params, &ckpt, None).unwrap();
    let fast = client_run(&mut InProcess(reg), &request(&b), &b.params, &policy(0.7, 5), None).unwrap();
    let fast_alarms = fast.alarm_rounds();
    for (user, round) in slow.alarm_rounds() {
        let got = fast_alarms.get(user).copied();
        assert!(got.is_some_and(|r| r <= round), "{user}: checkpoint {round}, per-round {got:?}");
    }
}

#[test]
fn client_runs_are_reproducible() {
    let b = bench(TimeMode::Temporal);
    let dir = tempfile::tempdir().unwrap();
    let (a, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let ra = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &policy(0.7, 5), Some(&a)).unwrap();
    let rb = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &policy(0.7, 5), Some(&c)).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(ra.report, rb.report);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, decision_log_csv(&ra.log));
    assert!(text.starts_with("round,user_id,score,action\n"));
}

#[test]
fn longer_min_delay_only_changes_early_alarms() {
    let b = bench(TimeMode::Temporal);
    let five = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &policy(0.7, 5), None).unwrap();
    let ten = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &policy(0.7, 10), None).unwrap();
    let early: Vec<&str> = five.alarm_rounds().into_iter().filter(|&(_, r)| r < 10).map(|(u, _)| u).collect();
    for (d5, d10) in five.decisions.iter().zip(&ten.decisions) {
        if !early.contains(&d5.user_id.as_str()) {
            assert_eq!(d5, d10);
        } else {
            assert!(d10.verdict == Verdict::Negative || d10.k >= 10);
        }
    }
}

#[test]
fn http_and_in_process_agree() {
    let b = bench(TimeMode::Temporal);
    let server = spawn_server(registry(&b.test), "127.0.0.1:0".parse().unwrap()).unwrap();
    let mut http = HttpEndpoint::new(server.base_url(), RetryPolicy::default());
    let over_http = client_run(&mut http, &request(&b), &b.params, &policy(0.7, 5), None).unwrap();
    let local = client_run(&mut InProcess(registry(&b.test)), &request(&b), &b.params, &policy(0.7, 5), None).unwrap();
    assert_eq!(over_http.decisions, local.decisions);
    assert_eq!(over_http.report, local.report);
    assert_eq!(over_http.log, local.log);
    server.shutdown().unwrap();
}

fn status(e: ClientError) -> (u16, ErrorKind) {
    match e {
        ClientError::Protocol { status, body } => (status, body.kind),
        other => panic!("{other}"),
    }
}

#[test]
fn http_error_codes() {
    let b = bench(TimeMode::Temporal);
    let server = spawn_server(registry(&b.test), "127.0.0.1:0".parse().unwrap()).unwrap();
    let mut http = HttpEndpoint::new(server.base_url(), RetryPolicy::default());
    assert_eq!(status(http.create_run(&CreateRunRequest::new("missing")).unwrap_err()), (404, ErrorKind::NotFound));
    let run = http.create_run(&request(&b)).unwrap().run_id;
    assert_eq!(status(http.results(&run).unwrap_err()), (409, ErrorKind::Conflict));
    let p = http.next_round(&run).unwrap();
    assert_eq!(status(http.next_round(&run).unwrap_err()), (409, ErrorKind::Conflict));
    let empty = erd_server::DecisionSubmission::new(p.round, vec![]);
    let (code, kind) = status(http.submit_decisions(&run, &empty).unwrap_err());
    assert_eq!((code, kind), (422, ErrorKind::Validation));
    drop(server);
}

#[test]
fn unreachable_server_gives_up() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let retry = RetryPolicy { attempts: 3, backoff: Duration::from_millis(5), timeout: Duration::from_secs(2) };
    let mut http = HttpEndpoint::new(format!("http://{addr}"), retry);
    match http.create_run(&CreateRunRequest::new("x")).unwrap_err() {
        ClientError::Network { attempts, .. } => assert_eq!(attempts, 3),
        e => panic!("{e}"),
    }
}
