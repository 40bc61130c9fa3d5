//! Remote judge against a loopback endpoint: no network access needed.

mod common;

use std::time::Duration;

use common::{tool_call_response, MockServer};
use elosearch::env::ToySamplerMode;
use elosearch::harness::ToySpec;
use elosearch::judges::{
    assemble_prompt, build_request, parse_preference, JudgeError, LlmJudge, RateLimiter, RemoteJudgeConfig,
    TaskContext, Winner,
};
use elosearch::{run_record, JudgeSpec, Method, SearchConfig, TaskSource};
use serde_json::Value;

fn config(url: &str) -> RemoteJudgeConfig {
    RemoteJudgeConfig {
        endpoint_url: url.into(),
        model: "judge-model".into(),
        api_key_env: None,
        timeout_secs: 5.0,
        retries: 2,
        backoff_ms: 1,
        ..RemoteJudgeConfig::default()
    }
}

fn judge(cfg: RemoteJudgeConfig) -> LlmJudge {
    LlmJudge::new(cfg, RateLimiter::new(1, Duration::ZERO)).unwrap()
}

fn ctx() -> TaskContext {
    TaskContext::new("Plan a trip.", "Find a hotel.")
}

#[test]
fn prompt_matches_golden_fixture() {
    let inputs: Value = serde_json::from_str(include_str!("fixtures/prompt_inputs.json")).unwrap();
    let s = |k: &str| inputs[k].as_str().unwrap().to_string();
    let context = TaskContext::new(s("task_description"), s("query"));
    let prompt = assemble_prompt(&context, &s("candidate_a"), &s("candidate_b"));
    assert_eq!(prompt.as_bytes(), include_bytes!("fixtures/prompt_golden.txt"));
}

#[test]
fn request_on_the_wire_is_the_built_body() {
    let server = MockServer::start(vec![(200, tool_call_response(r#"{"preference": 0}"#))]);
    let cfg = config(&server.url);
    let verdict = judge(cfg.clone())
        .llm_judge_compare(&ctx(), "trail A", "trail B")
        .unwrap();
    assert_eq!(verdict.winner, Winner::First);
    assert!(verdict.raw.is_some());

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    assert!(requests[0].request_line.starts_with("POST /v1/chat/completions "));
    assert!(requests[0].header("authorization").is_none());
    let sent: Value = serde_json::from_str(&requests[0].body).unwrap();
    let expected = build_request(&cfg, &assemble_prompt(&ctx(), "trail A", "trail B"));
    assert_eq!(sent, expected);
    assert_eq!(sent["tool_choice"]["function"]["name"], "choose_preference");
}

#[test]
fn preference_indices_map_to_verdicts() {
    let cases = [
        (r#"{"preference": 0}"#, 0, Winner::First),
        (r#"{"preference": 1}"#, 0, Winner::Second),
        (r#"{"preference": 2}"#, 0, Winner::Abstain),
        (r#"{"preference": -1}"#, 0, Winner::Abstain),
        (r#"{"preference": 1.0}"#, 0, Winner::Second),
        (r#"{"preference": "0"}"#, 0, Winner::First),
        (r#"{"preference": 1}"#, 1, Winner::First),
        (r#"{"preference": 2}"#, 1, Winner::Second),
        (r#"{"preference": 0}"#, 1, Winner::Abstain),
    ];
    for (args, base, want) in cases {
        assert_eq!(
            parse_preference(&tool_call_response(args), base).unwrap(),
            want,
            "{args} base {base}"
        );
    }
    let legacy =
        r#"{"choices":[{"message":{"function_call":{"name":"choose_preference","arguments":"{\"preference\":1}"}}}]}"#;
    assert_eq!(parse_preference(legacy, 0).unwrap(), Winner::Second);
}

#[test]
fn malformed_bodies_are_judge_errors() {
    let bodies = [
        "not json".to_string(),
        "{}".to_string(),
        r#"{"choices":[]}"#.to_string(),
        r#"{"choices":[{"message":{"content":"A is better"}}]}"#.to_string(),
        r#"{"choices":[{"message":{"tool_calls":[{"function":{"name":"other","arguments":"{}"}}]}}]}"#.to_string(),
        tool_call_response("{not json"),
        tool_call_response(r#"{"choice": 0}"#),
        tool_call_response(r#"{"preference": "first"}"#),
    ];
    for body in &bodies {
        assert!(
            matches!(parse_preference(body, 0), Err(JudgeError::Malformed(_))),
            "accepted {body}"
        );
    }
}

#[test]
fn server_errors_are_retried_and_client_errors_are_not() {
    let server = MockServer::start(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, tool_call_response(r#"{"preference": 1}"#)),
    ]);
    let verdict = judge(config(&server.url)).llm_judge_compare(&ctx(), "a", "b").unwrap();
    assert_eq!(verdict.winner, Winner::Second);
    assert_eq!(server.requests().len(), 3);

    let server = MockServer::start(vec![(400, r#"{"error":"bad request"}"#.into())]);
    let err = judge(config(&server.url))
        .llm_judge_compare(&ctx(), "a", "b")
        .unwrap_err();
    assert!(matches!(err, JudgeError::Http { status: 400, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn credentials_come_from_the_named_variable() {
    let var = "ELOSEARCH_TEST_JUDGE_KEY_7F3A";
    let mut cfg = config("http://127.0.0.1:9/unused");
    cfg.api_key_env = Some(var.into());
    assert!(matches!(
        LlmJudge::new(cfg.clone(), RateLimiter::new(1, Duration::ZERO)),
        Err(JudgeError::MissingCredentials(v)) if v == var
    ));

    let server = MockServer::start(vec![(200, tool_call_response(r#"{"preference": 0}"#))]);
    cfg.endpoint_url = server.url.clone();
    std::env::set_var(var, "sk-test-123");
    let j = judge(cfg);
    std::env::remove_var(var);
    j.llm_judge_compare(&ctx(), "a", "b").unwrap();
    assert_eq!(server.requests()[0].header("authorization"), Some("Bearer sk-test-123"));
}

#[test]
fn malformed_verdicts_leave_the_search_state_untouched() {
    let server = MockServer::start(vec![(200, r#"{"choices":[{"message":{"content":"B"}}]}"#.into())]);
    let task = TaskSource::Toy(ToySpec {
        id: "toy".into(),
        branching: 3,
        depth: 2,
        table: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        seed: 1,
        success_threshold: None,
        sampler: ToySamplerMode::Uniform,
    });
    let mut cfg = SearchConfig::default();
    cfg.budget.max_explorations = 5;
    let spec = JudgeSpec::Remote {
        config: config(&server.url),
    };
    let rec = run_record(&task, Method::Judec, &cfg, &spec, 3, None).unwrap();

    assert!(rec.sequences.len() >= 2);
    assert!(rec.rounds.iter().all(|r| r.judgments.is_empty()));
    assert!(!rec.ledger.judge_errors.is_empty());
    let initial = cfg.elo.initial_score;
    for node in rec.tree.nodes() {
        assert_eq!(node.elo, initial, "node {} moved", node.id);
        assert_eq!(node.update_count, 0, "node {} counted an update", node.id);
    }
}
