use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Stdio};

use navxai::metrics::{AGGREGATE_CSV_HEADER, SESSION_CSV_HEADER};
use navxai::world::TaskBank;
use navxai_cli::run;
use serde_json::Value;

fn navxai(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut argv = vec!["navxai"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// File name to contents for every file under `dir`.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn help_and_usage_exit_codes() {
    for sub in ["simulate", "train", "gen-tasks", "serve", "report"] {
        assert_eq!(navxai(&[sub, "--help"]).0, 0, "{sub}");
    }
    assert_eq!(navxai(&["--help"]).0, 0);
    assert_eq!(navxai(&["simulate", "--bogus"]).0, 1);
    assert_eq!(navxai(&["simulate", "--n", "many"]).0, 1);
    assert_eq!(navxai(&["simulate", "--compare", "balanced,wizard"]).0, 1);
    assert_eq!(navxai(&["simulate", "--flow", "sideways"]).0, 1);
    assert_eq!(navxai(&["simulate", "--flow", "personalization", "--compare", "balanced"]).0, 1);
    assert_eq!(navxai(&["simulate", "--error-rate", "1.5"]).0, 1);
    assert_eq!(navxai(&["report"]).0, 1);
    assert_eq!(navxai(&["nonsense"]).0, 1);
}

#[test]
fn missing_inputs_are_data_errors() {
    assert_eq!(navxai(&["simulate", "--n", "1", "--tasks", "/no/such/tasks.json"]).0, 2);
    assert_eq!(navxai(&["simulate", "--n", "1", "--model", "/no/such/model.json"]).0, 2);
    assert_eq!(navxai(&["report", "--data-dir", "/no/such/dir"]).0, 2);
    assert_eq!(navxai(&["serve", "--model", "/no/such/model.json", "--bind", "127.0.0.1:0"]).0, 2);
}

#[test]
fn single_session_report_has_a_valid_schema() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = navxai(&["simulate", "--n", "1", "--compare", "random", "--seed", "3", "--out", path(dir.path())]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("random"));
    let sessions = std::fs::read_to_string(dir.path().join("sessions.csv")).unwrap();
    assert_eq!(sessions.lines().next().unwrap(), SESSION_CSV_HEADER.join(","));
    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next().unwrap(), AGGREGATE_CSV_HEADER.join(","));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(doc["sessions"], 1);
    assert!(doc["by_strategy"]["rows"].as_array().unwrap().iter().any(|r| r["condition"] == "random"));
    assert_eq!(doc["series"]["random"].as_array().unwrap().len(), 1);
    assert!(dir.path().join("sessions/random-0000.jsonl").exists());
    assert!(dir.path().join("index.json").exists());
    // No balanced condition, so no pilot model.
    assert!(!dir.path().join("pilot-model.json").exists());
}

#[test]
fn simulate_is_deterministic_and_report_agrees() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec!["simulate", "--n", "6", "--seed", "7", "--compare", "balanced,preference,random", "--out"]
            .into_iter()
            .map(String::from)
            .chain([path(out).to_string()])
            .collect::<Vec<_>>()
    };
    let run_in = |out: &Path| {
        let argv = args(out);
        navxai(&argv.iter().map(String::as_str).collect::<Vec<_>>())
    };
    let (c1, s1) = run_in(a.path());
    let (c2, s2) = run_in(b.path());
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(s1, s2);
    assert_eq!(tree(a.path()), tree(b.path()));
    // Rerunning into the same directory replaces rather than appends.
    run_in(a.path());
    assert_eq!(tree(a.path()), tree(b.path()));
    assert!(a.path().join("pilot-model.json").exists());

    // Two-path consistency: aggregating the stored logs reproduces the run.
    let rep = tempfile::tempdir().unwrap();
    let (code, csv) = navxai(&["report", "--data-dir", path(a.path()), "--out", path(rep.path())]);
    assert_eq!(code, 0);
    for f in ["aggregate.json", "aggregate.csv", "sessions.csv", "summary.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(rep.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(csv.as_bytes(), std::fs::read(a.path().join("aggregate.csv")).unwrap());
    assert!(s1.contains(&std::fs::read_to_string(a.path().join("summary.txt")).unwrap()));

    // Permuted file order gives the same output.
    let shuffled = tempfile::tempdir().unwrap();
    let mut logs: Vec<_> = std::fs::read_dir(a.path().join("sessions")).unwrap().map(|e| e.unwrap().path()).collect();
    logs.sort();
    for (i, p) in logs.iter().rev().enumerate() {
        std::fs::copy(p, shuffled.path().join(format!("{i:03}-x.jsonl"))).unwrap();
    }
    let (_, csv2) = navxai(&["report", "--data-dir", path(shuffled.path())]);
    assert_eq!(csv, csv2);
}

#[test]
fn report_on_an_empty_dir_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let (code, csv) = navxai(&["report", "--data-dir", path(dir.path())]);
    assert_eq!(code, 0);
    assert_eq!(csv.trim_end(), AGGREGATE_CSV_HEADER.join(","));
    let (code, csv) = navxai(&["report", "--data-dir", path(dir.path()), "--group-by", "strategy-modality"]);
    assert_eq!(code, 0);
    assert_eq!(csv.lines().count(), 1);
    assert_eq!(navxai(&["report", "--data-dir", path(dir.path()), "--group-by", "colour"]).0, 1);
}

#[test]
fn other_flows_simulate() {
    let (code, text) = navxai(&["simulate", "--flow", "personalization", "--compare", "balanced,random", "--n", "4"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("balanced") && text.contains("random"));
    let (code, text) = navxai(&["simulate", "--flow", "population", "--n", "3", "--error-rate", "0.5"]);
    assert_eq!(code, 0, "{text}");
    for m in ["fixed-language", "fixed-feature-map", "fixed-decision-tree"] {
        assert!(text.contains(m), "{m}: {text}");
    }
}

#[test]
fn train_beats_the_majority_baseline() {
    let logs = tempfile::tempdir().unwrap();
    let (code, _) = navxai(&["simulate", "--n", "30", "--compare", "random", "--seed", "2", "--out", path(logs.path())]);
    assert_eq!(code, 0);
    let models = tempfile::tempdir().unwrap();
    let m1 = models.path().join("a/model.json");
    let m2 = models.path().join("b/model.json");
    let (code, text) = navxai(&["train", "--data-dir", path(logs.path()), "--out", path(&m1), "--seed", "5"]);
    assert_eq!(code, 0, "{text}");
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["heldout_sessions"], 6);
    assert!(report["heldout_accuracy"].as_f64().unwrap() >= report["majority_baseline"].as_f64().unwrap(), "{text}");

    // Independent baseline from the same held-out logs.
    let mut files: Vec<_> = std::fs::read_dir(logs.path().join("sessions")).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for f in files.iter().skip(4).step_by(5) {
        for line in std::fs::read_to_string(f).unwrap().lines() {
            let e: Value = serde_json::from_str(line).unwrap();
            if let (Some("DecisionMade"), Some(d)) = (e["type"].as_str(), e["data"]["chosen"].as_str()) {
                *counts.entry(d.to_string()).or_default() += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    assert_eq!(report["heldout_examples"], total);
    let baseline = *counts.values().max().unwrap() as f64 / total as f64;
    assert!((report["majority_baseline"].as_f64().unwrap() - baseline).abs() < 1e-12);

    navxai(&["train", "--data-dir", path(logs.path()), "--out", path(&m2), "--seed", "5"]);
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    // The trained model drives a balanced simulation.
    let (code, _) = navxai(&["simulate", "--n", "2", "--compare", "balanced", "--model", path(&m1)]);
    assert_eq!(code, 0);

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(navxai(&["train", "--data-dir", path(empty.path())]).0, 2);
}

#[test]
fn gen_tasks_makes_unique_valid_banks() {
    let dir = tempfile::tempdir().unwrap();
    let f1 = dir.path().join("a.json");
    let f2 = dir.path().join("b.json");
    assert_eq!(navxai(&["gen-tasks", "--n", "11", "--seed", "4", "--out", path(&f1)]).0, 0);
    assert_eq!(navxai(&["gen-tasks", "--n", "11", "--seed", "4", "--out", path(&f2)]).0, 0);
    assert_eq!(std::fs::read(&f1).unwrap(), std::fs::read(&f2).unwrap());
    let bank = TaskBank::from_json(&std::fs::read_to_string(&f1).unwrap()).unwrap();
    bank.validate().unwrap();
    assert_eq!(bank.tasks.len(), 11);
    let ids: HashSet<_> = bank.tasks.iter().map(|t| t.task_id.clone()).collect();
    let layouts: HashSet<_> =
        bank.tasks.iter().map(|t| serde_json::to_string(&(&t.roadblocks, t.start, t.start_heading, t.goal)).unwrap()).collect();
    assert_eq!((ids.len(), layouts.len()), (11, 11));

    let (code, stdout) = navxai(&["gen-tasks", "--n", "2", "--seed", "4"]);
    assert_eq!(code, 0);
    assert_eq!(TaskBank::from_json(&stdout).unwrap().tasks.len(), 2);

    // The bank feeds simulate.
    assert_eq!(navxai(&["simulate", "--n", "1", "--compare", "random", "--tasks", path(&f1)]).0, 0);

    let cfg = dir.path().join("crowded.toml");
    std::fs::write(&cfg, "[world]\nroadblocks_min = 70\nroadblocks_max = 80\nmax_attempts = 50\n").unwrap();
    assert_eq!(navxai(&["gen-tasks", "--n", "2", "--config", path(&cfg)]).0, 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 9\nn = 2\ncompare = \"random,fixed-tree\"\n[hyperparams]\nepochs = 3\n").unwrap();
    let (code, text) = navxai(&["simulate", "--config", path(&cfg)]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("n 2 per condition | seed 9"));
    assert!(text.contains("fixed-decision-tree"));
    let (_, text) = navxai(&["simulate", "--config", path(&cfg), "--n", "1", "--compare", "random"]);
    assert!(text.contains("n 1 per condition") && !text.contains("fixed-decision-tree"));

    std::fs::write(&cfg, "sede = 9\n").unwrap();
    assert_eq!(navxai(&["simulate", "--config", path(&cfg)]).0, 1);
}

#[test]
fn serve_binary_answers_and_shuts_down() {
    let data = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_navxai"))
        .args(["serve", "--bind", "127.0.0.1:0", "--data-dir", path(data.path())])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_string();

    let request = |method: &str, uri: &str, body: &str| {
        use std::io::{Read, Write};
        let mut s = std::net::TcpStream::connect(&addr).unwrap();
        write!(
            s,
            "{method} {uri} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        let mut out = String::new();
        s.read_to_string(&mut out).unwrap();
        out
    };
    let health = request("GET", "/health", "");
    assert!(health.starts_with("HTTP/1.1 200") && health.contains(env!("CARGO_PKG_VERSION")), "{health}");
    let created = request("POST", "/sessions", r#"{"flow":"headless-custom","user_id":"u","strategy":"random"}"#);
    assert!(created.starts_with("HTTP/1.1 201"), "{created}");
    assert!(request("GET", "/sessions/s00000/interaction", "").starts_with("HTTP/1.1 200"));

    let status = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(status.success());
    let exit = child.wait().unwrap();
    assert!(exit.success(), "{exit:?}");
    let mut rest = String::new();
    std::io::Read::read_to_string(&mut stdout, &mut rest).unwrap();
    assert!(rest.contains("shut down"));
    // Logs were flushed before each response.
    let log = std::fs::read_to_string(data.path().join("sessions/s00000.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
}
