use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

use crowdrule_core::builder::{apply, new_builder, options, render_tokens, BuilderAction, Phase};
use crowdrule_core::demo;
use crowdrule_core::model::PredicateRegistry;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn crowdrule(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdrule"))
        .args(args)
        .current_dir(root())
        .env("CROWDRULE_LOG", "error")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = crowdrule(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TIRES: &str = r#"( ( lit:road_is[condition="wet"] AND lit:car_has[tires="hydroplaning-resistant"] ) OR ( lit:road_is[condition="snowy"] AND lit:car_has[tires="studded"] ) )"#;

#[test]
fn compile_dnf_on_the_road_rule() {
    let out: Value = serde_json::from_str(&ok(&["compile-dnf", "--expr", TIRES])).unwrap();
    assert_eq!(
        out["tokens"],
        "( ( the road is wet AND the car has hydroplaning-resistant tires ) OR ( the road is snowy AND the car has studded tires ) )"
    );
    let actions: Vec<BuilderAction> = serde_json::from_value(out["actions"].clone()).unwrap();
    let reg = PredicateRegistry::new(demo::tires_predicates()).unwrap();
    let mut b = new_builder();
    for a in &actions {
        assert!(options(&b, &reg).unwrap().contains(a), "{a:?} not offered");
        b = apply(&b, a, &reg).unwrap();
    }
    assert_eq!(b.phase(), Phase::Terminal);
    assert_eq!(render_tokens(&b), out["tokens"]);

    let with_file = ok(&[
        "compile-dnf",
        "--expr",
        TIRES,
        "--predicates",
        "data/tires/predicates.jsonl",
    ]);
    assert_eq!(serde_json::from_str::<Value>(&with_file).unwrap(), out);
}

#[test]
fn compile_dnf_rejects_bad_input() {
    for expr in [
        "( lit:road_is[condition=\"wet\"]",
        "lit:no_such[]",
        "lit:road_is[condition=\"icy\"]",
    ] {
        let out = crowdrule(&["compile-dnf", "--expr", expr]);
        assert!(!out.status.success(), "{expr}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn serve_with_bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("missing.toml", None),
        ("syntax.toml", Some("bind = \n")),
        ("unknown.toml", Some("data_dir = \"x\"\nevent_log = \"e\"\nport = 3\n")),
        ("nodata.toml", Some("data_dir = \"nowhere\"\nevent_log = \"e.jsonl\"\n")),
        (
            "badcond.toml",
            Some(&*format!(
                "data_dir = \"{}\"\nevent_log = \"e.jsonl\"\nactive_conditions = [\"nonsense\"]\n",
                s(&root().join("data/demo"))
            )),
        ),
        (
            "badbind.toml",
            Some(&*format!(
                "bind = \"not-an-address\"\ndata_dir = \"{}\"\nevent_log = \"e.jsonl\"\n",
                s(&root().join("data/demo"))
            )),
        ),
    ];
    for (name, content) in cases {
        let p = dir.path().join(name);
        if let Some(c) = content {
            std::fs::write(&p, c).unwrap();
        }
        let out = crowdrule(&["serve", "--config", s(&p)]);
        assert!(!out.status.success(), "{name} was accepted");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("error:"), "{name}: {err}");
    }
}

#[test]
fn simulate_judge_and_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let judging = dir.path().join("judging");
    let report = dir.path().join("report");
    ok(&[
        "simulate",
        "--population",
        "config/population.toml",
        "--seed",
        "7",
        "--out",
        s(&run),
    ]);
    for f in ["events.jsonl", "responses.jsonl", "rules.jsonl", "summary.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["workers"].as_array().unwrap().len(), 40);

    // a second run refuses to overwrite the log
    assert!(
        !crowdrule(&["simulate", "--population", "config/population.toml", "--out", s(&run)])
            .status
            .success()
    );

    ok(&[
        "judge-export",
        "--events",
        s(&run.join("events.jsonl")),
        "--sample",
        "20",
        "--seed",
        "1",
        "--out",
        s(&judging),
    ]);
    let items = std::fs::read_to_string(judging.join("items.jsonl")).unwrap();
    assert_eq!(items.lines().count(), 20);
    assert!(!items.contains("fake_gold"));
    ok(&[
        "judge-oracle",
        "--map",
        s(&judging.join("map.json")),
        "--out",
        s(&judging.join("judgments.jsonl")),
    ]);

    let text = ok(&[
        "analyze",
        "--responses",
        s(&run.join("responses.jsonl")),
        "--rules",
        s(&run.join("rules.jsonl")),
        "--map",
        s(&judging.join("map.json")),
        "--judgments",
        s(&judging.join("judgments.jsonl")),
        "--out",
        s(&report),
    ]);
    assert!(text.contains("fake_gold"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["rows"][0]["judged"], 20);
    assert!(std::fs::read_to_string(report.join("precision.svg"))
        .unwrap()
        .starts_with("<svg"));

    // the event log gives the same report as the record files
    let again = dir.path().join("again");
    ok(&[
        "analyze",
        "--events",
        s(&run.join("events.jsonl")),
        "--map",
        s(&judging.join("map.json")),
        "--judgments",
        s(&judging.join("judgments.jsonl")),
        "--out",
        s(&again),
    ]);
    assert_eq!(
        std::fs::read_to_string(report.join("report.json")).unwrap(),
        std::fs::read_to_string(again.join("report.json")).unwrap()
    );
}

#[test]
fn demo_data_matches_checked_in_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["demo-data", "--out", s(dir.path())]);
    for sub in ["demo", "tires"] {
        for entry in std::fs::read_dir(root().join("data").join(sub)).unwrap() {
            let p = entry.unwrap().path();
            let name = p.file_name().unwrap();
            assert_eq!(
                std::fs::read(&p).unwrap(),
                std::fs::read(dir.path().join(sub).join(name)).unwrap(),
                "{}",
                p.display()
            );
        }
    }
}

#[test]
fn serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("serve.toml");
    std::fs::write(
        &cfg,
        format!(
            "bind = \"127.0.0.1:0\"\ndata_dir = \"{}\"\nevent_log = \"events.jsonl\"\n",
            s(&root().join("data/demo"))
        ),
    )
    .unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_crowdrule"))
        .args(["serve", "--config", s(&cfg)])
        .env("CROWDRULE_LOG", "info")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some(rest) = line.split("addr=").nth(1) {
            break rest.trim().to_string();
        }
    };
    let body = r#"{"worker_id":"tcp-worker"}"#;
    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "POST /v1/session HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"worker_id\":\"tcp-worker\""));
    let log = std::fs::read_to_string(dir.path().join("events.jsonl")).unwrap();
    assert!(log.contains("worker_assigned"));
}
