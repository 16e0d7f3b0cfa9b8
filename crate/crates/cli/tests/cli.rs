use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn sqlmig(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlmig"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn sqlmig")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

const ORACLE_A: &str = "CREATE TABLE emp (id NUMBER, name VARCHAR2(20));\n\
SELECT NVL(name, 'x') FROM emp WHERE ROWNUM < 5;\n\
CREATE OR REPLACE PROCEDURE p IS\nBEGIN\n  DBMS_OUTPUT.PUT_LINE('hi');\nEND;\n/\nSET SERVEROUTPUT ON\n";
const ORACLE_B: &str = "SELECT 1 FROM dual;\nUPDATE emp SET name = 'y' WHERE id = 1;\n";

fn corpus() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("src")).unwrap();
    fs::write(dir.path().join("src/a.sql"), ORACLE_A).unwrap();
    fs::write(dir.path().join("src/b.sql"), ORACLE_B).unwrap();
    dir
}

#[test]
fn profile_writes_one_row_per_class() {
    let dir = corpus();
    ok(&sqlmig(&["profile", "src/b.sql", "--out", "p"], dir.path()));
    let rows = csv_rows(&dir.path().join("p/distribution.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["CORE_SQL", "PL_SQL", "SQL_PLUS", "DATABASE_MANAGEMENT", "RMAN"]);
    let per_file = fs::read_to_string(dir.path().join("p/profiles.jsonl")).unwrap();
    assert_eq!(per_file.lines().count(), 1);
    assert!(dir.path().join("p/manifest.json").exists());
}

#[test]
fn paired_corpora_percentages_each_sum_to_100() {
    let dir = corpus();
    fs::create_dir(dir.path().join("pg")).unwrap();
    fs::write(
        dir.path().join("pg/a.sql"),
        "CREATE TABLE emp (id NUMERIC, name VARCHAR(20));\nSELECT COALESCE(name, 'x') FROM emp LIMIT 4;\n\\set ON_ERROR_STOP on\n",
    )
    .unwrap();
    ok(&sqlmig(&["profile", "src", "--out", "po"], dir.path()));
    ok(&sqlmig(&["profile", "pg", "--dialect", "postgresql", "--out", "pp"], dir.path()));
    for out in ["po", "pp"] {
        let total: f64 = csv_rows(&dir.path().join(out).join("distribution.csv"))
            .iter()
            .map(|r| r[2].parse::<f64>().unwrap())
            .sum();
        assert!((total - 100.0).abs() <= 0.01, "{out}: {total}");
    }
}

#[test]
fn taxonomy_dialect_mismatch_is_a_usage_error() {
    let dir = corpus();
    let pg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets/postgresql.taxonomy.toml");
    fs::copy(pg, dir.path().join("tax.toml")).unwrap();
    let out = sqlmig(&["profile", "src", "--taxonomy", "tax.toml", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dialect is oracle"));
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = corpus();
    let out = sqlmig(&["profile", "nope.sql", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = corpus();
    fs::write(dir.path().join("c.toml"), "[translation]\nkay = 3\n").unwrap();
    let out = sqlmig(&["--config", "c.toml", "profile", "src", "--out", "p"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn echo_conversion_reproduces_inputs() {
    let dir = corpus();
    ok(&sqlmig(&["migrate", "src", "--backend", "echo", "--pipeline", "conversion", "--out", "run"], dir.path()));
    assert_eq!(fs::read_to_string(dir.path().join("run/outputs/a.sql")).unwrap(), ORACLE_A);
    assert_eq!(fs::read_to_string(dir.path().join("run/outputs/b.sql")).unwrap(), ORACLE_B);
}

#[test]
fn rag_without_kb_names_missing_stores() {
    let dir = corpus();
    let out = sqlmig(&["migrate", "src", "--pipeline", "rag-a", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for store in ["oracle_context", "pg_docs", "sme_rules"] {
        assert!(err.contains(store), "{err}");
    }
}

#[test]
fn history_pipeline_logs_history_bindings() {
    let dir = corpus();
    let mut text = String::new();
    for i in 0..3 {
        text.push_str(&format!("INSERT INTO log_{i} (id, note) VALUES ({i}, '{}');\n", "x".repeat(200)));
    }
    fs::write(dir.path().join("three.sql"), &text).unwrap();
    ok(&sqlmig(
        &["migrate", "three.sql", "--pipeline", "history", "--max-bytes", "256", "--out", "run"],
        dir.path(),
    ));
    let log = fs::read_to_string(dir.path().join("run/provenance.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0]["bindings"]["HISTORY"], "(none)");
    for r in &records[1..] {
        assert!(r["bindings"]["HISTORY"].as_str().unwrap().contains("INSERT INTO log_0"));
    }
}

#[test]
fn evaluate_identity_run_scores_one() {
    let dir = corpus();
    ok(&sqlmig(&["migrate", "src", "--out", "run"], dir.path()));
    ok(&sqlmig(&["evaluate", "run", "--references", "src", "--out", "ev"], dir.path()));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/metrics.json")).unwrap()).unwrap();
    for f in report["per_file"].as_array().unwrap() {
        for m in ["recall", "bleu", "chrf"] {
            assert_eq!(f[m], 1.0, "{} {m}", f["file"]);
        }
    }
    let kv = fs::read_to_string(dir.path().join("ev/metrics.kv")).unwrap();
    assert!(kv.contains("unscored=0"));
}

#[test]
fn evaluate_missing_reference_warns_and_succeeds() {
    let dir = corpus();
    ok(&sqlmig(&["migrate", "src", "--out", "run"], dir.path()));
    fs::create_dir(dir.path().join("refs")).unwrap();
    fs::write(dir.path().join("refs/a.sql"), ORACLE_A).unwrap();
    let out = sqlmig(&["evaluate", "run", "--references", "refs", "--out", "ev"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 file(s) unscored"));
    let rows = csv_rows(&dir.path().join("ev/files.csv"));
    let b = rows.iter().find(|r| r[0] == "b.sql").unwrap();
    assert_eq!(b[3], "false");
}

#[test]
fn report_aggregates_recompute_from_per_file_rows() {
    let dir = corpus();
    ok(&sqlmig(&["migrate", "src", "--out", "run"], dir.path()));
    ok(&sqlmig(&["evaluate", "run", "--out", "ev"], dir.path()));
    ok(&sqlmig(&["report", "ev", "--out", "rep"], dir.path()));

    let files = csv_rows(&dir.path().join("ev/files.csv"));
    let header: Vec<String> = csv::Reader::from_path(dir.path().join("ev/files.csv"))
        .unwrap()
        .headers()
        .unwrap()
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let valid = files.iter().filter(|r| r[col("valid")] == "true").count() as f64;
    let stmts: f64 = files.iter().map(|r| r[col("statements")].parse::<f64>().unwrap()).sum();
    let err_stmts: f64 = files.iter().map(|r| r[col("error_statements")].parse::<f64>().unwrap()).sum();
    let errors: f64 = files.iter().map(|r| r[col("errors")].parse::<f64>().unwrap()).sum();
    let lines: f64 = files.iter().map(|r| r[col("lines")].parse::<f64>().unwrap()).sum();

    let eff = csv_rows(&dir.path().join("rep/efficiency.csv"));
    assert_eq!(eff.len(), 1);
    let row = &eff[0];
    assert_eq!(row[2], format!("{:.4}", 100.0 * valid / files.len() as f64));
    assert_eq!(row[5], format!("{:.4}", 100.0 * err_stmts / stmts));
    assert_eq!(row[6], format!("{:.6}", errors / lines));
    assert_eq!(row[8], format!("{}", errors as u64));
}

#[test]
fn gap_reproduces_reference_table() {
    let dir = TempDir::new().unwrap();
    let metrics = format!("conversion={}", fixture("conversion_scores.json"));
    ok(&sqlmig(
        &[
            "gap",
            "--dataset",
            &fixture("train_counts.csv"),
            "--metrics",
            &metrics,
            "--weights",
            &fixture("weights.toml"),
            "--out",
            "g",
        ],
        dir.path(),
    ));
    let expected = [
        ("CORE_SQL", 10.18),
        ("PL_SQL", 36.84),
        ("SQL_PLUS", 44.05),
        ("DATABASE_MANAGEMENT", 49.55),
        ("RMAN", 49.78),
    ];
    let rows = csv_rows(&dir.path().join("g/GAP.csv"));
    for (feature, pct) in expected {
        let r = rows.iter().find(|r| r[1] == feature).unwrap();
        let got: f64 = r[6].parse().unwrap();
        assert!((got - pct).abs() <= 0.01, "{feature}: {got}");
    }
}

#[test]
fn gap_with_empty_metrics_exits_2() {
    let dir = TempDir::new().unwrap();
    let metrics = format!("conversion={}", fixture("empty_scores.json"));
    let out = sqlmig(
        &["gap", "--dataset", &fixture("train_counts.csv"), "--metrics", &metrics, "--out", "g"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no per-feature scores"));
}

#[test]
fn yield_reproduces_reference_totals() {
    let dir = TempDir::new().unwrap();
    ok(&sqlmig(
        &["yield", "--inputs", &fixture("yield_inputs.csv"), "--overlaps", &fixture("overlaps.csv"), "--out", "y"],
        dir.path(),
    ));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("y/yield.json")).unwrap()).unwrap();
    let success = report["total_success"].as_f64().unwrap();
    let baseline = report["total_baseline"].as_f64().unwrap();
    assert!((success - 75_454.0).abs() / 75_454.0 <= 0.001, "{success}");
    assert!((baseline - 47_764.0).abs() / 47_764.0 <= 0.001, "{baseline}");
    assert_eq!(report["overlap_assumptions"].as_array().unwrap().len(), 5);
}

#[test]
fn kb_build_and_eval_round_trip() {
    let dir = corpus();
    fs::write(
        dir.path().join("pairs.jsonl"),
        concat!(
            "{\"text\":\"SELECT NVL(a, 0) FROM t\",\"pair_target\":\"SELECT COALESCE(a, 0) FROM t\",\"id\":\"p1\"}\n",
            "{\"text\":\"SELECT SYSDATE FROM dual\",\"pair_target\":\"SELECT now()\",\"id\":\"p2\"}\n",
        ),
    )
    .unwrap();
    fs::write(
        dir.path().join("gold.jsonl"),
        concat!(
            "{\"query_chunk\":\"SELECT NVL(a, 0) FROM t\",\"scenario\":\"ExactMatch\",\"expected_ids\":[\"p1\"],\"must_abstain\":false}\n",
            "{\"query_chunk\":\"zzzz qqqq wwww\",\"scenario\":\"NoMatch\",\"must_abstain\":true}\n",
        ),
    )
    .unwrap();
    ok(&sqlmig(&["kb-build", "--pairs", "pairs.jsonl", "--out", "kb"], dir.path()));
    ok(&sqlmig(&["kb-eval", "--kb", "kb", "--gold", "gold.jsonl", "--out", "ke"], dir.path()));
    let card: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ke/scorecard.json")).unwrap()).unwrap();
    assert_eq!(card["hit_at_1"], 1.0);
    assert_eq!(card["abstention_correctness"], 1.0);

    ok(&sqlmig(&["migrate", "src", "--pipeline", "rag-b", "--kb", "kb", "--out", "run"], dir.path()));
    let out = sqlmig(&["migrate", "src", "--pipeline", "rag-a", "--kb", "kb", "--out", "run2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kb_build_without_inputs_is_a_usage_error() {
    let dir = corpus();
    let out = sqlmig(&["kb-build", "--out", "kb"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dataset_command_reports_missing_counterparts() {
    let dir = corpus();
    fs::create_dir(dir.path().join("pg")).unwrap();
    fs::write(dir.path().join("pg/a.sql"), "SELECT COALESCE(a, 0) FROM t;\n").unwrap();
    fs::write(
        dir.path().join("manifest.csv"),
        "oracle,postgres,description,description_file\nsrc/a.sql,pg/a.sql,,\nsrc/b.sql,pg/gone.sql,,\n",
    )
    .unwrap();
    let out = sqlmig(&["dataset", "--manifest", "manifest.csv", "--out", "ds"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing counterpart"));
    assert_eq!(csv_rows(&dir.path().join("ds/missing.csv")).len(), 1);
    assert!(dir.path().join("ds/train_counts.csv").exists());
}

#[test]
fn reruns_produce_identical_artifacts() {
    let dir = corpus();
    for out in ["r1", "r2"] {
        ok(&sqlmig(&["migrate", "src", "--pipeline", "history", "--backend", "rule-baseline", "--out", out], dir.path()));
        ok(&sqlmig(&["evaluate", out, "--references", "src", "--out", &format!("{out}-ev")], dir.path()));
    }
    for rel in ["run.json", "provenance.jsonl", "outputs/a.sql", "outputs/b.sql"] {
        assert_eq!(
            fs::read(dir.path().join("r1").join(rel)).unwrap(),
            fs::read(dir.path().join("r2").join(rel)).unwrap(),
            "{rel}"
        );
    }
    for rel in ["metrics.json", "files.csv", "summary.csv", "features.csv", "error_groups.csv"] {
        assert_eq!(
            fs::read(dir.path().join("r1-ev").join(rel)).unwrap(),
            fs::read(dir.path().join("r2-ev").join(rel)).unwrap(),
            "{rel}"
        );
    }
    let fp = |p: &str| -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(&fs::read_to_string(dir.path().join(p)).unwrap()).unwrap()
            ["corpus_fingerprint"]
            .clone()
    };
    assert_eq!(fp("r1/manifest.json"), fp("r2/manifest.json"));
}

#[test]
fn manifest_artifacts_exist() {
    let dir = corpus();
    ok(&sqlmig(&["chunk", "src", "--out", "ch"], dir.path()));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ch/manifest.json")).unwrap()).unwrap();
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for a in artifacts {
        assert!(dir.path().join(a["path"].as_str().unwrap()).exists());
    }
    assert_eq!(m["command"], "chunk");
}
