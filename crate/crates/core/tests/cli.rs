use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tokenprune::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use tokenprune::harness::{generate_scenario, ScenarioParams};
use tokenprune::io::write_emb;

fn exe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tokenprune"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    exe().args(args).current_dir(dir).output().unwrap()
}

fn run_lib(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tokenprune").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// Writes the fixed golden inputs: 40 visual tokens, 8 dims.
fn golden_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let params = ScenarioParams { n: 40, d: 8, ..ScenarioParams::default() };
    let s = generate_scenario(&params, 2024).unwrap();
    let (v, p) = (dir.join("v.emb"), dir.join("p.emb"));
    write_emb(&s.visual, &v).unwrap();
    write_emb(&s.prompt, &p).unwrap();
    (v, p)
}

#[test]
fn prune_outputs_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    golden_inputs(dir.path());
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases: [(&str, &[&str]); 5] = [
        ("zspa_mean.json", &["--strategy", "zspa", "--ratio", "0.4", "--pooling", "mean"]),
        ("zspa_none.json", &["--strategy", "zspa", "--ratio", "0.6", "--pooling", "none"]),
        ("divprune.json", &["--strategy", "divprune"]),
        ("relevance_max.json", &["--strategy", "relevance", "--pooling", "max"]),
        ("random.csv", &["--strategy", "random", "--seed", "7", "--format", "csv"]),
    ];
    for (name, extra) in cases {
        let mut args = vec!["prune", "--visual", "v.emb", "--prompt", "p.emb", "--budget", "6", "--out", "out"];
        args.extend_from_slice(extra);
        let out = run_in(dir.path(), &args);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let got = std::fs::read_to_string(dir.path().join("out")).unwrap();
        let golden = golden_dir.join(name);
        if std::env::var_os("BLESS").is_some() {
            std::fs::write(&golden, &got).unwrap();
        }
        assert_eq!(got, std::fs::read_to_string(&golden).unwrap(), "{name} drifted from golden file");
    }
}

#[test]
fn prune_576_tokens_keeps_58() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen", "--n", "576", "--d", "32", "--seed", "1", "--out-dir", "."]);
    assert!(out.status.success());
    let out = run_in(
        dir.path(),
        &["prune", "--visual", "visual.emb", "--prompt", "prompt.emb", "--prune-rate", "0.9", "--ratio", "0.4", "--pooling", "mean"],
    );
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["kept_indices"].as_array().unwrap().len(), 58);
    assert_eq!(json["core_count"], 23);
    assert_eq!(json["diversity_count"], 35);
    assert_eq!(json["budget"], 58);
    assert_eq!(json["token_count"], 576);
    assert_eq!(json["scores"].as_array().unwrap().len(), 576);
    assert_eq!(json["config"]["budget"]["prune_rate"], 0.9);
    assert_eq!(json["config"]["strategy"], "zspa");
    assert!(json.get("timings_ms").is_none());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("kept 58 of 576"));
}

#[test]
fn timings_flag_adds_timings() {
    let dir = tempfile::tempdir().unwrap();
    golden_inputs(dir.path());
    let out = run_in(dir.path(), &["prune", "--visual", "v.emb", "--prompt", "p.emb", "--budget", "4", "--timings"]);
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["pooling_ms", "scoring_ms", "core_ms", "diversity_ms", "total_ms"] {
        assert!(json["timings_ms"][key].is_number(), "{key}");
    }
}

#[test]
fn random_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    golden_inputs(dir.path());
    for out in ["a.json", "b.json"] {
        let o = run_in(
            dir.path(),
            &["prune", "--visual", "v.emb", "--strategy", "random", "--seed", "7", "--prune-rate", "0.5", "--out", out],
        );
        assert!(o.status.success());
    }
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.json")).unwrap());
    let json: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(json["generator"], "splitmix64-v1");
    assert!(json["scores"].is_null());
}

#[test]
fn usage_errors_exit_2() {
    let (code, _, err) = run_lib(&["prune", "--prune-rate", "0.9"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--visual"));
    let (code, _, _) = run_lib(&["prune", "--visual", "v.emb"]);
    assert_eq!(code, EXIT_USAGE, "neither --prune-rate nor --budget");
    let (code, _, _) = run_lib(&["prune", "--visual", "v.emb", "--budget", "3", "--prune-rate", "0.5"]);
    assert_eq!(code, EXIT_USAGE, "both size flags");
    let (code, _, err) = run_lib(&["prune", "--visual", "v.emb", "--budget", "3"]);
    assert_eq!(code, EXIT_USAGE, "zspa without --prompt");
    assert!(err.contains("Usage"));
    let (code, _, _) = run_lib(&["prune", "--visual", "v.emb", "--budget", "3", "--strategy", "bogus"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = run_lib(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, out, _) = run_lib(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("prune"));
    assert_eq!(exe().arg("prune").output().unwrap().status.code(), Some(2));
}

#[test]
fn data_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let (v, p) = golden_inputs(dir.path());
    let (v, p) = (v.to_str().unwrap(), p.to_str().unwrap());
    let missing = dir.path().join("missing.emb");
    let (code, _, _) = run_lib(&["prune", "--visual", missing.to_str().unwrap(), "--strategy", "divprune", "--budget", "2"]);
    assert_eq!(code, EXIT_DATA);

    let bad = dir.path().join("bad.emb");
    std::fs::write(&bad, b"EMB0\x01\x00\x01\x00").unwrap();
    let (code, _, err) = run_lib(&["prune", "--visual", bad.to_str().unwrap(), "--strategy", "divprune", "--budget", "2"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("error"));

    let (code, _, err) = run_lib(&["prune", "--visual", v, "--prompt", p, "--prune-rate", "1.0"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("prune rate"));

    let (code, _, _) = run_lib(&["prune", "--visual", v, "--prompt", p, "--budget", "0"]);
    assert_eq!(code, EXIT_DATA);

    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "1,2,3\n").unwrap();
    let (code, _, err) = run_lib(&["prune", "--visual", v, "--prompt", wide.to_str().unwrap(), "--budget", "3"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("dimension mismatch"));
}

#[test]
fn csv_inputs_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let p = dir.path().join("p.csv");
    std::fs::write(&v, "1,0\n0.9,0.1\n0,1\n-1,0\n").unwrap();
    std::fs::write(&p, "1,0\n").unwrap();
    let (code, out, _) = run_lib(&[
        "prune", "--visual", v.to_str().unwrap(), "--prompt", p.to_str().unwrap(), "--budget", "2", "--format", "csv",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "rank,index,provenance,score\n0,0,core,1\n1,3,diversity,-1\n");
}

#[test]
fn gen_writes_scenario_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["gen", "--n", "50", "--d", "6", "--relevant-fraction", "0.2", "--out-dir", "s", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = tokenprune::io::read_emb(dir.path().join("s/visual.csv")).unwrap();
    assert_eq!((v.rows(), v.cols()), (50, 6));
    let mask = std::fs::read_to_string(dir.path().join("s/relevant_mask.txt")).unwrap();
    assert_eq!(mask.lines().filter(|l| *l == "1").count(), 10);
    let out = run_in(dir.path(), &["gen", "--n", "1", "--out-dir", "t"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["sweep", "--seeds", "5", "--n", "60", "--strategies", "zspa,divprune", "--prune-rates", "0.8,0.9", "--out", "r.csv"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "strategy,rho,prune_rate,relevance_coverage,dispersion,oracle_recall,runtime_ms");
    assert_eq!(lines.count(), 9 * 2 + 2);
    assert!(String::from_utf8(out.stdout).unwrap().contains("dispersion"));
    let (code, _, _) = run_lib(&["sweep", "--seeds", "0"]);
    assert_eq!(code, EXIT_USAGE);
}
