use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use distlearn::harness::{read_records, RunStatus, CONFIG_ECHO, RECORDS_FILE, SUMMARY_FILE, TIMINGS_FILE, TRACE_DIR};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_distlearn"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("distlearn-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

const CONS: &str = r#"
name = "cli-cons"
algorithm = "cons_rvfl"
seed = 11
repetitions = 2
folds = 3

[topology]
kind = "erdos_renyi"
agents = 4
p = 0.6

[dataset]
kind = "two_gaussian"
n = 120
d = 6

[params]
hidden = 40
lambda = 1.0
"#;

#[test]
fn run_writes_all_outputs() {
    let dir = scratch("run");
    let cfg = write_config(&dir, CONS);
    let out = dir.join("res");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let stdout = String::from_utf8_lossy(&st.stdout);
    assert!(stdout.contains("error"), "{stdout}");
    for f in [RECORDS_FILE, SUMMARY_FILE, CONFIG_ECHO, TIMINGS_FILE] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let recs = read_records(&out.join(RECORDS_FILE)).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.status == RunStatus::Ok));
    // config echo parses back to the same experiment
    let echo = distlearn::harness::ExperimentConfig::load(&out.join(CONFIG_ECHO)).unwrap();
    assert_eq!(echo.algorithm, "cons_rvfl");
    assert_eq!(echo.seed, 11);

    let s = bin().arg("summarize").arg(&out).output().unwrap();
    assert!(s.status.success());
    let text = String::from_utf8_lossy(&s.stdout);
    assert!(text.contains("dac_iterations") && text.contains("time_s"), "{text}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = scratch("seed");
    let cfg = write_config(&dir, CONS);
    let run = |seed: &str, sub: &str| {
        let out = dir.join(sub);
        let st = bin().args(["run", "--seed", seed, "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert!(st.status.success());
        fs::read_to_string(out.join(RECORDS_FILE)).unwrap()
    };
    let a = run("5", "a");
    let b = run("5", "b");
    let c = run("6", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn threads_do_not_change_records() {
    let dir = scratch("threads");
    let cfg = write_config(&dir, CONS);
    let mut outs = Vec::new();
    for t in ["1", "3"] {
        let out = dir.join(format!("t{t}"));
        let st = bin().args(["run", "--threads", t, "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert!(st.status.success());
        outs.push(fs::read(out.join(RECORDS_FILE)).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn traces_written_per_run() {
    let dir = scratch("trace");
    let cfg = write_config(&dir, &CONS.replace("cons_rvfl", "admm_rvfl"));
    let out = dir.join("res");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for rep in 0..2 {
        for fold in 0..3 {
            let t = distlearn::datagen::load_csv(&out.join(TRACE_DIR).join(format!("rep{rep}_fold{fold}.csv"))).unwrap();
            assert!(t.data.nrows() > 0);
            assert_eq!(t.header[0], "iteration");
        }
    }
}

#[test]
fn gen_writes_csv_and_sidecar() {
    let dir = scratch("gen");
    let cfg = write_config(&dir, "seed = 3\n[dataset]\nkind = \"two_moons\"\nn = 50\n");
    let out = dir.join("data");
    let st = bin().args(["gen", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let t = distlearn::datagen::load_csv(&out.join("two_moons.csv")).unwrap();
    assert_eq!(t.data.nrows(), 50);
    assert!(distlearn::datagen::meta_path(&out.join("two_moons.csv")).exists());
}

#[test]
fn topology_reports_and_saves() {
    let dir = scratch("topo");
    let cfg = write_config(&dir, "[topology]\nkind = \"linear\"\nagents = 5\nk = 1\nmixing = \"max_degree\"\n");
    let out = dir.join("net");
    let st = bin().args(["topology", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let text = String::from_utf8_lossy(&st.stdout);
    assert!(text.contains("edges             4"), "{text}");
    assert!(text.contains("diameter          4"), "{text}");
    let net = distlearn::netgraph::AgentNetwork::load(&out.join("edges.txt")).unwrap();
    assert_eq!(net.n_edges(), 4);
    assert!(out.join("mixing.csv").exists() && out.join("laplacian_spectrum.csv").exists());
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = scratch("bad");
    let cfg = write_config(&dir, "name = \"x\"\nalgorithm = \"no_such_algo\"\n");
    let st = bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(dir.join("o")).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("error"));
    let st = bin().args(["run", "--config"]).arg(dir.join("missing.toml")).output().unwrap();
    assert!(!st.status.success());
}
