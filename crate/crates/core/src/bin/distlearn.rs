use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use distlearn::consensus::build_mixing;
use distlearn::datagen::{self, Metadata, Table};
use distlearn::harness::{self, DatasetSpec, ExperimentConfig, TopologySpec};
use distlearn::netgraph::{is_connected, laplacian_eigenvalues};
use distlearn::{Error, Mat, Result};

#[derive(Parser)]
#[command(name = "distlearn", version, about = "Simulated decentralized learning experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// experiment TOML file
    #[arg(long)]
    config: Option<PathBuf>,
    /// overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the `[dataset]` of a config as CSV plus a metadata sidecar
    Gen(Common),
    /// Run an experiment
    Run(Common),
    /// Print mean ± std per metric from a results directory (or records file)
    Summarize {
        #[command(flatten)]
        common: Common,
        /// results directory or records.jsonl; defaults to --out
        path: Option<PathBuf>,
    },
    /// Build the `[topology]` of a config, print its statistics and write it out
    Topology(Common),
}

/// The parts of a config that `gen` and `topology` need; `algorithm` may be absent.
#[derive(Deserialize)]
struct Sections {
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    topology: TopologySpec,
    #[serde(default)]
    dataset: DatasetSpec,
}

fn read_sections(c: &Common) -> Result<Sections> {
    let mut s: Sections = match &c.config {
        Some(p) => toml::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::from_str("").map_err(|e| Error::Config(e.to_string()))?,
    };
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn out_dir(c: &Common, fallback: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn cmd_run(c: &Common) -> Result<()> {
    let path = c.config.as_ref().ok_or_else(|| Error::Config("run needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let out = c.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("results"));
    let res = harness::run_experiment(&cfg, &out, c.threads)?;
    print!("{}", res.summary.to_table());
    eprintln!("results written to {}", out.display());
    Ok(())
}

fn cmd_summarize(c: &Common, path: Option<&Path>) -> Result<()> {
    let p = path.map(Path::to_path_buf).unwrap_or_else(|| out_dir(c, "results"));
    let file = if p.is_dir() { p.join(harness::RECORDS_FILE) } else { p };
    let records = harness::read_records(&file)?;
    let summary = harness::summarize(&records)?;
    print!("{}", summary.to_table());
    let timings = file.with_file_name(harness::TIMINGS_FILE);
    if let Ok(t) = datagen::load_csv(&timings) {
        let col: Vec<f64> = t.data.column(2).iter().copied().collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let sd = if col.len() > 1 { (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
        println!("  {:<22} {:>12.6} ± {:<10.6} (n={})", "time_s", mean, sd, col.len());
    }
    Ok(())
}

fn cmd_topology(c: &Common) -> Result<()> {
    let s = read_sections(c)?;
    s.topology.validate()?;
    let net = s.topology.build(s.seed)?;
    let mix = build_mixing(&net, s.topology.mixing)?;
    let ev = laplacian_eigenvalues(&net);
    println!("agents            {}", net.n_agents());
    println!("edges             {}", net.n_edges());
    println!("density           {:.4}", net.density());
    println!("connected         {}", is_connected(&net));
    match net.diameter() {
        Some(d) => println!("diameter          {d}"),
        None => println!("diameter          inf"),
    }
    println!("algebraic conn.   {:.6}", ev.get(1).copied().unwrap_or(0.0));
    println!("mixing            {:?}", s.topology.mixing);
    println!("ess. spectral rad {:.6}", mix.essential_spectral_radius());
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir)?;
        net.save(&dir.join("edges.txt"))?;
        let l = net.n_agents();
        let header: Vec<String> = (0..l).map(|j| format!("c{j}")).collect();
        datagen::save_csv(&dir.join("mixing.csv"), &Table { header, data: mix.weights.clone() })?;
        let spec = Table { header: vec!["index".into(), "eigenvalue".into()], data: Mat::from_fn(l, 2, |i, j| if j == 0 { i as f64 } else { ev[i] }) };
        datagen::save_csv(&dir.join("laplacian_spectrum.csv"), &spec)?;
        eprintln!("topology written to {}", dir.display());
    }
    Ok(())
}

fn cmd_gen(c: &Common) -> Result<()> {
    let s = read_sections(c)?;
    let ds = &s.dataset;
    let dir = out_dir(c, "data");
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.csv", ds.kind));
    let seed = s.seed;
    let (table, meta) = match ds.kind.as_str() {
        "two_gaussian" | "two_gaussian_rotated" | "two_moons" => {
            let d = match ds.kind.as_str() {
                "two_gaussian" => datagen::gen_two_gaussian(ds.n, ds.d, ds.bayes_error, seed)?,
                "two_gaussian_rotated" => datagen::gen_two_gaussian_rotated(ds.n, ds.d, ds.bayes_error, seed)?,
                _ => datagen::gen_two_moons(ds.n, ds.noise, seed)?,
            };
            (datagen::tabular_to_table(&d), d.meta)
        }
        "narma10" | "extpoly" | "mackey_glass" | "lorenz" => {
            let seqs: Vec<datagen::Sequence> = match ds.kind.as_str() {
                "narma10" => (0..ds.sequences).map(|i| datagen::gen_narma10(ds.length, distlearn::sub_seed(seed, i as u64))).collect::<Result<_>>()?,
                "extpoly" => (0..ds.sequences)
                    .map(|i| datagen::gen_extpoly(ds.length, ds.degree, ds.lag, distlearn::sub_seed(seed, i as u64)))
                    .collect::<Result<_>>()?,
                "mackey_glass" => datagen::gen_mackey_glass(ds.sequences * ds.length, ds.tau, seed)?.chunks(ds.length),
                _ => datagen::gen_lorenz(ds.sequences * ds.length, seed)?.chunks(ds.length),
            };
            let meta = Metadata::new(&ds.kind, seed).with("sequences", ds.sequences).with("length", ds.length);
            (datagen::sequences_to_table(&seqs)?, meta)
        }
        "wiener" | "wiener_strong" => {
            let f0: &[f64] = if ds.kind == "wiener" { &distlearn::saf::F0_MILD } else { &distlearn::saf::F0_STRONG };
            let l = s.topology.agents;
            let taps = 4;
            let st = datagen::gen_saf_streams_with(l, ds.length, taps, f0, seed)?;
            let rows = l * ds.length;
            let data = Mat::from_fn(rows, 4, |r, j| {
                let (k, n) = (r / ds.length, r % ds.length);
                match j {
                    0 => k as f64,
                    1 => n as f64,
                    2 => st.inputs[k][n],
                    _ => st.desired[k][n],
                }
            });
            let meta = Metadata::new(&ds.kind, seed).with("agents", l).with("length", ds.length).with("taps", taps);
            (Table { header: vec!["agent".into(), "n".into(), "x".into(), "d".into()], data }, meta)
        }
        other => return Err(Error::Config(format!("gen cannot produce dataset '{other}'"))),
    };
    datagen::save_with_meta(&path, &table, &meta)?;
    eprintln!("wrote {} rows to {}", table.data.nrows(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.cmd {
        Cmd::Gen(c) | Cmd::Run(c) | Cmd::Topology(c) => c.clone(),
        Cmd::Summarize { common, .. } => common.clone(),
    };
    if let Some(n) = common.threads {
        // best effort; run_experiment builds its own pool as well
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let res = match &cli.cmd {
        Cmd::Gen(c) => cmd_gen(c),
        Cmd::Run(c) => cmd_run(c),
        Cmd::Summarize { common, path } => cmd_summarize(common, path.as_deref()),
        Cmd::Topology(c) => cmd_topology(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
