use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use slicesim::e2;
use slicesim::report::{evaluate_all, Artifacts};
use slicesim::scenario::{Scenario, ScenarioError};
use slicesim::world::{run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "slicesim", version, about = "Sliced Open RAN discrete-event simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a scenario file and list every problem found.
    Validate { file: PathBuf },
    /// Run a scenario and write its artifacts.
    Run {
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to $SLICESIM_OUT/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SLICESIM_OUT", default_value = "out", hide_env_values = true)]
        out_root: PathBuf,
        /// Also write trace.log and e2_trace.log.
        #[arg(long)]
        trace: bool,
    },
    /// Check a run directory against its scenario's criteria.
    Report { dir: PathBuf },
    /// Decode a hex trace of E2 messages.
    E2dump { file: PathBuf },
}

fn load(file: &Path) -> Result<Scenario> {
    let sc = Scenario::load(file).map_err(|e| match e {
        ScenarioError::Parse(p) => anyhow::anyhow!(
            "{}: parse error at line {} column {}: {p}",
            file.display(),
            p.line(),
            p.column()
        ),
        other => anyhow::Error::new(other),
    })?;
    Ok(sc)
}

fn validate(file: &Path) -> Result<bool> {
    let sc = load(file)?;
    match sc.validate() {
        Ok(()) => {
            println!("{}: valid", file.display());
            Ok(true)
        }
        Err(ScenarioError::Invalid(msg)) => {
            println!("{}: invalid", file.display());
            for m in msg.split("; ") {
                println!("  - {m}");
            }
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn run(file: &Path, seed: Option<u64>, out: Option<PathBuf>, root: PathBuf, trace: bool) -> Result<()> {
    let sc = load(file)?;
    let dir = out.unwrap_or_else(|| root.join(&sc.meta.name));
    let output = run_scenario(&sc, &RunOptions { seed, trace })?;
    output
        .write_to(&dir)
        .with_context(|| format!("writing {}", dir.display()))?;
    let s = &output.summary;
    println!("{} seed={} -> {}", sc.meta.name, s.seed, dir.display());
    for f in &s.flows {
        match &f.rtt_ms {
            Some(r) => println!(
                "  flow {} ({} {}): rtt mean {:.2} ms p95 {:.2} ms over {} pings",
                f.id, f.kind, f.direction, r.mean, r.p95, r.count
            ),
            None => println!(
                "  flow {} ({} {}): mean {:.2} Mbps p95 {:.2} Mbps",
                f.id, f.kind, f.direction, f.throughput_mbps.mean, f.throughput_mbps.p95
            ),
        }
    }
    for sl in &s.slices {
        println!("  slice {} {}: dl {:.1} Mbit ul {:.1} Mbit", sl.snssai, sl.status, sl.dl_mbit, sl.ul_mbit);
    }
    if !s.anomalies.is_empty() {
        println!("  anomalies: {:?}", s.anomalies);
    }
    for f in &s.failures {
        println!("  failure at {} us ({}): {}", f.at_us, f.subject, f.error);
    }
    Ok(())
}

fn report(dir: &Path) -> Result<bool> {
    let a = Artifacts::load(dir)?;
    println!("{} (seed {})", a.summary.scenario.meta.name, a.summary.seed);
    let results = evaluate_all(&a);
    if results.is_empty() {
        println!("  no criteria declared");
    }
    for r in &results {
        println!("  {r}");
    }
    Ok(results.iter().all(|r| r.pass))
}

fn e2dump(file: &Path) -> Result<()> {
    let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Trace lines carry a prefix; the hex payload is the last field.
        let (prefix, hex_part) = match line.rsplit_once(' ') {
            Some((p, h)) => (p, h),
            None => ("", line),
        };
        let bytes = match hex::decode(hex_part) {
            Ok(b) => b,
            Err(e) => bail!("line {}: bad hex: {e}", i + 1),
        };
        if !prefix.is_empty() {
            println!("{prefix}");
        }
        match e2::decode(&bytes) {
            Ok(msg) => println!("{msg:#?}"),
            Err(e) => println!("  decode error: {e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Validate { file } => validate(&file),
        Cmd::Run {
            file,
            seed,
            out,
            out_root,
            trace,
        } => run(&file, seed, out, out_root, trace).map(|()| true),
        Cmd::Report { dir } => report(&dir),
        Cmd::E2dump { file } => e2dump(&file).map(|()| true),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
