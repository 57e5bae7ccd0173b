//! `paloma`: run, check, batch and replay population protocols.
//!
//! Exit codes: 0 success, 2 protocol or usage error, 3 no convergence (or
//! a negative verdict), 4 oracle budget exceeded.

mod settings;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use paloma_core::oracle::OracleOptions;
use paloma_core::{
    check_stable_computation, id_increments, replay, run, run_batch, ExecutionTrace, OracleError,
    RunOptions, StopReason, Verdict,
};

use settings::Settings;

#[derive(Parser)]
#[command(
    name = "paloma",
    version,
    about = "Population protocols on small Turing-machine agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one seeded execution.
    Run(Invocation),
    /// Decide stable computation by exhaustive search.
    Check(Invocation),
    /// Simulate a range of seeds in parallel.
    Batch(Invocation),
    /// Re-execute a trace file.
    Replay(Invocation),
}

#[derive(clap::Args)]
struct Invocation {
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

/// A finished command: its exit code and what to print.
struct Outcome {
    code: u8,
    text: String,
}

const NOT_CONVERGED: u8 = 3;
const BUDGET: u8 = 4;
const PROTOCOL_ERROR: u8 = 2;

fn write(path: Option<&Path>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run_options(s: &Settings, seed: u64, layout: paloma_core::TapeLayout) -> Result<RunOptions> {
    let mut o = RunOptions::new(seed, layout);
    o.mode = s.mode()?;
    if let Some(k) = s.max_interactions {
        o.stop.max_interactions = k;
    }
    o.stop.quiescence_window = s.window;
    if let Some(k) = s.snapshot_interval {
        o.snapshot_interval = k;
    }
    Ok(o)
}

fn cmd_run(s: &Settings) -> Result<Outcome> {
    let p = s.protocol()?;
    let seed = s.seed();
    let a = s.assignment(seed)?;
    let mut opts = run_options(s, seed, s.layout(&p))?;
    opts.stop.target_outputs = s.expected(a.len())?;
    let trace = run(&p, &a, &opts)?;
    let outputs = trace.final_outputs().unwrap_or_default().to_vec();
    let mut text = String::new();
    let _ = writeln!(text, "protocol {}", p.name);
    let _ = writeln!(text, "n {}", a.len());
    let _ = writeln!(text, "seed {seed}");
    let _ = writeln!(text, "mode {}", opts.mode);
    let reason = trace.stop_reason.expect("finished runs have a stop reason");
    let _ = writeln!(text, "stop {reason}");
    let _ = writeln!(
        text,
        "effective_encounters {}",
        trace.effective_encounters()
    );
    let _ = writeln!(text, "outputs {}", outputs.join("|"));
    if let Some(k) = id_increments(&p, &a, &trace)? {
        let _ = writeln!(text, "increments {k}");
    }
    write(s.trace.as_deref(), &trace.to_text())?;
    write(s.summary.as_deref(), &text)?;
    let code = if reason == StopReason::StopWithoutConvergence {
        NOT_CONVERGED
    } else {
        0
    };
    Ok(Outcome { code, text })
}

fn cmd_check(s: &Settings) -> Result<Outcome> {
    let p = s.protocol()?;
    let a = s.assignment(s.seed())?;
    let expected = s.expected(a.len())?.context("--expect is required")?;
    let mut opts = OracleOptions::new(s.layout(&p));
    opts.mode = s.mode()?;
    if let Some(b) = s.budget {
        opts.budget = b;
    }
    match check_stable_computation(&p, &a, &expected, &opts) {
        Ok(report) => {
            let text = report.to_text();
            write(s.report.as_deref(), &text)?;
            let code = if report.verdict == Verdict::StablyComputes {
                0
            } else {
                NOT_CONVERGED
            };
            Ok(Outcome { code, text })
        }
        Err(e @ OracleError::BudgetExceeded { .. }) => {
            let text = format!("protocol: {}\nverdict: BudgetExceeded\n{e}\n", p.name);
            write(s.report.as_deref(), &text)?;
            Ok(Outcome { code: BUDGET, text })
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_batch(s: &Settings) -> Result<Outcome> {
    let p = s.protocol()?;
    let seeds = s.seed_range()?;
    let n = s.base_inputs()?.len();
    let expected = s.expected(n)?;
    let opts = run_options(s, 0, s.layout(&p))?;
    s.assignment(0)?;
    let report = run_batch(
        &p,
        seeds,
        |seed| s.assignment(seed).expect("inputs checked above"),
        &opts,
        expected.as_deref(),
    );
    let mut text = format!("protocol {}\n", p.name);
    text.push_str(&report.to_text());
    for seed in &report.disagreements {
        let _ = writeln!(text, "disagreement {seed}");
    }
    write(s.report.as_deref(), &text)?;
    let ok = report.disagreements.is_empty() && report.convergence_fraction() == 1.0;
    Ok(Outcome {
        code: if ok { 0 } else { NOT_CONVERGED },
        text,
    })
}

fn cmd_replay(s: &Settings) -> Result<Outcome> {
    let p = s.protocol()?;
    let path = s.trace.as_deref().context("--trace is required")?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = ExecutionTrace::from_text(&text)?;
    let a = s.assignment(trace.header.seed)?;
    let c = replay(&p, &a, &trace)?;
    let outputs = c.outputs();
    if let Some(recorded) = trace.final_outputs() {
        anyhow::ensure!(
            recorded == outputs.as_slice(),
            "replayed outputs differ from the trace's final snapshot"
        );
    }
    let out = format!(
        "protocol {}\nevents {}\noutputs {}\n",
        p.name,
        trace.events.len(),
        outputs.join("|")
    );
    write(s.summary.as_deref(), &out)?;
    Ok(Outcome { code: 0, text: out })
}

/// The error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (inv, f): (Invocation, fn(&Settings) -> Result<Outcome>) = match cli.command {
        Command::Run(i) => (i, cmd_run),
        Command::Check(i) => (i, cmd_check),
        Command::Batch(i) => (i, cmd_batch),
        Command::Replay(i) => (i, cmd_replay),
    };
    let result = inv
        .settings
        .merged(inv.config.as_deref())
        .and_then(|s| f(&s));
    match result {
        Ok(o) => {
            print!("{}", o.text);
            ExitCode::from(o.code)
        }
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(PROTOCOL_ERROR)
        }
    }
}
