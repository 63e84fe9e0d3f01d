//! Command line experiment runner.
//!
//! Exit status: 0 when every audited property holds, 2 on any violation,
//! 1 on usage or I/O errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sitan::adversary::{AdversarySpec, Behavior};
use sitan::audit::audit;
use sitan::harness::emit::{emit, write_file};
use sitan::harness::sweep::{row, SweepReport};
use sitan::harness::{context_from_header, run_trial, Proposals, Protocol, ScenarioConfig, SinkMode};

#[derive(Parser)]
#[command(name = "sitan", about = "Byzantine consensus experiments on a simulated ad hoc network")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the trials of one scenario.
    Run(Overrides),
    /// Run one scenario per network size and report scaling.
    Sweep {
        #[command(flatten)]
        over: Overrides,
        /// Network sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Re-check the properties of a saved trace.
    Audit {
        trace: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, env = "SITAN_OUT_DIR", default_value = "sitan-out")]
    out_dir: PathBuf,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<Protocol>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    f: Option<usize>,
    #[arg(long, value_parser = parse_proposals)]
    proposals: Option<Proposals>,
    /// Byzantine behaviour of f nodes, or "none".
    #[arg(long)]
    adversary: Option<String>,
    #[arg(long, value_parser = parse_sink_mode)]
    sink_mode: Option<SinkMode>,
    /// Simulated milliseconds allowed from proposal to decision.
    #[arg(long)]
    time_budget: Option<u64>,
    /// Do not write per-trial trace files.
    #[arg(long)]
    no_traces: bool,
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "binary" => Ok(Protocol::Binary),
        "multivalued" | "mv" => Ok(Protocol::Multivalued),
        "vector" => Ok(Protocol::Vector),
        "full_stack_bootstrap" | "full" => Ok(Protocol::FullStackBootstrap),
        _ => Err(format!("unknown protocol {s}")),
    }
}

fn parse_proposals(s: &str) -> Result<Proposals, String> {
    match s.to_ascii_lowercase().as_str() {
        "unanimous" => Ok(Proposals::Unanimous),
        "divergent" => Ok(Proposals::Divergent),
        _ => Err(format!("unknown proposal mode {s}")),
    }
}

fn parse_sink_mode(s: &str) -> Result<SinkMode, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "all_nodes" | "all" => Ok(SinkMode::AllNodes),
        "sink_only" | "sink" => Ok(SinkMode::SinkOnly),
        _ => Err(format!("unknown sink mode {s}")),
    }
}

impl Overrides {
    fn config(&self, fallback_n: Option<usize>) -> Result<ScenarioConfig, String> {
        let mut c = match &self.scenario {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                let mut c: ScenarioConfig =
                    toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
                // n may be overridden below, so validate at the end
                if let Some(n) = self.n {
                    c.n = n;
                }
                c
            }
            None => ScenarioConfig::new(
                self.n
                    .or(fallback_n)
                    .ok_or("either --scenario or --n is required")?,
            ),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = self.protocol {
            c.protocol = v;
        }
        if let Some(v) = self.f {
            c.f = Some(v);
        }
        if let Some(v) = self.proposals {
            c.proposals = v;
        }
        if let Some(v) = self.sink_mode {
            c.sink_mode = v;
        }
        if let Some(v) = self.time_budget {
            c.time_budget = v;
        }
        match self.adversary.as_deref() {
            None => {}
            Some("none") => c.adversary = None,
            Some(b) => {
                let behavior = Behavior::parse(b).ok_or(format!("unknown adversary {b}"))?;
                c.adversary = Some(AdversarySpec::new(behavior));
            }
        }
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

/// Runs all trials, writing metrics and traces under `dir`. Returns the
/// number of trials with violations.
fn run_batch(cfg: &ScenarioConfig, dir: &Path, traces: bool) -> Result<Vec<sitan::harness::TrialMetrics>, String> {
    let trace_dir = dir.join("traces");
    if traces {
        std::fs::create_dir_all(&trace_dir).map_err(|e| format!("cannot create {}: {e}", trace_dir.display()))?;
    }
    let mut all = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let trial = run_trial(cfg, t);
        if traces {
            write_file(&trace_dir.join(format!("trial-{t:04}.trace")), &trial.trace_text())
                .map_err(|e| e.to_string())?;
        }
        for v in &trial.metrics.violations {
            eprintln!("trial {t}: {v}");
        }
        all.push(trial.metrics);
    }
    emit(dir, &all).map_err(|e| e.to_string())?;
    write_file(&dir.join("scenario.toml"), &cfg.to_toml()).map_err(|e| e.to_string())?;
    Ok(all)
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.cmd {
        Cmd::Run(o) => {
            let cfg = o.config(None)?;
            let trials = run_batch(&cfg, &o.out_dir, !o.no_traces)?;
            let bad = trials.iter().filter(|t| !t.ok()).count();
            let decided = trials.iter().filter(|t| t.decided).count();
            println!(
                "{} trials, {decided} decided, {bad} with violations; results in {}",
                trials.len(),
                o.out_dir.display()
            );
            Ok(bad == 0)
        }
        Cmd::Sweep { over, sizes } => {
            let base = over.config(sizes.first().copied())?;
            let mut report = SweepReport::default();
            for n in sizes {
                let mut c = base.clone();
                c.n = n;
                if over.f.is_none() {
                    c.f = None;
                }
                c.validate().map_err(|e| format!("n = {n}: {e}"))?;
                let dir = over.out_dir.join(format!("n{n:03}"));
                let trials = run_batch(&c, &dir, !over.no_traces)?;
                report.rows.push(row(n, &trials));
            }
            let csv = report.csv();
            std::fs::create_dir_all(&over.out_dir).map_err(|e| e.to_string())?;
            write_file(&over.out_dir.join("sweep.csv"), &csv).map_err(|e| e.to_string())?;
            print!("{csv}");
            if let Some(r) = report.sends_ratio() {
                println!("sends ratio last/first: {r:.3}");
            }
            if let Some(s) = report.rounds_spread() {
                println!("median rounds spread: {s}");
            }
            if let Some(e) = report.sends_exponent() {
                println!("sends log-log exponent: {e:.3}");
            }
            Ok(report.rows.iter().all(|r| r.violations == 0))
        }
        Cmd::Audit { trace } => {
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| format!("cannot read {}: {e}", trace.display()))?;
            let (header, records) = sitan::trace::parse(&text).map_err(|e| e.to_string())?;
            let ctx = context_from_header(&header)?;
            let report = audit(&records, &ctx);
            for v in &report.violations {
                println!("{v}");
            }
            println!(
                "{} records, {} decisions, {} violations",
                records.len(),
                report.stats.decisions,
                report.violations.len()
            );
            Ok(report.ok())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
