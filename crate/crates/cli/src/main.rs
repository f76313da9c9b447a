use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use xfsmon::library::{builtin, list_builtins, sha256_hex};
use xfsmon::pcap::{open_trace, Record, TraceError};
use xfsmon::replay::{alert_line, Replayer, RunReport};
use xfsmon::scenario::{generate, ScenarioKind, ScenarioSpec};
use xfsmon::Program;

/// Replay packet traces through monitoring programs.
#[derive(Parser)]
#[command(name = "xfsmon", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay a pcap through a program, streaming alerts as JSON lines.
    Run {
        /// Program file, or `builtin:NAME` for a bundled program.
        #[arg(long)]
        program: String,
        #[arg(long)]
        pcap: PathBuf,
        /// Alert output (default: stdout).
        #[arg(long)]
        alerts: Option<PathBuf>,
        /// JSON run report (default: summary on stderr).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Independent instances, partitioned by primary key hash.
        #[arg(long, default_value_t = 1)]
        shards: usize,
        /// Sleep between packets to reproduce the capture's gaps.
        #[arg(long)]
        paced: bool,
        /// Playback speed factor for --paced.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Override a program parameter, e.g. --param threshold=50.
        #[arg(long = "param", value_parser = parse_kv)]
        params: Vec<(String, f64)>,
    },
    /// Generate a synthetic scenario trace and its ground-truth sidecar.
    Gen {
        /// portknock, ddos, conficker, p2p, entropy or background.
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Seconds of traffic.
        #[arg(long)]
        duration: Option<f64>,
        /// Override a scenario knob, e.g. --set scan_rate=200.
        #[arg(long = "set", value_parser = parse_kv)]
        knobs: Vec<(String, f64)>,
    },
    /// Parse and check a program.
    Validate {
        #[arg(long)]
        program: String,
        /// Treat warnings as errors.
        #[arg(long)]
        strict: bool,
    },
    /// List the bundled programs.
    Programs,
}

fn parse_kv(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

/// Exit status for failures, with the message already printed.
struct Failure(u8);

const PROGRAM_ERROR: u8 = 1;
const TRACE_ERROR: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run { program, pcap, alerts, report, shards, paced, speed, params } => {
            run(&program, &pcap, alerts.as_deref(), report.as_deref(), shards, paced.then_some(speed), &params)
        }
        Cmd::Gen { scenario, seed, out, duration, knobs } => gen(scenario, seed, &out, duration, &knobs),
        Cmd::Validate { program, strict } => validate(&program, strict),
        Cmd::Programs => {
            for name in list_builtins() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code)) => ExitCode::from(code),
    }
}

fn fail(code: u8, e: impl std::fmt::Display) -> Failure {
    eprintln!("error: {e}");
    Failure(code)
}

fn read_program_text(spec: &str) -> anyhow::Result<String> {
    match spec.strip_prefix("builtin:") {
        Some(name) => Ok(builtin(name)?.document.to_string()),
        None => std::fs::read_to_string(spec).with_context(|| format!("cannot read program {spec}")),
    }
}

fn load_program(spec: &str, params: &[(String, f64)]) -> Result<Program, Failure> {
    let text = read_program_text(spec).map_err(|e| fail(PROGRAM_ERROR, format!("{e:#}")))?;
    let overrides: BTreeMap<String, f64> = params.iter().cloned().collect();
    Program::parse_with_params(&text, &overrides).map_err(|e| fail(PROGRAM_ERROR, format!("{spec}: {e}")))
}

fn run(
    program: &str,
    pcap: &Path,
    alerts: Option<&Path>,
    report: Option<&Path>,
    shards: usize,
    paced: Option<f64>,
    params: &[(String, f64)],
) -> Result<(), Failure> {
    let program = load_program(program, params)?;
    if shards == 0 {
        return Err(fail(PROGRAM_ERROR, "--shards must be at least 1"));
    }
    let trace = open_trace(pcap).map_err(|e| fail(TRACE_ERROR, format!("{}: {e}", pcap.display())))?;
    let mut replayer = Replayer::new(program, shards).map_err(|e| fail(PROGRAM_ERROR, e))?;
    let mut sink: Box<dyn Write> = match alerts {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| fail(PROGRAM_ERROR, format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };

    let started = Instant::now();
    let mut span = None;
    let mut write_err = None;
    let mut prev: Option<Record> = None;
    for rec in trace {
        let rec: Record = rec.map_err(|e: TraceError| fail(TRACE_ERROR, format!("{}: {e}", pcap.display())))?;
        if let (Some(speed), Some(p)) = (paced, &prev) {
            let gap = rec.ts.saturating_sub(p.ts) as f64 / 1e6 / speed.max(1e-6);
            std::thread::sleep(Duration::from_secs_f64(gap.min(60.0)));
        }
        span = Some(span.map_or((rec.ts, rec.ts), |(a, _)| (a, rec.ts)));
        replayer.push(&rec, &mut |v| {
            for a in &v.alerts {
                if write_err.is_none() {
                    write_err = sink.write_all(alert_line(a).as_bytes()).err();
                }
            }
        });
        if let Some(e) = write_err.take() {
            return Err(fail(PROGRAM_ERROR, format!("writing alerts: {e}")));
        }
        prev = paced.map(|_| rec);
    }
    sink.flush().map_err(|e| fail(PROGRAM_ERROR, format!("writing alerts: {e}")))?;
    drop(sink);

    let rep = RunReport::from_run(&replayer, span, started.elapsed().as_secs_f64());
    match report {
        Some(p) => {
            let mut json = serde_json::to_string_pretty(&rep).expect("report serializes");
            json.push('\n');
            std::fs::write(p, json).map_err(|e| fail(PROGRAM_ERROR, format!("{}: {e}", p.display())))?;
        }
        None => eprint!("{}", summary(&rep)),
    }
    Ok(())
}

fn summary(r: &RunReport) -> String {
    let mut s = format!(
        "program {}: {} packets ({} matched, {} unmatched, {} malformed), {} alerts, {:.0} packets/s\n",
        r.program, r.packets, r.matched, r.unmatched, r.malformed, r.alerts, r.packets_per_sec
    );
    for (e, n) in &r.events {
        s.push_str(&format!("  event {e}: {n}\n"));
    }
    for (st, n) in &r.census {
        s.push_str(&format!("  state {st}: {n}\n"));
    }
    s
}

fn gen(kind: ScenarioKind, seed: u64, out: &Path, duration: Option<f64>, knobs: &[(String, f64)]) -> Result<(), Failure> {
    let build = || -> anyhow::Result<ScenarioSpec> {
        let mut spec = ScenarioSpec::new(kind, seed);
        if let Some(d) = duration {
            spec = spec.with_duration(d)?;
        }
        for (k, v) in knobs {
            spec = spec.with_knob(k, *v)?;
        }
        Ok(spec)
    };
    let spec = build().map_err(|e| fail(PROGRAM_ERROR, e))?;
    let trace = generate(&spec);
    let sidecar = trace.write(out).map_err(|e| fail(PROGRAM_ERROR, anyhow!("{}: {e}", out.display())))?;
    println!("scenario {kind} seed {seed}: {} packets", trace.records.len());
    println!("pcap {} sha256 {}", out.display(), sha256_hex(&trace.pcap_bytes()));
    println!("truth {}", sidecar.display());
    Ok(())
}

fn validate(program: &str, strict: bool) -> Result<(), Failure> {
    let p = load_program(program, &[])?;
    let warnings = p.warnings();
    for w in &warnings {
        println!("warning: {w}");
    }
    if strict && !warnings.is_empty() {
        return Err(fail(PROGRAM_ERROR, format!("{} warning(s) with --strict", warnings.len())));
    }
    println!(
        "{program}: ok ({} states, {} events, {} metrics, {} features)",
        p.states.len(),
        p.events.len(),
        p.metrics.len(),
        p.features.len()
    );
    Ok(())
}
