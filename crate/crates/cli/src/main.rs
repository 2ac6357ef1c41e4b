//! Experiment runner. See `--help` or `--list` for the registry.

mod config;
mod experiments;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use config::Config;
use sle_lqg_core::LabError;

const USAGE: &str = "sle-lqg: numerical experiments coupling Loewner flows with free-field measures

usage:
  sle-lqg --list [--json]
  sle-lqg --experiment <name> [--config <file>] [--set key=value ...]
          [--workers N] [--output DIR]

flags:
  --config <file>      flat key = value config (optional [section] headers)
  --experiment <name>  experiment to run (or set `experiment = ...` in the config)
  --set key=value      override one config key (repeatable)
  --workers N          worker threads (default: all cores)
  --output DIR         output directory (default: out)
  --list               list registered experiments
  --json               with --list, emit the registry as JSON
  --help               this text

exit codes: 0 pass, 1 assertion failure (report still written), 2 usage or
config error, 3 i/o failure";

struct Args {
    config_path: Option<PathBuf>,
    experiment: Option<String>,
    overrides: Vec<(String, String)>,
    workers: Option<usize>,
    output: Option<PathBuf>,
    list: bool,
    json: bool,
    help: bool,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut args = Args {
        config_path: None,
        experiment: None,
        overrides: Vec::new(),
        workers: None,
        output: None,
        list: false,
        json: false,
        help: false,
    };
    let mut it = argv.iter();
    while let Some(flag) = it.next() {
        let mut value_of = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| format!("{name} needs a value"))
        };
        match flag.as_str() {
            "--config" => args.config_path = Some(PathBuf::from(value_of("--config")?)),
            "--experiment" => args.experiment = Some(value_of("--experiment")?),
            "--set" => {
                let kv = value_of("--set")?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| format!("--set expects key=value, got '{kv}'"))?;
                args.overrides.push((k.trim().into(), v.trim().into()));
            }
            "--workers" => {
                args.workers = Some(
                    value_of("--workers")?
                        .parse()
                        .map_err(|e| format!("--workers: {e}"))?,
                )
            }
            "--output" => args.output = Some(PathBuf::from(value_of("--output")?)),
            "--list" => args.list = true,
            "--json" => args.json = true,
            "--help" | "-h" => args.help = true,
            other => return Err(format!("unknown flag '{other}'")),
        }
    }
    Ok(args)
}

fn list_registry(as_json: bool) {
    // Writes through a fallible handle so a closed pipe (e.g. `--list | head`)
    // ends the listing instead of panicking.
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if as_json {
        let entries: Vec<serde_json::Value> = experiments::REGISTRY
            .iter()
            .map(|e| {
                serde_json::json!({
                    "name": e.name,
                    "module": e.module,
                    "verifies": e.verifies,
                    "keys": e.keys.iter().map(|(k, d)| {
                        serde_json::json!({"key": k, "default": d})
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        let body = serde_json::to_string_pretty(&serde_json::json!({ "experiments": entries }))
            .expect("registry serializes");
        let _ = writeln!(out, "{body}");
        return;
    }
    let _ = writeln!(out, "registered experiments:");
    for e in experiments::REGISTRY {
        let _ = writeln!(out, "  {:<20} [{}]", e.name, e.module);
        let _ = writeln!(out, "      verifies: {}", e.verifies);
        if !e.keys.is_empty() {
            let keys: Vec<String> = e.keys.iter().map(|(k, d)| format!("{k}={d}")).collect();
            let _ = writeln!(out, "      keys: {}", keys.join(" "));
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    if args.help || argv.is_empty() {
        println!("{USAGE}");
        return ExitCode::SUCCESS;
    }
    if args.list {
        list_registry(args.json);
        return ExitCode::SUCCESS;
    }

    let mut cfg = match &args.config_path {
        Some(path) => match Config::from_file(path) {
            Ok(c) => c,
            Err(LabError::Io(e)) => {
                eprintln!("error: cannot read config: {e}");
                return ExitCode::from(3);
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    for (k, v) in &args.overrides {
        cfg.set(k, v);
    }
    let name = args
        .experiment
        .clone()
        .or_else(|| cfg.get_raw("experiment").map(str::to_string));
    let Some(name) = name else {
        eprintln!("error: no experiment selected\n\n{USAGE}");
        return ExitCode::from(2);
    };
    let Some(info) = experiments::find(&name) else {
        eprintln!("error: unknown experiment '{name}' (see --list)");
        return ExitCode::from(2);
    };
    cfg.set("experiment", &name);
    let workers = args
        .workers
        .or_else(|| {
            cfg.get_raw("workers")
                .and_then(|w| w.parse::<usize>().ok())
        })
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2));
    cfg.set("workers", &workers.to_string());
    let out_dir = args
        .output
        .clone()
        .or_else(|| cfg.get_raw("output_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.set("output_dir", &out_dir.display().to_string());

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: worker pool: {e}");
            return ExitCode::from(3);
        }
    };

    let outcome = pool.install(|| (info.run)(&cfg));
    let outcome = match outcome {
        Ok(o) => o,
        Err(LabError::Io(e)) => {
            eprintln!("error: i/o failure: {e}");
            return ExitCode::from(3);
        }
        Err(LabError::Config(e)) => {
            eprintln!("error: config: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    for a in &outcome.assertions {
        let status = if a.passed {
            "pass"
        } else if a.gating {
            "FAIL"
        } else {
            "fail (non-gating)"
        };
        println!(
            "{name}/{}: {status} (value {:.6e}, target {:.6e}) {}",
            a.label, a.value, a.target, a.detail
        );
    }

    if let Err(e) = report::write_outputs(&out_dir, &name, &cfg, &outcome) {
        eprintln!("error: writing outputs: {e}");
        return ExitCode::from(3);
    }
    println!(
        "{name}: {} ({} assertions) -> {}",
        if outcome.passed() { "PASS" } else { "FAIL" },
        outcome.assertions.len(),
        out_dir.display()
    );
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
