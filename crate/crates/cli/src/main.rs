use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sps_core::engine::run;
use sps_core::sweep::{run_sweep, write_rows_csv, ResultRow, SweepSpec};
use sps_core::{ScenarioConfig, SimError, UseCase};

/// Semi-persistent uplink scheduling simulator.
#[derive(Parser)]
#[command(name = "spsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write a result row plus the full metrics.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a scenario key, e.g. `--set num_ues=80`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, env = "SPSIM_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run a parameter sweep described by a TOML document.
    Sweep {
        spec: PathBuf,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Results file; defaults to `sweep.<format>` in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "SPSIM_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// List the use-case presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn read_input(path: &Path, what: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Failure::Validation(format!("{what} not found: {}", path.display())),
        _ => Failure::Runtime(format!("reading {}: {e}", path.display())),
    })
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = read_input(path, "config")?;
    let loaded = ScenarioConfig::load(&text).map_err(SimError::from)?;
    for r in &loaded.resolutions {
        eprintln!("note: {r}");
    }
    Ok(loaded.config)
}

fn cmd_run(config: &Path, seed: Option<u64>, sets: &[String], out_dir: &Path) -> Result<(), Failure> {
    let mut overrides = Vec::new();
    for s in sets {
        let (k, v) =
            s.split_once('=').ok_or_else(|| Failure::Validation(format!("--set expects KEY=VALUE, got `{s}`")))?;
        overrides.push((k, v));
    }
    let mut cfg = load_config(config)?.with_overrides(overrides).map_err(SimError::from)?;
    if let Some(seed) = seed {
        cfg.rng_seed = seed;
    }
    let metrics = run::<f64>(&cfg)?;
    let row = ResultRow::from_metrics(&cfg, &metrics);

    let stem = format!("run_{}_seed{}", cfg.scheduler_kind, cfg.rng_seed);
    let mut csv = Vec::new();
    for line in cfg.to_kv_string().lines() {
        csv.extend_from_slice(format!("# {line}\n").as_bytes());
    }
    write_rows_csv(std::slice::from_ref(&row), &mut csv)?;
    write_output(&out_dir.join(format!("{stem}.csv")), &csv)?;
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_output(&out_dir.join(format!("{stem}.json")), json.as_bytes())?;

    let ms = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.4} ms", v * 1e3));
    println!(
        "{} N={} seed={}: mean latency {}, p99 {}, loss ratio {:.4} ({} delivered, {} dropped)",
        cfg.scheduler_kind,
        cfg.num_ues,
        cfg.rng_seed,
        ms(metrics.mean_e2e_s),
        ms(metrics.p99_e2e_s),
        metrics.loss_ratio,
        metrics.delivered_count,
        metrics.dropped_count,
    );
    Ok(())
}

fn cmd_sweep(
    spec_path: &Path,
    jobs: usize,
    out: Option<PathBuf>,
    out_dir: &Path,
    format: Format,
) -> Result<(), Failure> {
    let spec = SweepSpec::parse(&read_input(spec_path, "sweep spec")?)?;
    let base = match &spec.base {
        Some(b) => load_config(&spec_path.parent().unwrap_or(Path::new(".")).join(b))?,
        None => ScenarioConfig::default(),
    };
    let results = run_sweep(&spec, &base, jobs)?;
    let (bytes, ext) = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            results.write_csv(&mut buf)?;
            (buf, "csv")
        }
        Format::Json => (results.to_json().into_bytes(), "json"),
    };
    let path = out.unwrap_or_else(|| out_dir.join(format!("sweep.{ext}")));
    write_output(&path, &bytes)?;
    let errors = results.rows.iter().filter(|r| r.is_error()).count();
    println!("{} rows ({errors} errors) written to {}", results.rows.len(), path.display());
    Ok(())
}

fn cmd_presets() {
    for uc in [UseCase::AugmentedReality, UseCase::RemoteAccessMaintenance] {
        let p = uc.preset();
        println!(
            "{}: {} lines x {} machines, floor {} x {} x {} m, machine spacing {} m, side {} m",
            uc,
            p.n_lines,
            p.machines_per_line,
            p.floor_length_m,
            p.floor_width_m,
            p.floor_height_m,
            p.inter_machine_distance_m,
            p.machine_side_m
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation failures, not runtime faults
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Command::Run { config, seed, sets, out_dir } => cmd_run(&config, seed, &sets, &out_dir),
        Command::Sweep { spec, jobs, out, out_dir, format } => cmd_sweep(&spec, jobs, out, &out_dir, format),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
