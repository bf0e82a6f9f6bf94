use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use orbcount_core::pipeline::{
    parse_seeds, read_rows_csv, run_method, summarize, sweep, write_report_csv, write_summary_csv,
    write_sweep_csv, Axis, Method, ScenarioConfig,
};
use orbcount_core::scene::write_manifest;

#[derive(Parser)]
#[command(
    name = "orbcount",
    version,
    about = "Satellite-ground object counting simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene and write it as a JSONL tile manifest.
    Generate { config: PathBuf, out: PathBuf },
    /// Run one method (or `all`) on one seed and write report rows.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "targetfuse")]
        method: String,
        /// Defaults to the first seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter over values × seeds × methods.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        /// `a..b`, `a..=b` or a comma list; the config's seeds otherwise.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated method names; the config's methods otherwise.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Row CSV; a `.summary.csv` companion is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize run or sweep rows per (axis value, method).
    Report {
        rows: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Writes through a temp file in the target directory, then renames.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()
            .with_context(|| format!("writing {}", path.display()))?;
    }
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn write_out(path: Option<&Path>, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, fill),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for n in names.iter().map(|n| n.trim()) {
        if n == "all" {
            out.extend(Method::ALL);
        } else {
            out.push(n.parse()?);
        }
    }
    if out.is_empty() {
        bail!("invalid methods: at least one method is required");
    }
    Ok(out)
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let scene = cfg.base_scene()?;
            write_atomic(&out, |w| {
                write_manifest(&scene, w).with_context(|| format!("writing {}", out.display()))
            })?;
            println!(
                "wrote {} tiles from {} frames to {}",
                scene.tiles.len(),
                scene.frames.len(),
                out.display()
            );
        }
        Command::Run {
            config,
            method,
            seed,
            out,
        } => {
            let cfg = ScenarioConfig::load(&config)?;
            let methods = parse_methods(std::slice::from_ref(&method))?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let scene = cfg.scene_for_seed(&cfg.base_scene()?, seed)?;
            let reports = methods
                .iter()
                .map(|&m| run_method(&scene, &cfg, seed, m))
                .collect::<Result<Vec<_>, _>>()?;
            write_out(out.as_deref(), |w| Ok(write_report_csv(&reports, w)?))?;
        }
        Command::Sweep {
            config,
            axis,
            values,
            seeds,
            methods,
            jobs,
            out,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            let axis: Axis = axis.parse()?;
            let values: Vec<String> = values
                .iter()
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                bail!("invalid values: at least one axis value is required");
            }
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if let Some(m) = methods {
                cfg.methods = parse_methods(&m)?;
            }
            if jobs == 0 {
                bail!("invalid jobs: must be at least 1");
            }
            let rows = sweep(&cfg, axis, &values, jobs)?;
            write_atomic(&out, |w| Ok(write_sweep_csv(&rows, w)?))?;
            let summary_out = summary_path(&out);
            write_atomic(&summary_out, |w| {
                Ok(write_summary_csv(&summarize(&rows), w)?)
            })?;
            println!(
                "wrote {} rows to {} and summary to {}",
                rows.len(),
                out.display(),
                summary_out.display()
            );
        }
        Command::Report { rows, out } => {
            let file =
                File::open(&rows).with_context(|| format!("cannot open {}", rows.display()))?;
            let parsed =
                read_rows_csv(file).with_context(|| format!("reading {}", rows.display()))?;
            write_out(out.as_deref(), |w| {
                Ok(write_summary_csv(&summarize(&parsed), w)?)
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
