use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pulsebench::bench::{self, RunConfig, DATA_ENV};
use pulsebench::signal::Task;
use pulsebench::synth::{self, SynthConfig};
use pulsebench::Error;

#[derive(Parser)]
#[command(name = "pulsebench", version, about = "PPG benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthTask {
    Bp,
    Af,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config end to end and write report artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "pulsebench-out")]
        out: PathBuf,
        /// Root for relative data paths in the config.
        #[arg(long, env = DATA_ENV)]
        data_root: Option<PathBuf>,
    },
    /// Merge two or more report.json files into one ranked table.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write comparison.txt and comparison.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic cohort as <name>.f32 plus manifest.
    Synth {
        #[arg(long, value_enum)]
        task: SynthTask,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        subjects: Option<usize>,
        /// Defaults to the data root, then the current directory.
        #[arg(long, env = DATA_ENV)]
        out: Option<PathBuf>,
        /// Defaults to synth_bp or synth_af.
        #[arg(long)]
        name: Option<String>,
    },
}

fn write(path: &Path, text: &str) -> pulsebench::Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn run(cli: Cli) -> pulsebench::Result<()> {
    match cli.command {
        Command::Run { config, seed, out, data_root } => {
            let mut cfg = RunConfig::from_file(&config).map_err(|e| e.at_stage("config"))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let artifacts = bench::run(&cfg, data_root.as_deref())?;
            artifacts.write(&out).map_err(|e| e.at_stage("write"))?;
            print!("{}", artifacts.table);
            eprintln!("wrote {}", out.display());
        }
        Command::Compare { reports, out } => {
            let loaded = reports
                .iter()
                .map(|p| bench::read_report(p))
                .collect::<pulsebench::Result<Vec<_>>>()
                .map_err(|e| e.at_stage("compare"))?;
            let cmp = bench::compare(loaded).map_err(|e| e.at_stage("compare"))?;
            let table = cmp.table().map_err(|e| e.at_stage("compare"))?;
            print!("{table}");
            if let Some(dir) = out {
                fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
                write(&dir.join("comparison.txt"), &table)?;
                write(&dir.join("comparison.json"), &(serde_json::to_string_pretty(&cmp)? + "\n"))?;
            }
        }
        Command::Synth { task, n, seed, subjects, out, name } => {
            let task = match task {
                SynthTask::Bp => Task::Bp,
                SynthTask::Af => Task::Af,
            };
            let name = name.unwrap_or_else(|| format!("synth_{}", if task == Task::Bp { "bp" } else { "af" }));
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            let mut cfg = SynthConfig::new(task, n, seed);
            cfg.subjects = subjects;
            let m = synth::write_dataset(&dir, &name, &cfg).map_err(|e| e.at_stage("synth"))?;
            eprintln!("wrote {} segments to {}", m.entries.len(), dir.join(&name).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
