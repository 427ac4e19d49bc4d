use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use clonesim::analyze::{analyze, xy_csv, FigureKind};
use clonesim::runner::{run, LoadedRun, RunOptions, MANIFEST_FILE};
use clonesim::scenario::{presets, Scenario, Sweep};
use clonesim::theory::{optimal_clone_factor, TheoryInputs};
use clonesim::verify::{run_criterion, Report, VerifyOptions, CRITERIA};

#[derive(Parser)]
#[command(name = "clonesim", version, about = "Request cloning over processor-sharing clusters")]
struct Cli {
    /// Base directory for run outputs.
    #[arg(long, global = true, env = "CLONESIM_OUT", default_value = "runs")]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every cell of a scenario and store the samples.
    Run {
        /// Scenario file, or the name of a bundled preset.
        scenario: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        requests: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory (default: <out-root>/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        allow_unstable: bool,
    },
    /// Turn a stored run into plot data files.
    Analyze {
        /// Manifest file or run directory.
        manifest: PathBuf,
        #[arg(long, value_parser = parse_figure)]
        figure: FigureKind,
        /// Output directory (default: <run dir>/data).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal cloning factor and mean response over an arrival-rate grid.
    Theory {
        scenario: String,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Output directory (default: <out-root>/<scenario name>/theory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
        /// Only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        #[arg(long, hide = true)]
        fault_drain_scale: Option<f64>,
    },
    /// List the bundled presets, or print one.
    Presets { name: Option<String> },
}

fn parse_figure(s: &str) -> Result<FigureKind, String> {
    s.parse()
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        return Scenario::load(path).with_context(|| format!("loading {arg}"));
    }
    match presets::get(arg) {
        Some(s) => Ok(s?),
        None => bail!("{arg} is neither a scenario file nor a preset name"),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            jobs,
            seed,
            requests,
            reps,
            out,
            allow_unstable,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(r) = requests {
                s.requests = r;
            }
            if let Some(r) = reps {
                s.replications = r;
            }
            s.validate()?;
            let dir = out
                .or_else(|| s.output_dir.clone())
                .unwrap_or_else(|| cli.out_root.join(&s.name));
            let mut opts = RunOptions::new(&dir);
            opts.jobs = jobs;
            opts.allow_unstable = allow_unstable;
            let m = run(&s, &opts)?;
            let files: usize = m.cells.iter().map(|c| c.replications.len()).sum();
            println!(
                "{}: {} cells, {} replication files, scenario {}",
                s.name,
                m.cells.len(),
                files,
                &m.scenario_hash[..12]
            );
            println!("{}", dir.join(MANIFEST_FILE).display());
        }
        Command::Analyze { manifest, figure, out } => {
            let loaded = LoadedRun::open(&manifest)?;
            let out = out.unwrap_or_else(|| loaded.root.join("data"));
            for path in analyze(&loaded, figure, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Theory {
            scenario,
            from,
            to,
            step,
            out,
        } => {
            let s = load_scenario(&scenario)?;
            let (lo, hi) = match &s.sweep {
                Sweep::CloneFactor { arrival_rates, .. } | Sweep::Codesign { arrival_rates, .. } => (
                    arrival_rates.iter().copied().fold(f64::INFINITY, f64::min),
                    arrival_rates.iter().copied().fold(0.0, f64::max),
                ),
                _ => (step, s.arrival_rate),
            };
            let (lo, hi) = (from.unwrap_or(lo), to.unwrap_or(hi));
            if !(step > 0.0 && lo > 0.0 && hi >= lo) {
                bail!("need 0 < from <= to and step > 0");
            }
            let servers = s.server_specs();
            let mut means = Vec::new();
            let mut factors = Vec::new();
            let steps = ((hi - lo) / step + 1e-9).floor() as usize;
            for k in 0..=steps {
                let rate = lo + k as f64 * step;
                if let Ok(opt) = optimal_clone_factor(&TheoryInputs::new(servers.clone(), rate)) {
                    means.push((rate, opt.mean_response));
                    factors.push((rate, opt.clone_factor as f64));
                }
            }
            if means.is_empty() {
                bail!("no cloning factor is stable anywhere in [{lo}, {hi}]");
            }
            let dir = out.unwrap_or_else(|| cli.out_root.join(&s.name).join("theory"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            for (file, data) in [("optclones-theory.csv", &factors), ("meanRT-theory.csv", &means)] {
                let path = dir.join(file);
                std::fs::write(&path, xy_csv(data)).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        Command::Verify {
            seed,
            jobs,
            only,
            json,
            fault_drain_scale,
        } => {
            let mut opts = VerifyOptions {
                seed,
                fault_drain_scale,
                ..VerifyOptions::default()
            };
            if let Some(j) = jobs {
                opts.jobs = j;
            }
            let mut report = Report {
                seed,
                criteria: Vec::new(),
            };
            for (id, _, _) in CRITERIA {
                if only.is_empty() || only.contains(&id) {
                    let r = run_criterion(id, &opts);
                    if !json {
                        println!("{}", r.line());
                    }
                    report.criteria.push(r);
                }
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Presets { name } => match name {
            None => {
                for (name, _) in presets::ALL {
                    println!("{name}");
                }
            }
            Some(name) => {
                let name = name.strip_suffix(".toml").unwrap_or(&name);
                match presets::ALL.iter().find(|(n, _)| *n == name) {
                    Some((_, text)) => print!("{text}"),
                    None => bail!("no preset named {name}"),
                }
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}
