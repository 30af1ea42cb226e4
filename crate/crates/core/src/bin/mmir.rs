use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mmir::data::io::{self, Encoding};
use mmir::data::scenario::domain_pairs;
use mmir::data::{generate, Dataset, DomainSpec};
use mmir::report::{find_summaries, selection_report, summarize};
use mmir::train::{read_masks, run_ablation_suite, run_to_dir, Mode, RunOutput, TrainConfig};

#[derive(Parser)]
#[command(name = "mmir", version, about = "Multi-modal instance refinement experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// DomainSpec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Packed little-endian features instead of text.
        #[arg(long)]
        binary: bool,
        /// Also write the six domain-pair datasets.
        #[arg(long)]
        pairs: bool,
    },
    /// Train one configuration.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dataset file; generated from --spec (seeded like the run) when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_masks: bool,
    },
    /// Run the eight-row ablation suite over several seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Repeat the suite on the six domain-pair scenarios.
        #[arg(long)]
        pairs: bool,
    },
    /// Summarize finished runs; with --dataset, also score a run's mask dump.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load_spec(path: Option<&Path>) -> Result<DomainSpec> {
    match path {
        None => Ok(DomainSpec::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing spec {}", p.display()))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => TrainConfig::load(p).with_context(|| format!("loading config {}", p.display())),
    }
}

fn dataset_for(spec: &DomainSpec, seed: u64) -> Result<Dataset> {
    Ok(generate(&DomainSpec {
        seed,
        ..spec.clone()
    })?)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData {
            spec,
            out,
            seed,
            binary,
            pairs,
        } => {
            let mut spec = load_spec(spec.as_deref())?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let encoding = if binary { Encoding::Binary } else { Encoding::Text };
            let ext = if binary { "bin" } else { "jsonl" };
            std::fs::create_dir_all(&out)?;
            let mut jobs = vec![("dataset".to_string(), spec.clone())];
            if pairs {
                jobs.extend(domain_pairs(&spec).into_iter().map(|(n, s)| (n.replace("->", "_to_"), s)));
            }
            for (name, s) in jobs {
                let path = out.join(format!("{name}.{ext}"));
                io::write(&generate(&s)?, encoding, &path)?;
                println!("{}", path.display());
            }
        }
        Command::Train {
            config,
            mode,
            seed,
            data,
            spec,
            out,
            dump_masks,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ds = match data {
                Some(p) => io::read(&p).with_context(|| format!("reading dataset {}", p.display()))?,
                None => dataset_for(&load_spec(spec.as_deref())?, cfg.seed)?,
            };
            if dump_masks && out.is_none() {
                bail!("--dump-masks needs --out");
            }
            let (summary, _) = run_to_dir(
                &cfg,
                &ds,
                RunOutput {
                    dir: out.as_deref(),
                    dump_masks,
                },
            )?;
            println!(
                "{} seed {}: target top-1 {:.2}%",
                summary.variant,
                summary.seed,
                100.0 * summary.final_accuracy
            );
            for a in &summary.selection {
                if let (Some(p), Some(b)) = (a.precision, a.baseline) {
                    println!("  {} precision {:.3} (random {:.3})", a.agent, p, b);
                }
            }
        }
        Command::Ablate {
            config,
            seeds,
            spec,
            out,
            pairs,
        } => {
            let base = load_config(config.as_deref())?;
            let spec = load_spec(spec.as_deref())?;
            let mut scenarios = vec![(base.scenario.clone(), spec.clone())];
            if pairs {
                scenarios = domain_pairs(&spec);
            }
            let mut all = Vec::new();
            for (name, s) in scenarios {
                let ds = generate(&s)?;
                let cfg = TrainConfig {
                    scenario: name.clone(),
                    ..base.clone()
                };
                let dir = out.join(name.replace("->", "_to_"));
                all.extend(run_ablation_suite(&cfg, &ds, &seeds, Some(&dir))?);
            }
            let table = summarize(&all)?;
            std::fs::write(out.join("report.csv"), table.to_csv())?;
            print!("{}", table.to_text());
        }
        Command::Report { runs, dataset, csv } => {
            let found = find_summaries(&runs)?;
            if found.is_empty() {
                bail!("no summary.json under {}", runs.display());
            }
            let summaries: Vec<_> = found.into_iter().map(|(_, s)| s).collect();
            let table = summarize(&summaries)?;
            print!("{}", table.to_text());
            std::fs::write(csv.unwrap_or_else(|| runs.join("report.csv")), table.to_csv())?;
            if let Some(d) = dataset {
                let ds = io::read(&d).with_context(|| format!("reading dataset {}", d.display()))?;
                let masks = read_masks(runs.join("masks.csv"))?;
                print!("{}", selection_report(&masks, &ds, 3)?.to_text());
            }
        }
    }
    Ok(())
}
