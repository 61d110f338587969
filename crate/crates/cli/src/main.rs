use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fedpairing::data::generate_synthetic;
use fedpairing::harness::{
    compare_algorithms, compare_pairing_mechanisms, run_experiment, write_pairing_comparison, ExperimentConfig, MeanTime,
};
use log::info;

#[derive(Parser)]
#[command(name = "fedpairing-cli", version, about = "Client-pairing split federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured algorithm and write per-round metrics.
    Run(Common),
    /// Mean round time of FedPairing under each pairing strategy.
    ComparePairing(Common),
    /// Round times of all algorithms plus IID and non-IID accuracy curves.
    CompareAlgorithms(Common),
    /// Parse and validate a config, then print it with defaults filled in.
    ValidateConfig(Common),
    /// Write the synthetic train and test sets as binary dataset files.
    GenData(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_table(title: &str, rows: &[MeanTime]) {
    println!("{title}");
    println!("{:<12} {:>16} {:>18} {:>6}", "name", "wall_clock_s", "sum_objective_s", "seeds");
    for r in rows {
        println!(
            "{:<12} {:>16.3} {:>18.3} {:>6}",
            r.name, r.mean_wall_clock_s, r.mean_sum_objective_s, r.seeds
        );
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let data = generate_synthetic(&cfg.data.synthetic, cfg.seed)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut files = Vec::new();
    for (name, ds) in [("train", &data.train), ("test", &data.test)] {
        let path = out.join(format!("{name}_seed{}.bin", cfg.seed));
        ds.save(&path, cfg.seed)?;
        files.push(path);
    }
    Ok(files)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let (summary, out) = run_experiment(&cfg, &cfg.out_dir)?;
            println!(
                "{} ({}) seed {}: final accuracy {:.4}, mean round {:.3} s",
                summary.algorithm, summary.partition, summary.seed, summary.final_accuracy, summary.mean_round_wall_clock_s
            );
            print_files(&out.files);
        }
        Command::ComparePairing(c) => {
            let cfg = c.load()?;
            let table = compare_pairing_mechanisms(&cfg)?;
            print_table("pairing strategy round times", &table.means);
            print_files(&write_pairing_comparison(&cfg, &table, &cfg.out_dir)?.files);
        }
        Command::CompareAlgorithms(c) => {
            let cfg = c.load()?;
            let (table, finals, out) = compare_algorithms(&cfg, &cfg.out_dir)?;
            print_table("algorithm round times", &table.means);
            for f in &finals {
                println!("{:<7} {:<11} final accuracy {:.4}", f.partition, f.algorithm, f.final_accuracy);
            }
            print_files(&out.files);
        }
        Command::ValidateConfig(c) => {
            let cfg = c.load()?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
        }
        Command::GenData(c) => {
            let cfg = c.load()?;
            let files = gen_data(&cfg, &cfg.out_dir)?;
            info!("generated {} datasets", files.len());
            print_files(&files);
        }
    }
    Ok(())
}
