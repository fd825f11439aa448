use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use subreg::radius_cli::{list_catalog, run_cached, write_outputs, Cache, ExperimentConfig, Format, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "subreg", version, about = "Subregularity moduli, constants and radius experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the ladder depth.
        #[arg(long)]
        depth: Option<usize>,
        /// Override the samples per scale.
        #[arg(long)]
        samples: Option<usize>,
        /// Output directory for reports and the cache.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Recompute even when a cached report exists.
        #[arg(long)]
        no_cache: bool,
        /// What to print on stdout.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// List the built-in mappings with their known values.
    Catalog,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            println!("{}", list_catalog());
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, depth, samples, out, no_cache, format } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if depth.is_some() {
                cfg.ladder.depth = depth;
            }
            if samples.is_some() {
                cfg.ladder.samples = samples;
            }
            let out =
                out.or_else(|| cfg.output.dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs"));
            let format = format.or(cfg.output.format).unwrap_or_default();
            let cache = (!no_cache).then(|| Cache::new(out.join("cache")));
            let report = match run_cached(&cfg, cache.as_ref()) {
                Ok((r, _)) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            };
            match write_outputs(&report, &out) {
                Ok(dir) => eprintln!("wrote {}", dir.display()),
                Err(e) => {
                    eprintln!("error: cannot write outputs under {}: {e}", out.display());
                    return ExitCode::from(EXIT_CONFIG as u8);
                }
            }
            match format {
                Format::Full => println!("{}", report.to_json()),
                Format::Csv => print!("{}", report.to_csv()),
                Format::Summary => println!("{}", report.summary()),
            }
            ExitCode::from(report.status.exit_code() as u8)
        }
    }
}
