use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use guidesampler::config::{env_seed, load_config, to_pretty_json};
use guidesampler::verify::{cmd_verify, table_header};
use guidesampler::{cmd_campaign, render_campaign, sample, CampaignRunConfig, CliError, CliResult, SampleConfig, VerifyConfig};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "guidesampler", version, about = "Guided sampling for masked discrete flow models")]
struct Cli {
    /// Worker threads for sampling and campaigns (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the acceptance checks and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only these checks (repeat or comma-separate).
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Parametric denoiser JSON to include in the loss-identity check.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw samples and write them with paths and diagnostics.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        landscape: Option<PathBuf>,
        /// Noisy classifier JSON (repeat for a product of predictors).
        #[arg(long)]
        predictor: Vec<PathBuf>,
        /// Guide toward the landscape's target region with its exact predictor.
        #[arg(long)]
        target_predictor: bool,
        /// none, exact, tag, deg or predictor_free.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        /// aoarm or euler.
        #[arg(long)]
        sampler: Option<String>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the benchmark campaign and write CSV and JSON summaries.
    Campaign {
        #[command(flatten)]
        common: Common,
        /// Number of seeds, starting at --first-seed.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        first_seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn enum_value<T: DeserializeOwned>(what: &str, text: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(text.into()))
        .map_err(|_| CliError::Config(format!("invalid {what} `{text}`")))
}

fn print_config<T: serde::Serialize>(value: &T) -> CliResult<()> {
    print!("{}", to_pretty_json(value)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(CliError::config)?;
    }
    let env = env_seed()?;
    match cli.command {
        Command::Verify {
            common,
            seed,
            only,
            model,
            output,
        } => {
            let mut cfg: VerifyConfig = load_config(common.config.as_deref())?;
            if let Some(s) = seed.or(env) {
                cfg.seed = s;
            }
            if !only.is_empty() {
                cfg.only = only;
            }
            if model.is_some() {
                cfg.model = model;
            }
            if output.is_some() {
                cfg.output_dir = output;
            }
            if common.print_config {
                return print_config(&cfg);
            }
            let mut stdout = std::io::stdout();
            let _ = writeln!(stdout, "{}", table_header());
            let reports = cmd_verify(&cfg, |r| {
                let _ = writeln!(stdout, "{}", r.render());
                let _ = stdout.flush();
                eprintln!("{}: {:.1}s", r.check.name(), r.elapsed_secs);
            })?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.check.name()).collect();
            println!("{}/{} checks passed", reports.len() - failed.len(), reports.len());
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(failed.join(", ")))
            }
        }
        Command::Sample {
            common,
            seed,
            n,
            model,
            landscape,
            predictor,
            target_predictor,
            mode,
            gamma,
            sampler,
            dt,
            temperature,
            output,
        } => {
            let mut cfg: SampleConfig = load_config(common.config.as_deref())?;
            if let Some(s) = seed.or(env) {
                cfg.seed = s;
            }
            cfg.n = n.unwrap_or(cfg.n);
            cfg.model = model.or(cfg.model);
            cfg.landscape = landscape.or(cfg.landscape);
            if !predictor.is_empty() {
                cfg.predictors = predictor;
            }
            cfg.target_predictor |= target_predictor;
            if let Some(m) = mode {
                cfg.mode = enum_value("mode", &m)?;
            }
            if let Some(s) = sampler {
                cfg.sampler = enum_value("sampler", &s)?;
            }
            cfg.gamma = gamma.unwrap_or(cfg.gamma);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.temperature = temperature.unwrap_or(cfg.temperature);
            cfg.output_dir = output.unwrap_or(cfg.output_dir);
            if common.print_config {
                return print_config(&cfg);
            }
            let artifacts = sample::cmd_sample(&cfg)?;
            println!(
                "wrote {} samples to {}",
                artifacts.samples.lines().count(),
                cfg.output_dir.join(sample::SAMPLES_FILE).display()
            );
            eprintln!("sampling took {:.2}s", artifacts.wall_time_secs);
            Ok(())
        }
        Command::Campaign {
            common,
            seeds,
            first_seed,
            output,
        } => {
            let mut cfg: CampaignRunConfig = load_config(common.config.as_deref())?;
            let count = seeds.unwrap_or(cfg.campaign.seeds.len() as u64);
            if let Some(first) = first_seed.or(env) {
                cfg.campaign.seeds = (first..first + count).collect();
            } else if seeds.is_some() {
                let first = cfg.campaign.seeds.first().copied().unwrap_or(0);
                cfg.campaign.seeds = (first..first + count).collect();
            }
            cfg.output_dir = output.unwrap_or(cfg.output_dir);
            if common.print_config {
                return print_config(&cfg);
            }
            let outcome = cmd_campaign(&cfg)?;
            print!("{}", render_campaign(&outcome));
            for r in &outcome.summary.arms {
                eprintln!(
                    "{}: mean wall time {:.4}s, ratio to reference {}",
                    r.arm,
                    r.mean_wall_time_secs,
                    r.wall_time_ratio.map_or("n/a".into(), |x| format!("{x:.2}"))
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
