use std::path::PathBuf;
use std::process::ExitCode;

use ampgrad::config::{Grid, SweepSpec};
use ampgrad::{emit_plot_data, run, ExperimentConfig};
use ampgrad_core::amplification::{draw_selection, get_gradient_amp_layers, GroupSpec, LayerType};
use ampgrad_core::autograd::LayerId;
use ampgrad_core::nn::{build_model, ArchConfig};
use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "ampgrad", version, about = "Gradient-amplification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepMode {
    Step1,
    Step2,
    Gamma,
}

#[derive(Subcommand)]
enum Command {
    /// Run every schedule and seed of a config and write the summary.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a generated sweep on the dataset, model and seeds of a config.
    Sweep {
        #[arg(long, value_enum)]
        mode: SweepMode,
        #[arg(long)]
        config: PathBuf,
        /// First-window ratios for step 2.
        #[arg(long, value_delimiter = ',')]
        mm: Vec<f64>,
        /// Ratio grid for step 1/2 (default `{0, 0.1, ..., 1}`).
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Factor grid: `coarse`, `fine` or a comma-separated list.
        #[arg(long, default_value = "coarse")]
        grid: String,
        /// Schedule label a factor sweep varies.
        #[arg(long)]
        base: Option<String>,
        /// Print the generated schedules and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write plot-ready TSV files next to a summary.
    Plot {
        #[arg(long)]
        summary: PathBuf,
    },
    /// Print the amplified-layer draws for a group, one line per ratio.
    Select {
        /// Draw from a model's layer group.
        #[arg(long, conflicts_with = "group_size")]
        arch: Option<String>,
        /// Draw from the abstract group `0..N`.
        #[arg(long)]
        group_size: Option<usize>,
        #[arg(long, value_delimiter = ',', default_value = "bn")]
        layer_types: Vec<LayerType>,
        #[arg(long, value_delimiter = ',', required = true)]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        phase: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config } => execute(ExperimentConfig::load(&config)?),
        Command::Sweep {
            mode,
            config,
            mm,
            ratios,
            grid,
            base,
            dry_run,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let beta = Some(if ratios.is_empty() {
                Grid::Preset("grid".into())
            } else {
                Grid::Values(ratios)
            });
            let sweep = match mode {
                SweepMode::Step1 => SweepSpec {
                    beta,
                    ..Default::default()
                },
                SweepMode::Step2 => {
                    if mm.is_empty() {
                        bail!("step2 needs --mm");
                    }
                    SweepSpec {
                        beta,
                        mm: Some(mm),
                        ..Default::default()
                    }
                }
                SweepMode::Gamma => {
                    let grid = match grid.as_str() {
                        "coarse" | "fine" => Grid::Preset(grid),
                        list => Grid::Values(
                            list.split(',')
                                .map(|v| v.trim().parse::<f64>())
                                .collect::<std::result::Result<_, _>>()?,
                        ),
                    };
                    SweepSpec {
                        gamma: Some(grid),
                        base: Some(base.ok_or_else(|| anyhow::anyhow!("gamma sweep needs --base"))?),
                        ..Default::default()
                    }
                }
            };
            cfg.schedule = None;
            cfg.sweep = Some(sweep);
            cfg.validate()?;
            if dry_run {
                for p in cfg.points()? {
                    println!("{}\t{}", p.label(), p.schedule);
                }
                return Ok(ExitCode::SUCCESS);
            }
            execute(cfg)
        }
        Command::Plot { summary } => {
            for path in emit_plot_data(&summary)? {
                println!("{}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Select {
            arch,
            group_size,
            layer_types,
            beta,
            gamma,
            seed,
            phase,
        } => {
            for b in beta {
                let sel = match (&arch, group_size) {
                    (Some(name), _) => {
                        let cfg = ArchConfig::preset(name, &[3, 32, 32], 10)?;
                        let model = build_model::<f32>(&cfg, 0)?;
                        let spec = GroupSpec::new(layer_types.iter().copied());
                        get_gradient_amp_layers(&model, b, gamma, &spec, seed, phase)?
                    }
                    (None, Some(n)) => draw_selection((0..n).map(LayerId).collect(), b, gamma, seed, phase)?,
                    (None, None) => bail!("give --arch or --group-size"),
                };
                println!("{}", sel.dump_line());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn execute(cfg: ExperimentConfig) -> Result<ExitCode> {
    let outcome = run(&cfg)?;
    print!("{}", outcome.summary.to_tsv());
    if outcome.failures.is_empty() {
        return Ok(ExitCode::SUCCESS);
    }
    for f in &outcome.failures {
        eprintln!("failed: {} seed {}: {}", f.label, f.seed, f.error);
    }
    Ok(ExitCode::from(1))
}
