use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use simtally::image::ChannelSelect;
use simtally_cli::commands::{self, CobaltAblation, PerturbChannel, StudyOverrides};
use simtally_cli::CliError;

#[derive(Parser)]
#[command(
    name = "simtally",
    about = "Tally-based similarity studies over image ensembles",
    version
)]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ChannelArg {
    Red,
    Green,
    Blue,
    Gray,
}

impl From<ChannelArg> for ChannelSelect {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Red => ChannelSelect::Red,
            ChannelArg::Green => ChannelSelect::Green,
            ChannelArg::Blue => ChannelSelect::Blue,
            ChannelArg::Gray => ChannelSelect::Gray,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate stochastic phantom ensembles.
    Phantom {
        #[command(subcommand)]
        model: PhantomCommand,
    },
    /// Perturb one channel of every image in an ensemble.
    Perturb {
        #[arg(long, value_enum)]
        channel: PerturbChannel,
        #[arg(long)]
        pct: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Feature extraction.
    Features {
        #[command(subcommand)]
        action: FeaturesCommand,
    },
    /// Derive tolerance intervals from archetype feature tables.
    Tolerance {
        #[command(subcommand)]
        scheme: ToleranceCommand,
    },
    /// Derive feature weights.
    Weights {
        #[command(subcommand)]
        scheme: WeightsCommand,
    },
    /// Two-dimensional PCA fitting and reconstruction.
    Pca2d {
        #[command(subcommand)]
        action: Pca2dCommand,
    },
    /// Batch study workflows.
    Study {
        #[command(subcommand)]
        workflow: StudyCommand,
    },
    /// Emit SVG plots from reports.
    Plot {
        #[command(subcommand)]
        kind: PlotCommand,
    },
}

#[derive(Subcommand)]
enum PhantomCommand {
    /// Correlated-background lumpy triple phantoms.
    Cobalt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Apply a whole-feature ablation while generating.
        #[arg(long, value_enum, default_value_t = CobaltAblation::None)]
        ablate: CobaltAblation,
    },
    /// Worley-noise soft-tissue phantoms.
    Wonost {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FeaturesCommand {
    /// Extract the per-ROI morphology + texture feature table.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ChannelArg::Gray)]
        channel: ChannelArg,
        /// GLCM pair distances (strictly increasing).
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8])]
        distances: Vec<usize>,
        #[arg(long, default_value_t = 16)]
        levels: u8,
    },
}

#[derive(Subcommand)]
enum ToleranceCommand {
    /// Null band of the Kolmogorov-Smirnov statistic over archetype folds.
    Ks {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 8)]
        folds: usize,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 0.05)]
        q_low: f64,
        #[arg(long, default_value_t = 0.95)]
        q_high: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Percent band around each archetype feature median.
    Percent {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        pct: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// KDE-intersection interval where archetype density dominates.
    Kde {
        #[arg(long)]
        archetype: PathBuf,
        #[arg(long)]
        subject: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum WeightsCommand {
    /// Importance-proportional weights from a random forest.
    Forest {
        #[arg(long)]
        archetype: PathBuf,
        #[arg(long)]
        subject: PathBuf,
        #[arg(long, default_value_t = 16)]
        top_k: usize,
        #[arg(long, default_value_t = 64)]
        trees: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Importance report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Base tolerance spec to reweight.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Emit the retained, reweighted tolerance spec here.
        #[arg(long)]
        spec_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Pca2dCommand {
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ChannelArg::Gray)]
        channel: ChannelArg,
    },
    /// Reconstruct with the full basis or the top-k components.
    Reconstruct {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, value_enum, default_value_t = ChannelArg::Gray)]
        channel: ChannelArg,
    },
    /// Reconstruct through a random rank-weighted component mask.
    DoseSim {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ChannelArg::Gray)]
        channel: ChannelArg,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "study_out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Whole-feature ablation study on phantom ensembles.
    Ablation(StudyArgs),
    /// Systematic channel-perturbation sweep.
    Perturb(StudyArgs),
    /// Archetype-vs-subject ensemble cross-similarity.
    Cross(StudyArgs),
    /// Intra-ensemble self-similarity with outlier banding.
    SelfSim(StudyArgs),
    /// Similarity-vs-distance agreement on paired reconstructions.
    Agreement(StudyArgs),
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Boxplot from a summary JSON's quantile groups.
    Box {
        #[arg(long)]
        summary: PathBuf,
        /// Plot only groups whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatterplot of two report CSV columns.
    Scatter {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Draw identity-line error band at this offset.
        #[arg(long)]
        band: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn require_config(args: &StudyArgs, workflow: &str) -> Result<PathBuf, CliError> {
    args.config.clone().ok_or_else(|| {
        CliError::Usage(format!("study {workflow} requires --config <file.json>"))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Phantom { model } => match model {
            PhantomCommand::Cobalt {
                config,
                count,
                seed,
                out,
                ablate,
            } => commands::phantom_cobalt(config.as_deref(), count, seed, &out, ablate),
            PhantomCommand::Wonost {
                config,
                count,
                seed,
                out,
            } => commands::phantom_wonost(config.as_deref(), count, seed, &out),
        },
        Command::Perturb {
            channel,
            pct,
            seed,
            input,
            out,
        } => commands::perturb(channel, pct, seed, &input, &out),
        Command::Features { action } => match action {
            FeaturesCommand::Extract {
                input,
                out,
                channel,
                distances,
                levels,
            } => commands::features_extract(&input, &out, channel.into(), &distances, levels),
        },
        Command::Tolerance { scheme } => match scheme {
            ToleranceCommand::Ks {
                features,
                folds,
                pairs,
                q_low,
                q_high,
                seed,
                out,
            } => commands::tolerance_ks(&features, folds, pairs, q_low, q_high, seed, &out),
            ToleranceCommand::Percent { features, pct, out } => {
                commands::tolerance_percent(&features, pct, &out)
            }
            ToleranceCommand::Kde {
                archetype,
                subject,
                out,
            } => commands::tolerance_kde(&archetype, &subject, &out),
        },
        Command::Weights { scheme } => match scheme {
            WeightsCommand::Forest {
                archetype,
                subject,
                top_k,
                trees,
                seed,
                out,
                spec,
                spec_out,
            } => commands::weights_forest(
                &archetype,
                &subject,
                top_k,
                trees,
                seed,
                &out,
                spec.as_deref(),
                spec_out.as_deref(),
            ),
        },
        Command::Pca2d { action } => match action {
            Pca2dCommand::Fit { input, out, channel } => {
                commands::pca2d_fit(&input, &out, channel.into())
            }
            Pca2dCommand::Reconstruct {
                model,
                input,
                out,
                components,
                channel,
            } => commands::pca2d_reconstruct(&model, &input, &out, components, channel.into()),
            Pca2dCommand::DoseSim {
                model,
                input,
                out,
                components,
                seed,
                channel,
            } => commands::pca2d_dose_sim(&model, &input, &out, components, seed, channel.into()),
        },
        Command::Study { workflow } => match workflow {
            StudyCommand::Ablation(args) => commands::study_ablation(
                args.config.as_deref(),
                &StudyOverrides {
                    seed: args.seed,
                    out: args.out.clone(),
                },
            ),
            StudyCommand::Perturb(args) => commands::study_perturbation(
                args.config.as_deref(),
                &StudyOverrides {
                    seed: args.seed,
                    out: args.out.clone(),
                },
            ),
            StudyCommand::Cross(args) => {
                let config = require_config(&args, "cross")?;
                commands::study_cross(
                    &config,
                    &StudyOverrides {
                        seed: args.seed,
                        out: args.out.clone(),
                    },
                )
            }
            StudyCommand::SelfSim(args) => {
                let config = require_config(&args, "self-sim")?;
                commands::study_self(
                    &config,
                    &StudyOverrides {
                        seed: args.seed,
                        out: args.out.clone(),
                    },
                )
            }
            StudyCommand::Agreement(args) => {
                let config = require_config(&args, "agreement")?;
                commands::study_agreement(
                    &config,
                    &StudyOverrides {
                        seed: args.seed,
                        out: args.out.clone(),
                    },
                )
            }
        },
        Command::Plot { kind } => match kind {
            PlotCommand::Box {
                summary,
                filter,
                out,
            } => commands::plot_box(&summary, filter.as_deref(), &out),
            PlotCommand::Scatter {
                report,
                x,
                y,
                band,
                out,
            } => commands::plot_scatter(&report, &x, &y, band.as_deref().copied(), &out),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
