//! `hetclust` command-line tool.
//!
//! Exit status: 0 when clustering completes without rejection, 10 when the
//! homogeneity null is rejected, 1 on usage or input errors. The curve
//! commands exit 0 on success.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hetclust::engine::{run_clustering, ClusteringConfig, ThresholdPolicy};
use hetclust::io::{read_metrics, write_fpr_table, write_power_table, InputKind, ResultDocument};
use hetclust::simulation::{
    fpr_curve, power_curve, unit_grid, Continent, NullStudy, SimulationSpec, DEFAULT_MEMBERS_PER_ARM, DEFAULT_NOISE_SD,
    DEFAULT_SEED,
};
use hetclust::{LikelihoodRatio, RateKind};
use serde::Deserialize;

const EXIT_REJECTED: u8 = 10;

#[derive(Parser, Debug)]
#[command(
    name = "hetclust",
    version,
    about = "Detect heterogeneous groups with likelihood-ratio agglomerative clustering"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster groups from a delimited input file and write a JSON result document.
    Cluster(ClusterArgs),
    /// Monte Carlo exact-recovery curve for the two-continent experiment.
    PowerCurve(PowerArgs),
    /// Monte Carlo false rejection rate under the null, per significance level.
    FprCurve(FprArgs),
}

#[derive(Args, Debug)]
struct Testing {
    /// Significance level. The choice is subjective and left to the practitioner.
    #[arg(long, env = "HETCLUST_ALPHA")]
    alpha: Option<f64>,
    /// Stopping threshold: per-k (alpha/K) or bonferroni-k2 (alpha/K^2).
    #[arg(long, env = "HETCLUST_POLICY")]
    policy: Option<ThresholdPolicy>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    /// Input file with a header row; `-` reads standard input.
    #[arg(long)]
    input: PathBuf,
    /// summary (group_id,estimate,sd), raw_ab (group_id,arm,outcome) or
    /// classifier (group_id,label,classification).
    #[arg(long, default_value = "summary")]
    kind: InputKind,
    /// Rate compared across groups for classifier input.
    #[arg(long)]
    metric: Option<RateKind>,
    #[command(flatten)]
    testing: Testing,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Output path for the result document; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PowerArgs {
    /// TOML file with any of the fields accepted as flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Roster preset: desk (20+20) or full (48+54).
    #[arg(long, value_parser = ["desk", "full"])]
    preset: Option<String>,
    #[arg(long)]
    asia: Option<usize>,
    #[arg(long)]
    africa: Option<usize>,
    #[arg(long)]
    members_per_arm: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Number of equispaced effect sizes on [0, 1].
    #[arg(long, conflicts_with = "mu_grid")]
    points: Option<usize>,
    /// Explicit comma-separated effect sizes.
    #[arg(long, value_delimiter = ',')]
    mu_grid: Option<Vec<f64>>,
    #[arg(long, env = "HETCLUST_REPLICATIONS")]
    replications: Option<usize>,
    #[arg(long, env = "HETCLUST_SEED")]
    seed: Option<u64>,
    #[command(flatten)]
    testing: Testing,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct PowerFile {
    preset: Option<String>,
    asia: Option<usize>,
    africa: Option<usize>,
    members_per_arm: Option<usize>,
    noise_sd: Option<f64>,
    points: Option<usize>,
    mu_grid: Option<Vec<f64>>,
    replications: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    policy: Option<String>,
}

#[derive(Args, Debug)]
struct FprArgs {
    #[arg(long, default_value_t = 21)]
    groups: usize,
    /// Comma-separated significance levels.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.001,0.005,0.01,0.05,0.1,0.2,0.3,0.4,0.5"
    )]
    alpha_grid: Vec<f64>,
    #[arg(long, env = "HETCLUST_REPLICATIONS", default_value_t = 2000)]
    replications: usize,
    #[arg(long, env = "HETCLUST_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MEMBERS_PER_ARM)]
    members_per_arm: usize,
    #[arg(long, default_value_t = DEFAULT_NOISE_SD)]
    noise_sd: f64,
    #[arg(long, env = "HETCLUST_POLICY")]
    policy: Option<ThresholdPolicy>,
    #[arg(long)]
    out: Option<PathBuf>,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Cluster(args) => cluster(args),
        Command::PowerCurve(args) => power(args).map(|()| ExitCode::SUCCESS),
        Command::FprCurve(args) => fpr(args).map(|()| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn delimiter_byte(c: char) -> CliResult<u8> {
    u8::try_from(c).map_err(|_| format!("delimiter `{c}` is not a single-byte character").into())
}

fn cluster(args: ClusterArgs) -> CliResult<ExitCode> {
    let config = ClusteringConfig::new(
        args.testing.alpha.unwrap_or(0.05),
        args.testing.policy.unwrap_or_default(),
    )?;
    let delimiter = delimiter_byte(args.delimiter)?;
    let input: Box<dyn Read> = if args.input.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        let file = File::open(&args.input).map_err(|e| format!("{}: {e}", args.input.display()))?;
        Box::new(BufReader::new(file))
    };
    let metrics = read_metrics(input, args.kind, args.metric, delimiter)?;
    let result = run_clustering(&metrics, &LikelihoodRatio, &config)?;
    let doc = ResultDocument::new(&result, &config, metrics.len(), Some(args.kind), args.metric);

    let mut out = output(args.out.as_deref())?;
    writeln!(out, "{}", doc.to_json()?)?;
    out.flush()?;

    eprintln!(
        "{} groups, {} clusters, {}",
        metrics.len(),
        doc.clusters.len(),
        if doc.rejected {
            "homogeneity rejected"
        } else {
            "homogeneity not rejected"
        }
    );
    Ok(if doc.rejected {
        ExitCode::from(EXIT_REJECTED)
    } else {
        ExitCode::SUCCESS
    })
}

fn power(args: PowerArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            toml::from_str::<PowerFile>(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => PowerFile::default(),
    };

    let preset = args.preset.or(file.preset).unwrap_or_else(|| "desk".into());
    let mut spec = match preset.as_str() {
        "desk" => SimulationSpec::desk_preset(),
        "full" => SimulationSpec::full_preset(),
        other => return Err(format!("unknown preset `{other}` (expected desk or full)").into()),
    };
    let asia = args.asia.or(file.asia);
    let africa = args.africa.or(file.africa);
    let members = args.members_per_arm.or(file.members_per_arm);
    if asia.is_some() || africa.is_some() || members.is_some() {
        let count = |c| spec.groups.iter().filter(|g| g.continent == c).count();
        let template = SimulationSpec::two_continents(
            asia.unwrap_or(count(Continent::Asia)),
            africa.unwrap_or(count(Continent::Africa)),
            members.unwrap_or(DEFAULT_MEMBERS_PER_ARM),
        );
        spec.groups = template.groups;
    }
    if let Some(sd) = args.noise_sd.or(file.noise_sd) {
        spec.noise_sd = sd;
    }
    if let Some(n) = args.replications.or(file.replications) {
        spec.replications = n;
    }
    if let Some(seed) = args.seed.or(file.seed) {
        spec.seed = seed;
    }
    if let Some(alpha) = args.testing.alpha.or(file.alpha) {
        spec.alpha = alpha;
    }
    spec.threshold_policy = match (args.testing.policy, file.policy) {
        (Some(p), _) => p,
        (None, Some(p)) => p.parse()?,
        (None, None) => ThresholdPolicy::default(),
    };

    let grid = match (args.mu_grid, args.points) {
        (Some(grid), _) => grid,
        (None, Some(n)) => unit_grid(n),
        (None, None) => match (file.mu_grid, file.points) {
            (Some(grid), _) => grid,
            (None, n) => unit_grid(n.unwrap_or(20)),
        },
    };
    if grid.is_empty() {
        return Err("the effect-size grid is empty".into());
    }

    let curve = power_curve(&spec, &grid)?;
    let mut out = output(args.out.as_deref())?;
    write_power_table(&mut out, &curve)?;
    out.flush()?;
    Ok(())
}

fn fpr(args: FprArgs) -> CliResult<()> {
    let mut study = NullStudy::new(args.groups, args.replications, args.seed);
    study.members_per_arm = args.members_per_arm;
    study.noise_sd = args.noise_sd;
    study.threshold_policy = args.policy.unwrap_or_default();
    let curve = fpr_curve(&study, &args.alpha_grid)?;
    let mut out = output(args.out.as_deref())?;
    write_fpr_table(&mut out, &curve)?;
    out.flush()?;
    Ok(())
}
