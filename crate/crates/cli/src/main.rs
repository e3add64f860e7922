use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asyncadmm::config::{config_dir, parse_seed_range, ProblemSource};
use asyncadmm::metrics::{fit_window, read_column};
use asyncadmm::{load_config, prepare, run_experiment, BenchmarkKind, CliError, ExperimentConfig, Result, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "asyncadmm", version, about = "Asynchronous ADMM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write CSVs plus summary.json.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config and the environment).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a config and build its problem without running it.
    Validate { config: PathBuf },
    /// Run a named benchmark.
    Bench(BenchArgs),
    /// Fit a log-log slope to one column of a metrics CSV.
    Slope {
        csv: PathBuf,
        #[arg(long)]
        column: String,
        /// Smallest iteration included (default: half of the last one).
        #[arg(long)]
        from: Option<u64>,
        /// Largest iteration included (default: the last one).
        #[arg(long)]
        to: Option<u64>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// consensus-quadratic, consensus-lad or lasso-toy
    name: String,
    /// Graph file, or cycle:N / path:N / complete:N / star:N.
    #[arg(long)]
    graph: Option<String>,
    /// Inclusive range a..b.
    #[arg(long, default_value = "0..0")]
    seeds: String,
    #[arg(long = "T")]
    iterations: u64,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    a: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    b: Option<Vec<f64>>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    box_bound: Option<f64>,
    #[arg(long)]
    z_bound: Option<f64>,
    #[arg(long)]
    shadow: bool,
    #[arg(long)]
    lyapunov: bool,
    #[arg(long)]
    ergodic: bool,
    /// Also compute the rate constants (implies --ergodic).
    #[arg(long)]
    rate_bound: bool,
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    flag.or_else(|| cfg.output.as_ref().map(|o| base.join(o)))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("asyncadmm-out"))
}

fn report(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<()> {
    let o = run_experiment(cfg, base, out)?;
    let s = &o.summary;
    println!("{}: T = {}, {} seed(s), beta = {}", s.problem, s.iterations, s.seeds.len(), s.beta);
    let last = s.mean.as_ref().map(|m| &m.last).unwrap_or(&s.runs[0].last);
    println!(
        "final: objective {} feasibility {}",
        last.objective, last.feasibility_violation
    );
    if let Some(e) = last.ergodic_feasibility {
        println!("final ergodic feasibility {e}");
    }
    if s.invariants.probed_steps > 0 {
        println!(
            "invariants: {} probed, freeze {}/{} shadow {}/{}",
            s.invariants.probed_steps,
            s.invariants.freeze_pass,
            s.invariants.probed_steps,
            s.invariants.shadow_pass,
            s.invariants.probed_steps
        );
    }
    if let Some(r) = &s.rate_bound {
        println!(
            "T * ergodic feasibility {} vs bound {}",
            r.scaled_feasibility.map(|v| v.to_string()).unwrap_or_default(),
            r.feasibility_bound
        );
    }
    println!("wrote {}", o.dir.display());
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let kind: BenchmarkKind = args.name.parse()?;
    let seeds = parse_seed_range(&args.seeds).map_err(CliError::Validation)?;
    let mut cfg = ExperimentConfig::new(
        args.iterations,
        ProblemSource {
            graph: args.graph,
            a: args.a,
            weights: args.weights,
            w: args.w,
            b: args.b,
            pi: args.pi,
            box_bound: args.box_bound,
            z_bound: args.z_bound,
            ..ProblemSource::generator(kind)
        },
    );
    cfg.beta = args.beta;
    cfg.seeds = seeds;
    cfg.stride = args.stride;
    cfg.probes.shadow = args.shadow;
    cfg.probes.lyapunov = args.lyapunov;
    cfg.probes.ergodic = args.ergodic || args.rate_bound;
    cfg.probes.rate_bound = args.rate_bound;
    let base = PathBuf::from(".");
    let out = output_dir(args.out, &cfg, &base);
    report(&cfg, &base, &out)
}

fn slope(csv: &Path, column: &str, from: Option<u64>, to: Option<u64>) -> Result<()> {
    let points = read_column(csv, column)?;
    let last = points.last().map(|p| p.0).unwrap_or(0);
    let to = to.unwrap_or(last);
    let from = from.unwrap_or((to / 2).max(1));
    let fit = fit_window(&points, from, to).ok_or_else(|| {
        CliError::Validation(format!(
            "column `{column}` has fewer than two positive values in [{from}, {to}]"
        ))
    })?;
    println!("slope {}", fit.slope);
    println!("intercept {}", fit.intercept);
    println!("points {}", fit.points);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let base = config_dir(&config);
            let out = output_dir(out, &cfg, &base);
            report(&cfg, &base, &out)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let p = prepare(&cfg, &config_dir(&config))?;
            println!(
                "ok: {}, {} blocks, {} rows, {} seed(s)",
                p.description,
                p.partition.num_blocks(),
                p.problem.num_rows(),
                cfg.seeds.len()
            );
            Ok(())
        }
        Command::Bench(args) => bench(args),
        Command::Slope { csv, column, from, to } => slope(&csv, &column, from, to),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
