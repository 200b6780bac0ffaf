use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggfc_core::bench::{run_bench, BenchReport};
use aggfc_core::certify::{run_suite, Suite};
use aggfc_core::config::{ConfigOverrides, EtaModeOverride, ExperimentConfig};
use aggfc_core::evaluation::WeightTrace;
use aggfc_core::io;
use aggfc_core::predictors::bank_size;
use aggfc_core::tvar::simulate_tvar;
use aggfc_core::{Error, Strategy};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_CONFIG: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "aggfc",
    version,
    about = "Aggregated forecasting of time-varying AR processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the parameter paths and one realization.
    Simulate(Common),
    /// Run the Monte Carlo experiment and write loss tables and plot data.
    Run {
        #[command(flatten)]
        common: Common,
        /// Worker threads for replications.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run a seeded property suite.
    Check {
        #[arg(value_parser = parse_suite, default_value = "all")]
        suite: Suite,
        /// Directory for offending instances.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the streaming loop for growing T and N.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Timing repeats per point (the fastest is kept).
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, env = "AGGFC_SEED")]
    seed: Option<u64>,
    /// Overrides the horizon T.
    #[arg(long = "T", alias = "horizon")]
    horizon: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long, value_enum)]
    eta_mode: Option<EtaModeArg>,
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaModeArg {
    Corollary,
    Adaptive,
    Manual,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Error paired with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Unstable(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: message.into(),
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        let overrides = ConfigOverrides {
            seed: self.seed,
            horizon: self.horizon,
            replications: self.replications,
            strategies: self.strategy.map(|s| match s {
                StrategyArg::One => vec![Strategy::Gradient],
                StrategyArg::Two => vec![Strategy::Loss],
                StrategyArg::Both => Strategy::ALL.to_vec(),
            }),
            eta_mode: self.eta_mode.map(|m| match m {
                EtaModeArg::Corollary => EtaModeOverride::Corollary,
                EtaModeArg::Adaptive => EtaModeOverride::Adaptive,
                EtaModeArg::Manual => EtaModeOverride::Manual,
            }),
            eta: self.eta,
        };
        cfg.apply(&overrides)?;
        Ok(cfg)
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn simulate(args: &Common) -> Result<(), Failure> {
    let cfg = args.load()?;
    let params = cfg.build_params()?;
    let real = simulate_tvar(&params, cfg.horizon, cfg.innovations, cfg.base_seed)?;
    out_dir(&args.out)?;
    io::write_params_csv(create(&args.out, "params.csv")?, &params)?;
    io::write_realization_csv(create(&args.out, "realization.csv")?, &real)?;

    let n = real.x.len() as f64;
    let mean = real.x.iter().sum::<f64>() / n;
    let var = real.x.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let max_abs = real.x.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    println!("T = {}", cfg.horizon);
    println!("d = {}", cfg.d);
    println!("max|X| = {max_abs}");
    println!("sample variance = {var}");
    Ok(())
}

fn run(args: &Common, jobs: usize) -> Result<(), Failure> {
    let cfg = args.load()?;
    let exp = cfg.build()?;
    out_dir(&args.out)?;
    let report = exp.run(jobs.max(1))?;

    io::write_replications_csv(create(&args.out, "replications.csv")?, &report)?;
    io::write_summary_csv(create(&args.out, "summary.csv")?, &report)?;
    io::write_plot_data(create(&args.out, "boxplot.json")?, &report)?;
    io::write_boxplot_svg(create(&args.out, "boxplot.svg")?, &report)?;

    // weight trajectories of the first replication
    let traces: Vec<WeightTrace> = match exp.run_replication(0, true) {
        Ok((_, traces)) => traces,
        Err(_) => Vec::new(),
    };
    for trace in &traces {
        let name = format!("weights_{}.csv", trace.strategy.label());
        io::write_weights_csv(create(&args.out, &name)?, trace)?;
    }

    let manifest = json!({
        "config": cfg,
        "etas": report.etas,
        "bank": report.bank,
        "replications_requested": exp.replications,
        "replications_completed": report.records.len(),
        "failures": report.failures,
    });
    let mut f = create(&args.out, "MANIFEST.json")?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(Error::from)?;

    for (id, s) in report.predictor_ids.iter().zip(&report.summary) {
        println!(
            "{id:>14}  median L_T = {:.5}  IQR = {:.5}",
            s.median,
            s.iqr()
        );
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!(
                "replication {} (seed {}) failed: {}",
                f.replication, f.seed, f.message
            );
        }
        return Err(runtime(format!(
            "{} of {} replications failed, see MANIFEST.json",
            report.failures.len(),
            exp.replications
        )));
    }
    Ok(())
}

fn check(suite: Suite, out: Option<&Path>) -> Result<(), Failure> {
    let reports = run_suite(suite)?;
    let mut failed = false;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {}: {}/{} checks passed (worst {:e})",
            r.name,
            r.checks - r.violations,
            r.checks,
            r.worst
        );
        if !r.passed() {
            failed = true;
            let dir = out.unwrap_or(Path::new("."));
            out_dir(dir)?;
            let name = format!("offending_{}.json", r.name);
            let mut f = create(dir, &name)?;
            serde_json::to_writer_pretty(&mut f, &r.offending).map_err(Error::from)?;
            eprintln!(
                "offending instances written to {}",
                dir.join(name).display()
            );
        }
    }
    if failed {
        return Err(Failure {
            code: EXIT_VIOLATION,
            message: "property violations found".into(),
        });
    }
    Ok(())
}

fn bench(config: Option<&Path>, repeats: usize) -> Result<(), Failure> {
    let (d, n) = match config {
        Some(path) => {
            let cfg = ExperimentConfig::from_file(path)?;
            (cfg.d, bank_size(cfg.horizon, cfg.bank.beta_0)?)
        }
        None => (3, 7),
    };
    let report: BenchReport = run_bench(d, n, repeats)?;
    for row in &report.rows {
        println!(
            "d = {} N = {:>3} T = {:>6}  {:.4} s  {:.1} ns/step",
            row.d, row.n, row.horizon, row.seconds, row.ns_per_step
        );
    }
    println!("T x16 time ratio   = {:.2} (limit 24)", report.t16_ratio);
    println!(
        "T x2 time ratio    = {:.2} (limit 2.5)",
        report.t_doubling_ratio
    );
    println!(
        "N x2 time ratio    = {:.2} (limit 2.5)",
        report.n_doubling_ratio
    );
    if !report.passed() {
        return Err(Failure {
            code: EXIT_VIOLATION,
            message: "scaling limits exceeded".into(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors share the config-error exit code; 2 is reserved for
    // property violations
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Run { common, jobs } => run(common, *jobs),
        Command::Check { suite, out } => check(*suite, out.as_deref()),
        Command::Bench { config, repeats } => bench(config.as_deref(), *repeats),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
