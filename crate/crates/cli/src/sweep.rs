use std::fmt::Write;
use std::fs;
use std::path::PathBuf;

use loopgate::evaluation::percent;
use loopgate::io::{format_sig, write_atomic};
use loopgate::sweep::{run_sweep, SweepConfig, SweepResult};
use loopgate::{PrPoint, VerifierConfig};
use toml::Value;

use crate::manifest::Manifest;
use crate::simulate::ScenarioArgs;
use crate::svg::pr_plot;
use crate::{CliError, CliResult};

pub const THREADS_ENV: &str = "LOOPGATE_THREADS";

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Comma-separated odometry noise levels, meters per keyframe step.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.175")]
    pub sigmas: Vec<f64>,
    /// Runs per sigma.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Base seed; run j of every sigma uses the same derived seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Threshold for the accepted flags; does not change the curves.
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn thread_count() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::new(
                "invalid_config",
                format!("{THREADS_ENV} must be a positive integer, got '{v}'"),
            )),
        },
        Err(e) => Err(CliError::new("invalid_config", format!("{THREADS_ENV}: {e}"))),
    }
}

pub fn run(args: Args) -> CliResult<()> {
    let mut m = Manifest::new("sweep");
    args.scenario.record(&mut m);
    m.param("sigmas", Value::Array(args.sigmas.iter().map(|&s| s.into()).collect()))
        .param("seeds", args.seeds as i64)
        .param("seed", args.seed as i64)
        .param("tau", args.tau)
        .param("out", args.out.display().to_string());

    let outcome = sweep(&args, &mut m);
    m.finish(Some(args.out.join("manifest.toml")), outcome)
}

fn sweep(args: &Args, m: &mut Manifest) -> CliResult<()> {
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::new("io", format!("cannot create {}: {e}", args.out.display())))?;
    let config = SweepConfig {
        sigmas: args.sigmas.clone(),
        seeds: args.seeds,
        base_seed: args.seed,
        scenario: args.scenario.scenario(0),
        candidates: args.scenario.candidates(Default::default()),
        rotation_ratio: args.scenario.rotation_ratio,
        verifier: VerifierConfig::new(args.tau)?,
    };

    let threads = thread_count()?;
    let result = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::new("io", format!("cannot start worker threads: {e}")))?
            .install(|| run_sweep(&config)),
        None => run_sweep(&config),
    }?;
    m.stat("threads", threads.unwrap_or_else(rayon::current_num_threads) as i64);

    for s in &result.summaries {
        let path = args.out.join(format!("pr_sigma_{}.csv", s.sigma));
        write_atomic(&path, pr_csv(&s.pooled.curve).as_bytes())?;
        m.output(&format!("pr_sigma_{}", s.sigma), &path);
    }
    let summary = args.out.join("summary.csv");
    write_atomic(&summary, summary_csv(&result).as_bytes())?;
    let series: Vec<(f64, &[PrPoint])> = result
        .summaries
        .iter()
        .map(|s| (s.sigma, s.pooled.curve.as_slice()))
        .collect();
    let plot = args.out.join("pr.svg");
    write_atomic(&plot, pr_plot(&series).as_bytes())?;
    m.output("summary", &summary).output("plot", &plot);

    print!("{}", table(&result));
    Ok(())
}

/// Score at which each point is reached, with its precision and recall.
fn pr_csv(curve: &[PrPoint]) -> String {
    let mut s = String::from("score,precision,recall\n");
    for p in curve {
        let _ = writeln!(s, "{},{},{}", format_sig(-p.threshold), format_sig(p.precision), format_sig(p.recall));
    }
    s
}

fn summary_csv(result: &SweepResult) -> String {
    let mut s = String::from("sigma,AP,MR,mean_AP,stderr_AP,positives,negatives,calibrated_tau\n");
    for r in &result.summaries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.sigma,
            percent(r.pooled.average_precision),
            percent(r.pooled.max_recall),
            percent(r.mean_ap),
            percent(r.stderr_ap),
            r.pooled.positives,
            r.pooled.negatives,
            r.calibrated_tau.map(format_sig).unwrap_or_default()
        );
    }
    s
}

fn table(result: &SweepResult) -> String {
    let mut s = format!("{:>8} {:>7} {:>7} {:>14}\n", "sigma", "AP", "MR", "tau");
    for r in &result.summaries {
        let _ = writeln!(
            s,
            "{:>8} {:>7} {:>7} {:>14}",
            r.sigma,
            percent(r.pooled.average_precision),
            percent(r.pooled.max_recall),
            r.calibrated_tau.map(format_sig).unwrap_or_else(|| "-".into())
        );
    }
    s
}
