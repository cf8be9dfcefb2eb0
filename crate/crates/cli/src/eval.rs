use std::path::PathBuf;

use clap::ValueEnum;
use loopgate::evaluation::{ate_rmse, classification_report, percent, temporal_ate};
use loopgate::io::{format_sig, tables, write_atomic};
use loopgate::{AlignmentMode, ScoredLabel};

use crate::manifest::{sidecar, Manifest};
use crate::verify::{at, read_trajectory};
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Align {
    Sim3,
    Se3,
}

impl From<Align> for AlignmentMode {
    fn from(a: Align) -> Self {
        match a {
            Align::Sim3 => AlignmentMode::Sim3,
            Align::Se3 => AlignmentMode::Se3,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Labeled verdict CSV; reports AP and MR in percent.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Estimated trajectory; reports ATE and tATE against --gt.
    #[arg(long, requires = "gt")]
    pub est: Option<PathBuf>,
    #[arg(long, requires = "est")]
    pub gt: Option<PathBuf>,
    /// Number of tATE checkpoints.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Align::Sim3)]
    pub align: Align,
    /// Metrics CSV (`metric,value`); a `.manifest.toml` is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult<()> {
    let mut m = Manifest::new("eval");
    for (flag, path) in [("verdicts", &args.verdicts), ("est", &args.est), ("gt", &args.gt)] {
        if let Some(p) = path {
            m.param(flag, p.display().to_string()).input(flag, p);
        }
    }
    m.param("k", args.k as i64).param(
        "align",
        match args.align {
            Align::Sim3 => "sim3",
            Align::Se3 => "se3",
        },
    );
    if let Some(out) = &args.out {
        m.param("out", out.display().to_string());
    }

    let outcome = evaluate(&args, &mut m);
    m.finish(args.out.as_deref().map(sidecar), outcome)
}

fn evaluate(args: &Args, m: &mut Manifest) -> CliResult<()> {
    if args.verdicts.is_none() && args.est.is_none() {
        return Err(CliError::new("usage", "eval needs --verdicts and/or --est with --gt"));
    }
    let mut metrics: Vec<(String, String)> = Vec::new();
    let mut report = String::new();

    if let Some(path) = &args.verdicts {
        let rows = tables::read_verdicts(path).map_err(at(path))?;
        let unlabeled = rows.iter().filter(|r| r.label.is_none()).count();
        if unlabeled > 0 {
            log::warn!("{unlabeled} unlabeled verdicts ignored");
        }
        let items: Vec<ScoredLabel> = rows.iter().filter_map(ScoredLabel::from_row).collect();
        let r = classification_report(&items)?;
        metrics.push(("AP".into(), percent(r.average_precision)));
        metrics.push(("MR".into(), percent(r.max_recall)));
        metrics.push(("positives".into(), r.positives.to_string()));
        metrics.push(("negatives".into(), r.negatives.to_string()));
        report.push_str(&format!("AP,{}\nMR,{}\n", percent(r.average_precision), percent(r.max_recall)));
    }

    if let (Some(est_path), Some(gt_path)) = (&args.est, &args.gt) {
        let est = read_trajectory(est_path)?;
        let gt = read_trajectory(gt_path)?;
        let mode = args.align.into();
        let ate = ate_rmse(&est, &gt, mode)?;
        let t = temporal_ate(&est, &gt, args.k, mode)?;
        metrics.push(("ATE".into(), format_sig(ate)));
        let names = t.column_names();
        let values: Vec<String> = t.values().into_iter().map(format_sig).collect();
        for (n, v) in names.iter().zip(&values) {
            metrics.push((n.clone(), v.clone()));
        }
        report.push_str(&format!("ATE,{}\n", format_sig(ate)));
        report.push_str(&names.join(","));
        report.push('\n');
        report.push_str(&values.join(","));
        report.push('\n');
    }

    if let Some(out) = &args.out {
        write_atomic(out, tables::metrics_to_string(&metrics)?.as_bytes())?;
        m.output("metrics", out);
    }
    print!("{report}");
    Ok(())
}
