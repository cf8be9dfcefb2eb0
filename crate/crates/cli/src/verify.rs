use std::path::{Path, PathBuf};

use clap::ValueEnum;
use loopgate::io::{g2o, tables, tum};
use loopgate::verifier::{self, replay_sequential};
use loopgate::{SessionPrior, Trajectory, VerifierConfig};

use crate::manifest::{sidecar, Manifest};
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Prior {
    Corrected,
    Raw,
}

impl Prior {
    fn as_str(self) -> &'static str {
        match self {
            Self::Corrected => "corrected",
            Self::Raw => "raw",
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Odometry trajectory, TUM text or g2o (by `.g2o` extension).
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Acceptance threshold on the change score, meters.
    #[arg(long)]
    pub tau: f64,
    /// Verify candidates in arrival order against a trajectory corrected
    /// by earlier accepted loops.
    #[arg(long)]
    pub sequential: bool,
    /// Trajectory a sequential session verifies against.
    #[arg(long, value_enum, default_value_t = Prior::Corrected, requires = "sequential")]
    pub prior: Prior,
    /// Verdict CSV; a `.manifest.toml` is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Attaches the offending path to a core error, keeping its kind.
pub fn at(path: &Path) -> impl Fn(loopgate::Error) -> CliError + '_ {
    move |e| CliError::new(e.kind(), format!("{}: {e}", path.display()))
}

pub fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("g2o")) {
        let graph = g2o::read(path).map_err(at(path))?;
        let points = graph
            .nodes()
            .iter()
            .zip(graph.timestamps())
            .map(|(p, &t)| loopgate::TrajectoryPoint::new(t, *p))
            .collect();
        Trajectory::new(points).map_err(at(path))
    } else {
        tum::read(path).map_err(at(path))
    }
}

pub fn run(args: Args) -> CliResult<()> {
    let mut m = Manifest::new("verify");
    m.param("trajectory", args.trajectory.display().to_string())
        .param("candidates", args.candidates.display().to_string())
        .param("tau", args.tau)
        .switch("sequential", args.sequential);
    if args.sequential {
        m.param("prior", args.prior.as_str());
    }
    m.param("out", args.out.display().to_string());
    m.input("trajectory", &args.trajectory).input("candidates", &args.candidates);

    let outcome = verify(&args, &mut m);
    m.finish(Some(sidecar(&args.out)), outcome)
}

fn verify(args: &Args, m: &mut Manifest) -> CliResult<()> {
    let config = VerifierConfig::new(args.tau)?;
    let traj = read_trajectory(&args.trajectory)?;
    let candidates = tables::read_candidates(&args.candidates).map_err(at(&args.candidates))?;

    let verdicts = if args.sequential {
        let prior = match args.prior {
            Prior::Corrected => SessionPrior::Corrected,
            Prior::Raw => SessionPrior::RawOdometry,
        };
        replay_sequential(&traj, &candidates, &config, prior)?.1
    } else {
        candidates
            .iter()
            .map(|c| verifier::verify(&traj, c, &config))
            .collect::<loopgate::Result<Vec<_>>>()?
    };
    for v in &verdicts {
        if let Some(d) = &v.diagnostic {
            log::debug!("candidate {}->{}: {d}", v.candidate.query_id, v.candidate.match_id);
        }
    }
    let rows: Vec<_> = verdicts.iter().map(|v| v.to_row()).collect();
    tables::write_verdicts(&args.out, &rows)?;

    let accepted = rows.iter().filter(|r| r.accepted).count();
    m.stat("verified", rows.len() as i64).stat("accepted", accepted as i64);
    m.output("verdicts", &args.out);
    log::info!("accepted {accepted} of {} candidates", rows.len());
    Ok(())
}
