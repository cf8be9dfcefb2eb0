use std::fs;
use std::path::PathBuf;

use clap::ValueEnum;
use loopgate::io::{g2o, tables, tum};
use loopgate::simulator::{simulate, FalseLoopModel};
use loopgate::{CandidateSpec, NoiseSpec, RunSpec, ScenarioSpec, Shape};

use crate::manifest::Manifest;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FalseModel {
    NearIdentity,
    CopiedTrue,
}

impl FalseModel {
    fn as_str(self) -> &'static str {
        match self {
            Self::NearIdentity => "near-identity",
            Self::CopiedTrue => "copied-true",
        }
    }
}

impl From<FalseModel> for FalseLoopModel {
    fn from(m: FalseModel) -> Self {
        match m {
            FalseModel::NearIdentity => FalseLoopModel::NearIdentity,
            FalseModel::CopiedTrue => FalseLoopModel::CopiedTrue,
        }
    }
}

/// Scenario flags shared with `sweep`.
#[derive(clap::Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// grid_loop, circle, figure_eight, multi_floor_stack or line.
    #[arg(long, default_value = "grid_loop")]
    pub shape: Shape,
    #[arg(long, default_value_t = 200)]
    pub keyframes: usize,
    /// Path length between keyframes, meters.
    #[arg(long, default_value_t = 0.5)]
    pub spacing: f64,
    #[arg(long, default_value_t = 2)]
    pub floors: usize,
    /// Meters between floors.
    #[arg(long, default_value_t = 3.0)]
    pub floor_height: f64,
    #[arg(long, default_value_t = 20)]
    pub true_loops: usize,
    #[arg(long, default_value_t = 20)]
    pub false_loops: usize,
    /// Ground-truth distance within which a pair counts as a true loop, meters.
    #[arg(long, default_value_t = 1.0)]
    pub true_radius: f64,
    /// Minimum ground-truth distance of a false-loop pair, meters.
    #[arg(long, default_value_t = 10.0)]
    pub false_distance: f64,
    #[arg(long, value_enum, default_value_t = FalseModel::NearIdentity)]
    pub false_model: FalseModel,
    /// Rotational noise std as a fraction of sigma (radians per meter).
    #[arg(long, default_value_t = 0.1)]
    pub rotation_ratio: f64,
}

impl ScenarioArgs {
    pub fn scenario(&self, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            shape: self.shape,
            keyframe_count: self.keyframes,
            keyframe_spacing: self.spacing,
            floor_height: self.floor_height,
            floors: self.floors,
            seed,
        }
    }

    pub fn candidates(&self, measurement_noise: NoiseSpec) -> CandidateSpec {
        CandidateSpec {
            true_count: self.true_loops,
            false_count: self.false_loops,
            true_loop_radius: self.true_radius,
            false_loop_min_distance: self.false_distance,
            measurement_noise,
            false_model: self.false_model.into(),
        }
    }

    pub fn record(&self, m: &mut Manifest) {
        m.param("shape", self.shape.as_str())
            .param("keyframes", self.keyframes as i64)
            .param("spacing", self.spacing)
            .param("floors", self.floors as i64)
            .param("floor-height", self.floor_height)
            .param("true-loops", self.true_loops as i64)
            .param("false-loops", self.false_loops as i64)
            .param("true-radius", self.true_radius)
            .param("false-distance", self.false_distance)
            .param("false-model", self.false_model.as_str())
            .param("rotation-ratio", self.rotation_ratio);
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Odometry translational noise per keyframe step, meters.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Loop measurement noise; defaults to --sigma.
    #[arg(long)]
    pub loop_sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: Args) -> CliResult<()> {
    let loop_sigma = args.loop_sigma.unwrap_or(args.sigma);
    let mut m = Manifest::new("simulate");
    args.scenario.record(&mut m);
    m.param("sigma", args.sigma)
        .param("loop-sigma", loop_sigma)
        .param("seed", args.seed as i64)
        .param("out", args.out.display().to_string());

    let outcome = generate(&args, loop_sigma, &mut m);
    m.finish(Some(args.out.join("manifest.toml")), outcome)
}

fn generate(args: &Args, loop_sigma: f64, m: &mut Manifest) -> CliResult<()> {
    let noise = |sigma| NoiseSpec {
        sigma,
        rotation_ratio: args.scenario.rotation_ratio,
    };
    let spec = RunSpec {
        scenario: args.scenario.scenario(args.seed),
        odometry_noise: noise(args.sigma),
        candidates: args.scenario.candidates(noise(loop_sigma)),
    };
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::new("io", format!("cannot create {}: {e}", args.out.display())))?;
    let run = simulate(&spec)?;

    let gt = args.out.join("ground_truth.tum");
    let odo = args.out.join("odometry.tum");
    let graph = args.out.join("odometry.g2o");
    let cands = args.out.join("candidates.csv");
    tum::write(&gt, &run.ground_truth)?;
    tum::write(&odo, &run.odometry)?;
    g2o::write(&graph, &run.graph)?;
    tables::write_candidates(&cands, &run.candidates)?;

    let true_count = run.candidates.iter().filter(|c| c.label == Some(true)).count();
    m.stat("keyframes_written", run.odometry.len() as i64)
        .stat("true_loops_written", true_count as i64)
        .stat("false_loops_written", (run.candidates.len() - true_count) as i64);
    m.output("ground_truth", &gt)
        .output("odometry", &odo)
        .output("graph", &graph)
        .output("candidates", &cands);
    log::info!("wrote {} keyframes and {} candidates to {}", run.odometry.len(), run.candidates.len(), args.out.display());
    Ok(())
}
