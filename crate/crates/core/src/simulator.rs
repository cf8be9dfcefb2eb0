//! Synthetic ground truth, noisy odometry and labeled loop candidates.
//!
//! Every generator is a pure function of its spec and seed. Random draws come
//! from ChaCha8 streams keyed by `(seed, stream)`, so independent parts of a
//! run (odometry noise, candidate sampling) never share a sequence.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Tangent6};
use crate::graph::{diagonal_information, Information, LoopCandidate, PoseGraph, Trajectory};

/// Smallest keyframe-index gap between the two ends of any candidate.
pub const MIN_TEMPORAL_GAP: usize = 10;

/// Seconds between consecutive keyframes.
pub const KEYFRAME_PERIOD: f64 = 1.0;

const ODOMETRY_STREAM: u64 = 1;
const CANDIDATE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    /// Rectangular block whose first side is driven a second time.
    GridLoop,
    /// One full lap.
    Circle,
    /// Two tangent laps that meet at the origin.
    FigureEight,
    /// The grid block repeated on stacked floors joined by ramps.
    MultiFloorStack,
    /// Straight corridor, never revisited.
    Line,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::GridLoop,
        Shape::Circle,
        Shape::FigureEight,
        Shape::MultiFloorStack,
        Shape::Line,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Shape::GridLoop => "grid_loop",
            Shape::Circle => "circle",
            Shape::FigureEight => "figure_eight",
            Shape::MultiFloorStack => "multi_floor_stack",
            Shape::Line => "line",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Shape::ALL
            .into_iter()
            .find(|shape| shape.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown shape '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub shape: Shape,
    pub keyframe_count: usize,
    /// Arc length between consecutive keyframes, meters.
    pub keyframe_spacing: f64,
    /// Vertical distance between floors; multi-floor only.
    pub floor_height: f64,
    /// Number of floors; multi-floor only.
    pub floors: usize,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            shape: Shape::GridLoop,
            keyframe_count: 200,
            keyframe_spacing: 0.5,
            floor_height: 3.0,
            floors: 2,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.keyframe_count < 10 {
            return Err(Error::InvalidConfig(format!(
                "need at least 10 keyframes, got {}",
                self.keyframe_count
            )));
        }
        if !(self.keyframe_spacing > 0.0) || !self.keyframe_spacing.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "keyframe spacing must be positive, got {}",
                self.keyframe_spacing
            )));
        }
        if self.shape == Shape::MultiFloorStack {
            if !(self.floor_height > 0.0) || !self.floor_height.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "floor height must be positive, got {}",
                    self.floor_height
                )));
            }
            if self.floors == 0 {
                return Err(Error::InvalidConfig("need at least one floor".into()));
            }
        }
        Ok(())
    }

    /// Total path length; closed shapes end one spacing short of the start.
    pub fn path_length(&self) -> f64 {
        self.keyframe_count as f64 * self.keyframe_spacing
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Translational std-dev per keyframe step, meters per axis.
    pub sigma: f64,
    /// Rotational std-dev per axis is `rotation_ratio * sigma` radians.
    pub rotation_ratio: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl NoiseSpec {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            rotation_ratio: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        if !(self.rotation_ratio >= 0.0) || !self.rotation_ratio.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rotation ratio must be non-negative, got {}",
                self.rotation_ratio
            )));
        }
        Ok(())
    }

    pub fn rotation_sigma(&self) -> f64 {
        self.sigma * self.rotation_ratio
    }

    pub fn is_zero(&self) -> bool {
        self.sigma == 0.0
    }

    /// Inverse covariance matching this noise, identity when noise-free.
    pub fn information(&self) -> Information {
        if self.sigma > 0.0 && self.rotation_ratio > 0.0 {
            diagonal_information(self.sigma, self.rotation_sigma())
        } else {
            Information::identity()
        }
    }

    fn sampler(&self) -> Option<(Normal<f64>, Normal<f64>)> {
        if self.is_zero() {
            return None;
        }
        let t = Normal::new(0.0, self.sigma).expect("validated sigma");
        let r = Normal::new(0.0, self.rotation_sigma()).expect("validated ratio");
        Some((t, r))
    }
}

fn perturb(pose: &Pose, sampler: Option<&(Normal<f64>, Normal<f64>)>, rng: &mut impl Rng) -> Pose {
    match sampler {
        None => *pose,
        Some((t, r)) => {
            let rho = Vector3::from_fn(|_, _| t.sample(rng));
            let phi = Vector3::from_fn(|_, _| r.sample(rng));
            pose.compose(&Pose::exp(&Tangent6::new(rho, phi)))
        }
    }
}

/// How the measurement of a false candidate is spoofed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FalseLoopModel {
    /// The two places are reported as the same place.
    #[default]
    NearIdentity,
    /// The relative pose of some true revisit is reused.
    CopiedTrue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSpec {
    pub true_count: usize,
    pub false_count: usize,
    /// Ground-truth distance at or below which a pair is a true loop, meters.
    pub true_loop_radius: f64,
    /// Ground-truth distance at or above which a pair may be a false loop, meters.
    pub false_loop_min_distance: f64,
    pub measurement_noise: NoiseSpec,
    pub false_model: FalseLoopModel,
}

impl Default for CandidateSpec {
    fn default() -> Self {
        Self {
            true_count: 20,
            false_count: 20,
            true_loop_radius: 1.0,
            false_loop_min_distance: 10.0,
            measurement_noise: NoiseSpec::default(),
            false_model: FalseLoopModel::default(),
        }
    }
}

impl CandidateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.true_loop_radius > 0.0) || !(self.false_loop_min_distance > self.true_loop_radius) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < true_loop_radius < false_loop_min_distance, got {} and {}",
                self.true_loop_radius, self.false_loop_min_distance
            )));
        }
        self.measurement_noise.validate()
    }
}

/// ChaCha8 generator for `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of cell `index` under `base`, via the SplitMix64 finalizer.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug)]
enum Segment {
    Line {
        a: Vector3<f64>,
        b: Vector3<f64>,
    },
    /// Horizontal arc; `sweep` is signed, positive counter-clockwise.
    Arc {
        center: Vector3<f64>,
        radius: f64,
        start: f64,
        sweep: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { a, b } => (b - a).norm(),
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn pose_at(&self, u: f64) -> Pose {
        match *self {
            Segment::Line { a, b } => {
                let d = b - a;
                let p = a + d * (u / self.length());
                Pose::from_yaw(d.y.atan2(d.x), p)
            }
            Segment::Arc {
                center,
                radius,
                start,
                sweep,
            } => {
                let dir = sweep.signum();
                let theta = start + dir * u / radius;
                let p = center + Vector3::new(radius * theta.cos(), radius * theta.sin(), 0.0);
                Pose::from_yaw(theta + dir * PI / 2.0, p)
            }
        }
    }
}

fn lines(corners: &[Vector3<f64>]) -> Vec<Segment> {
    corners.windows(2).map(|w| Segment::Line { a: w[0], b: w[1] }).collect()
}

/// Corners of the `w` by `w/2` block, counter-clockwise from the origin.
fn block_corners(w: f64, z: f64) -> [Vector3<f64>; 4] {
    let h = w / 2.0;
    [
        Vector3::new(0.0, 0.0, z),
        Vector3::new(w, 0.0, z),
        Vector3::new(w, h, z),
        Vector3::new(0.0, h, z),
    ]
}

/// One lap of the block from corner `start`, then its first side again.
fn block(w: f64, z: f64, start: usize) -> Vec<Segment> {
    let c = block_corners(w, z);
    let path: Vec<_> = (0..6).map(|k| c[(start + k) % 4]).collect();
    lines(&path)
}

fn stack_length(w: f64, floors: usize, height: f64) -> f64 {
    4.0 * w * floors as f64 + (floors - 1) as f64 * (w / 2.0).hypot(height)
}

fn segments(spec: &ScenarioSpec) -> Result<Vec<Segment>> {
    let length = spec.path_length();
    let segs = match spec.shape {
        Shape::Line => lines(&[Vector3::zeros(), Vector3::new(length, 0.0, 0.0)]),
        Shape::Circle => {
            let radius = length / TAU;
            vec![Segment::Arc {
                center: Vector3::zeros(),
                radius,
                start: -PI / 2.0,
                sweep: TAU,
            }]
        }
        Shape::FigureEight => {
            let r = length / (2.0 * TAU);
            vec![
                Segment::Arc {
                    center: Vector3::new(0.0, r, 0.0),
                    radius: r,
                    start: -PI / 2.0,
                    sweep: TAU,
                },
                Segment::Arc {
                    center: Vector3::new(0.0, -r, 0.0),
                    radius: r,
                    start: PI / 2.0,
                    sweep: -TAU,
                },
            ]
        }
        Shape::GridLoop => block(length / 4.0, 0.0, 0),
        Shape::MultiFloorStack => {
            let (floors, height) = (spec.floors, spec.floor_height);
            if length <= (floors - 1) as f64 * height {
                return Err(Error::InvalidConfig(format!(
                    "path of {length} m cannot climb {} floors of {height} m",
                    floors - 1
                )));
            }
            let (mut lo, mut hi) = (0.0, length / (4.0 * floors as f64));
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if stack_length(mid, floors, height) < length {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let w = 0.5 * (lo + hi);
            // each floor starts where the previous ramp arrived, and the ramp
            // climbs along the side that follows the repeated one
            let mut segs = Vec::new();
            for f in 0..floors {
                let z = f as f64 * height;
                let start = (2 * f) % 4;
                segs.extend(block(w, z, start));
                if f + 1 < floors {
                    segs.push(Segment::Line {
                        a: block_corners(w, z)[(start + 1) % 4],
                        b: block_corners(w, z + height)[(start + 2) % 4],
                    });
                }
            }
            segs
        }
    };
    Ok(segs)
}

/// Keyframes spaced by `keyframe_spacing` of arc length along the shape,
/// heading along the direction of travel.
pub fn generate_ground_truth(spec: &ScenarioSpec) -> Result<Trajectory> {
    spec.validate()?;
    let segs = segments(spec)?;
    let mut poses = Vec::with_capacity(spec.keyframe_count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..spec.keyframe_count {
        let s = k as f64 * spec.keyframe_spacing;
        while seg + 1 < segs.len() && s >= seg_start + segs[seg].length() {
            seg_start += segs[seg].length();
            seg += 1;
        }
        let u = (s - seg_start).min(segs[seg].length());
        poses.push(segs[seg].pose_at(u));
    }
    Trajectory::from_poses(poses, 0.0, KEYFRAME_PERIOD)
}

/// Perturbs every relative motion by `exp(ξ)` with Gaussian `ξ` and chains
/// the result from the first ground-truth pose.
pub fn corrupt_odometry(gt: &Trajectory, noise: &NoiseSpec, seed: u64) -> Result<Trajectory> {
    noise.validate()?;
    let sampler = match noise.sampler() {
        None => return Ok(gt.clone()),
        Some(s) => s,
    };
    let mut rng = stream_rng(seed, ODOMETRY_STREAM);
    let pts = gt.points();
    let mut poses = Vec::with_capacity(pts.len());
    if let Some(first) = pts.first() {
        poses.push(first.pose);
    }
    for w in pts.windows(2) {
        let step = perturb(&w[0].pose.between(&w[1].pose), Some(&sampler), &mut rng);
        let next = poses.last().expect("seeded with first pose").compose(&step);
        poses.push(next);
    }
    gt.with_poses(&poses)
}

/// Index pairs `(i, j)`, `i > j + gap`, whose ground-truth distance passes `keep`.
fn pairs(gt: &Trajectory, keep: impl Fn(f64) -> bool) -> Vec<(usize, usize)> {
    let pos = gt.positions();
    let mut out = Vec::new();
    for i in 0..pos.len() {
        for j in 0..i.saturating_sub(MIN_TEMPORAL_GAP - 1) {
            if keep((pos[i] - pos[j]).norm()) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Samples labeled candidates without replacement. True loops carry the
/// noisy ground-truth relative pose; false loops join distant keyframes
/// with a spoofed measurement. Output is ordered by `(query_id, match_id)`.
pub fn generate_candidates(gt: &Trajectory, spec: &CandidateSpec, seed: u64) -> Result<Vec<LoopCandidate>> {
    spec.validate()?;
    let true_pool = pairs(gt, |d| d <= spec.true_loop_radius);
    let false_pool = pairs(gt, |d| d >= spec.false_loop_min_distance);
    for (what, want, have) in [
        ("true", spec.true_count, true_pool.len()),
        ("false", spec.false_count, false_pool.len()),
    ] {
        if want > have {
            return Err(Error::Unsatisfiable(format!(
                "requested {want} {what} loops but the trajectory offers {have} eligible pairs"
            )));
        }
    }

    let mut rng = stream_rng(seed, CANDIDATE_STREAM);
    let sampler = spec.measurement_noise.sampler();
    let pose = |i: usize| gt.points()[i].pose;
    let mut out = Vec::with_capacity(spec.true_count + spec.false_count);
    for k in rand::seq::index::sample(&mut rng, true_pool.len(), spec.true_count) {
        let (i, j) = true_pool[k];
        let m = perturb(&pose(i).between(&pose(j)), sampler.as_ref(), &mut rng);
        out.push(LoopCandidate::with_identity_information(i, j, m, Some(true))?);
    }
    for k in rand::seq::index::sample(&mut rng, false_pool.len(), spec.false_count) {
        let (i, j) = false_pool[k];
        let base = match spec.false_model {
            FalseLoopModel::CopiedTrue if !true_pool.is_empty() => {
                let (a, b) = true_pool[rng.random_range(0..true_pool.len())];
                pose(a).between(&pose(b))
            }
            _ => Pose::identity(),
        };
        let m = perturb(&base, sampler.as_ref(), &mut rng);
        out.push(LoopCandidate::with_identity_information(i, j, m, Some(false))?);
    }
    out.sort_by_key(|c| (c.query_id, c.match_id));
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSpec {
    pub scenario: ScenarioSpec,
    pub odometry_noise: NoiseSpec,
    pub candidates: CandidateSpec,
}

/// Everything one simulated run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedRun {
    pub ground_truth: Trajectory,
    pub odometry: Trajectory,
    /// Odometry chain weighted by the odometry noise.
    pub graph: PoseGraph,
    pub candidates: Vec<LoopCandidate>,
}

pub fn simulate(spec: &RunSpec) -> Result<SimulatedRun> {
    let seed = spec.scenario.seed;
    let ground_truth = generate_ground_truth(&spec.scenario)?;
    let odometry = corrupt_odometry(&ground_truth, &spec.odometry_noise, seed)?;
    let graph = PoseGraph::from_odometry(&odometry, &spec.odometry_noise.information())?;
    let candidates = generate_candidates(&ground_truth, &spec.candidates, seed)?;
    Ok(SimulatedRun {
        ground_truth,
        odometry,
        graph,
        candidates,
    })
}
