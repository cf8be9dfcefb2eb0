//! Loop-closure verification by trajectory change.
//!
//! A loop candidate is added to a pose graph built from odometry, the graph
//! is optimized, and the loop is accepted only if the optimized trajectory
//! stays close to the prior one after similarity alignment.

pub mod align;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod simulator;
pub mod solver;
pub mod sweep;
pub mod verifier;

pub use align::{AlignmentMode, AlignmentResult, Degeneracy, PointCloudPair};
pub use error::{Error, Result};
pub use evaluation::{PrPoint, ScoredLabel, TemporalAte};
pub use geometry::{Pose, SimTransform, Tangent6};
pub use graph::{Edge, EdgeKind, Information, LoopCandidate, PoseGraph, Trajectory, TrajectoryPoint};
pub use simulator::{CandidateSpec, NoiseSpec, RunSpec, ScenarioSpec, Shape};
pub use solver::{SolveReport, SolverConfig, TerminationReason};
pub use verifier::{SessionPrior, SessionState, VerdictRecord, VerifierConfig};
