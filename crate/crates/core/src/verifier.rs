//! Loop verification by trajectory change.
//!
//! A candidate is added to the odometry pose graph and optimized. If the
//! solve converges, the translational trajectories before and after are
//! aligned with a similarity transform and the residual RMSE is the score;
//! the loop is accepted when the score does not exceed `threshold_tau`.
//! A solve that does not converge is always rejected.

use rayon::prelude::*;

use crate::align::{align, AlignmentMode, Degeneracy, PointCloudPair, MIN_POINTS};
use crate::error::{Error, Result};
use crate::graph::{Information, LoopCandidate, PoseGraph, Trajectory, TrajectoryPoint};
use crate::io::VerdictRow;
use crate::solver::{optimize, SolveReport, SolverConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct VerifierConfig {
    /// Largest accepted change score, in meters.
    pub threshold_tau: f64,
    pub solver: SolverConfig,
    /// Information matrix for every odometry edge built from a trajectory.
    pub odometry_information: Information,
}

impl VerifierConfig {
    pub fn new(threshold_tau: f64) -> Result<Self> {
        let config = Self {
            threshold_tau,
            solver: SolverConfig::default(),
            odometry_information: Information::identity(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_tau > 0.0) || !self.threshold_tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "threshold tau must be a positive number of meters, got {}",
                self.threshold_tau
            )));
        }
        self.solver.validate()
    }

    /// Non-converged solves are always rejected.
    pub fn reject_on_nonconvergence(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRecord {
    pub candidate: LoopCandidate,
    /// Change score in meters; `None` when the solve failed or alignment was impossible.
    pub score: Option<f64>,
    pub converged: bool,
    pub accepted: bool,
    pub solve_report: Option<SolveReport>,
    pub degeneracy: Option<Degeneracy>,
    pub diagnostic: Option<String>,
}

impl VerdictRecord {
    fn rejected(candidate: &LoopCandidate, report: Option<SolveReport>, diagnostic: impl Into<String>) -> Self {
        Self {
            candidate: candidate.clone(),
            score: None,
            converged: report.as_ref().is_some_and(|r| r.converged),
            accepted: false,
            solve_report: report,
            degeneracy: None,
            diagnostic: Some(diagnostic.into()),
        }
    }

    pub fn to_row(&self) -> VerdictRow {
        VerdictRow {
            query_id: self.candidate.query_id,
            match_id: self.candidate.match_id,
            score: self.score,
            converged: self.converged,
            accepted: self.accepted,
            label: self.candidate.label,
        }
    }
}

/// Scores `candidate` against `traj` and returns the verdict together with
/// the optimized trajectory when the solve converged.
fn evaluate(
    traj: &Trajectory,
    candidate: &LoopCandidate,
    config: &VerifierConfig,
) -> Result<(VerdictRecord, Option<Trajectory>)> {
    config.validate()?;
    if candidate.query_id >= traj.len() {
        return Err(Error::InvalidCandidate(format!(
            "candidate {}->{} references keyframe {} but the trajectory has {}",
            candidate.query_id,
            candidate.match_id,
            candidate.query_id,
            traj.len()
        )));
    }
    if traj.len() < MIN_POINTS {
        let msg = format!("trajectory has {} keyframes, need {MIN_POINTS}", traj.len());
        return Ok((VerdictRecord::rejected(candidate, None, msg), None));
    }

    let graph = PoseGraph::from_odometry(traj, &config.odometry_information)?;
    let (optimized, report) = optimize(&graph, Some(candidate), &config.solver)?;
    if !report.converged {
        let msg = format!("pose-graph optimization stopped: {}", report.termination_reason.as_str());
        return Ok((VerdictRecord::rejected(candidate, Some(report), msg), None));
    }

    let pair = PointCloudPair::new(traj.positions(), optimized.positions())?;
    match align(&pair, AlignmentMode::Sim3) {
        Ok(aligned) => {
            let accepted = aligned.rmse <= config.threshold_tau;
            let record = VerdictRecord {
                candidate: candidate.clone(),
                score: Some(aligned.rmse),
                converged: true,
                accepted,
                solve_report: Some(report),
                degeneracy: aligned.degeneracy,
                diagnostic: None,
            };
            Ok((record, Some(optimized)))
        }
        Err(Error::DegenerateAlignment(msg)) => Ok((
            VerdictRecord::rejected(candidate, Some(report), format!("degenerate alignment: {msg}")),
            Some(optimized),
        )),
        Err(e) => Err(e),
    }
}

/// Verifies one candidate against a frozen trajectory. The trajectory is not modified.
pub fn verify(traj: &Trajectory, candidate: &LoopCandidate, config: &VerifierConfig) -> Result<VerdictRecord> {
    evaluate(traj, candidate, config).map(|(v, _)| v)
}

/// Verifies every candidate independently against the same trajectory.
/// Output order matches input order.
pub fn verify_batch(
    traj: &Trajectory,
    candidates: &[LoopCandidate],
    config: &VerifierConfig,
) -> Result<Vec<VerdictRecord>> {
    candidates.par_iter().map(|c| verify(traj, c, config)).collect()
}

/// Which trajectory a session verifies new candidates against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SessionPrior {
    /// The working trajectory, including corrections from accepted loops.
    #[default]
    Corrected,
    /// The odometry exactly as received.
    RawOdometry,
}

/// Sequential loop-closing state: keyframes arrive one at a time and
/// candidates are verified in arrival order. An accepted loop replaces the
/// working trajectory by the optimized one, and later keyframes are chained
/// onto the corrected trajectory with their raw relative odometry.
#[derive(Clone, Debug)]
pub struct SessionState {
    config: VerifierConfig,
    prior: SessionPrior,
    raw: Trajectory,
    working: Trajectory,
    accepted: Vec<LoopCandidate>,
}

impl SessionState {
    pub fn new(config: VerifierConfig, prior: SessionPrior) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            prior,
            raw: Trajectory::default(),
            working: Trajectory::default(),
            accepted: Vec::new(),
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    pub fn raw_trajectory(&self) -> &Trajectory {
        &self.raw
    }

    /// Current best trajectory estimate.
    pub fn trajectory(&self) -> &Trajectory {
        &self.working
    }

    pub fn accepted_loops(&self) -> &[LoopCandidate] {
        &self.accepted
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Appends `keyframe` and verifies `candidates` in order. On error the
    /// state is left unchanged.
    pub fn step(&mut self, keyframe: TrajectoryPoint, candidates: &[LoopCandidate]) -> Result<Vec<VerdictRecord>> {
        if let Some(last) = self.raw.last() {
            if !(keyframe.timestamp > last.timestamp) {
                return Err(Error::OutOfOrderKeyframe {
                    timestamp: keyframe.timestamp,
                    last: last.timestamp,
                });
            }
        }
        let count = self.raw.len() + 1;
        if let Some(c) = candidates.iter().find(|c| c.query_id >= count) {
            return Err(Error::InvalidCandidate(format!(
                "candidate {}->{} references a keyframe that has not arrived (have {count})",
                c.query_id, c.match_id
            )));
        }

        let working_pose = match (self.raw.last(), self.working.last()) {
            (Some(raw_prev), Some(work_prev)) => work_prev.pose.compose(&raw_prev.pose.between(&keyframe.pose)),
            _ => keyframe.pose,
        };
        self.raw.push(keyframe)?;
        self.working.push(TrajectoryPoint::new(keyframe.timestamp, working_pose))?;

        let mut verdicts = Vec::with_capacity(candidates.len());
        for c in candidates {
            let prior = match self.prior {
                SessionPrior::Corrected => &self.working,
                SessionPrior::RawOdometry => &self.raw,
            };
            let (verdict, optimized) = evaluate(prior, c, &self.config)?;
            if verdict.accepted {
                self.accepted.push(c.clone());
                if let (SessionPrior::Corrected, Some(x)) = (self.prior, optimized) {
                    self.working = x;
                }
            }
            verdicts.push(verdict);
        }
        Ok(verdicts)
    }
}

/// Functional form of [`SessionState::step`].
pub fn session_step(
    mut state: SessionState,
    keyframe: TrajectoryPoint,
    candidates: &[LoopCandidate],
) -> Result<(SessionState, Vec<VerdictRecord>)> {
    let verdicts = state.step(keyframe, candidates)?;
    Ok((state, verdicts))
}

/// Replays a full trajectory through a session, presenting each candidate
/// when its query keyframe arrives (ties keep input order).
pub fn replay_sequential(
    traj: &Trajectory,
    candidates: &[LoopCandidate],
    config: &VerifierConfig,
    prior: SessionPrior,
) -> Result<(SessionState, Vec<VerdictRecord>)> {
    if let Some(c) = candidates.iter().find(|c| c.query_id >= traj.len()) {
        return Err(Error::InvalidCandidate(format!(
            "candidate {}->{} is outside the {}-keyframe trajectory",
            c.query_id,
            c.match_id,
            traj.len()
        )));
    }
    let mut by_query: Vec<Vec<LoopCandidate>> = vec![Vec::new(); traj.len()];
    for c in candidates {
        by_query[c.query_id].push(c.clone());
    }
    let mut state = SessionState::new(config.clone(), prior)?;
    let mut verdicts = Vec::with_capacity(candidates.len());
    for (point, pending) in traj.points().iter().zip(&by_query) {
        verdicts.extend(state.step(*point, pending)?);
    }
    Ok((state, verdicts))
}
