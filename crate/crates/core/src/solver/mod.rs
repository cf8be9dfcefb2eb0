//! Levenberg–Marquardt pose-graph optimization.
//!
//! Edge residuals live in se(3): `r = log((x_from ∘ u)⁻¹ ∘ x_to)`. Poses are
//! updated on the right, `x ← x ∘ exp(δ)`, with the gauge node held fixed.
//! The damped normal equations `(H + λ·diag H)·δ = −g` are factored with an
//! envelope Cholesky, which keeps a chain plus loop edges linear in size.

mod skyline;

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{se3_right_jacobian_inv, Pose, Tangent6};
use crate::graph::{Edge, LoopCandidate, PoseGraph, Trajectory};

use self::skyline::Skyline;

const MAX_DAMPING: f64 = 1e32;
const MIN_DAMPING: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step changes the cost by less than this fraction.
    pub relative_decrease_tol: f64,
    /// Stop once the max-norm of the gradient falls below this.
    pub gradient_tol: f64,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            relative_decrease_tol: 1e-6,
            gradient_tol: 1e-8,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("relative_decrease_tol", self.relative_decrease_tol),
            ("gradient_tol", self.gradient_tol),
            ("initial_damping", self.initial_damping),
            ("damping_up", self.damping_up),
            ("damping_down", self.damping_down),
        ];
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(Error::InvalidConfig(
                "damping_up must exceed 1 and damping_down must be below 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TerminationReason {
    CostTol,
    GradientTol,
    MaxIter,
    NumericalFailure,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::CostTol => "cost_tol",
            TerminationReason::GradientTol => "gradient_tol",
            TerminationReason::MaxIter => "max_iter",
            TerminationReason::NumericalFailure => "numerical_failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    /// Number of damped solves attempted, accepted or not.
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub termination_reason: TerminationReason,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Edge residual `log((x_from ∘ u)⁻¹ ∘ x_to)`.
pub fn residual(edge: &Edge, x_from: &Pose, x_to: &Pose) -> Result<Tangent6> {
    x_from.compose(&edge.measurement).inverse().compose(x_to).log()
}

/// Residual together with its Jacobians with respect to right perturbations
/// of `x_from` and `x_to`.
pub fn residual_jacobians(
    edge: &Edge,
    x_from: &Pose,
    x_to: &Pose,
) -> Result<(Tangent6, Matrix6<f64>, Matrix6<f64>)> {
    let r = residual(edge, x_from, x_to)?;
    let jr_inv = se3_right_jacobian_inv(&r);
    let j_from = -(jr_inv * x_to.between(x_from).adjoint());
    Ok((r, j_from, jr_inv))
}

fn mahalanobis(r: &Tangent6, info: &Matrix6<f64>) -> f64 {
    let v = r.to_vector();
    v.dot(&(info * v))
}

/// Σ rᵀ·Ω·r over all edges at the current node estimates.
pub fn cost(graph: &PoseGraph) -> Result<f64> {
    edges_cost(graph.edges().iter(), graph.nodes())
}

fn edges_cost<'a>(edges: impl Iterator<Item = &'a Edge>, poses: &[Pose]) -> Result<f64> {
    let mut total = 0.0;
    for e in edges {
        let r = residual(e, &poses[e.from_id], &poses[e.to_id])?;
        total += mahalanobis(&r, &e.information);
    }
    Ok(total)
}

struct Problem<'a> {
    edges: Vec<&'a Edge>,
    fixed: usize,
    /// Block index per node, `None` for the fixed node.
    block: Vec<Option<usize>>,
    first_block: Vec<usize>,
}

impl<'a> Problem<'a> {
    fn new(graph: &'a PoseGraph, extra: Option<&'a Edge>) -> Self {
        let fixed = graph.fixed_node();
        let n = graph.node_count();
        let block: Vec<Option<usize>> = (0..n)
            .map(|k| match k.cmp(&fixed) {
                std::cmp::Ordering::Less => Some(k),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(k - 1),
            })
            .collect();
        let edges: Vec<&Edge> = graph.edges().iter().chain(extra).collect();
        let mut first_block: Vec<usize> = (0..n.saturating_sub(1)).collect();
        for e in &edges {
            if let (Some(a), Some(b)) = (block[e.from_id], block[e.to_id]) {
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                first_block[hi] = first_block[hi].min(lo);
            }
        }
        Self {
            edges,
            fixed,
            block,
            first_block,
        }
    }

    fn dim(&self) -> usize {
        6 * self.first_block.len()
    }

    fn cost(&self, poses: &[Pose]) -> Result<f64> {
        edges_cost(self.edges.iter().copied(), poses)
    }

    /// Gauss–Newton system `H`, `g = Jᵀ·Ω·r` and the cost.
    fn linearize(&self, poses: &[Pose]) -> Result<(Skyline, Vec<f64>, f64)> {
        let mut h = Skyline::with_block_envelope(&self.first_block, 6);
        let mut g = vec![0.0; self.dim()];
        let mut total = 0.0;
        for e in &self.edges {
            let (r, j_from, j_to) = residual_jacobians(e, &poses[e.from_id], &poses[e.to_id])?;
            let rv = r.to_vector();
            let wr = e.information * rv;
            total += rv.dot(&wr);
            let parts = [(self.block[e.from_id], j_from), (self.block[e.to_id], j_to)];
            let weighted: Vec<Option<(usize, Matrix6<f64>, Matrix6<f64>)>> = parts
                .iter()
                .map(|(b, j)| b.map(|b| (b, *j, j.transpose() * e.information)))
                .collect();
            for (b, _, jt_w) in weighted.iter().flatten() {
                let gb: Vector6<f64> = jt_w * rv;
                for k in 0..6 {
                    g[6 * b + k] += gb[k];
                }
            }
            for (bi, _, jt_w_i) in weighted.iter().flatten() {
                for (bj, j_j, _) in weighted.iter().flatten() {
                    if bi < bj {
                        continue;
                    }
                    let block = jt_w_i * j_j;
                    add_block(&mut h, *bi, *bj, &block);
                }
            }
        }
        Ok((h, g, total))
    }

    fn retract(&self, poses: &[Pose], step: &[f64]) -> Vec<Pose> {
        poses
            .iter()
            .enumerate()
            .map(|(k, p)| match self.block[k] {
                Some(b) => {
                    let d = Vector6::from_column_slice(&step[6 * b..6 * b + 6]);
                    p.compose(&Pose::exp(&Tangent6::from_vector(&d)))
                }
                None => {
                    debug_assert_eq!(k, self.fixed);
                    *p
                }
            })
            .collect()
    }
}

/// Adds `block` at block position `(bi, bj)` with `bi >= bj`, lower triangle only.
fn add_block(h: &mut Skyline, bi: usize, bj: usize, block: &Matrix6<f64>) {
    for r in 0..6 {
        let cols = if bi == bj { r + 1 } else { 6 };
        for c in 0..cols {
            h.add(6 * bi + r, 6 * bj + c, block[(r, c)]);
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes the pose-graph cost, optionally with one extra loop edge.
///
/// The input graph is never modified. Returns the optimized trajectory
/// (timestamps from the graph) and a report; `converged` is false when the
/// iteration cap is hit or the damped system cannot be factored.
pub fn optimize(
    graph: &PoseGraph,
    candidate: Option<&LoopCandidate>,
    config: &SolverConfig,
) -> Result<(Trajectory, SolveReport)> {
    config.validate()?;
    let loop_edge = match candidate {
        Some(c) => {
            graph.check_loop(c)?;
            let e = c.to_edge();
            graph.check_endpoints(&e)?;
            Some(e)
        }
        None => None,
    };
    let problem = Problem::new(graph, loop_edge.as_ref());
    let mut poses = graph.nodes().to_vec();
    let (report, poses) = run_lm(&problem, &mut poses, config).map(|r| (r, poses))?;
    Ok((graph.trajectory()?.with_poses(&poses)?, report))
}

fn run_lm(problem: &Problem<'_>, poses: &mut Vec<Pose>, config: &SolverConfig) -> Result<SolveReport> {
    let (mut h, mut g, mut current) = match problem.linearize(poses) {
        Ok(system) => system,
        Err(Error::LogBranch { .. }) => {
            let c = problem.cost(poses).unwrap_or(f64::INFINITY);
            return Ok(SolveReport {
                converged: false,
                iterations: 0,
                initial_cost: c,
                final_cost: c,
                termination_reason: TerminationReason::NumericalFailure,
                cost_history: vec![c],
            });
        }
        Err(e) => return Err(e),
    };
    let initial_cost = current;
    let mut history = vec![current];
    let finish = |converged, iterations, final_cost, reason, history| SolveReport {
        converged,
        iterations,
        initial_cost,
        final_cost,
        termination_reason: reason,
        cost_history: history,
    };
    if !current.is_finite() {
        return Ok(finish(false, 0, current, TerminationReason::NumericalFailure, history));
    }
    if problem.dim() == 0 || current == 0.0 || max_abs(&g) < config.gradient_tol {
        return Ok(finish(true, 0, current, TerminationReason::GradientTol, history));
    }

    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let mut damped = h.clone();
        for r in 0..damped.dim() {
            let d = h.diagonal(r).max(1e-12);
            damped.add(r, r, lambda * d);
        }
        if !damped.factor() {
            lambda *= config.damping_up;
            if lambda > MAX_DAMPING {
                return Ok(finish(false, iterations, current, TerminationReason::NumericalFailure, history));
            }
            continue;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let step = damped.solve(&neg_g);
        let trial = problem.retract(poses, &step);
        let trial_cost = problem.cost(&trial).unwrap_or(f64::INFINITY);

        if trial_cost.is_finite() && trial_cost < current {
            let rel = (current - trial_cost) / current;
            *poses = trial;
            current = trial_cost;
            history.push(current);
            lambda = (lambda * config.damping_down).max(MIN_DAMPING);
            if current == 0.0 || rel < config.relative_decrease_tol {
                return Ok(finish(true, iterations, current, TerminationReason::CostTol, history));
            }
            match problem.linearize(poses) {
                Ok((nh, ng, _)) => {
                    h = nh;
                    g = ng;
                }
                Err(Error::LogBranch { .. }) => {
                    return Ok(finish(false, iterations, current, TerminationReason::NumericalFailure, history));
                }
                Err(e) => return Err(e),
            }
            if max_abs(&g) < config.gradient_tol {
                return Ok(finish(true, iterations, current, TerminationReason::GradientTol, history));
            }
        } else {
            // An uphill step this small means the cost is flat to working precision.
            if trial_cost.is_finite() && (trial_cost - current) <= config.relative_decrease_tol * current * 1e-3 {
                return Ok(finish(true, iterations, current, TerminationReason::CostTol, history));
            }
            lambda *= config.damping_up;
            if lambda > MAX_DAMPING {
                return Ok(finish(false, iterations, current, TerminationReason::NumericalFailure, history));
            }
        }
    }
    Ok(finish(false, iterations, current, TerminationReason::MaxIter, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, Information, TrajectoryPoint};
    use nalgebra::Vector3;

    fn line(n: usize) -> Trajectory {
        Trajectory::from_poses(
            (0..n).map(|i| Pose::from_translation(Vector3::new(i as f64, 0.0, 0.0))),
            0.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn consistent_edge_has_zero_residual() {
        let a = Pose::from_yaw(0.4, Vector3::new(1.0, -2.0, 0.5));
        let u = Pose::from_yaw(-1.1, Vector3::new(0.3, 0.2, 0.1));
        let e = Edge::new(0, 1, u, Information::identity(), EdgeKind::Odometry).unwrap();
        let r = residual(&e, &a, &a.compose(&u)).unwrap();
        assert!(r.norm() < 1e-14);
    }

    #[test]
    fn pure_translation_residual() {
        let e = Edge::new(0, 1, Pose::identity(), Information::identity(), EdgeKind::Odometry).unwrap();
        let r = residual(&e, &Pose::identity(), &Pose::from_translation(Vector3::new(0.1, 0.0, 0.0))).unwrap();
        assert_eq!(r.rho, Vector3::new(0.1, 0.0, 0.0));
        assert_eq!(r.phi, Vector3::zeros());
    }

    #[test]
    fn cost_of_single_offset_edge() {
        let e = Edge::new(0, 1, Pose::identity(), Information::identity(), EdgeKind::Odometry).unwrap();
        let g = PoseGraph::new(
            vec![Pose::identity(), Pose::from_translation(Vector3::new(0.1, 0.0, 0.0))],
            vec![0.0, 1.0],
            vec![e],
            0,
        )
        .unwrap();
        assert!((cost(&g).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn unperturbed_chain_costs_nothing() {
        let g = PoseGraph::from_odometry(&line(20), &Information::identity()).unwrap();
        assert_eq!(cost(&g).unwrap(), 0.0);
    }

    #[test]
    fn consistent_chain_is_a_fixed_point() {
        let g = PoseGraph::from_odometry(&line(8), &Information::identity()).unwrap();
        let (traj, report) = optimize(&g, None, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.final_cost, 0.0);
        assert_eq!(traj, g.trajectory().unwrap());
    }

    #[test]
    fn three_node_chain_with_loop() {
        let g = PoseGraph::from_odometry(&line(3), &Information::identity()).unwrap();
        let c = LoopCandidate::with_identity_information(
            2,
            0,
            Pose::from_translation(Vector3::new(-1.0, 0.0, 0.0)),
            None,
        )
        .unwrap();
        let (traj, report) = optimize(&g, Some(&c), &SolverConfig::default()).unwrap();
        assert!(report.converged, "{report:?}");
        let p = traj.positions();
        assert!((p[1].x - 2.0 / 3.0).abs() < 1e-8, "{}", p[1].x);
        assert!((p[2].x - 4.0 / 3.0).abs() < 1e-8, "{}", p[2].x);
        assert!(p[1].yz().norm() < 1e-8 && p[2].yz().norm() < 1e-8);
    }

    #[test]
    fn input_graph_not_mutated() {
        let g = PoseGraph::from_odometry(&line(5), &Information::identity()).unwrap();
        let before = g.clone();
        let c = LoopCandidate::with_identity_information(4, 0, Pose::identity(), None).unwrap();
        let _ = optimize(&g, Some(&c), &SolverConfig::default()).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn loop_to_missing_node_is_an_error() {
        let g = PoseGraph::from_odometry(&line(4), &Information::identity()).unwrap();
        let c = LoopCandidate::with_identity_information(9, 0, Pose::identity(), None).unwrap();
        assert!(optimize(&g, Some(&c), &SolverConfig::default()).is_err());
    }

    #[test]
    fn max_iterations_reports_not_converged() {
        let t = Trajectory::new(
            (0..30)
                .map(|i| TrajectoryPoint::new(i as f64, Pose::from_yaw(0.2 * i as f64, Vector3::new(i as f64, 0.0, 0.0))))
                .collect(),
        )
        .unwrap();
        let g = PoseGraph::from_odometry(&t, &Information::identity()).unwrap();
        let c = LoopCandidate::with_identity_information(29, 0, Pose::identity(), None).unwrap();
        let config = SolverConfig {
            max_iterations: 1,
            ..SolverConfig::default()
        };
        let (_, report) = optimize(&g, Some(&c), &config).unwrap();
        assert!(!report.converged);
        assert_eq!(report.termination_reason, TerminationReason::MaxIter);
    }

    #[test]
    fn residual_on_branch_cut_is_a_numerical_failure() {
        let t = Trajectory::from_poses(
            (0..3).map(|i| Pose::from_yaw(std::f64::consts::PI * i as f64 / 2.0, Vector3::new(i as f64, 0.0, 0.0))),
            0.0,
            1.0,
        )
        .unwrap();
        let g = PoseGraph::from_odometry(&t, &Information::identity()).unwrap();
        let c = LoopCandidate::with_identity_information(2, 0, Pose::identity(), None).unwrap();
        let (_, report) = optimize(&g, Some(&c), &SolverConfig::default()).unwrap();
        assert!(!report.converged);
        assert_eq!(report.termination_reason, TerminationReason::NumericalFailure);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            max_iterations: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            damping_up: 0.5,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
