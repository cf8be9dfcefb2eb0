//! Pose-graph data model: trajectories, edges, loop candidates.

use nalgebra::{Matrix6, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// 6×6 inverse covariance in `(rho, phi)` ordering.
pub type Information = Matrix6<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub timestamp: f64,
    pub pose: Pose,
}

impl TrajectoryPoint {
    pub fn new(timestamp: f64, pose: Pose) -> Self {
        Self { timestamp, pose }
    }
}

/// Keyframe poses ordered by strictly increasing timestamp.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>) -> Result<Self> {
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].timestamp > w[0].timestamp) {
                return Err(Error::NonMonotonicTimestamps { index: i + 1 });
            }
        }
        Ok(Self { points })
    }

    /// Poses stamped `start, start + dt, ...`.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose>, start: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
        }
        Self::new(
            poses
                .into_iter()
                .enumerate()
                .map(|(i, pose)| TrajectoryPoint::new(start + i as f64 * dt, pose))
                .collect(),
        )
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&TrajectoryPoint> {
        self.points.get(index)
    }

    pub fn last(&self) -> Option<&TrajectoryPoint> {
        self.points.last()
    }

    pub fn push(&mut self, point: TrajectoryPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if !(point.timestamp > last.timestamp) {
                return Err(Error::OutOfOrderKeyframe {
                    timestamp: point.timestamp,
                    last: last.timestamp,
                });
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> + '_ {
        self.points.iter().map(|p| &p.pose)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.timestamp)
    }

    /// Translational shadow of the trajectory.
    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| *p.pose.translation()).collect()
    }

    /// Copy of the first `len` points.
    pub fn prefix(&self, len: usize) -> Trajectory {
        Trajectory {
            points: self.points[..len.min(self.points.len())].to_vec(),
        }
    }

    /// Replaces every pose while keeping timestamps.
    pub fn with_poses(&self, poses: &[Pose]) -> Result<Trajectory> {
        if poses.len() != self.points.len() {
            return Err(Error::LengthMismatch {
                left: self.points.len(),
                right: poses.len(),
            });
        }
        Ok(Trajectory {
            points: self
                .points
                .iter()
                .zip(poses)
                .map(|(p, pose)| TrajectoryPoint::new(p.timestamp, *pose))
                .collect(),
        })
    }
}

/// Checks symmetry (within 1e-9) and positive definiteness.
pub fn validate_information(info: &Information) -> Result<()> {
    let asym = (info - info.transpose()).amax();
    if asym > 1e-9 {
        return Err(Error::InvalidEdge(format!(
            "information matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if info.iter().any(|v| !v.is_finite()) || info.cholesky().is_none() {
        return Err(Error::InvalidEdge("information matrix is not positive definite".into()));
    }
    Ok(())
}

/// Block-diagonal information with the given standard deviations.
pub fn diagonal_information(translation_std: f64, rotation_std: f64) -> Information {
    let t = 1.0 / (translation_std * translation_std);
    let r = 1.0 / (rotation_std * rotation_std);
    Matrix6::from_diagonal(&nalgebra::Vector6::new(t, t, t, r, r, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub from_id: usize,
    pub to_id: usize,
    /// Relative pose `x_from⁻¹ ∘ x_to` as measured.
    pub measurement: Pose,
    pub information: Information,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn new(
        from_id: usize,
        to_id: usize,
        measurement: Pose,
        information: Information,
        kind: EdgeKind,
    ) -> Result<Self> {
        if from_id == to_id {
            return Err(Error::InvalidEdge(format!("self-loop on node {from_id}")));
        }
        validate_information(&information)?;
        Ok(Self {
            from_id,
            to_id,
            measurement,
            information,
            kind,
        })
    }
}

/// A loop constraint submitted for verification.
///
/// `query_id` is the newer keyframe and `match_id` the older one, so the
/// constraint predicts `x_match ≈ x_query ∘ measurement`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopCandidate {
    pub query_id: usize,
    pub match_id: usize,
    pub measurement: Pose,
    pub information: Information,
    pub label: Option<bool>,
}

impl LoopCandidate {
    /// Normalizes the orientation so that `query_id > match_id`, inverting
    /// the measurement when the indices are swapped.
    pub fn new(
        query_id: usize,
        match_id: usize,
        measurement: Pose,
        information: Information,
        label: Option<bool>,
    ) -> Result<Self> {
        if query_id == match_id {
            return Err(Error::InvalidCandidate(format!(
                "query and match are the same keyframe ({query_id})"
            )));
        }
        validate_information(&information)
            .map_err(|e| Error::InvalidCandidate(e.to_string()))?;
        let (query_id, match_id, measurement) = if query_id > match_id {
            (query_id, match_id, measurement)
        } else {
            (match_id, query_id, measurement.inverse())
        };
        Ok(Self {
            query_id,
            match_id,
            measurement,
            information,
            label,
        })
    }

    pub fn with_identity_information(
        query_id: usize,
        match_id: usize,
        measurement: Pose,
        label: Option<bool>,
    ) -> Result<Self> {
        Self::new(query_id, match_id, measurement, Information::identity(), label)
    }

    pub fn to_edge(&self) -> Edge {
        Edge {
            from_id: self.query_id,
            to_id: self.match_id,
            measurement: self.measurement,
            information: self.information,
            kind: EdgeKind::Loop,
        }
    }
}

/// Nodes, relative-pose edges and the gauge anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    nodes: Vec<Pose>,
    timestamps: Vec<f64>,
    edges: Vec<Edge>,
    fixed_node: usize,
}

impl PoseGraph {
    /// Builds a graph with node 0 fixed. Edges are checked against the node
    /// count and the odometry chain must connect every consecutive pair.
    pub fn new(nodes: Vec<Pose>, timestamps: Vec<f64>, edges: Vec<Edge>, fixed_node: usize) -> Result<Self> {
        if nodes.len() != timestamps.len() {
            return Err(Error::LengthMismatch {
                left: nodes.len(),
                right: timestamps.len(),
            });
        }
        if fixed_node >= nodes.len() {
            return Err(Error::InvalidEdge(format!("fixed node {fixed_node} does not exist")));
        }
        let graph = Self {
            nodes,
            timestamps,
            edges,
            fixed_node,
        };
        for e in &graph.edges {
            graph.check_endpoints(e)?;
        }
        graph.check_chain()?;
        Ok(graph)
    }

    /// One node per keyframe, odometry edges `x_i⁻¹ ∘ x_{i+1}`, node 0 fixed.
    pub fn from_odometry(traj: &Trajectory, information: &Information) -> Result<Self> {
        if traj.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                got: traj.len(),
            });
        }
        validate_information(information)?;
        let nodes: Vec<Pose> = traj.poses().copied().collect();
        let edges = nodes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Edge {
                from_id: i,
                to_id: i + 1,
                measurement: w[0].between(&w[1]),
                information: *information,
                kind: EdgeKind::Odometry,
            })
            .collect();
        Ok(Self {
            nodes,
            timestamps: traj.timestamps().collect(),
            edges,
            fixed_node: 0,
        })
    }

    pub fn nodes(&self) -> &[Pose] {
        &self.nodes
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn fixed_node(&self) -> usize {
        self.fixed_node
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<()> {
        self.check_endpoints(&edge)?;
        self.edges.push(edge);
        Ok(())
    }

    pub fn set_node(&mut self, id: usize, pose: Pose) {
        self.nodes[id] = pose;
    }

    pub(crate) fn check_endpoints(&self, e: &Edge) -> Result<()> {
        let n = self.nodes.len();
        if e.from_id >= n || e.to_id >= n {
            return Err(Error::InvalidEdge(format!(
                "edge {}->{} references a node outside 0..{n}",
                e.from_id, e.to_id
            )));
        }
        if e.from_id == e.to_id {
            return Err(Error::InvalidEdge(format!("self-loop on node {}", e.from_id)));
        }
        Ok(())
    }

    pub fn check_loop(&self, candidate: &LoopCandidate) -> Result<()> {
        if candidate.query_id >= self.nodes.len() {
            return Err(Error::InvalidCandidate(format!(
                "query keyframe {} does not exist (graph has {} nodes)",
                candidate.query_id,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Odometry edge between `k` and `k+1` as the relative pose `x_k⁻¹ x_{k+1}`.
    fn chain_link(&self, k: usize) -> Option<Pose> {
        self.edges.iter().find_map(|e| match e.kind {
            EdgeKind::Odometry if e.from_id == k && e.to_id == k + 1 => Some(e.measurement),
            EdgeKind::Odometry if e.from_id == k + 1 && e.to_id == k => Some(e.measurement.inverse()),
            _ => None,
        })
    }

    fn check_chain(&self) -> Result<()> {
        let mut linked = vec![false; self.nodes.len().saturating_sub(1)];
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Odometry) {
            let lo = e.from_id.min(e.to_id);
            if e.from_id.abs_diff(e.to_id) == 1 {
                linked[lo] = true;
            }
        }
        match linked.iter().position(|l| !l) {
            Some(k) => Err(Error::DisconnectedChain(k)),
            None => Ok(()),
        }
    }

    /// Chains odometry measurements outward from the fixed node.
    pub fn dead_reckon(&self) -> Result<Trajectory> {
        let n = self.nodes.len();
        let mut links = Vec::with_capacity(n.saturating_sub(1));
        for k in 0..n.saturating_sub(1) {
            links.push(self.chain_link(k).ok_or(Error::DisconnectedChain(k))?);
        }
        let mut poses = vec![Pose::identity(); n];
        poses[self.fixed_node] = self.nodes[self.fixed_node];
        for k in self.fixed_node + 1..n {
            poses[k] = poses[k - 1].compose(&links[k - 1]);
        }
        for k in (0..self.fixed_node).rev() {
            poses[k] = poses[k + 1].compose(&links[k].inverse());
        }
        Trajectory::new(
            self.timestamps
                .iter()
                .zip(poses)
                .map(|(&t, p)| TrajectoryPoint::new(t, p))
                .collect(),
        )
    }

    /// Current node estimates as a trajectory.
    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(
            self.timestamps
                .iter()
                .zip(&self.nodes)
                .map(|(&t, p)| TrajectoryPoint::new(t, *p))
                .collect(),
        )
    }
}
