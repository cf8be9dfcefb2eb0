//! g2o `VERTEX_SE3:QUAT` / `EDGE_SE3:QUAT` pose graphs.
//!
//! Information matrices are written as the 21 upper-triangular entries in
//! row-major order. Node timestamps are not part of the format; parsed
//! graphs are stamped with their node index.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::graph::{validate_information, Edge, EdgeKind, Information, PoseGraph};

use super::{format_sig, parse_f64, parse_pose, parse_usize, pose_fields, write_atomic};

pub const VERTEX_TAG: &str = "VERTEX_SE3:QUAT";
pub const EDGE_TAG: &str = "EDGE_SE3:QUAT";
pub const FIX_TAG: &str = "FIX";

pub fn to_string(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for (id, pose) in graph.nodes().iter().enumerate() {
        let _ = writeln!(out, "{VERTEX_TAG} {id} {}", pose_fields(pose).join(" "));
    }
    for e in graph.edges() {
        let mut info = Vec::with_capacity(21);
        for r in 0..6 {
            for c in r..6 {
                info.push(format_sig(e.information[(r, c)]));
            }
        }
        let _ = writeln!(
            out,
            "{EDGE_TAG} {} {} {} {}",
            e.from_id,
            e.to_id,
            pose_fields(&e.measurement).join(" "),
            info.join(" ")
        );
    }
    let _ = writeln!(out, "{FIX_TAG} {}", graph.fixed_node());
    out
}

pub fn from_str(text: &str) -> Result<PoseGraph> {
    let mut vertices: Vec<(usize, Pose, usize)> = Vec::new();
    let mut edges = Vec::new();
    let mut fixed = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            VERTEX_TAG => {
                expect_len(&fields, 9, line_no)?;
                let id = parse_usize(fields[1], line_no, "vertex id")?;
                vertices.push((id, parse_pose(&fields[2..9], line_no)?, line_no));
            }
            EDGE_TAG => {
                expect_len(&fields, 31, line_no)?;
                let from = parse_usize(fields[1], line_no, "edge source")?;
                let to = parse_usize(fields[2], line_no, "edge target")?;
                let measurement = parse_pose(&fields[3..10], line_no)?;
                let mut info = Information::zeros();
                let mut k = 10;
                for r in 0..6 {
                    for c in r..6 {
                        let v = parse_f64(fields[k], line_no, "information entry")?;
                        info[(r, c)] = v;
                        info[(c, r)] = v;
                        k += 1;
                    }
                }
                validate_information(&info).map_err(|e| Error::parse(line_no, e.to_string()))?;
                let kind = if from.abs_diff(to) == 1 {
                    EdgeKind::Odometry
                } else {
                    EdgeKind::Loop
                };
                let edge = Edge::new(from, to, measurement, info, kind)
                    .map_err(|e| Error::parse(line_no, e.to_string()))?;
                edges.push(edge);
            }
            FIX_TAG => {
                expect_len(&fields, 2, line_no)?;
                fixed = Some(parse_usize(fields[1], line_no, "fixed vertex id")?);
            }
            other => warn!("line {line_no}: skipping unsupported g2o tag {other}"),
        }
    }
    vertices.sort_by_key(|v| v.0);
    for (expected, (id, _, line_no)) in vertices.iter().enumerate() {
        if *id != expected {
            return Err(Error::parse(
                *line_no,
                format!("vertex ids must be contiguous from 0; expected {expected}, found {id}"),
            ));
        }
    }
    let n = vertices.len();
    let nodes = vertices.into_iter().map(|v| v.1).collect();
    PoseGraph::new(nodes, (0..n).map(|i| i as f64).collect(), edges, fixed.unwrap_or(0))
}

fn expect_len(fields: &[&str], n: usize, line: usize) -> Result<()> {
    if fields.len() != n {
        return Err(Error::parse(
            line,
            format!("{} expects {} fields, found {}", fields[0], n, fields.len()),
        ));
    }
    Ok(())
}

pub fn read(path: &Path) -> Result<PoseGraph> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn write(path: &Path, graph: &PoseGraph) -> Result<()> {
    write_atomic(path, to_string(graph).as_bytes())
}
