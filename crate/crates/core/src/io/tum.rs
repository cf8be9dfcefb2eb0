//! TUM trajectory text: `timestamp tx ty tz qx qy qz qw` per line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Trajectory, TrajectoryPoint};

use super::{format_sig, parse_f64, parse_pose, pose_fields, write_atomic};

pub const HEADER: &str = "# timestamp tx ty tz qx qy qz qw";

pub fn to_string(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(64 * (traj.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for p in traj.points() {
        let _ = writeln!(out, "{} {}", format_sig(p.timestamp), pose_fields(&p.pose).join(" "));
    }
    out
}

pub fn from_str(text: &str) -> Result<Trajectory> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let timestamp = parse_f64(fields[0], line_no, "timestamp")?;
        if let Some(prev) = points.last().map(|p: &TrajectoryPoint| p.timestamp) {
            if !(timestamp > prev) {
                return Err(Error::parse(
                    line_no,
                    format!("timestamp {timestamp} does not increase (previous {prev})"),
                ));
            }
        }
        points.push(TrajectoryPoint::new(timestamp, parse_pose(&fields[1..], line_no)?));
    }
    Trajectory::new(points)
}

pub fn read(path: &Path) -> Result<Trajectory> {
    from_str(&std::fs::read_to_string(path)?)
}

pub fn write(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, to_string(traj).as_bytes())
}
