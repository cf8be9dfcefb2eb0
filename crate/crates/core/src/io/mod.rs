//! Text formats: TUM trajectories, g2o pose graphs, candidate and verdict CSV.

pub mod g2o;
pub mod tables;
pub mod tum;

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::UnitQuaternion;

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub use tables::{
    read_candidates, read_verdicts, write_candidates, write_verdicts, CandidateRow, VerdictRow,
};

/// Significant digits used for every float in TUM and g2o output.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Formats `x` with nine significant digits, `%g` style.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Quaternion components `[x, y, z, w]` formatted so that parsing and
/// renormalizing them prints the same text again.
pub(crate) fn format_quaternion(q: &UnitQuaternion<f64>) -> [String; 4] {
    let mut text = quaternion_text(q);
    for _ in 0..8 {
        let parsed = parse_quaternion(&text).expect("formatted numbers parse");
        let again = quaternion_text(&parsed);
        if again == text {
            break;
        }
        text = again;
    }
    text
}

fn quaternion_text(q: &UnitQuaternion<f64>) -> [String; 4] {
    [format_sig(q.i), format_sig(q.j), format_sig(q.k), format_sig(q.w)]
}

fn parse_quaternion(text: &[String; 4]) -> Option<UnitQuaternion<f64>> {
    let v: Vec<f64> = text.iter().map(|s| s.parse().ok()).collect::<Option<_>>()?;
    Some(*Pose::from_parts_tolerant(v[3], v[0], v[1], v[2], nalgebra::Vector3::zeros()).rotation())
}

pub(crate) fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{field}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} '{field}'")));
    }
    Ok(v)
}

pub(crate) fn parse_usize(field: &str, line: usize, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{field}'")))
}

/// Pose from `tx ty tz qx qy qz qw`, quaternion normalized.
pub(crate) fn parse_pose(fields: &[&str], line: usize) -> Result<Pose> {
    let v: Vec<f64> = fields
        .iter()
        .map(|f| parse_f64(f, line, "pose component"))
        .collect::<Result<_>>()?;
    let norm = (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]).sqrt();
    if !(norm > 1e-6) {
        return Err(Error::parse(line, "quaternion has zero norm"));
    }
    Ok(Pose::from_parts_tolerant(
        v[6],
        v[3],
        v[4],
        v[5],
        nalgebra::Vector3::new(v[0], v[1], v[2]),
    ))
}

pub(crate) fn pose_fields(pose: &Pose) -> Vec<String> {
    let t = pose.translation();
    let mut out = vec![format_sig(t.x), format_sig(t.y), format_sig(t.z)];
    out.extend(format_quaternion(pose.rotation()));
    out
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
