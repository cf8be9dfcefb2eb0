//! CSV tables: loop candidates in, verdicts out, `metric,value` reports.

use std::path::Path;

use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::graph::{Information, LoopCandidate};

use super::write_atomic;

pub const CANDIDATE_HEADER: [&str; 10] =
    ["query_id", "match_id", "tx", "ty", "tz", "qx", "qy", "qz", "qw", "label"];
pub const VERDICT_HEADER: [&str; 6] = ["query_id", "match_id", "score", "converged", "accepted", "label"];

/// One candidate line; information is not part of the file and defaults to identity.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateRow {
    pub query_id: usize,
    pub match_id: usize,
    pub measurement: Pose,
    pub label: Option<bool>,
}

impl CandidateRow {
    pub fn into_candidate(self) -> Result<LoopCandidate> {
        LoopCandidate::new(
            self.query_id,
            self.match_id,
            self.measurement,
            Information::identity(),
            self.label,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerdictRow {
    pub query_id: usize,
    pub match_id: usize,
    pub score: Option<f64>,
    pub converged: bool,
    pub accepted: bool,
    pub label: Option<bool>,
}

fn line_of(record: &StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn check_header(found: &StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::parse(
            1,
            format!("expected header '{}', found '{}'", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

fn field(record: &StringRecord, i: usize) -> &str {
    record.get(i).unwrap_or("").trim()
}

fn parse_num<T: std::str::FromStr>(record: &StringRecord, i: usize, name: &str) -> Result<T> {
    let s = field(record, i);
    s.parse()
        .map_err(|_| Error::parse(line_of(record), format!("invalid {name} '{s}'")))
}

fn parse_flag(record: &StringRecord, i: usize, name: &str) -> Result<bool> {
    match field(record, i) {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::parse(line_of(record), format!("{name} must be 0 or 1, found '{other}'"))),
    }
}

fn parse_optional_flag(record: &StringRecord, i: usize, name: &str) -> Result<Option<bool>> {
    if field(record, i).is_empty() {
        Ok(None)
    } else {
        parse_flag(record, i, name).map(Some)
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn optional_flag(b: Option<bool>) -> &'static str {
    b.map(flag).unwrap_or("")
}

fn records(text: &str, header: &[&str]) -> Result<Vec<StringRecord>> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    check_header(reader.headers()?, header)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(line, e.to_string())
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_candidate_rows(text: &str) -> Result<Vec<CandidateRow>> {
    records(text, &CANDIDATE_HEADER)?
        .iter()
        .map(|rec| {
            let line = line_of(rec);
            let mut v = [0.0f64; 7];
            for (k, name) in CANDIDATE_HEADER[2..9].iter().enumerate() {
                v[k] = parse_num(rec, k + 2, name)?;
                if !v[k].is_finite() {
                    return Err(Error::parse(line, format!("non-finite {name}")));
                }
            }
            if (v[3] * v[3] + v[4] * v[4] + v[5] * v[5] + v[6] * v[6]) < 1e-12 {
                return Err(Error::parse(line, "quaternion has zero norm"));
            }
            Ok(CandidateRow {
                query_id: parse_num(rec, 0, "query_id")?,
                match_id: parse_num(rec, 1, "match_id")?,
                measurement: Pose::from_parts(v[6], v[3], v[4], v[5], Vector3::new(v[0], v[1], v[2])),
                label: parse_optional_flag(rec, 9, "label")?,
            })
        })
        .collect()
}

/// Parses and normalizes candidates (`query_id > match_id`).
pub fn parse_candidates(text: &str) -> Result<Vec<LoopCandidate>> {
    let rows = parse_candidate_rows(text)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_candidate()
                .map_err(|e| Error::parse(i + 2, e.to_string()))
        })
        .collect()
}

pub fn candidates_to_string(candidates: &[LoopCandidate]) -> Result<String> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(CANDIDATE_HEADER)?;
    for c in candidates {
        let t = c.measurement.translation();
        let q = c.measurement.rotation();
        w.write_record([
            c.query_id.to_string(),
            c.match_id.to_string(),
            t.x.to_string(),
            t.y.to_string(),
            t.z.to_string(),
            q.i.to_string(),
            q.j.to_string(),
            q.k.to_string(),
            q.w.to_string(),
            optional_flag(c.label).to_string(),
        ])?;
    }
    into_string(w)
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_candidates(path: &Path) -> Result<Vec<LoopCandidate>> {
    parse_candidates(&std::fs::read_to_string(path)?)
}

pub fn write_candidates(path: &Path, candidates: &[LoopCandidate]) -> Result<()> {
    write_atomic(path, candidates_to_string(candidates)?.as_bytes())
}

pub fn verdicts_to_string(rows: &[VerdictRow]) -> Result<String> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(VERDICT_HEADER)?;
    for r in rows {
        w.write_record([
            r.query_id.to_string(),
            r.match_id.to_string(),
            r.score.map(|s| s.to_string()).unwrap_or_default(),
            flag(r.converged).to_string(),
            flag(r.accepted).to_string(),
            optional_flag(r.label).to_string(),
        ])?;
    }
    into_string(w)
}

pub fn parse_verdicts(text: &str) -> Result<Vec<VerdictRow>> {
    records(text, &VERDICT_HEADER)?
        .iter()
        .map(|rec| {
            let score = match field(rec, 2) {
                "" => None,
                _ => Some(parse_num::<f64>(rec, 2, "score")?),
            };
            Ok(VerdictRow {
                query_id: parse_num(rec, 0, "query_id")?,
                match_id: parse_num(rec, 1, "match_id")?,
                score,
                converged: parse_flag(rec, 3, "converged")?,
                accepted: parse_flag(rec, 4, "accepted")?,
                label: parse_optional_flag(rec, 5, "label")?,
            })
        })
        .collect()
}

pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRow>> {
    parse_verdicts(&std::fs::read_to_string(path)?)
}

pub fn write_verdicts(path: &Path, rows: &[VerdictRow]) -> Result<()> {
    write_atomic(path, verdicts_to_string(rows)?.as_bytes())
}

/// `metric,value` report.
pub fn metrics_to_string(rows: &[(String, String)]) -> Result<String> {
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    into_string(w)
}
