//! Run manifests: flat `key = value` TOML describing one invocation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use toml::{Table, Value};

use crate::{CliError, CliResult};

pub struct Manifest {
    subcommand: &'static str,
    started: Instant,
    params: Table,
    inputs: Table,
    outputs: Table,
    args: Vec<String>,
}

impl Manifest {
    pub fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            started: Instant::now(),
            params: Table::new(),
            inputs: Table::new(),
            outputs: Table::new(),
            args: vec![subcommand.to_string()],
        }
    }

    /// Records a resolved parameter and the flag that reproduces it.
    pub fn param(&mut self, flag: &str, value: impl Into<Value>) -> &mut Self {
        let value = value.into();
        self.args.push(format!("--{flag}"));
        self.args.push(match &value {
            Value::String(s) => s.clone(),
            Value::Array(items) => items.iter().map(plain).collect::<Vec<_>>().join(","),
            v => plain(v),
        });
        self.params.insert(flag.replace('-', "_"), value);
        self
    }

    /// A derived value with no flag of its own.
    pub fn stat(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.params.insert(key.into(), value.into());
        self
    }

    /// A boolean flag; only recorded in `args` when set.
    pub fn switch(&mut self, flag: &str, on: bool) -> &mut Self {
        if on {
            self.args.push(format!("--{flag}"));
        }
        self.params.insert(flag.replace('-', "_"), Value::Boolean(on));
        self
    }

    pub fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.into(), Value::String(path.display().to_string()));
        self
    }

    pub fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.into(), Value::String(path.display().to_string()));
        self
    }

    fn render(&self, error: Option<&CliError>) -> String {
        let mut t = Table::new();
        t.insert("subcommand".into(), self.subcommand.into());
        t.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
        t.insert("status".into(), if error.is_some() { "failed" } else { "ok" }.into());
        if let Some(e) = error {
            t.insert("error_kind".into(), e.kind.into());
            t.insert("error".into(), e.message.clone().into());
        }
        for (k, v) in &self.params {
            t.insert(k.clone(), v.clone());
        }
        t.insert(
            "args".into(),
            Value::Array(self.args.iter().cloned().map(Value::String).collect()),
        );
        t.insert("duration_seconds".into(), self.started.elapsed().as_secs_f64().into());
        t.insert("inputs".into(), Value::Table(self.inputs.clone()));
        t.insert("outputs".into(), Value::Table(self.outputs.clone()));
        toml::to_string(&t).expect("manifest tables serialize")
    }

    pub fn write(&self, path: &Path, error: Option<&CliError>) -> CliResult<()> {
        loopgate::io::write_atomic(path, self.render(error).as_bytes()).map_err(CliError::from)
    }

    /// Writes the manifest whatever the outcome and passes the outcome on.
    /// A manifest write failure only surfaces when the run itself succeeded.
    pub fn finish(&self, path: Option<PathBuf>, outcome: CliResult<()>) -> CliResult<()> {
        let Some(path) = path else { return outcome };
        match outcome {
            Ok(()) => self.write(&path, None),
            Err(e) => {
                if let Err(m) = self.write(&path, Some(&e)) {
                    log::warn!("could not write manifest {}: {}", path.display(), m.message);
                }
                Err(e)
            }
        }
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Float(f) => format!("{f}"),
        other => other.to_string(),
    }
}

/// `<file>.manifest.toml` next to `file`.
pub fn sidecar(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.toml");
    file.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_flat_keys_then_tables() {
        let mut m = Manifest::new("simulate");
        m.param("sigma", 0.1).param("seed", 7i64).param("shape", "circle");
        m.param("sigmas", Value::Array(vec![0.01.into(), 0.1.into()]));
        m.switch("sequential", false);
        m.output("candidates", Path::new("out/candidates.csv"));
        let text = m.render(None);
        let parsed: Table = text.parse().unwrap();
        assert_eq!(parsed["sigma"].as_float(), Some(0.1));
        assert_eq!(parsed["seed"].as_integer(), Some(7));
        assert_eq!(parsed["status"].as_str(), Some("ok"));
        assert_eq!(parsed["outputs"]["candidates"].as_str(), Some("out/candidates.csv"));
        let args: Vec<&str> = parsed["args"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        assert_eq!(
            args,
            ["simulate", "--sigma", "0.1", "--seed", "7", "--shape", "circle", "--sigmas", "0.01,0.1"]
        );
    }

    #[test]
    fn failure_is_recorded() {
        let m = Manifest::new("verify");
        let text = m.render(Some(&CliError::new("parse", "line 3: bad")));
        let parsed: Table = text.parse().unwrap();
        assert_eq!(parsed["status"].as_str(), Some("failed"));
        assert_eq!(parsed["error_kind"].as_str(), Some("parse"));
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(sidecar(Path::new("a/v.csv")), Path::new("a/v.csv.manifest.toml"));
    }
}
