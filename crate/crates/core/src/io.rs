//! Text formats for trajectories, sweep tables and bound reports, and the
//! TOML run manifest.
//!
//! Floats are written with 17 significant digits, which reads back to the
//! same bits.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiments::{BoundCheck, BoundReport, SweepResult, SweepRun};
use crate::grid::{Field, FluxMode, Grid};
use crate::solver::{
    DeviationMoment, DeviationRecord, ModelParams, Snapshot, StepDiagnostics, Trajectory,
    TrajectoryKind,
};

const MAGIC: &str = "chemotaxis-fkpp-trajectory 1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("file ends before section [{0}]")]
    MissingSection(&'static str),
    #[error("nothing to write: {0}")]
    Empty(&'static str),
    #[error("manifest: {0}")]
    Manifest(String),
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn join<T>(items: impl IntoIterator<Item = T>, f: impl Fn(T) -> String) -> String {
    items.into_iter().map(f).collect::<Vec<_>>().join(" ")
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_trajectory_to(traj, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_to(traj: &Trajectory, out: &mut impl Write) -> Result<(), IoError> {
    if traj.snapshots.is_empty() {
        return Err(IoError::Empty("trajectory has no snapshots"));
    }
    let g = &traj.grid;
    let p = &traj.params;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "[grid]")?;
    writeln!(out, "lengths {}", join(g.lengths(), |x| num(*x)))?;
    writeln!(out, "cells {}", join(g.cells(), |c| c.to_string()))?;
    writeln!(out, "[params]")?;
    writeln!(out, "kind {}", traj.kind.as_str())?;
    writeln!(out, "epsilon {}", num(p.epsilon))?;
    writeln!(out, "mu {}", num(p.mu))?;
    writeln!(out, "dt {}", num(p.dt))?;
    writeln!(out, "horizon {}", num(p.horizon))?;
    writeln!(out, "flux_mode {}", p.flux_mode.as_str())?;
    writeln!(out, "allow_large_dt {}", p.allow_large_dt)?;
    writeln!(out, "[diagnostics {}]", traj.diagnostics.len())?;
    for d in &traj.diagnostics {
        writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            num(d.time),
            num(d.sup_u),
            d.argmax_u,
            num(d.min_u),
            d.argmin_u,
            num(d.min_v),
            num(d.sup_v),
            num(d.sup_grad_v),
            d.argmax_grad_v,
            num(d.sup_lap_v),
            d.argmax_lap_v,
            num(d.sup_z)
        )?;
    }
    let ks = traj.deviation_ks();
    writeln!(
        out,
        "[deviation {} ks {}]",
        traj.deviation.len(),
        join(&ks, |k| k.to_string())
    )?;
    for d in &traj.deviation {
        let mut line = format!("{} {} {}", num(d.time), num(d.sup), d.argmax);
        for m in &d.moments {
            write!(line, " {} {}", num(m.power), num(m.growth)).expect("string write");
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "[snapshots {}]", traj.snapshots.len())?;
    for s in &traj.snapshots {
        writeln!(
            out,
            "snapshot {} {} {}",
            s.step,
            num(s.time),
            u8::from(s.v.is_some())
        )?;
        writeln!(out, "u {}", join(s.u.values(), |x| num(*x)))?;
        if let Some(v) = &s.v {
            writeln!(out, "v {}", join(v.values(), |x| num(*x)))?;
        }
    }
    writeln!(out, "[end]")?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self, section: &'static str) -> Result<String, IoError> {
        match self.inner.next() {
            Some(l) => {
                self.line += 1;
                Ok(l?)
            }
            None => Err(IoError::MissingSection(section)),
        }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, IoError> {
        Err(IoError::Parse {
            line: self.line,
            message: message.into(),
        })
    }

    fn parse<T: FromStr>(&self, token: Option<&str>, what: &str) -> Result<T, IoError> {
        match token.map(str::parse::<T>) {
            Some(Ok(v)) => Ok(v),
            Some(Err(_)) => self.err(format!(
                "cannot parse {what} from {:?}",
                token.unwrap_or("")
            )),
            None => self.err(format!("missing {what}")),
        }
    }

    /// Reads `key value...` and returns the values.
    fn keyed(&mut self, section: &'static str, key: &str) -> Result<Vec<String>, IoError> {
        let l = self.next_line(section)?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return self.err(format!("expected `{key}`"));
        }
        Ok(it.map(String::from).collect())
    }

    fn scalar<T: FromStr>(&mut self, section: &'static str, key: &str) -> Result<T, IoError> {
        let vals = self.keyed(section, key)?;
        if vals.len() != 1 {
            return self.err(format!("`{key}` takes one value"));
        }
        self.parse(Some(&vals[0]), key)
    }

    fn list<T: FromStr>(&self, tokens: &[String], what: &str) -> Result<Vec<T>, IoError> {
        tokens.iter().map(|t| self.parse(Some(t), what)).collect()
    }

    /// Reads a section header `[name args...]` and returns the arguments.
    fn header(&mut self, name: &'static str) -> Result<Vec<String>, IoError> {
        let l = self.next_line(name)?;
        let inner = l.trim().strip_prefix('[').and_then(|s| s.strip_suffix(']'));
        let mut it = inner.unwrap_or("").split_whitespace();
        if it.next() != Some(name) {
            return self.err(format!("expected section [{name}]"));
        }
        Ok(it.map(String::from).collect())
    }
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, IoError> {
    read_trajectory_from(BufReader::new(fs::File::open(path)?))
}

pub fn read_trajectory_from(reader: impl BufRead) -> Result<Trajectory, IoError> {
    let mut r = Lines {
        inner: reader.lines(),
        line: 0,
    };
    if r.next_line("grid")?.trim() != MAGIC {
        return r.err("not a trajectory file");
    }
    r.header("grid")?;
    let lengths = r.keyed("grid", "lengths")?;
    let lengths: Vec<f64> = r.list(&lengths, "length")?;
    let cells = r.keyed("grid", "cells")?;
    let cells: Vec<usize> = r.list(&cells, "cell count")?;
    let grid = match Grid::new(&lengths, &cells) {
        Ok(g) => Arc::new(g),
        Err(e) => return r.err(e.to_string()),
    };

    r.header("params")?;
    let kind = match r.keyed("params", "kind")?.first().map(String::as_str) {
        Some("chemotaxis") => TrajectoryKind::Chemotaxis,
        Some("fisher-kpp") => TrajectoryKind::FisherKpp,
        other => return r.err(format!("unknown kind {other:?}")),
    };
    let epsilon = r.scalar("params", "epsilon")?;
    let mu = r.scalar("params", "mu")?;
    let dt = r.scalar("params", "dt")?;
    let horizon = r.scalar("params", "horizon")?;
    let flux_mode: FluxMode = r.scalar("params", "flux_mode")?;
    let allow_large_dt = r.scalar("params", "allow_large_dt")?;
    let params = ModelParams {
        epsilon,
        mu,
        dt,
        horizon,
        flux_mode,
        allow_large_dt,
    };

    let args = r.header("diagnostics")?;
    let count: usize = r.parse(args.first().map(String::as_str), "diagnostics count")?;
    let mut diagnostics = Vec::with_capacity(count);
    for _ in 0..count {
        let l = r.next_line("deviation")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 12 {
            return r.err(format!(
                "diagnostics rows have 12 columns, found {}",
                t.len()
            ));
        }
        let f = |i: usize, what| r.parse::<f64>(Some(t[i]), what);
        let n = |i: usize, what| r.parse::<usize>(Some(t[i]), what);
        diagnostics.push(StepDiagnostics {
            time: f(0, "time")?,
            sup_u: f(1, "sup_u")?,
            argmax_u: n(2, "argmax_u")?,
            min_u: f(3, "min_u")?,
            argmin_u: n(4, "argmin_u")?,
            min_v: f(5, "min_v")?,
            sup_v: f(6, "sup_v")?,
            sup_grad_v: f(7, "sup_grad_v")?,
            argmax_grad_v: n(8, "argmax_grad_v")?,
            sup_lap_v: f(9, "sup_lap_v")?,
            argmax_lap_v: n(10, "argmax_lap_v")?,
            sup_z: f(11, "sup_z")?,
        });
    }

    let args = r.header("deviation")?;
    let count: usize = r.parse(args.first().map(String::as_str), "deviation count")?;
    if args.get(1).map(String::as_str) != Some("ks") {
        return r.err("expected `ks` after the deviation count");
    }
    let ks: Vec<u32> = r.list(&args[2..], "k")?;
    let mut deviation = Vec::with_capacity(count);
    for _ in 0..count {
        let l = r.next_line("snapshots")?;
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 + 2 * ks.len() {
            return r.err(format!(
                "deviation rows have {} columns, found {}",
                3 + 2 * ks.len(),
                t.len()
            ));
        }
        let mut moments = Vec::with_capacity(ks.len());
        for (j, &k) in ks.iter().enumerate() {
            moments.push(DeviationMoment {
                k,
                power: r.parse(Some(t[3 + 2 * j]), "moment")?,
                growth: r.parse(Some(t[4 + 2 * j]), "moment")?,
            });
        }
        deviation.push(DeviationRecord {
            time: r.parse(Some(t[0]), "time")?,
            sup: r.parse(Some(t[1]), "sup")?,
            argmax: r.parse(Some(t[2]), "argmax")?,
            moments,
        });
    }

    let args = r.header("snapshots")?;
    let count: usize = r.parse(args.first().map(String::as_str), "snapshot count")?;
    if count == 0 {
        return r.err("trajectory has no snapshots");
    }
    let mut snapshots = Vec::with_capacity(count);
    for _ in 0..count {
        let head = r.keyed("end", "snapshot")?;
        if head.len() != 3 {
            return r.err("snapshot header is `snapshot <step> <time> <has_v>`");
        }
        let step = r.parse(Some(&head[0]), "step")?;
        let time = r.parse(Some(&head[1]), "time")?;
        let has_v: u8 = r.parse(Some(&head[2]), "has_v flag")?;
        let field = |r: &mut Lines<_>, key: &str| -> Result<Field, IoError> {
            let vals = r.keyed("end", key)?;
            let vals: Vec<f64> = r.list(&vals, "value")?;
            match Field::new(grid.clone(), vals) {
                Ok(f) => Ok(f),
                Err(e) => r.err(e.to_string()),
            }
        };
        let u = field(&mut r, "u")?;
        let v = if has_v == 1 {
            Some(field(&mut r, "v")?)
        } else {
            None
        };
        snapshots.push(Snapshot { step, time, u, v });
    }
    r.header("end")?;
    Ok(Trajectory {
        kind,
        grid,
        params,
        snapshots,
        diagnostics,
        deviation,
    })
}

pub const SWEEP_COLUMNS: &str = "epsilon,sup_error,argmax_time,tail_ok";
pub const REPORT_COLUMNS: &str = "bound_name,constant_names,fitted_values,margin,pass";

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = format!("{SWEEP_COLUMNS}\n");
    for r in &result.runs {
        writeln!(
            s,
            "{},{},{},{}",
            num(r.epsilon),
            num(r.sup_error),
            num(r.argmax_time),
            r.tail_ok
        )
        .expect("string write");
    }
    s
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<(), IoError> {
    if result.runs.is_empty() {
        return Err(IoError::Empty("sweep has no runs"));
    }
    fs::write(path, sweep_csv(result))?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<SweepResult, IoError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SWEEP_COLUMNS => {}
        _ => {
            return Err(IoError::Parse {
                line: 1,
                message: format!("expected header `{SWEEP_COLUMNS}`"),
            })
        }
    }
    let mut runs = Vec::new();
    for (i, l) in lines {
        let bad = |message: String| IoError::Parse {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("cannot parse number {s:?}")))
        };
        runs.push(SweepRun {
            epsilon: f(cols[0])?,
            sup_error: f(cols[1])?,
            argmax_time: f(cols[2])?,
            tail_ok: cols[3]
                .parse()
                .map_err(|_| bad(format!("cannot parse flag {:?}", cols[3])))?,
        });
    }
    if runs.is_empty() {
        return Err(IoError::Empty("sweep table has no rows"));
    }
    SweepResult::from_runs(runs).map_err(|e| IoError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

fn report_row(c: &BoundCheck) -> String {
    format!(
        "{},{},{},{},{}",
        c.name,
        c.constant_names.join(";"),
        c.fitted_values
            .iter()
            .map(|v| num(*v))
            .collect::<Vec<_>>()
            .join(";"),
        num(c.margin),
        c.pass
    )
}

pub fn report_csv(report: &BoundReport) -> String {
    let mut s = format!("{REPORT_COLUMNS}\n");
    for c in &report.checks {
        s.push_str(&report_row(c));
        s.push('\n');
    }
    s
}

pub fn write_bound_report(report: &BoundReport, path: &Path) -> Result<(), IoError> {
    if report.checks.is_empty() {
        return Err(IoError::Empty("bound report has no entries"));
    }
    fs::write(path, report_csv(report))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record written next to every run's outputs.
///
/// Wall-clock times are only recorded on request, so that identical runs
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: RunStatus,
    pub config_sha256: String,
    pub grid_sha256: String,
    pub params_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Scalar results such as the fitted slope.
    #[serde(default)]
    pub summary: std::collections::BTreeMap<String, f64>,
    #[serde(default)]
    pub outputs: Vec<OutputFile>,
    /// The full effective configuration.
    pub config: toml::Value,
}

fn canonical_toml<T: Serialize>(value: &T) -> Result<String, IoError> {
    toml::to_string(value).map_err(|e| IoError::Manifest(e.to_string()))
}

/// Hash of any serializable value; it is wrapped in a table first because
/// TOML documents cannot be bare scalars or arrays.
fn hash_value<T: Serialize>(value: &T) -> Result<String, IoError> {
    #[derive(Serialize)]
    struct Wrapped<'a, T: Serialize> {
        value: &'a T,
    }
    Ok(sha256_hex(canonical_toml(&Wrapped { value })?.as_bytes()))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    /// A manifest in the `running` state. `grid` and `params` are hashed
    /// separately so runs sharing a grid or parameters can be matched.
    pub fn begin<C: Serialize, G: Serialize, P: Serialize>(
        command: &str,
        config: &C,
        grid: &G,
        params: &P,
        wall_time: bool,
    ) -> Result<Self, IoError> {
        let text = canonical_toml(config)?;
        let config_value: toml::Value =
            toml::from_str(&text).map_err(|e| IoError::Manifest(e.to_string()))?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            status: RunStatus::Running,
            config_sha256: sha256_hex(text.as_bytes()),
            grid_sha256: hash_value(grid)?,
            params_sha256: hash_value(params)?,
            started_unix: wall_time.then(unix_now),
            finished_unix: None,
            error: None,
            summary: Default::default(),
            outputs: Vec::new(),
            config: config_value,
        })
    }

    /// Records an output file in `dir`, with its size and checksum.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<(), IoError> {
        let bytes = fs::read(dir.join(name))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(&mut self, status: RunStatus, error: Option<String>) {
        self.status = status;
        self.error = error;
        if self.started_unix.is_some() {
            self.finished_unix = Some(unix_now());
        }
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        canonical_toml(self)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| IoError::Manifest(e.to_string()))
    }
}
