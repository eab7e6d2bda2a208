//! Multi-channel recordings and their on-disk CSV layout.
//!
//! A recording is stored as two files:
//!
//! * `<name>.csv` with header `time,<label1>,...,<labelN>` and one row per
//!   sample. `time` is `i / fs` seconds. Values are written with Rust's
//!   shortest round-trip float formatting, so reading back is bit-exact.
//! * `<name>.meta`, a `key=value` sidecar:
//!
//! ```text
//! format=lstmica-recording-v1
//! fs=200
//! subject=s03
//! roles=eeg,eeg,...,veog
//! ```
//!
//! The sidecar is optional on read: without it `fs` is inferred from the
//! time column and every channel is taken as EEG, which is enough to load
//! CSV exports of third-party datasets.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "lstmica-recording-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelRole {
    Eeg,
    Veog,
    Heog,
    Other,
}

impl fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelRole::Eeg => "eeg",
            ChannelRole::Veog => "veog",
            ChannelRole::Heog => "heog",
            ChannelRole::Other => "other",
        };
        f.write_str(s)
    }
}

impl FromStr for ChannelRole {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "eeg" => Ok(ChannelRole::Eeg),
            "veog" => Ok(ChannelRole::Veog),
            "heog" => Ok(ChannelRole::Heog),
            "other" => Ok(ChannelRole::Other),
            other => Err(format!("unknown channel role `{other}`")),
        }
    }
}

/// A real-valued multi-channel time series (`channels × samples`).
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: Array2<f64>,
    pub labels: Vec<String>,
    pub roles: Vec<ChannelRole>,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub subject: Option<String>,
}

impl Recording {
    /// Build an EEG recording; every channel gets the `Eeg` role.
    pub fn new(data: Array2<f64>, labels: Vec<String>, fs: f64) -> Result<Self> {
        let roles = vec![ChannelRole::Eeg; labels.len()];
        Self::with_roles(data, labels, roles, fs)
    }

    pub fn with_roles(
        data: Array2<f64>,
        labels: Vec<String>,
        roles: Vec<ChannelRole>,
        fs: f64,
    ) -> Result<Self> {
        if labels.len() != data.nrows() || roles.len() != data.nrows() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels and {} roles",
                data.nrows(),
                labels.len(),
                roles.len()
            )));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling rate {fs}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(Self {
            data,
            labels,
            roles,
            fs,
            subject: None,
        })
    }

    pub fn with_subject(mut self, subject: impl Into<String>) -> Self {
        self.subject = Some(subject.into());
        self
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel(&self, label: &str) -> Option<ArrayView1<'_, f64>> {
        self.index_of(label).map(|i| self.data.row(i))
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.eq_ignore_ascii_case(label))
    }

    /// Keep only channels with the given role, in their original order.
    pub fn select_role(&self, role: ChannelRole) -> Option<Recording> {
        let idx: Vec<usize> = (0..self.n_channels())
            .filter(|&i| self.roles[i] == role)
            .collect();
        if idx.is_empty() {
            return None;
        }
        Some(self.select(&idx))
    }

    pub fn select(&self, idx: &[usize]) -> Recording {
        Recording {
            data: self.data.select(ndarray::Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            roles: idx.iter().map(|&i| self.roles[i]).collect(),
            fs: self.fs,
            subject: self.subject.clone(),
        }
    }

    /// Samples `[start, start + len)` of every channel.
    pub fn slice(&self, start: usize, len: usize) -> Recording {
        Recording {
            data: self
                .data
                .slice(ndarray::s![.., start..start + len])
                .to_owned(),
            labels: self.labels.clone(),
            roles: self.roles.clone(),
            fs: self.fs,
            subject: self.subject.clone(),
        }
    }
}

/// Path of the metadata sidecar belonging to a CSV file.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Write `<path>` (CSV) and its `.meta` sidecar.
pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "time")?;
    for l in &rec.labels {
        write!(w, ",{l}")?;
    }
    writeln!(w)?;
    for t in 0..rec.n_samples() {
        write!(w, "{}", t as f64 / rec.fs)?;
        for c in 0..rec.n_channels() {
            write!(w, ",{}", rec.data[[c, t]])?;
        }
        writeln!(w)?;
    }
    w.flush()?;

    let mut meta = String::new();
    meta.push_str(&format!("format={FORMAT_TAG}\n"));
    meta.push_str(&format!("fs={}\n", rec.fs));
    if let Some(s) = &rec.subject {
        meta.push_str(&format!("subject={s}\n"));
    }
    let roles: Vec<String> = rec.roles.iter().map(|r| r.to_string()).collect();
    meta.push_str(&format!("roles={}\n", roles.join(",")));
    fs::write(meta_path(path), meta)?;
    Ok(())
}

/// Read a recording written by [`write_recording`] or any CSV with the same
/// layout.
pub fn read_recording(path: &Path) -> Result<Recording> {
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("time") {
        return Err(parse_err(1, "header must be `time,<label1>,...`".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n_ch = labels.len();

    let mut times = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != n_ch + 1 {
            return Err(parse_err(
                line,
                format!("row {line} has {} columns, expected {}", record.len(), n_ch + 1),
            ));
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("row {line}: cannot parse `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("row {line}: non-finite value")));
            }
            if k == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n_t = times.len();
    if n_t == 0 {
        return Err(parse_err(2, "no samples".into()));
    }
    // values are time-major; transpose to channels × samples
    let data = Array2::from_shape_vec((n_t, n_ch), values)
        .map_err(|e| Error::Dimension(e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .to_owned();

    let mut fs = None;
    let mut subject = None;
    let mut roles = vec![ChannelRole::Eeg; n_ch];
    let mpath = meta_path(path);
    if mpath.exists() {
        let text = fs::read_to_string(&mpath)?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i as u64 + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: mpath.clone(),
                line: lineno,
                msg: "expected key=value".into(),
            })?;
            let bad = |msg: String| Error::Parse {
                path: mpath.clone(),
                line: lineno,
                msg,
            };
            match k.trim() {
                "format" => {
                    if v.trim() != FORMAT_TAG {
                        return Err(bad(format!("unsupported format `{}`", v.trim())));
                    }
                }
                "fs" => fs = Some(v.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "subject" => subject = Some(v.trim().to_string()),
                "roles" => {
                    let parsed: std::result::Result<Vec<ChannelRole>, String> =
                        v.split(',').map(str::parse).collect();
                    let parsed = parsed.map_err(bad)?;
                    if parsed.len() != n_ch {
                        return Err(bad(format!("{} roles for {} channels", parsed.len(), n_ch)));
                    }
                    roles = parsed;
                }
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
    }
    let fs = match fs {
        Some(fs) => fs,
        None if n_t >= 2 && times[1] > times[0] => 1.0 / (times[1] - times[0]),
        None => return Err(parse_err(2, "cannot infer sampling rate".into())),
    };

    let mut rec = Recording::with_roles(data, labels, roles, fs)?;
    rec.subject = subject;
    Ok(rec)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("{kind:?}"),
        },
    }
}
