//! Dataset layout and small file helpers shared by the commands.
//!
//! A dataset directory holds `manifest.csv` (`subject,seed,a,b`) and one
//! directory per subject with `contaminated.csv` (EEG channels),
//! `eog.csv` (VEOG and HEOG) and `pure.csv` (ground-truth EEG).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lstmica::preprocess::NormalizationParams;
use lstmica::recording::{read_recording, ChannelRole, Recording};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.csv";
pub const CONTAMINATED: &str = "contaminated.csv";
pub const EOG: &str = "eog.csv";
pub const PURE: &str = "pure.csv";
pub const MODEL: &str = "model.bin";
pub const SPLIT: &str = "split.json";
pub const CLEANED: &str = "cleaned.csv";
pub const EOG_ESTIMATE: &str = "eog_estimate.csv";
pub const REMOVAL_REPORT: &str = "removal_report.json";
pub const NORMALIZATION: &str = "normalization.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub subject: String,
    pub seed: u64,
    pub a: f64,
    pub b: f64,
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_manifest(dir: &Path, rows: &[ManifestRow]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestRow>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        bail!(MissingInput(format!(
            "{} has no {MANIFEST}; is it a dataset directory?",
            dir.display()
        )));
    }
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<ManifestRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!(MissingInput(format!("{} lists no subjects", path.display())));
    }
    Ok(rows)
}

pub fn read(path: &Path) -> Result<Recording> {
    if !path.exists() {
        bail!(MissingInput(format!("{} does not exist", path.display())));
    }
    read_recording(path).with_context(|| format!("reading {}", path.display()))
}

pub fn subject_dir(dataset: &Path, subject: &str) -> PathBuf {
    dataset.join(subject)
}

/// EEG channels of a recording: the rows tagged as EEG, or every row when
/// the recording carries no EOG/other tags.
pub fn eeg_part(rec: &Recording) -> Result<Recording> {
    match rec.select_role(ChannelRole::Eeg) {
        Some(r) => Ok(r),
        None => bail!(MissingInput("recording has no EEG channels".into())),
    }
}

/// Restricts `rec` to `label` when given.
pub fn pick_channel(rec: Recording, label: Option<&str>) -> Result<Recording> {
    match label {
        None => Ok(rec),
        Some(l) => match rec.index_of(l) {
            Some(i) => Ok(rec.select(&[i])),
            None => bail!(MissingInput(format!(
                "channel {l} not found (have {})",
                rec.labels.join(", ")
            ))),
        },
    }
}

/// Rows of `rec` in the order of `labels`.
pub fn align_channels(rec: &Recording, labels: &[String]) -> Result<Recording> {
    let idx = labels
        .iter()
        .map(|l| {
            rec.index_of(l)
                .ok_or_else(|| anyhow::Error::new(MissingInput(format!("channel {l} missing"))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rec.select(&idx))
}

#[derive(Debug, Serialize, Deserialize)]
struct NormRow {
    subject: String,
    channel: String,
    role: String,
    mean: f64,
    std: f64,
}

/// One row per channel: subject, channel, role, mean, std.
pub fn write_normalization(
    path: &Path,
    entries: &[(String, Vec<String>, NormalizationParams)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for (subject, labels, p) in entries {
        for (k, label) in labels.iter().enumerate() {
            let role = if k < p.n_eeg { "eeg" } else { "eog" };
            w.serialize(NormRow {
                subject: subject.clone(),
                channel: label.clone(),
                role: role.into(),
                mean: p.means[k],
                std: p.stds[k],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the EEG rows of a single-recording normalization file, keyed by
/// channel label.
pub fn read_eeg_normalization(path: &Path, labels: &[String]) -> Result<NormalizationParams> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<NormRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    let mut means = Vec::with_capacity(labels.len());
    let mut stds = Vec::with_capacity(labels.len());
    for l in labels {
        let row = rows
            .iter()
            .find(|r| r.role == "eeg" && r.channel.eq_ignore_ascii_case(l))
            .ok_or_else(|| MissingInput(format!("{}: no entry for {l}", path.display())))?;
        means.push(row.mean);
        stds.push(row.std);
    }
    Ok(NormalizationParams {
        means: Array1::from(means),
        stds: Array1::from(stds),
        n_eeg: labels.len(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A required input file or directory is absent or incomplete.
#[derive(Debug)]
pub struct MissingInput(pub String);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for MissingInput {}
