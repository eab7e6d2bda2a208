use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lstmica::ica::IcaOptions;
use lstmica::lstm::{predict_eog, serialize, DeepLstmModel};
use lstmica::preprocess::normalize_eeg;
use lstmica::recording::{write_recording, ChannelRole, Recording};
use lstmica::removal::{remove_eog, RemovalConfig, RemovalOutcome};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::Split;
use crate::config::RunConfig;
use crate::io::{self, MissingInput};
use crate::Reporter;

/// What to clean.
#[derive(Debug, Clone)]
pub enum CleanInput {
    /// One recording CSV; outputs go straight into the output directory.
    File(PathBuf),
    /// The held-out subjects of a dataset (all subjects when the model
    /// directory has no split); outputs go to one directory per subject.
    Dataset(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub subject: Option<String>,
    pub channels: Vec<String>,
    pub threshold: f64,
    pub n_sources: usize,
    pub removed_source_ids: Vec<usize>,
    /// Largest |corr| of each source with any estimated EOG row.
    pub max_correlations: Vec<f64>,
    pub veog_correlations: Vec<f64>,
    pub heog_correlations: Vec<f64>,
    pub ica_converged: bool,
}

/// Model file inside `path` when it is a directory.
pub fn model_file(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(io::MODEL)
    } else {
        path.to_path_buf()
    }
}

pub fn load_model(path: &Path) -> Result<DeepLstmModel> {
    let file = model_file(path);
    if !file.exists() {
        bail!(MissingInput(format!("model file {} does not exist", file.display())));
    }
    serialize::load(&file).with_context(|| format!("loading model {}", file.display()))
}

fn removal_config(cfg: &RunConfig) -> RemovalConfig {
    RemovalConfig {
        threshold: cfg.clean.threshold,
        ica: IcaOptions {
            tol: cfg.clean.ica_tol,
            max_iter: cfg.clean.ica_max_iter,
        },
        seed: cfg.seed,
    }
}

/// Cleans one EEG recording (EEG-role rows only) and writes the outputs
/// into `out`.
pub fn clean_recording(
    cfg: &RunConfig,
    model: &DeepLstmModel,
    rec: &Recording,
    out: &Path,
) -> Result<(RemovalOutcome, RemovalReport)> {
    let eeg = io::pick_channel(io::eeg_part(rec)?, cfg.clean.single_channel.as_deref())?;
    let (xn, params) = normalize_eeg(eeg.data.view())?;
    let y_hat = predict_eog(model, xn.view())?;
    let outcome = remove_eog(xn.view(), y_hat.view(), &params, &removal_config(cfg))?;

    io::ensure_dir(out)?;
    let mut cleaned = Recording::new(outcome.cleaned.clone(), eeg.labels.clone(), eeg.fs)?;
    cleaned.subject = eeg.subject.clone();
    write_recording(&out.join(io::CLEANED), &cleaned)?;
    let mut est = Recording::with_roles(
        y_hat,
        vec!["VEOG".into(), "HEOG".into()],
        vec![ChannelRole::Veog, ChannelRole::Heog],
        eeg.fs,
    )?;
    est.subject = eeg.subject.clone();
    write_recording(&out.join(io::EOG_ESTIMATE), &est)?;
    let subject = eeg.subject.clone().unwrap_or_default();
    io::write_normalization(
        &out.join(io::NORMALIZATION),
        &[(subject, eeg.labels.clone(), params)],
    )?;
    let report = RemovalReport {
        subject: eeg.subject.clone(),
        channels: eeg.labels.clone(),
        threshold: cfg.clean.threshold,
        n_sources: outcome.max_correlations.len(),
        removed_source_ids: outcome.removed_source_ids.clone(),
        max_correlations: outcome.max_correlations.to_vec(),
        veog_correlations: outcome.correlations.row(0).to_vec(),
        heog_correlations: outcome.correlations.row(1).to_vec(),
        ica_converged: outcome.ica_converged.iter().all(|&c| c),
    };
    io::write_json(&out.join(io::REMOVAL_REPORT), &report)?;
    cfg.echo_into(out)?;
    Ok((outcome, report))
}

/// Subjects to clean from a dataset: the model's held-out split when
/// available, otherwise every subject in the manifest.
pub fn dataset_subjects(dataset: &Path, model_path: &Path) -> Result<Vec<String>> {
    let split_file = if model_path.is_dir() {
        model_path.join(io::SPLIT)
    } else {
        model_path
            .parent()
            .map(|p| p.join(io::SPLIT))
            .unwrap_or_else(|| PathBuf::from(io::SPLIT))
    };
    if split_file.exists() {
        let split: Split = io::read_json(&split_file)?;
        if !split.test.is_empty() {
            return Ok(split.test);
        }
    }
    Ok(io::read_manifest(dataset)?
        .into_iter()
        .map(|r| r.subject)
        .collect())
}

pub fn run(
    cfg: &RunConfig,
    model_path: &Path,
    input: &CleanInput,
    out: &Path,
    rep: &Reporter,
) -> Result<Vec<RemovalReport>> {
    cfg.validate()?;
    let model = load_model(model_path)?;
    let reports = match input {
        CleanInput::File(path) => {
            let rec = io::read(path)?;
            let (_, report) = clean_recording(cfg, &model, &rec, out)?;
            vec![report]
        }
        CleanInput::Dataset(dataset) => {
            let subjects = dataset_subjects(dataset, model_path)?;
            subjects
                .par_iter()
                .map(|s| {
                    let path = io::subject_dir(dataset, s).join(io::CONTAMINATED);
                    let mut rec = io::read(&path)?;
                    if rec.subject.is_none() {
                        rec.subject = Some(s.clone());
                    }
                    clean_recording(cfg, &model, &rec, &out.join(s))
                        .map(|(_, r)| r)
                        .with_context(|| format!("cleaning subject {s}"))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    io::ensure_dir(out)?;
    cfg.echo_into(out)?;
    for r in &reports {
        rep.note(format!(
            "{}: removed sources {:?} of {}",
            r.subject.as_deref().unwrap_or("recording"),
            r.removed_source_ids,
            r.n_sources
        ));
    }
    Ok(reports)
}
