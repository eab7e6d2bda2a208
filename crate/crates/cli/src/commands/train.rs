use std::path::Path;

use anyhow::{bail, Context, Result};
use lstmica::lstm::{
    serialize, split_subjects, train_with_observer, DeepLstmModel, TrainHistory, TrainingExample,
    N_OUTPUTS, DEFAULT_DROPOUT,
};
use lstmica::numerics::SeededRng;
use lstmica::preprocess::{normalize_channels, NormalizationParams};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{self, MissingInput};
use crate::Reporter;

/// Subject ids of the cross-subject split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub input_channels: Vec<String>,
    pub n_params: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub stopped_early: bool,
}

pub struct TrainOutput {
    pub model: DeepLstmModel,
    pub history: TrainHistory,
    pub split: Split,
}

/// Deterministic subject split: `test_fraction` of all subjects are held
/// out, then `validation_fraction` of the rest go to validation.
pub fn make_split(subjects: &[String], cfg: &RunConfig, rng: &mut SeededRng) -> Result<Split> {
    let (trainval, test) = split_subjects(subjects.len(), cfg.train.test_fraction, rng);
    let (tr, va) = split_subjects(trainval.len(), cfg.train.validation_fraction, rng);
    if tr.is_empty() || va.is_empty() {
        bail!(MissingInput(format!(
            "{} subjects are too few for a train/validation/test split",
            subjects.len()
        )));
    }
    let name = |k: &usize| subjects[*k].clone();
    Ok(Split {
        train: tr.iter().map(|&k| name(&trainval[k])).collect(),
        validation: va.iter().map(|&k| name(&trainval[k])).collect(),
        test: test.iter().map(name).collect(),
    })
}

/// Normalized training pair for one subject, plus its channel labels and
/// normalization parameters.
fn load_example(
    dataset: &Path,
    subject: &str,
    channel: Option<&str>,
) -> Result<(TrainingExample, Vec<String>, NormalizationParams)> {
    let dir = io::subject_dir(dataset, subject);
    let eeg = io::pick_channel(io::eeg_part(&io::read(&dir.join(io::CONTAMINATED))?)?, channel)?;
    let eog = io::read(&dir.join(io::EOG))?;
    if eog.n_channels() != N_OUTPUTS {
        bail!(MissingInput(format!(
            "{}: expected {N_OUTPUTS} EOG channels, found {}",
            dir.join(io::EOG).display(),
            eog.n_channels()
        )));
    }
    let (xn, yn, params) = normalize_channels(eeg.data.view(), eog.data.view())
        .with_context(|| format!("normalizing subject {subject}"))?;
    let mut labels = eeg.labels.clone();
    labels.extend(eog.labels.iter().cloned());
    Ok((TrainingExample::new(xn, yn)?, labels, params))
}

pub fn run(cfg: &RunConfig, dataset: &Path, out: &Path, rep: &Reporter) -> Result<TrainOutput> {
    cfg.validate()?;
    let manifest = io::read_manifest(dataset)?;
    let subjects: Vec<String> = manifest.iter().map(|r| r.subject.clone()).collect();
    let mut rng = SeededRng::new(cfg.seed);
    let split = make_split(&subjects, cfg, &mut rng.fork())?;
    let channel = cfg.train.single_channel.as_deref();

    let mut norm_rows = Vec::new();
    let mut load = |ids: &[String]| -> Result<Vec<TrainingExample>> {
        let mut set = Vec::with_capacity(ids.len());
        for s in ids {
            let (ex, labels, params) = load_example(dataset, s, channel)?;
            norm_rows.push((s.clone(), labels, params));
            set.push(ex);
        }
        Ok(set)
    };
    let train_set = load(&split.train)?;
    let val_set = load(&split.validation)?;
    let input_channels: Vec<String> = norm_rows[0].1[..norm_rows[0].2.n_eeg].to_vec();
    for (s, labels, _) in &norm_rows {
        if labels[..input_channels.len().min(labels.len())] != input_channels[..] {
            bail!(MissingInput(format!("subject {s} has a different channel layout")));
        }
    }

    io::ensure_dir(out)?;
    let model = DeepLstmModel::with_architecture(
        input_channels.len(),
        cfg.train.hidden,
        &DEFAULT_DROPOUT,
        N_OUTPUTS,
        &mut rng.fork(),
    )?;
    rep.note(format!(
        "training on {} subjects ({} validation, {} held out), {} inputs, {} parameters",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        input_channels.len(),
        model.n_params()
    ));
    let tc = cfg.train.to_train_config();
    let (model, history) =
        train_with_observer(model, &train_set, &val_set, &tc, &mut rng.fork(), |r| {
            rep.note(format!(
                "epoch {:>3}  train {:.5}  val {:.5}",
                r.epoch, r.train_loss, r.val_loss
            ))
        })?;

    serialize::save(&out.join(io::MODEL), &model)?;
    write_history(&out.join("history.csv"), &history)?;
    io::write_normalization(&out.join(io::NORMALIZATION), &norm_rows)?;
    io::write_json(&out.join(io::SPLIT), &split)?;
    io::write_json(
        &out.join("train_summary.json"),
        &TrainSummary {
            input_channels,
            n_params: model.n_params(),
            epochs_run: history.epochs.len(),
            best_epoch: history.best_epoch,
            best_val_loss: history.best_val_loss(),
            initial_train_loss: history.initial_train_loss,
            initial_val_loss: history.initial_val_loss,
            stopped_early: history.stopped_early,
        },
    )?;
    cfg.echo_into(out)?;
    rep.note(format!(
        "best epoch {} (val {:.5}); model written to {}",
        history.best_epoch,
        history.best_val_loss(),
        out.join(io::MODEL).display()
    ));
    Ok(TrainOutput {
        model,
        history,
        split,
    })
}

fn write_history(path: &Path, h: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["epoch", "train_loss", "val_loss", "max_grad_norm", "clipped_steps"])?;
    for r in &h.epochs {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            r.max_grad_norm.to_string(),
            r.clipped_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
