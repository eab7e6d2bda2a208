use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lstmica::datagen::{segment, SegmentSpec};
use lstmica::numerics::corrcoef;
use lstmica::preprocess::{apply_normalization, normalize_eeg};
use lstmica::recording::Recording;
use lstmica::removal::{estimate_eog_error, evaluate_channels, ChannelMetrics, MetricsReport};
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{self, MissingInput};
use crate::Reporter;

/// Metrics of one subject against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectEvaluation {
    pub subject: String,
    pub cleaned_normalized: MetricsReport,
    pub contaminated_normalized: MetricsReport,
    pub cleaned_physical: MetricsReport,
    pub contaminated_physical: MetricsReport,
    pub eog: Option<EogEvaluation>,
    plot: PlotSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EogEvaluation {
    pub veog_mse: f64,
    pub heog_mse: f64,
    pub average_mse: f64,
    pub veog_corr: f64,
    pub heog_corr: f64,
    /// Average-MSE of each random segment.
    #[serde(skip)]
    pub segment_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct PlotSeries {
    fs: f64,
    labels: Vec<String>,
    contaminated: Array2<f64>,
    cleaned: Array2<f64>,
    pure: Array2<f64>,
    eog_true: Option<Array2<f64>>,
    eog_est: Option<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mse: MeanStd,
    pub mae: MeanStd,
    pub me: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub subjects: Vec<String>,
    pub channels: Vec<String>,
    pub cleaned_normalized: Aggregate,
    pub contaminated_normalized: Aggregate,
    pub cleaned_physical: Aggregate,
    pub contaminated_physical: Aggregate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eog_average_mse: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eog_segment_mse: Option<MeanStd>,
    pub eog_segments: usize,
}

/// `(subject, cleaned output directory)` pairs found under `cleaned`.
pub fn discover(cleaned: &Path) -> Result<Vec<(String, PathBuf)>> {
    let read_subject = |dir: &Path| -> Result<String> {
        let rec = io::read(&dir.join(io::CLEANED))?;
        Ok(rec.subject.unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        }))
    };
    if cleaned.join(io::CLEANED).exists() {
        return Ok(vec![(read_subject(cleaned)?, cleaned.to_path_buf())]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(cleaned)
        .with_context(|| format!("listing {}", cleaned.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(io::CLEANED).exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!(MissingInput(format!("no cleaned recordings under {}", cleaned.display())));
    }
    dirs.into_iter().map(|d| Ok((read_subject(&d)?, d))).collect()
}

fn same_shape(a: &Recording, b: &Recording, what: &str) -> Result<()> {
    if a.data.dim() != b.data.dim() {
        bail!(lstmica::Error::Dimension(format!(
            "{what}: cleaned is {:?}, reference is {:?}",
            a.data.dim(),
            b.data.dim()
        )));
    }
    Ok(())
}

pub fn evaluate_subject(
    cfg: &RunConfig,
    subject: &str,
    cleaned_dir: &Path,
    dataset: &Path,
) -> Result<SubjectEvaluation> {
    let cleaned = io::read(&cleaned_dir.join(io::CLEANED))?;
    let sdir = io::subject_dir(dataset, subject);
    let pure = io::align_channels(&io::read(&sdir.join(io::PURE))?, &cleaned.labels)?;
    let contaminated = io::align_channels(
        &io::eeg_part(&io::read(&sdir.join(io::CONTAMINATED))?)?,
        &cleaned.labels,
    )?;
    same_shape(&cleaned, &pure, subject)?;
    same_shape(&contaminated, &pure, subject)?;

    // normalized units: the contaminated recording's per-channel statistics
    let norm_file = cleaned_dir.join(io::NORMALIZATION);
    let params = if norm_file.exists() {
        io::read_eeg_normalization(&norm_file, &cleaned.labels)?
    } else {
        normalize_eeg(contaminated.data.view())?.1
    };
    let to_norm = |x: &Array2<f64>| apply_normalization(x.view(), params.eeg_means(), params.eeg_stds());
    let pure_n = to_norm(&pure.data)?;
    let cleaned_n = to_norm(&cleaned.data)?;
    let contaminated_n = to_norm(&contaminated.data)?;
    let labels = &cleaned.labels;

    let est_file = cleaned_dir.join(io::EOG_ESTIMATE);
    let eog_file = sdir.join(io::EOG);
    let (eog, eog_true, eog_est) = if est_file.exists() && eog_file.exists() {
        let truth = io::read(&eog_file)?;
        let (truth_n, _) = normalize_eeg(truth.data.view())?;
        let est = io::read(&est_file)?;
        if est.data.dim() != truth_n.dim() {
            bail!(lstmica::Error::Dimension(format!(
                "{subject}: EOG estimate is {:?}, ground truth is {:?}",
                est.data.dim(),
                truth_n.dim()
            )));
        }
        let (rows, avg) = estimate_eog_error(truth_n.view(), est.data.view())?;
        let stacked = Recording::new(
            ndarray::concatenate![Axis(0), truth_n, est.data],
            vec!["VEOG".into(), "HEOG".into(), "VEOG_est".into(), "HEOG_est".into()],
            est.fs,
        )?;
        let spec = SegmentSpec {
            count: cfg.evaluate.segments,
            min_len: cfg.evaluate.segment_min_len,
            max_len: cfg.evaluate.segment_max_len,
            seed: cfg.seed,
        };
        let segment_errors = if spec.count == 0 {
            Vec::new()
        } else {
            segment(&stacked, &spec)?
                .iter()
                .map(|s| {
                    let t = s.data.slice(ndarray::s![..2, ..]);
                    let e = s.data.slice(ndarray::s![2.., ..]);
                    estimate_eog_error(t, e).map(|(_, a)| a)
                })
                .collect::<lstmica::Result<Vec<_>>>()?
        };
        let ev = EogEvaluation {
            veog_mse: rows[0],
            heog_mse: rows[1],
            average_mse: avg,
            veog_corr: corrcoef(truth_n.row(0), est.data.row(0))?,
            heog_corr: corrcoef(truth_n.row(1), est.data.row(1))?,
            segment_errors,
        };
        (Some(ev), Some(truth_n), Some(est.data))
    } else {
        (None, None, None)
    };

    Ok(SubjectEvaluation {
        subject: subject.to_string(),
        cleaned_normalized: evaluate_channels(pure_n.view(), cleaned_n.view(), labels)?,
        contaminated_normalized: evaluate_channels(pure_n.view(), contaminated_n.view(), labels)?,
        cleaned_physical: evaluate_channels(pure.data.view(), cleaned.data.view(), labels)?,
        contaminated_physical: evaluate_channels(pure.data.view(), contaminated.data.view(), labels)?,
        eog,
        plot: PlotSeries {
            fs: cleaned.fs,
            labels: labels.clone(),
            contaminated: contaminated.data,
            cleaned: cleaned.data,
            pure: pure.data,
            eog_true,
            eog_est,
        },
    })
}

fn mean_std(v: &[f64]) -> MeanStd {
    let a = ndarray::Array1::from(v.to_vec());
    let (mean, std) = lstmica::numerics::mean_std(a.view());
    MeanStd { mean, std }
}

/// Per-channel metrics averaged over subjects.
fn channel_means(evals: &[SubjectEvaluation], pick: fn(&SubjectEvaluation) -> &MetricsReport) -> Vec<ChannelMetrics> {
    let n_ch = pick(&evals[0]).per_channel.len();
    let n = evals.len() as f64;
    (0..n_ch)
        .map(|c| {
            let mut m = ChannelMetrics::default();
            for e in evals {
                let x = pick(e).per_channel[c];
                m.mse += x.mse / n;
                m.mae += x.mae / n;
                m.me += x.me / n;
            }
            m
        })
        .collect()
}

fn aggregate(rows: &[ChannelMetrics]) -> Aggregate {
    let col = |f: fn(&ChannelMetrics) -> f64| mean_std(&rows.iter().map(f).collect::<Vec<_>>());
    Aggregate {
        mse: col(|m| m.mse),
        mae: col(|m| m.mae),
        me: col(|m| m.me),
    }
}

const TABLE_GROUPS: [&str; 4] = ["", "_uv", "contaminated_", "contaminated_uv_"];

fn table_header(first: &str) -> Vec<String> {
    let mut h = vec![first.to_string()];
    for g in TABLE_GROUPS {
        let (pre, post) = match g {
            "_uv" => ("", "_uv"),
            "contaminated_uv_" => ("contaminated_", "_uv"),
            other => (other, ""),
        };
        for m in ["mse", "mae", "me"] {
            h.push(format!("{pre}{m}{post}"));
        }
    }
    h
}

fn metric_cells(groups: [&ChannelMetrics; 4]) -> Vec<String> {
    groups
        .iter()
        .flat_map(|m| [m.mse.to_string(), m.mae.to_string(), m.me.to_string()])
        .collect()
}

pub fn run(
    cfg: &RunConfig,
    cleaned: &Path,
    dataset: &Path,
    out: &Path,
    rep: &Reporter,
) -> Result<EvaluationSummary> {
    cfg.validate()?;
    let found = discover(cleaned)?;
    let evals = found
        .par_iter()
        .map(|(s, d)| evaluate_subject(cfg, s, d, dataset).with_context(|| format!("evaluating {s}")))
        .collect::<Result<Vec<_>>>()?;
    let channels = evals[0].cleaned_normalized.labels.clone();
    if evals.iter().any(|e| e.cleaned_normalized.labels != channels) {
        bail!(lstmica::Error::Dimension("subjects have different channel sets".into()));
    }
    io::ensure_dir(out)?;

    let mut w = csv::Writer::from_path(out.join("subject_metrics.csv"))?;
    w.write_record(["subject", "channel", "units", "signal", "mse", "mae", "me"])?;
    for e in &evals {
        for (units, signal, rep_) in [
            ("normalized", "cleaned", &e.cleaned_normalized),
            ("normalized", "contaminated", &e.contaminated_normalized),
            ("uv", "cleaned", &e.cleaned_physical),
            ("uv", "contaminated", &e.contaminated_physical),
        ] {
            for (label, m) in rep_.labels.iter().zip(&rep_.per_channel) {
                w.write_record([
                    e.subject.as_str(),
                    label,
                    units,
                    signal,
                    &m.mse.to_string(),
                    &m.mae.to_string(),
                    &m.me.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let per = [
        channel_means(&evals, |e| &e.cleaned_normalized),
        channel_means(&evals, |e| &e.cleaned_physical),
        channel_means(&evals, |e| &e.contaminated_normalized),
        channel_means(&evals, |e| &e.contaminated_physical),
    ];
    let mut w = csv::Writer::from_path(out.join("channel_metrics.csv"))?;
    w.write_record(table_header("channel"))?;
    for (c, label) in channels.iter().enumerate() {
        let mut row = vec![label.clone()];
        row.extend(metric_cells([&per[0][c], &per[1][c], &per[2][c], &per[3][c]]));
        w.write_record(row)?;
    }
    w.flush()?;

    let aggs = [
        aggregate(&per[0]),
        aggregate(&per[1]),
        aggregate(&per[2]),
        aggregate(&per[3]),
    ];
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    w.write_record(table_header("statistic"))?;
    for (name, pick) in [
        ("mean", (|s: &MeanStd| s.mean) as fn(&MeanStd) -> f64),
        ("std", |s: &MeanStd| s.std),
    ] {
        let mut row = vec![name.to_string()];
        for a in &aggs {
            row.extend([pick(&a.mse), pick(&a.mae), pick(&a.me)].map(|v| v.to_string()));
        }
        w.write_record(row)?;
    }
    w.flush()?;

    let eog: Vec<(&str, &EogEvaluation)> = evals
        .iter()
        .filter_map(|e| e.eog.as_ref().map(|g| (e.subject.as_str(), g)))
        .collect();
    let mut segment_errors = Vec::new();
    if !eog.is_empty() {
        let mut w = csv::Writer::from_path(out.join("eog_errors.csv"))?;
        w.write_record(["subject", "veog_mse", "heog_mse", "average_mse", "veog_corr", "heog_corr"])?;
        for (s, g) in &eog {
            w.write_record([
                s.to_string(),
                g.veog_mse.to_string(),
                g.heog_mse.to_string(),
                g.average_mse.to_string(),
                g.veog_corr.to_string(),
                g.heog_corr.to_string(),
            ])?;
            segment_errors.extend_from_slice(&g.segment_errors);
        }
        w.flush()?;
    }

    write_plots(&out.join("plots"), &evals)?;

    let summary = EvaluationSummary {
        subjects: evals.iter().map(|e| e.subject.clone()).collect(),
        channels,
        cleaned_normalized: aggs[0],
        cleaned_physical: aggs[1],
        contaminated_normalized: aggs[2],
        contaminated_physical: aggs[3],
        eog_average_mse: (!eog.is_empty())
            .then(|| mean_std(&eog.iter().map(|(_, g)| g.average_mse).collect::<Vec<_>>())),
        eog_segment_mse: (!segment_errors.is_empty()).then(|| mean_std(&segment_errors)),
        eog_segments: segment_errors.len(),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    cfg.echo_into(out)?;
    rep.note(format!(
        "{} subjects: normalized MSE cleaned {:.4} vs contaminated {:.4}",
        summary.subjects.len(),
        summary.cleaned_normalized.mse.mean,
        summary.contaminated_normalized.mse.mean
    ));
    Ok(summary)
}

#[derive(Serialize)]
struct PlotEntry {
    file: String,
    title: String,
    x: String,
    x_label: String,
    y_label: String,
    panels: Vec<PlotPanel>,
}

#[derive(Serialize)]
struct PlotPanel {
    title: String,
    series: Vec<String>,
}

/// One CSV per subject with time, per-channel contaminated/cleaned/pure
/// (μV) and true/estimated EOG (normalized), plus a manifest describing
/// the intended overlays.
fn write_plots(dir: &Path, evals: &[SubjectEvaluation]) -> Result<()> {
    io::ensure_dir(dir)?;
    let mut entries = Vec::new();
    for e in evals {
        let p = &e.plot;
        let file = format!("{}.csv", e.subject);
        let mut header = vec!["time".to_string()];
        let mut panels = Vec::new();
        for l in &p.labels {
            let cols = ["contaminated", "cleaned", "pure"].map(|k| format!("{l}_{k}"));
            header.extend(cols.iter().cloned());
            panels.push(PlotPanel {
                title: l.clone(),
                series: cols.to_vec(),
            });
        }
        if p.eog_true.is_some() {
            for name in ["VEOG", "HEOG"] {
                let cols = [format!("{name}_true"), format!("{name}_estimated")];
                header.extend(cols.iter().cloned());
                panels.push(PlotPanel {
                    title: format!("{name} (normalized)"),
                    series: cols.to_vec(),
                });
            }
        }
        let mut w = csv::Writer::from_path(dir.join(&file))?;
        w.write_record(&header)?;
        for t in 0..p.cleaned.ncols() {
            let mut row = vec![(t as f64 / p.fs).to_string()];
            for c in 0..p.labels.len() {
                row.push(p.contaminated[[c, t]].to_string());
                row.push(p.cleaned[[c, t]].to_string());
                row.push(p.pure[[c, t]].to_string());
            }
            if let (Some(y), Some(yh)) = (&p.eog_true, &p.eog_est) {
                for r in 0..2 {
                    row.push(y[[r, t]].to_string());
                    row.push(yh[[r, t]].to_string());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        entries.push(PlotEntry {
            file,
            title: format!("Subject {}: contaminated, cleaned and pure EEG", e.subject),
            x: "time".into(),
            x_label: "time (s)".into(),
            y_label: "amplitude (uV; EOG panels normalized)".into(),
            panels,
        });
    }
    io::write_json(&dir.join("plot_manifest.json"), &entries)
}
