use std::path::Path;

use anyhow::Result;
use lstmica::datagen::{generate_subject, SimConfig};
use lstmica::recording::{write_recording, ChannelRole, Recording};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::io::{self, ManifestRow};
use crate::Reporter;

pub fn sim_config(cfg: &RunConfig) -> SimConfig {
    let s = &cfg.simulate;
    SimConfig {
        fs: s.fs,
        a_range: (s.a_range[0], s.a_range[1]),
        b_range: (s.b_range[0], s.b_range[1]),
        ..SimConfig::default()
    }
    .with_duration(s.duration_s)
}

/// Generates every subject and writes the dataset tree into `out`.
pub fn run(cfg: &RunConfig, out: &Path, rep: &Reporter) -> Result<Vec<ManifestRow>> {
    cfg.validate()?;
    io::ensure_dir(out)?;
    let sim = sim_config(cfg);
    let rows = (0..cfg.simulate.subjects)
        .into_par_iter()
        .map(|i| -> Result<ManifestRow> {
            let d = generate_subject(i, cfg.seed, &sim)?;
            let dir = io::subject_dir(out, &d.subject);
            io::ensure_dir(&dir)?;
            let rec = d.to_recording()?;
            write_recording(&dir.join(io::CONTAMINATED), &io::eeg_part(&rec)?)?;
            let eog_idx: Vec<usize> = (0..rec.n_channels())
                .filter(|&k| matches!(rec.roles[k], ChannelRole::Veog | ChannelRole::Heog))
                .collect();
            write_recording(&dir.join(io::EOG), &rec.select(&eog_idx))?;
            let pure = Recording::new(d.pure.clone(), d.labels.clone(), d.fs)?.with_subject(&d.subject);
            write_recording(&dir.join(io::PURE), &pure)?;
            Ok(ManifestRow {
                subject: d.subject,
                seed: d.seed,
                a: d.a,
                b: d.b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_manifest(out, &rows)?;
    cfg.echo_into(out)?;
    rep.note(format!(
        "simulated {} subjects ({} s at {} Hz) into {}",
        rows.len(),
        cfg.simulate.duration_s,
        cfg.simulate.fs,
        out.display()
    ));
    Ok(rows)
}
