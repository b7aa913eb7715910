//! CSV logs written during training.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anids_core::trainer::{ForceMetrics, StepRecord};

use crate::Error;

pub const STEP_HEADER: &str = "step,anids,kl,gamma,energy,force,total";
pub const EVAL_HEADER: &str = "step,force_mae,force_rms,force_cosine,energy_mae";

pub fn step_row(r: &StepRecord) -> String {
    let l = &r.losses;
    format!("{},{:?},{:?},{:?},{:?},{:?},{:?}", r.step, l.anids, l.kl, l.gamma, l.energy, l.force, l.total)
}

pub fn eval_row(step: u64, m: &ForceMetrics) -> String {
    format!("{step},{:?},{:?},{:?},{:?}", m.force_mae, m.force_rms, m.force_cosine, m.energy_mae)
}

/// Appends `rows` to `path`, writing `header` first when the file is new
/// or `append` is false.
pub fn write_rows(path: &Path, header: &str, rows: &[String], append: bool) -> Result<(), Error> {
    let fresh = !append || !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Rows of a log written by [`write_rows`], header dropped, each split on commas.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}
