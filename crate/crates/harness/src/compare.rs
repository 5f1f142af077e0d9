//! Cross-run comparison: group metrics CSVs by run family (stem minus the
//! seed suffix), average per episode across seeds, and summarize the first
//! and final tenths of training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::metrics::{read_metrics, EpisodeRecord};
use crate::HarnessError;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TenthSummary {
    pub mean_return: f64,
    pub mean_violations_obstacle: f64,
    pub mean_violations_battery: f64,
    pub mean_violations_total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub runs: usize,
    /// Episodes kept after aligning runs to the shortest in the group.
    pub episodes: usize,
    pub mean_return: Vec<f64>,
    /// Sample standard deviation across runs (0 for a single run).
    pub std_return: Vec<f64>,
    pub mean_violations_obstacle: Vec<f64>,
    pub mean_violations_battery: Vec<f64>,
    pub first_tenth: TenthSummary,
    pub final_tenth: TenthSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnGap {
    pub a: String,
    pub b: String,
    /// `a`'s final-tenth mean return minus `b`'s.
    pub final_mean_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub groups: Vec<GroupSummary>,
    pub return_gaps: Vec<ReturnGap>,
    pub warnings: Vec<String>,
}

/// Run family of a metrics file: the file stem with a trailing
/// `_seed<digits>` stripped, so sibling seeds of one configuration group
/// together. Evaluation curves (`<family>_seed<n>_eval`) keep their own
/// `<family>_eval` group instead of mixing into the training curves.
pub fn group_stem(path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    let (body, eval) = match stem.strip_suffix("_eval") {
        Some(body) => (body, "_eval"),
        None => (stem, ""),
    };
    if let Some(pos) = body.rfind("_seed") {
        let digits = &body[pos + "_seed".len()..];
        if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            return format!("{}{eval}", &body[..pos]);
        }
    }
    stem.to_string()
}

/// Timing sidecars share the directory and the `_seed<n>` naming but carry a
/// different schema, so globs like `runs/*_seed*.csv` are allowed to sweep
/// them in; they are skipped with a warning rather than rejected.
fn is_timing_sidecar(path: &Path) -> bool {
    path.file_stem()
        .and_then(|s| s.to_str())
        .is_some_and(|s| s.ends_with("_timing"))
}

fn tenth(records: &[&[EpisodeRecord]], range: std::ops::Range<usize>) -> TenthSummary {
    let n = (records.len() * range.len()) as f64;
    let mut ret = 0.0;
    let (mut vo, mut vb) = (0.0, 0.0);
    for run in records {
        for r in &run[range.clone()] {
            ret += r.ret;
            vo += r.violations_obstacle as f64;
            vb += r.violations_battery as f64;
        }
    }
    TenthSummary {
        mean_return: ret / n,
        mean_violations_obstacle: vo / n,
        mean_violations_battery: vb / n,
        mean_violations_total: (vo + vb) / n,
    }
}

pub fn compare(paths: &[PathBuf]) -> Result<CompareReport, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::InvalidArg(
            "compare needs at least one metrics file".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut by_group: BTreeMap<String, Vec<Vec<EpisodeRecord>>> = BTreeMap::new();
    for path in paths {
        if is_timing_sidecar(path) {
            warnings.push(format!("skipped timing sidecar {}", path.display()));
            continue;
        }
        let records = read_metrics(path)?;
        if records.is_empty() {
            return Err(HarnessError::Metrics(format!(
                "{}: no episodes",
                path.display()
            )));
        }
        by_group.entry(group_stem(path)).or_default().push(records);
    }
    if by_group.is_empty() {
        return Err(HarnessError::InvalidArg(
            "compare found only timing sidecars among its inputs".into(),
        ));
    }
    let mut groups = Vec::with_capacity(by_group.len());
    for (group, runs) in &by_group {
        let len = runs.iter().map(Vec::len).min().expect("group is non-empty");
        if runs.iter().any(|r| r.len() != len) {
            warnings.push(format!(
                "group {group}: runs have unequal lengths; aligned to {len} episodes"
            ));
        }
        let aligned: Vec<&[EpisodeRecord]> = runs.iter().map(|r| &r[..len]).collect();

        let nruns = aligned.len() as f64;
        let mut mean_return = Vec::with_capacity(len);
        let mut std_return = Vec::with_capacity(len);
        let mut mean_vo = Vec::with_capacity(len);
        let mut mean_vb = Vec::with_capacity(len);
        for e in 0..len {
            let mean = aligned.iter().map(|r| r[e].ret).sum::<f64>() / nruns;
            let var = if aligned.len() > 1 {
                aligned.iter().map(|r| (r[e].ret - mean).powi(2)).sum::<f64>() / (nruns - 1.0)
            } else {
                0.0
            };
            mean_return.push(mean);
            std_return.push(var.sqrt());
            mean_vo.push(
                aligned.iter().map(|r| r[e].violations_obstacle as f64).sum::<f64>() / nruns,
            );
            mean_vb.push(
                aligned.iter().map(|r| r[e].violations_battery as f64).sum::<f64>() / nruns,
            );
        }

        let w = len.div_ceil(10);
        groups.push(GroupSummary {
            group: group.clone(),
            runs: aligned.len(),
            episodes: len,
            mean_return,
            std_return,
            mean_violations_obstacle: mean_vo,
            mean_violations_battery: mean_vb,
            first_tenth: tenth(&aligned, 0..w),
            final_tenth: tenth(&aligned, len - w..len),
        });
    }

    let mut return_gaps = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            return_gaps.push(ReturnGap {
                a: groups[i].group.clone(),
                b: groups[j].group.clone(),
                final_mean_gap: groups[i].final_tenth.mean_return
                    - groups[j].final_tenth.mean_return,
            });
        }
    }

    Ok(CompareReport {
        groups,
        return_gaps,
        warnings,
    })
}
