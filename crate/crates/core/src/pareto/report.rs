use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    detect_phase_change, pareto_front, pareto_improvements, summarize, EvalRecord, Improvement,
    ParetoError, ParetoPoint, PhaseChangeReport, SummaryOptions,
};

#[derive(Debug, Clone, Default)]
pub struct ReportOptions {
    pub summary: SummaryOptions,
}

/// Phase-change result for one method's strength series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PhaseChangeReport>,
    /// Why no report was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub benchmark: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ParetoPoint>,
    /// Every model on this benchmark, ordered by method then strength.
    pub points: Vec<ParetoPoint>,
    pub front: Vec<ParetoPoint>,
    pub improvements: Vec<Improvement>,
    pub phase_changes: Vec<PhaseOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub parent_id: String,
    pub ci_level: f64,
    pub bootstrap_n: usize,
    pub benchmarks: Vec<BenchmarkReport>,
}

/// Summarises every (model, benchmark) pair and derives fronts,
/// improvements over `parent_id` and per-method phase changes. Records of
/// the same model and benchmark are pooled.
pub fn analyze(
    records: &[EvalRecord],
    parent_id: &str,
    opts: &ReportOptions,
) -> Result<ParetoReport, ParetoError> {
    if !records.iter().any(|r| r.model_id == parent_id) {
        return Err(ParetoError::MissingParent(parent_id.to_string()));
    }
    let mut pooled: BTreeMap<(&str, &str), EvalRecord> = BTreeMap::new();
    for r in records {
        pooled
            .entry((r.benchmark.as_str(), r.model_id.as_str()))
            .and_modify(|p| p.trials.extend_from_slice(&r.trials))
            .or_insert_with(|| r.clone());
    }

    let mut by_benchmark: BTreeMap<&str, Vec<ParetoPoint>> = BTreeMap::new();
    for ((bench, _), rec) in &pooled {
        by_benchmark
            .entry(bench)
            .or_default()
            .push(summarize(rec, &opts.summary)?);
    }

    let mut benchmarks = Vec::new();
    for (bench, mut points) in by_benchmark {
        points.sort_by(|a, b| {
            a.method
                .cmp(&b.method)
                .then(a.strength.total_cmp(&b.strength))
                .then_with(|| a.model_id.cmp(&b.model_id))
        });
        let parent = points.iter().find(|p| p.model_id == parent_id).cloned();
        let others: Vec<ParetoPoint> = points
            .iter()
            .filter(|p| p.model_id != parent_id)
            .cloned()
            .collect();
        let improvements = parent
            .as_ref()
            .map(|par| pareto_improvements(&others, par))
            .unwrap_or_default();

        let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for p in &others {
            series
                .entry(&p.method)
                .or_default()
                .push((p.strength, p.accuracy_mean));
        }
        let phase_changes = series
            .into_iter()
            .map(|(method, s)| match detect_phase_change(bench, &s) {
                Ok(r) => PhaseOutcome {
                    method: method.to_string(),
                    report: Some(r),
                    skipped: None,
                },
                Err(e) => PhaseOutcome {
                    method: method.to_string(),
                    report: None,
                    skipped: Some(e.to_string()),
                },
            })
            .collect();

        benchmarks.push(BenchmarkReport {
            benchmark: bench.to_string(),
            front: pareto_front(&points),
            parent,
            points,
            improvements,
            phase_changes,
        });
    }
    Ok(ParetoReport {
        parent_id: parent_id.to_string(),
        ci_level: opts.summary.ci_level,
        bootstrap_n: opts.summary.bootstrap_n,
        benchmarks,
    })
}

#[derive(Serialize)]
struct PointRow<'a> {
    benchmark: &'a str,
    model_id: &'a str,
    method: &'a str,
    strength: f64,
    accuracy_mean: f64,
    ci_low: f64,
    ci_high: f64,
    mean_tokens: f64,
    median_tokens: f64,
    n_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_robust: Option<bool>,
}

impl<'a> From<&'a ParetoPoint> for PointRow<'a> {
    fn from(p: &'a ParetoPoint) -> Self {
        PointRow {
            benchmark: &p.benchmark,
            model_id: &p.model_id,
            method: &p.method,
            strength: p.strength,
            accuracy_mean: p.accuracy_mean,
            ci_low: p.accuracy_ci.0,
            ci_high: p.accuracy_ci.1,
            mean_tokens: p.mean_tokens,
            median_tokens: p.median_tokens,
            n_trials: p.n_trials,
            ci_robust: None,
        }
    }
}

#[derive(Serialize)]
struct PhaseRow<'a> {
    benchmark: &'a str,
    method: &'a str,
    max_slope_from: f64,
    max_slope_to: f64,
    max_slope: f64,
    gain_window_from: f64,
    gain_window_to: f64,
    gain_share: f64,
}

fn write_rows<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<(), ParetoError> {
    let csv_err = |source| ParetoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| ParetoError::io(path, e))
}

/// Writes `pareto_report.json` plus `points.csv`, `front.csv`,
/// `improvements.csv` and `phase_changes.csv` into `out_dir`.
pub fn write_report(report: &ParetoReport, out_dir: &Path) -> Result<Vec<PathBuf>, ParetoError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ParetoError::io(out_dir, e))?;
    let json = out_dir.join("pareto_report.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&json, text).map_err(|e| ParetoError::io(&json, e))?;

    let b = &report.benchmarks;
    let points = out_dir.join("points.csv");
    write_rows(
        &points,
        b.iter().flat_map(|r| r.points.iter().map(PointRow::from)),
    )?;
    let front = out_dir.join("front.csv");
    write_rows(
        &front,
        b.iter().flat_map(|r| r.front.iter().map(PointRow::from)),
    )?;
    let improvements = out_dir.join("improvements.csv");
    write_rows(
        &improvements,
        b.iter().flat_map(|r| {
            r.improvements.iter().map(|i| PointRow {
                ci_robust: Some(i.ci_robust),
                ..PointRow::from(&i.point)
            })
        }),
    )?;
    let phases = out_dir.join("phase_changes.csv");
    write_rows(
        &phases,
        b.iter().flat_map(|r| {
            r.phase_changes.iter().filter_map(|o| {
                let p = o.report.as_ref()?;
                Some(PhaseRow {
                    benchmark: &r.benchmark,
                    method: &o.method,
                    max_slope_from: p.max_slope_interval.0,
                    max_slope_to: p.max_slope_interval.1,
                    max_slope: p.max_slope,
                    gain_window_from: p.gain_window.0,
                    gain_window_to: p.gain_window.1,
                    gain_share: p.gain_share,
                })
            })
        }),
    )?;
    Ok(vec![json, points, front, improvements, phases])
}
