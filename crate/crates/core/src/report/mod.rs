//! Comparison tables over finished runs and selection diagnostics from mask dumps.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain};
use crate::error::{Error, Result};
use crate::refine::AgentId;
use crate::train::{AgentSelection, AgentStep, MaskRecord, RunSummary};

pub const REPORT_HEADER: &str = "mode,scenario,mean_acc,std_acc,n_seeds";

/// Mean and sample standard deviation of one table cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Cell {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, std, n })
    }
}

/// Rows are run variants, columns are scenarios; absent combinations stay `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<String>,
    pub scenarios: Vec<String>,
    pub cells: Vec<Vec<Option<Cell>>>,
}

/// Canonical row order; unknown variants follow alphabetically.
const ROW_ORDER: [&str; 8] = [
    "source_only",
    "adversarial_only",
    "adversarial_ir",
    "without_modality0_agents",
    "without_modality1_agents",
    "without_s_agents",
    "without_t_agents",
    "supervised_target",
];

fn row_rank(name: &str) -> (usize, String) {
    let i = ROW_ORDER.iter().position(|r| *r == name).unwrap_or(ROW_ORDER.len());
    (i, name.to_string())
}

pub fn summarize(summaries: &[RunSummary]) -> Result<SummaryTable> {
    if summaries.is_empty() {
        return Err(Error::Input("no completed runs to summarize".into()));
    }
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in summaries {
        groups
            .entry((s.variant.clone(), s.scenario.clone()))
            .or_default()
            .push(s.final_accuracy);
    }
    let mut rows: Vec<String> = groups.keys().map(|(r, _)| r.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    rows.sort_by_key(|r| row_rank(r));
    let scenarios: Vec<String> = groups.keys().map(|(_, c)| c.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let cells = rows
        .iter()
        .map(|r| {
            scenarios
                .iter()
                .map(|c| groups.get(&(r.clone(), c.clone())).and_then(|v| Cell::from_values(v)))
                .collect()
        })
        .collect();
    Ok(SummaryTable { rows, scenarios, cells })
}

impl SummaryTable {
    pub fn get(&self, row: &str, scenario: &str) -> Option<&Cell> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.scenarios.iter().position(|x| x == scenario)?;
        self.cells[r][c].as_ref()
    }

    /// Mean over the scenario means present in a row, and whether any were missing.
    pub fn row_mean(&self, row: usize) -> Option<(f64, bool)> {
        let present: Vec<f64> = self.cells[row].iter().flatten().map(|c| c.mean).collect();
        if present.is_empty() {
            return None;
        }
        let partial = present.len() < self.scenarios.len();
        Some((present.iter().sum::<f64>() / present.len() as f64, partial))
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().flatten().all(Option::is_some)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            for (c, scen) in self.scenarios.iter().enumerate() {
                if let Some(cell) = &self.cells[r][c] {
                    let _ = writeln!(out, "{row},{scen},{},{},{}", cell.mean, cell.std, cell.n);
                }
            }
        }
        out
    }

    /// Aligned plain-text table in accuracy percent; gaps read `missing`.
    pub fn to_text(&self) -> String {
        let mut header = vec!["mode".to_string()];
        header.extend(self.scenarios.iter().cloned());
        header.push("mean".into());
        let mut lines = vec![header];
        for (r, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.clone()];
            for cell in &self.cells[r] {
                line.push(match cell {
                    Some(c) => format!("{:.1}±{:.1} (n={})", 100.0 * c.mean, 100.0 * c.std, c.n),
                    None => "missing".into(),
                });
            }
            line.push(match self.row_mean(r) {
                Some((m, false)) => format!("{:.1}", 100.0 * m),
                Some((m, true)) => format!("{:.1} (partial)", 100.0 * m),
                None => "missing".into(),
            });
            lines.push(line);
        }
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols)
            .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:<w$}"))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// Every `summary.json` below `dir`, in path order.
pub fn find_summaries(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, RunSummary)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", dir.display())));
    }
    let mut stack = vec![dir.to_path_buf()];
    let mut found = Vec::new();
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "summary.json") {
                found.push(path);
            }
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|p| {
            let s = RunSummary::load(&p)?;
            Ok((p, s))
        })
        .collect()
}

/// Precision of one agent over a window of steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub agent: String,
    pub first_step: usize,
    pub last_step: usize,
    pub precision: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub agents: Vec<AgentSelection>,
    pub trend: Vec<TrendPoint>,
}

/// Scores mask-dump rows against the dataset's negative flags. `windows` splits
/// the dumped step range into equal parts for the trend.
pub fn selection_report(masks: &[MaskRecord], dataset: &Dataset, windows: usize) -> Result<SelectionDiagnostics> {
    if masks.is_empty() {
        return Err(Error::Input("mask dump holds no records; was mask dumping enabled?".into()));
    }
    let negative: HashMap<(Domain, usize), bool> = dataset
        .source
        .iter()
        .chain(&dataset.target)
        .map(|s| ((s.domain, s.id), s.ground_truth_negative()))
        .collect();
    let lookup = |r: &MaskRecord| {
        negative
            .get(&(r.domain, r.segment_id))
            .copied()
            .ok_or_else(|| Error::Input(format!("segment {} ({}) not in dataset", r.segment_id, r.domain)))
    };
    let first = masks.iter().map(|r| r.step).min().unwrap_or(0);
    let last = masks.iter().map(|r| r.step).max().unwrap_or(0);
    let windows = windows.max(1);
    let span = (last - first + 1).div_ceil(windows);

    let mut totals: BTreeMap<AgentId, AgentStep> = BTreeMap::new();
    let mut per_window: BTreeMap<(AgentId, usize), AgentStep> = BTreeMap::new();
    for r in masks {
        let id = AgentId {
            domain: r.domain,
            modality: r.modality,
        };
        let neg = lookup(r)?;
        let mut c = AgentStep {
            presented: 1,
            presented_negative: usize::from(neg),
            ..AgentStep::default()
        };
        if r.removed {
            c.removed = 1;
            c.removed_negative = usize::from(neg);
            c.reward_sum = r.reward.unwrap_or(0.0);
        }
        totals.entry(id).or_default().merge(&c);
        per_window
            .entry((id, (r.step - first) / span))
            .or_default()
            .merge(&c);
    }
    let agents = totals
        .iter()
        .map(|(id, c)| AgentSelection::from_counts(*id, c))
        .collect();
    let trend = per_window
        .iter()
        .map(|((id, w), c)| TrendPoint {
            agent: id.to_string(),
            first_step: first + w * span,
            last_step: (first + (w + 1) * span - 1).min(last),
            precision: AgentSelection::from_counts(*id, c).precision,
        })
        .collect();
    Ok(SelectionDiagnostics { agents, trend })
}

impl SelectionDiagnostics {
    pub fn to_text(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:.3}", x));
        let mut out = String::from("agent  removed  precision  recall  baseline\n");
        for a in &self.agents {
            let _ = writeln!(
                out,
                "{:<5}  {:>7}  {:>9}  {:>6}  {:>8}",
                a.agent,
                a.removed,
                pct(a.precision),
                pct(a.recall),
                pct(a.baseline)
            );
        }
        out
    }
}
