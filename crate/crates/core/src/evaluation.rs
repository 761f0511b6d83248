//! AUROC, accuracy and the methods × datasets benchmark report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::DatasetKind;
use crate::error::{Error, Result};
use crate::method::Method;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub uncertainty: f64,
    pub correct: bool,
}

impl ScoredItem {
    pub fn new(uncertainty: f64, correct: bool) -> Self {
        Self {
            uncertainty,
            correct,
        }
    }
}

/// Probability that a random correct item has lower uncertainty than a
/// random incorrect one, ties counting one half.
///
/// Computed from mid-ranks in O(n log n); the rank sum is a multiple of
/// one half, so the result is exact and equals the pairwise definition.
pub fn auroc(items: &[ScoredItem]) -> Result<f64> {
    if let Some(bad) = items.iter().find(|i| !i.uncertainty.is_finite()) {
        return Err(Error::ContractViolation(format!(
            "non-finite uncertainty {}",
            bad.uncertainty
        )));
    }
    let n_correct = items.iter().filter(|i| i.correct).count();
    let n_wrong = items.len() - n_correct;
    if n_correct == 0 || n_wrong == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({n_correct} correct, {n_wrong} incorrect)"
        )));
    }

    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].uncertainty.total_cmp(&items[b].uncertainty));

    // Sum of (1-based) mid-ranks of the incorrect items.
    let mut wrong_rank_sum = 0.0f64;
    let mut start = 0;
    while start < order.len() {
        let value = items[order[start]].uncertainty;
        let mut end = start;
        while end < order.len() && items[order[end]].uncertainty == value {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let wrong_in_tie = order[start..end].iter().filter(|&&i| !items[i].correct).count();
        wrong_rank_sum += mid_rank * wrong_in_tie as f64;
        start = end;
    }
    let nw = n_wrong as f64;
    let u = wrong_rank_sum - nw * (nw + 1.0) / 2.0;
    Ok(u / (n_correct as f64 * nw))
}

pub fn accuracy(items: &[ScoredItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set".into()));
    }
    Ok(items.iter().filter(|i| i.correct).count() as f64 / items.len() as f64)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); `None` below two values.
pub fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// One (model, method, dataset) AUROC. `auroc` is `None` when the metric was
/// undefined for that cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: String,
    pub method: Method,
    pub dataset: DatasetKind,
    pub auroc: Option<f64>,
    pub n_items: usize,
    pub n_correct: usize,
}

impl Cell {
    pub fn published(model: &str, method: Method, dataset: DatasetKind, auroc: f64) -> Self {
        Self {
            model: model.into(),
            method,
            dataset,
            auroc: Some(auroc),
            n_items: 0,
            n_correct: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregate {
    pub average: Option<f64>,
    pub sd: Option<f64>,
    /// Cells that were missing and left out of the aggregate.
    pub missing: usize,
}

impl Aggregate {
    fn of(values: &[Option<f64>]) -> Self {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        Self {
            average: (!present.is_empty()).then(|| mean(&present)),
            sd: sample_sd(&present),
            missing: values.len() - present.len(),
        }
    }
}

/// Which cells are the best in their row: highest AUROC and average,
/// lowest SD.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Highlight {
    Cell { model: String, dataset: DatasetKind, method: Method },
    Average { model: String, method: Method },
    Sd { model: String, method: Method },
    OverallAverage { method: Method },
    OverallSd { method: Method },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub model: String,
    pub per_method: BTreeMap<Method, Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<Cell>,
    pub models: Vec<ModelBlock>,
    pub overall: BTreeMap<Method, Aggregate>,
    pub highlights: BTreeSet<Highlight>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl BenchmarkReport {
    pub fn methods(&self) -> Vec<Method> {
        let set: BTreeSet<Method> = self.cells.iter().map(|c| c.method).collect();
        set.into_iter().collect()
    }

    pub fn datasets(&self) -> Vec<DatasetKind> {
        let set: BTreeSet<DatasetKind> = self.cells.iter().map(|c| c.dataset).collect();
        set.into_iter().collect()
    }

    pub fn cell(&self, model: &str, method: Method, dataset: DatasetKind) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.method == method && c.dataset == dataset)
    }

    pub fn model(&self, model: &str) -> Option<&ModelBlock> {
        self.models.iter().find(|m| m.model == model)
    }

    pub fn is_highlighted(&self, h: &Highlight) -> bool {
        self.highlights.contains(h)
    }
}

/// Aggregate cells into per-model and overall averages and sample SDs.
pub fn build_report(cells: Vec<Cell>) -> Result<BenchmarkReport> {
    if cells.is_empty() {
        return Err(Error::ContractViolation("report needs at least one cell".into()));
    }
    let mut seen = BTreeSet::new();
    for c in &cells {
        if !seen.insert((c.model.clone(), c.method, c.dataset)) {
            return Err(Error::ContractViolation(format!(
                "duplicate cell ({}, {}, {})",
                c.model, c.method, c.dataset
            )));
        }
        if let Some(a) = c.auroc {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::ContractViolation(format!("AUROC {a} outside [0, 1]")));
            }
        }
    }

    let mut model_names: Vec<String> = Vec::new();
    for c in &cells {
        if !model_names.contains(&c.model) {
            model_names.push(c.model.clone());
        }
    }
    let methods: BTreeSet<Method> = cells.iter().map(|c| c.method).collect();
    let datasets: BTreeSet<DatasetKind> = cells.iter().map(|c| c.dataset).collect();

    let lookup = |model: &str, method: Method, dataset: DatasetKind| {
        cells
            .iter()
            .find(|c| c.model == model && c.method == method && c.dataset == dataset)
            .and_then(|c| c.auroc)
    };

    let mut highlights = BTreeSet::new();
    let mut models = Vec::new();
    for model in &model_names {
        let mut per_method = BTreeMap::new();
        for &method in &methods {
            let values: Vec<Option<f64>> = datasets.iter().map(|&d| lookup(model, method, d)).collect();
            per_method.insert(method, Aggregate::of(&values));
        }
        for &dataset in &datasets {
            let row: Vec<(Method, Option<f64>)> =
                methods.iter().map(|&m| (m, lookup(model, m, dataset))).collect();
            for method in best_of(&row, true) {
                highlights.insert(Highlight::Cell {
                    model: model.clone(),
                    dataset,
                    method,
                });
            }
        }
        let avg_row: Vec<_> = per_method.iter().map(|(m, a)| (*m, a.average)).collect();
        for method in best_of(&avg_row, true) {
            highlights.insert(Highlight::Average {
                model: model.clone(),
                method,
            });
        }
        let sd_row: Vec<_> = per_method.iter().map(|(m, a)| (*m, a.sd)).collect();
        for method in best_of(&sd_row, false) {
            highlights.insert(Highlight::Sd {
                model: model.clone(),
                method,
            });
        }
        models.push(ModelBlock {
            model: model.clone(),
            per_method,
        });
    }

    let mut overall = BTreeMap::new();
    for &method in &methods {
        let values: Vec<Option<f64>> = model_names
            .iter()
            .flat_map(|model| datasets.iter().map(move |&d| (model, d)))
            .map(|(model, d)| lookup(model, method, d))
            .collect();
        overall.insert(method, Aggregate::of(&values));
    }
    let avg_row: Vec<_> = overall.iter().map(|(m, a)| (*m, a.average)).collect();
    for method in best_of(&avg_row, true) {
        highlights.insert(Highlight::OverallAverage { method });
    }
    let sd_row: Vec<_> = overall.iter().map(|(m, a)| (*m, a.sd)).collect();
    for method in best_of(&sd_row, false) {
        highlights.insert(Highlight::OverallSd { method });
    }

    Ok(BenchmarkReport {
        cells,
        models,
        overall,
        highlights,
        metadata: BTreeMap::new(),
    })
}

/// Methods attaining the row optimum, compared at render precision.
fn best_of(row: &[(Method, Option<f64>)], maximize: bool) -> Vec<Method> {
    let present: Vec<(Method, f64)> = row
        .iter()
        .filter_map(|(m, v)| v.map(|v| (*m, fmt4(v).parse::<f64>().unwrap())))
        .collect();
    let best = present
        .iter()
        .map(|(_, v)| *v)
        .reduce(|a, b| if maximize { a.max(b) } else { a.min(b) });
    present
        .into_iter()
        .filter(|(_, v)| Some(*v) == best)
        .map(|(m, _)| m)
        .collect()
}

/// Four decimals. Rust float formatting rounds the exact binary value and
/// breaks exact ties to even.
pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt_cell(value: Option<f64>, bold: bool) -> String {
    match value {
        Some(v) if bold => format!("*{}", fmt4(v)),
        Some(v) => fmt4(v),
        None => String::new(),
    }
}

impl BenchmarkReport {
    /// Aligned text table: one block per model, then the overall rows.
    /// Best-in-row values are prefixed with `*`.
    pub fn render_text(&self) -> String {
        let methods = self.methods();
        let datasets = self.datasets();
        let label_width = 16;
        let col = 10;
        let mut out = String::new();
        let rule = "-".repeat(label_width + methods.len() * (col + 1));

        let _ = write!(out, "{:<label_width$}", "");
        for m in &methods {
            let _ = write!(out, " {:>col$}", m.label());
        }
        out.push('\n');
        out.push_str(&rule);
        out.push('\n');

        let row = |out: &mut String, label: &str, cells: Vec<String>| {
            let _ = write!(out, "{label:<label_width$}");
            for c in cells {
                let _ = write!(out, " {c:>col$}");
            }
            out.push('\n');
        };

        for block in &self.models {
            out.push_str(&block.model);
            out.push('\n');
            for &d in &datasets {
                let cells = methods
                    .iter()
                    .map(|&m| {
                        let v = self.cell(&block.model, m, d).and_then(|c| c.auroc);
                        let bold = self.is_highlighted(&Highlight::Cell {
                            model: block.model.clone(),
                            dataset: d,
                            method: m,
                        });
                        fmt_cell(v, bold)
                    })
                    .collect();
                row(&mut out, d.label(), cells);
            }
            let avg = methods
                .iter()
                .map(|&m| {
                    let bold = self.is_highlighted(&Highlight::Average {
                        model: block.model.clone(),
                        method: m,
                    });
                    fmt_cell(block.per_method.get(&m).and_then(|a| a.average), bold)
                })
                .collect();
            row(&mut out, "Average", avg);
            let sd = methods
                .iter()
                .map(|&m| {
                    let bold = self.is_highlighted(&Highlight::Sd {
                        model: block.model.clone(),
                        method: m,
                    });
                    fmt_cell(block.per_method.get(&m).and_then(|a| a.sd), bold)
                })
                .collect();
            row(&mut out, "SD", sd);
            out.push_str(&rule);
            out.push('\n');
        }

        let avg = methods
            .iter()
            .map(|&m| {
                let bold = self.is_highlighted(&Highlight::OverallAverage { method: m });
                fmt_cell(self.overall.get(&m).and_then(|a| a.average), bold)
            })
            .collect();
        row(&mut out, "Overall average", avg);
        let sd = methods
            .iter()
            .map(|&m| {
                let bold = self.is_highlighted(&Highlight::OverallSd { method: m });
                fmt_cell(self.overall.get(&m).and_then(|a| a.sd), bold)
            })
            .collect();
        row(&mut out, "Overall SD", sd);

        let missing: usize = self.cells.iter().filter(|c| c.auroc.is_none()).count();
        if missing > 0 {
            let _ = writeln!(out, "({missing} cell(s) undefined and excluded from aggregates)");
        }
        out
    }

    /// `model,method,dataset,auroc,n_items,n_correct`
    pub fn render_csv(&self) -> String {
        let mut out = String::from("model,method,dataset,auroc,n_items,n_correct\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&c.model),
                c.method,
                c.dataset,
                c.auroc.map(fmt4).unwrap_or_default(),
                c.n_items,
                c.n_correct
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
