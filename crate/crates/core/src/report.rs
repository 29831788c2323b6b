//! Consolidation of per-dataset scores into "maximum (average)" tables:
//! scores are averaged over the datasets of a task, then the max and mean
//! are taken across embedding dimensions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::CompareMethod;
use crate::error::{Error, Result};
use crate::eval::{ResultRecord, Task};

/// Underline threshold: cells within this distance of the task best.
pub const COMPARABLE_MARGIN: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Trainer {
    #[serde(rename = "sgns-cbow")]
    SgnsCbow,
    #[serde(rename = "sgns-sg")]
    SgnsSg,
    #[serde(rename = "glove")]
    Glove,
}

impl Trainer {
    pub const ALL: [Trainer; 3] = [Trainer::SgnsCbow, Trainer::SgnsSg, Trainer::Glove];

    pub fn as_str(self) -> &'static str {
        match self {
            Trainer::SgnsCbow => "sgns-cbow",
            Trainer::SgnsSg => "sgns-sg",
            Trainer::Glove => "glove",
        }
    }
}

impl fmt::Display for Trainer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Trainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trainer::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown trainer `{s}` (expected sgns-cbow, sgns-sg or glove)")))
    }
}

/// One trained model evaluated under one compare method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModelKey {
    pub trainer: Trainer,
    pub compare: CompareMethod,
    pub window: usize,
    pub dim: usize,
}

/// Unweighted mean of the dataset scores of one task.
pub fn aggregate_task(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::NotEnoughData("no dataset scores to aggregate".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsolidatedCell {
    pub max_score: f64,
    pub avg_score: f64,
    pub n_dims: usize,
    /// Dimensions that contributed, ascending.
    pub dims: Vec<usize>,
    /// Datasets behind the per-dimension task means, sorted.
    pub datasets: Vec<String>,
    /// Number of raw dataset scores behind this cell.
    pub n_scores: usize,
}

/// Max and mean of per-dimension task scores.
pub fn consolidate(by_dim: &BTreeMap<usize, f64>) -> Result<ConsolidatedCell> {
    if by_dim.is_empty() {
        return Err(Error::NotEnoughData("no dimensions to consolidate".into()));
    }
    let values: Vec<f64> = by_dim.values().copied().collect();
    let max_score = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg_score = aggregate_task(&values)?.min(max_score);
    Ok(ConsolidatedCell {
        max_score,
        avg_score,
        n_dims: values.len(),
        dims: by_dim.keys().copied().collect(),
        datasets: Vec::new(),
        n_scores: values.len(),
    })
}

/// Row label of a report table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowKey {
    pub task: Task,
    pub trainer: Trainer,
    pub window: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grid {
    pub rows: BTreeMap<RowKey, BTreeMap<CompareMethod, ConsolidatedCell>>,
}

impl Grid {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Compare methods that appear anywhere in the grid, in canonical order.
    pub fn compare_methods(&self) -> Vec<CompareMethod> {
        let set: BTreeSet<CompareMethod> = self.rows.values().flat_map(|r| r.keys().copied()).collect();
        set.into_iter().collect()
    }

    pub fn get(&self, row: &RowKey, cm: CompareMethod) -> Option<&ConsolidatedCell> {
        self.rows.get(row).and_then(|r| r.get(&cm))
    }

    /// Builds the grid from raw result lines.
    pub fn from_results(records: &[ResultRecord]) -> Result<Grid> {
        if records.is_empty() {
            return Err(Error::NotEnoughData("results file has no records".into()));
        }
        // (row, compare) -> dim -> dataset -> value
        type PerDim = BTreeMap<usize, BTreeMap<String, f64>>;
        let mut raw: BTreeMap<(RowKey, CompareMethod), PerDim> = BTreeMap::new();
        for r in records {
            if !r.value.is_finite() {
                return Err(Error::NonFinite(format!("score for {} {}", r.embedding, r.task)));
            }
            let key = RowKey {
                task: r.task,
                trainer: r.trainer.parse()?,
                window: r.window,
            };
            // A dataset evaluated twice for the same model keeps the last score.
            raw.entry((key, r.compare))
                .or_default()
                .entry(r.dim)
                .or_default()
                .insert(r.dataset.clone(), r.value);
        }
        let mut grid = Grid::default();
        for ((row, cm), per_dim) in raw {
            let mut by_dim = BTreeMap::new();
            let mut datasets = BTreeSet::new();
            let mut n_scores = 0;
            for (dim, scores) in &per_dim {
                let values: Vec<f64> = scores.values().copied().collect();
                by_dim.insert(*dim, aggregate_task(&values)?);
                datasets.extend(scores.keys().cloned());
                n_scores += values.len();
            }
            let mut cell = consolidate(&by_dim)?;
            cell.datasets = datasets.into_iter().collect();
            cell.n_scores = n_scores;
            grid.rows.entry(row).or_default().insert(cm, cell);
        }
        Ok(grid)
    }
}

pub fn format_cell(cell: &ConsolidatedCell) -> String {
    format!("{:.3} ({:.3})", cell.max_score, cell.avg_score)
}

/// Markdown table. Missing cells print as an em dash glyph; per task the
/// highest max score is bold and scores within [`COMPARABLE_MARGIN`] of it
/// are underlined.
pub fn render_markdown(grid: &Grid) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::NotEnoughData("empty grid".into()));
    }
    let methods = grid.compare_methods();
    let mut best: BTreeMap<Task, f64> = BTreeMap::new();
    for (row, cells) in &grid.rows {
        for cell in cells.values() {
            let b = best.entry(row.task).or_insert(f64::NEG_INFINITY);
            *b = b.max(cell.max_score);
        }
    }
    let mut out = String::from("| Task | Trainer | Window |");
    for cm in &methods {
        write!(out, " {cm} |").unwrap();
    }
    out.push_str("\n|---|---|---:|");
    for _ in &methods {
        out.push_str("---|");
    }
    out.push('\n');
    for (row, cells) in &grid.rows {
        write!(out, "| {} | {} | {} |", row.task, row.trainer, row.window).unwrap();
        for cm in &methods {
            let text = match cells.get(cm) {
                None => "\u{2014}".to_owned(),
                Some(cell) => {
                    let top = best[&row.task];
                    let s = format_cell(cell);
                    if cell.max_score == top {
                        format!("**{s}**")
                    } else if top - cell.max_score <= COMPARABLE_MARGIN {
                        format!("<u>{s}</u>")
                    } else {
                        s
                    }
                }
            };
            write!(out, " {text} |").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

const CSV_HEADER: [&str; 10] = [
    "task", "trainer", "window", "compare", "max_score", "avg_score", "n_dims", "dims", "datasets", "n_scores",
];

/// One line per present cell. Scores use the shortest exact decimal form so
/// the file parses back to the same grid; `dims` and `datasets` carry the
/// lineage as `;`-joined lists.
pub fn render_csv(grid: &Grid) -> Result<String> {
    if grid.is_empty() {
        return Err(Error::NotEnoughData("empty grid".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format("report.csv", e.to_string());
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for (row, cells) in &grid.rows {
        for (cm, cell) in cells {
            let dims: Vec<String> = cell.dims.iter().map(|d| d.to_string()).collect();
            w.write_record([
                row.task.to_string(),
                row.trainer.to_string(),
                row.window.to_string(),
                cm.to_string(),
                cell.max_score.to_string(),
                cell.avg_score.to_string(),
                cell.n_dims.to_string(),
                dims.join(";"),
                cell.datasets.join(";"),
                cell.n_scores.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::format("report.csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::format("report.csv", e.to_string()))
}

pub fn parse_csv(text: &str) -> Result<Grid> {
    let ctx = "report.csv";
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::format(ctx, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(ctx, "unexpected header"));
    }
    let mut grid = Grid::default();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::parse(ctx, line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or_default();
        let bad = |what: &str| Error::parse(ctx, line, format!("bad {what}"));
        let list = |s: &str| -> Vec<String> {
            if s.is_empty() {
                Vec::new()
            } else {
                s.split(';').map(str::to_owned).collect()
            }
        };
        let row = RowKey {
            task: field(0).parse().map_err(|_| bad("task"))?,
            trainer: field(1).parse().map_err(|_| bad("trainer"))?,
            window: field(2).parse().map_err(|_| bad("window"))?,
        };
        let cm: CompareMethod = field(3).parse().map_err(|_| bad("compare"))?;
        let dims = list(field(7))
            .iter()
            .map(|d| d.parse().map_err(|_| bad("dims")))
            .collect::<Result<Vec<usize>>>()?;
        let cell = ConsolidatedCell {
            max_score: field(4).parse().map_err(|_| bad("max_score"))?,
            avg_score: field(5).parse().map_err(|_| bad("avg_score"))?,
            n_dims: field(6).parse().map_err(|_| bad("n_dims"))?,
            dims,
            datasets: list(field(8)),
            n_scores: field(9).parse().map_err(|_| bad("n_scores"))?,
        };
        grid.rows.entry(row).or_default().insert(cm, cell);
    }
    Ok(grid)
}

/// Writes `report.md` and `report.csv` into `dir`.
pub fn write_reports(grid: &Grid, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("report.md", render_markdown(grid)?), ("report.csv", render_csv(grid)?)] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(trainer: &str, cm: CompareMethod, window: usize, dim: usize, task: Task, dataset: &str, value: f64) -> ResultRecord {
        ResultRecord {
            trainer: trainer.into(),
            window,
            dim,
            compare: cm,
            task,
            dataset: dataset.into(),
            value,
            aux: BTreeMap::new(),
            embedding: format!("{trainer}-w{window}-d{dim}.dualemb"),
            config_hash: "h".into(),
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_task(&[0.4, 0.6]).unwrap(), 0.5);
        assert_eq!(aggregate_task(&[0.37]).unwrap(), 0.37);
        let five = [0.52, 0.31, 0.44, 0.29, 0.61];
        let hand = (0.52 + 0.31 + 0.44 + 0.29 + 0.61) / 5.0;
        assert!((aggregate_task(&five).unwrap() - hand).abs() < 1e-15);
        assert!(aggregate_task(&[]).is_err());
    }

    #[test]
    fn consolidate_examples() {
        let cell = consolidate(&BTreeMap::from([(100, 0.50), (200, 0.52), (300, 0.51)])).unwrap();
        assert_eq!(cell.max_score, 0.52);
        assert!((cell.avg_score - 0.51).abs() < 1e-12);
        assert_eq!(cell.n_dims, 3);
        let one = consolidate(&BTreeMap::from([(100, 0.3)])).unwrap();
        assert_eq!(one.max_score, one.avg_score);
        assert!(consolidate(&BTreeMap::new()).is_err());
        let paper = ConsolidatedCell { max_score: 0.520, avg_score: 0.504, ..one };
        assert_eq!(format_cell(&paper), "0.520 (0.504)");
    }

    #[test]
    fn single_cell_markdown() {
        let grid = Grid::from_results(&[rec("sgns-sg", CompareMethod::WW, 5, 25, Task::Similarity, "mini", 0.25)]).unwrap();
        let md = render_markdown(&grid).unwrap();
        assert_eq!(
            md,
            "| Task | Trainer | Window | WW |\n|---|---|---:|---|\n| similarity | sgns-sg | 5 | **0.250 (0.250)** |\n"
        );
    }

    fn word2vec_grid() -> Vec<ResultRecord> {
        let mut out = Vec::new();
        let mut v = 0.0;
        for task in Task::ALL {
            for trainer in ["sgns-cbow", "sgns-sg"] {
                for window in [5, 50] {
                    for cm in [CompareMethod::WW, CompareMethod::WC, CompareMethod::CW, CompareMethod::CC] {
                        for dim in [100, 200, 300] {
                            v += 0.001;
                            out.push(rec(trainer, cm, window, dim, task, "d1", v));
                            out.push(rec(trainer, cm, window, dim, task, "d2", v / 2.0));
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn word2vec_grid_shape() {
        let grid = Grid::from_results(&word2vec_grid()).unwrap();
        assert_eq!(grid.rows.len(), 12);
        assert_eq!(grid.compare_methods().len(), 4);
        let md = render_markdown(&grid).unwrap();
        assert_eq!(md.lines().count(), 14);
        let first = md.lines().nth(2).unwrap();
        assert!(first.starts_with("| similarity | sgns-cbow | 5 |"), "{first}");
        let order: Vec<&str> = md.lines().skip(2).map(|l| l.split('|').nth(1).unwrap().trim()).collect();
        assert_eq!(&order[..1], ["similarity"]);
        assert_eq!(order[4], "association");
        assert_eq!(order[8], "analogy");
        let cell = grid.rows.values().next().unwrap().values().next().unwrap();
        assert_eq!(cell.n_scores, 6);
        assert_eq!(cell.datasets, ["d1", "d2"]);
    }

    #[test]
    fn missing_cells_and_markup() {
        let grid = Grid::from_results(&[
            rec("glove", CompareMethod::WW, 5, 25, Task::Association, "a", 0.30),
            rec("glove", CompareMethod::SS, 5, 25, Task::Association, "a", 0.29),
            rec("glove", CompareMethod::WW, 50, 25, Task::Association, "a", 0.10),
        ])
        .unwrap();
        let md = render_markdown(&grid).unwrap();
        assert!(md.contains("**0.300 (0.300)**"));
        assert!(md.contains("<u>0.290 (0.290)</u>"));
        assert!(md.contains("| 0.100 (0.100) | \u{2014} |"), "{md}");
        assert!(!md.contains("0.000"));
    }

    #[test]
    fn csv_round_trip() {
        let grid = Grid::from_results(&word2vec_grid()).unwrap();
        let csv = render_csv(&grid).unwrap();
        assert_eq!(parse_csv(&csv).unwrap(), grid);
        assert_eq!(render_csv(&grid).unwrap(), csv);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(Grid::from_results(&[]).is_err());
        assert!(render_markdown(&Grid::default()).is_err());
        assert!(parse_csv("nope\n").is_err());
    }
}
