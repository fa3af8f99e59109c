//! Per-meta-generation CSV reports and the JSON summary.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meta::{ScoreSummary, SolveSummary};

pub const REPORT_VERSION: u32 = 1;

pub const HEADER: [&str; 11] = [
    "meta_generation",
    "split",
    "tasks",
    "solved",
    "solved_ratio",
    "mean_generations_over_solved",
    "count_unsolved",
    "f0_mean",
    "f0_max",
    "f1_mean",
    "f1_max",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Test,
    Eval,
}

impl SplitName {
    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Test => "test",
            SplitName::Eval => "eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub meta_generation: usize,
    pub split: SplitName,
    #[serde(flatten)]
    pub solve: SolveSummary,
    pub scores: Option<ScoreSummary>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReportRow {
    fn record(&self) -> Vec<String> {
        let s = &self.solve;
        let mut r = vec![
            self.meta_generation.to_string(),
            self.split.name().to_string(),
            s.tasks.to_string(),
            s.solved.to_string(),
            s.solved_ratio.to_string(),
            opt(s.mean_generations_over_solved),
            s.count_unsolved.to_string(),
        ];
        match &self.scores {
            Some(sc) => r.extend([
                sc.f0_mean.to_string(),
                sc.f0_max.to_string(),
                opt(sc.f1_mean),
                opt(sc.f1_max),
            ]),
            None => r.extend(std::iter::repeat_n(String::new(), 4)),
        }
        r
    }
}

/// Append-only CSV report for one split, flushed after every row.
pub struct ReportWriter {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl ReportWriter {
    /// Creates a fresh report, or keeps the rows of an existing one whose
    /// meta-generation is below `keep_below` and appends after them.
    pub fn open(path: &Path, keep_below: usize) -> Result<Self> {
        let kept = if keep_below > 0 && path.exists() {
            read_rows_below(path, keep_below)?
        } else {
            Vec::new()
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(HEADER)?;
        for row in kept {
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(ReportWriter {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append(&mut self, row: &ReportRow) -> Result<()> {
        self.writer.write_record(row.record())?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn read_rows_below(path: &Path, keep_below: usize) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let g: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| {
            Error::format("report", format!("{}: bad meta_generation", path.display()))
        })?;
        if g < keep_below {
            rows.push(rec);
        }
    }
    Ok(rows)
}

/// Reads the rows of a report back into memory.
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse()
                .map(Some)
                .map_err(|_| Error::format("report", format!("bad number {s:?}")))
        }
    };
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::format("report", format!("bad number {s:?}")))
    };
    let int = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::format("report", format!("bad integer {s:?}")))
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != HEADER.len() {
            return Err(Error::format("report", "wrong column count"));
        }
        let split = match &rec[1] {
            "train" => SplitName::Train,
            "test" => SplitName::Test,
            "eval" => SplitName::Eval,
            other => return Err(Error::format("report", format!("unknown split {other:?}"))),
        };
        let scores = if rec[7].is_empty() {
            None
        } else {
            Some(ScoreSummary {
                scored: 0,
                f0_mean: num(&rec[7])?,
                f0_max: int(&rec[8])? as u64,
                f1_mean: parse_opt(&rec[9])?,
                f1_max: parse_opt(&rec[10])?,
            })
        };
        rows.push(ReportRow {
            meta_generation: int(&rec[0])?,
            split,
            solve: SolveSummary {
                tasks: int(&rec[2])?,
                solved: int(&rec[3])?,
                solved_ratio: num(&rec[4])?,
                mean_generations_over_solved: parse_opt(&rec[5])?,
                count_unsolved: int(&rec[6])?,
            },
            scores,
        });
    }
    Ok(rows)
}

/// Final-row aggregates for scripting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub master_seed: u64,
    pub meta_generations: usize,
    pub final_train: Option<SolveSummary>,
    pub final_test: Option<SolveSummary>,
    pub initial_test: Option<SolveSummary>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let mut f = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Number of data rows of a CSV file, for quick checks.
pub fn count_rows(path: &Path) -> Result<usize> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(f).lines().count().saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(g: usize, split: SplitName, solved: usize) -> ReportRow {
        ReportRow {
            meta_generation: g,
            split,
            solve: SolveSummary {
                tasks: 4,
                solved,
                solved_ratio: solved as f64 / 4.0,
                mean_generations_over_solved: (solved > 0).then_some(2.5),
                count_unsolved: 4 - solved,
            },
            scores: (split == SplitName::Train).then(|| ScoreSummary {
                scored: 1,
                f0_mean: 0.25,
                f0_max: 3,
                f1_mean: Some(-1.5),
                f1_max: None,
            }),
        }
    }

    #[test]
    fn rows_round_trip_and_resume_truncates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut w = ReportWriter::open(&path, 0).unwrap();
        for g in 0..4 {
            w.append(&row(g, SplitName::Train, g % 5)).unwrap();
        }
        drop(w);
        let rows = read_report(&path).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].solve, row(3, SplitName::Train, 3).solve);
        assert_eq!(rows[0].solve.mean_generations_over_solved, None);

        let mut w = ReportWriter::open(&path, 2).unwrap();
        w.append(&row(2, SplitName::Train, 1)).unwrap();
        drop(w);
        let rows = read_report(&path).unwrap();
        let gens: Vec<usize> = rows.iter().map(|r| r.meta_generation).collect();
        assert_eq!(gens, vec![0, 1, 2]);
        assert_eq!(rows[2].solve.solved, 1);
    }

    #[test]
    fn test_rows_leave_score_columns_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut w = ReportWriter::open(&path, 0).unwrap();
        w.append(&row(0, SplitName::Test, 0)).unwrap();
        drop(w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,test,4,0,0,,4,,,,");
        assert_eq!(count_rows(&path).unwrap(), 1);
    }
}
