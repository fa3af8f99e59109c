//! File-level drivers behind the command-line tool: dataset generation,
//! training with resumable checkpoints, evaluation, and the grid ablation.
//!
//! All file writes happen on the calling thread; compute fans out on a
//! dedicated rayon pool sized by the configured parallelism.

mod checkpoint;
mod config;
mod report;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION, MAGIC};
pub use config::{
    ExperimentConfig, ExperimentKind, MazeExperiment, MutationSettings, CONFIG_VERSION,
};
pub use report::{
    count_rows, read_report, write_json, ReportRow, ReportWriter, RunSummary, SplitName, HEADER,
    REPORT_VERSION,
};

use crate::error::{Error, Result};
use crate::genome::{Bounds, Genome};
use crate::grid::{run_ablation, AblationReport};
use crate::maze::{generate_dataset, read_dataset, write_dataset, MazeRecord, MazeSampler};
use crate::meta::{measure_prior, run_faery, ObjectiveMode, PriorPopulation, SolveSummary};
use crate::rng::{self, tag};

pub const TRAIN_POOL_FILE: &str = "mazes_train.txt";
pub const TEST_POOL_FILE: &str = "mazes_test.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CHECKPOINT_EXPORT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "report_train.csv";
pub const TEST_REPORT_FILE: &str = "report_test.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVAL_REPORT_FILE: &str = "report_eval.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.json";
pub const COVERAGE_FILE: &str = "ablation_coverage.csv";
pub const POSITIONS_FILE: &str = "ablation_positions.csv";
pub const ABLATION_SUMMARY_FILE: &str = "ablation_summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::format("thread pool", e.to_string()))?;
    pool.install(f)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub train: usize,
    pub test: usize,
    pub distinct: usize,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

/// Train and test pools drawn from `seed`; identical to what `train` uses
/// when no dataset directory is configured.
pub fn generate_pools(
    n: usize,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(Vec<MazeRecord>, Vec<MazeRecord>)> {
    generate_dataset(n, train, test, &mut rng::stream(seed, &[tag::DATASET]))
}

pub fn write_pools(
    dir: &Path,
    train: &[MazeRecord],
    test: &[MazeRecord],
) -> Result<DatasetSummary> {
    create_dir(dir)?;
    let write = |name: &str, records: &[MazeRecord]| -> Result<PathBuf> {
        let path = dir.join(name);
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_dataset(BufWriter::new(f), records).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let train_path = write(TRAIN_POOL_FILE, train)?;
    let test_path = write(TEST_POOL_FILE, test)?;
    let distinct = train
        .iter()
        .chain(test)
        .map(|r| r.layout.canonical_hex())
        .collect::<std::collections::HashSet<_>>()
        .len();
    Ok(DatasetSummary {
        train: train.len(),
        test: test.len(),
        distinct,
        train_path,
        test_path,
    })
}

pub fn read_pool(path: &Path) -> Result<Vec<MazeRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(f))
}

pub fn generate_dataset_files(
    n: usize,
    train: usize,
    test: usize,
    seed: u64,
    out: &Path,
) -> Result<DatasetSummary> {
    let (tr, te) = generate_pools(n, train, test, seed)?;
    write_pools(out, &tr, &te)
}

/// The configured pools: read from the dataset directory, or generated.
pub fn maze_pools(exp: &MazeExperiment, seed: u64) -> Result<(Vec<MazeRecord>, Vec<MazeRecord>)> {
    let (train, test) = match &exp.dataset {
        Some(dir) => (
            read_pool(&dir.join(TRAIN_POOL_FILE))?,
            read_pool(&dir.join(TEST_POOL_FILE))?,
        ),
        None => generate_pools(exp.n, exp.train_count, exp.test_count, seed)?,
    };
    for r in train.iter().chain(&test) {
        if r.layout.n() != exp.n {
            return Err(Error::config(
                "maze.n",
                format!("dataset holds {}x{} mazes", r.layout.n(), r.layout.n()),
            ));
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::config(
            "maze.dataset",
            "train and test pools must be non-empty",
        ));
    }
    Ok((train, test))
}

fn random_prior(len: usize, mu: usize, seed: u64) -> Vec<Genome> {
    let mut rng = rng::stream(seed, &[tag::INIT_PRIOR]);
    (0..mu)
        .map(|_| Genome::random(len, Bounds::default(), &mut rng))
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub summary: RunSummary,
    /// First meta-generation run by this invocation.
    pub resumed_from: usize,
}

/// Runs the maze meta-training. If `out` already holds a checkpoint from the
/// same seed and network shape, training resumes after it and the reports are
/// cut back to the meta-generations it covers.
pub fn train(cfg: &ExperimentConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let exp = cfg.maze()?;
    let seed = cfg.seed()?;
    let shape = exp.shape()?;
    let mutation = exp.mutation.resolve(shape.parameter_count())?;
    let (train_pool, test_pool) = maze_pools(exp, seed)?;
    let train_sampler = MazeSampler::new(&train_pool, &exp.sim, shape.clone())?;
    let test_sampler = MazeSampler::new(&test_pool, &exp.sim, shape.clone())?;

    create_dir(out)?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let (prior, start) = if ckpt_path.exists() {
        let ck = Checkpoint::load(&ckpt_path)?;
        if ck.master_seed != seed {
            return Err(Error::format(
                "checkpoint",
                format!(
                    "{} was written with seed {}, not {seed}",
                    ckpt_path.display(),
                    ck.master_seed
                ),
            ));
        }
        if ck.shape != shape || ck.prior.len() != exp.meta.mu {
            return Err(Error::format(
                "checkpoint",
                "network shape or prior size differs from the configuration",
            ));
        }
        (ck.prior, ck.next_generation as usize)
    } else {
        let genomes = random_prior(shape.parameter_count(), exp.meta.mu, seed);
        (PriorPopulation::from_genomes(genomes), 0)
    };
    std::fs::write(out.join(RESOLVED_CONFIG_FILE), cfg.to_toml()).map_err(|e| Error::io(out, e))?;

    let mut train_report = ReportWriter::open(&out.join(TRAIN_REPORT_FILE), start)?;
    let mut test_report = ReportWriter::open(&out.join(TEST_REPORT_FILE), start)?;
    let save = |prior: &PriorPopulation<Genome>, next: usize| -> Result<Checkpoint> {
        let ck = Checkpoint::new(shape.clone(), seed, next as u64, prior.clone())?;
        ck.save(&ckpt_path)?;
        checkpoint::write_atomic(&out.join(CHECKPOINT_EXPORT_FILE), ck.to_json().as_bytes())?;
        Ok(ck)
    };
    if start == 0 {
        save(&prior, 0)?;
    }

    let threads = cfg.threads(exp.meta.m_train.max(exp.meta.m_test));
    let final_prior = with_threads(threads, || {
        run_faery(
            prior,
            start,
            &train_sampler,
            Some(&test_sampler),
            &exp.meta,
            &mutation,
            seed,
            |row, prior| {
                if let Some(test) = &row.test {
                    test_report.append(&ReportRow {
                        meta_generation: row.meta_generation,
                        split: SplitName::Test,
                        solve: test.clone(),
                        scores: None,
                    })?;
                }
                train_report.append(&ReportRow {
                    meta_generation: row.meta_generation,
                    split: SplitName::Train,
                    solve: row.train.solve.clone(),
                    scores: Some(row.train.scores.clone()),
                })?;
                save(prior, row.meta_generation + 1).map(|_| ())
            },
        )
    })?;
    let checkpoint = Checkpoint::load(&ckpt_path)?;
    debug_assert_eq!(checkpoint.prior.genomes(), final_prior.genomes());

    let train_rows = read_report(&out.join(TRAIN_REPORT_FILE))?;
    let test_rows = read_report(&out.join(TEST_REPORT_FILE))?;
    let summary = RunSummary {
        format_version: REPORT_VERSION,
        master_seed: seed,
        meta_generations: train_rows.len(),
        final_train: train_rows.last().map(|r| r.solve.clone()),
        final_test: test_rows.last().map(|r| r.solve.clone()),
        initial_test: test_rows.first().map(|r| r.solve.clone()),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(TrainOutcome {
        checkpoint,
        summary,
        resumed_from: start,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub format_version: u32,
    pub master_seed: u64,
    pub scratch: bool,
    pub seeds: usize,
    pub result: SolveSummary,
}

/// Seeds QD instances on `m` tasks from the test pool with a trained prior,
/// or with a random population of the same size when `scratch` is set. The
/// tasks and QD streams depend only on the master seed, so a prior and its
/// scratch baseline see the same tasks.
pub fn eval(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    scratch: bool,
    m: Option<usize>,
    out: &Path,
) -> Result<EvalSummary> {
    cfg.validate()?;
    let exp = cfg.maze()?;
    let seed = cfg.seed()?;
    let shape = exp.shape()?;
    let mutation = exp.mutation.resolve(shape.parameter_count())?;
    let seeds = if scratch {
        random_prior(shape.parameter_count(), exp.meta.mu, seed)
    } else {
        let path = checkpoint
            .ok_or_else(|| Error::config("checkpoint", "required unless --scratch is given"))?;
        let ck = Checkpoint::load(path)?;
        if ck.shape != shape {
            return Err(Error::DimensionMismatch {
                what: "checkpoint network parameters",
                expected: shape.parameter_count(),
                actual: ck.shape.parameter_count(),
            });
        }
        ck.prior.genomes()
    };
    let (_, test_pool) = maze_pools(exp, seed)?;
    let sampler = MazeSampler::new(&test_pool, &exp.sim, shape)?;
    let m = m.unwrap_or(exp.meta.m_test);

    create_dir(out)?;
    let mut report = ReportWriter::open(&out.join(EVAL_REPORT_FILE), 0)?;
    let result = with_threads(cfg.threads(m), || {
        measure_prior(
            &seeds,
            &sampler,
            m,
            &exp.meta.qd,
            &mutation,
            seed,
            tag::EVAL_SAMPLE,
            tag::EVAL_QD,
            0,
        )
    })?;
    if m > 0 {
        report.append(&ReportRow {
            meta_generation: 0,
            split: SplitName::Eval,
            solve: result.clone(),
            scores: None,
        })?;
    }
    let summary = EvalSummary {
        format_version: REPORT_VERSION,
        master_seed: seed,
        scratch,
        seeds: seeds.len(),
        result,
    };
    write_json(&out.join(EVAL_SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeCoverage {
    pub mode: ObjectiveMode,
    pub runs: usize,
    /// Fraction of runs covering `Z0`, `Z1`, `Z2`.
    pub coverage: [f64; 3],
    pub all_zones: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSummary {
    pub format_version: u32,
    pub master_seed: u64,
    pub modes: Vec<ModeCoverage>,
}

/// Grid ablation over `modes`; `runs` overrides the configured run count.
pub fn ablate(
    cfg: &ExperimentConfig,
    runs: Option<usize>,
    modes: &[ObjectiveMode],
    out: &Path,
) -> Result<(AblationReport, AblationSummary)> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let mut ab = cfg.ablation.clone().unwrap_or_default();
    if let Some(r) = runs {
        ab.runs = r;
    }
    ab.validate()?;
    create_dir(out)?;
    let jobs = ab.runs * modes.len() * ab.meta.m_train;
    let report = with_threads(cfg.threads(jobs), || run_ablation(&ab, modes, seed))?;

    let create = |name: &str| -> Result<BufWriter<File>> {
        let path = out.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::io(&path, e))
    };
    report.write_coverage_csv(create(COVERAGE_FILE)?)?;
    report.write_positions_csv(create(POSITIONS_FILE)?)?;
    let summary = AblationSummary {
        format_version: REPORT_VERSION,
        master_seed: seed,
        modes: modes
            .iter()
            .map(|&mode| ModeCoverage {
                mode,
                runs: report.count_runs(mode, |_| true),
                coverage: report.coverage(mode),
                all_zones: report.count_runs(mode, |r| (0..3).all(|z| r.covered(z))),
            })
            .collect(),
    };
    write_json(&out.join(ABLATION_SUMMARY_FILE), &summary)?;
    Ok((report, summary))
}

/// ASCII drawing and canonical encoding of the maze generated from `seed`.
pub fn render_maze(n: usize, seed: u64) -> Result<String> {
    let rec = MazeRecord::from_seed(n, seed)?;
    Ok(format!(
        "{}\n{}\n",
        rec.layout.render_ascii(),
        rec.layout.canonical_hex()
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(g_outer: usize) -> ExperimentConfig {
        let text = format!(
            r#"
format_version = 1
seed = 11
parallelism = 2

[maze]
n = 3
train_count = 6
test_count = 3
hidden = [4]

[maze.sim]
episode_length = 60

[maze.meta]
mu = 3
lambda = 3
m_train = 2
m_test = 2
g_outer = {g_outer}

[maze.meta.qd]
g_qd_max = 4
"#
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn single_generation_run() {
        let dir = tempfile::tempdir().unwrap();
        let out = train(&tiny(1), dir.path()).unwrap();
        assert_eq!(
            report::count_rows(&dir.path().join(TRAIN_REPORT_FILE)).unwrap(),
            1
        );
        assert_eq!(
            report::count_rows(&dir.path().join(TEST_REPORT_FILE)).unwrap(),
            1
        );
        assert_eq!(out.checkpoint.next_generation, 1);
        assert_eq!(out.checkpoint.prior.len(), 3);
        let loaded = Checkpoint::load(&dir.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(loaded, out.checkpoint);
        assert_eq!(out.summary.meta_generations, 1);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let full = tempfile::tempdir().unwrap();
        train(&tiny(3), full.path()).unwrap();

        let part = tempfile::tempdir().unwrap();
        train(&tiny(1), part.path()).unwrap();
        let out = train(&tiny(3), part.path()).unwrap();
        assert_eq!(out.resumed_from, 1);
        for f in [
            CHECKPOINT_FILE,
            TRAIN_REPORT_FILE,
            TEST_REPORT_FILE,
            SUMMARY_FILE,
        ] {
            let a = std::fs::read(full.path().join(f)).unwrap();
            let b = std::fs::read(part.path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn resume_refuses_other_seed() {
        let dir = tempfile::tempdir().unwrap();
        train(&tiny(1), dir.path()).unwrap();
        let mut cfg = tiny(2);
        cfg.seed = Some(12);
        assert!(train(&cfg, dir.path()).is_err());
    }

    #[test]
    fn dataset_directory_matches_generated_pools() {
        let data = tempfile::tempdir().unwrap();
        let s = generate_dataset_files(3, 6, 3, 11, data.path()).unwrap();
        assert_eq!((s.train, s.test, s.distinct), (6, 3, 9));
        let mut cfg = tiny(1);
        let a = tempfile::tempdir().unwrap();
        train(&cfg, a.path()).unwrap();
        cfg.maze.as_mut().unwrap().dataset = Some(data.path().to_path_buf());
        let b = tempfile::tempdir().unwrap();
        train(&cfg, b.path()).unwrap();
        assert_eq!(
            std::fs::read(a.path().join(CHECKPOINT_FILE)).unwrap(),
            std::fs::read(b.path().join(CHECKPOINT_FILE)).unwrap()
        );
    }

    #[test]
    fn eval_with_zero_tasks_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let s = eval(&tiny(1), None, true, Some(0), dir.path()).unwrap();
        assert_eq!(s.result.tasks, 0);
        assert_eq!(
            report::count_rows(&dir.path().join(EVAL_REPORT_FILE)).unwrap(),
            0
        );
    }

    #[test]
    fn eval_rejects_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        train(&tiny(1), dir.path()).unwrap();
        let mut cfg = tiny(1);
        cfg.maze.as_mut().unwrap().hidden = vec![5];
        let err = eval(
            &cfg,
            Some(&dir.path().join(CHECKPOINT_FILE)),
            false,
            Some(1),
            dir.path(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
