//! The outer loop: learn a prior population whose members seed QD runs on
//! new tasks so they are solved in few generations.
//!
//! Each meta-generation mutates the prior into `lambda` offspring, seeds one
//! QD instance per sampled task with all `mu + lambda` candidates, credits
//! every solution to the candidate at the root of its tree, and keeps the
//! `mu` candidates selected by NSGA-II on polyvalence (number of solutions)
//! and adaptation speed (negated mean solution depth).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::nsga2_select;
use crate::genome::{delta_population, Mutate};
use crate::qd::{run_qd_instance, QdConfig, QdOutcome, Task};
use crate::rng::{self, tag};

/// Which meta-objectives feed prior selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    #[default]
    Joint,
    F0Only,
    F1Only,
}

impl ObjectiveMode {
    pub const ALL: [ObjectiveMode; 3] = [
        ObjectiveMode::F0Only,
        ObjectiveMode::F1Only,
        ObjectiveMode::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveMode::Joint => "joint",
            ObjectiveMode::F0Only => "f0_only",
            ObjectiveMode::F1Only => "f1_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub mu: usize,
    pub lambda: usize,
    /// Training tasks per meta-generation.
    pub m_train: usize,
    /// Held-out tasks measured per evaluated meta-generation; 0 disables.
    #[serde(default)]
    pub m_test: usize,
    pub g_outer: usize,
    /// Measure the test split every `test_every` meta-generations.
    #[serde(default = "one")]
    pub test_every: usize,
    #[serde(default)]
    pub objectives: ObjectiveMode,
    pub qd: QdConfig,
}

fn one() -> usize {
    1
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("meta.mu", self.mu),
            ("meta.lambda", self.lambda),
            ("meta.m_train", self.m_train),
            ("meta.test_every", self.test_every),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        self.qd.validate("meta.qd")
    }
}

/// Polyvalence and adaptation speed of one candidate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaScore {
    pub f0: u64,
    /// Negated mean solution depth; `-inf` when `f0 == 0`.
    pub f1: f64,
}

impl Default for MetaScore {
    fn default() -> Self {
        MetaScore {
            f0: 0,
            f1: f64::NEG_INFINITY,
        }
    }
}

impl MetaScore {
    pub fn objectives(&self, mode: ObjectiveMode) -> Vec<f64> {
        match mode {
            ObjectiveMode::Joint => vec![self.f0 as f64, self.f1],
            ObjectiveMode::F0Only => vec![self.f0 as f64],
            ObjectiveMode::F1Only => vec![self.f1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorMember<G> {
    pub genome: G,
    pub score: MetaScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorPopulation<G> {
    pub members: Vec<PriorMember<G>>,
}

impl<G: Clone> PriorPopulation<G> {
    pub fn from_genomes(genomes: Vec<G>) -> Self {
        PriorPopulation {
            members: genomes
                .into_iter()
                .map(|genome| PriorMember {
                    genome,
                    score: MetaScore::default(),
                })
                .collect(),
        }
    }

    pub fn genomes(&self) -> Vec<G> {
        self.members.iter().map(|m| m.genome.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Aggregates solution counts and depths over every outcome.
pub fn compute_meta_scores<G>(
    outcomes: &[QdOutcome<G>],
    candidate_count: usize,
) -> Result<Vec<MetaScore>> {
    let mut counts = vec![0u64; candidate_count];
    let mut depth_sums = vec![0u64; candidate_count];
    for out in outcomes {
        for rec in out.forest.records() {
            if rec.root_index >= candidate_count {
                return Err(Error::RootOutOfRange {
                    index: rec.root_index,
                    count: candidate_count,
                });
            }
        }
        for (root, stats) in out.forest.root_stats(&out.solution_nodes())? {
            counts[root] += stats.solution_count as u64;
            depth_sums[root] += stats.solution_depths.iter().map(|&d| d as u64).sum::<u64>();
        }
    }
    Ok(counts
        .into_iter()
        .zip(depth_sums)
        .map(|(f0, depths)| {
            if f0 == 0 {
                MetaScore::default()
            } else {
                MetaScore {
                    f0,
                    f1: 0.0 - depths as f64 / f0 as f64,
                }
            }
        })
        .collect())
}

/// Solve statistics of one batch of QD instances.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub tasks: usize,
    pub solved: usize,
    pub solved_ratio: f64,
    /// Mean stopping generation over solved tasks only; `None` if none solved.
    pub mean_generations_over_solved: Option<f64>,
    pub count_unsolved: usize,
}

impl SolveSummary {
    pub fn from_outcomes<G>(outcomes: &[QdOutcome<G>]) -> Self {
        let gens: Vec<usize> = outcomes.iter().filter_map(|o| o.generations_used).collect();
        let tasks = outcomes.len();
        let solved = gens.len();
        SolveSummary {
            tasks,
            solved,
            solved_ratio: if tasks == 0 {
                0.0
            } else {
                solved as f64 / tasks as f64
            },
            mean_generations_over_solved: if solved == 0 {
                None
            } else {
                Some(gens.iter().sum::<usize>() as f64 / solved as f64)
            },
            count_unsolved: tasks - solved,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub scored: usize,
    pub f0_mean: f64,
    pub f0_max: u64,
    /// Over candidates with at least one solution.
    pub f1_mean: Option<f64>,
    pub f1_max: Option<f64>,
}

impl ScoreSummary {
    pub fn new(scores: &[MetaScore]) -> Self {
        let finite: Vec<f64> = scores.iter().filter(|s| s.f0 > 0).map(|s| s.f1).collect();
        ScoreSummary {
            scored: finite.len(),
            f0_mean: if scores.is_empty() {
                0.0
            } else {
                scores.iter().map(|s| s.f0 as f64).sum::<f64>() / scores.len() as f64
            },
            f0_max: scores.iter().map(|s| s.f0).max().unwrap_or(0),
            f1_mean: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
            f1_max: finite.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaGenReport {
    pub meta_generation: usize,
    pub solve: SolveSummary,
    pub scores: ScoreSummary,
}

/// Runs one QD instance per task in parallel; instance `i` draws from the
/// stream keyed by `(stream_tag, meta_generation, i)`.
pub fn run_instances<T, M>(
    tasks: &[T],
    seeds: &[T::Genome],
    qd: &QdConfig,
    mutator: &M,
    master_seed: u64,
    stream_tag: u64,
    meta_generation: usize,
) -> Result<Vec<QdOutcome<T::Genome>>>
where
    T: Task,
    M: Mutate<T::Genome>,
{
    tasks
        .par_iter()
        .enumerate()
        .map(|(i, task)| {
            let mut rng = rng::stream(master_seed, &[stream_tag, meta_generation as u64, i as u64]);
            let seeded = seeds
                .iter()
                .cloned()
                .enumerate()
                .map(|(j, g)| (g, j))
                .collect();
            run_qd_instance(task, seeded, qd, mutator, &mut rng)
        })
        .collect()
}

/// One iteration of the outer loop on the given training tasks.
pub fn meta_generation<T, M>(
    prior: &PriorPopulation<T::Genome>,
    tasks: &[T],
    cfg: &MetaConfig,
    mutator: &M,
    master_seed: u64,
    meta_generation: usize,
) -> Result<(PriorPopulation<T::Genome>, MetaGenReport)>
where
    T: Task,
    M: Mutate<T::Genome>,
{
    let parents = prior.genomes();
    let mut rng = rng::stream(master_seed, &[tag::PRIOR_OFFSPRING, meta_generation as u64]);
    let offspring = delta_population(&parents, cfg.lambda, mutator, &mut rng)?;
    // offspring come first, so exact ties favour the newer candidate and an
    // unscored prior member drifts instead of freezing in place
    let mut candidates = offspring.children;
    candidates.extend(parents);

    let outcomes = run_instances(
        tasks,
        &candidates,
        &cfg.qd,
        mutator,
        master_seed,
        tag::TRAIN_QD,
        meta_generation,
    )?;
    let scores = compute_meta_scores(&outcomes, candidates.len())?;
    let objectives: Vec<Vec<f64>> = scores
        .iter()
        .map(|s| s.objectives(cfg.objectives))
        .collect();
    let keep = nsga2_select(&objectives, cfg.mu)?;
    let mut slots: Vec<Option<T::Genome>> = candidates.into_iter().map(Some).collect();
    let members = keep
        .into_iter()
        .filter_map(|i| {
            slots[i].take().map(|genome| PriorMember {
                genome,
                score: scores[i],
            })
        })
        .collect();
    let report = MetaGenReport {
        meta_generation,
        solve: SolveSummary::from_outcomes(&outcomes),
        scores: ScoreSummary::new(&scores),
    };
    Ok((PriorPopulation { members }, report))
}

/// Source of tasks for one split.
pub trait TaskSampler: Sync {
    type Task: Task;

    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Self::Task>;
}

/// One row of progress, emitted after every meta-generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProgressRow {
    pub meta_generation: usize,
    pub train: MetaGenReport,
    /// Measurement of the prior that entered this meta-generation.
    pub test: Option<SolveSummary>,
}

/// Evaluates a prior as QD seeds on freshly sampled tasks without changing it.
pub fn measure_prior<S, M>(
    prior: &[<S::Task as Task>::Genome],
    sampler: &S,
    count: usize,
    qd: &QdConfig,
    mutator: &M,
    master_seed: u64,
    sample_tag: u64,
    qd_tag: u64,
    meta_generation: usize,
) -> Result<SolveSummary>
where
    S: TaskSampler,
    M: Mutate<<S::Task as Task>::Genome>,
{
    let mut rng = rng::stream(master_seed, &[sample_tag, meta_generation as u64]);
    let tasks = sampler.sample(count, &mut rng);
    let outcomes = run_instances(
        &tasks,
        prior,
        qd,
        mutator,
        master_seed,
        qd_tag,
        meta_generation,
    )?;
    Ok(SolveSummary::from_outcomes(&outcomes))
}

/// Runs meta-generations `start..cfg.g_outer`, calling `sink` after each with
/// the new prior. Test measurements never feed selection.
#[allow(clippy::too_many_arguments)]
pub fn run_faery<S, M, F>(
    initial: PriorPopulation<<S::Task as Task>::Genome>,
    start: usize,
    train: &S,
    test: Option<&S>,
    cfg: &MetaConfig,
    mutator: &M,
    master_seed: u64,
    mut sink: F,
) -> Result<PriorPopulation<<S::Task as Task>::Genome>>
where
    S: TaskSampler,
    M: Mutate<<S::Task as Task>::Genome>,
    F: FnMut(&ProgressRow, &PriorPopulation<<S::Task as Task>::Genome>) -> Result<()>,
{
    cfg.validate()?;
    let mut prior = initial;
    for g in start..cfg.g_outer {
        let test_row = match test {
            Some(sampler) if cfg.m_test > 0 && g % cfg.test_every == 0 => Some(measure_prior(
                &prior.genomes(),
                sampler,
                cfg.m_test,
                &cfg.qd,
                mutator,
                master_seed,
                tag::TEST_SAMPLE,
                tag::TEST_QD,
                g,
            )?),
            _ => None,
        };
        let mut rng = rng::stream(master_seed, &[tag::TRAIN_SAMPLE, g as u64]);
        let tasks = train.sample(cfg.m_train, &mut rng);
        let (next, report) = meta_generation(&prior, &tasks, cfg, mutator, master_seed, g)?;
        prior = next;
        sink(
            &ProgressRow {
                meta_generation: g,
                train: report,
                test: test_row,
            },
            &prior,
        )?;
    }
    Ok(prior)
}
