//! One inner quality-diversity run: NSGA-II over (novelty, fitness) with
//! lineage tracking and early stopping once enough solutions are found.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::{novelty_scores_excluding, nsga2_select, Eviction, NoveltyArchive};
use crate::genome::{delta_population, Mutate};
use crate::lineage::EvolutionForest;

/// Result of running one episode of a policy on a task.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Discounted cumulative reward.
    pub fitness: f64,
    pub behavior: Vec<f64>,
    /// The task's solve predicate.
    pub solved: bool,
}

pub trait Task: Sync {
    type Genome: Clone + Send + Sync;

    fn evaluate(&self, genome: &Self::Genome) -> Result<Evaluation>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdConfig {
    /// Generation budget after the seed evaluation.
    pub g_qd_max: usize,
    /// Stop once this many solutions have been found.
    pub s_max: usize,
    /// Offspring per generation, as a multiple of the population size.
    pub c_lambda: f64,
    pub novelty_k: usize,
    pub archive_capacity: usize,
    #[serde(default)]
    pub eviction: Eviction,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            g_qd_max: 200,
            s_max: 1,
            c_lambda: 1.0,
            novelty_k: 15,
            archive_capacity: 5000,
            eviction: Eviction::UniformRandom,
        }
    }
}

impl QdConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.s_max == 0 {
            return Err(Error::config(
                format!("{prefix}.s_max"),
                "must be at least 1",
            ));
        }
        if !(self.c_lambda > 0.0 && self.c_lambda.is_finite()) {
            return Err(Error::config(
                format!("{prefix}.c_lambda"),
                "must be positive",
            ));
        }
        if self.novelty_k == 0 {
            return Err(Error::config(
                format!("{prefix}.novelty_k"),
                "must be positive",
            ));
        }
        if self.archive_capacity == 0 {
            return Err(Error::config(
                format!("{prefix}.archive_capacity"),
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn offspring_count(&self, population: usize) -> usize {
        ((self.c_lambda * population as f64).ceil() as usize).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct Solution<G> {
    pub node: usize,
    pub genome: G,
    pub generation: usize,
}

#[derive(Clone, Debug)]
pub struct QdOutcome<G> {
    pub solutions: Vec<Solution<G>>,
    /// Generation at which the run stopped, `None` when nothing was solved.
    /// Seed evaluation is generation 0.
    pub generations_used: Option<usize>,
    pub forest: EvolutionForest,
    pub solved: bool,
    pub evaluations: usize,
}

impl<G> QdOutcome<G> {
    pub fn solution_nodes(&self) -> Vec<usize> {
        self.solutions.iter().map(|s| s.node).collect()
    }
}

struct Member<G> {
    genome: G,
    node: usize,
    eval: Evaluation,
}

fn evaluate_nodes<T: Task>(
    task: &T,
    genomes: &[T::Genome],
    nodes: &[usize],
) -> Result<Vec<Evaluation>> {
    genomes
        .iter()
        .zip(nodes)
        .map(|(g, &node)| {
            task.evaluate(g).map_err(|e| Error::Evaluation {
                node,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs one QD instance seeded with `(genome, prior_index)` pairs.
///
/// Each generation produces `ceil(c_lambda * |pop|)` offspring round-robin,
/// evaluates them, scores parents and offspring for novelty against each other
/// and the archive, and keeps `|pop|` survivors by NSGA-II on
/// `(novelty, fitness)`. Behaviors enter the archive after novelty has been
/// computed for the generation that produced them.
pub fn run_qd_instance<T, M, R>(
    task: &T,
    seeds: Vec<(T::Genome, usize)>,
    cfg: &QdConfig,
    mutator: &M,
    rng: &mut R,
) -> Result<QdOutcome<T::Genome>>
where
    T: Task,
    M: Mutate<T::Genome>,
    R: Rng + ?Sized,
{
    cfg.validate("qd")?;
    if seeds.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mut seen = HashSet::new();
    for (_, idx) in &seeds {
        if !seen.insert(*idx) {
            return Err(Error::DuplicateSeed { index: *idx });
        }
    }

    let mut forest = EvolutionForest::new();
    let mut archive =
        NoveltyArchive::new(cfg.archive_capacity, cfg.novelty_k)?.with_eviction(cfg.eviction);
    let mut solutions = Vec::new();

    let nodes: Vec<usize> = seeds
        .iter()
        .map(|(_, idx)| forest.register_root(*idx))
        .collect();
    let genomes: Vec<T::Genome> = seeds.into_iter().map(|(g, _)| g).collect();
    let evals = evaluate_nodes(task, &genomes, &nodes)?;
    let mut evaluations = evals.len();
    let mut pop: Vec<Member<T::Genome>> = genomes
        .into_iter()
        .zip(nodes)
        .zip(evals)
        .map(|((genome, node), eval)| Member { genome, node, eval })
        .collect();
    for m in &pop {
        if m.eval.solved {
            solutions.push(Solution {
                node: m.node,
                genome: m.genome.clone(),
                generation: 0,
            });
        }
    }
    let finish =
        |solutions: Vec<Solution<T::Genome>>, forest, generation: Option<usize>, evaluations| {
            let solved = !solutions.is_empty();
            QdOutcome {
                solutions,
                generations_used: if solved { generation } else { None },
                forest,
                solved,
                evaluations,
            }
        };
    if solutions.len() >= cfg.s_max {
        return Ok(finish(solutions, forest, Some(0), evaluations));
    }
    let behaviors: Vec<Vec<f64>> = pop.iter().map(|m| m.eval.behavior.clone()).collect();
    let owners: Vec<Option<usize>> = pop.iter().map(|m| Some(m.node)).collect();
    archive.insert_owned(&behaviors, &owners, rng)?;

    let pop_size = pop.len();
    let lambda = cfg.offspring_count(pop_size);
    for generation in 1..=cfg.g_qd_max {
        let parents: Vec<T::Genome> = pop.iter().map(|m| m.genome.clone()).collect();
        let offspring = delta_population(&parents, lambda, mutator, rng)?;
        let nodes = offspring
            .parents
            .iter()
            .map(|&p| forest.register_child(pop[p].node))
            .collect::<Result<Vec<usize>>>()?;
        let evals = evaluate_nodes(task, &offspring.children, &nodes)?;
        evaluations += evals.len();
        let children: Vec<Member<T::Genome>> = offspring
            .children
            .into_iter()
            .zip(nodes)
            .zip(evals)
            .map(|((genome, node), eval)| Member { genome, node, eval })
            .collect();
        for m in &children {
            if m.eval.solved {
                solutions.push(Solution {
                    node: m.node,
                    genome: m.genome.clone(),
                    generation,
                });
            }
        }
        if solutions.len() >= cfg.s_max {
            return Ok(finish(solutions, forest, Some(generation), evaluations));
        }

        pop.extend(children);
        let behaviors: Vec<Vec<f64>> = pop.iter().map(|m| m.eval.behavior.clone()).collect();
        let ids: Vec<Option<usize>> = pop.iter().map(|m| Some(m.node)).collect();
        let novelty = novelty_scores_excluding(&behaviors, &ids, &archive)?;
        archive.insert_owned(&behaviors[pop_size..], &ids[pop_size..], rng)?;

        let objectives: Vec<Vec<f64>> = novelty
            .iter()
            .zip(&pop)
            .map(|(&n, m)| vec![n, m.eval.fitness])
            .collect();
        let keep = nsga2_select(&objectives, pop_size)?;
        let mut slots: Vec<Option<Member<T::Genome>>> = pop.into_iter().map(Some).collect();
        pop = keep.into_iter().filter_map(|i| slots[i].take()).collect();
    }
    let last = cfg.g_qd_max;
    Ok(finish(solutions, forest, Some(last), evaluations))
}
