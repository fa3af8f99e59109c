//! Grid bandit: guess one goal cell of a 40x40 grid in a single action.
//!
//! Goals are drawn from three disjoint zones of different size and distance
//! from the first row, where all agents start. This is the substrate for the
//! meta-objective ablation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::Mutate;
use crate::meta::{run_faery, MetaConfig, ObjectiveMode, PriorPopulation, TaskSampler};
use crate::qd::{Evaluation, QdConfig, Task};
use crate::rng::{self, tag};

/// A cell; `row` 0 is the row agents start on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridGenome {
    pub row: usize,
    pub col: usize,
}

impl GridGenome {
    pub fn behavior(&self) -> Vec<f64> {
        vec![self.row as f64, self.col as f64]
    }
}

/// Axis-aligned block of cells, bounds inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl Zone {
    pub fn contains(&self, c: GridGenome) -> bool {
        (self.rows.0..=self.rows.1).contains(&c.row) && (self.cols.0..=self.cols.1).contains(&c.col)
    }

    pub fn cells(&self) -> Vec<GridGenome> {
        (self.rows.0..=self.rows.1)
            .flat_map(|row| (self.cols.0..=self.cols.1).map(move |col| GridGenome { row, col }))
            .collect()
    }

    pub fn len(&self) -> usize {
        (self.rows.1 - self.rows.0 + 1) * (self.cols.1 - self.cols.0 + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorldSpec {
    pub side: usize,
    /// `Z0`, `Z1`, `Z2`.
    pub zones: [Zone; 3],
}

impl Default for GridWorldSpec {
    /// `Z1` small and close to the start row, `Z2` large, `Z0` small and far.
    fn default() -> Self {
        GridWorldSpec {
            side: 40,
            zones: [
                Zone {
                    rows: (33, 35),
                    cols: (3, 5),
                },
                Zone {
                    rows: (8, 11),
                    cols: (18, 21),
                },
                Zone {
                    rows: (26, 31),
                    cols: (13, 26),
                },
            ],
        }
    }
}

impl GridWorldSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, z) in self.zones.iter().enumerate() {
            if z.rows.0 > z.rows.1
                || z.cols.0 > z.cols.1
                || z.rows.1 >= self.side
                || z.cols.1 >= self.side
            {
                return Err(Error::config(
                    format!("world.zones[{i}]"),
                    "zone must be a non-empty block inside the grid",
                ));
            }
        }
        for i in 0..3 {
            for j in (i + 1)..3 {
                if self.zones[i]
                    .cells()
                    .iter()
                    .any(|&c| self.zones[j].contains(c))
                {
                    return Err(Error::config(
                        "world.zones",
                        format!("zones {i} and {j} overlap"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn zone_of(&self, c: GridGenome) -> Option<usize> {
        self.zones.iter().position(|z| z.contains(c))
    }

    /// Rows between the start row and the nearest row of zone `z`.
    pub fn distance_from_start(&self, z: usize) -> usize {
        self.zones[z].rows.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Per-zone halves of the goal cells; train takes the extra cell of odd zones.
#[derive(Clone, Debug)]
pub struct GridGoals {
    pub train: Vec<Vec<GridGenome>>,
    pub test: Vec<Vec<GridGenome>>,
}

impl GridGoals {
    pub fn split<R: Rng + ?Sized>(spec: &GridWorldSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for z in &spec.zones {
            let mut cells = z.cells();
            cells.shuffle(rng);
            let back = cells.split_off(cells.len().div_ceil(2));
            train.push(cells);
            test.push(back);
        }
        Ok(GridGoals { train, test })
    }

    pub fn cells(&self, split: Split) -> Vec<GridGenome> {
        let zones = match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        };
        zones.iter().flatten().copied().collect()
    }
}

/// Horizon-1 bandit: reward 1 only for the goal cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridTask {
    pub goal: GridGenome,
}

impl Task for GridTask {
    type Genome = GridGenome;

    fn evaluate(&self, genome: &GridGenome) -> Result<Evaluation> {
        let solved = *genome == self.goal;
        Ok(Evaluation {
            fitness: if solved { 1.0 } else { 0.0 },
            behavior: genome.behavior(),
            solved,
        })
    }
}

/// Uniform goal draws from the union of one split's cells.
#[derive(Clone, Debug)]
pub struct GridSampler {
    goals: Vec<GridGenome>,
}

impl GridSampler {
    pub fn new(goals: &GridGoals, split: Split) -> Self {
        GridSampler {
            goals: goals.cells(split),
        }
    }
}

impl TaskSampler for GridSampler {
    type Task = GridTask;

    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<GridTask> {
        (0..count)
            .map(|_| GridTask {
                goal: self.goals[rng.random_range(0..self.goals.len())],
            })
            .collect()
    }
}

pub fn sample_grid_task<R: Rng + ?Sized>(goals: &GridGoals, split: Split, rng: &mut R) -> GridTask {
    GridSampler::new(goals, split).sample(1, rng)[0]
}

/// Moves one of four directions (uniform) by `1..=step_max` cells, clamped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridMutation {
    pub side: usize,
    pub step_max: usize,
}

impl Mutate<GridGenome> for GridMutation {
    fn mutate<R: Rng + ?Sized>(&self, g: &GridGenome, rng: &mut R) -> GridGenome {
        let dir = rng.random_range(0..4u8);
        let step = rng.random_range(1..=self.step_max);
        let last = self.side - 1;
        let mut out = *g;
        match dir {
            0 => out.col = out.col.saturating_sub(step),
            1 => out.col = (out.col + step).min(last),
            2 => out.row = (out.row + step).min(last),
            _ => out.row = out.row.saturating_sub(step),
        }
        out
    }
}

pub fn grid_mutate<R: Rng + ?Sized>(
    g: &GridGenome,
    side: usize,
    step_max: usize,
    rng: &mut R,
) -> GridGenome {
    GridMutation { side, step_max }.mutate(g, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default)]
    pub world: GridWorldSpec,
    pub step_max: usize,
    pub runs: usize,
    pub meta: MetaConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            world: GridWorldSpec::default(),
            step_max: 3,
            runs: 15,
            meta: MetaConfig {
                mu: 25,
                lambda: 25,
                m_train: 100,
                m_test: 0,
                g_outer: 70,
                test_every: 1,
                objectives: ObjectiveMode::Joint,
                qd: QdConfig {
                    g_qd_max: 10,
                    s_max: 10,
                    ..QdConfig::default()
                },
            },
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        if self.step_max == 0 {
            return Err(Error::config("step_max", "must be positive"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be positive"));
        }
        self.meta.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub mode: ObjectiveMode,
    pub run: usize,
    pub positions: Vec<GridGenome>,
    /// Prior members inside each zone.
    pub zone_counts: [usize; 3],
}

impl AblationRun {
    pub fn covered(&self, zone: usize) -> bool {
        self.zone_counts[zone] > 0
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub runs: Vec<AblationRun>,
}

impl AblationReport {
    /// Fraction of runs of `mode` covering each zone.
    pub fn coverage(&self, mode: ObjectiveMode) -> [f64; 3] {
        let runs: Vec<&AblationRun> = self.runs.iter().filter(|r| r.mode == mode).collect();
        let mut out = [0.0; 3];
        if runs.is_empty() {
            return out;
        }
        for (z, o) in out.iter_mut().enumerate() {
            *o = runs.iter().filter(|r| r.covered(z)).count() as f64 / runs.len() as f64;
        }
        out
    }

    pub fn count_runs(&self, mode: ObjectiveMode, pred: impl Fn(&AblationRun) -> bool) -> usize {
        self.runs
            .iter()
            .filter(|r| r.mode == mode && pred(r))
            .count()
    }

    /// Rows `mode,run,zone,covered,member_count_in_zone`.
    pub fn write_coverage_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "run", "zone", "covered", "member_count_in_zone"])?;
        for r in &self.runs {
            for z in 0..3 {
                w.write_record([
                    r.mode.name().to_string(),
                    r.run.to_string(),
                    format!("Z{z}"),
                    r.covered(z).to_string(),
                    r.zone_counts[z].to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("coverage csv", e))?;
        Ok(())
    }

    /// Rows `mode,run,member_index,i,j` with `i` the row and `j` the column.
    pub fn write_positions_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["mode", "run", "member_index", "i", "j"])?;
        for r in &self.runs {
            for (k, p) in r.positions.iter().enumerate() {
                w.write_record([
                    r.mode.name().to_string(),
                    r.run.to_string(),
                    k.to_string(),
                    p.row.to_string(),
                    p.col.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("positions csv", e))?;
        Ok(())
    }
}

/// Random columns on the first row.
pub fn initial_grid_prior<R: Rng + ?Sized>(side: usize, mu: usize, rng: &mut R) -> Vec<GridGenome> {
    (0..mu)
        .map(|_| GridGenome {
            row: 0,
            col: rng.random_range(0..side),
        })
        .collect()
}

/// One FAERY run on the grid distribution with the given objective mode.
pub fn run_ablation_once(
    cfg: &AblationConfig,
    mode: ObjectiveMode,
    run: usize,
    master_seed: u64,
) -> Result<AblationRun> {
    let seed = rng::derive_seed(master_seed, &[tag::ABLATION_RUN, run as u64]);
    let goals = GridGoals::split(
        &cfg.world,
        &mut rng::stream(master_seed, &[tag::GRID_SPLIT]),
    )?;
    let sampler = GridSampler::new(&goals, Split::Train);
    let mutator = GridMutation {
        side: cfg.world.side,
        step_max: cfg.step_max,
    };
    let meta = MetaConfig {
        objectives: mode,
        m_test: 0,
        ..cfg.meta.clone()
    };
    let initial = initial_grid_prior(
        cfg.world.side,
        meta.mu,
        &mut rng::stream(seed, &[tag::INIT_PRIOR]),
    );
    let prior = run_faery(
        PriorPopulation::from_genomes(initial),
        0,
        &sampler,
        None,
        &meta,
        &mutator,
        seed,
        |_, _| Ok(()),
    )?;
    let positions = prior.genomes();
    let mut zone_counts = [0; 3];
    for p in &positions {
        if let Some(z) = cfg.world.zone_of(*p) {
            zone_counts[z] += 1;
        }
    }
    Ok(AblationRun {
        mode,
        run,
        positions,
        zone_counts,
    })
}

/// Runs `cfg.runs` independent FAERY runs per requested mode. The train/test
/// halves of each zone are drawn once from the master seed; run `r` uses the
/// same seed for every mode.
pub fn run_ablation(
    cfg: &AblationConfig,
    modes: &[ObjectiveMode],
    master_seed: u64,
) -> Result<AblationReport> {
    cfg.validate()?;
    let jobs: Vec<(ObjectiveMode, usize)> = modes
        .iter()
        .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(m, r)| run_ablation_once(cfg, m, r, master_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationReport { runs })
}

/// Cells that are inside the grid and distinct; used by tests and reports.
pub fn distinct_cells(cells: &[GridGenome]) -> BTreeSet<GridGenome> {
    cells.iter().copied().collect()
}
