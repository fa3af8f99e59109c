//! Procedural maze navigation tasks.

mod layout;
mod sim;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use layout::{generate_maze, Cell, MazeLayout, Segment, Side};
pub use sim::{ActionFrame, Maze, MazeObservation, MazeParams, MazeSimState, StepResult};

use crate::error::{Error, Result};
use crate::genome::{Genome, NetworkShape, Policy};
use crate::meta::TaskSampler;
use crate::qd::{Evaluation, Task};
use crate::rng;

/// One navigation episode per evaluation: the policy reads the 5 sensors and
/// outputs a 2-d force. Fitness is the discounted goal reward, the behavior
/// is the final position scaled to `[0, 1]^2`.
#[derive(Clone, Debug)]
pub struct MazeTask {
    maze: Arc<Maze>,
    shape: NetworkShape,
    init_seed: u64,
}

/// Full record of one episode.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub positions: Vec<[f64; 2]>,
    pub fitness: f64,
    pub reached_goal: bool,
}

impl MazeTask {
    pub fn new(maze: Arc<Maze>, shape: NetworkShape, init_seed: u64) -> Result<Self> {
        shape.validate()?;
        if shape.input_dim != 5 || shape.output_dim != 2 {
            return Err(Error::config(
                "shape",
                "maze policies need 5 inputs and 2 outputs",
            ));
        }
        Ok(MazeTask {
            maze,
            shape,
            init_seed,
        })
    }

    pub fn maze(&self) -> &Maze {
        &self.maze
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    /// Start position: the start cell centre plus a small Gaussian offset
    /// fixed by the task's seed.
    pub fn initial_state(&self) -> MazeSimState {
        let centre = self.maze.cell_center(self.maze.layout().start());
        let sd = self.maze.params().init_noise;
        if sd == 0.0 {
            return MazeSimState::at(centre);
        }
        let mut r = rng::stream(self.init_seed, &[]);
        let normal = Normal::new(0.0, sd).expect("validated noise");
        MazeSimState::at([
            centre[0] + normal.sample(&mut r).clamp(-0.25, 0.25),
            centre[1] + normal.sample(&mut r).clamp(-0.25, 0.25),
        ])
    }

    pub fn rollout(&self, genome: &Genome) -> Result<Trajectory> {
        let mut policy = Policy::new(genome, &self.shape)?;
        let maze = &*self.maze;
        let params = maze.params();
        let range_max = maze.range_max();
        let mut state = self.initial_state();
        let mut obs = maze.observe(&state, (false, false));
        let mut positions = vec![state.position];
        let mut fitness = 0.0;
        let mut discount = 1.0;
        let mut reached_goal = false;
        let mut action = [0.0; 2];
        for _ in 0..params.episode_length {
            policy.act_into(&obs.to_input(range_max), &mut action)?;
            let out = maze.step(&state, action);
            fitness += discount * out.reward;
            discount *= params.gamma;
            state = out.state;
            obs = out.observation;
            positions.push(state.position);
            if out.reward > 0.0 {
                reached_goal = true;
            }
            if out.done {
                break;
            }
        }
        Ok(Trajectory {
            positions,
            fitness,
            reached_goal,
        })
    }
}

impl Task for MazeTask {
    type Genome = Genome;

    fn evaluate(&self, genome: &Genome) -> Result<Evaluation> {
        let traj = self.rollout(genome)?;
        let n = self.maze.layout().n() as f64;
        let last = traj.positions.last().copied().unwrap_or_default();
        Ok(Evaluation {
            fitness: traj.fitness,
            behavior: vec![last[0] / n, last[1] / n],
            solved: traj.reached_goal,
        })
    }
}

/// A generated maze and the seed that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MazeRecord {
    pub seed: u64,
    pub layout: MazeLayout,
}

impl MazeRecord {
    pub fn from_seed(n: usize, seed: u64) -> Result<Self> {
        Ok(MazeRecord {
            seed,
            layout: generate_maze(n, &mut rng::stream(seed, &[]))?,
        })
    }
}

/// Disjoint train and test pools of distinct mazes.
pub fn generate_dataset<R: Rng + ?Sized>(
    n: usize,
    count_train: usize,
    count_test: usize,
    rng: &mut R,
) -> Result<(Vec<MazeRecord>, Vec<MazeRecord>)> {
    if count_train == 0 || count_test == 0 {
        return Err(Error::config(
            "counts",
            "train and test counts must be at least 1",
        ));
    }
    let wanted = count_train + count_test;
    let attempts = 1000 + 50 * wanted;
    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(wanted);
    for _ in 0..attempts {
        if pool.len() == wanted {
            break;
        }
        let record = MazeRecord::from_seed(n, rng.next_u64())?;
        if seen.insert(record.layout.canonical_hex()) {
            pool.push(record);
        }
    }
    if pool.len() < wanted {
        return Err(Error::InsufficientMazes {
            n,
            requested: wanted,
            found: pool.len(),
        });
    }
    let test = pool.split_off(count_train);
    Ok((pool, test))
}

pub const DATASET_HEADER: &str = "faery-mazes 1";

/// Line format: header line, then one maze per line:
/// `n seed hex start_col,start_row goal_col,goal_row`.
pub fn write_dataset<W: Write>(mut out: W, records: &[MazeRecord]) -> std::io::Result<()> {
    writeln!(out, "{DATASET_HEADER}")?;
    for r in records {
        let (s, g) = (r.layout.start(), r.layout.goal());
        writeln!(
            out,
            "{} {} {} {},{} {},{}",
            r.layout.n(),
            r.seed,
            r.layout.canonical_hex(),
            s.col,
            s.row,
            g.col,
            g.row
        )?;
    }
    out.flush()
}

fn parse_cell(text: &str) -> Option<Cell> {
    let (c, r) = text.split_once(',')?;
    Some(Cell {
        col: c.parse().ok()?,
        row: r.parse().ok()?,
    })
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<MazeRecord>> {
    let bad = |line: usize, why: &str| Error::format("maze dataset", format!("line {line}: {why}"));
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::io("maze dataset", e))?
        .unwrap_or_default();
    if header.trim() != DATASET_HEADER {
        return Err(bad(1, "missing or unsupported header"));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io("maze dataset", e))?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [n, seed, hex, start, goal] = fields[..] else {
            return Err(bad(lineno, "expected 5 fields"));
        };
        let n: usize = n.parse().map_err(|_| bad(lineno, "bad side"))?;
        let seed: u64 = seed.parse().map_err(|_| bad(lineno, "bad seed"))?;
        let layout = MazeLayout::from_canonical_hex(n, hex)?;
        if !layout.is_perfect() {
            return Err(bad(lineno, "layout is not a perfect maze"));
        }
        if parse_cell(start) != Some(layout.start()) || parse_cell(goal) != Some(layout.goal()) {
            return Err(bad(lineno, "start/goal cells do not match the layout"));
        }
        records.push(MazeRecord { seed, layout });
    }
    Ok(records)
}

/// Draws distinct mazes from a fixed pool.
#[derive(Clone, Debug)]
pub struct MazeSampler {
    mazes: Vec<Arc<Maze>>,
    shape: NetworkShape,
}

impl MazeSampler {
    pub fn new(records: &[MazeRecord], params: &MazeParams, shape: NetworkShape) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::config("dataset", "maze pool is empty"));
        }
        let mazes = records
            .iter()
            .map(|r| Maze::new(r.layout.clone(), params.clone()).map(Arc::new))
            .collect::<Result<_>>()?;
        Ok(MazeSampler { mazes, shape })
    }

    pub fn len(&self) -> usize {
        self.mazes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mazes.is_empty()
    }

    pub fn task(&self, i: usize, init_seed: u64) -> MazeTask {
        MazeTask {
            maze: self.mazes[i].clone(),
            shape: self.shape.clone(),
            init_seed,
        }
    }
}

impl TaskSampler for MazeSampler {
    type Task = MazeTask;

    /// Without replacement while the pool lasts, then with replacement.
    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<MazeTask> {
        let picks: Vec<usize> = if count <= self.mazes.len() {
            index::sample(rng, self.mazes.len(), count).into_vec()
        } else {
            (0..count)
                .map(|_| rng.random_range(0..self.mazes.len()))
                .collect()
        };
        picks
            .into_iter()
            .map(|i| self.task(i, rng.next_u64()))
            .collect()
    }
}
