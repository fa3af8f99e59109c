//! Flat bounded genomes, the feed-forward tanh policies they decode to, and
//! the mutation operators used to perturb them.
//!
//! Parameter layout is fixed: for each consecutive layer pair the weights come
//! first in row-major order (one row per output unit, `n_in` entries per row),
//! followed by the `n_out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of a fully connected network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl NetworkShape {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let shape = NetworkShape {
            input_dim,
            hidden_dims,
            output_dim,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// The maze policy: 5 sensors, three hidden layers of 10, a 2-d force.
    pub fn maze_default() -> Self {
        NetworkShape {
            input_dim: 5,
            hidden_dims: vec![10, 10, 10],
            output_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes().any(|n| n == 0) {
            return Err(Error::config("shape", "every layer width must be positive"));
        }
        Ok(())
    }

    fn layer_sizes(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_dim))
    }

    /// `(n_in, n_out)` for each weight layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let sizes: Vec<usize> = self.layer_sizes().collect();
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    fn widest(&self) -> usize {
        self.layer_sizes().max().unwrap_or(0)
    }
}

/// Closed per-coordinate interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config(
                "bounds",
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Bounds { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { lo: -1.0, hi: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    params: Vec<f64>,
    bounds: Bounds,
}

impl Genome {
    pub fn new(params: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if let Some(i) = params.iter().position(|&x| !bounds.contains(x)) {
            return Err(Error::config(
                format!("params[{i}]"),
                format!("{} lies outside [{}, {}]", params[i], bounds.lo, bounds.hi),
            ));
        }
        Ok(Genome { params, bounds })
    }

    pub fn zeros(len: usize, bounds: Bounds) -> Result<Self> {
        Genome::new(vec![0.0; len], bounds)
    }

    /// Coordinate-wise uniform draw inside `bounds`.
    pub fn random<R: Rng + ?Sized>(len: usize, bounds: Bounds, rng: &mut R) -> Self {
        let params = (0..len)
            .map(|_| rng.random_range(bounds.lo..=bounds.hi))
            .collect();
        Genome { params, bounds }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// A genome checked against a shape, ready for repeated forward passes.
#[derive(Debug)]
pub struct Policy<'a> {
    genome: &'a Genome,
    shape: &'a NetworkShape,
    layers: Vec<(usize, usize)>,
    scratch: [Vec<f64>; 2],
}

impl<'a> Policy<'a> {
    pub fn new(genome: &'a Genome, shape: &'a NetworkShape) -> Result<Self> {
        let expected = shape.parameter_count();
        if genome.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "genome",
                expected,
                actual: genome.len(),
            });
        }
        let width = shape.widest();
        Ok(Policy {
            genome,
            shape,
            layers: shape.layers(),
            scratch: [vec![0.0; width], vec![0.0; width]],
        })
    }

    pub fn act(&mut self, observation: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.shape.output_dim];
        self.act_into(observation, &mut out)?;
        Ok(out)
    }

    pub fn act_into(&mut self, observation: &[f64], action: &mut [f64]) -> Result<()> {
        if observation.len() != self.shape.input_dim {
            return Err(Error::DimensionMismatch {
                what: "observation",
                expected: self.shape.input_dim,
                actual: observation.len(),
            });
        }
        if action.len() != self.shape.output_dim {
            return Err(Error::DimensionMismatch {
                what: "action",
                expected: self.shape.output_dim,
                actual: action.len(),
            });
        }
        let params = self.genome.params();
        let [cur, next] = &mut self.scratch;
        cur[..observation.len()].copy_from_slice(observation);
        let mut offset = 0;
        for &(n_in, n_out) in &self.layers {
            let weights = &params[offset..offset + n_in * n_out];
            let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            for (o, (row, b)) in weights.chunks_exact(n_in).zip(biases).enumerate() {
                let z: f64 = row
                    .iter()
                    .zip(&cur[..n_in])
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + b;
                next[o] = z.tanh();
            }
            offset += n_in * n_out + n_out;
            std::mem::swap(cur, next);
        }
        action.copy_from_slice(&cur[..self.shape.output_dim]);
        Ok(())
    }
}

/// Single forward pass. Every unit, including the outputs, applies `tanh`.
pub fn decode_and_forward(
    genome: &Genome,
    shape: &NetworkShape,
    observation: &[f64],
) -> Result<Vec<f64>> {
    Policy::new(genome, shape)?.act(observation)
}

/// A variation operator producing one child from one parent.
pub trait Mutate<G>: Sync {
    fn mutate<R: Rng + ?Sized>(&self, genome: &G, rng: &mut R) -> G;
}

/// Bounded polynomial mutation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    /// Distribution index; larger values keep children closer to the parent.
    pub eta: f64,
    pub per_gene_prob: f64,
}

impl MutationConfig {
    pub fn new(eta: f64, per_gene_prob: f64) -> Result<Self> {
        let cfg = MutationConfig { eta, per_gene_prob };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `eta = 15` and one expected mutated gene per genome.
    pub fn for_length(len: usize) -> Self {
        MutationConfig {
            eta: 15.0,
            per_gene_prob: 1.0 / len.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(
                "mutation.eta",
                "must be a positive finite number",
            ));
        }
        if !(0.0..=1.0).contains(&self.per_gene_prob) {
            return Err(Error::config(
                "mutation.per_gene_prob",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Perturbation factor for one uniform draw `u` in `[0, 1)`.
///
/// Negative values move toward `lo` and are scaled by `x - lo`; positive
/// values move toward `hi` and are scaled by `hi - x`.
pub fn polynomial_delta(u: f64, eta: f64) -> f64 {
    let exponent = 1.0 / (eta + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(exponent) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(exponent)
    }
}

/// Applies one polynomial step to `x` for the draw `u`.
pub fn polynomial_step(x: f64, u: f64, eta: f64, bounds: Bounds) -> f64 {
    let delta = polynomial_delta(u, eta);
    let y = if delta <= 0.0 {
        x + delta * (x - bounds.lo)
    } else {
        x + delta * (bounds.hi - x)
    };
    y.clamp(bounds.lo, bounds.hi)
}

pub fn mutate<R: Rng + ?Sized>(genome: &Genome, cfg: &MutationConfig, rng: &mut R) -> Genome {
    let bounds = genome.bounds;
    let params = genome
        .params
        .iter()
        .map(|&x| {
            if cfg.per_gene_prob > 0.0 && rng.random::<f64>() < cfg.per_gene_prob {
                polynomial_step(x, rng.random::<f64>(), cfg.eta, bounds)
            } else {
                x
            }
        })
        .collect();
    Genome { params, bounds }
}

impl Mutate<Genome> for MutationConfig {
    fn mutate<R: Rng + ?Sized>(&self, genome: &Genome, rng: &mut R) -> Genome {
        mutate(genome, self, rng)
    }
}

/// Offspring of a population together with the index of each child's parent.
#[derive(Clone, Debug)]
pub struct Offspring<G> {
    pub children: Vec<G>,
    pub parents: Vec<usize>,
}

/// Produces `lambda` children, child `j` descending from `pop[j % pop.len()]`.
pub fn delta_population<G, M, R>(
    pop: &[G],
    lambda: usize,
    mutator: &M,
    rng: &mut R,
) -> Result<Offspring<G>>
where
    M: Mutate<G>,
    R: Rng + ?Sized,
{
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let parents: Vec<usize> = (0..lambda).map(|j| j % pop.len()).collect();
    let children = parents
        .iter()
        .map(|&p| mutator.mutate(&pop[p], rng))
        .collect();
    Ok(Offspring { children, parents })
}
