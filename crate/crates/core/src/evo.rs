//! Multi-objective selection (non-dominated sorting, crowding distance,
//! NSGA-II truncation) and the k-nearest-neighbour novelty score.
//!
//! All objectives are maximized. `f64::NEG_INFINITY` is the worst sentinel:
//! it compares below every finite value and equal to itself.

use std::cmp::Ordering;

use rand::Rng;

use crate::error::{Error, Result};

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strictly = true;
        }
    }
    strictly
}

fn check_arity(points: &[Vec<f64>]) -> Result<usize> {
    let arity = points.first().map_or(0, Vec::len);
    for (index, p) in points.iter().enumerate() {
        if p.len() != arity {
            return Err(Error::MixedArity {
                expected: arity,
                found: p.len(),
                index,
            });
        }
    }
    Ok(arity)
}

/// Fast non-dominated sort. Fronts are returned best first, indices ascending
/// within each front.
pub fn non_dominated_sort(points: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    check_arity(points)?;
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&points[i], &points[j]) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&points[j], &points[i]) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance of each member of one front.
///
/// Fronts of at most two points are all infinite. An objective whose values
/// span a zero (or non-finite) range contributes nothing, boundaries included;
/// otherwise its two boundary points become infinite and interior points add
/// the normalized gap between their neighbours.
pub fn crowding_distance(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let arity = front[0].len();
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..arity {
        order.sort_by(|&a, &b| front[a][m].total_cmp(&front[b][m]).then(a.cmp(&b)));
        let lo = front[order[0]][m];
        let hi = front[order[n - 1]][m];
        let range = hi - lo;
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        for w in order.windows(3) {
            distance[w[1]] += (front[w[2]][m] - front[w[0]][m]) / range;
        }
    }
    distance
}

/// NSGA-II survivor selection over objective vectors.
///
/// Whole fronts are taken in rank order; the front that does not fit is
/// truncated by descending crowding distance, ties going to the lower index.
/// The selected indices are returned in ascending order.
pub fn nsga2_select(points: &[Vec<f64>], mu: usize) -> Result<Vec<usize>> {
    if mu > points.len() {
        return Err(Error::SelectionOverflow {
            requested: mu,
            available: points.len(),
        });
    }
    let fronts = non_dominated_sort(points)?;
    let mut selected = Vec::with_capacity(mu);
    for front in fronts {
        if selected.len() + front.len() <= mu {
            selected.extend_from_slice(&front);
            if selected.len() == mu {
                break;
            }
            continue;
        }
        let members: Vec<Vec<f64>> = front.iter().map(|&i| points[i].clone()).collect();
        let crowd = crowding_distance(&members);
        let mut ranked: Vec<usize> = (0..front.len()).collect();
        ranked.sort_by(|&a, &b| {
            crowd[b]
                .partial_cmp(&crowd[a])
                .unwrap_or(Ordering::Equal)
                .then(front[a].cmp(&front[b]))
        });
        let room = mu - selected.len();
        selected.extend(ranked[..room].iter().map(|&r| front[r]));
        break;
    }
    selected.sort_unstable();
    Ok(selected)
}

/// How the archive makes room when it is full.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Eviction {
    #[default]
    UniformRandom,
    Fifo,
}

/// Capped set of past behavior descriptors used as the novelty reference.
///
/// Entries may carry the id of the individual that produced them, so the
/// individual can be excluded from its own reference set.
#[derive(Clone, Debug)]
pub struct NoveltyArchive {
    behaviors: Vec<Vec<f64>>,
    owners: Vec<Option<usize>>,
    capacity: usize,
    k: usize,
    eviction: Eviction,
}

impl NoveltyArchive {
    pub fn new(capacity: usize, k: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("archive_capacity", "must be positive"));
        }
        if k == 0 {
            return Err(Error::config("novelty_k", "must be positive"));
        }
        Ok(NoveltyArchive {
            behaviors: Vec::new(),
            owners: Vec::new(),
            capacity,
            k,
            eviction: Eviction::UniformRandom,
        })
    }

    pub fn with_eviction(mut self, eviction: Eviction) -> Self {
        self.eviction = eviction;
        self
    }

    pub fn len(&self) -> usize {
        self.behaviors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.behaviors.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn behaviors(&self) -> &[Vec<f64>] {
        &self.behaviors
    }

    fn dimension(&self) -> Option<usize> {
        self.behaviors.first().map(Vec::len)
    }

    /// Appends every behavior, then evicts until the capacity holds.
    pub fn insert<R: Rng + ?Sized>(&mut self, behaviors: &[Vec<f64>], rng: &mut R) -> Result<()> {
        self.insert_owned(behaviors, &vec![None; behaviors.len()], rng)
    }

    /// Like [`insert`](Self::insert), tagging each entry with its producer.
    pub fn insert_owned<R: Rng + ?Sized>(
        &mut self,
        behaviors: &[Vec<f64>],
        owners: &[Option<usize>],
        rng: &mut R,
    ) -> Result<()> {
        let dim = self.dimension().or(behaviors.first().map(Vec::len));
        if let Some(dim) = dim {
            if let Some(b) = behaviors.iter().find(|b| b.len() != dim) {
                return Err(Error::DimensionMismatch {
                    what: "behavior descriptor",
                    expected: dim,
                    actual: b.len(),
                });
            }
        }
        self.behaviors.extend(behaviors.iter().cloned());
        self.owners.extend_from_slice(owners);
        let excess = self.behaviors.len().saturating_sub(self.capacity);
        match self.eviction {
            Eviction::Fifo => {
                self.behaviors.drain(..excess);
                self.owners.drain(..excess);
            }
            Eviction::UniformRandom => {
                for _ in 0..excess {
                    let victim = rng.random_range(0..self.behaviors.len());
                    self.behaviors.swap_remove(victim);
                    self.owners.swap_remove(victim);
                }
            }
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// The `k` smallest squared distances offered so far, ascending.
struct Nearest {
    k: usize,
    sq: Vec<f64>,
}

impl Nearest {
    fn new(k: usize) -> Self {
        Nearest {
            k,
            sq: Vec::with_capacity(k + 1),
        }
    }

    /// Squared radius beyond which an offer cannot enter the set.
    fn bound(&self) -> f64 {
        if self.sq.len() < self.k {
            f64::INFINITY
        } else {
            self.sq[self.k - 1]
        }
    }

    fn offer(&mut self, d: f64) {
        if d >= self.bound() {
            return;
        }
        let at = self.sq.partition_point(|&x| x <= d);
        self.sq.insert(at, d);
        self.sq.truncate(self.k);
    }

    fn mean_distance(&self) -> f64 {
        if self.sq.is_empty() {
            return 0.0;
        }
        self.sq.iter().map(|d| d.sqrt()).sum::<f64>() / self.sq.len() as f64
    }
}

/// Novelty of each population member against the rest of the population and
/// the archive: the mean distance to its `k` nearest neighbours (fewer if the
/// reference set is smaller, zero if it is empty).
pub fn novelty_scores(population: &[Vec<f64>], archive: &NoveltyArchive) -> Result<Vec<f64>> {
    novelty_scores_excluding(population, &vec![None; population.len()], archive)
}

/// Novelty where member `i` also ignores archive entries owned by `ids[i]`.
///
/// Exact k-NN: all reference points are sorted on their widest coordinate and
/// each query sweeps outward from its own rank until the coordinate gap alone
/// exceeds the current k-th distance.
pub fn novelty_scores_excluding(
    population: &[Vec<f64>],
    ids: &[Option<usize>],
    archive: &NoveltyArchive,
) -> Result<Vec<f64>> {
    let dim = population
        .first()
        .map(Vec::len)
        .or(archive.dimension())
        .unwrap_or(0);
    for b in population.iter().chain(archive.behaviors.iter()) {
        if b.len() != dim {
            return Err(Error::DimensionMismatch {
                what: "behavior descriptor",
                expected: dim,
                actual: b.len(),
            });
        }
    }
    // reference r < population.len() is population member r, the rest are
    // archive entries in order
    let n = population.len();
    let point = |r: usize| -> &[f64] {
        if r < n {
            &population[r]
        } else {
            &archive.behaviors[r - n]
        }
    };
    // sweep along the coordinate with the widest spread
    let mut axis = 0;
    let mut widest = f64::NEG_INFINITY;
    for d in 0..dim {
        let (lo, hi) = (0..n + archive.len())
            .map(|r| point(r)[d])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if hi - lo > widest {
            widest = hi - lo;
            axis = d;
        }
    }
    let key = |r: usize| point(r).get(axis).copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..n + archive.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (pos, &r) in order.iter().enumerate() {
        if r < n {
            rank[r] = pos;
        }
    }

    let scores = (0..n)
        .map(|i| {
            let b = &population[i];
            let x = key(i);
            let me = ids.get(i).copied().flatten();
            let skip = |r: usize| {
                if r < n {
                    r == i
                } else {
                    me.is_some() && archive.owners[r - n] == me
                }
            };
            let mut near = Nearest::new(archive.k);
            let visit = |r: usize, near: &mut Nearest| -> bool {
                let gap = key(r) - x;
                if gap * gap > near.bound() {
                    return false;
                }
                if !skip(r) {
                    near.offer(squared_distance(b, point(r)));
                }
                true
            };
            for &r in &order[rank[i] + 1..] {
                if !visit(r, &mut near) {
                    break;
                }
            }
            for &r in order[..rank[i]].iter().rev() {
                if !visit(r, &mut near) {
                    break;
                }
            }
            near.mean_distance()
        })
        .collect();
    Ok(scores)
}
