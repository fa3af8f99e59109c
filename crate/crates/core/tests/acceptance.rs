//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! The desk-scale maze criterion takes a long time; it only runs when
//! `FAERY_SLOW=1` is set or `--include-ignored` is passed, and is reported
//! as SKIP otherwise.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use faery_core::evo::{non_dominated_sort, novelty_scores, nsga2_select, NoveltyArchive};
use faery_core::genome::{mutate, Bounds, Genome, MutationConfig};
use faery_core::grid::{run_ablation, AblationConfig, AblationReport};
use faery_core::lineage::EvolutionForest;
use faery_core::maze::{generate_maze, Cell, Maze, MazeLayout, MazeParams, Side};
use faery_core::meta::{compute_meta_scores, ObjectiveMode};
use faery_core::orchestrator::{self, read_report, ExperimentConfig, SplitName};
use faery_core::qd::{QdOutcome, Solution};
use faery_core::rng::stream;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- criterion 1

fn figure_one_forest() -> Outcome {
    let mut f = EvolutionForest::new();
    let a = f.register_root(0);
    let b = f.register_root(1);
    let c = f.register_root(2);
    let chain = |f: &mut EvolutionForest, from: usize, len: usize| {
        (0..len).fold(from, |node, _| f.register_child(node).unwrap())
    };
    let a2 = chain(&mut f, a, 2);
    let b1 = chain(&mut f, b, 1);
    let b3 = chain(&mut f, b1, 2);
    let b4 = chain(&mut f, b1, 3);
    let c2 = chain(&mut f, c, 2);
    let c4 = chain(&mut f, c2, 2);
    let solved = [a2, b3, b4, c4, c2];
    let outcome = QdOutcome {
        solutions: solved
            .iter()
            .map(|&node| Solution {
                node,
                genome: (),
                generation: 4,
            })
            .collect(),
        generations_used: Some(4),
        forest: f,
        solved: true,
        evaluations: 0,
    };
    let scores = compute_meta_scores(&[outcome], 3).map_err(|e| e.to_string())?;
    let f0: Vec<u64> = scores.iter().map(|s| s.f0).collect();
    let f1: Vec<f64> = scores.iter().map(|s| s.f1).collect();
    check(
        f0 == [1, 2, 2] && f1 == [-2.0, -3.5, -3.0],
        format!("f0 = {f0:?}, f1 = {f1:?} (expected [1, 2, 2], [-2, -3.5, -3])"),
    )
}

// ---------------------------------------------------------------- criterion 2

fn grid_ablation() -> Outcome {
    let cfg = AblationConfig::default();
    let t = Instant::now();
    let report = run_ablation(&cfg, &ObjectiveMode::ALL, 20_240).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let runs = cfg.runs;
    let all = |r: &AblationReport, m| r.count_runs(m, |x| (0..3).all(|z| x.covered(z)));
    let joint = all(&report, ObjectiveMode::Joint);
    let f1_trapped = report.count_runs(ObjectiveMode::F1Only, |x| {
        x.covered(1) && !x.covered(0) && !x.covered(2)
    });
    let f0_misses = report.count_runs(ObjectiveMode::F0Only, |x| !x.covered(0) || !x.covered(1));
    let coverage: Vec<String> = ObjectiveMode::ALL
        .iter()
        .map(|&m| {
            let c = report.coverage(m);
            format!("{} Z0/Z1/Z2 {:.2}/{:.2}/{:.2}", m.name(), c[0], c[1], c[2])
        })
        .collect();
    check(
        joint * 15 >= 12 * runs && f1_trapped * 15 >= 13 * runs && f0_misses * 15 >= 13 * runs,
        format!(
            "joint covers all zones {joint}/{runs} (need 12/15); f1_only trapped in Z1 {f1_trapped}/{runs} (need 13/15); \
             f0_only misses Z0 or Z1 {f0_misses}/{runs} (need 13/15); {}; {:.0?}",
            coverage.join(", "),
            elapsed
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

const DESK_SCALE: &str = r#"
format_version = 1
seed = 2024

[maze]
n = 8
train_count = 120
test_count = 40

[maze.sim]
episode_length = 1000
action_frame = "heading"

[maze.meta]
mu = 24
lambda = 24
m_train = 8
m_test = 8
g_outer = 30

[maze.meta.qd]
g_qd_max = 100
"#;

fn desk_scale_mazes(out: &Path) -> Outcome {
    let cfg = ExperimentConfig::parse(DESK_SCALE).map_err(|e| e.to_string())?;
    let t = Instant::now();
    orchestrator::train(&cfg, out).map_err(|e| e.to_string())?;
    let rows = read_report(&out.join(orchestrator::TEST_REPORT_FILE)).map_err(|e| e.to_string())?;
    let test: Vec<_> = rows.iter().filter(|r| r.split == SplitName::Test).collect();
    let (first, last) = (
        test.first().ok_or("no test rows")?,
        test.last().ok_or("no test rows")?,
    );
    let g_qd = cfg.maze().unwrap().meta.qd.g_qd_max as f64;
    // An unsolved baseline consumed the whole budget on every task.
    let baseline = first.solve.mean_generations_over_solved.unwrap_or(g_qd);
    let tail: Vec<f64> = test[test.len().saturating_sub(5)..]
        .iter()
        .filter_map(|r| r.solve.mean_generations_over_solved)
        .collect();
    let tail_mean = if tail.is_empty() {
        f64::INFINITY
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    };
    let ratio_ok =
        last.solve.solved_ratio >= 0.95 && first.solve.solved_ratio <= last.solve.solved_ratio;
    let speed_ok = tail_mean <= 0.5 * baseline;
    check(
        ratio_ok && speed_ok,
        format!(
            "test solved_ratio {:.3} at meta-generation {} vs {:.3} at 0 (need >= 0.95); \
             mean generations over the last 5 = {tail_mean:.2} vs baseline {baseline:.2} (need <= half); {:.0?}",
            last.solve.solved_ratio,
            last.meta_generation,
            first.solve.solved_ratio,
            t.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- criterion 4

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

fn oracle_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&points[j], &points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn oracle_crowding(points: &[Vec<f64>], front: &[usize]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut d = vec![0.0; n];
    for m in 0..points[front[0]].len() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            points[front[a]][m]
                .total_cmp(&points[front[b]][m])
                .then(a.cmp(&b))
        });
        let lo = points[front[order[0]]][m];
        let hi = points[front[order[n - 1]]][m];
        let range = hi - lo;
        if !(range.is_finite() && range > 0.0) {
            continue;
        }
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        for w in 1..n - 1 {
            d[order[w]] +=
                (points[front[order[w + 1]]][m] - points[front[order[w - 1]]][m]) / range;
        }
    }
    d
}

fn oracle_select(points: &[Vec<f64>], mu: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for front in oracle_fronts(points) {
        if out.len() + front.len() <= mu {
            out.extend(&front);
            continue;
        }
        let d = oracle_crowding(points, &front);
        let mut idx: Vec<usize> = (0..front.len()).collect();
        idx.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(front[a].cmp(&front[b])));
        out.extend(idx.into_iter().take(mu - out.len()).map(|i| front[i]));
        break;
    }
    out.sort_unstable();
    out
}

fn selection_oracle_suite() -> Result<String, String> {
    let mut rng = stream(41, &[]);
    for case in 0..200 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(2..=4);
        let coarse = case % 3 == 0;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        if coarse {
                            rng.random_range(0..5) as f64
                        } else {
                            rng.random::<f64>()
                        }
                    })
                    .collect()
            })
            .collect();
        let fronts = non_dominated_sort(&points).map_err(|e| e.to_string())?;
        if fronts != oracle_fronts(&points) {
            return Err(format!("fronts differ on case {case} (n = {n}, m = {m})"));
        }
        let mu = rng.random_range(1..=n);
        if nsga2_select(&points, mu).map_err(|e| e.to_string())? != oracle_select(&points, mu) {
            return Err(format!(
                "selection differs on case {case} (n = {n}, m = {m}, mu = {mu})"
            ));
        }
    }
    Ok("200 sort/select instances".into())
}

fn novelty_oracle_suite() -> Result<String, String> {
    let mut rng = stream(42, &[]);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let k = [1, 2, 15][case % 3];
        let total = rng.random_range(2..=500);
        let in_archive = rng.random_range(0..total);
        let dim = rng.random_range(1..=3);
        let pts: Vec<Vec<f64>> = (0..total)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        let (arch, pop) = pts.split_at(in_archive);
        let mut archive = NoveltyArchive::new(10_000, k).unwrap();
        archive.insert(arch, &mut rng).unwrap();
        let got = novelty_scores(pop, &archive).map_err(|e| e.to_string())?;
        for (i, p) in pop.iter().enumerate() {
            let mut d: Vec<f64> = pop
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| q)
                .chain(arch.iter())
                .map(|q| {
                    p.iter()
                        .zip(q)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            let kk = k.min(d.len());
            let want = if kk == 0 {
                0.0
            } else {
                d[..kk].iter().sum::<f64>() / kk as f64
            };
            worst = worst.max((got[i] - want).abs());
        }
    }
    check(
        worst <= 1e-9,
        format!("200 novelty instances, max error {worst:.1e}"),
    )
}

fn brute_cast(maze: &Maze, o: [f64; 2], d: [f64; 2]) -> f64 {
    let mut best = maze.range_max();
    for s in maze.layout().wall_segments() {
        let e = [s.b[0] - s.a[0], s.b[1] - s.a[1]];
        let denom = d[0] * e[1] - d[1] * e[0];
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = [s.a[0] - o[0], s.a[1] - o[1]];
        let t = (w[0] * e[1] - w[1] * e[0]) / denom;
        let u = (w[0] * d[1] - w[1] * d[0]) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) {
            best = best.min(t);
        }
    }
    best
}

fn rangefinder_oracle_suite() -> Result<String, String> {
    let mut rng = stream(43, &[]);
    let mut worst: f64 = 0.0;
    for m in 0..20 {
        let n = [4, 8, 10][m % 3];
        let maze = Maze::new(generate_maze(n, &mut rng).unwrap(), MazeParams::default()).unwrap();
        for _ in 0..1000 {
            let p = [
                rng.random_range(0.1..n as f64 - 0.1),
                rng.random_range(0.1..n as f64 - 0.1),
            ];
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let heading = [angle.cos(), angle.sin()];
            let got = maze.rangefinders(p, heading);
            for (k, deg) in [-45.0f64, 0.0, 45.0].into_iter().enumerate() {
                let (sn, cs) = deg.to_radians().sin_cos();
                let dir = [
                    cs * heading[0] - sn * heading[1],
                    sn * heading[0] + cs * heading[1],
                ];
                let want = brute_cast(&maze, p, dir);
                worst = worst.max((got[k] - want).abs());
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("20 mazes x 1000 poses, max error {worst:.1e}"),
    )
}

fn forest_oracle_suite() -> Result<String, String> {
    let mut rng = stream(44, &[]);
    for case in 0..20 {
        let size = if case == 0 {
            10_000
        } else {
            rng.random_range(1..=10_000)
        };
        let roots = rng.random_range(1..=size.min(50));
        let mut f = EvolutionForest::new();
        let mut parent = Vec::with_capacity(size);
        for r in 0..roots {
            f.register_root(r);
            parent.push(None);
        }
        while f.len() < size {
            let p = rng.random_range(0..f.len());
            f.register_child(p).unwrap();
            parent.push(Some(p));
        }
        for id in 0..size {
            let (mut depth, mut node) = (0, id);
            while let Some(p) = parent[node] {
                depth += 1;
                node = p;
            }
            let rec = f.get(id).unwrap();
            if rec.depth != depth || rec.root_index != node {
                return Err(format!(
                    "node {id} of case {case}: depth {} vs {depth}",
                    rec.depth
                ));
            }
        }
    }
    Ok("20 forests up to 10^4 nodes".into())
}

fn oracle_suites() -> Outcome {
    let parts = [
        ("selection", selection_oracle_suite()),
        ("novelty", novelty_oracle_suite()),
        ("rangefinders", rangefinder_oracle_suite()),
        ("forest", forest_oracle_suite()),
    ];
    let ok = parts.iter().all(|(_, r)| r.is_ok());
    let detail = parts
        .iter()
        .map(|(name, r)| match r {
            Ok(d) => format!("{name}: {d}"),
            Err(d) => format!("{name} FAILED: {d}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, detail)
}

// ---------------------------------------------------------------- criterion 5

fn spanning_tree(layout: &MazeLayout) -> bool {
    let n = layout.n();
    let mut open = 0;
    let mut seen = vec![false; n * n];
    let mut stack = vec![Cell { col: 0, row: 0 }];
    seen[0] = true;
    while let Some(c) = stack.pop() {
        for side in [Side::North, Side::East, Side::South, Side::West] {
            if layout.is_closed(c, side) {
                continue;
            }
            if let Some(nb) = layout.neighbor(c, side) {
                if matches!(side, Side::North | Side::East) {
                    open += 1;
                }
                if !seen[nb.row * n + nb.col] {
                    seen[nb.row * n + nb.col] = true;
                    stack.push(nb);
                }
            }
        }
    }
    // every cell is visited exactly once, so each open border was counted once
    seen.iter().all(|&s| s) && open == n * n - 1
}

fn determinism_run(dir: &Path, threads: usize) -> Result<(), String> {
    let text = format!(
        r#"
format_version = 1
seed = 77
parallelism = {threads}

[maze]
n = 5
train_count = 30
test_count = 10
hidden = [6]

[maze.sim]
episode_length = 150

[maze.meta]
mu = 6
lambda = 6
m_train = 8
m_test = 8
g_outer = 3

[maze.meta.qd]
g_qd_max = 10
"#
    );
    let cfg = ExperimentConfig::parse(&text).map_err(|e| e.to_string())?;
    orchestrator::train(&cfg, dir)
        .map(|_| ())
        .map_err(|e| e.to_string())
}

fn structural_properties() -> Outcome {
    let mut bad = Vec::new();
    for n in [4, 8, 10] {
        let failures = (0..1000u64)
            .filter(|&seed| {
                !spanning_tree(&generate_maze(n, &mut stream(seed, &[n as u64])).unwrap())
            })
            .count();
        if failures > 0 {
            bad.push(format!("{failures} non-spanning mazes at n = {n}"));
        }
    }

    let bounds = Bounds::default();
    let cfg = MutationConfig::new(15.0, 0.5).unwrap();
    let mut rng = stream(45, &[]);
    let mut draws = 0usize;
    let mut escaped = 0usize;
    while draws < 100_000 {
        let edge: Vec<f64> = (0..10)
            .map(|i| [bounds.lo, bounds.hi, rng.random_range(-1.0..=1.0)][i % 3])
            .collect();
        let g = Genome::new(edge, bounds).unwrap();
        let child = mutate(&g, &cfg, &mut rng);
        escaped += child
            .params()
            .iter()
            .filter(|&&x| !(bounds.lo..=bounds.hi).contains(&x))
            .count();
        draws += child.len();
    }
    if escaped > 0 {
        bad.push(format!("{escaped} mutated coordinates out of bounds"));
    }

    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    determinism_run(a.path(), 1)?;
    determinism_run(b.path(), 8)?;
    let files = [
        orchestrator::CHECKPOINT_FILE,
        orchestrator::CHECKPOINT_EXPORT_FILE,
        orchestrator::TRAIN_REPORT_FILE,
        orchestrator::TEST_REPORT_FILE,
        orchestrator::SUMMARY_FILE,
    ];
    let differing: BTreeSet<&str> = files
        .into_iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .collect();
    if !differing.is_empty() {
        bad.push(format!("parallelism 1 vs 8 differ in {differing:?}"));
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("3000 mazes spanning, {draws} mutated coordinates in bounds, parallelism 1 vs 8 byte-identical")
        } else {
            bad.join("; ")
        },
    )
}

// ---------------------------------------------------------------- criterion 6

fn out_of_scope() -> Outcome {
    Ok("manipulation-benchmark tables and wall-clock savings are not reproduced; no criterion depends on them".into())
}

fn run(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match &result {
        Ok(d) => println!("criterion {id} [{name}]: PASS - {d}"),
        Err(d) => println!("criterion {id} [{name}]: FAIL - {d}"),
    }
    result.is_ok()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let slow = std::env::var("FAERY_SLOW").is_ok_and(|v| v == "1")
        || args
            .iter()
            .any(|a| a == "--include-ignored" || a == "--ignored");
    // FAERY_CRITERIA=2,3 restricts the run to the listed criteria
    let only: Option<Vec<u32>> = std::env::var("FAERY_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|ids| ids.contains(&id));
    let mut ok = true;
    let mut step = |id: u32, name: &str, f: &dyn Fn() -> Outcome| {
        if wanted(id) {
            ok &= run(id, name, f);
        }
    };
    step(1, "evolution-forest meta-scores", &figure_one_forest);
    step(2, "grid-bandit objective ablation", &grid_ablation);
    if slow {
        let dir = tempfile::tempdir().expect("temp dir");
        step(3, "desk-scale 8x8 mazes", &|| desk_scale_mazes(dir.path()));
    } else if wanted(3) {
        println!("criterion 3 [desk-scale 8x8 mazes]: SKIP - slow, opt-in (FAERY_SLOW=1 or --include-ignored)");
    }
    step(4, "oracle equivalence suites", &oracle_suites);
    step(
        5,
        "structural properties and determinism",
        &structural_properties,
    );
    step(6, "out-of-scope results", &out_of_scope);
    if !ok {
        std::process::exit(1);
    }
}
