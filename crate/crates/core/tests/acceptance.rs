//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Soft benchmarks report WARN; dataset checks report SKIP
//! when their data is absent.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isomush::assignment::{hungarian_oracle, solve_lap_max_int};
use isomush::config::RunConfig;
use isomush::eval::{self, CycleSampling, EvalConfig, PairwiseSet};
use isomush::fmap::PairwiseMap;
use isomush::mesh::{load_mesh, MeshFormat};
use isomush::ortho::{project_orthogonal, random_semi_orthogonal};
use isomush::pipeline;
use isomush::solver::{self, SolverConfig, StackedBasis};
use isomush::spectral::shape_basis;
use isomush::synth;
use isomush::{Shape, UniverseMaps, UniverseMatching};

// Pinned tolerances and budgets.
const MONOTONE_REL_TOL: f64 = 1e-9;
const CONVERGENCE_RUNS: usize = 50;
const CONVERGENCE_BUDGET: Duration = Duration::from_secs(120);
const RECOVERY_BUDGET: Duration = Duration::from_secs(60);
const RECOVERY_VERTICES: usize = 300;
const LAP_RANDOM_INSTANCES: usize = 200;
const LAP_MAX_ROWS: usize = 50;
const LAP_MAX_COLS: usize = 80;
const LAP_MAX_PROFIT: i64 = 1000;
const ORTHO_MATRICES: usize = 100;
const ORTHO_COMPETITORS: usize = 1000;
const ORTHO_ABS_TOL: f64 = 1e-10;
const FORM_INSTANCES: usize = 100;
const FORM_REL_TOL: f64 = 1e-8;
const GAUGE_INSTANCES: usize = 10;
const GAUGES_PER_INSTANCE: usize = 20;
const GAUGE_REL_TOL: f64 = 1e-8;
const SCALING_RANGE: (f64, f64) = (1.5, 3.0);
const DATASET_AUC: f64 = 0.968;
const DATASET_AUC_TOL: f64 = 0.05;
const DATASET_ENV: &str = "ISOMUSH_TOSCA_DIR";

enum Verdict {
    Pass(String),
    Fail(String),
    Warn(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn random_matching(rng: &mut ChaCha8Rng, sizes: &[usize], d: usize) -> UniverseMatching {
    let blocks = sizes
        .iter()
        .map(|&m| synth::random_permutation(rng, d)[..m].to_vec())
        .collect();
    UniverseMatching::new(blocks, d).unwrap()
}

fn random_maps(rng: &mut ChaCha8Rng, k: usize, b: usize, bp: usize) -> UniverseMaps {
    UniverseMaps::new((0..k).map(|_| random_semi_orthogonal(rng, b, bp)).collect()).unwrap()
}

fn random_basis(rng: &mut ChaCha8Rng, sizes: &[usize], b: usize) -> StackedBasis {
    StackedBasis::new(sizes.iter().map(|&m| DMatrix::from_fn(m, b, |_, _| rng.gen_range(-1.0..1.0))).collect()).unwrap()
}

fn all_pairs(u: &UniverseMatching) -> PairwiseSet {
    let k = u.num_shapes();
    PairwiseSet::new(
        (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| solver::pairwise_from_universe(u, i, j)),
    )
}

struct ConvergenceRuns {
    monotone: Verdict,
    cycles: Verdict,
    half_steps: Verdict,
}

/// Criteria 1, 2 and 8 share the same randomly initialised runs.
fn convergence_runs() -> ConvergenceRuns {
    let mut rng = ChaCha8Rng::seed_from_u64(0x15_0305);
    let cfg = SolverConfig::default();
    let start = Instant::now();
    let mut trace_violations = 0;
    let mut half_violations = 0;
    let mut unfinished = 0;
    let mut worst_cycle = 0.0f64;
    let mut iterations = 0;
    for run in 0..CONVERGENCE_RUNS {
        let k = rng.gen_range(3..=5);
        let b = rng.gen_range(10..=30);
        let shapes: Vec<Shape> = (0..k)
            .map(|_| synth::bumpy_sphere_with_vertices(rng.gen_range(50..=300), 0.3, rng.gen()))
            .collect();
        let sizes: Vec<usize> = shapes.iter().map(Shape::len).collect();
        let d = *sizes.iter().max().unwrap();
        let bases: Vec<_> = shapes.iter().map(|s| shape_basis(s, b, None).unwrap()).collect();
        let phi = StackedBasis::from_bases(&bases, b).unwrap();
        let u0 = random_matching(&mut rng, &sizes, d);
        let q0 = random_maps(&mut rng, k, b, b);
        let st = solver::run(u0, q0, &phi, &cfg).unwrap();
        iterations += st.iteration;
        if st.status == solver::SolverStatus::MaxIterations {
            unfinished += 1;
        }
        for t in 0..st.iteration {
            let (f0, fu, f1) = (st.trace[t], st.u_step_trace[t], st.trace[t + 1]);
            if f1 < f0 * (1.0 - MONOTONE_REL_TOL) {
                trace_violations += 1;
            }
            if fu < f0 * (1.0 - MONOTONE_REL_TOL) || f1 < fu * (1.0 - MONOTONE_REL_TOL) {
                half_violations += 1;
            }
        }
        let e = eval::cycle_error(&all_pairs(&st.u), &sizes, CycleSampling::Exhaustive).unwrap();
        worst_cycle = worst_cycle.max(e);
        if start.elapsed() > CONVERGENCE_BUDGET * 2 {
            return ConvergenceRuns {
                monotone: Verdict::Fail(format!("aborted after {} runs: over twice the time budget", run + 1)),
                cycles: Verdict::Fail("runs aborted".into()),
                half_steps: Verdict::Fail("runs aborted".into()),
            };
        }
    }
    let elapsed = start.elapsed();
    ConvergenceRuns {
        monotone: verdict(
            trace_violations == 0 && elapsed <= CONVERGENCE_BUDGET,
            format!(
                "{CONVERGENCE_RUNS} runs, {iterations} iterations, {trace_violations} decreases, {unfinished} stopped by the iteration cap, {:.1}s (budget {}s)",
                elapsed.as_secs_f64(),
                CONVERGENCE_BUDGET.as_secs()
            ),
        ),
        cycles: verdict(worst_cycle == 0.0, format!("worst exhaustive cycle error {worst_cycle}")),
        half_steps: verdict(half_violations == 0, format!("{half_violations} decreasing half-steps")),
    }
}

/// Criterion 3.
fn recovery() -> Verdict {
    let start = Instant::now();
    let base = synth::bumpy_sphere_with_vertices(RECOVERY_VERTICES, 0.3, 2024);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut shapes = Vec::new();
    let mut orders = Vec::new();
    for _ in 0..4 {
        let order = synth::random_permutation(&mut rng, base.len());
        let moved = base
            .permuted(&order)
            .unwrap()
            .transformed(&synth::random_rotation(&mut rng), &(synth::random_unit(&mut rng) * 3.0))
            .unwrap();
        shapes.push(moved);
        orders.push(order);
    }
    let out = match pipeline::run_match(&shapes, &RunConfig::default()) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    // Ground truth: vertex v of copy j is base vertex orders[j][v].
    let inverse: Vec<Vec<usize>> = orders
        .iter()
        .map(|o| {
            let mut inv = vec![0; o.len()];
            for (v, &w) in o.iter().enumerate() {
                inv[w] = v;
            }
            inv
        })
        .collect();
    let mut gt = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                gt.push(PairwiseMap {
                    source: i,
                    target: j,
                    matches: orders[i].iter().map(|&w| Some(inverse[j][w])).collect(),
                    target_len: base.len(),
                });
            }
        }
    }
    let pred = all_pairs(&out.state.u);
    let report = eval::evaluate(&pred, &PairwiseSet::new(gt), &shapes, &EvalConfig::default()).unwrap();
    let errors: Vec<f64> = report.pairs.iter().flat_map(|p| p.errors.iter().map(|e| e.1)).collect();
    let exact = errors.iter().filter(|&&e| e == 0.0).count();
    let elapsed = start.elapsed();
    verdict(
        exact == errors.len() && report.auc == 1.0 && elapsed <= RECOVERY_BUDGET,
        format!(
            "{} vertices x 4 copies: {exact}/{} exact, auc {}, {:.1}s (budget {}s)",
            base.len(),
            errors.len(),
            report.auc,
            elapsed.as_secs_f64(),
            RECOVERY_BUDGET.as_secs()
        ),
    )
}

fn enumerate_best(profit: &[i64], rows: usize, cols: usize) -> i64 {
    fn go(profit: &[i64], rows: usize, cols: usize, r: usize, used: &mut Vec<bool>) -> i64 {
        if r == rows {
            return 0;
        }
        let mut best = i64::MIN;
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                best = best.max(profit[r * cols + c] + go(profit, rows, cols, r + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(profit, rows, cols, 0, &mut vec![false; cols])
}

fn objective_int(profit: &[i64], cols: usize, assign: &[usize]) -> i64 {
    assign.iter().enumerate().map(|(r, &c)| profit[r * cols + c]).sum()
}

/// Criterion 4.
fn lap_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    let mut check = |profit: &[i64], rows: usize, cols: usize, with_enum: bool| {
        let auction = objective_int(profit, cols, solve_lap_max_int(profit, rows, cols).unwrap().assignment());
        let dense = DMatrix::from_fn(rows, cols, |r, c| profit[r * cols + c] as f64);
        let hungarian = objective_int(profit, cols, hungarian_oracle(&dense).unwrap().assignment());
        let brute = with_enum.then(|| enumerate_best(profit, rows, cols));
        if auction != hungarian || brute.is_some_and(|e| e != auction) {
            mismatches.push(format!("{rows}x{cols}: auction {auction} hungarian {hungarian} enum {brute:?}"));
        }
    };
    let mut small = 0;
    for rows in 1..=5 {
        for cols in rows..=7 {
            for _ in 0..10 {
                let p: Vec<i64> = (0..rows * cols).map(|_| rng.gen_range(0..=LAP_MAX_PROFIT)).collect();
                check(&p, rows, cols, true);
                small += 1;
            }
        }
    }
    for _ in 0..LAP_RANDOM_INSTANCES {
        let rows = rng.gen_range(1..=LAP_MAX_ROWS);
        let cols = rng.gen_range(rows..=LAP_MAX_COLS);
        let p: Vec<i64> = (0..rows * cols).map(|_| rng.gen_range(0..=LAP_MAX_PROFIT)).collect();
        check(&p, rows, cols, false);
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{LAP_RANDOM_INSTANCES} random instances up to {LAP_MAX_ROWS}x{LAP_MAX_COLS}, {small} enumerated up to 5x7, {} mismatches{}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

/// Criterion 5.
fn projection_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_gap = 0.0f64;
    let mut beaten = 0;
    for n in 0..ORTHO_MATRICES {
        let b = if n % 2 == 0 { 5 } else { 20 };
        let bp = if (n / 2) % 2 == 0 { b } else { (1.2 * b as f64).ceil() as usize };
        let a = DMatrix::from_fn(b, bp, |_, _| rng.gen_range(-1.0..1.0));
        let proj = project_orthogonal(&a).unwrap().values;
        let best = a.dot(&proj);
        let nuclear: f64 = a.clone().svd(false, false).singular_values.sum();
        worst_gap = worst_gap.max((best - nuclear).abs());
        for _ in 0..ORTHO_COMPETITORS {
            let r = random_semi_orthogonal(&mut rng, b, bp);
            if a.dot(&r) >= best {
                beaten += 1;
            }
        }
    }
    verdict(
        worst_gap <= ORTHO_ABS_TOL && beaten == 0,
        format!("{ORTHO_MATRICES} matrices, max |<A,proj A> - nuclear norm| {worst_gap:e}, {beaten} competitors not beaten"),
    )
}

fn dense_block(u: &UniverseMatching, i: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(u.block(i).len(), u.universe_size());
    for (v, &a) in u.block(i).iter().enumerate() {
        p[(v, a)] = 1.0;
    }
    p
}

/// Criterion 6.
fn objective_forms() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..FORM_INSTANCES {
        let k = rng.gen_range(1..=5);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(1..=40)).collect();
        let d = sizes.iter().max().unwrap() + rng.gen_range(0..5);
        let b = rng.gen_range(1..=8);
        let bp = b + rng.gen_range(0..=2);
        let u = random_matching(&mut rng, &sizes, d);
        let q = random_maps(&mut rng, k, b, bp);
        let phi = random_basis(&mut rng, &sizes, b);
        let f = solver::objective(&u, &q, &phi).unwrap();
        // Σ_ij tr(C_iᵀ Φ_iᵀ P_i P_jᵀ Φ_j C_j)
        let mut g = 0.0;
        for i in 0..k {
            for j in 0..k {
                let pij = dense_block(&u, i) * dense_block(&u, j).transpose();
                let m = q.block(i).transpose() * phi.block(i).transpose() * pij * phi.block(j) * q.block(j);
                g += m.trace();
            }
        }
        worst = worst.max((f - g).abs() / g.abs().max(f64::MIN_POSITIVE));
    }
    verdict(worst <= FORM_REL_TOL, format!("{FORM_INSTANCES} instances, worst relative gap {worst:e}"))
}

/// Criterion 7.
fn gauge_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..GAUGE_INSTANCES {
        let k = rng.gen_range(2..=5);
        let sizes: Vec<usize> = (0..k).map(|_| rng.gen_range(5..=40)).collect();
        let d = sizes.iter().max().unwrap() + rng.gen_range(0..6);
        let b = rng.gen_range(3..=10);
        let bp = b + rng.gen_range(0..=2);
        let u = random_matching(&mut rng, &sizes, d);
        let q = random_maps(&mut rng, k, b, bp);
        let phi = random_basis(&mut rng, &sizes, b);
        let f = solver::objective(&u, &q, &phi).unwrap();
        for _ in 0..GAUGES_PER_INSTANCE {
            let pi = synth::random_permutation(&mut rng, d);
            let g = random_semi_orthogonal(&mut rng, bp, bp);
            let f2 = solver::objective(&u.relabel(&pi).unwrap(), &q.right_multiply(&g).unwrap(), &phi).unwrap();
            worst = worst.max((f - f2).abs() / f);
        }
    }
    verdict(
        worst <= GAUGE_REL_TOL,
        format!("{GAUGE_INSTANCES} instances x {GAUGES_PER_INSTANCE} gauges, worst relative change {worst:e}"),
    )
}

fn median_u_step_time(k: usize, m: usize, d: usize, b: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sizes = vec![m; k];
    let u = random_matching(&mut rng, &sizes, d);
    let q = random_maps(&mut rng, k, b, b);
    let phi = random_basis(&mut rng, &sizes, b);
    let mut times: Vec<f64> = (0..9)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(solver::u_scores(&u, &q, &phi).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

/// Criterion 9: doubling the number of shapes doubles `m` at fixed `b`, `d`.
fn scaling_trend() -> Verdict {
    let (m_i, d, b) = (400, 400, 30);
    let _warmup = median_u_step_time(2, m_i, d, b);
    let t1 = median_u_step_time(4, m_i, d, b);
    let t2 = median_u_step_time(8, m_i, d, b);
    let ratio = t2 / t1;
    let detail = format!("m {} -> {}: U-step scores {:.2}ms -> {:.2}ms, ratio {ratio:.2}", 4 * m_i, 8 * m_i, t1 * 1e3, t2 * 1e3);
    if (SCALING_RANGE.0..=SCALING_RANGE.1).contains(&ratio) {
        Verdict::Pass(detail)
    } else {
        Verdict::Warn(format!("{detail}, outside [{}, {}]", SCALING_RANGE.0, SCALING_RANGE.1))
    }
}

fn mesh_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| MeshFormat::from_path(p).is_some())
        .collect();
    files.sort();
    Ok(files)
}

/// Criterion 10. Expects one shape class of meshes in `$ISOMUSH_TOSCA_DIR`,
/// plus `gt/map_<i>_<j>.txt` files; without them vertex `v` corresponds to
/// vertex `v` on every shape.
fn dataset_auc() -> Verdict {
    let Some(dir) = std::env::var_os(DATASET_ENV).map(PathBuf::from) else {
        return Verdict::Skip(format!("{DATASET_ENV} not set"));
    };
    let files = match mesh_files(&dir) {
        Ok(f) if f.len() >= 2 => f,
        Ok(_) => return Verdict::Skip(format!("fewer than two meshes in {}", dir.display())),
        Err(e) => return Verdict::Fail(format!("{}: {e}", dir.display())),
    };
    let shapes: Vec<Shape> = match files.iter().map(|p| load_mesh(p, MeshFormat::from_path(p).unwrap())).collect() {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let k = shapes.len();
    let mut gt = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let path = dir.join("gt").join(format!("map_{i}_{j}.txt"));
            let map = if path.exists() {
                match PairwiseMap::read_text(&path, i, j, shapes[i].len(), shapes[j].len()) {
                    Ok(m) => m,
                    Err(e) => return Verdict::Fail(e.to_string()),
                }
            } else {
                let n = shapes[j].len();
                PairwiseMap {
                    source: i,
                    target: j,
                    matches: (0..shapes[i].len()).map(|v| (v < n).then_some(v)).collect(),
                    target_len: n,
                }
            };
            gt.push(map);
        }
    }
    let out = match pipeline::run_match(&shapes, &RunConfig::default()) {
        Ok(o) => o,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let pred = all_pairs(&out.state.u);
    match eval::evaluate(&pred, &PairwiseSet::new(gt), &shapes, &EvalConfig::default()) {
        Ok(r) => verdict(
            (r.auc - DATASET_AUC).abs() <= DATASET_AUC_TOL,
            format!("{k} shapes, auc {:.4} (target {DATASET_AUC} ± {DATASET_AUC_TOL})", r.auc),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects nothing here.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let runs = convergence_runs();
    let results = [
        ("1 monotone convergence", runs.monotone),
        ("2 exact cycle consistency", runs.cycles),
        ("3 ground-truth recovery on isometric copies", recovery()),
        ("4 assignment optimality", lap_optimality()),
        ("5 orthogonal projection optimality", projection_optimality()),
        ("6 objective form equality", objective_forms()),
        ("7 gauge invariance", gauge_invariance()),
        ("8 half-step monotonicity", runs.half_steps),
        ("9 U-step scaling trend", scaling_trend()),
        ("10 dataset AUC", dataset_auc()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Warn(d) => ("WARN", d),
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} criterion {name}: {detail}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
