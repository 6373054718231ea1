//! Correspondence quality: normalised geodesic error, PCK curves and their
//! AUC, and the cycle-consistency violation rate.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fmap::PairwiseMap;
use crate::mesh::{geodesic_distances, Shape};
use crate::{Error, Result};

/// Error assigned to a vertex the prediction leaves unmatched.
pub const UNMATCHED_ERROR: f64 = 1.0;

/// Per-vertex `dist(pred(u), gt(u)) / diameter` on the target shape.
///
/// Only vertices with a ground-truth partner are scored; the output lists
/// `(vertex, error)` in vertex order.
pub fn geodesic_error(pred: &PairwiseMap, gt: &PairwiseMap, target: &Shape, diameter: f64) -> Result<Vec<(usize, f64)>> {
    if pred.matches.len() != gt.matches.len() {
        return Err(Error::Dimension(format!(
            "prediction covers {} vertices, ground truth {}",
            pred.matches.len(),
            gt.matches.len()
        )));
    }
    if gt.target_len != target.len() || pred.target_len != target.len() {
        return Err(Error::Dimension(format!("target shape has {} vertices, maps expect {}", target.len(), gt.target_len)));
    }
    if !(diameter > 0.0) {
        return Err(Error::InvalidArgument(format!("diameter must be positive, got {diameter}")));
    }
    let sources: BTreeSet<usize> = gt.matches.iter().flatten().copied().collect();
    if sources.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "empty ground truth for pair ({}, {})",
            gt.source, gt.target
        )));
    }
    let fields: HashMap<usize, Vec<f64>> = sources
        .into_par_iter()
        .map(|s| geodesic_distances(target, s).map(|f| (s, f.dist)))
        .collect::<Result<_>>()?;
    Ok(gt
        .matches
        .iter()
        .zip(&pred.matches)
        .enumerate()
        .filter_map(|(u, (g, p))| {
            let g = (*g)?;
            let e = match p {
                Some(v) => fields[&g][*v] / diameter,
                None => UNMATCHED_ERROR,
            };
            Some((u, e))
        })
        .collect())
}

/// `n` uniform thresholds on `[0, tau_max]`.
pub fn thresholds(tau_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![tau_max],
        _ => (0..n).map(|i| tau_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Fraction of errors `≤ τ` at each threshold, and the trapezoidal area
/// under that curve divided by the threshold span.
pub fn pck_auc(errors: &[f64], thresholds: &[f64]) -> Result<(Vec<f64>, f64)> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no errors to summarise".into()));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("thresholds must be ascending".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let curve: Vec<f64> = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n)
        .collect();
    let auc = match thresholds {
        [] => 0.0,
        [_] => curve[0],
        [first, .., last] => {
            let area: f64 = thresholds
                .windows(2)
                .zip(curve.windows(2))
                .map(|(t, c)| 0.5 * (t[1] - t[0]) * (c[0] + c[1]))
                .sum();
            if last > first {
                area / (last - first)
            } else {
                curve[0]
            }
        }
    };
    Ok((curve, auc.clamp(0.0, 1.0)))
}

/// How cycles `(i, j, ℓ, u)` are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleSampling {
    Exhaustive,
    Sampled { samples: usize, seed: u64 },
}

impl CycleSampling {
    /// Exhaustive for small collections, otherwise `1e5` seeded samples.
    pub fn auto(k: usize, max_vertices: usize, seed: u64) -> Self {
        if k <= 10 && max_vertices <= 2000 {
            CycleSampling::Exhaustive
        } else {
            CycleSampling::Sampled { samples: 100_000, seed }
        }
    }
}

/// All pairwise maps of a collection, indexed by ordered pair.
#[derive(Clone, Debug, Default)]
pub struct PairwiseSet {
    maps: HashMap<(usize, usize), PairwiseMap>,
}

impl PairwiseSet {
    pub fn new(maps: impl IntoIterator<Item = PairwiseMap>) -> Self {
        PairwiseSet {
            maps: maps.into_iter().map(|m| ((m.source, m.target), m)).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&PairwiseMap> {
        self.maps.get(&(i, j))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Adds `P_ji = P_ijᵀ` wherever only one direction is present.
    pub fn complete_with_transposes(&mut self) -> Result<()> {
        let missing: Vec<PairwiseMap> = self
            .maps
            .values()
            .filter(|m| !self.maps.contains_key(&(m.target, m.source)))
            .map(PairwiseMap::transpose)
            .collect::<Result<_>>()?;
        for m in missing {
            self.maps.insert((m.source, m.target), m);
        }
        Ok(())
    }
}

/// Fraction of cycles `u → P_ij → P_jℓ` that disagree with `P_iℓ(u)`.
///
/// A cycle exists only when `u` has a partner on `j`. A second hop that ends
/// unmatched while the direct edge is matched is a violation; two unmatched
/// routes agree. Fewer than three shapes give `0`.
pub fn cycle_error(set: &PairwiseSet, sizes: &[usize], sampling: CycleSampling) -> Result<f64> {
    let k = sizes.len();
    if k < 3 {
        return Ok(0.0);
    }
    let fetch = |i: usize, j: usize| -> Result<&PairwiseMap> {
        let m = set
            .get(i, j)
            .ok_or_else(|| Error::InvalidArgument(format!("missing pairwise map ({i}, {j})")))?;
        if m.matches.len() != sizes[i] || m.target_len != sizes[j] {
            return Err(Error::Dimension(format!("pairwise map ({i}, {j}) has wrong size")));
        }
        Ok(m)
    };
    // None: no cycle through j.
    let violates = |pij: &PairwiseMap, pjl: &PairwiseMap, pil: &PairwiseMap, u: usize| {
        pij.matches[u].map(|v| pjl.matches[v] != pil.matches[u])
    };
    let triplets: Vec<(usize, usize, usize)> = (0..k)
        .flat_map(|i| (0..k).flat_map(move |j| (0..k).map(move |l| (i, j, l))))
        .filter(|&(i, j, l)| i != j && j != l && i != l)
        .collect();
    let (bad, total) = match sampling {
        CycleSampling::Exhaustive => {
            let mut bad = 0usize;
            let mut total = 0usize;
            for &(i, j, l) in &triplets {
                let (pij, pjl, pil) = (fetch(i, j)?, fetch(j, l)?, fetch(i, l)?);
                for u in 0..sizes[i] {
                    if let Some(v) = violates(pij, pjl, pil, u) {
                        total += 1;
                        bad += usize::from(v);
                    }
                }
            }
            (bad, total)
        }
        CycleSampling::Sampled { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut bad, mut total) = (0usize, 0usize);
            for _ in 0..samples {
                let (i, j, l) = triplets[rng.gen_range(0..triplets.len())];
                let u = rng.gen_range(0..sizes[i]);
                if let Some(v) = violates(fetch(i, j)?, fetch(j, l)?, fetch(i, l)?, u) {
                    total += 1;
                    bad += usize::from(v);
                }
            }
            (bad, total)
        }
    };
    Ok(if total == 0 { 0.0 } else { bad as f64 / total as f64 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub source: usize,
    pub target: usize,
    /// `(vertex, error)` for every ground-truth vertex of `source`.
    pub errors: Vec<(usize, f64)>,
    pub mean_error: f64,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<PairReport>,
    pub thresholds: Vec<f64>,
    pub pck: Vec<f64>,
    pub auc: f64,
    pub cycle_error: f64,
    pub runtime_seconds: Option<f64>,
    pub objective_trace: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub tau_max: f64,
    pub num_thresholds: usize,
    /// Farthest-point sources for the diameter estimate.
    pub diameter_sources: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tau_max: 0.25,
            num_thresholds: 100,
            diameter_sources: 20,
            seed: 0,
        }
    }
}

/// Scores every predicted pair that has ground truth and pools the errors
/// into one PCK curve.
pub fn evaluate(pred: &PairwiseSet, gt: &PairwiseSet, shapes: &[Shape], cfg: &EvalConfig) -> Result<MatchReport> {
    if !(cfg.tau_max > 0.0) || cfg.num_thresholds < 2 {
        return Err(Error::Config(format!(
            "need tau_max > 0 and at least 2 thresholds, got {} and {}",
            cfg.tau_max, cfg.num_thresholds
        )));
    }
    let mut keys: Vec<(usize, usize)> = gt.maps.keys().copied().collect();
    keys.sort_unstable();
    if keys.is_empty() {
        return Err(Error::InvalidArgument("no ground-truth maps".into()));
    }
    for &(i, j) in &keys {
        if i >= shapes.len() || j >= shapes.len() {
            return Err(Error::InvalidArgument(format!("ground truth ({i}, {j}) refers to a missing shape")));
        }
        if pred.get(i, j).is_none() {
            return Err(Error::InvalidArgument(format!("no prediction for pair ({i}, {j})")));
        }
    }
    let targets: BTreeSet<usize> = keys.iter().map(|k| k.1).collect();
    let diameters: HashMap<usize, f64> = targets
        .into_iter()
        .map(|j| crate::mesh::diameter(&shapes[j], cfg.diameter_sources, cfg.seed).map(|d| (j, d)))
        .collect::<Result<_>>()?;
    let ts = thresholds(cfg.tau_max, cfg.num_thresholds);
    let pairs: Vec<PairReport> = keys
        .par_iter()
        .map(|&(i, j)| {
            let errors = geodesic_error(pred.get(i, j).unwrap(), gt.get(i, j).unwrap(), &shapes[j], diameters[&j])?;
            let values: Vec<f64> = errors.iter().map(|e| e.1).collect();
            let (_, auc) = pck_auc(&values, &ts)?;
            Ok(PairReport {
                source: i,
                target: j,
                mean_error: values.iter().sum::<f64>() / values.len() as f64,
                auc,
                errors,
            })
        })
        .collect::<Result<_>>()?;
    let pooled: Vec<f64> = pairs.iter().flat_map(|p| p.errors.iter().map(|e| e.1)).collect();
    let (pck, auc) = pck_auc(&pooled, &ts)?;
    let sizes: Vec<usize> = shapes.iter().map(Shape::len).collect();
    let mut notes = Vec::new();
    let cycle = if shapes.len() < 3 {
        notes.push("fewer than three shapes: no cycles to test, cycle error reported as 0".to_string());
        0.0
    } else {
        let mut full = pred.clone();
        full.complete_with_transposes()?;
        let max_m = sizes.iter().copied().max().unwrap_or(0);
        cycle_error(&full, &sizes, CycleSampling::auto(shapes.len(), max_m, cfg.seed))?
    };
    Ok(MatchReport {
        pairs,
        thresholds: ts,
        pck,
        auc,
        cycle_error: cycle,
        runtime_seconds: None,
        objective_trace: None,
        notes,
    })
}

impl MatchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// `threshold,pck` rows.
    pub fn pck_csv(&self) -> String {
        let mut s = String::from("threshold,pck\n");
        for (t, p) in self.thresholds.iter().zip(&self.pck) {
            let _ = writeln!(s, "{t},{p}");
        }
        s
    }

    /// Writes `report.json` and `pck.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("pck.csv");
        std::fs::write(&csv, self.pck_csv()).map_err(|e| Error::io(&csv, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn map(source: usize, target: usize, matches: Vec<Option<usize>>, target_len: usize) -> PairwiseMap {
        PairwiseMap { source, target, matches, target_len }
    }

    fn identity(source: usize, target: usize, m: usize) -> PairwiseMap {
        map(source, target, (0..m).map(Some).collect(), m)
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let sq = synth::unit_square();
        let gt = identity(0, 1, 4);
        let e = geodesic_error(&gt, &gt, &sq, 2f64.sqrt()).unwrap();
        assert_eq!(e.len(), 4);
        assert!(e.iter().all(|x| x.1 == 0.0));
    }

    #[test]
    fn neighbour_error_is_edge_over_diameter() {
        let tri = synth::equilateral_triangle_scaled(3.0);
        let gt = identity(0, 1, 3);
        let pred = map(0, 1, vec![Some(1), Some(1), Some(2)], 3);
        let e = geodesic_error(&pred, &gt, &tri, 12.0).unwrap();
        assert!((e[0].1 - 0.25).abs() < 1e-12);
        assert_eq!(e[1].1, 0.0);
    }

    #[test]
    fn unmatched_scores_one() {
        let tri = synth::equilateral_triangle();
        let gt = identity(0, 1, 3);
        let pred = map(0, 1, vec![None, Some(1), Some(2)], 3);
        let e = geodesic_error(&pred, &gt, &tri, 1.0).unwrap();
        assert_eq!(e[0].1, 1.0);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let tri = synth::equilateral_triangle();
        let gt = map(0, 1, vec![None; 3], 3);
        assert!(geodesic_error(&gt, &gt, &tri, 1.0).is_err());
    }

    #[test]
    fn pck_extremes() {
        let ts = thresholds(0.25, 100);
        let (curve, auc) = pck_auc(&[0.0; 10], &ts).unwrap();
        assert!(curve.iter().all(|&c| c == 1.0));
        assert_eq!(auc, 1.0);
        let (curve, auc) = pck_auc(&[0.3, 0.9], &ts).unwrap();
        assert!(curve.iter().all(|&c| c == 0.0));
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn pck_two_point_trapezoid() {
        let ts = thresholds(0.25, 100);
        let (curve, auc) = pck_auc(&[0.0, 0.125], &ts).unwrap();
        assert_eq!(curve[0], 0.5);
        assert_eq!(*curve.last().unwrap(), 1.0);
        assert!((auc - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pck_is_order_invariant_and_monotone() {
        let ts = thresholds(0.25, 50);
        let errs = [0.01, 0.2, 0.05, 0.0, 0.4, 0.12];
        let mut rev = errs;
        rev.reverse();
        let (c1, a1) = pck_auc(&errs, &ts).unwrap();
        let (c2, a2) = pck_auc(&rev, &ts).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(a1, a2);
        assert!(c1.windows(2).all(|w| w[1] >= w[0]));
        assert!((c1[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_maps_have_no_cycle_error() {
        let u = crate::universe::UniverseMatching::new(vec![vec![0, 1, 2, 3], vec![3, 1, 0, 2], vec![2, 4, 0]], 5).unwrap();
        let mut maps = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    maps.push(crate::solver::pairwise_from_universe(&u, i, j));
                }
            }
        }
        let set = PairwiseSet::new(maps);
        assert_eq!(cycle_error(&set, &[4, 4, 3], CycleSampling::Exhaustive).unwrap(), 0.0);
    }

    #[test]
    fn transposition_breaks_two_cycles() {
        // Every ordering of the triplet sees the swapped pair disagree.
        let m = 6;
        let mut p02 = identity(0, 2, m);
        p02.matches.swap(0, 1);
        let mut set = PairwiseSet::new([identity(0, 1, m), identity(1, 2, m), p02]);
        set.complete_with_transposes().unwrap();
        let e = cycle_error(&set, &[m, m, m], CycleSampling::Exhaustive).unwrap();
        assert!((e - 2.0 / m as f64).abs() < 1e-15);
    }

    #[test]
    fn broken_second_hop_is_a_violation() {
        let mut p12 = identity(1, 2, 2);
        p12.matches[0] = None;
        let mut set = PairwiseSet::new([identity(0, 1, 2), p12, identity(0, 2, 2)]);
        set.complete_with_transposes().unwrap();
        let e = cycle_error(&set, &[2, 2, 2], CycleSampling::Exhaustive).unwrap();
        assert!(e > 0.0);
    }

    #[test]
    fn two_shapes_have_no_cycles() {
        let set = PairwiseSet::new([identity(0, 1, 3)]);
        assert_eq!(cycle_error(&set, &[3, 3], CycleSampling::Exhaustive).unwrap(), 0.0);
    }

    #[test]
    fn sampled_cycles_agree_on_consistent_maps() {
        let u = crate::universe::UniverseMatching::identity(&[5, 5, 5, 5], 5).unwrap();
        let maps = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| crate::solver::pairwise_from_universe(&u, i, j));
        let set = PairwiseSet::new(maps);
        let e = cycle_error(&set, &[5; 4], CycleSampling::Sampled { samples: 1000, seed: 3 }).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn evaluate_pred_equals_gt() {
        let shapes = vec![synth::regular_icosahedron(), synth::regular_icosahedron(), synth::regular_icosahedron()];
        let maps: Vec<PairwiseMap> = (0..3)
            .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| identity(i, j, 12)))
            .collect();
        let set = PairwiseSet::new(maps);
        let r = evaluate(&set, &set, &shapes, &EvalConfig::default()).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.cycle_error, 0.0);
        assert_eq!(r.pairs.len(), 6);
        let parsed: MatchReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(parsed.auc, 1.0);
        assert!(r.pck_csv().starts_with("threshold,pck\n"));
    }
}
