use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Shape;
use crate::{Error, Result};

/// Shortest-path distances from one source vertex.
#[derive(Clone, Debug)]
pub struct GeodesicField {
    pub source: usize,
    pub dist: Vec<f64>,
}

impl GeodesicField {
    pub fn max(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Min-heap on distance, then on vertex index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over a weighted adjacency list. Fails if any vertex is
/// unreachable from `source`.
pub fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> Result<GeodesicField> {
    let n = adjacency.len();
    if source >= n {
        return Err(Error::InvalidArgument(format!(
            "source vertex {source} out of range for {n} vertices"
        )));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem { dist: 0.0, vertex: source });
    while let Some(HeapItem { dist: d, vertex: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { dist: nd, vertex: v });
            }
        }
    }
    let unreachable = done.iter().filter(|&&d| !d).count();
    if unreachable > 0 {
        return Err(Error::Disconnected {
            source_vertex: source,
            unreachable,
            total: n,
        });
    }
    Ok(GeodesicField { source, dist })
}

pub(super) fn reachable_count(adjacency: &[Vec<(usize, f64)>], source: usize) -> usize {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![source];
    seen[source] = true;
    let mut count = 0;
    while let Some(u) = stack.pop() {
        count += 1;
        for &(v, _) in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    count
}

/// Graph geodesic distances (Dijkstra with Euclidean edge lengths).
pub fn geodesic_distances(shape: &Shape, source: usize) -> Result<GeodesicField> {
    dijkstra(shape.adjacency(), source)
}

/// Shape diameter estimated from `n_sources` farthest-point-sampled sources.
///
/// The first source is drawn from `seed`; each following source is the
/// vertex farthest from all previous ones. Sampling is prefix-stable, so the
/// estimate is nondecreasing in `n_sources`, and exact once
/// `n_sources >= shape.len()`.
pub fn diameter(shape: &Shape, n_sources: usize, seed: u64) -> Result<f64> {
    if n_sources == 0 {
        return Err(Error::InvalidArgument("n_sources must be at least 1".into()));
    }
    let n = shape.len();
    if n_sources >= n {
        return diameter_exact(shape);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut source = rng.gen_range(0..n);
    let mut nearest = vec![f64::INFINITY; n];
    let mut best: f64 = 0.0;
    for _ in 0..n_sources {
        let field = geodesic_distances(shape, source)?;
        best = best.max(field.max());
        for (near, &d) in nearest.iter_mut().zip(&field.dist) {
            *near = near.min(d);
        }
        // Farthest from the sampled set; lowest index on ties.
        source = nearest
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc })
            .0;
    }
    Ok(best)
}

/// Exact graph diameter: max over all-pairs shortest paths.
pub fn diameter_exact(shape: &Shape) -> Result<f64> {
    use rayon::prelude::*;
    let maxima = (0..shape.len())
        .into_par_iter()
        .map(|s| geodesic_distances(shape, s).map(|f| f.max()))
        .collect::<Result<Vec<_>>>()?;
    Ok(maxima.into_iter().fold(0.0, f64::max))
}
