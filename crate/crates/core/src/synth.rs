//! Small synthetic meshes and random rigid/permutation transforms, used by
//! tests, benchmarks and the acceptance suite.

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Shape;

pub fn equilateral_triangle() -> Shape {
    equilateral_triangle_scaled(1.0)
}

pub fn equilateral_triangle_scaled(edge: f64) -> Shape {
    let h = edge * 3f64.sqrt() / 2.0;
    Shape::new(
        vec![Point3::origin(), Point3::new(edge, 0.0, 0.0), Point3::new(edge / 2.0, h, 0.0)],
        vec![[0, 1, 2]],
    )
    .expect("valid triangle")
}

/// Unit square split along the 0-2 diagonal.
pub fn unit_square() -> Shape {
    Shape::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .expect("valid square")
}

/// Regular tetrahedron with unit edges, outward-oriented faces.
pub fn regular_tetrahedron() -> Shape {
    let s3 = 3f64.sqrt();
    Shape::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, s3 / 2.0, 0.0),
            Point3::new(0.5, s3 / 6.0, (2.0f64 / 3.0).sqrt()),
        ],
        vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [2, 0, 3]],
    )
    .expect("valid tetrahedron")
}

/// Regular icosahedron with unit edges centred at the origin.
pub fn regular_icosahedron() -> Shape {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ];
    let vertices = raw
        .iter()
        .map(|&(x, y, z)| Point3::new(x / 2.0, y / 2.0, z / 2.0))
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Shape::new(vertices, faces).expect("valid icosahedron")
}

/// Closed genus-0 surface: a latitude/longitude sphere with `rings` interior
/// latitude rings of `segments` vertices each plus two poles, stretched into
/// an ellipsoid and deformed by smooth random bumps of relative height
/// `amplitude`. Has `rings * segments + 2` vertices.
///
/// With `amplitude > 0` the surface has no intrinsic symmetries, so its
/// Laplacian spectrum is simple.
pub fn bumpy_sphere(rings: usize, segments: usize, amplitude: f64, seed: u64) -> Shape {
    assert!(rings >= 1 && segments >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(Vector3<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let c = random_unit(&mut rng);
            let a = rng.gen_range(0.3..1.0);
            let w = rng.gen_range(0.35..0.8);
            (c, a, w)
        })
        .collect();
    let axes = Vector3::new(1.0, 0.8, 0.62);
    let place = |dir: Vector3<f64>| -> Point3<f64> {
        let bump: f64 = bumps
            .iter()
            .map(|(c, a, w)| a * (-(dir - c).norm_squared() / (w * w)).exp())
            .sum();
        let r = 1.0 + amplitude * bump;
        Point3::from(dir.component_mul(&axes) * r)
    };

    let mut vertices = Vec::with_capacity(rings * segments + 2);
    vertices.push(place(Vector3::z()));
    for r in 0..rings {
        let theta = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            let dir = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            vertices.push(place(dir));
        }
    }
    vertices.push(place(-Vector3::z()));
    let south = vertices.len() - 1;
    let idx = |r: usize, s: usize| 1 + r * segments + (s % segments);

    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, idx(0, s), idx(0, s + 1)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (idx(r, s), idx(r, s + 1), idx(r + 1, s), idx(r + 1, s + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for s in 0..segments {
        faces.push([south, idx(rings - 1, s + 1), idx(rings - 1, s)]);
    }
    Shape::new(vertices, faces).expect("valid bumpy sphere")
}

/// A bumpy sphere with roughly `target` vertices (never fewer than 8).
pub fn bumpy_sphere_with_vertices(target: usize, amplitude: f64, seed: u64) -> Shape {
    let target = target.max(8);
    let rings = (((target - 2) as f64 / 2.0).sqrt().round() as usize).max(2);
    let segments = ((target - 2) / rings).max(3);
    bumpy_sphere(rings, segments, amplitude, seed)
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation3<f64> {
    let axis = Unit::new_normalize(random_unit(rng));
    Rotation3::from_axis_angle(&axis, rng.gen_range(0.0..std::f64::consts::TAU))
}

pub fn random_permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bumpy_sphere_vertex_count() {
        let s = bumpy_sphere(10, 14, 0.2, 1);
        assert_eq!(s.len(), 142);
        // Closed surface: Euler characteristic 2.
        let chi = s.len() as i64 - s.edges().len() as i64 + s.faces().len() as i64;
        assert_eq!(chi, 2);
    }

    #[test]
    fn icosahedron_has_unit_edges() {
        let s = regular_icosahedron();
        assert_eq!(s.edges().len(), 30);
        for &l in s.edge_lengths() {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sized_sphere_close_to_target() {
        for t in [50, 120, 300] {
            let s = bumpy_sphere_with_vertices(t, 0.1, 0);
            let m = s.len() as f64;
            assert!((m - t as f64).abs() / (t as f64) < 0.15, "{t} -> {m}");
        }
    }
}
