//! Per-vertex colouring by universe point.

use std::path::Path;

use isomush::mesh::{save_mesh, MeshFormat};
use isomush::solver::pairwise_from_universe;
use isomush::{Result, Shape, UniverseMatching};

pub const UNMATCHED: [u8; 3] = [0, 0, 0];

/// Fixed colour of a universe point. Never black.
pub fn universe_color(index: usize) -> [u8; 3] {
    // splitmix64 finaliser
    let mut x = (index as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    let channel = |shift: u32| 40 + ((x >> shift) & 0xff) as u8 % 216;
    [channel(0), channel(8), channel(16)]
}

/// `shape_<i>.ply` coloured by each vertex's universe point.
pub fn colormap(out: &Path, shapes: &[Shape], u: &UniverseMatching) -> Result<()> {
    for (i, s) in shapes.iter().enumerate() {
        let colors: Vec<[u8; 3]> = u.block(i).iter().map(|&a| universe_color(a)).collect();
        save_mesh(&out.join(format!("shape_{i}.ply")), s, MeshFormat::PlyAscii, Some(&colors))?;
    }
    Ok(())
}

/// For `i < j`: `pair_<i>_<j>.ply` is shape `j` where each vertex takes the
/// colour of its partner's universe point on `i`, black without a partner,
/// plus the correspondence as `map_<i>_<j>.txt`.
pub fn pairs(out: &Path, shapes: &[Shape], u: &UniverseMatching) -> Result<()> {
    let k = shapes.len();
    for i in 0..k {
        for j in i + 1..k {
            let ji = pairwise_from_universe(u, j, i);
            let colors: Vec<[u8; 3]> = ji
                .matches
                .iter()
                .map(|m| m.map_or(UNMATCHED, |w| universe_color(u.block(i)[w])))
                .collect();
            save_mesh(&out.join(format!("pair_{i}_{j}.ply")), &shapes[j], MeshFormat::PlyAscii, Some(&colors))?;
            pairwise_from_universe(u, i, j).write_text(&out.join(format!("map_{i}_{j}.txt")))?;
        }
    }
    Ok(())
}
