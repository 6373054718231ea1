//! End-to-end driver: meshes → bases → pairwise maps → synchronisation →
//! alternating optimisation. Each stage is a separate function so callers
//! can stop early or label failures by stage.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, UniverseSize};
use crate::descriptors::default_descriptors;
use crate::fmap::{descriptor_coefficients, solve_fmap, spectral_upsample, PairwiseFmap, PairwiseMap};
use crate::mesh::{load_mesh, MeshFormat, Shape};
use crate::solver::{self, SolverState, StackedBasis};
use crate::spectral::{shape_basis, SpectralBasis};
use crate::sync::{build_universe_embedding, ortho_sync, perm_sync, prepare_pairwise};
use crate::universe::{UniverseMaps, UniverseMatching};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Basis,
    Init,
    Sync,
    Optimise,
    Export,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Basis => "basis",
            Stage::Init => "init",
            Stage::Sync => "sync",
            Stage::Optimise => "optimise",
            Stage::Export => "export",
        };
        f.write_str(s)
    }
}

/// Loads every mesh; the format follows the file extension.
pub fn load_shapes(paths: &[PathBuf]) -> Result<Vec<Shape>> {
    paths
        .par_iter()
        .map(|p| {
            let fmt = MeshFormat::from_path(p)
                .ok_or_else(|| Error::InvalidArgument(format!("{}: unknown mesh extension (expected .off or .ply)", p.display())))?;
            load_mesh(p, fmt)
        })
        .collect()
}

/// Problem sizes resolved against the actual meshes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Dimensions {
    pub basis: usize,
    pub universe_basis: usize,
    pub universe: usize,
    pub initial_size: usize,
}

pub fn resolve_dimensions(shapes: &[Shape], cfg: &RunConfig) -> Result<Dimensions> {
    cfg.validate()?;
    if shapes.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 shapes, got {}", shapes.len())));
    }
    let min_m = shapes.iter().map(Shape::len).min().unwrap();
    let max_m = shapes.iter().map(Shape::len).max().unwrap();
    let basis = cfg.basis.min(min_m);
    if basis < cfg.basis {
        log::warn!("basis size reduced from {} to {basis} (smallest mesh)", cfg.basis);
    }
    let universe = match cfg.universe {
        UniverseSize::Auto => max_m,
        UniverseSize::Fixed(d) if d < max_m => return Err(Error::UniverseTooSmall { rows: max_m, cols: d }),
        UniverseSize::Fixed(d) => d,
    };
    let universe_basis = cfg.universe_basis_for(basis).max(basis).min(shapes.len() * basis);
    Ok(Dimensions {
        basis,
        universe_basis,
        universe,
        initial_size: cfg.init.initial_size.min(basis),
    })
}

pub fn compute_bases(shapes: &[Shape], b: usize, cache: Option<&std::path::Path>) -> Result<Vec<SpectralBasis>> {
    shapes.par_iter().map(|s| shape_basis(s, b, cache)).collect()
}

#[derive(Clone, Debug)]
pub struct PairwiseInit {
    /// `C_ij` for `i < j`, size `b`.
    pub fmaps: Vec<PairwiseFmap>,
    pub maps: Vec<PairwiseMap>,
    /// Pairs whose descriptor fit was rank-deficient and started from identity.
    pub identity_fallbacks: Vec<(usize, usize)>,
}

/// Descriptor fit at the initial size followed by spectral upsampling, for
/// every pair `i < j`.
pub fn pairwise_init(bases: &[SpectralBasis], dims: &Dimensions, cfg: &RunConfig) -> Result<PairwiseInit> {
    let k = bases.len();
    let b0 = dims.initial_size;
    let coeffs: Vec<DMatrix<f64>> = bases
        .par_iter()
        .map(|basis| {
            let d = default_descriptors(basis, &cfg.descriptors)?;
            Ok(descriptor_coefficients(basis, &d)?.columns(0, b0).into_owned())
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let results: Vec<(PairwiseFmap, PairwiseMap, bool)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (c0, fallback) = match solve_fmap(&coeffs[i], &coeffs[j], i, j) {
                Ok(f) => (f, false),
                Err(Error::RankDeficient { ratio }) => {
                    log::warn!("descriptors for pair ({i}, {j}) are rank-deficient (ratio {ratio:e}); starting from identity");
                    (PairwiseFmap { source: i, target: j, c: DMatrix::identity(b0, b0) }, true)
                }
                Err(e) => return Err(e),
            };
            let (f, m) = spectral_upsample(&bases[i], &bases[j], &c0, dims.basis, cfg.init.step)?;
            Ok((f, m, fallback))
        })
        .collect::<Result<_>>()?;
    let mut out = PairwiseInit { fmaps: Vec::new(), maps: Vec::new(), identity_fallbacks: Vec::new() };
    for ((f, m, fallback), &pair) in results.into_iter().zip(&pairs) {
        if fallback {
            out.identity_fallbacks.push(pair);
        }
        out.fmaps.push(f);
        out.maps.push(m);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SyncResult {
    pub u: UniverseMatching,
    pub q: UniverseMaps,
    pub eigen_gap: f64,
    pub ambiguous: bool,
}

/// Band filtering, orthogonal synchronisation and universe clustering.
pub fn synchronise(bases: &[SpectralBasis], init: &PairwiseInit, dims: &Dimensions, cfg: &RunConfig) -> Result<SyncResult> {
    let k = bases.len();
    let filtered = prepare_pairwise(&init.fmaps, cfg.band_radius)?;
    let outcome = ortho_sync(&filtered, k, dims.basis, dims.universe_basis)?;
    let truncated: Vec<SpectralBasis> = bases.iter().map(|s| s.truncated(dims.basis)).collect();
    let psi = build_universe_embedding(&truncated, &outcome.maps)?;
    let sizes: Vec<usize> = bases.iter().map(SpectralBasis::num_vertices).collect();
    let u = perm_sync(&psi, &sizes, dims.universe, &cfg.auction)?;
    Ok(SyncResult {
        u,
        q: outcome.maps,
        eigen_gap: outcome.eigen_gap,
        ambiguous: outcome.ambiguous,
    })
}

pub fn optimise(bases: &[SpectralBasis], start: &SyncResult, dims: &Dimensions, cfg: &RunConfig) -> Result<SolverState> {
    let phi = StackedBasis::from_bases(bases, dims.basis)?;
    solver::run(start.u.clone(), start.q.clone(), &phi, &cfg.solver())
}

/// All pairs `i < j` read off the universe matching.
pub fn universe_pairs(u: &UniverseMatching) -> Vec<PairwiseMap> {
    let k = u.num_shapes();
    (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .map(|(i, j)| solver::pairwise_from_universe(u, i, j))
        .collect()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub basis: f64,
    pub init: f64,
    pub sync: f64,
    pub optimise: f64,
}

#[derive(Debug)]
pub struct MatchOutput {
    pub dims: Dimensions,
    pub bases: Vec<SpectralBasis>,
    pub init: PairwiseInit,
    pub sync: SyncResult,
    pub state: SolverState,
    pub timings: Timings,
}

/// An error tagged with the stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

fn secs(t: Instant) -> f64 {
    Duration::as_secs_f64(&t.elapsed())
}

/// Runs every stage on already loaded shapes.
pub fn run_match(shapes: &[Shape], cfg: &RunConfig) -> std::result::Result<MatchOutput, StageError> {
    let dims = resolve_dimensions(shapes, cfg).at(Stage::Load)?;
    let mut timings = Timings::default();
    let t = Instant::now();
    let bases = compute_bases(shapes, dims.basis, cfg.basis_cache.as_deref()).at(Stage::Basis)?;
    timings.basis = secs(t);
    let t = Instant::now();
    let init = pairwise_init(&bases, &dims, cfg).at(Stage::Init)?;
    timings.init = secs(t);
    let t = Instant::now();
    let sync = synchronise(&bases, &init, &dims, cfg).at(Stage::Sync)?;
    timings.sync = secs(t);
    let t = Instant::now();
    let state = optimise(&bases, &sync, &dims, cfg).at(Stage::Optimise)?;
    timings.optimise = secs(t);
    Ok(MatchOutput { dims, bases, init, sync, state, timings })
}
