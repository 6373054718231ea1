//! Run configuration: one JSON document, every field optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assignment::AuctionConfig;
use crate::descriptors::DescriptorParams;
use crate::eval::EvalConfig;
use crate::solver::SolverConfig;
use crate::{Error, Result};

/// Universe size: `"auto"` (largest shape) or an explicit count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "UniverseRepr", into = "UniverseRepr")]
pub enum UniverseSize {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum UniverseRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<UniverseRepr> for UniverseSize {
    type Error = String;

    fn try_from(r: UniverseRepr) -> std::result::Result<Self, String> {
        match r {
            UniverseRepr::Count(d) => Ok(UniverseSize::Fixed(d)),
            UniverseRepr::Name(s) if s == "auto" => Ok(UniverseSize::Auto),
            UniverseRepr::Name(s) => Err(format!("universe size must be \"auto\" or an integer, got {s:?}")),
        }
    }
}

impl From<UniverseSize> for UniverseRepr {
    fn from(u: UniverseSize) -> Self {
        match u {
            UniverseSize::Auto => UniverseRepr::Name("auto".into()),
            UniverseSize::Fixed(d) => UniverseRepr::Count(d),
        }
    }
}

impl std::str::FromStr for UniverseSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(UniverseSize::Auto);
        }
        s.parse()
            .map(UniverseSize::Fixed)
            .map_err(|_| format!("expected \"auto\" or an integer, got {s:?}"))
    }
}

/// Pairwise initialisation schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Basis size of the descriptor-based fit.
    pub initial_size: usize,
    pub step: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { initial_size: 10, step: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub shapes: Vec<PathBuf>,
    /// Spectral basis size `b`.
    pub basis: usize,
    pub universe: UniverseSize,
    /// Columns `b'` of the universe maps; `None` means `b` for full shapes and
    /// `⌈1.2 b⌉` when `partial` is set.
    pub universe_basis: Option<usize>,
    pub partial: bool,
    pub epsilon: f64,
    pub max_iters: usize,
    pub band_radius: usize,
    pub descriptors: DescriptorParams,
    pub init: InitConfig,
    pub auction: AuctionConfig,
    pub eval: EvalConfig,
    /// Worker threads, `0` for one per core.
    pub threads: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Directory for cached eigenbases.
    pub basis_cache: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        RunConfig {
            shapes: Vec::new(),
            basis: 30,
            universe: UniverseSize::Auto,
            universe_basis: None,
            partial: false,
            epsilon: solver.epsilon,
            max_iters: solver.max_iters,
            band_radius: 6,
            descriptors: DescriptorParams::default(),
            init: InitConfig::default(),
            auction: AuctionConfig::default(),
            eval: EvalConfig::default(),
            threads: 0,
            seed: 0,
            out: PathBuf::from("isomush-out"),
            basis_cache: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            auction: self.auction.clone(),
        }
    }

    /// `b'` for a basis of size `b`.
    pub fn universe_basis_for(&self, b: usize) -> usize {
        match self.universe_basis {
            Some(bp) => bp,
            None if self.partial => (1.2 * b as f64).ceil() as usize,
            None => b,
        }
    }

    /// Range checks that do not depend on the meshes.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.basis < 2 {
            return fail(format!("basis size must be at least 2, got {}", self.basis));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return fail(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if self.init.initial_size == 0 || self.init.step == 0 {
            return fail("initial basis size and upsampling step must be positive".into());
        }
        if let Some(bp) = self.universe_basis {
            if bp < self.basis {
                return fail(format!("universe basis {bp} is smaller than basis {}", self.basis));
            }
        }
        if self.universe == UniverseSize::Fixed(0) {
            return fail("universe size must be positive".into());
        }
        if !(self.auction.resolution > 0.0 && self.auction.resolution < 1.0) || self.auction.scaling_factor < 2 {
            return fail("auction resolution must lie in (0, 1) and scaling factor be at least 2".into());
        }
        if !(self.eval.tau_max > 0.0) || self.eval.num_thresholds < 2 {
            return fail("eval needs tau_max > 0 and at least 2 thresholds".into());
        }
        Ok(())
    }
}
