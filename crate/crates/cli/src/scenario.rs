//! One JSON document describing a reproducible experiment.
//!
//! ```json
//! {
//!   "graph": {"tree": {"depth": 2, "k": 2, "p": 1.0}},
//!   "seeds": "tree_root",
//!   "sim": {"dwell_t": 1, "decay": 1.0, "horizon": 20, "replicas": 100, "seed": 7},
//!   "quality": {"mode": "by_votes", "threshold": 1},
//!   "plan": "plan.json"
//! }
//! ```
//!
//! Relative paths are resolved against the scenario file's directory.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use sar_core::exposure::{select_seeds_with, QualityPolicy, SeedRanking};
use sar_core::graph::{load_graph, regular_graph, tree_graph};
use sar_core::interventions::Intervention;
use sar_core::io::{read_plan, read_posts};
use sar_core::sim::SimConfig;
use sar_core::{ContactGraph, StudentId};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    File(PathBuf),
    Regular { n: usize, k: usize, p: f64, seed: u64 },
    Tree { depth: u32, k: u32, p: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedSource {
    Ids(Vec<StudentId>),
    TopK {
        posts: PathBuf,
        k: usize,
        #[serde(default)]
        ranking: SeedRanking,
    },
    /// Root of a `tree` graph source.
    TreeRoot,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSource,
    pub seeds: SeedSource,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub quality: QualityPolicy,
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// Graph and seeds ready to simulate.
pub struct Prepared {
    pub graph: ContactGraph,
    pub seeds: Vec<StudentId>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut s: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let p = match self.graph {
            GraphSource::Regular { p, .. } | GraphSource::Tree { p, .. } => Some(p),
            GraphSource::File(_) => None,
        };
        if p.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(CliError::Usage("graph p must lie in [0, 1]".into()));
        }
        if matches!(self.seeds, SeedSource::TreeRoot) && !matches!(self.graph, GraphSource::Tree { .. }) {
            return Err(CliError::Usage("\"tree_root\" seeds need a tree graph".into()));
        }
        if matches!(self.seeds, SeedSource::TopK { k: 0, .. }) {
            return Err(CliError::Usage("top_k needs k >= 1".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let (graph, root) = match &self.graph {
            GraphSource::File(path) => (load_graph(open(&self.resolve(path))?)?, None),
            GraphSource::Regular { n, k, p, seed } => (regular_graph(*n, *k, *p, *seed)?, None),
            GraphSource::Tree { depth, k, p } => {
                let (g, root) = tree_graph(*depth, *k, *p)?;
                (g, Some(root))
            }
        };
        let seeds = match &self.seeds {
            SeedSource::Ids(ids) => ids.clone(),
            SeedSource::TreeRoot => vec![root.expect("validated: tree graph")],
            SeedSource::TopK { posts, k, ranking } => {
                let posts = read_posts(open(&self.resolve(posts))?)?;
                select_seeds_with(&posts, self.quality, *k, *ranking)?
            }
        };
        Ok(Prepared { graph, seeds })
    }

    pub fn plan_path(&self) -> Option<PathBuf> {
        self.plan.as_deref().map(|p| self.resolve(p))
    }
}

pub fn load_plan(path: &Path) -> Result<Vec<Intervention>, CliError> {
    read_plan(open(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
