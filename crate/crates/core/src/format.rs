//! Text formats: graph files, decomposition files and ordering names.
//!
//! Graph files are TOML:
//!
//! ```toml
//! [lattice]            # optional
//! rows = 2
//! cols = 2
//! periodic = false
//!
//! [[variables]]
//! kind = "discrete"    # or "angle", "real"
//! cardinality = 2
//!
//! [[factors]]
//! clique = [0, 1]
//! kind = "table"       # or "constant", "xy_pair", "gaussian_obs", "gaussian_pair"
//! log_values = [0.5, -inf, 0.0, 1.25]
//! ```
//!
//! Decomposition files list, per step, the factor ids and the variables the
//! step introduces, plus optional context variables:
//!
//! ```toml
//! context = []
//! [[steps]]
//! factors = []
//! vars = [0]
//! [[steps]]
//! factors = [0]
//! vars = [1]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomposition::{Decomposition, OrderingStrategy};
use crate::error::{Error, Result};
use crate::graph::{Domain, FactorGraph, FactorId, Lattice, Potential, VarId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Constant { log_value: f64 },
    Table { log_values: Vec<f64> },
    XyPair { coupling: f64 },
    GaussianObs { y: f64, sigma: f64 },
    GaussianPair { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub clique: Vec<VarId>,
    #[serde(flatten)]
    pub potential: PotentialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
    #[serde(default)]
    pub variables: Vec<Domain>,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
}

impl GraphFile {
    pub fn from_graph(g: &FactorGraph) -> Result<Self> {
        let factors = g
            .factors()
            .iter()
            .map(|f| {
                let potential = match f.potential() {
                    Potential::Constant { log_value } => PotentialSpec::Constant {
                        log_value: *log_value,
                    },
                    Potential::Table { log_values } => PotentialSpec::Table {
                        log_values: log_values.clone(),
                    },
                    Potential::XyPair { coupling } => PotentialSpec::XyPair {
                        coupling: *coupling,
                    },
                    Potential::GaussianObs { y, sigma } => PotentialSpec::GaussianObs {
                        y: *y,
                        sigma: *sigma,
                    },
                    Potential::GaussianPair { sigma } => {
                        PotentialSpec::GaussianPair { sigma: *sigma }
                    }
                    Potential::Custom { name, .. } => {
                        return Err(Error::Config(format!(
                            "custom factor {name:?} cannot be written"
                        )))
                    }
                };
                Ok(FactorSpec {
                    clique: f.clique().to_vec(),
                    potential,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            lattice: g.lattice().copied(),
            variables: g.variables().iter().map(|v| v.domain).collect(),
            factors,
        })
    }

    pub fn into_graph(self) -> Result<FactorGraph> {
        let mut g = FactorGraph::new(self.variables)?;
        if let Some(l) = self.lattice {
            g = g.with_lattice(l)?;
        }
        for f in self.factors {
            let p = match f.potential {
                PotentialSpec::Constant { log_value } => Potential::Constant { log_value },
                PotentialSpec::Table { log_values } => Potential::Table { log_values },
                PotentialSpec::XyPair { coupling } => Potential::XyPair { coupling },
                PotentialSpec::GaussianObs { y, sigma } => Potential::GaussianObs { y, sigma },
                PotentialSpec::GaussianPair { sigma } => Potential::GaussianPair { sigma },
            };
            g.add_factor(f.clique, p)?;
        }
        Ok(g)
    }
}

pub fn graph_to_toml(g: &FactorGraph) -> Result<String> {
    toml::to_string(&GraphFile::from_graph(g)?).map_err(|e| Error::Config(e.to_string()))
}

pub fn graph_from_toml(text: &str) -> Result<FactorGraph> {
    let file: GraphFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_graph()
}

pub fn read_graph(path: &Path) -> Result<FactorGraph> {
    graph_from_toml(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionFile {
    #[serde(default)]
    pub context: Vec<VarId>,
    pub steps: Vec<StepSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpec {
    #[serde(default)]
    pub factors: Vec<FactorId>,
    #[serde(default)]
    pub vars: Vec<VarId>,
}

pub fn decomposition_to_toml(d: &Decomposition) -> Result<String> {
    let file = DecompositionFile {
        steps: d
            .steps()
            .iter()
            .map(|s| StepSpec {
                factors: s.factor_ids.clone(),
                vars: s.new_vars.clone(),
            })
            .collect(),
        context: d.context().to_vec(),
    };
    toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))
}

/// Parse a decomposition for `graph`; it is validated before returning.
pub fn decomposition_from_toml(
    graph: std::sync::Arc<FactorGraph>,
    text: &str,
) -> Result<Decomposition> {
    let file: DecompositionFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let steps = file
        .steps
        .into_iter()
        .map(|s| (s.factors, s.vars))
        .collect();
    let d = Decomposition::from_steps(graph, steps, &file.context)?;
    let report = d.validate();
    if !report.is_valid() {
        return Err(Error::InvalidOrder(format!("{:?}", report.violations)));
    }
    Ok(d)
}

/// `lr`, `diag`, `spiral`, `snake`, `rndn` or `rndn:<seed>` (seed defaults
/// to `default_seed`), or `explicit:<file>` with whitespace- or
/// comma-separated variable ids.
pub fn parse_ordering(s: &str, default_seed: u64) -> Result<OrderingStrategy> {
    let (head, arg) = match s.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (s, None),
    };
    Ok(match (head, arg) {
        ("lr", None) => OrderingStrategy::LeftRight,
        ("diag", None) => OrderingStrategy::Diagonal,
        ("spiral", None) => OrderingStrategy::Spiral,
        ("snake", None) => OrderingStrategy::Snake,
        ("rndn", None) => OrderingStrategy::RandomNeighbour { seed: default_seed },
        ("rndn", Some(seed)) => OrderingStrategy::RandomNeighbour {
            seed: seed
                .parse()
                .map_err(|e| Error::Parse(format!("ordering seed {seed:?}: {e}")))?,
        },
        ("explicit", Some(path)) => {
            OrderingStrategy::Explicit(parse_order_list(&std::fs::read_to_string(path)?)?)
        }
        _ => return Err(Error::Parse(format!("unknown ordering {s:?}"))),
    })
}

pub fn parse_order_list(text: &str) -> Result<Vec<VarId>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|e| Error::Parse(format!("variable id {t:?}: {e}")))
        })
        .collect()
}
