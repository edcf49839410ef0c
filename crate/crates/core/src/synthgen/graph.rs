//! Workflow graphs: phases, successor probabilities, duration models.
//!
//! File format (TOML):
//!
//! ```toml
//! schema_version = 1
//! name = "linear-3"
//! start = "A"
//! terminal = ["C"]
//!
//! [[phase]]
//! name = "A"
//! duration = { uniform = [10, 10] }   # whole seconds, inclusive
//!
//! [[phase]]
//! name = "B"
//! duration = { geometric = 12.5 }     # mean seconds, support >= 1
//!
//! [[edge]]
//! from = "A"
//! to = "B"
//! p = 1.0
//! ```
//!
//! Outgoing probabilities of every non-terminal phase must sum to 1.
//! Terminal phases have no outgoing edges and end the procedure.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DurationModel {
    /// Inclusive bounds in seconds, drawn uniformly.
    Uniform([u32; 2]),
    /// Geometric on {1, 2, ...} with the given mean in seconds.
    Geometric(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowGraph {
    pub name: String,
    pub phases: Vec<String>,
    /// `successors[p]` lists `(next_phase, probability)`.
    pub successors: Vec<Vec<(usize, f64)>>,
    pub durations: Vec<DurationModel>,
    pub start: usize,
    pub terminal: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    schema_version: u32,
    name: String,
    start: String,
    terminal: Vec<String>,
    phase: Vec<PhaseEntry>,
    #[serde(default)]
    edge: Vec<EdgeEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseEntry {
    name: String,
    duration: DurationModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: String,
    to: String,
    p: f64,
}

impl WorkflowGraph {
    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn is_terminal(&self, phase: usize) -> bool {
        self.terminal.contains(&phase)
    }

    pub fn edge_probability(&self, from: usize, to: usize) -> f64 {
        self.successors[from]
            .iter()
            .find(|(t, _)| *t == to)
            .map_or(0.0, |(_, p)| *p)
    }

    /// All structural problems, empty when the graph is usable.
    pub fn violations(&self) -> Vec<String> {
        let n = self.phases.len();
        let mut v = vec![];
        if n < 2 {
            v.push("graph needs at least 2 phases".into());
            return v;
        }
        if self.successors.len() != n || self.durations.len() != n {
            v.push("successor and duration tables must have one entry per phase".into());
            return v;
        }
        if self.start >= n {
            v.push(format!("start phase {} out of range", self.start));
        }
        if self.terminal.is_empty() {
            v.push("no terminal phase".into());
        }
        for (p, succ) in self.successors.iter().enumerate() {
            let name = &self.phases[p];
            if self.is_terminal(p) {
                if !succ.is_empty() {
                    v.push(format!("terminal phase '{name}' has outgoing edges"));
                }
                continue;
            }
            if succ.is_empty() {
                v.push(format!("phase '{name}' has no successors and is not terminal"));
                continue;
            }
            let total: f64 = succ.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-9 {
                v.push(format!("outgoing probabilities of '{name}' sum to {total}"));
            }
            for &(to, prob) in succ {
                if to >= n {
                    v.push(format!("edge from '{name}' to unknown phase {to}"));
                } else if to == p {
                    v.push(format!("self-loop on '{name}'"));
                }
                if !(prob > 0.0 && prob <= 1.0) {
                    v.push(format!("edge probability {prob} from '{name}' outside (0, 1]"));
                }
            }
        }
        for (p, d) in self.durations.iter().enumerate() {
            let ok = match *d {
                DurationModel::Uniform([lo, hi]) => lo >= 1 && lo <= hi,
                DurationModel::Geometric(mean) => mean >= 1.0 && mean.is_finite(),
            };
            if !ok {
                v.push(format!("phase '{}' has an invalid duration model {d:?}", self.phases[p]));
            }
        }
        if v.is_empty() {
            // Every phase must reach a terminal phase.
            let mut reach = vec![false; n];
            let mut queue: VecDeque<usize> = self.terminal.iter().copied().collect();
            for &t in &self.terminal {
                reach[t] = true;
            }
            while let Some(t) = queue.pop_front() {
                for (p, succ) in self.successors.iter().enumerate() {
                    if !reach[p] && succ.iter().any(|(to, _)| *to == t) {
                        reach[p] = true;
                        queue.push_back(p);
                    }
                }
            }
            for (p, r) in reach.iter().enumerate() {
                if !r {
                    v.push(format!("phase '{}' cannot reach a terminal phase", self.phases[p]));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: GraphFile =
            toml::from_str(text).map_err(|e| Error::Invalid(format!("graph file: {e}")))?;
        if file.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "graph file: unsupported schema_version {}",
                file.schema_version
            )));
        }
        let phases: Vec<String> = file.phase.iter().map(|p| p.name.clone()).collect();
        let lookup = |name: &str| -> Result<usize> {
            phases.iter().position(|p| p == name).ok_or_else(|| {
                Error::Invalid(format!(
                    "graph file: unknown phase '{name}' (known: {})",
                    phases.join(", ")
                ))
            })
        };
        let mut successors = vec![vec![]; phases.len()];
        for e in &file.edge {
            successors[lookup(&e.from)?].push((lookup(&e.to)?, e.p));
        }
        let graph = WorkflowGraph {
            name: file.name,
            start: lookup(&file.start)?,
            terminal: file
                .terminal
                .iter()
                .map(|t| lookup(t))
                .collect::<Result<_>>()?,
            durations: file.phase.iter().map(|p| p.duration).collect(),
            phases,
            successors,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn to_toml(&self) -> String {
        let file = GraphFile {
            schema_version: GRAPH_SCHEMA_VERSION,
            name: self.name.clone(),
            start: self.phases[self.start].clone(),
            terminal: self.terminal.iter().map(|&t| self.phases[t].clone()).collect(),
            phase: self
                .phases
                .iter()
                .zip(&self.durations)
                .map(|(name, d)| PhaseEntry {
                    name: name.clone(),
                    duration: *d,
                })
                .collect(),
            edge: self
                .successors
                .iter()
                .enumerate()
                .flat_map(|(from, succ)| {
                    succ.iter().map(move |&(to, p)| (from, to, p))
                })
                .map(|(from, to, p)| EdgeEntry {
                    from: self.phases[from].clone(),
                    to: self.phases[to].clone(),
                    p,
                })
                .collect(),
        };
        toml::to_string(&file).expect("graph serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Built-in graph by name: `cholec7` or `mgh12`.
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "cholec7" => Some(cholec7()),
            "mgh12" => Some(mgh12()),
            _ => None,
        }
    }

    /// Straight chain of phases with fixed durations.
    pub fn linear(durations: &[u32]) -> Self {
        let n = durations.len();
        WorkflowGraph {
            name: format!("linear-{n}"),
            phases: (0..n).map(|i| format!("phase {i}")).collect(),
            successors: (0..n)
                .map(|i| if i + 1 < n { vec![(i + 1, 1.0)] } else { vec![] })
                .collect(),
            durations: durations
                .iter()
                .map(|&d| DurationModel::Uniform([d, d]))
                .collect(),
            start: 0,
            terminal: vec![n - 1],
        }
    }
}

fn build(
    name: &str,
    phases: &[(&str, [u32; 2])],
    edges: &[(usize, usize, f64)],
    terminal: &[usize],
) -> WorkflowGraph {
    let mut successors = vec![vec![]; phases.len()];
    for &(from, to, p) in edges {
        successors[from].push((to, p));
    }
    WorkflowGraph {
        name: name.into(),
        phases: phases.iter().map(|(n, _)| n.to_string()).collect(),
        durations: phases
            .iter()
            .map(|(_, d)| DurationModel::Uniform(*d))
            .collect(),
        successors,
        start: 0,
        terminal: terminal.to_vec(),
    }
}

/// Seven-phase cholecystectomy-like workflow, mostly linear with a
/// back-transition after clipping and interchangeable packaging/cleaning.
/// Probabilities and durations are synthetic.
pub fn cholec7() -> WorkflowGraph {
    build(
        "cholec7",
        &[
            ("Preparation", [15, 40]),
            ("Calot Triangle Dissection", [40, 90]),
            ("Clipping and Cutting", [20, 50]),
            ("Gallbladder Dissection", [40, 90]),
            ("Gallbladder Packaging", [15, 35]),
            ("Cleaning and Coagulation", [20, 50]),
            ("Gallbladder Retraction", [15, 30]),
        ],
        &[
            (0, 1, 1.0),
            (1, 2, 1.0),
            (2, 3, 0.9),
            (2, 1, 0.1),
            (3, 4, 0.6),
            (3, 5, 0.4),
            (4, 5, 0.5),
            (4, 6, 0.5),
            (5, 6, 0.6),
            (5, 4, 0.4),
        ],
        &[6],
    )
}

/// Twelve-phase workflow in three blocks. Block 2 (clipping and dividing the
/// cystic artery and duct) can be traversed in several orders and may fall
/// back to Calot's triangle dissection. Probabilities and durations are
/// synthetic.
pub fn mgh12() -> WorkflowGraph {
    build(
        "mgh12",
        &[
            ("Port placement", [10, 25]),
            ("Fundus retraction", [10, 30]),
            ("Release GB peritoneum", [20, 60]),
            ("Dissection of Calot's triangle", [40, 100]),
            ("Checkpoint 1", [8, 20]),
            ("Clip Cystic Artery", [10, 30]),
            ("Clip Cystic Duct", [10, 30]),
            ("Divide Cystic Artery", [8, 20]),
            ("Divide Cystic Duct", [8, 20]),
            ("Checkpoint 2", [8, 20]),
            ("Remove GB from liver bed", [40, 100]),
            ("Bagging", [15, 40]),
        ],
        &[
            (0, 1, 1.0),
            (1, 2, 0.8),
            (1, 3, 0.2),
            (2, 3, 1.0),
            (3, 4, 0.7),
            (3, 2, 0.15),
            (3, 5, 0.15),
            (4, 5, 0.45),
            (4, 6, 0.45),
            (4, 3, 0.1),
            (5, 6, 0.5),
            (5, 7, 0.4),
            (5, 3, 0.1),
            (6, 5, 0.4),
            (6, 8, 0.5),
            (6, 3, 0.1),
            (7, 6, 0.5),
            (7, 8, 0.3),
            (7, 9, 0.2),
            (8, 7, 0.4),
            (8, 5, 0.2),
            (8, 9, 0.4),
            (9, 10, 0.9),
            (9, 3, 0.1),
            (10, 11, 1.0),
        ],
        &[11],
    )
}
