//! Node paths and edge-wise path validation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::Diagram;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("a path needs at least 2 node numbers, got {0}")]
    TooShort(usize),
    #[error("`{0}` is not a node number")]
    BadNumber(String),
}

/// A sequence of process-node numbers, at least two long. Revisiting nodes is
/// allowed (loops).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct NodePath(Vec<u32>);

impl NodePath {
    pub fn new(numbers: Vec<u32>) -> Result<Self, PathError> {
        if numbers.len() < 2 {
            return Err(PathError::TooShort(numbers.len()));
        }
        Ok(Self(numbers))
    }

    pub fn numbers(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Consecutive `(from, to)` pairs.
    pub fn steps(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

impl TryFrom<Vec<u32>> for NodePath {
    type Error = PathError;

    fn try_from(v: Vec<u32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<NodePath> for Vec<u32> {
    fn from(p: NodePath) -> Self {
        p.0
    }
}

/// Renders as `1-2-3-2-3-2-3-4`.
impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for NodePath {
    type Err = PathError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let numbers = s
            .split('-')
            .map(|part| {
                let part = part.trim();
                part.parse::<u32>().map_err(|_| PathError::BadNumber(part.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(numbers)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFailure {
    /// No directed edge for this consecutive pair.
    MissingEdge { from: u32, to: u32 },
    /// Number outside `1..=n`.
    UnknownNode { number: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PathVerdict {
    Valid,
    Invalid {
        /// Index of the first offending entry. For a missing edge this is the
        /// index of the pair's first element.
        position: usize,
        failure: PathFailure,
    },
}

impl PathVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, PathVerdict::Valid)
    }

    pub fn missing_pair(&self) -> Option<(u32, u32)> {
        match self {
            PathVerdict::Invalid {
                failure: PathFailure::MissingEdge { from, to },
                ..
            } => Some((*from, *to)),
            _ => None,
        }
    }
}

/// Successor lists of a diagram keyed by node number, for validating many
/// paths against the same diagram.
#[derive(Debug, Clone)]
pub struct PathIndex {
    /// `successors[k]` lists the sorted targets of node `k`; index 0 unused.
    successors: Vec<Vec<u32>>,
}

impl PathIndex {
    pub fn new(diagram: &Diagram) -> Self {
        let n = diagram.process_count();
        let mut successors = vec![Vec::new(); n + 1];
        for (from, to) in diagram.numbered_edges() {
            successors[from as usize].push(to);
        }
        for s in &mut successors {
            s.sort_unstable();
        }
        Self { successors }
    }

    pub fn node_count(&self) -> usize {
        self.successors.len() - 1
    }

    fn known(&self, k: u32) -> bool {
        k >= 1 && (k as usize) < self.successors.len()
    }

    pub fn has_edge(&self, from: u32, to: u32) -> bool {
        self.known(from) && self.successors[from as usize].binary_search(&to).is_ok()
    }

    /// Scans consecutive pairs in order and reports the first problem found.
    pub fn check(&self, numbers: &[u32]) -> Result<PathVerdict, PathError> {
        if numbers.len() < 2 {
            return Err(PathError::TooShort(numbers.len()));
        }
        for (i, pair) in numbers.windows(2).enumerate() {
            let (from, to) = (pair[0], pair[1]);
            if !self.known(from) {
                return Ok(invalid(i, PathFailure::UnknownNode { number: from }));
            }
            if !self.known(to) {
                return Ok(invalid(i + 1, PathFailure::UnknownNode { number: to }));
            }
            if self.successors[from as usize].binary_search(&to).is_err() {
                return Ok(invalid(i, PathFailure::MissingEdge { from, to }));
            }
        }
        Ok(PathVerdict::Valid)
    }

    pub fn validate(&self, path: &NodePath) -> PathVerdict {
        self.check(path.numbers()).expect("NodePath has at least two entries")
    }
}

fn invalid(position: usize, failure: PathFailure) -> PathVerdict {
    PathVerdict::Invalid { position, failure }
}

impl Diagram {
    /// Checks that every consecutive pair of `path` is a directed edge.
    pub fn validate_path(&self, path: &NodePath) -> PathVerdict {
        PathIndex::new(self).validate(path)
    }
}
