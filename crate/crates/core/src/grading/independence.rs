//! Path independence in the baseline-method sense: a path counts as
//! independent when it traverses at least one directed edge that no earlier
//! path in the list traversed. The result depends on listing order.

use std::collections::HashSet;

use thiserror::Error;

use crate::diagram::Diagram;
use crate::path::{NodePath, PathIndex, PathVerdict};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndependenceError {
    #[error("path #{index} ({path}) is not valid on the diagram; validate paths first")]
    InvalidPath {
        index: usize,
        path: String,
        verdict: PathVerdict,
    },
}

/// One flag per path: does it introduce an edge unused by its predecessors?
pub fn independence_flags(paths: &[NodePath], diagram: &Diagram) -> Result<Vec<bool>, IndependenceError> {
    let index = PathIndex::new(diagram);
    for (i, p) in paths.iter().enumerate() {
        let verdict = index.validate(p);
        if !verdict.is_valid() {
            return Err(IndependenceError::InvalidPath {
                index: i,
                path: p.to_string(),
                verdict,
            });
        }
    }
    Ok(new_edge_flags(paths.iter().map(Some)))
}

/// Flags for a mix of valid (`Some`) and skipped (`None`) paths. Skipped
/// entries get `false` and contribute no edges.
pub(crate) fn new_edge_flags<'a>(paths: impl Iterator<Item = Option<&'a NodePath>>) -> Vec<bool> {
    let mut covered: HashSet<(u32, u32)> = HashSet::new();
    paths
        .map(|p| match p {
            // every step must be inserted, so no short-circuiting `any`
            #[allow(clippy::unnecessary_fold)]
            Some(p) => p.steps().fold(false, |fresh, step| covered.insert(step) || fresh),
            None => false,
        })
        .collect()
}
