//! Cyclomatic complexity and related counts.

use serde::{Deserialize, Serialize};

use crate::diagram::Diagram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMetrics {
    /// Process nodes.
    pub n: usize,
    /// Edges.
    pub e: usize,
    /// `e - n + 2`, or `None` when the diagram has no process node.
    pub cc_structural: Option<i64>,
    /// Number of star nodes the author placed to mark regions.
    pub cc_declared: usize,
    /// Weak connectivity over process nodes. Always false for `n = 0`.
    pub connected: bool,
}

/// McCabe's formula for a single connected flow graph.
pub fn cyclomatic_complexity(edges: usize, nodes: usize) -> i64 {
    edges as i64 - nodes as i64 + 2
}

impl Diagram {
    pub fn metrics(&self) -> GraphMetrics {
        let n = self.process_count();
        let e = self.edges().len();
        GraphMetrics {
            n,
            e,
            cc_structural: (n > 0).then(|| cyclomatic_complexity(e, n)),
            cc_declared: self.star_count(),
            connected: n > 0 && weakly_connected(n, &self.numbered_edges()),
        }
    }
}

/// Union-find over node numbers `1..=n`.
fn weakly_connected(n: usize, edges: &[(u32, u32)]) -> bool {
    let mut parent: Vec<usize> = (0..=n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = n;
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a as usize), find(&mut parent, b as usize));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    components == 1
}
