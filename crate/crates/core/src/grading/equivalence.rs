//! Structural comparison of two diagrams over their process nodes.

use serde::{Deserialize, Serialize};

use crate::diagram::Diagram;

/// Largest process-node count for which the isomorphism search runs.
pub const MAX_ISOMORPHISM_NODES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsomorphismCheck {
    Isomorphic,
    NotIsomorphic,
    /// More than [`MAX_ISOMORPHISM_NODES`] process nodes.
    SkippedTooLarge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Equivalence {
    /// Same node count and identical directed edge sets over node numbers.
    pub label_exact: bool,
    pub isomorphic: IsomorphismCheck,
}

impl Equivalence {
    pub fn is_isomorphic(&self) -> Option<bool> {
        match self.isomorphic {
            IsomorphismCheck::Isomorphic => Some(true),
            IsomorphismCheck::NotIsomorphic => Some(false),
            IsomorphismCheck::SkippedTooLarge => None,
        }
    }
}

/// Compares the process-node graphs of `a` and `b`. Star nodes and geometry
/// are ignored.
pub fn graphs_equivalent(a: &Diagram, b: &Diagram) -> Equivalence {
    let (na, nb) = (a.process_count(), b.process_count());
    let mut ea = a.numbered_edges();
    let mut eb = b.numbered_edges();
    ea.sort_unstable();
    eb.sort_unstable();
    let label_exact = na == nb && ea == eb;
    let isomorphic = if label_exact {
        IsomorphismCheck::Isomorphic
    } else if na != nb || ea.len() != eb.len() {
        IsomorphismCheck::NotIsomorphic
    } else if na > MAX_ISOMORPHISM_NODES {
        IsomorphismCheck::SkippedTooLarge
    } else if find_isomorphism(&Adjacency::new(na, &ea), &Adjacency::new(nb, &eb)).is_some() {
        IsomorphismCheck::Isomorphic
    } else {
        IsomorphismCheck::NotIsomorphic
    };
    Equivalence {
        label_exact,
        isomorphic,
    }
}

/// Bit-row adjacency over zero-based node indices (node number - 1).
#[derive(Debug, Clone)]
struct Adjacency {
    n: usize,
    out: Vec<u16>,
    inc: Vec<u16>,
}

impl Adjacency {
    fn new(n: usize, edges: &[(u32, u32)]) -> Self {
        debug_assert!(n <= 16);
        let mut out = vec![0u16; n];
        let mut inc = vec![0u16; n];
        for &(from, to) in edges {
            let (f, t) = (from as usize - 1, to as usize - 1);
            out[f] |= 1 << t;
            inc[t] |= 1 << f;
        }
        Self { n, out, inc }
    }

    fn has(&self, from: usize, to: usize) -> bool {
        self.out[from] >> to & 1 == 1
    }

    fn signature(&self, v: usize) -> (u32, u32, bool) {
        (self.out[v].count_ones(), self.inc[v].count_ones(), self.has(v, v))
    }
}

/// Backtracking search for a bijection `map` with `a.has(i, j) == b.has(map[i], map[j])`.
/// Candidates are pruned by (out-degree, in-degree, self-loop) and by
/// consistency with every node mapped so far.
fn find_isomorphism(a: &Adjacency, b: &Adjacency) -> Option<Vec<usize>> {
    let n = a.n;
    let sig_a: Vec<_> = (0..n).map(|v| a.signature(v)).collect();
    let sig_b: Vec<_> = (0..n).map(|v| b.signature(v)).collect();
    let mut sorted_a = sig_a.clone();
    let mut sorted_b = sig_b.clone();
    sorted_a.sort_unstable();
    sorted_b.sort_unstable();
    if sorted_a != sorted_b {
        return None;
    }

    // Map most-constrained nodes first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(sig_a[v].0 + sig_a[v].1));

    let mut search = Search {
        order,
        a,
        b,
        sig_a,
        sig_b,
        map: vec![usize::MAX; n],
        used: vec![false; n],
    };
    search.extend(0).then_some(search.map)
}

struct Search<'g> {
    order: Vec<usize>,
    a: &'g Adjacency,
    b: &'g Adjacency,
    sig_a: Vec<(u32, u32, bool)>,
    sig_b: Vec<(u32, u32, bool)>,
    map: Vec<usize>,
    used: Vec<bool>,
}

impl Search<'_> {
    fn extend(&mut self, depth: usize) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let v = self.order[depth];
        for w in 0..self.b.n {
            if self.used[w] || self.sig_a[v] != self.sig_b[w] {
                continue;
            }
            let consistent = self.order[..depth].iter().all(|&u| {
                let mu = self.map[u];
                self.a.has(v, u) == self.b.has(w, mu) && self.a.has(u, v) == self.b.has(mu, w)
            });
            if !consistent {
                continue;
            }
            self.map[v] = w;
            self.used[w] = true;
            if self.extend(depth + 1) {
                return true;
            }
            self.used[w] = false;
        }
        self.map[v] = usize::MAX;
        false
    }
}
