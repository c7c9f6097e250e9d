//! Ready-made flow graphs used by the simulator, demos and tests.

use crate::diagram::{Canvas, Diagram, EdgeShape, NodeType, Point};
use crate::path::NodePath;

pub struct SampleGame {
    pub diagram: Diagram,
    /// A basis path set in baseline-method order.
    pub basis: Vec<NodePath>,
}

fn path(s: &str) -> NodePath {
    s.parse().expect("sample paths are well formed")
}

/// A `while` loop whose body holds an `if/else`:
///
/// ```text
/// 1 -> 2 -> 3 -> {4 | 5} -> 6 -> 8 -> 2 (back edge)
///      2 -> 7 (loop exit)
/// ```
///
/// Eight nodes, nine edges, CC 3, three region stars. Contains the edge
/// `8 -> 2` but not `2 -> 8`.
pub fn loop_with_branch() -> SampleGame {
    let mut d = Diagram::new(Canvas::new(20, 16).expect("positive canvas"));
    let positions = [(6, 1), (6, 3), (6, 5), (4, 7), (8, 7), (6, 9), (12, 3), (6, 11)];
    for (x, y) in positions {
        d.insert_node(NodeType::Process, Point::new(x, y)).expect("on canvas");
    }
    for (x, y) in [(6, 7), (2, 8), (16, 14)] {
        d.insert_node(NodeType::Star, Point::new(x, y)).expect("on canvas");
    }
    let straight = [(1, 2), (2, 3), (3, 4), (3, 5), (4, 6), (5, 6), (6, 8), (2, 7)];
    for (a, b) in straight {
        d.connect(a, b, EdgeShape::Straight).expect("fresh edge");
    }
    let back = EdgeShape::Curved {
        control_points: [Point::new(1, 12), Point::new(1, 2)],
    };
    d.connect(8, 2, back).expect("fresh edge");

    SampleGame {
        diagram: d,
        basis: vec![path("1-2-7"), path("1-2-3-4-6-8-2-7"), path("1-2-3-5-6-8-2-7")],
    }
}

/// Four paths a student might submit for [`loop_with_branch`], none of which
/// is valid; the first walks `2 -> 8` against the direction of the back edge.
pub fn mistaken_paths() -> Vec<NodePath> {
    ["1-2-8", "1-2-3-4-6-7", "1-2-3-5-6-7", "1-2-3-4-6-8-7"]
        .into_iter()
        .map(path)
        .collect()
}

/// `1 -> {2 | 3} -> 4`, CC 2.
pub fn diamond() -> SampleGame {
    let mut d = Diagram::new(Canvas::new(10, 10).expect("positive canvas"));
    for (x, y) in [(5, 1), (3, 4), (7, 4), (5, 7)] {
        d.insert_node(NodeType::Process, Point::new(x, y)).expect("on canvas");
    }
    d.insert_node(NodeType::Star, Point::new(5, 4)).expect("on canvas");
    d.insert_node(NodeType::Star, Point::new(9, 9)).expect("on canvas");
    for (a, b) in [(1, 2), (1, 3), (2, 4), (3, 4)] {
        d.connect(a, b, EdgeShape::Straight).expect("fresh edge");
    }
    SampleGame {
        diagram: d,
        basis: vec![path("1-2-4"), path("1-3-4")],
    }
}
