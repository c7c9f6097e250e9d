//! The diagram document model.
//!
//! A [`Diagram`] is what a student draws on the grid canvas: numbered process
//! nodes, unnumbered star nodes marking regions, and directed edges between
//! process nodes. All mutation goes through methods that keep the document
//! invariants intact:
//!
//! * process-node numbers are exactly `1..=n`, no gaps and no duplicates;
//! * star nodes carry no number and never take part in edges;
//! * every edge references existing process nodes;
//! * no two edges share the same ordered `(from, to)` pair.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a node or an edge. Node and edge ids share one namespace so
/// that [`Diagram::delete_item`] is unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// A grid coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Canvas extent in grid units. Valid positions are `0..=w` by `0..=h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Canvas {
    pub w: u32,
    pub h: u32,
}

impl Canvas {
    pub fn new(w: u32, h: u32) -> Result<Self, DiagramError> {
        if w == 0 || h == 0 {
            return Err(DiagramError::InvalidCanvas { w, h });
        }
        Ok(Self { w, h })
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as i64) <= self.w as i64 && (p.y as i64) <= self.h as i64
    }
}

impl fmt::Display for Canvas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Process { number: u32 },
    Star,
}

/// Kind requested when inserting; the number is always assigned by the diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Process,
    Star,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: ItemId,
    pub kind: NodeKind,
    pub position: Point,
}

impl Node {
    pub fn number(&self) -> Option<u32> {
        match self.kind {
            NodeKind::Process { number } => Some(number),
            NodeKind::Star => None,
        }
    }

    pub fn is_star(&self) -> bool {
        matches!(self.kind, NodeKind::Star)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeShape {
    Straight,
    /// Curved line with exactly two curvature control points.
    Curved {
        control_points: [Point; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: ItemId,
    pub from: ItemId,
    pub to: ItemId,
    pub shape: EdgeShape,
}

/// Result of [`Diagram::insert_node`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inserted {
    pub id: ItemId,
    /// Assigned number, `None` for star nodes.
    pub number: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiagramError {
    #[error("canvas extent {w}x{h} must be positive in both dimensions")]
    InvalidCanvas { w: u32, h: u32 },
    #[error("position {position} is outside the {canvas} canvas")]
    OutOfBounds { position: Point, canvas: Canvas },
    #[error("no item with id `{0}`")]
    NotFound(ItemId),
    #[error("`{0}` is not a process node; edges connect process nodes only")]
    NotProcessNode(ItemId),
    #[error("an edge from node {from} to node {to} already exists")]
    DuplicateEdge { from: u32, to: u32 },
}

/// Smallest positive integer not present in `used`.
pub fn smallest_free_number(used: impl IntoIterator<Item = u32>) -> u32 {
    let taken: HashSet<u32> = used.into_iter().collect();
    (1..).find(|k| !taken.contains(k)).expect("u32 range exhausted")
}

#[derive(Debug, Clone)]
pub struct Diagram {
    canvas: Canvas,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    next_id: u64,
}

// Equality is structural; the id generator counter is not part of the document.
impl PartialEq for Diagram {
    fn eq(&self, other: &Self) -> bool {
        self.canvas == other.canvas && self.nodes == other.nodes && self.edges == other.edges
    }
}

impl Eq for Diagram {}

impl Diagram {
    pub fn new(canvas: Canvas) -> Self {
        Self {
            canvas,
            nodes: Vec::new(),
            edges: Vec::new(),
            next_id: 1,
        }
    }

    /// Builds a diagram from parts that were already checked against every
    /// invariant (see `document`).
    pub(crate) fn from_checked_parts(canvas: Canvas, nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let next_id = (nodes.len() + edges.len()) as u64 + 1;
        Self {
            canvas,
            nodes,
            edges,
            next_id,
        }
    }

    pub fn canvas(&self) -> Canvas {
        self.canvas
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }

    pub fn node(&self, id: &ItemId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn edge(&self, id: &ItemId) -> Option<&Edge> {
        self.edges.iter().find(|e| &e.id == id)
    }

    pub fn process_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| !n.is_star())
    }

    pub fn process_count(&self) -> usize {
        self.process_nodes().count()
    }

    pub fn star_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_star()).count()
    }

    /// Id of the process node carrying `number`.
    pub fn node_by_number(&self, number: u32) -> Option<&Node> {
        self.nodes.iter().find(|n| n.number() == Some(number))
    }

    pub fn number_of(&self, id: &ItemId) -> Option<u32> {
        self.node(id).and_then(Node::number)
    }

    /// Directed edges as `(from_number, to_number)` pairs, in document order.
    pub fn numbered_edges(&self) -> Vec<(u32, u32)> {
        self.edges
            .iter()
            .map(|e| {
                let from = self.number_of(&e.from).expect("edge endpoints are process nodes");
                let to = self.number_of(&e.to).expect("edge endpoints are process nodes");
                (from, to)
            })
            .collect()
    }

    pub fn has_edge_between(&self, from: u32, to: u32) -> bool {
        self.numbered_edges().contains(&(from, to))
    }

    fn contains_id(&self, id: &ItemId) -> bool {
        self.nodes.iter().any(|n| &n.id == id) || self.edges.iter().any(|e| &e.id == id)
    }

    fn fresh_id(&mut self, prefix: char) -> ItemId {
        loop {
            let id = ItemId(format!("{prefix}{}", self.next_id));
            self.next_id += 1;
            if !self.contains_id(&id) {
                return id;
            }
        }
    }

    /// Inserts a node at `position`. Process nodes take the smallest free
    /// number; star nodes are unnumbered.
    pub fn insert_node(&mut self, kind: NodeType, position: Point) -> Result<Inserted, DiagramError> {
        if !self.canvas.contains(position) {
            return Err(DiagramError::OutOfBounds {
                position,
                canvas: self.canvas,
            });
        }
        let (kind, number, prefix) = match kind {
            NodeType::Process => {
                let number = smallest_free_number(self.nodes.iter().filter_map(Node::number));
                (NodeKind::Process { number }, Some(number), 'n')
            }
            NodeType::Star => (NodeKind::Star, None, 's'),
        };
        let id = self.fresh_id(prefix);
        self.nodes.push(Node {
            id: id.clone(),
            kind,
            position,
        });
        Ok(Inserted { id, number })
    }

    /// Deletes a node or an edge.
    ///
    /// Deleting a process node removes its incident edges and compacts the
    /// numbering: nodes numbered above the removed one move down by one, so
    /// numbers stay `1..=n` and relative order is preserved.
    pub fn delete_item(&mut self, id: &ItemId) -> Result<(), DiagramError> {
        if let Some(pos) = self.edges.iter().position(|e| &e.id == id) {
            self.edges.remove(pos);
            return Ok(());
        }
        let pos = self
            .nodes
            .iter()
            .position(|n| &n.id == id)
            .ok_or_else(|| DiagramError::NotFound(id.clone()))?;
        let removed = self.nodes.remove(pos);
        if let NodeKind::Process { number: removed } = removed.kind {
            self.edges.retain(|e| &e.from != id && &e.to != id);
            for node in &mut self.nodes {
                if let NodeKind::Process { number } = &mut node.kind {
                    if *number > removed {
                        *number -= 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Clears the canvas. The canvas extent is kept.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.edges.clear();
        self.next_id = 1;
    }

    /// Moves a node. Numbers and edges are unaffected.
    pub fn move_node(&mut self, id: &ItemId, position: Point) -> Result<(), DiagramError> {
        if !self.canvas.contains(position) {
            return Err(DiagramError::OutOfBounds {
                position,
                canvas: self.canvas,
            });
        }
        let node = self
            .nodes
            .iter_mut()
            .find(|n| &n.id == id)
            .ok_or_else(|| DiagramError::NotFound(id.clone()))?;
        node.position = position;
        Ok(())
    }

    /// Adds a directed edge between two process nodes. Self-loops are allowed,
    /// a second edge with the same `(from, to)` pair is not.
    pub fn add_edge(&mut self, from: &ItemId, to: &ItemId, shape: EdgeShape) -> Result<ItemId, DiagramError> {
        let from_number = self.process_number(from)?;
        let to_number = self.process_number(to)?;
        if self.edges.iter().any(|e| &e.from == from && &e.to == to) {
            return Err(DiagramError::DuplicateEdge {
                from: from_number,
                to: to_number,
            });
        }
        let id = self.fresh_id('e');
        self.edges.push(Edge {
            id: id.clone(),
            from: from.clone(),
            to: to.clone(),
            shape,
        });
        Ok(id)
    }

    /// Convenience wrapper over [`Diagram::add_edge`] addressing nodes by number.
    pub fn connect(&mut self, from: u32, to: u32, shape: EdgeShape) -> Result<ItemId, DiagramError> {
        let lookup = |d: &Self, k: u32| {
            d.node_by_number(k)
                .map(|n| n.id.clone())
                .ok_or_else(|| DiagramError::NotFound(ItemId(format!("#{k}"))))
        };
        let from = lookup(self, from)?;
        let to = lookup(self, to)?;
        self.add_edge(&from, &to, shape)
    }

    fn process_number(&self, id: &ItemId) -> Result<u32, DiagramError> {
        let node = self.node(id).ok_or_else(|| DiagramError::NotFound(id.clone()))?;
        node.number().ok_or_else(|| DiagramError::NotProcessNode(id.clone()))
    }
}
