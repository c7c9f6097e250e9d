//! Canonical JSON form of a [`Diagram`].
//!
//! ```json
//! {"canvas":{"w":20,"h":12},
//!  "nodes":[{"id":"n1","kind":"process","number":1,"x":2,"y":1},
//!           {"id":"s1","kind":"star","x":5,"y":5}],
//!  "edges":[{"id":"e1","from":"n1","to":"n1","shape":"curved","cp":[[3,0],[3,2]]}]}
//! ```
//!
//! Unknown fields are rejected and every document invariant is checked while
//! decoding, so a `Diagram` obtained from JSON is always valid. The same
//! format is used on the wire, on disk and by the web client.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diagram::{Canvas, Diagram, Edge, EdgeShape, ItemId, Node, NodeKind, NodeType, Point};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct DiagramDoc {
    canvas: CanvasDoc,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CanvasDoc {
    w: u32,
    h: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    kind: NodeType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    number: Option<u32>,
    x: i32,
    y: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeDoc {
    Straight,
    Curved,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    id: String,
    from: String,
    to: String,
    shape: ShapeDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cp: Option<Vec<[i32; 2]>>,
}

/// A structurally well-formed document that breaks a diagram invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    /// JSON path of the offending element, e.g. `nodes[3].number`.
    pub path: String,
    pub reason: String,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

fn violation(path: impl Into<String>, reason: impl Into<String>) -> InvariantViolation {
    InvariantViolation {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Failure to decode a diagram document, with the location serde reported.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} (line {line}, column {column})")]
pub struct DecodeError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl From<serde_json::Error> for DecodeError {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends " at line L column C" to its Display output
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(idx) => full[..idx].to_owned(),
            None => full,
        };
        Self {
            line: e.line(),
            column: e.column(),
            message,
        }
    }
}

impl TryFrom<DiagramDoc> for Diagram {
    type Error = InvariantViolation;

    fn try_from(doc: DiagramDoc) -> Result<Self, Self::Error> {
        let canvas = Canvas::new(doc.canvas.w, doc.canvas.h).map_err(|e| violation("canvas", e.to_string()))?;

        let mut seen_ids = HashSet::new();
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        let mut numbers = BTreeSet::new();
        for (i, n) in doc.nodes.into_iter().enumerate() {
            let at = |field: &str| format!("nodes[{i}].{field}");
            if n.id.is_empty() {
                return Err(violation(at("id"), "id must not be empty"));
            }
            if !seen_ids.insert(n.id.clone()) {
                return Err(violation(at("id"), format!("duplicate id `{}`", n.id)));
            }
            let position = Point::new(n.x, n.y);
            if !canvas.contains(position) {
                return Err(violation(
                    at("x"),
                    format!("position {position} is outside the {canvas} canvas"),
                ));
            }
            let kind = match (n.kind, n.number) {
                (NodeType::Process, Some(0)) => return Err(violation(at("number"), "numbers start at 1")),
                (NodeType::Process, Some(number)) => {
                    if !numbers.insert(number) {
                        return Err(violation(at("number"), format!("duplicate number {number}")));
                    }
                    NodeKind::Process { number }
                }
                (NodeType::Process, None) => return Err(violation(at("number"), "process nodes must carry a number")),
                (NodeType::Star, None) => NodeKind::Star,
                (NodeType::Star, Some(_)) => return Err(violation(at("number"), "star nodes carry no number")),
            };
            nodes.push(Node {
                id: ItemId::new(n.id),
                kind,
                position,
            });
        }
        if let Some(&max) = numbers.last() {
            if max as usize != numbers.len() {
                return Err(violation(
                    "nodes",
                    format!("process numbers must be exactly 1..{}, found a gap", numbers.len()),
                ));
            }
        }

        let process: HashMap<&str, u32> = nodes
            .iter()
            .filter_map(|n| n.number().map(|k| (n.id.as_str(), k)))
            .collect();
        let mut pairs = HashSet::new();
        let mut edges = Vec::with_capacity(doc.edges.len());
        for (i, e) in doc.edges.into_iter().enumerate() {
            let at = |field: &str| format!("edges[{i}].{field}");
            if e.id.is_empty() {
                return Err(violation(at("id"), "id must not be empty"));
            }
            if !seen_ids.insert(e.id.clone()) {
                return Err(violation(at("id"), format!("duplicate id `{}`", e.id)));
            }
            let endpoint = |field: &str, id: &str| -> Result<u32, InvariantViolation> {
                match process.get(id) {
                    Some(&k) => Ok(k),
                    None if seen_ids.contains(id) => Err(violation(at(field), format!("`{id}` is not a process node"))),
                    None => Err(violation(at(field), format!("unknown node `{id}`"))),
                }
            };
            let from = endpoint("from", &e.from)?;
            let to = endpoint("to", &e.to)?;
            if !pairs.insert((from, to)) {
                return Err(violation(at("to"), format!("duplicate edge {from}->{to}")));
            }
            let shape = match (e.shape, e.cp) {
                (ShapeDoc::Straight, None) => EdgeShape::Straight,
                (ShapeDoc::Straight, Some(_)) => {
                    return Err(violation(at("cp"), "straight edges carry no control points"))
                }
                (ShapeDoc::Curved, Some(cp)) if cp.len() == 2 => EdgeShape::Curved {
                    control_points: [Point::new(cp[0][0], cp[0][1]), Point::new(cp[1][0], cp[1][1])],
                },
                (ShapeDoc::Curved, Some(cp)) => {
                    return Err(violation(
                        at("cp"),
                        format!("curved edges need exactly 2 control points, got {}", cp.len()),
                    ))
                }
                (ShapeDoc::Curved, None) => {
                    return Err(violation(at("cp"), "curved edges need exactly 2 control points"))
                }
            };
            edges.push(Edge {
                id: ItemId::new(e.id),
                from: ItemId::new(e.from),
                to: ItemId::new(e.to),
                shape,
            });
        }

        Ok(Diagram::from_checked_parts(canvas, nodes, edges))
    }
}

impl From<&Diagram> for DiagramDoc {
    fn from(d: &Diagram) -> Self {
        DiagramDoc {
            canvas: CanvasDoc {
                w: d.canvas().w,
                h: d.canvas().h,
            },
            nodes: d
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    id: n.id.as_str().to_owned(),
                    kind: if n.is_star() { NodeType::Star } else { NodeType::Process },
                    number: n.number(),
                    x: n.position.x,
                    y: n.position.y,
                })
                .collect(),
            edges: d
                .edges()
                .iter()
                .map(|e| {
                    let (shape, cp) = match e.shape {
                        EdgeShape::Straight => (ShapeDoc::Straight, None),
                        EdgeShape::Curved { control_points: [a, b] } => {
                            (ShapeDoc::Curved, Some(vec![[a.x, a.y], [b.x, b.y]]))
                        }
                    };
                    EdgeDoc {
                        id: e.id.as_str().to_owned(),
                        from: e.from.as_str().to_owned(),
                        to: e.to.as_str().to_owned(),
                        shape,
                        cp,
                    }
                })
                .collect(),
        }
    }
}

impl Serialize for Diagram {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        DiagramDoc::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Diagram {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = DiagramDoc::deserialize(deserializer)?;
        Diagram::try_from(doc).map_err(serde::de::Error::custom)
    }
}

impl Diagram {
    /// Decodes a canonical diagram document.
    pub fn from_json(text: &str) -> Result<Self, DecodeError> {
        serde_json::from_str(text).map_err(DecodeError::from)
    }

    /// Encodes to the canonical compact JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("diagram documents always serialize")
    }
}
