//! Answer analysis.
//!
//! [`analyze_answer`] turns a submitted diagram and path list into an
//! [`AnalysisReport`] by applying the checks a professor does by eye:
//!
//! * does the structural CC (`e - n + 2`) match the number of region stars;
//! * does the diagram match the reference (exact labels, or up to renumbering);
//! * is every path a walk along directed edges;
//! * does every path add an edge not covered by the paths before it;
//! * how does the path count compare with the reference CC.
//!
//! Reports are pure functions of their inputs and serialize deterministically.

mod equivalence;
mod independence;

pub use equivalence::{graphs_equivalent, Equivalence, IsomorphismCheck, MAX_ISOMORPHISM_NODES};
pub use independence::{independence_flags, IndependenceError};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::Diagram;
use crate::document::DecodeError;
use crate::metrics::GraphMetrics;
use crate::path::{NodePath, PathFailure, PathIndex, PathVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMatch {
    LabelExactMatch,
    IsomorphicMatch,
    Mismatch,
    ReferenceAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathCountCheck {
    EqualsCc,
    BelowCc,
    ExceedsCc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramVerdict {
    Correct,
    Suspect,
    Incorrect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathsVerdict {
    Correct,
    Incorrect,
}

/// Which diagram the paths were walked on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathContext {
    Reference,
    Submitted,
}

/// How `introduces_new_edge` is decided. Recorded in every report because
/// the outcome depends on listing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndependenceRule {
    /// A path is independent when it covers an edge no earlier path covered.
    OrderedNewEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathReport {
    pub path: NodePath,
    pub verdict: Validity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_pair: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unknown_node: Option<u32>,
    pub introduces_new_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metrics: GraphMetrics,
    /// `cc_structural == cc_declared`.
    pub cc_consistent: bool,
    pub structure: StructureMatch,
    pub paths_checked_on: PathContext,
    pub independence_rule: IndependenceRule,
    pub path_reports: Vec<PathReport>,
    pub reference_cc: u32,
    pub path_count_check: PathCountCheck,
    pub overall_diagram: DiagramVerdict,
    pub overall_paths: PathsVerdict,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reports always serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradingError {
    #[error("submitted diagram does not decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("reference CC must be at least 1, got {0}")]
    ReferenceCc(u32),
}

/// Grades one answer.
///
/// Paths are walked on `reference` when given (students enumerate paths on
/// the revealed correct diagram), otherwise on `submitted`.
pub fn analyze_answer(
    submitted: &Diagram,
    paths: &[NodePath],
    reference: Option<&Diagram>,
    reference_cc: u32,
) -> Result<AnalysisReport, GradingError> {
    if reference_cc == 0 {
        return Err(GradingError::ReferenceCc(reference_cc));
    }
    let metrics = submitted.metrics();
    let cc_consistent = metrics.cc_structural == Some(metrics.cc_declared as i64);

    let structure = match reference {
        None => StructureMatch::ReferenceAbsent,
        Some(r) => {
            let eq = graphs_equivalent(submitted, r);
            if eq.label_exact {
                StructureMatch::LabelExactMatch
            } else if eq.is_isomorphic() == Some(true) {
                StructureMatch::IsomorphicMatch
            } else {
                // too large to search counts as a mismatch; the professor looks
                StructureMatch::Mismatch
            }
        }
    };

    let (walk_on, paths_checked_on) = match reference {
        Some(r) => (r, PathContext::Reference),
        None => (submitted, PathContext::Submitted),
    };
    let index = PathIndex::new(walk_on);
    let verdicts: Vec<PathVerdict> = paths.iter().map(|p| index.validate(p)).collect();
    let fresh = independence::new_edge_flags(paths.iter().zip(&verdicts).map(|(p, v)| v.is_valid().then_some(p)));
    let path_reports: Vec<PathReport> = paths
        .iter()
        .zip(&verdicts)
        .zip(fresh)
        .map(|((path, verdict), introduces_new_edge)| path_report(path, verdict, introduces_new_edge))
        .collect();

    let path_count_check = match paths.len().cmp(&(reference_cc as usize)) {
        std::cmp::Ordering::Less => PathCountCheck::BelowCc,
        std::cmp::Ordering::Equal => PathCountCheck::EqualsCc,
        std::cmp::Ordering::Greater => PathCountCheck::ExceedsCc,
    };

    let structure_ok = matches!(
        structure,
        StructureMatch::LabelExactMatch | StructureMatch::IsomorphicMatch | StructureMatch::ReferenceAbsent
    );
    let overall_diagram = match (cc_consistent && metrics.connected, structure_ok) {
        (true, true) => DiagramVerdict::Correct,
        (true, false) => DiagramVerdict::Suspect,
        (false, _) => DiagramVerdict::Incorrect,
    };

    let all_valid = path_reports.iter().all(|r| r.verdict == Validity::Valid);
    let all_fresh = path_reports.iter().all(|r| r.introduces_new_edge);
    let overall_paths = if all_valid && all_fresh && path_count_check == PathCountCheck::EqualsCc {
        PathsVerdict::Correct
    } else {
        PathsVerdict::Incorrect
    };

    Ok(AnalysisReport {
        metrics,
        cc_consistent,
        structure,
        paths_checked_on,
        independence_rule: IndependenceRule::OrderedNewEdge,
        path_reports,
        reference_cc,
        path_count_check,
        overall_diagram,
        overall_paths,
    })
}

/// [`analyze_answer`] over a raw diagram document.
pub fn analyze_document(
    submitted_json: &str,
    paths: &[NodePath],
    reference: Option<&Diagram>,
    reference_cc: u32,
) -> Result<AnalysisReport, GradingError> {
    let submitted = Diagram::from_json(submitted_json)?;
    analyze_answer(&submitted, paths, reference, reference_cc)
}

fn path_report(path: &NodePath, verdict: &PathVerdict, introduces_new_edge: bool) -> PathReport {
    let mut report = PathReport {
        path: path.clone(),
        verdict: Validity::Valid,
        failure_position: None,
        missing_pair: None,
        unknown_node: None,
        introduces_new_edge,
    };
    if let PathVerdict::Invalid { position, failure } = *verdict {
        report.verdict = Validity::Invalid;
        report.failure_position = Some(position);
        match failure {
            PathFailure::MissingEdge { from, to } => report.missing_pair = Some((from, to)),
            PathFailure::UnknownNode { number } => report.unknown_node = Some(number),
        }
    }
    report
}
