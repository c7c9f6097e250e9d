//! Offline grading of a directory of answer files against one reference.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use flowclass_core::grading::{analyze_answer, AnalysisReport};
use flowclass_core::{Diagram, NodePath};
use serde::{Deserialize, Serialize};

/// `{"diagram": <diagram document>, "paths": [[1,2,7], ...]?}`. The reference
/// CC is taken from the diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFile {
    pub diagram: Diagram,
    #[serde(default)]
    pub paths: Vec<NodePath>,
}

/// One student's answer. A missing diagram is graded as an empty drawing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerFile {
    pub student_id: String,
    #[serde(default)]
    pub game_number: Option<u32>,
    #[serde(default)]
    pub diagram: Option<Diagram>,
    pub paths: Vec<NodePath>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradedAnswer {
    pub file: String,
    pub student_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub game_number: Option<u32>,
    pub report: AnalysisReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeFailure {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BatchReport {
    pub reports: Vec<GradedAnswer>,
    pub failures: Vec<GradeFailure>,
}

pub fn load_reference(path: &Path) -> anyhow::Result<(Diagram, u32)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let reference: ReferenceFile =
        serde_json::from_str(&text).with_context(|| format!("{} is not a reference file", path.display()))?;
    let metrics = reference.diagram.metrics();
    let cc = match metrics.cc_structural {
        Some(cc) if cc >= 1 => cc as u32,
        other => bail!("reference diagram has CC {other:?}; it must be at least 1"),
    };
    Ok((reference.diagram, cc))
}

/// Grades every `*.json` file in `answers_dir`, in file-name order.
pub fn batch_grade(answers_dir: &Path, reference: &Diagram, reference_cc: u32) -> anyhow::Result<BatchReport> {
    let mut files: Vec<_> = fs::read_dir(answers_dir)
        .with_context(|| format!("cannot list {}", answers_dir.display()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut out = BatchReport::default();
    for path in files {
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<AnswerFile>(&t).map_err(|e| e.to_string()));
        let answer = match parsed {
            Ok(a) => a,
            Err(reason) => {
                out.failures.push(GradeFailure { file, reason });
                continue;
            }
        };
        let blank = Diagram::new(reference.canvas());
        let drawn = answer.diagram.as_ref().unwrap_or(&blank);
        let report = analyze_answer(drawn, &answer.paths, Some(reference), reference_cc)?;
        out.reports.push(GradedAnswer {
            file,
            student_id: answer.student_id,
            game_number: answer.game_number,
            report,
        });
    }
    Ok(out)
}
