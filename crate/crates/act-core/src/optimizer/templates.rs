//! Prompt templates for the three generation stages of the refinement loop.
//!
//! Templates are plain text with `{placeholder}` markers. The defaults are
//! compiled in; a directory of `loss.txt` / `feedback.txt` / `step.txt`
//! files can override any subset of them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::constraints::PromptConstraints;

const DEFAULT_LOSS: &str = include_str!("../../templates/loss.txt");
const DEFAULT_FEEDBACK: &str = include_str!("../../templates/feedback.txt");
const DEFAULT_STEP: &str = include_str!("../../templates/step.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub loss: String,
    pub feedback: String,
    pub step: String,
}

impl Default for Templates {
    fn default() -> Templates {
        Templates {
            loss: DEFAULT_LOSS.to_string(),
            feedback: DEFAULT_FEEDBACK.to_string(),
            step: DEFAULT_STEP.to_string(),
        }
    }
}

impl Templates {
    /// Loads templates from a directory. Files that exist override the
    /// defaults; missing files keep them.
    pub fn from_dir(dir: &Path) -> Result<Templates> {
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "template directory `{}` does not exist",
                dir.display()
            )));
        }
        let mut templates = Templates::default();
        for (name, slot) in [
            ("loss.txt", &mut templates.loss),
            ("feedback.txt", &mut templates.feedback),
            ("step.txt", &mut templates.step),
        ] {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path)?;
            }
        }
        templates.validate()?;
        Ok(templates)
    }

    /// Checks that each template still carries its required placeholders.
    pub fn validate(&self) -> Result<()> {
        let require = |template: &str, name: &str, placeholders: &[&str]| -> Result<()> {
            for ph in placeholders {
                if !template.contains(ph) {
                    return Err(Error::Config(format!(
                        "template `{name}` is missing the {ph} placeholder"
                    )));
                }
            }
            Ok(())
        };
        require(
            &self.loss,
            "loss",
            &["{question}", "{delta}", "{feedback_left}", "{feedback_right}"],
        )?;
        require(&self.feedback, "feedback", &["{question}", "{loss}"])?;
        require(&self.step, "step", &["{question}", "{gradient}", "{constraints}"])?;
        Ok(())
    }

    /// Impurity-diagnosis request. `delta` is rendered with three decimal
    /// places.
    pub fn render_loss(
        &self,
        question: &str,
        delta: f64,
        feedback_left: &str,
        feedback_right: &str,
    ) -> String {
        self.loss
            .replace("{question}", question)
            .replace("{delta}", &format!("{delta:.3}"))
            .replace("{feedback_left}", feedback_left)
            .replace("{feedback_right}", feedback_right)
    }

    /// Editing-instruction request.
    pub fn render_feedback(&self, question: &str, loss: &str) -> String {
        self.feedback
            .replace("{question}", question)
            .replace("{loss}", loss)
    }

    /// Revision request.
    pub fn render_step(&self, question: &str, gradient: &str, constraints: &str) -> String {
        self.step
            .replace("{question}", question)
            .replace("{gradient}", gradient)
            .replace("{constraints}", constraints)
    }
}

/// Renders the constraint list embedded in every revision request.
pub fn render_constraint_list(constraints: &PromptConstraints) -> String {
    let mut lines = vec![
        "The revised question must satisfy all of the following constraints:".to_string(),
        "- It must be clear and easy to answer.".to_string(),
        format!(
            "- It must focus on at most {} characteristics of the example.",
            constraints.max_characteristics
        ),
        "- It must name at least one characteristic that is not in the current question.".to_string(),
        "- Its content must be significantly different from the current question.".to_string(),
        format!(
            "- It must use at most {} logical operators (and/or).",
            constraints.max_logical_operators
        ),
        "- It must be answerable with yes or no only.".to_string(),
        "- It must end with \"(yes/no)?\".".to_string(),
    ];
    if !constraints.forbidden_terms.is_empty() {
        lines.push(format!(
            "- It must not use vague words such as {}.",
            constraints.forbidden_terms.join(", ")
        ));
    }
    lines.push(
        "- It must not contain blanks (\"___\") or placeholder tags (\"<...>\").".to_string(),
    );
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_templates_validate() {
        Templates::default().validate().unwrap();
    }

    #[test]
    fn loss_rendering_fills_all_placeholders() {
        let templates = Templates::default();
        let rendered = templates.render_loss("Is it severe? (yes/no)", 0.468205, "left fb", "right fb");
        assert!(rendered.contains("Is it severe? (yes/no)"));
        assert!(rendered.contains("0.468"));
        assert!(!rendered.contains("0.4682"));
        assert!(rendered.contains("left fb"));
        assert!(rendered.contains("right fb"));
        assert!(!rendered.contains('{'));
    }

    #[test]
    fn feedback_and_step_rendering() {
        let templates = Templates::default();
        let rendered = templates.render_feedback("q (yes/no)", "the diagnosis");
        assert!(rendered.contains("the diagnosis"));
        assert!(!rendered.contains("{loss}"));

        let constraints = render_constraint_list(&PromptConstraints::default());
        let rendered = templates.render_step("q (yes/no)", "make it specific", &constraints);
        assert!(rendered.contains("make it specific"));
        assert!(rendered.contains("at most 2 logical operators"));
        assert!(rendered.contains("could, might, possibly"));
        assert!(rendered.contains("end with \"(yes/no)?\""));
        assert!(!rendered.contains("{constraints}"));
    }

    #[test]
    fn directory_overrides_present_files_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("loss.txt"),
            "L {question} {delta} {feedback_left} {feedback_right}",
        )
        .unwrap();
        let templates = Templates::from_dir(dir.path()).unwrap();
        assert_eq!(
            templates.loss,
            "L {question} {delta} {feedback_left} {feedback_right}"
        );
        assert_eq!(templates.feedback, DEFAULT_FEEDBACK);
        assert_eq!(templates.step, DEFAULT_STEP);
    }

    #[test]
    fn invalid_override_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("step.txt"), "no placeholders here").unwrap();
        let err = Templates::from_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains("{question}"), "{err}");
    }

    #[test]
    fn missing_directory_is_rejected() {
        let err = Templates::from_dir(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
