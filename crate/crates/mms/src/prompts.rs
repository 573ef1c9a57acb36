//! Versioned prompt templates. Placeholders are written `{{name}}`.

use crate::error::{MmsError, Result};

pub const EXTRACT_V1: &str = "extract/v1";
pub const ANSWER_V1: &str = "answer/v1";

const TEMPLATES: &[(&str, &str)] = &[
    (EXTRACT_V1, include_str!("../prompts/extract_v1.txt")),
    (ANSWER_V1, include_str!("../prompts/answer_v1.txt")),
];

pub fn template(id: &str) -> Result<&'static str> {
    TEMPLATES
        .iter()
        .find(|(key, _)| *key == id)
        .map(|(_, body)| *body)
        .ok_or_else(|| MmsError::UnknownTemplate(id.to_string()))
}

/// Substitute every `{{name}}` placeholder. Unknown placeholders are left as is.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}
