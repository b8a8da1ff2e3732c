//! Prompt template assets and their renderer. Templates use brace
//! placeholders (`{task}`); a doubled brace is a literal brace. Substituted
//! values are inserted verbatim and never re-scanned.

use std::collections::BTreeMap;

pub const ENTITY_EXTRACTION: &str = include_str!("../assets/prompts/entity_extraction.tmpl");
pub const SCHEMA_DESCRIPTION: &str = include_str!("../assets/prompts/schema_description.tmpl");
pub const SELF_CORRECTION: &str = include_str!("../assets/prompts/self_correction.tmpl");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder `{0}`")]
    UnknownPlaceholder(String),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
}

pub fn render(template: &str, vars: &BTreeMap<&str, &str>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    let mut offset = 0;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        let consumed = if tail.starts_with("{{") {
            out.push('{');
            2
        } else if tail.starts_with("}}") {
            out.push('}');
            2
        } else if tail.starts_with('{') {
            let close = tail.find('}').ok_or(TemplateError::UnbalancedBrace(offset + i))?;
            let name = &tail[1..close];
            let value = vars
                .get(name)
                .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
            out.push_str(value);
            close + 1
        } else {
            return Err(TemplateError::UnbalancedBrace(offset + i));
        };
        rest = &tail[consumed..];
        offset += i + consumed;
    }
    out.push_str(rest);
    Ok(out)
}

fn render_asset(template: &str, name: &str, value: &str) -> String {
    render(template, &BTreeMap::from([(name, value)])).expect("bundled template is well-formed")
}

/// The entity extraction prompt for one question.
pub fn entity_extraction(task: &str) -> String {
    render_asset(ENTITY_EXTRACTION, "task", task)
}

/// The schema description used as the generation system prompt.
pub fn schema_description() -> String {
    render(SCHEMA_DESCRIPTION, &BTreeMap::new()).expect("bundled template is well-formed")
}

/// The self-correction prompt around a rendered result.
pub fn self_correction(sql_result: &str) -> String {
    render_asset(SELF_CORRECTION, "sql_result", sql_result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_and_placeholders() {
        let vars = BTreeMap::from([("x", "{y}")]);
        assert_eq!(render("a {{b}} {x} }}", &vars).unwrap(), "a {b} {y} }");
        assert_eq!(
            render("{nope}", &vars),
            Err(TemplateError::UnknownPlaceholder("nope".into()))
        );
        assert_eq!(render("a } b", &vars), Err(TemplateError::UnbalancedBrace(2)));
        assert_eq!(render("a {x", &vars), Err(TemplateError::UnbalancedBrace(2)));
    }

    #[test]
    fn task_is_inserted_between_question_tags() {
        let p = entity_extraction("X");
        assert!(p.contains("<question>\nX\n</question>"));
        assert_eq!(p, entity_extraction("X"));
    }

    #[test]
    fn braces_in_task_survive() {
        let p = entity_extraction("what is {task} and {{x}}?");
        assert!(p.contains("<question>\nwhat is {task} and {{x}}?\n</question>"));
    }

    #[test]
    fn assets_render() {
        assert!(schema_description().contains("Always include a `quarter` condition"));
        let c = self_correction("");
        assert!(c.starts_with("<result>\n\n</result>"));
        assert!(c.contains("### Decision:\n{Your decision}"));
    }
}
