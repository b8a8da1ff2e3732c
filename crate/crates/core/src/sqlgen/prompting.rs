use super::FewShotExample;
use crate::entity::{EntityField, LinkedCandidates};
use crate::finstore::{ExecError, ExecErrorKind};
use crate::llm::{Message, PromptBundle};
use crate::prompt;
use crate::ResultTable;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

const MAPPING_HEADINGS: [(EntityField, &str); 4] = [
    (EntityField::Industry, "industry"),
    (EntityField::CompanyName, "stock_code"),
    (EntityField::FinancialStatementAccount, "category_code"),
    (EntityField::FinancialRatio, "ratio_code"),
];

/// Generation prompt: the schema description as system text; the user turn
/// holds the task, the candidate code mapping, optional exploration notes
/// and the worked examples, in that order. Empty sections are left out.
pub fn assemble_generation_prompt(
    question: &str,
    candidates: &LinkedCandidates,
    fewshots: &[FewShotExample],
    exploration: Option<&str>,
) -> PromptBundle {
    let mut user = format!("<task>\n{question}\n</task>\n");

    let mut mapping = String::new();
    for (field, heading) in MAPPING_HEADINGS {
        let codes = candidates.codes(field);
        if codes.is_empty() {
            continue;
        }
        writeln!(mapping, "### {heading}").unwrap();
        for c in codes {
            if c.label == c.code {
                writeln!(mapping, "- {}", c.code).unwrap();
            } else {
                writeln!(mapping, "- {}: {}", c.code, c.label).unwrap();
            }
        }
    }
    if !mapping.is_empty() {
        write!(user, "<mapping>\n{mapping}</mapping>\n").unwrap();
    }

    if let Some(notes) = exploration.filter(|n| !n.trim().is_empty()) {
        write!(user, "<exploration>\n{}\n</exploration>\n", notes.trim_end()).unwrap();
    }

    if !fewshots.is_empty() {
        user.push_str("<examples>\n");
        for ex in fewshots {
            write!(user, "### Question:\n{}\n", ex.question).unwrap();
            if let Some(c) = &ex.commentary {
                write!(user, "### Note:\n{c}\n").unwrap();
            }
            write!(user, "### SQL Query:\n```sql\n{}\n```\n", ex.sql.trim_end()).unwrap();
        }
        user.push_str("</examples>\n");
    }
    user.push_str("Return the SQL query for the task in a ```sql code block.");
    PromptBundle::user(prompt::schema_description(), user)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("the reply contains no SQL")]
pub struct NoSqlError;

/// Every ``` fenced block, info strings dropped.
pub(crate) fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find("```") {
            Some(end) => {
                out.push(&body[..end]);
                rest = &body[end + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// Content of the last `### <name>` section, up to the next `###` heading.
/// Text after the heading on the same line (past a colon) is included.
fn section<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    // (line start, content start, heading matches `name`)
    let mut headings = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some(h) = line.trim_start().strip_prefix("###") {
            let h = h.trim_start();
            let is_match = h.get(..name.len()).is_some_and(|p| p.eq_ignore_ascii_case(name));
            let content = if is_match {
                let after = h[name.len()..].trim_start_matches([':', '*', ' ', '\t']);
                offset + line.len() - after.len()
            } else {
                offset
            };
            headings.push((offset, content, is_match));
        }
        offset += line.len();
    }
    let i = headings.iter().rposition(|h| h.2)?;
    let end = headings.get(i + 1).map_or(text.len(), |h| h.0);
    Some(&text[headings[i].1..end])
}

fn strip_fence(s: &str) -> &str {
    fenced_blocks(s).into_iter().next().unwrap_or(s)
}

fn clean_sql(s: &str) -> String {
    s.trim().to_string()
}

/// The last `### SQL Query` section, else the first fenced block, else the
/// whole reply.
pub fn extract_sql(reply: &str) -> Result<String, NoSqlError> {
    let sql = if let Some(s) = section(reply, "SQL Query") {
        clean_sql(strip_fence(s))
    } else if let Some(b) = fenced_blocks(reply).into_iter().next() {
        clean_sql(b)
    } else {
        clean_sql(reply)
    };
    if sql.is_empty() {
        Err(NoSqlError)
    } else {
        Ok(sql)
    }
}

/// The text handed to the correction prompt for one execution outcome: the
/// table capped at `max_rows`, nothing for an empty result, or the error.
pub fn render_sql_result(outcome: &Result<ResultTable, ExecError>, max_rows: usize) -> String {
    match outcome {
        Ok(t) => t.render_fixed_width(max_rows),
        Err(e) if e.kind == ExecErrorKind::Empty => String::new(),
        Err(e) => format!("Error ({}): {}", e.kind, e.message),
    }
}

pub fn render_correction_prompt(outcome: &Result<ResultTable, ExecError>, max_rows: usize) -> String {
    prompt::self_correction(&render_sql_result(outcome, max_rows))
}

/// Continues the generation conversation: the generation turn, the reply
/// that produced the SQL under review, then the correction prompt.
pub fn correction_bundle(generation: &PromptBundle, reply: &str, correction_text: String) -> PromptBundle {
    let mut messages = generation.messages.clone();
    messages.push(Message::assistant(reply));
    messages.push(Message::user(correction_text));
    PromptBundle {
        system_text: generation.system_text.clone(),
        messages,
        decoding: generation.decoding.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionVerdict {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionDecision {
    pub verdict: DecisionVerdict,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_sql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Reads the decision case-insensitively. A missing or unreadable decision
/// counts as "no" with the whole reply as reasoning.
pub fn parse_correction_reply(text: &str) -> CorrectionDecision {
    let word = section(text, "Decision").and_then(|s| {
        s.split(|c: char| !c.is_ascii_alphabetic())
            .find(|w| !w.is_empty())
            .map(str::to_ascii_lowercase)
    });
    let (verdict, warning) = match word.as_deref() {
        Some("yes") => (DecisionVerdict::Yes, None),
        Some("no") => (DecisionVerdict::No, None),
        Some(other) => (
            DecisionVerdict::No,
            Some(format!("unrecognized decision `{other}`; treated as no")),
        ),
        None => (
            DecisionVerdict::No,
            Some("no Decision section; treated as no".to_string()),
        ),
    };
    let reasoning = match (&warning, section(text, "Reasoning")) {
        (_, Some(r)) => r.trim().to_string(),
        (Some(_), None) if word.is_none() => text.trim().to_string(),
        _ => String::new(),
    };
    let new_sql = match verdict {
        DecisionVerdict::Yes => None,
        DecisionVerdict::No => section(text, "SQL Query")
            .map(|s| clean_sql(strip_fence(s)))
            .or_else(|| fenced_blocks(text).first().map(|b| clean_sql(b)))
            .filter(|s| !s.is_empty()),
    };
    CorrectionDecision {
        verdict,
        reasoning,
        new_sql,
        warning,
    }
}
