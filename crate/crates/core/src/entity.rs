//! Entity extraction prompt, reply parsing and linking of extracted terms to
//! warehouse codes.

use crate::llm::PromptBundle;
use crate::prompt;
use crate::vecindex::{Namespace, VectorIndex};
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedEntities {
    pub industry: Vec<String>,
    pub company_name: Vec<String>,
    pub financial_statement_account: Vec<String>,
    pub financial_ratio: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityField {
    Industry,
    CompanyName,
    FinancialStatementAccount,
    FinancialRatio,
}

impl EntityField {
    pub const ALL: [EntityField; 4] = [
        EntityField::Industry,
        EntityField::CompanyName,
        EntityField::FinancialStatementAccount,
        EntityField::FinancialRatio,
    ];

    pub fn key(self) -> &'static str {
        match self {
            EntityField::Industry => "industry",
            EntityField::CompanyName => "company_name",
            EntityField::FinancialStatementAccount => "financial_statement_account",
            EntityField::FinancialRatio => "financial_ratio",
        }
    }

    pub fn namespace(self) -> Namespace {
        match self {
            EntityField::Industry => Namespace::Industry,
            EntityField::CompanyName => Namespace::Company,
            EntityField::FinancialStatementAccount => Namespace::Account,
            EntityField::FinancialRatio => Namespace::Ratio,
        }
    }
}

impl ExtractedEntities {
    pub fn field(&self, f: EntityField) -> &[String] {
        match f {
            EntityField::Industry => &self.industry,
            EntityField::CompanyName => &self.company_name,
            EntityField::FinancialStatementAccount => &self.financial_statement_account,
            EntityField::FinancialRatio => &self.financial_ratio,
        }
    }

    fn field_mut(&mut self, f: EntityField) -> &mut Vec<String> {
        match f {
            EntityField::Industry => &mut self.industry,
            EntityField::CompanyName => &mut self.company_name,
            EntityField::FinancialStatementAccount => &mut self.financial_statement_account,
            EntityField::FinancialRatio => &mut self.financial_ratio,
        }
    }

    pub fn is_empty(&self) -> bool {
        EntityField::ALL.iter().all(|f| self.field(*f).is_empty())
    }
}

pub fn render_entity_prompt(task: &str) -> PromptBundle {
    PromptBundle::user("", prompt::entity_extraction(task))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no JSON object found in the entity reply")]
pub struct ExtractionError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedEntities {
    pub entities: ExtractedEntities,
    pub warnings: Vec<String>,
}

/// Tags whose presence means the base account must be listed too.
const BASE_ACCOUNT_TAGS: [&str; 2] = ["yoy", "qoq"];

/// Parses the first fenced block (or the outermost braces when there is no
/// fence) as the four-field object. Missing or malformed fields become empty
/// lists with a warning.
pub fn parse_entity_reply(text: &str) -> Result<ParsedEntities, ExtractionError> {
    let body = fenced_block(text).unwrap_or(text);
    let object = parse_object(body)
        .or_else(|| parse_object(text))
        .ok_or(ExtractionError)?;
    let mut warnings = Vec::new();
    let mut entities = ExtractedEntities::default();
    for f in EntityField::ALL {
        match object.get(f.key()) {
            None => warnings.push(format!("missing key `{}`", f.key())),
            Some(Json::Array(items)) => {
                let list = entities.field_mut(f);
                for item in items {
                    match item.as_str().map(str::trim) {
                        Some("") => {}
                        Some(s) => {
                            if !list.iter().any(|x| x == s) {
                                list.push(s.to_string());
                            }
                        }
                        None => warnings.push(format!("non-string item in `{}` ignored", f.key())),
                    }
                }
            }
            Some(_) => warnings.push(format!("key `{}` is not a list", f.key())),
        }
    }
    add_base_accounts(&mut entities, &mut warnings);
    Ok(ParsedEntities { entities, warnings })
}

fn add_base_accounts(e: &mut ExtractedEntities, warnings: &mut Vec<String>) {
    let tagged: Vec<String> = e
        .financial_ratio
        .iter()
        .chain(&e.financial_statement_account)
        .filter_map(|item| strip_base_tag(item))
        .collect();
    for base in tagged {
        let accounts = &mut e.financial_statement_account;
        if !accounts.iter().any(|a| a.eq_ignore_ascii_case(&base)) {
            warnings.push(format!("added base account `{base}`"));
            accounts.push(base);
        }
    }
}

/// `"Net Income YoY"` gives `Some("Net Income")`.
fn strip_base_tag(item: &str) -> Option<String> {
    let words: Vec<&str> = item.split_whitespace().collect();
    if !words
        .iter()
        .any(|w| BASE_ACCOUNT_TAGS.contains(&w.to_ascii_lowercase().as_str()))
    {
        return None;
    }
    let base: Vec<&str> = words
        .into_iter()
        .filter(|w| !BASE_ACCOUNT_TAGS.contains(&w.to_ascii_lowercase().as_str()))
        .collect();
    (!base.is_empty()).then(|| base.join(" "))
}

/// Content of the first ``` fence, skipping an info string such as `json`.
pub(crate) fn fenced_block(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(&body[..end])
}

fn parse_object(text: &str) -> Option<serde_json::Map<String, Json>> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    match serde_json::from_str(&text[start..=end]) {
        Ok(Json::Object(map)) => Some(map),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedCandidate {
    /// Stock code, industry name, category code or ratio code.
    pub code: String,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCandidates {
    pub term: String,
    pub candidates: Vec<LinkedCandidate>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkedCandidates {
    pub fields: BTreeMap<EntityField, Vec<TermCandidates>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LinkedCandidates {
    pub fn total(&self) -> usize {
        self.fields.values().flatten().map(|t| t.candidates.len()).sum()
    }

    /// Distinct codes for a field with their best score, highest first.
    pub fn codes(&self, field: EntityField) -> Vec<&LinkedCandidate> {
        let mut out: Vec<&LinkedCandidate> = self
            .fields
            .get(&field)
            .into_iter()
            .flatten()
            .flat_map(|t| &t.candidates)
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
        out
    }
}

/// Searches each term in its field's namespace. A code found under several
/// terms (or several surfaces) is kept once, under its best score.
pub fn link_entities(e: &ExtractedEntities, index: &VectorIndex, k: usize) -> LinkedCandidates {
    let mut linked = LinkedCandidates::default();
    for field in EntityField::ALL {
        let mut best: BTreeMap<String, (usize, LinkedCandidate)> = BTreeMap::new();
        let terms = e.field(field);
        for (ti, term) in terms.iter().enumerate() {
            // Over-fetch so that several surfaces of one code do not crowd out
            // other codes.
            let hits = match index.search(field.namespace(), term, k.saturating_mul(4).max(1)) {
                Ok(h) => h,
                Err(err) => {
                    linked.warnings.push(format!("{} `{term}`: {err}", field.key()));
                    continue;
                }
            };
            let mut seen = 0;
            for hit in hits {
                let code = hit.metadata.get("code").cloned().unwrap_or_else(|| hit.id.clone());
                let label = hit
                    .metadata
                    .get("label")
                    .cloned()
                    .unwrap_or_else(|| hit.surface_text.clone());
                let cand = LinkedCandidate {
                    code: code.clone(),
                    label,
                    score: hit.score,
                };
                let replace = match best.get(&code) {
                    Some((_, prev)) => cand.score > prev.score,
                    None => {
                        seen += 1;
                        if seen > k {
                            continue;
                        }
                        true
                    }
                };
                if replace {
                    best.insert(code, (ti, cand));
                }
            }
        }
        let mut per_term: Vec<TermCandidates> = terms
            .iter()
            .map(|t| TermCandidates {
                term: t.clone(),
                candidates: Vec::new(),
            })
            .collect();
        for (ti, cand) in best.into_values() {
            per_term[ti].candidates.push(cand);
        }
        for t in &mut per_term {
            t.candidates
                .sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.code.cmp(&b.code)));
        }
        if !per_term.is_empty() {
            linked.fields.insert(field, per_term);
        }
    }
    linked
}
