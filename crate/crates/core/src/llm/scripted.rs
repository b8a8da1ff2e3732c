//! Deterministic provider driven by a rule file.
//!
//! ```text
//! @@ # comments start with a hash
//! @@ rule contains: <correction>
//! @@ reply
//! ### Decision:
//! YES
//! @@ rule regex: (?i)net income
//! @@ reply
//! first reply
//! @@ reply
//! second reply
//! ```
//!
//! Rules are tried in file order against the concatenated prompt; the first
//! match answers. Repeated matches walk the rule's replies in order and then
//! keep returning the last one.

use super::{approx_tokens, ChatProvider, Completion, LlmError, PromptBundle, TokenUsage};
use regex::Regex;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone)]
pub enum Matcher {
    Contains(String),
    Regex(Regex),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::Regex(r) => r.is_match(prompt),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptRule {
    pub matcher: Matcher,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

pub struct ScriptedProvider {
    id: String,
    rules: Vec<ScriptRule>,
    cursors: Mutex<Vec<usize>>,
    source: Option<PathBuf>,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        let cursors = Mutex::new(vec![0; rules.len()]);
        Self {
            id: "scripted".into(),
            rules,
            cursors,
            source: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut rules: Vec<ScriptRule> = Vec::new();
        let mut body: Option<Vec<&str>> = None;

        fn close(rules: &mut [ScriptRule], body: &mut Option<Vec<&str>>) {
            if let Some(lines) = body.take() {
                let mut lines = lines;
                while lines.last().is_some_and(|l| l.trim().is_empty()) {
                    lines.pop();
                }
                rules
                    .last_mut()
                    .expect("reply follows a rule")
                    .responses
                    .push(lines.join("\n"));
            }
        }

        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: &str| ScriptError {
                line: line_no,
                message: message.to_string(),
            };
            let Some(directive) = line.strip_prefix("@@") else {
                match body.as_mut() {
                    Some(lines) => lines.push(line),
                    None if line.trim().is_empty() => {}
                    None => return Err(err("text outside a reply")),
                }
                continue;
            };
            let directive = directive.trim_start();
            if directive.starts_with('#') {
                continue;
            }
            close(&mut rules, &mut body);
            if let Some(s) = directive.strip_prefix("rule contains:") {
                let s = s.trim();
                if s.is_empty() {
                    return Err(err("empty `contains` pattern"));
                }
                rules.push(ScriptRule {
                    matcher: Matcher::Contains(s.to_string()),
                    responses: Vec::new(),
                });
            } else if let Some(p) = directive.strip_prefix("rule regex:") {
                let re = Regex::new(p.trim()).map_err(|e| err(&format!("bad regex: {e}")))?;
                rules.push(ScriptRule {
                    matcher: Matcher::Regex(re),
                    responses: Vec::new(),
                });
            } else if directive.trim_end() == "reply" {
                if rules.is_empty() {
                    return Err(err("`reply` before any rule"));
                }
                body = Some(Vec::new());
            } else {
                return Err(err(&format!("unknown directive `@@{directive}`")));
            }
        }
        close(&mut rules, &mut body);
        if let Some(pos) = rules.iter().position(|r| r.responses.is_empty()) {
            return Err(ScriptError {
                line: 0,
                message: format!("rule {} has no reply", pos + 1),
            });
        }
        Ok(Self::new(rules))
    }

    /// Loads a script file; `health` later re-checks that it is readable.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;
        let mut p = Self::parse(&text)?;
        p.source = Some(path.to_path_buf());
        Ok(p)
    }

    pub fn rules(&self) -> &[ScriptRule] {
        &self.rules
    }

    /// Rewinds every rule to its first reply.
    pub fn reset(&self) {
        self.cursors
            .lock()
            .expect("cursor lock")
            .iter_mut()
            .for_each(|c| *c = 0);
    }
}

impl ChatProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn chat(&self, bundle: &PromptBundle) -> Result<Completion, LlmError> {
        let prompt = bundle.concatenated();
        let Some(idx) = self
            .rules
            .iter()
            .position(|r| !r.responses.is_empty() && r.matcher.matches(&prompt))
        else {
            return Err(LlmError::NoScriptMatch {
                excerpt: prompt.chars().take(80).collect(),
            });
        };
        let rule = &self.rules[idx];
        let text = {
            let mut cursors = self.cursors.lock().expect("cursor lock");
            let n = cursors[idx];
            cursors[idx] = n + 1;
            rule.responses[n.min(rule.responses.len() - 1)].clone()
        };
        Ok(Completion {
            usage: TokenUsage {
                prompt: approx_tokens(&prompt),
                completion: approx_tokens(&text),
            },
            text,
        })
    }

    fn health(&self) -> Result<(), String> {
        match &self.source {
            Some(path) => std::fs::read_to_string(path)
                .map(|_| ())
                .map_err(|e| format!("script {} unreadable: {e}", path.display())),
            None => Ok(()),
        }
    }

    /// Reply order depends on call order, so concurrent use would make
    /// results depend on scheduling.
    fn concurrency_safe(&self) -> bool {
        false
    }

    fn start_session(&self) {
        self.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ask(p: &ScriptedProvider, text: &str) -> Result<String, LlmError> {
        p.chat(&PromptBundle::user("", text)).map(|c| c.text)
    }

    #[test]
    fn first_matching_rule_wins() {
        let p =
            ScriptedProvider::parse("@@ rule contains: alpha\n@@ reply\nA\n@@ rule regex: ^al\n@@ reply\nB\n").unwrap();
        assert_eq!(ask(&p, "alpha").unwrap(), "A");
        assert_eq!(ask(&p, "also").unwrap(), "B");
    }

    #[test]
    fn replies_are_sequential_then_sticky() {
        let p = ScriptedProvider::parse("@@ rule contains: q\n@@ reply\none\n\n@@ reply\ntwo\nlines\n").unwrap();
        assert_eq!(ask(&p, "q").unwrap(), "one");
        assert_eq!(ask(&p, "q").unwrap(), "two\nlines");
        assert_eq!(ask(&p, "q").unwrap(), "two\nlines");
        p.reset();
        assert_eq!(ask(&p, "q").unwrap(), "one");
    }

    #[test]
    fn no_match_is_typed() {
        let p = ScriptedProvider::parse("@@ rule contains: x\n@@ reply\ny").unwrap();
        let err = ask(&p, "nothing here").unwrap_err();
        assert_eq!(err.code(), "no_script_match");
    }

    #[test]
    fn comments_and_empty_replies() {
        let p = ScriptedProvider::parse("@@ # hi\n@@ rule contains: x\n@@ reply\n@@ # between\n").unwrap();
        assert_eq!(ask(&p, "x").unwrap(), "");
    }

    #[test]
    fn malformed_scripts() {
        for (text, line) in [
            ("stray\n", 1),
            ("@@ reply\nx\n", 1),
            ("@@ rule regex: (\n@@ reply\nx", 1),
            ("@@ rule contains: a\n@@ bogus\n", 2),
            ("@@ rule contains: a\n", 0),
        ] {
            assert_eq!(
                ScriptedProvider::parse(text).err().map(|e| e.line),
                Some(line),
                "{text:?}"
            );
        }
    }

    #[test]
    fn health_tracks_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.script");
        std::fs::write(&path, "@@ rule contains: a\n@@ reply\nb\n").unwrap();
        let p = ScriptedProvider::load(&path).unwrap();
        assert!(p.health().is_ok());
        std::fs::remove_file(&path).unwrap();
        assert!(p.health().is_err());
    }
}
