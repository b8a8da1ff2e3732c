use crate::llm::{Gateway, LlmError, PromptBundle};
use crate::ResultTable;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Rows of the predicted table shown to the judge.
pub const JUDGE_TABLE_ROWS: usize = 50;

pub const IDK_TEXT: &str = "I don't know";

const JUDGE_SYSTEM: &str = "You grade answers to questions about a financial database. \
Use only the result table you are given. If the table does not settle the question, choose \"I don't know\" when that option is offered.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mcq {
    pub stem: String,
    pub options: Vec<String>,
    pub correct_index: usize,
    #[serde(default = "default_true")]
    pub allow_idk: bool,
}

fn default_true() -> bool {
    true
}

impl Mcq {
    pub fn check(&self) -> Result<(), String> {
        if !(2..=5).contains(&self.options.len()) {
            return Err(format!("{} options; expected 2 to 5", self.options.len()));
        }
        if self.correct_index >= self.options.len() {
            return Err(format!("correct_index {} is out of range", self.correct_index));
        }
        Ok(())
    }

    /// Letter of the "I don't know" option when it is offered.
    pub fn idk_letter(&self) -> Option<char> {
        self.allow_idk.then(|| letter(self.options.len()))
    }
}

fn letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "choice")]
pub enum McqVerdict {
    Correct,
    Incorrect(usize),
    DontKnow,
    /// The judge reply named no option.
    Unparseable,
    /// The pipeline produced no table, so the judge was not asked.
    Unanswered,
}

impl McqVerdict {
    pub fn is_correct(self) -> bool {
        self == McqVerdict::Correct
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    pub verdicts: Vec<McqVerdict>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl JudgeOutcome {
    pub fn correct(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_correct()).count()
    }

    /// Correct over total; 0 when there are no questions.
    pub fn accuracy(&self) -> f64 {
        if self.verdicts.is_empty() {
            0.0
        } else {
            self.correct() as f64 / self.verdicts.len() as f64
        }
    }
}

pub fn judge_prompt(question: &str, table: &ResultTable, mcq: &Mcq) -> PromptBundle {
    let mut text = format!(
        "<question>\n{question}\n</question>\n<result>\n{}\n</result>\n### Question:\n{}\n### Options:\n",
        table.render_fixed_width(JUDGE_TABLE_ROWS),
        mcq.stem
    );
    for (i, o) in mcq.options.iter().enumerate() {
        writeln!(text, "{}. {o}", letter(i)).unwrap();
    }
    if let Some(l) = mcq.idk_letter() {
        writeln!(text, "{l}. {IDK_TEXT}").unwrap();
    }
    text.push_str("Reply with the letter of one option under a line reading ### Answer:");
    PromptBundle::user(JUDGE_SYSTEM, text)
}

/// Reads the chosen option. `None` when the reply names none.
pub fn parse_judge_reply(reply: &str, mcq: &Mcq) -> Option<McqVerdict> {
    let body = match reply.rfind("### Answer") {
        Some(i) => &reply[i + "### Answer".len()..],
        None => reply,
    };
    if body.to_lowercase().contains(&IDK_TEXT.to_lowercase()) {
        return Some(McqVerdict::DontKnow);
    }
    let offered = mcq.options.len() + usize::from(mcq.allow_idk);
    let idx = body
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| w.len() == 1 && w.as_bytes()[0].is_ascii_uppercase())
        .map(|w| (w.as_bytes()[0] - b'A') as usize)
        .find(|&i| i < offered)?;
    Some(if idx == mcq.options.len() {
        McqVerdict::DontKnow
    } else if idx == mcq.correct_index {
        McqVerdict::Correct
    } else {
        McqVerdict::Incorrect(idx)
    })
}

/// Asks the judge each question about `table`. Without a table every
/// question is unanswered and no call is made.
pub fn mcq_judge(
    question: &str,
    table: Option<&ResultTable>,
    mcqs: &[Mcq],
    judge: &Gateway,
) -> Result<JudgeOutcome, LlmError> {
    let Some(table) = table else {
        return Ok(JudgeOutcome {
            verdicts: vec![McqVerdict::Unanswered; mcqs.len()],
            warnings: Vec::new(),
        });
    };
    let mut out = JudgeOutcome {
        verdicts: Vec::with_capacity(mcqs.len()),
        warnings: Vec::new(),
    };
    for (i, mcq) in mcqs.iter().enumerate() {
        let reply = judge.complete(&judge_prompt(question, table, mcq))?;
        match parse_judge_reply(&reply.text, mcq) {
            Some(v) => out.verdicts.push(v),
            None => {
                out.warnings.push(format!("mcq {}: no option in judge reply", i + 1));
                out.verdicts.push(McqVerdict::Unparseable);
            }
        }
    }
    Ok(out)
}
