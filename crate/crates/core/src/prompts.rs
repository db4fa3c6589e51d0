//! Versioned prompt templates.
//!
//! Each template file starts with a sentinel line
//! `### lexguide-template: <name>/<version>` that stays at the top of the
//! rendered system prompt, followed by the system text, a `---- user ----`
//! divider and the user text with `{placeholder}` slots.

use std::sync::OnceLock;

const SENTINEL_PREFIX: &str = "### lexguide-template: ";
const USER_DIVIDER: &str = "---- user ----";

/// Label of the context block in the answer prompt.
pub const CONTEXT_LABEL: &str = "Context fragments:";
pub const TOPIC_WORDS_LABEL: &str = "Topic words:";
pub const SECTION_CONTENT_LABEL: &str = "Section content:";
pub const NEXT_SECTION_LABEL: &str = "Next section:";
pub const TITLE_LABEL: &str = "'Title': ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateKind {
    Answer,
    Followup,
    Question,
    Summary,
    SectionFollowup,
}

impl TemplateKind {
    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Answer => "answer/v1",
            TemplateKind::Followup => "followup/v1",
            TemplateKind::Question => "question/v1",
            TemplateKind::Summary => "summary/v1",
            TemplateKind::SectionFollowup => "section-followup/v1",
        }
    }

    fn source(self) -> &'static str {
        match self {
            TemplateKind::Answer => include_str!("../resources/prompts/answer.txt"),
            TemplateKind::Followup => include_str!("../resources/prompts/followup.txt"),
            TemplateKind::Question => include_str!("../resources/prompts/question.txt"),
            TemplateKind::Summary => include_str!("../resources/prompts/summary.txt"),
            TemplateKind::SectionFollowup => include_str!("../resources/prompts/section_followup.txt"),
        }
    }

    const ALL: [TemplateKind; 5] = [
        TemplateKind::Answer,
        TemplateKind::Followup,
        TemplateKind::Question,
        TemplateKind::Summary,
        TemplateKind::SectionFollowup,
    ];
}

#[derive(Debug)]
pub struct Template {
    pub kind: TemplateKind,
    system: String,
    user: String,
}

fn parse(kind: TemplateKind) -> Template {
    let src = kind.source();
    let (system, user) = src
        .split_once(USER_DIVIDER)
        .unwrap_or_else(|| panic!("template {} lacks a user divider", kind.name()));
    let system = system.trim_end().to_string();
    assert!(
        system.starts_with(&format!("{SENTINEL_PREFIX}{}", kind.name())),
        "template {} has a wrong sentinel",
        kind.name()
    );
    Template {
        kind,
        system,
        user: user.trim_start_matches(['\r', '\n']).trim_end().to_string(),
    }
}

pub fn template(kind: TemplateKind) -> &'static Template {
    static ALL: OnceLock<Vec<Template>> = OnceLock::new();
    let all = ALL.get_or_init(|| TemplateKind::ALL.iter().map(|&k| parse(k)).collect());
    &all[TemplateKind::ALL.iter().position(|&k| k == kind).unwrap()]
}

impl Template {
    /// Fill `{key}` slots. Keys missing from `vars` are left untouched.
    pub fn render(&self, vars: &[(&str, &str)]) -> (String, String) {
        let mut user = self.user.clone();
        for (key, value) in vars {
            user = user.replace(&format!("{{{key}}}"), value);
        }
        (self.system.clone(), user)
    }
}

/// Recognize which template produced a system prompt.
pub fn detect(system_prompt: &str) -> Option<TemplateKind> {
    let first = system_prompt.lines().next()?.trim();
    let name = first.strip_prefix(SENTINEL_PREFIX)?;
    TemplateKind::ALL.iter().copied().find(|k| k.name() == name)
}

/// Value following `label` on the first line that starts with it.
pub fn field<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines()
        .find_map(|l| l.trim_start().strip_prefix(label))
        .map(str::trim)
}

/// Lines following the line equal to `label`, up to the next blank line.
pub fn block<'a>(text: &'a str, label: &str) -> Vec<&'a str> {
    let mut lines = text.lines();
    for l in lines.by_ref() {
        if l.trim() == label {
            break;
        }
    }
    lines.take_while(|l| !l.trim().is_empty()).collect()
}
