//! Prompt templates and placeholder binding.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound in place of retrieved context when retrieval returns nothing.
pub const NO_RETRIEVAL_MARKER: &str = "(no examples retrieved)";
/// Bound in place of the history window for a file's first chunk.
pub const NO_HISTORY_MARKER: &str = "(none)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    StrategyA,
    StrategyB,
    Direct,
    History,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::StrategyA,
        TemplateId::StrategyB,
        TemplateId::Direct,
        TemplateId::History,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::StrategyA => "strategy_a.txt",
            TemplateId::StrategyB => "strategy_b.txt",
            TemplateId::Direct => "direct.txt",
            TemplateId::History => "history.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            TemplateId::StrategyA => include_str!("../../assets/prompts/strategy_a.txt"),
            TemplateId::StrategyB => include_str!("../../assets/prompts/strategy_b.txt"),
            TemplateId::Direct => include_str!("../../assets/prompts/direct.txt"),
            TemplateId::History => include_str!("../../assets/prompts/history.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: TemplateId,
    pub text: String,
}

impl Template {
    /// `text` is used as is, except that one trailing newline (as left by
    /// editors) is dropped.
    pub fn new(id: TemplateId, text: &str) -> Self {
        Template {
            id,
            text: text.strip_suffix('\n').unwrap_or(text).to_string(),
        }
    }

    pub fn builtin(id: TemplateId) -> Self {
        Self::new(id, id.builtin())
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for (_, name) in placeholder_spans(&self.text) {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }
}

/// `{NAME}` occurrences where NAME is upper-case letters, digits and `_`.
fn placeholder_spans(text: &str) -> Vec<(usize, &str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &text[i + 1..];
            let len = rest
                .bytes()
                .take_while(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || *b == b'_')
                .count();
            if len > 0 && rest.as_bytes().get(len) == Some(&b'}') {
                out.push((i, &rest[..len]));
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

/// The four templates a run uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, Template>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: TemplateId::ALL.into_iter().map(|id| (id, Template::builtin(id))).collect(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates, overridden by any `<id>.txt` present in `dir`.
    pub fn load_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                set.templates.insert(id, Template::new(id, &text));
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &Template {
        &self.templates[&id]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_id: TemplateId,
    pub filled_text: String,
    pub placeholders_bound: BTreeMap<String, String>,
}

/// Substitutes every placeholder of `template` with its binding in a single
/// pass; bound values are never re-scanned for placeholders.
pub fn build_prompt(template: &Template, bindings: &BTreeMap<String, String>) -> Result<PromptSpec> {
    let names = template.placeholders();
    if let Some(missing) = names.iter().find(|n| !bindings.contains_key(**n)) {
        return Err(Error::UnboundPlaceholder(missing.to_string()));
    }
    if let Some(extra) = bindings.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::UnknownBinding(extra.clone()));
    }
    let mut out = String::with_capacity(template.text.len() + bindings.values().map(String::len).sum::<usize>());
    let mut last = 0;
    for (pos, name) in placeholder_spans(&template.text) {
        out.push_str(&template.text[last..pos]);
        out.push_str(&bindings[name]);
        last = pos + name.len() + 2;
    }
    out.push_str(&template.text[last..]);
    Ok(PromptSpec {
        template_id: template.id,
        filled_text: out,
        placeholders_bound: bindings.clone(),
    })
}
