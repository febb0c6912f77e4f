use std::collections::BTreeMap;
use std::path::Path;

use super::{PromptError, Result};

const DEFAULT: &str = include_str!("../../templates/default.txt");

/// Sections every template file must define.
pub const REQUIRED_SECTIONS: [&str; 12] = [
    "history.liked",
    "history.disliked",
    "history.empty",
    "pointwise.instruction",
    "pointwise.question",
    "pairwise.instruction",
    "pairwise.question",
    "listwise.instruction",
    "listwise.question",
    "hint.pointwise",
    "hint.pairwise",
    "hint.listwise",
];

/// Named text templates with `{placeholder}` slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    sections: BTreeMap<String, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self::parse(DEFAULT).expect("bundled templates are valid")
    }
}

impl Templates {
    /// Parses `[name]` sections. Comment lines start with `#`; surrounding
    /// blank lines of a section body are trimmed and inner line breaks become
    /// spaces.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        let finish = |cur: Option<(String, Vec<&str>)>, sections: &mut BTreeMap<String, String>| {
            if let Some((name, lines)) = cur {
                let body = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
                sections.insert(name, body);
            }
        };
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.starts_with('#') {
                continue;
            }
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if sections.contains_key(name) || current.as_ref().is_some_and(|(c, _)| c == name) {
                    return Err(PromptError::Template(format!("line {}: duplicate section [{name}]", n + 1)));
                }
                finish(current.take(), &mut sections);
                current = Some((name.to_string(), Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !trimmed.is_empty() {
                return Err(PromptError::Template(format!("line {}: text outside any section", n + 1)));
            }
        }
        finish(current.take(), &mut sections);
        for name in REQUIRED_SECTIONS {
            if !sections.contains_key(name) {
                return Err(PromptError::Template(format!("missing section [{name}]")));
            }
        }
        Ok(Self { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn raw(&self, name: &str) -> Result<&str> {
        self.sections.get(name).map(String::as_str).ok_or_else(|| PromptError::Template(format!("no section [{name}]")))
    }

    /// Renders section `name`, substituting `{key}` for each binding. Unknown
    /// placeholders are an error.
    pub fn render(&self, name: &str, bindings: &[(&str, &str)]) -> Result<String> {
        let raw = self.raw(name)?;
        let mut out = String::with_capacity(raw.len());
        let mut rest = raw;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close =
                after.find('}').ok_or_else(|| PromptError::Template(format!("[{name}]: unterminated placeholder")))?;
            let key = &after[..close];
            let value = bindings
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::Template(format!("[{name}]: unbound placeholder {{{key}}}")))?;
            out.push_str(value);
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
