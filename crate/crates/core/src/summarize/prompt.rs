use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

/// First line of the user-context block; the mock summarizer ignores
/// everything after it.
pub const CONTEXT_HEADER: &str = "The user previously wrote:";

/// Prompt templates. `---` on its own line separates the system role from the
/// user message. Placeholders use `{{name}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub longterm: String,
    pub recent: String,
    pub context: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            longterm: include_str!("../../prompts/longterm.txt").to_owned(),
            recent: include_str!("../../prompts/recent.txt").to_owned(),
            context: include_str!("../../prompts/context.txt").to_owned(),
        }
    }
}

impl PromptTemplates {
    /// Reads `longterm.txt`, `recent.txt` and `context.txt` from `dir`.
    pub fn load(dir: &Path) -> io::Result<Self> {
        Ok(PromptTemplates {
            longterm: std::fs::read_to_string(dir.join("longterm.txt"))?,
            recent: std::fs::read_to_string(dir.join("recent.txt"))?,
            context: std::fs::read_to_string(dir.join("context.txt"))?,
        })
    }

    pub fn context_block(&self, user_context: Option<&str>) -> String {
        match user_context {
            Some(text) if !text.trim().is_empty() => {
                render(&self.context, &[("user_context", text.trim())])
            }
            _ => String::new(),
        }
    }
}

pub(crate) fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    out
}

/// Hex SHA-256 over the prompts, NUL separated.
pub fn prompt_hash<'a>(prompts: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for p in prompts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Splits a rendered prompt into (system, user) at the first `---` line.
pub(crate) fn split_roles(prompt: &str) -> (Option<&str>, &str) {
    let mut offset = 0;
    for line in prompt.split_inclusive('\n') {
        if line.trim_end() == "---" {
            return (Some(prompt[..offset].trim()), prompt[offset + line.len()..].trim());
        }
        offset += line.len();
    }
    (None, prompt.trim())
}
