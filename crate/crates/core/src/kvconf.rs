//! Plain sectioned key/value configuration files.
//!
//! The format is line-oriented: `[section]` headers, `key = value` pairs,
//! `#` comments. A section may instead hold a raw text body (used for
//! prompt templates). Values support `${ENV_VAR}` interpolation so secrets
//! stay out of checked-in files; `$$` escapes a literal dollar sign.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: content before any [section] header")]
    ContentBeforeSection { line: usize },
    #[error("line {line}: unterminated section header")]
    BadSectionHeader { line: usize },
    #[error("environment variable {name} is not set (referenced as ${{{name}}})")]
    MissingEnv { name: String },
    #[error("unterminated ${{...}} reference in value {value:?}")]
    UnterminatedRef { value: String },
}

#[derive(Debug, Clone)]
struct Section {
    name: String,
    lines: Vec<String>,
}

/// A parsed configuration file.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    sections: Vec<Section>,
}

impl KvConfig {
    pub fn parse(data: &str) -> Result<Self, KvError> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw_line) in data.lines().enumerate() {
            let trimmed = raw_line.trim();
            if let Some(rest) = trimmed.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or(KvError::BadSectionHeader { line: idx + 1 })?;
                sections.push(Section {
                    name: name.trim().to_string(),
                    lines: Vec::new(),
                });
                continue;
            }
            match sections.last_mut() {
                Some(section) => section.lines.push(raw_line.to_string()),
                None => {
                    if !trimmed.is_empty() && !trimmed.starts_with('#') {
                        return Err(KvError::ContentBeforeSection { line: idx + 1 });
                    }
                }
            }
        }
        Ok(KvConfig { sections })
    }

    pub fn from_file(path: &Path) -> Result<Self, KvError> {
        let data = std::fs::read_to_string(path).map_err(|source| KvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&data)
    }

    pub fn section_names(&self) -> Vec<&str> {
        self.sections.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }

    /// The section content as verbatim text, with surrounding blank lines
    /// trimmed. Used for template bodies.
    pub fn raw_body(&self, name: &str) -> Option<String> {
        let section = self.sections.iter().find(|s| s.name == name)?;
        let lines: Vec<&str> = section.lines.iter().map(String::as_str).collect();
        let start = lines.iter().position(|l| !l.trim().is_empty())?;
        let end = lines.iter().rposition(|l| !l.trim().is_empty())?;
        Some(lines[start..=end].join("\n"))
    }

    /// Look up `key` in `section`, last assignment wins. Lines that are not
    /// `key = value` pairs (body text, comments) are skipped. Values get
    /// environment interpolation.
    pub fn get(&self, section: &str, key: &str) -> Result<Option<String>, KvError> {
        let mut found = None;
        for s in self.sections.iter().filter(|s| s.name == section) {
            for line in &s.lines {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                if let Some((k, v)) = trimmed.split_once('=') {
                    if k.trim() == key {
                        found = Some(v.trim().to_string());
                    }
                }
            }
        }
        found.map(|v| interpolate(&v)).transpose()
    }

    /// All keys of a section, in first-appearance order.
    pub fn keys(&self, section: &str) -> Vec<String> {
        let mut keys = Vec::new();
        for s in self.sections.iter().filter(|s| s.name == section) {
            for line in &s.lines {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                if let Some((k, _)) = trimmed.split_once('=') {
                    let k = k.trim().to_string();
                    if !keys.contains(&k) {
                        keys.push(k);
                    }
                }
            }
        }
        keys
    }
}

/// Expand `${VAR}` references from the environment; `$$` yields `$`.
pub fn interpolate(value: &str) -> Result<String, KvError> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '$' {
            out.push(c);
            continue;
        }
        match chars.peek() {
            Some('$') => {
                chars.next();
                out.push('$');
            }
            Some('{') => {
                chars.next();
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('}') => break,
                        Some(c) => name.push(c),
                        None => {
                            return Err(KvError::UnterminatedRef {
                                value: value.to_string(),
                            })
                        }
                    }
                }
                let resolved =
                    std::env::var(&name).map_err(|_| KvError::MissingEnv { name: name.clone() })?;
                out.push_str(&resolved);
            }
            _ => out.push('$'),
        }
    }
    Ok(out)
}
