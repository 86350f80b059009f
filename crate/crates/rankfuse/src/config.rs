//! Flat `key=value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored; whitespace around keys and values is trimmed. Keys are the long
//! names of the command-line flags (`noise-levels=0.1,0.5`), and a file is
//! applied by turning each assignment into a flag placed *before* the flags
//! given on the command line, so explicit flags always win.

use std::path::Path;

use crate::error::{FormatError, IoError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>, FormatError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| FormatError::new(i + 1, format!("expected key=value, found `{line}`")))?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(FormatError::new(i + 1, format!("invalid key `{key}`")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(FormatError::new(
                i + 1,
                format!("key `{key}` already set on line {}", prev.line),
            ));
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Entry>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse(&text).map_err(|e| IoError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blanks_and_trimming() {
        let e = parse("# grid\n\n seeds = 1,2 \nepochs=5\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].line, e[0].key.as_str(), e[0].value.as_str()), (3, "seeds", "1,2"));
        assert_eq!(e[1].value, "5");
    }

    #[test]
    fn malformed_lines_rejected() {
        assert_eq!(parse("a=1\nnonsense\n").unwrap_err().line, 2);
        assert_eq!(parse("a=1\na=2\n").unwrap_err().line, 2);
        assert_eq!(parse("=3\n").unwrap_err().line, 1);
    }
}
