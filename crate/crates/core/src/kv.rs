//! Flat `key=value` text shared by config, plan and synthesis spec files.
//! Blank lines and lines starting with `#` are ignored.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct KvError {
    pub line: usize,
    pub message: String,
}

impl KvError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        KvError {
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T, KvError> {
        self.value.parse().map_err(|_| {
            KvError::new(
                self.line,
                format!("invalid value {:?} for {}", self.value, self.key),
            )
        })
    }

    pub fn parse_bool(&self) -> Result<bool, KvError> {
        match self.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(KvError::new(
                self.line,
                format!("{} must be true or false", self.key),
            )),
        }
    }
}

/// Splits text into entries in file order. Keys may repeat; callers decide
/// whether that is allowed.
pub fn parse(text: &str) -> Result<Vec<Entry>, KvError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| KvError::new(i + 1, format!("expected key=value, got {line:?}")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(KvError::new(i + 1, "empty key"));
        }
        out.push(Entry {
            line: i + 1,
            key: key.to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_skips_comments() {
        let e = parse("# c\n\na=1\n b = two \n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].line, e[0].key.as_str(), e[0].value.as_str()), (3, "a", "1"));
        assert_eq!(e[1].value, "two");
        assert_eq!(e[0].parse::<u32>().unwrap(), 1);
        assert!(e[1].parse::<u32>().is_err());
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert_eq!(parse("a=1\nnope\n").unwrap_err().line, 2);
        assert!(parse("=3").is_err());
    }
}
