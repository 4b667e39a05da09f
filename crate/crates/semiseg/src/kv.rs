//! Flat `key = value` text with dotted keys, `#` comments and blank lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{IoError, IoResult};

/// Ordered key-value pairs; keys are unique.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses text; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> IoResult<Self> {
        let mut kv = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| IoError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(err(format!("invalid key `{k}`")));
            }
            if kv.get(k).is_some() {
                return Err(err(format!("duplicate key `{k}`")));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn read(path: &Path) -> IoResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses a command-line `key=value` override.
    pub fn parse_override(s: &str) -> IoResult<(String, String)> {
        match s.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
            _ => Err(IoError::format("--override", format!("expected key=value, found `{s}`"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces, keeping the original position of existing keys.
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").expect("writing to a String cannot fail");
        }
        s
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        std::fs::write(path, self.to_text()).map_err(|e| IoError::io(path, e))
    }
}

impl FromIterator<(String, String)> for KeyValues {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        let mut kv = Self::new();
        for (k, v) in iter {
            kv.set(k, v);
        }
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let kv = KeyValues::parse("# run\nseed = 3\n\ntcn.n_lags=4 \n", Path::new("x")).unwrap();
        assert_eq!(kv.get("seed"), Some("3"));
        assert_eq!(kv.get("tcn.n_lags"), Some("4"));
        assert_eq!(KeyValues::parse(&kv.to_text(), Path::new("x")).unwrap(), kv);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("seed 3", Path::new("x")).is_err());
        assert!(KeyValues::parse("a = 1\na = 2", Path::new("x")).is_err());
        assert!(KeyValues::parse_override("novalue").is_err());
        assert_eq!(KeyValues::parse_override("a.b=c=d").unwrap(), ("a.b".into(), "c=d".into()));
    }
}
