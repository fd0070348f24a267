//! Flat `key = value` text files. `#` starts a comment line; blank lines are
//! ignored; keys keep their file order.

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvFile {
    pub entries: Vec<Entry>,
}

impl KvFile {
    pub fn parse(src: &str) -> Result<KvFile, String> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(format!("line {}: expected `key = value`, got {raw:?}", i + 1));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(format!("line {}: empty key", i + 1));
            }
            if !seen.insert(key.clone()) {
                return Err(format!("line {}: duplicate key {key}", i + 1));
            }
            entries.push(Entry {
                key,
                value: v.trim().to_string(),
                line: i + 1,
            });
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    /// Sets or replaces `key`.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value.to_string(),
            None => self.entries.push(Entry {
                key: key.to_string(),
                value: value.to_string(),
                line: 0,
            }),
        }
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), String> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| format!("override {o:?} is not key=value"))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| format!("{key} = {v:?}: {e}")),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|e| format!("{} = {}\n", e.key, e.value)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_order() {
        let f = KvFile::parse("# c\nb = 2\n\na=x y = z\n").unwrap();
        assert_eq!(f.entries.len(), 2);
        assert_eq!(f.entries[0].key, "b");
        assert_eq!(f.get("a"), Some("x y = z"));
        assert_eq!(f.parsed::<u32>("b").unwrap(), Some(2));
        assert!(f.parsed::<u32>("a").is_err());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KvFile::parse("just words").unwrap_err().contains("line 1"));
        assert!(KvFile::parse("a = 1\na = 2").unwrap_err().contains("duplicate"));
        assert!(KvFile::parse(" = 1").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut f = KvFile::parse("a = 1").unwrap();
        f.apply_overrides(&["a=2".into(), "b = 3".into()]).unwrap();
        assert_eq!(f.get("a"), Some("2"));
        assert_eq!(f.get("b"), Some("3"));
        assert!(f.apply_overrides(&["nope".into()]).is_err());
    }
}
