//! Plain-text and key/value report serialization.

use std::fmt::Write as _;

/// An ordered key/value document with an accompanying prose summary.
///
/// The key/value form is the machine-readable contract (`key = value`, one
/// pair per line); the prose lines are for humans. Insertion order is
/// preserved so reports are reproducible byte-for-byte.
#[derive(Debug, Default, Clone)]
pub struct KvReport {
    pairs: Vec<(String, String)>,
    prose: Vec<String>,
}

impl KvReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.pairs.push((key.into(), value.to_string()));
    }

    pub fn push_f64(&mut self, key: impl Into<String>, value: f64) {
        self.pairs.push((key.into(), format!("{value:.12e}")));
    }

    pub fn push_bool(&mut self, key: impl Into<String>, value: bool) {
        self.pairs.push((key.into(), value.to_string()));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.prose.push(line.into());
    }

    pub fn extend(&mut self, other: KvReport) {
        self.pairs.extend(other.pairs);
        self.prose.extend(other.prose);
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// The machine-readable rendering: one `key = value` line per pair.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// The human-readable rendering: prose summary followed by the pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.prose {
            let _ = writeln!(out, "{line}");
        }
        if !self.prose.is_empty() && !self.pairs.is_empty() {
            let _ = writeln!(out);
        }
        for (k, v) in &self.pairs {
            let _ = writeln!(out, "  {k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_rendering_preserves_order() {
        let mut r = KvReport::new();
        r.push("b", 1);
        r.push_f64("a", 0.5);
        assert_eq!(r.to_kv_string(), "b = 1\na = 5.000000000000e-1\n");
        assert_eq!(r.get("b"), Some("1"));
    }
}
