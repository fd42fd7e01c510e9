use std::fmt::Display;

/// An ordered list of named values, rendered either for people or as
/// `key<TAB>value` lines for scripts.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub title: String,
    pub entries: Vec<(String, String)>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Report {
            title: title.into(),
            ..Report::default()
        }
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render_text(&self) -> String {
        let width = self.entries.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = format!("{}\n", self.title);
        for (k, v) in &self.entries {
            out.push_str(&format!("  {k:<width$}  {v}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("  note: {n}\n"));
        }
        out
    }

    /// One `key<TAB>value` line per entry. Notes are omitted.
    pub fn render_kv(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_formats() {
        let mut r = Report::new("sizes");
        r.push("bits", 80).push("ratio", 1.5).note("MB = 10^6 bytes");
        assert_eq!(r.render_kv(), "bits\t80\nratio\t1.5\n");
        let text = r.render_text();
        assert!(text.starts_with("sizes\n"));
        assert!(text.contains("  bits   80\n"));
        assert!(text.contains("note: MB"));
        assert_eq!(r.get("ratio"), Some("1.5"));
    }
}
