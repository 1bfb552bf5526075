//! Flat `key = value` text shared by schema and config files. Blank lines
//! and lines starting with `#` are skipped.

use anyhow::{bail, Result};

/// Returns `(line number, key, value)` triples in file order.
pub fn parse(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected 'key = value', got '{line}'", i + 1);
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((i + 1, key.to_owned(), value.to_owned()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_trims() {
        let parsed = parse("# c\n\n a = 1 \nb=x = y\n").unwrap();
        assert_eq!(
            parsed,
            vec![(3, "a".into(), "1".into()), (4, "b".into(), "x = y".into())]
        );
    }

    #[test]
    fn rejects_lines_without_equals() {
        let err = parse("a = 1\noops\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
