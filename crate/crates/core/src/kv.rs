//! `key = value` text, one pair per line; `#` starts a comment.

pub(crate) type Entry = (usize, String, String);

/// `(line number, key, value)` triples in file order.
pub(crate) fn parse(text: &str) -> Result<Vec<Entry>, (usize, String)> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| (line, format!("expected key = value, got {body:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err((line, "empty key".into()));
        }
        if let Some((prev, _, _)) = out.iter().find(|(_, pk, _)| pk == k) {
            return Err((line, format!("duplicate key {k:?} (first on line {prev})")));
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub(crate) fn value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, (usize, String)>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e: T::Err| (line, format!("bad value for {key}: {v:?} ({e})")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_blanks_and_errors() {
        let kv = parse("# header\n\na = 1\n b=two # trailing\n").unwrap();
        assert_eq!(kv, vec![(3, "a".into(), "1".into()), (4, "b".into(), "two".into())]);
        assert_eq!(parse("a = 1\nnonsense\n").unwrap_err().0, 2);
        assert_eq!(parse("a = 1\na = 2\n").unwrap_err().0, 2);
        assert!(value::<u32>(7, "a", "x").is_err());
    }
}
