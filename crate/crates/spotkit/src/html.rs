//! Minimal tag scanner for the canonical table-HTML subset: lowercase tags,
//! double-quoted attributes, `&amp;`/`&lt;`/`&gt;` entities in text.

/// One scanned HTML item.
#[derive(Debug, Clone, PartialEq)]
pub enum HtmlToken {
    /// `<name attr="v" ...>`
    Open { name: String, attrs: Vec<(String, String)> },
    /// `</name>`
    Close(String),
    /// Unescaped text between tags.
    Text(String),
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum HtmlError {
    #[error("malformed tag at byte {0}")]
    MalformedTag(usize),
    #[error("unterminated entity at byte {0}")]
    BadEntity(usize),
}

pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

fn unescape_text(s: &str, base: usize) -> Result<String, HtmlError> {
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < s.len() {
        let rest = &s[i..];
        if !rest.starts_with('&') {
            let c = rest.chars().next().expect("non-empty rest");
            out.push(c);
            i += c.len_utf8();
            continue;
        }
        let (replacement, len) = if rest.starts_with("&amp;") {
            ('&', 5)
        } else if rest.starts_with("&lt;") {
            ('<', 4)
        } else if rest.starts_with("&gt;") {
            ('>', 4)
        } else {
            return Err(HtmlError::BadEntity(base + i));
        };
        out.push(replacement);
        i += len;
    }
    Ok(out)
}

/// Scan an HTML string into a flat token list.
pub fn scan(html: &str) -> Result<Vec<HtmlToken>, HtmlError> {
    let bytes = html.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let end = html[i..]
                .find('>')
                .map(|o| i + o)
                .ok_or(HtmlError::MalformedTag(i))?;
            let inner = &html[i + 1..end];
            if let Some(name) = inner.strip_prefix('/') {
                tokens.push(HtmlToken::Close(name.trim().to_string()));
            } else {
                let mut parts = inner.split_whitespace();
                let name = parts.next().ok_or(HtmlError::MalformedTag(i))?.to_string();
                let mut attrs = Vec::new();
                for part in parts {
                    let (k, v) = part.split_once('=').ok_or(HtmlError::MalformedTag(i))?;
                    let v = v
                        .strip_prefix('"')
                        .and_then(|v| v.strip_suffix('"'))
                        .ok_or(HtmlError::MalformedTag(i))?;
                    attrs.push((k.to_string(), v.to_string()));
                }
                tokens.push(HtmlToken::Open { name, attrs });
            }
            i = end + 1;
        } else {
            let next = html[i..].find('<').map(|o| i + o).unwrap_or(bytes.len());
            tokens.push(HtmlToken::Text(unescape_text(&html[i..next], i)?));
            i = next;
        }
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scans_tags_attrs_and_text() {
        let toks = scan("<table><tr><td colspan=\"2\">a&amp;b</td></tr></table>").unwrap();
        assert_eq!(
            toks,
            vec![
                HtmlToken::Open { name: "table".into(), attrs: vec![] },
                HtmlToken::Open { name: "tr".into(), attrs: vec![] },
                HtmlToken::Open {
                    name: "td".into(),
                    attrs: vec![("colspan".into(), "2".into())]
                },
                HtmlToken::Text("a&b".into()),
                HtmlToken::Close("td".into()),
                HtmlToken::Close("tr".into()),
                HtmlToken::Close("table".into()),
            ]
        );
    }

    #[test]
    fn escape_round_trip() {
        let s = "a<b>&c";
        let toks = scan(&format!("<td>{}</td>", escape_text(s))).unwrap();
        assert_eq!(toks[1], HtmlToken::Text(s.into()));
    }

    #[test]
    fn rejects_unterminated_tag() {
        assert!(scan("<table").is_err());
    }
}
