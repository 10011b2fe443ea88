//! Corpus text overlaid with per-character state colors, as HTML or ANSI.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_PALETTE: &str = include_str!("../../data/palette.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Swatch {
    /// `#rrggbb`
    pub background: String,
    /// `#rrggbb`
    pub font: String,
}

impl Swatch {
    fn rgb(hex: &str) -> Result<(u8, u8, u8)> {
        let h = hex
            .strip_prefix('#')
            .filter(|h| h.len() == 6)
            .ok_or_else(|| Error::invalid(format!("color {hex:?} is not #rrggbb")))?;
        let byte = |i: usize| {
            u8::from_str_radix(&h[i..i + 2], 16)
                .map_err(|_| Error::invalid(format!("bad color {hex:?}")))
        };
        Ok((byte(0)?, byte(2)?, byte(4)?))
    }
}

/// Label id → colors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Palette(pub Vec<Swatch>);

impl Default for Palette {
    /// Ten background colors, each with a contrasting font color.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PALETTE).expect("bundled palette parses")
    }
}

impl Palette {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, label: usize) -> Option<&Swatch> {
        self.0.get(label)
    }

    /// One `.s{label}` rule per palette entry.
    pub fn css(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.0.iter().enumerate() {
            let _ = writeln!(
                out,
                ".s{i} {{ background: {}; color: {}; }}",
                s.background, s.font
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColoredText {
    pub chars: Vec<char>,
    pub labels: Vec<usize>,
    pub palette: Palette,
}

impl ColoredText {
    pub fn new(text: &str, labels: Vec<usize>, palette: Palette) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        if chars.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} characters but {} labels",
                chars.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= palette.len()) {
            return Err(Error::invalid(format!(
                "label {l} has no palette entry ({} colors)",
                palette.len()
            )));
        }
        Ok(Self {
            chars,
            labels,
            palette,
        })
    }

    /// The `<pre>` block only, for embedding in a larger page.
    pub fn html_fragment(&self) -> String {
        let mut out = String::with_capacity(self.chars.len() * 24);
        out.push_str("<pre class=\"corpus\">");
        for (&c, &l) in self.chars.iter().zip(&self.labels) {
            if c == '\n' {
                out.push('\n');
                continue;
            }
            let _ = write!(out, "<span class=\"s{l}\">");
            escape_char_into(&mut out, c);
            out.push_str("</span>");
        }
        out.push_str("</pre>");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    Html,
    Ansi,
}

fn escape_char_into(out: &mut String, c: char) {
    match c {
        '&' => out.push_str("&amp;"),
        '<' => out.push_str("&lt;"),
        '>' => out.push_str("&gt;"),
        '"' => out.push_str("&quot;"),
        c if c.is_control() => {
            let _ = write!(out, "&#{};", c as u32);
        }
        c => out.push(c),
    }
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        escape_char_into(&mut out, c);
    }
    out
}

pub fn render_colored_text(ct: &ColoredText, format: TextFormat) -> Result<String> {
    if let Some(&l) = ct.labels.iter().find(|&&l| l >= ct.palette.len()) {
        return Err(Error::invalid(format!("label {l} has no palette entry")));
    }
    match format {
        TextFormat::Html => Ok(format!(
            "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>state coloring</title>\n<style>\npre.corpus {{ font-family: monospace; line-height: 1.3; }}\n{}</style>\n</head>\n<body>\n{}\n</body>\n</html>\n",
            ct.palette.css(),
            ct.html_fragment()
        )),
        TextFormat::Ansi => {
            let mut out = String::with_capacity(ct.chars.len() * 40);
            for (&c, &l) in ct.chars.iter().zip(&ct.labels) {
                if c == '\n' {
                    out.push('\n');
                    continue;
                }
                let s = &ct.palette.0[l];
                let (br, bg, bb) = Swatch::rgb(&s.background)?;
                let (fr, fg, fb) = Swatch::rgb(&s.font)?;
                let _ = write!(out, "\x1b[48;2;{br};{bg};{bb}m\x1b[38;2;{fr};{fg};{fb}m{c}\x1b[0m");
            }
            Ok(out)
        }
    }
}

/// Text content of the colored `<pre>` block: tags dropped, entities decoded.
pub fn strip_html(doc: &str) -> Result<String> {
    let body = match doc.find("<pre class=\"corpus\">") {
        Some(i) => &doc[i..],
        None => doc,
    };
    let body = body.find("</pre>").map_or(body, |end| &body[..end]);
    let mut out = String::with_capacity(body.len() / 8);
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        match c {
            '<' => {
                let end = rest
                    .find('>')
                    .ok_or_else(|| Error::invalid("unterminated tag"))?;
                rest = &rest[end + 1..];
            }
            '&' => {
                let end = rest
                    .find(';')
                    .ok_or_else(|| Error::invalid("unterminated entity"))?;
                let name = &rest[1..end];
                let decoded = match name {
                    "amp" => '&',
                    "lt" => '<',
                    "gt" => '>',
                    "quot" => '"',
                    n => n
                        .strip_prefix('#')
                        .and_then(|d| d.parse::<u32>().ok())
                        .and_then(char::from_u32)
                        .ok_or_else(|| Error::invalid(format!("unknown entity &{n};")))?,
                };
                out.push(decoded);
                rest = &rest[end + 1..];
            }
            c => {
                out.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    Ok(out)
}

/// Removes `ESC [ ... m` sequences.
pub fn strip_ansi(s: &str) -> String {
    let mut out = String::with_capacity(s.len() / 8);
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\x1b' && chars.peek() == Some(&'[') {
            for d in chars.by_ref() {
                if d == 'm' {
                    break;
                }
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_label_shares_class() {
        let ct = ColoredText::new("ab\n", vec![0, 0, 0], Palette::default()).unwrap();
        let html = render_colored_text(&ct, TextFormat::Html).unwrap();
        assert_eq!(html.matches("<span class=\"s0\">").count(), 2);
        assert!(html.contains("<span class=\"s0\">b</span>\n</pre>"));
    }

    #[test]
    fn distinct_labels_get_distinct_classes() {
        let ct = ColoredText::new("xy", vec![3, 7], Palette::default()).unwrap();
        let html = render_colored_text(&ct, TextFormat::Html).unwrap();
        assert!(html.contains("<span class=\"s3\">x</span><span class=\"s7\">y</span>"));
        assert!(html.contains(".s3 {") && html.contains(".s7 {"));
    }

    #[test]
    fn missing_palette_entry_errors() {
        assert!(ColoredText::new("a", vec![10], Palette::default()).is_err());
        let ct = ColoredText {
            chars: vec!['a'],
            labels: vec![2],
            palette: Palette(vec![]),
        };
        assert!(render_colored_text(&ct, TextFormat::Ansi).is_err());
    }

    #[test]
    fn output_is_byte_stable() {
        let ct = ColoredText::new("a<b>&c", vec![0, 1, 2, 3, 4, 5], Palette::default()).unwrap();
        for f in [TextFormat::Html, TextFormat::Ansi] {
            assert_eq!(
                render_colored_text(&ct, f).unwrap(),
                render_colored_text(&ct, f).unwrap()
            );
        }
    }

    proptest! {
        #[test]
        fn stripping_recovers_text(text in "(?s).{0,200}", seed in 0u64..1000) {
            let n = text.chars().count();
            let labels: Vec<usize> = (0..n).map(|i| ((i as u64 * 7 + seed) % 10) as usize).collect();
            let ct = ColoredText::new(&text, labels, Palette::default()).unwrap();
            let html = render_colored_text(&ct, TextFormat::Html).unwrap();
            prop_assert_eq!(strip_html(&html).unwrap(), text.clone());
            if !text.contains('\x1b') {
                let ansi = render_colored_text(&ct, TextFormat::Ansi).unwrap();
                prop_assert_eq!(strip_ansi(&ansi), text);
            }
        }
    }
}
