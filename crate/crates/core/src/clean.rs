//! HTML page cleanup: boilerplate removal and paragraph extraction.
//!
//! Only text inside `<p>` elements survives. Anything inside a
//! [`REMOVED_ELEMENTS`] element is dropped, even when it is itself a
//! paragraph. Each paragraph becomes one line with whitespace collapsed;
//! empty paragraphs are skipped.
//!
//! Parsing goes through html5ever (via `scraper`), which recovers from any
//! malformed input the same way browsers do, so cleaning never fails.

use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;

/// Elements whose whole subtree is discarded.
pub const REMOVED_ELEMENTS: &[&str] = &["aside", "footer", "header", "nav", "noscript", "script", "style"];

/// Phrasing elements that never separate words; every other element inside
/// a paragraph (`<br>`, embedded blocks) acts as a word boundary.
const INLINE_ELEMENTS: &[&str] = &[
    "a", "abbr", "b", "bdi", "bdo", "cite", "code", "data", "dfn", "em", "font", "i", "kbd", "mark",
    "q", "s", "samp", "small", "span", "strong", "sub", "sup", "time", "u", "var",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedSnippet {
    pub source_url: String,
    pub text: String,
    pub source_rank: u32,
}

pub fn clean(doc: &RawDocument) -> CleanedSnippet {
    CleanedSnippet {
        source_url: doc.url.clone(),
        text: extract_paragraph_text(&doc.html),
        source_rank: doc.rank,
    }
}

/// Cleans every document, preserving order and dropping empty results.
pub fn clean_all(docs: &[RawDocument]) -> Vec<CleanedSnippet> {
    docs.iter().map(clean).filter(|s| !s.text.is_empty()).collect()
}

fn is_removed(name: &str) -> bool {
    REMOVED_ELEMENTS.iter().any(|r| name.eq_ignore_ascii_case(r))
}

/// Paragraph text of an HTML string, one paragraph per line.
pub fn extract_paragraph_text(html: &str) -> String {
    let document = Html::parse_document(html);
    let paragraphs = Selector::parse("p").expect("static selector");

    let mut lines = Vec::new();
    for p in document.select(&paragraphs) {
        let inside_removed = p
            .ancestors()
            .filter_map(|n| n.value().as_element())
            .any(|el| is_removed(el.name()));
        if inside_removed {
            continue;
        }
        let mut raw = String::new();
        collect_text(p, &mut raw);
        let line = normalize_line(&raw);
        if !line.is_empty() {
            lines.push(line);
        }
    }
    lines.join("\n")
}

fn collect_text(element: ElementRef<'_>, out: &mut String) {
    for child in element.children() {
        match child.value() {
            Node::Text(text) => out.push_str(text),
            Node::Element(el) if is_removed(el.name()) => {}
            Node::Element(el) => {
                let inline = INLINE_ELEMENTS.contains(&el.name());
                if !inline {
                    out.push(' ');
                }
                if let Some(child) = ElementRef::wrap(child) {
                    collect_text(child, out);
                }
                if !inline {
                    out.push(' ');
                }
            }
            _ => {}
        }
    }
}

/// Serializes cleaned text back to HTML, one `<p>` per line. Cleaning the
/// result gives the same text back.
pub fn to_paragraph_html(text: &str) -> String {
    text.lines()
        .map(|line| format!("<p>{}</p>", line.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")))
        .collect()
}

/// Collapses every whitespace run to one space, drops angle brackets, trims.
fn normalize_line(raw: &str) -> String {
    let mut line = String::with_capacity(raw.len());
    for word in raw.split(|c: char| c.is_whitespace() || c == '<' || c == '>') {
        if word.is_empty() {
            continue;
        }
        if !line.is_empty() {
            line.push(' ');
        }
        line.push_str(word);
    }
    line
}
