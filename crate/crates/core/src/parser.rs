//! Extraction of `<reasoning>`, `<code>` and `<query>` segments from raw
//! completions, plus the structural facts the format rewards read.

use serde::{Deserialize, Serialize};

pub const REASONING_OPEN: &str = "<reasoning>";
pub const REASONING_CLOSE: &str = "</reasoning>";
pub const CODE_OPEN: &str = "<code>";
pub const CODE_CLOSE: &str = "</code>";
pub const QUERY_OPEN: &str = "<query>";
pub const QUERY_CLOSE: &str = "</query>";

/// Tokens that earn xmlcount credit. The closing query tag is not one of them.
pub const REQUIRED_TAGS: [&str; 5] = [
    REASONING_OPEN,
    REASONING_CLOSE,
    CODE_OPEN,
    CODE_CLOSE,
    QUERY_OPEN,
];

const ALL_TAGS: [&str; 6] = [
    REASONING_OPEN,
    REASONING_CLOSE,
    CODE_OPEN,
    CODE_CLOSE,
    QUERY_OPEN,
    QUERY_CLOSE,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default)]
    pub candidate_index: usize,
    #[serde(default)]
    pub problem_id: String,
}

impl Completion {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            candidate_index: 0,
            problem_id: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub required_tag_count: u8,
    pub query_nested_in_code: bool,
    pub strict_match: bool,
    pub soft_extractable: bool,
    /// Characters after the last complete block, surrounding whitespace ignored.
    pub trailing_garbage_length: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCompletion {
    pub reasoning: Option<String>,
    pub code: Option<String>,
    pub query: Option<String>,
    pub report: StructuralReport,
}

impl ParsedCompletion {
    /// Canonical three-block rendering; `None` unless all segments are present.
    pub fn to_template(&self) -> Option<String> {
        Some(render_template(
            self.reasoning.as_deref()?,
            self.code.as_deref()?,
            self.query.as_deref()?,
        ))
    }
}

pub fn render_template(reasoning: &str, code: &str, query: &str) -> String {
    format!(
        "{REASONING_OPEN}{reasoning}{REASONING_CLOSE}\n{CODE_OPEN}{code}{CODE_CLOSE}\n{QUERY_OPEN}{query}{QUERY_CLOSE}"
    )
}

/// Byte span of a block body: (start of body, end of body, end of closing tag).
#[derive(Debug, Clone, Copy)]
struct Block {
    body_start: usize,
    body_end: usize,
    end: usize,
}

/// First `open` and the nearest `close` after it.
fn first_block(text: &str, open: &str, close: &str) -> Option<Block> {
    let start = text.find(open)? + open.len();
    let body_end = start + text[start..].find(close)?;
    Some(Block {
        body_start: start,
        body_end,
        end: body_end + close.len(),
    })
}

fn body(text: &str, block: Block) -> &str {
    &text[block.body_start..block.body_end]
}

pub fn parse(completion: &Completion) -> ParsedCompletion {
    parse_text(&completion.text)
}

pub fn parse_text(text: &str) -> ParsedCompletion {
    let reasoning = first_block(text, REASONING_OPEN, REASONING_CLOSE);
    let code = first_block(text, CODE_OPEN, CODE_CLOSE);
    let query = first_block(text, QUERY_OPEN, QUERY_CLOSE);
    let (required_tag_count, query_nested_in_code) = count_required_tags(text);
    let soft_extractable = code.is_some() && query.is_some();
    let strict_match = detect_strict(text);
    let last_end = [reasoning, code, query]
        .iter()
        .flatten()
        .map(|b| b.end)
        .max();
    let trailing_garbage_length = last_end
        .map(|end| text[end..].trim().chars().count())
        .unwrap_or(0);
    ParsedCompletion {
        reasoning: reasoning.map(|b| body(text, b).to_string()),
        code: code.map(|b| body(text, b).to_string()),
        query: query.map(|b| body(text, b).to_string()),
        report: StructuralReport {
            required_tag_count,
            query_nested_in_code,
            strict_match,
            soft_extractable,
            trailing_garbage_length,
        },
    }
}

/// Distinct required tags present, and whether a `<query>` opens between the
/// first `<code>` and the nearest `</code>` after it.
pub fn count_required_tags(text: &str) -> (u8, bool) {
    let count = REQUIRED_TAGS.iter().filter(|tag| text.contains(*tag)).count() as u8;
    let nested = first_block(text, CODE_OPEN, CODE_CLOSE)
        .map(|b| body(text, b).contains(QUERY_OPEN))
        .unwrap_or(false);
    (count, nested)
}

/// The trimmed text is exactly reasoning, code and query blocks in that
/// order, separated by whitespace only, with no tag inside any body.
pub fn detect_strict(text: &str) -> bool {
    let mut rest = text.trim();
    for (open, close) in [
        (REASONING_OPEN, REASONING_CLOSE),
        (CODE_OPEN, CODE_CLOSE),
        (QUERY_OPEN, QUERY_CLOSE),
    ] {
        rest = rest.trim_start();
        let Some(after_open) = rest.strip_prefix(open) else {
            return false;
        };
        let Some(close_at) = after_open.find(close) else {
            return false;
        };
        let inner = &after_open[..close_at];
        if ALL_TAGS.iter().any(|tag| inner.contains(tag)) {
            return false;
        }
        rest = &after_open[close_at + close.len()..];
    }
    rest.is_empty()
}

/// First complete code body and first complete query body, if both exist.
pub fn extract_soft(text: &str) -> Option<(String, String)> {
    let code = first_block(text, CODE_OPEN, CODE_CLOSE)?;
    let query = first_block(text, QUERY_OPEN, QUERY_CLOSE)?;
    Some((body(text, code).to_string(), body(text, query).to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEMPLATE: &str = "<reasoning>add</reasoning>\n<code>total(X) :- X is 3+4.</code>\n<query>total(X).</query>";

    #[test]
    fn template_is_strict() {
        let p = parse_text(TEMPLATE);
        assert!(p.report.strict_match);
        assert!(p.report.soft_extractable);
        assert_eq!(p.report.required_tag_count, 5);
        assert_eq!(p.reasoning.as_deref(), Some("add"));
        assert_eq!(p.code.as_deref(), Some("total(X) :- X is 3+4."));
        assert_eq!(p.query.as_deref(), Some("total(X)."));
        assert_eq!(p.report.trailing_garbage_length, 0);
    }

    #[test]
    fn chatter_is_soft_only() {
        let p = parse_text("chatter <code>f(1).</code> more chatter <query>f(X).</query>");
        assert!(!p.report.strict_match);
        assert!(p.report.soft_extractable);
        assert_eq!(p.code.as_deref(), Some("f(1)."));
        assert_eq!(p.query.as_deref(), Some("f(X)."));
    }

    #[test]
    fn empty_text_has_nothing() {
        let p = parse_text("");
        assert_eq!(p, ParsedCompletion::default());
    }

    #[test]
    fn tag_counting() {
        assert_eq!(count_required_tags(TEMPLATE), (5, false));
        assert_eq!(count_required_tags("<code><query>Q.</query></code>"), (3, true));
        assert_eq!(count_required_tags("no tags at all"), (0, false));
        assert_eq!(count_required_tags("<code><code><code>"), (1, false));
    }

    #[test]
    fn strict_rejects_prose_and_order() {
        assert!(!detect_strict(&format!("Sure! Here is the answer: {}", TEMPLATE)));
        assert!(!detect_strict(
            "<query>q(X).</query><code>q(1).</code><reasoning>r</reasoning>"
        ));
        assert!(detect_strict(&format!("\n\n  {}\n", TEMPLATE.replace('\n', " \t\n "))));
        assert!(!detect_strict(&format!("{} bye", TEMPLATE)));
    }

    #[test]
    fn soft_extraction_takes_first_blocks() {
        assert_eq!(
            extract_soft("<code>a(1).</code><query>a(X).</query>"),
            Some(("a(1).".into(), "a(X).".into()))
        );
        assert_eq!(extract_soft("<code>a(1)."), None);
        assert_eq!(
            extract_soft("<code>one.</code><code>two.</code><query>q(X).</query>"),
            Some(("one.".into(), "q(X).".into()))
        );
    }

    #[test]
    fn unterminated_query_counts_as_trailing() {
        let p = parse_text("<code>a.</code>\n<query>a(X).");
        assert!(!p.report.soft_extractable);
        assert_eq!(p.report.trailing_garbage_length, "<query>a(X).".len());
    }
}
