//! Per-language driver programs and the marker protocol they print.

use super::BackendId;

const PROLOG_DRIVER: &str = include_str!("../../assets/driver.pl");
const LISP_DRIVER: &str = include_str!("../../assets/driver.lisp");

/// Files a run needs in its private directory, plus how to read the answer.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub program: String,
    pub query: String,
    pub driver: String,
    pub nonce: String,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Marker {
    Answer(String),
    Syntax(String),
    Exception(String),
    Fail,
    Unbound,
}

pub(crate) fn new_nonce() -> String {
    format!("{:016x}", rand::random::<u64>())
}

pub(crate) fn prepare(
    backend: BackendId,
    code: &str,
    query: &str,
    nonce: String,
) -> Result<Prepared, String> {
    match backend {
        BackendId::LogicProlog => {
            let query = prolog_query_text(query);
            let answer = last_variable(&query).ok_or("query has no answer variable")?;
            let driver = PROLOG_DRIVER
                .replace("@NONCE@", &nonce)
                .replace("@ANSWER@", &format!("'{}'", answer));
            Ok(Prepared {
                program: code.to_string(),
                query,
                driver,
                nonce,
            })
        }
        BackendId::FunctionalLisp => Ok(Prepared {
            program: code.to_string(),
            query: query.trim().to_string(),
            driver: LISP_DRIVER.replace("@NONCE@", &nonce),
            nonce,
        }),
    }
}

/// Drops a leading `?-` and makes sure the term ends with a full stop.
pub fn prolog_query_text(query: &str) -> String {
    let trimmed = query.trim();
    let body = trimmed.strip_prefix("?-").unwrap_or(trimmed).trim();
    if body.ends_with('.') {
        format!("{}\n", body)
    } else {
        format!("{}.\n", body)
    }
}

/// The answer variable: of the uppercase-initial variables in order of first
/// appearance, the last one. Quoted text and comments are skipped.
pub fn last_variable(query: &str) -> Option<String> {
    let chars: Vec<char> = query.chars().collect();
    let mut seen: Vec<String> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\'' | '"' | '`' => {
                if c == '\'' && i > 0 && chars[i - 1] == '0' && is_number_start(&chars, i - 1) {
                    // 0'c character code
                    i += if chars.get(i + 1) == Some(&'\\') { 3 } else { 2 };
                    continue;
                }
                i += 1;
                while i < chars.len() {
                    if chars[i] == '\\' {
                        i += 2;
                        continue;
                    }
                    if chars[i] == c {
                        if chars.get(i + 1) == Some(&c) {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                i += 1;
            }
            '%' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if chars.get(i + 1) == Some(&'*') => {
                i += 2;
                while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                    i += 1;
                }
                i += 2;
            }
            c if is_word(c) => {
                let start = i;
                while i < chars.len() && is_word(chars[i]) {
                    i += 1;
                }
                if c.is_uppercase() {
                    let name: String = chars[start..i].iter().collect();
                    if !seen.contains(&name) {
                        seen.push(name);
                    }
                }
            }
            _ => i += 1,
        }
    }
    seen.pop()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_number_start(chars: &[char], at: usize) -> bool {
    at == 0 || !is_word(chars[at - 1])
}

/// Finds the first result marker for `nonce` in the captured output.
pub(crate) fn find_marker(stdout: &str, nonce: &str) -> Option<Marker> {
    let prefix = format!("VERDICT_{}_", nonce);
    let end = format!("\n{}END", prefix);
    let mut rest = stdout;
    while let Some(at) = rest.find(&prefix) {
        let after = &rest[at + prefix.len()..];
        let (kind, tail) = after.split_once(' ').unwrap_or((after, ""));
        let payload = tail.find(&end).map(|stop| &tail[..stop]);
        let marker = match (kind, payload) {
            ("ANSWER", Some(p)) => Some(Marker::Answer(p.to_string())),
            ("SYNTAX", Some(p)) => Some(Marker::Syntax(p.to_string())),
            ("EXCEPTION", Some(p)) => Some(Marker::Exception(p.to_string())),
            ("FAIL", Some(_)) => Some(Marker::Fail),
            ("UNBOUND", Some(_)) => Some(Marker::Unbound),
            _ => None,
        };
        if marker.is_some() {
            return marker;
        }
        rest = after;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_variable_is_last_new_variable() {
        assert_eq!(last_variable("total(X)."), Some("X".into()));
        assert_eq!(last_variable("X is 3+4, Y is X*2."), Some("Y".into()));
        assert_eq!(last_variable("sum(A, B), Total is A + B, check(Total, A)."), Some("Total".into()));
        assert_eq!(last_variable("p(Answer, 'Quoted', \"Str\")."), Some("Answer".into()));
        assert_eq!(last_variable("p(X) % Trailing comment"), Some("X".into()));
        assert_eq!(last_variable("p(X, /* Hidden */ 1)."), Some("X".into()));
        assert_eq!(last_variable("foo(bar)."), None);
        assert_eq!(last_variable("p(_, _Skip)."), None);
        assert_eq!(last_variable("X = 0'A."), Some("X".into()));
        assert_eq!(last_variable("X is 1.0E10."), Some("X".into()));
    }

    #[test]
    fn query_text_is_normalized() {
        assert_eq!(prolog_query_text("?- f(X)"), "f(X).\n");
        assert_eq!(prolog_query_text("  f(X).  "), "f(X).\n");
    }

    #[test]
    fn markers_need_the_nonce_and_terminator() {
        let out = "VERDICT_zz_ANSWER 1\nVERDICT_zz_END\nVERDICT_ab_LOADED \nVERDICT_ab_END\nnoise\nVERDICT_ab_ANSWER 42\nVERDICT_ab_END\n";
        assert_eq!(find_marker(out, "ab"), Some(Marker::Answer("42".into())));
        assert_eq!(find_marker("VERDICT_ab_ANSWER 42", "ab"), None);
        assert_eq!(
            find_marker("\nVERDICT_ab_ANSWER a\nb\nVERDICT_ab_END\n", "ab"),
            Some(Marker::Answer("a\nb".into()))
        );
    }
}
