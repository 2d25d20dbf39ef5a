//! Tokenizer and operator-precedence parser for Prolog clauses.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::Num;

use crate::term::{atoms, Atom, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpType {
    Xfx,
    Xfy,
    Yfx,
    Fy,
    Fx,
    Xf,
    Yf,
}

impl OpType {
    pub fn parse(text: &str) -> Option<OpType> {
        Some(match text {
            "xfx" => OpType::Xfx,
            "xfy" => OpType::Xfy,
            "yfx" => OpType::Yfx,
            "fy" => OpType::Fy,
            "fx" => OpType::Fx,
            "xf" => OpType::Xf,
            "yf" => OpType::Yf,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            OpType::Xfx => "xfx",
            OpType::Xfy => "xfy",
            OpType::Yfx => "yfx",
            OpType::Fy => "fy",
            OpType::Fx => "fx",
            OpType::Xf => "xf",
            OpType::Yf => "yf",
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OpDefs {
    pub prefix: Option<(u16, OpType)>,
    pub infix: Option<(u16, OpType)>,
    pub postfix: Option<(u16, OpType)>,
}

#[derive(Clone)]
pub struct Ops {
    table: HashMap<Atom, OpDefs>,
}

impl Default for Ops {
    fn default() -> Self {
        let mut ops = Ops {
            table: HashMap::new(),
        };
        let defaults: &[(u16, &str, &[&str])] = &[
            (1200, "xfx", &[":-", "-->"]),
            (1200, "fx", &[":-", "?-"]),
            (1100, "xfy", &[";", "|"]),
            (1105, "xfy", &["|"]),
            (1050, "xfy", &["->", "*->"]),
            (1000, "xfy", &[","]),
            (990, "xfx", &[":="]),
            (900, "fy", &["\\+"]),
            (
                700,
                "xfx",
                &[
                    "=", "\\=", "==", "\\==", "@<", "@>", "@=<", "@>=", "=..", "is", "=:=", "=\\=",
                    "<", ">", "=<", ">=", ">:<", ":<", "as",
                ],
            ),
            (700, "xfx", &["#=", "#\\=", "#<", "#>", "#=<", "#>=", "in", "ins"]),
            (600, "xfy", &[":"]),
            (450, "xfx", &[".."]),
            (500, "yfx", &["+", "-", "/\\", "\\/", "xor"]),
            (500, "fx", &["?"]),
            (
                400,
                "yfx",
                &["*", "/", "//", "mod", "rem", "<<", ">>", "div", "rdiv", "divmod"],
            ),
            (200, "xfx", &["**"]),
            (200, "xfy", &["^"]),
            (200, "fy", &["-", "+", "\\"]),
            (100, "yfx", &["."]),
            (1, "fx", &["$"]),
            (
                1150,
                "fx",
                &[
                    "dynamic",
                    "discontiguous",
                    "initialization",
                    "meta_predicate",
                    "module_transparent",
                    "multifile",
                    "public",
                    "thread_local",
                    "table",
                ],
            ),
        ];
        for (priority, kind, names) in defaults {
            let kind = OpType::parse(kind).expect("known op type");
            for name in *names {
                ops.add(*priority, kind, Atom::new(name));
            }
        }
        ops
    }
}

impl Ops {
    pub fn add(&mut self, priority: u16, kind: OpType, name: Atom) {
        let entry = self.table.entry(name).or_default();
        let value = if priority == 0 {
            None
        } else {
            Some((priority, kind))
        };
        match kind {
            OpType::Fx | OpType::Fy => entry.prefix = value,
            OpType::Xf | OpType::Yf => entry.postfix = value,
            _ => entry.infix = value,
        }
    }

    pub fn get(&self, name: Atom) -> OpDefs {
        self.table.get(&name).copied().unwrap_or_default()
    }

    pub fn all(&self) -> Vec<(Atom, u16, OpType)> {
        let mut out = Vec::new();
        for (name, defs) in &self.table {
            for (p, t) in [defs.prefix, defs.infix, defs.postfix].into_iter().flatten() {
                out.push((*name, p, t));
            }
        }
        out.sort_by_key(|(a, p, _)| (a.name().to_string(), *p));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DoubleQuotes {
    Codes,
    Chars,
    Atom,
    String,
}

#[derive(Debug, Clone)]
pub struct SyntaxError {
    pub message: String,
    pub offset: usize,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.offset)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    QuotedName(String),
    Var(String),
    Int(BigInt),
    Float(f64),
    Str(String),
    BackQuote(String),
    Punct(&'static str),
    End,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    layout_before: bool,
    offset: usize,
}

fn is_symbol_char(c: char) -> bool {
    "+-*/\\^<>=~:.?@#&$".contains(c)
}

fn is_alnum(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_char_at(&self, skip: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(skip)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            message: message.into(),
            offset: self.pos,
        })
    }

    /// Skips whitespace and comments; reports whether anything was skipped.
    fn skip_layout(&mut self) -> Result<bool, SyntaxError> {
        let start = self.pos;
        loop {
            match self.peek_char() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('%') => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                Some('/') if self.peek_char_at(1) == Some('*') => {
                    self.pos += 2;
                    match self.src[self.pos..].find("*/") {
                        Some(end) => self.pos += end + 2,
                        None => return self.err("unterminated block comment"),
                    }
                }
                _ => break,
            }
        }
        Ok(self.pos != start)
    }

    fn next(&mut self) -> Result<Token, SyntaxError> {
        let layout_before = self.skip_layout()?;
        let offset = self.pos;
        let tok = self.scan()?;
        Ok(Token {
            tok,
            layout_before,
            offset,
        })
    }

    fn scan(&mut self) -> Result<Tok, SyntaxError> {
        let c = match self.peek_char() {
            None => return Ok(Tok::Eof),
            Some(c) => c,
        };
        if c.is_ascii_digit() {
            return self.scan_number();
        }
        if c == '_' || c.is_uppercase() {
            let start = self.pos;
            while matches!(self.peek_char(), Some(c) if is_alnum(c)) {
                self.bump();
            }
            return Ok(Tok::Var(self.src[start..self.pos].to_string()));
        }
        if c.is_alphabetic() {
            let start = self.pos;
            while matches!(self.peek_char(), Some(c) if is_alnum(c)) {
                self.bump();
            }
            return Ok(Tok::Name(self.src[start..self.pos].to_string()));
        }
        match c {
            '(' => {
                self.bump();
                Ok(Tok::Punct("("))
            }
            ')' => {
                self.bump();
                Ok(Tok::Punct(")"))
            }
            '[' => {
                self.bump();
                Ok(Tok::Punct("["))
            }
            ']' => {
                self.bump();
                Ok(Tok::Punct("]"))
            }
            '{' => {
                self.bump();
                Ok(Tok::Punct("{"))
            }
            '}' => {
                self.bump();
                Ok(Tok::Punct("}"))
            }
            ',' => {
                self.bump();
                Ok(Tok::Punct(","))
            }
            '|' => {
                self.bump();
                if self.peek_char() == Some('|') {
                    self.bump();
                    return Ok(Tok::Name("||".into()));
                }
                Ok(Tok::Punct("|"))
            }
            '!' => {
                self.bump();
                Ok(Tok::Name("!".into()))
            }
            ';' => {
                self.bump();
                Ok(Tok::Name(";".into()))
            }
            '\'' => {
                self.bump();
                let text = self.scan_quoted('\'')?;
                Ok(Tok::QuotedName(text))
            }
            '"' => {
                self.bump();
                let text = self.scan_quoted('"')?;
                Ok(Tok::Str(text))
            }
            '`' => {
                self.bump();
                let text = self.scan_quoted('`')?;
                Ok(Tok::BackQuote(text))
            }
            '.' => {
                match self.peek_char_at(1) {
                    None => {
                        self.bump();
                        return Ok(Tok::End);
                    }
                    Some(n) if n.is_whitespace() || n == '%' => {
                        self.bump();
                        return Ok(Tok::End);
                    }
                    _ => {}
                }
                self.scan_symbol()
            }
            c if is_symbol_char(c) => self.scan_symbol(),
            other => self.err(format!("illegal character `{}`", other)),
        }
    }

    fn scan_symbol(&mut self) -> Result<Tok, SyntaxError> {
        let start = self.pos;
        while matches!(self.peek_char(), Some(c) if is_symbol_char(c)) {
            self.bump();
        }
        Ok(Tok::Name(self.src[start..self.pos].to_string()))
    }

    fn scan_digits(&mut self, radix: u32) -> String {
        let mut digits = String::new();
        loop {
            match self.peek_char() {
                Some(c) if c.is_digit(radix) => {
                    digits.push(c);
                    self.bump();
                }
                Some('_')
                    if !digits.is_empty()
                        && self.peek_char_at(1).map(|n| n.is_digit(radix)) == Some(true) =>
                {
                    self.bump();
                }
                _ => break,
            }
        }
        digits
    }

    fn scan_number(&mut self) -> Result<Tok, SyntaxError> {
        if self.peek_char() == Some('0') {
            match self.peek_char_at(1) {
                Some('\'') => {
                    // 0'c character code
                    self.pos += 2;
                    let c = match self.peek_char() {
                        Some('\\') => match self.scan_escape('\'')? {
                            Some(c) => c,
                            None => return self.err("bad escape in character code"),
                        },
                        Some('\'') => {
                            self.bump();
                            if self.peek_char() == Some('\'') {
                                self.bump();
                            }
                            '\''
                        }
                        Some(c) => {
                            self.bump();
                            c
                        }
                        None => return self.err("unexpected end of file"),
                    };
                    return Ok(Tok::Int(BigInt::from(c as u32)));
                }
                Some(r @ ('x' | 'o' | 'b')) => {
                    let radix = match r {
                        'x' => 16,
                        'o' => 8,
                        _ => 2,
                    };
                    if self.peek_char_at(2).map(|d| d.is_digit(radix)) == Some(true) {
                        self.pos += 2;
                        let digits = self.scan_digits(radix);
                        let value = BigInt::from_str_radix(&digits, radix)
                            .map_err(|_| SyntaxError {
                                message: "bad number".into(),
                                offset: self.pos,
                            })?;
                        return Ok(Tok::Int(value));
                    }
                }
                _ => {}
            }
        }
        let int_digits = self.scan_digits(10);
        let mut is_float = false;
        let mut text = int_digits.clone();
        if self.peek_char() == Some('.') && self.peek_char_at(1).map(|d| d.is_ascii_digit()) == Some(true)
        {
            self.bump();
            text.push('.');
            text.push_str(&self.scan_digits(10));
            is_float = true;
        }
        if matches!(self.peek_char(), Some('e' | 'E')) {
            let save = self.pos;
            self.bump();
            let mut exp = String::from("e");
            if let Some(sign @ ('+' | '-')) = self.peek_char() {
                exp.push(sign);
                self.bump();
            }
            if self.peek_char().map(|d| d.is_ascii_digit()) == Some(true) {
                exp.push_str(&self.scan_digits(10));
                text.push_str(&exp);
                is_float = true;
            } else {
                self.pos = save;
            }
        }
        if is_float {
            if self.src[self.pos..].starts_with("Inf") {
                self.pos += 3;
                return Ok(Tok::Float(f64::INFINITY));
            }
            if self.src[self.pos..].starts_with("NaN") {
                self.pos += 3;
                return Ok(Tok::Float(f64::NAN));
            }
            let value: f64 = text.parse().map_err(|_| SyntaxError {
                message: "bad float".into(),
                offset: self.pos,
            })?;
            return Ok(Tok::Float(value));
        }
        let value = BigInt::from_str_radix(&int_digits, 10).map_err(|_| SyntaxError {
            message: "bad integer".into(),
            offset: self.pos,
        })?;
        Ok(Tok::Int(value))
    }

    /// Reads an escape sequence after a backslash; `None` for a line continuation.
    fn scan_escape(&mut self, _quote: char) -> Result<Option<char>, SyntaxError> {
        self.bump(); // backslash
        let c = match self.bump() {
            Some(c) => c,
            None => return self.err("unexpected end of file in escape"),
        };
        let out = match c {
            'n' => '\n',
            't' => '\t',
            'r' => '\r',
            'a' => '\x07',
            'b' => '\x08',
            'f' => '\x0c',
            'v' => '\x0b',
            'e' => '\x1b',
            's' => ' ',
            'z' => return self.err("unsupported escape \\z"),
            '0'..='7' => {
                let mut digits = String::from(c);
                while let Some(d @ '0'..='7') = self.peek_char() {
                    digits.push(d);
                    self.bump();
                }
                if self.peek_char() == Some('\\') {
                    self.bump();
                }
                let code = u32::from_str_radix(&digits, 8).unwrap_or(0);
                return char::from_u32(code)
                    .map(Some)
                    .ok_or_else(|| SyntaxError {
                        message: "bad octal escape".into(),
                        offset: self.pos,
                    });
            }
            'x' => {
                let mut digits = String::new();
                while let Some(d) = self.peek_char() {
                    if d.is_ascii_hexdigit() {
                        digits.push(d);
                        self.bump();
                    } else {
                        break;
                    }
                }
                if self.peek_char() == Some('\\') {
                    self.bump();
                }
                let code = u32::from_str_radix(&digits, 16).unwrap_or(0);
                return char::from_u32(code)
                    .map(Some)
                    .ok_or_else(|| SyntaxError {
                        message: "bad hex escape".into(),
                        offset: self.pos,
                    });
            }
            '\n' => return Ok(None),
            '\\' | '\'' | '"' | '`' => c,
            other => return self.err(format!("undefined escape \\{}", other)),
        };
        Ok(Some(out))
    }

    fn scan_quoted(&mut self, quote: char) -> Result<String, SyntaxError> {
        let mut out = String::new();
        loop {
            match self.peek_char() {
                None => return self.err("unterminated quoted"),
                Some(c) if c == quote => {
                    self.bump();
                    if self.peek_char() == Some(quote) {
                        self.bump();
                        out.push(quote);
                    } else {
                        return Ok(out);
                    }
                }
                Some('\\') => {
                    if let Some(c) = self.scan_escape(quote)? {
                        out.push(c);
                    }
                }
                Some(c) => {
                    self.bump();
                    out.push(c);
                }
            }
        }
    }
}

/// Result of reading one clause: the term and its named variables in order
/// of first appearance.
pub struct ReadTerm {
    pub term: Term,
    pub variable_names: Vec<(String, Term)>,
    pub singletons: Vec<String>,
}

pub struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<Token>,
    ops: &'a Ops,
    double_quotes: DoubleQuotes,
    var_map: Vec<(String, Term, usize)>,
    at_end: bool,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str, start: usize, ops: &'a Ops, double_quotes: DoubleQuotes) -> Self {
        Parser {
            lexer: Lexer { src, pos: start },
            peeked: None,
            at_end: false,
            ops,
            double_quotes,
            var_map: Vec::new(),
        }
    }

    /// Byte offset just past the last consumed token.
    pub fn position(&self) -> usize {
        match &self.peeked {
            Some(t) => t.offset,
            None => self.lexer.pos,
        }
    }

    fn peek(&mut self) -> Result<&Token, SyntaxError> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lexer.next()?);
        }
        Ok(self.peeked.as_ref().expect("peeked"))
    }

    fn advance(&mut self) -> Result<Token, SyntaxError> {
        let token = match self.peeked.take() {
            Some(t) => t,
            None => self.lexer.next()?,
        };
        self.at_end = matches!(token.tok, Tok::End | Tok::Eof);
        Ok(token)
    }

    fn err<T>(&self, message: impl Into<String>, offset: usize) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            message: message.into(),
            offset,
        })
    }

    /// Reads the next clause; `Ok(None)` at end of input.
    pub fn read_clause(&mut self) -> Result<Option<ReadTerm>, SyntaxError> {
        self.var_map.clear();
        self.at_end = false;
        if matches!(self.peek()?.tok, Tok::Eof) {
            return Ok(None);
        }
        let (term, _) = self.parse(1200)?;
        let next = self.advance()?;
        match next.tok {
            Tok::End => {}
            Tok::Eof => return self.err("operator expected (missing final `.`)", next.offset),
            _ => return self.err("operator expected", next.offset),
        }
        let variable_names = self
            .var_map
            .iter()
            .map(|(n, t, _)| (n.clone(), t.clone()))
            .collect();
        let singletons = self
            .var_map
            .iter()
            .filter(|(n, _, count)| *count == 1 && !n.starts_with('_'))
            .map(|(n, _, _)| n.clone())
            .collect();
        Ok(Some(ReadTerm {
            term,
            variable_names,
            singletons,
        }))
    }

    /// Skips tokens up to and including the next clause terminator.
    pub fn recover(&mut self) {
        // the terminator that triggered the error already ends the clause
        if self.at_end || matches!(self.peeked.as_ref().map(|t| &t.tok), Some(Tok::End | Tok::Eof)) {
            self.peeked = None;
            self.at_end = false;
            return;
        }
        self.peeked = None;
        loop {
            match self.lexer.next() {
                Ok(Token { tok: Tok::End, .. }) | Ok(Token { tok: Tok::Eof, .. }) => return,
                Ok(_) => {}
                Err(_) => {
                    // skip the offending character and keep scanning
                    if self.lexer.bump().is_none() {
                        return;
                    }
                }
            }
        }
    }

    fn variable(&mut self, name: &str) -> Term {
        if name == "_" {
            return Term::fresh_var();
        }
        if let Some(entry) = self.var_map.iter_mut().find(|(n, _, _)| n == name) {
            entry.2 += 1;
            return entry.1.clone();
        }
        let v = Term::fresh_var();
        self.var_map.push((name.to_string(), v.clone(), 1));
        v
    }

    fn quoted_text(&self, text: &str, mode: DoubleQuotes) -> Term {
        match mode {
            DoubleQuotes::String => Term::string(text),
            DoubleQuotes::Atom => Term::atom(text),
            DoubleQuotes::Codes => {
                Term::list_from(text.chars().map(|c| Term::Int(c as i64)).collect())
            }
            DoubleQuotes::Chars => Term::list_from(
                text.chars()
                    .map(|c| Term::Atom(Atom::new(&c.to_string())))
                    .collect(),
            ),
        }
    }

    fn name_atom(tok: &Tok) -> Option<&str> {
        match tok {
            Tok::Name(n) | Tok::QuotedName(n) => Some(n),
            Tok::Punct(",") => Some(","),
            Tok::Punct("|") => Some("|"),
            _ => None,
        }
    }

    /// Whether the token can begin a term (used to decide if a prefix
    /// operator has an operand).
    fn starts_term(&self, tok: &Token, next_is_paren: bool) -> bool {
        match &tok.tok {
            Tok::Int(_)
            | Tok::Float(_)
            | Tok::Var(_)
            | Tok::Str(_)
            | Tok::BackQuote(_)
            | Tok::QuotedName(_) => true,
            Tok::Punct(p) => matches!(*p, "(" | "[" | "{"),
            Tok::Name(n) => {
                let defs = self.ops.get(Atom::new(n));
                if defs.infix.is_some() || defs.postfix.is_some() {
                    defs.prefix.is_some() || next_is_paren
                } else {
                    true
                }
            }
            Tok::End | Tok::Eof => false,
        }
    }

    fn parse_arglist(&mut self) -> Result<Vec<Term>, SyntaxError> {
        let mut args = Vec::new();
        loop {
            let (arg, _) = self.parse(999)?;
            args.push(arg);
            let t = self.advance()?;
            match t.tok {
                Tok::Punct(",") => continue,
                Tok::Punct(")") => return Ok(args),
                _ => return self.err("expected `,` or `)` in arguments", t.offset),
            }
        }
    }

    fn parse_primary(&mut self, max_prec: u16) -> Result<(Term, u16), SyntaxError> {
        let token = self.advance()?;
        match token.tok {
            Tok::Int(i) => Ok((Term::integer(i), 0)),
            Tok::Float(f) => Ok((Term::Float(f), 0)),
            Tok::Var(name) => Ok((self.variable(&name), 0)),
            Tok::Str(s) => Ok((self.quoted_text(&s, self.double_quotes), 0)),
            Tok::BackQuote(s) => Ok((self.quoted_text(&s, DoubleQuotes::Codes), 0)),
            Tok::Punct("(") => {
                let (t, _) = self.parse(1200)?;
                self.expect(")")?;
                Ok((t, 0))
            }
            Tok::Punct("[") => {
                if matches!(self.peek()?.tok, Tok::Punct("]")) {
                    self.advance()?;
                    return self.after_name("[]".to_string(), false, max_prec, token.offset);
                }
                let mut items = Vec::new();
                loop {
                    let (item, _) = self.parse(999)?;
                    items.push(item);
                    let t = self.advance()?;
                    match t.tok {
                        Tok::Punct(",") => continue,
                        Tok::Punct("|") => {
                            let (tail, _) = self.parse(999)?;
                            self.expect("]")?;
                            return Ok((Term::list_with_tail(items, tail), 0));
                        }
                        Tok::Punct("]") => return Ok((Term::list_from(items), 0)),
                        _ => return self.err("expected `,`, `|` or `]` in list", t.offset),
                    }
                }
            }
            Tok::Punct("{") => {
                if matches!(self.peek()?.tok, Tok::Punct("}")) {
                    self.advance()?;
                    return self.after_name("{}".to_string(), false, max_prec, token.offset);
                }
                let (t, _) = self.parse(1200)?;
                self.expect("}")?;
                Ok((Term::compound(atoms::CURLY, vec![t]), 0))
            }
            Tok::Name(name) => self.after_name(name, false, max_prec, token.offset),
            Tok::QuotedName(name) => self.after_name(name, true, max_prec, token.offset),
            Tok::Punct(",") => self.err("unexpected `,`", token.offset),
            Tok::Punct("|") => self.err("unexpected `|`", token.offset),
            Tok::Punct(p) => self.err(format!("unexpected `{}`", p), token.offset),
            Tok::End => self.err("unexpected end of clause", token.offset),
            Tok::Eof => self.err("unexpected end of file", token.offset),
        }
    }

    fn after_name(
        &mut self,
        name: String,
        quoted: bool,
        max_prec: u16,
        offset: usize,
    ) -> Result<(Term, u16), SyntaxError> {
        let next = self.peek()?.clone();
        // functional notation: name immediately followed by '('
        if matches!(next.tok, Tok::Punct("(")) && !next.layout_before {
            self.advance()?;
            let args = self.parse_arglist()?;
            return Ok((Term::compound(Atom::new(&name), args), 0));
        }
        // negative numeric literal
        if name == "-" && !quoted && !next.layout_before {
            match next.tok {
                Tok::Int(ref i) => {
                    let value = -i.clone();
                    self.advance()?;
                    return Ok((Term::integer(value), 0));
                }
                Tok::Float(f) => {
                    self.advance()?;
                    return Ok((Term::Float(-f), 0));
                }
                _ => {}
            }
        }
        let atom = Atom::new(&name);
        if !quoted {
            if let Some((priority, kind)) = self.ops.get(atom).prefix {
                let after_next_paren = matches!(next.tok, Tok::Name(_))
                    && {
                        // lookahead two tokens is unavailable; approximate with
                        // the raw source character following the name token
                        let rest = &self.lexer.src[self.lexer.pos..];
                        rest.starts_with('(')
                    };
                if self.starts_term(&next, after_next_paren) {
                    let mut priority = priority;
                    if priority > max_prec {
                        priority = 999.min(max_prec);
                    }
                    let arg_max = match kind {
                        OpType::Fy => priority,
                        _ => priority.saturating_sub(1),
                    };
                    let (arg, _) = self.parse(arg_max)?;
                    return Ok((Term::compound(atom, vec![arg]), priority));
                }
            }
        }
        let _ = offset;
        Ok((Term::Atom(atom), 0))
    }

    fn expect(&mut self, punct: &'static str) -> Result<(), SyntaxError> {
        let t = self.advance()?;
        if t.tok == Tok::Punct(punct) {
            Ok(())
        } else {
            self.err(format!("expected `{}`", punct), t.offset)
        }
    }

    pub fn parse(&mut self, max_prec: u16) -> Result<(Term, u16), SyntaxError> {
        let (mut left, mut left_prec) = self.parse_primary(max_prec)?;
        loop {
            let next = self.peek()?.clone();
            let name = match Self::name_atom(&next.tok) {
                Some(n) => n.to_string(),
                None => break,
            };
            let atom = Atom::new(&name);
            let defs = self.ops.get(atom);
            if let Some((priority, kind)) = defs.infix {
                let (left_max, right_max) = match kind {
                    OpType::Xfx => (priority - 1, priority - 1),
                    OpType::Xfy => (priority - 1, priority),
                    _ => (priority, priority - 1),
                };
                if priority <= max_prec && left_prec <= left_max {
                    self.advance()?;
                    let (right, _) = self.parse(right_max)?;
                    let functor = if name == "|" { atoms::SEMI } else { atom };
                    left = Term::compound(functor, vec![left, right]);
                    left_prec = priority;
                    continue;
                }
            }
            if let Some((priority, kind)) = defs.postfix {
                let left_max = match kind {
                    OpType::Yf => priority,
                    _ => priority - 1,
                };
                if priority <= max_prec && left_prec <= left_max {
                    self.advance()?;
                    left = Term::compound(atom, vec![left]);
                    left_prec = priority;
                    continue;
                }
            }
            break;
        }
        Ok((left, left_prec))
    }
}

/// Parses a single term from text (a terminating `.` is optional).
pub fn parse_term_text(
    text: &str,
    ops: &Ops,
    double_quotes: DoubleQuotes,
) -> Result<ReadTerm, SyntaxError> {
    let trimmed = text.trim_end();
    let owned;
    let source = if trimmed.ends_with('.') && !trimmed.ends_with("..") {
        trimmed
    } else {
        owned = format!("{} .", trimmed);
        &owned
    };
    let mut parser = Parser::new(source, 0, ops, double_quotes);
    match parser.read_clause()? {
        Some(rt) => {
            if !matches!(parser.peek()?.tok, Tok::Eof) {
                return Err(SyntaxError {
                    message: "end of term expected".into(),
                    offset: parser.position(),
                });
            }
            Ok(rt)
        }
        None => Err(SyntaxError {
            message: "empty term".into(),
            offset: 0,
        }),
    }
}
