//! Text output of terms (`write/1`, `writeq/1`, `print/1`).

use std::cell::RefCell;
use std::fmt::Write as _;

use crate::reader::{OpType, Ops};
use crate::term::{atoms, Atom, Term};

thread_local! {
    static DEFAULT_OPS: RefCell<Option<Ops>> = const { RefCell::new(None) };
}

#[derive(Clone, Copy)]
pub struct WriteOptions {
    pub quoted: bool,
    pub ignore_ops: bool,
}

pub fn format_term(term: &Term, quoted: bool) -> String {
    DEFAULT_OPS.with(|cell| {
        let mut slot = cell.borrow_mut();
        let ops = slot.get_or_insert_with(Ops::default);
        format_term_with(
            term,
            ops,
            WriteOptions {
                quoted,
                ignore_ops: false,
            },
        )
    })
}

pub fn format_term_with(term: &Term, ops: &Ops, options: WriteOptions) -> String {
    let mut out = String::new();
    Writer { ops, options }.write(&mut out, term, 1200);
    out
}

pub fn format_float(value: f64) -> String {
    if value.is_nan() {
        return "1.5NaN".to_string();
    }
    if value.is_infinite() {
        return if value > 0.0 { "1.0Inf" } else { "-1.0Inf" }.to_string();
    }
    let text = format!("{:?}", value);
    if let Some(pos) = text.find('e') {
        let (mantissa, exponent) = text.split_at(pos);
        if mantissa.contains('.') {
            text
        } else {
            format!("{}.0{}", mantissa, exponent)
        }
    } else if text.contains('.') {
        text
    } else {
        format!("{}.0", text)
    }
}

fn is_letter_atom(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => chars.all(|c| c.is_alphanumeric() || c == '_'),
        _ => false,
    }
}

fn is_symbol_atom(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| "+-*/\\^<>=~:.?@#&$".contains(c))
}

pub fn atom_needs_quotes(name: &str) -> bool {
    if is_letter_atom(name) {
        return false;
    }
    if is_symbol_atom(name) {
        return false;
    }
    !matches!(name, "[]" | "!" | ";" | "{}")
}

pub fn quote_text(text: &str, quote: char) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push(quote);
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

pub fn format_atom(atom: Atom, quoted: bool) -> String {
    let name = atom.name();
    if quoted && atom_needs_quotes(&name) {
        quote_text(&name, '\'')
    } else {
        name.to_string()
    }
}

struct Writer<'a> {
    ops: &'a Ops,
    options: WriteOptions,
}

impl Writer<'_> {
    fn atom_text(&self, atom: Atom) -> String {
        format_atom(atom, self.options.quoted)
    }

    fn push_token(out: &mut String, text: &str) {
        // keep adjacent tokens from fusing into one
        if let (Some(prev), Some(next)) = (out.chars().last(), text.chars().next()) {
            let both_alnum = (prev.is_alphanumeric() || prev == '_')
                && (next.is_alphanumeric() || next == '_');
            let both_symbol = "+-*/\\^<>=~:.?@#&$".contains(prev) && "+-*/\\^<>=~:.?@#&$".contains(next);
            if both_alnum || both_symbol || (prev == ',' && text.starts_with(',')) {
                out.push(' ');
            }
        }
        out.push_str(text);
    }

    fn write(&self, out: &mut String, term: &Term, max_prec: u16) {
        let term = term.deref();
        match &term {
            Term::Var(v) => Self::push_token(out, &format!("_G{}", v.id)),
            Term::Local(i) => Self::push_token(out, &format!("_L{}", i)),
            Term::Int(i) => Self::push_token(out, &i.to_string()),
            Term::BigInt(b) => Self::push_token(out, &b.to_string()),
            Term::Float(f) => Self::push_token(out, &format_float(*f)),
            Term::Str(s) => {
                if self.options.quoted {
                    Self::push_token(out, &quote_text(s, '"'))
                } else {
                    out.push_str(s)
                }
            }
            Term::Atom(a) => {
                let text = self.atom_text(*a);
                let defs = self.ops.get(*a);
                let is_op = defs.prefix.is_some() || defs.infix.is_some() || defs.postfix.is_some();
                let priority = [defs.prefix, defs.infix, defs.postfix]
                    .iter()
                    .flatten()
                    .map(|(p, _)| *p)
                    .max()
                    .unwrap_or(0);
                if is_op && priority > max_prec {
                    out.push('(');
                    out.push_str(&text);
                    out.push(')');
                } else {
                    Self::push_token(out, &text)
                }
            }
            Term::Cmp(c) => {
                if c.name == atoms::DOT && c.args.len() == 2 {
                    self.write_list(out, &term);
                    return;
                }
                if !self.options.ignore_ops && c.args.len() == 1 && c.name.name().as_ref() == "$VAR" {
                    if let Term::Int(n) = c.args[0].deref() {
                        if n >= 0 {
                            let letter = (b'A' + (n % 26) as u8) as char;
                            let name = match n / 26 {
                                0 => letter.to_string(),
                                k => format!("{}{}", letter, k),
                            };
                            Self::push_token(out, &name);
                            return;
                        }
                    }
                }
                if self.options.ignore_ops {
                    self.write_canonical_compound(out, c.name, &c.args);
                    return;
                }
                if c.name == atoms::CURLY && c.args.len() == 1 {
                    out.push('{');
                    self.write(out, &c.args[0], 1200);
                    out.push('}');
                    return;
                }
                let defs = self.ops.get(c.name);
                if c.args.len() == 2 {
                    if let Some((p, kind)) = defs.infix {
                        let (lp, rp) = match kind {
                            OpType::Xfx => (p - 1, p - 1),
                            OpType::Xfy => (p - 1, p),
                            _ => (p, p - 1),
                        };
                        let open = p > max_prec;
                        if open {
                            out.push('(');
                        }
                        self.write(out, &c.args[0], lp);
                        let name = c.name.name();
                        let op_text = self.atom_text(c.name);
                        if name.as_ref() == "," {
                            out.push(',');
                        } else if is_letter_atom(&name) || name.as_ref() == "->" || name.as_ref() == ":-" || name.as_ref() == "-->" {
                            out.push(' ');
                            out.push_str(&op_text);
                            out.push(' ');
                        } else {
                            Self::push_token(out, &op_text);
                        }
                        self.write(out, &c.args[1], rp);
                        if open {
                            out.push(')');
                        }
                        return;
                    }
                }
                if c.args.len() == 1 {
                    if let Some((p, kind)) = defs.prefix {
                        let arg = c.args[0].deref();
                        if c.name != atoms::MINUS && c.name != atoms::PLUS || !arg.is_number() {
                            let ap = match kind {
                                OpType::Fy => p,
                                _ => p - 1,
                            };
                            let open = p > max_prec;
                            if open {
                                out.push('(');
                            }
                            let op_text = self.atom_text(c.name);
                            Self::push_token(out, &op_text);
                            let arg_is_op_atom = matches!(&arg, Term::Atom(a) if {
                                let d = self.ops.get(*a);
                                d.prefix.is_some() || d.infix.is_some()
                            });
                            if is_letter_atom(&c.name.name()) || arg_is_op_atom {
                                out.push(' ');
                            }
                            self.write(out, &arg, ap);
                            if open {
                                out.push(')');
                            }
                            return;
                        }
                    }
                    if let Some((p, _)) = defs.postfix {
                        let open = p > max_prec;
                        if open {
                            out.push('(');
                        }
                        self.write(out, &c.args[0], p - 1);
                        Self::push_token(out, &self.atom_text(c.name));
                        if open {
                            out.push(')');
                        }
                        return;
                    }
                }
                self.write_canonical_compound(out, c.name, &c.args);
            }
        }
    }

    fn write_canonical_compound(&self, out: &mut String, name: Atom, args: &[Term]) {
        Self::push_token(out, &self.atom_text(name));
        out.push('(');
        for (i, arg) in args.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write(out, arg, 999);
        }
        out.push(')');
    }

    fn write_list(&self, out: &mut String, term: &Term) {
        let (items, tail) = term.list_items();
        out.push('[');
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write(out, item, 999);
        }
        if !tail.is_nil() {
            out.push('|');
            self.write(out, &tail, 999);
        }
        out.push(']');
    }
}

/// Writes `term` into `out` the way `print/1` does.
pub fn append_term(out: &mut String, term: &Term, ops: &Ops, options: WriteOptions) {
    let _ = write!(out, "{}", format_term_with(term, ops, options));
}
