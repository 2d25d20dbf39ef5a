//! Built-in predicates implemented natively.

use std::cmp::Ordering;
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::rc::Rc;

use num_bigint::BigInt;
use rustc_hash::FxHashMap;

use crate::arith::{compare_num, eval, Num};
use crate::engine::{Machine, Stream, StreamKind};
use crate::error::{
    domain_error, existence_error, indicator, instantiation_error, permission_error,
    representation_error, syntax_error, type_error, Flow, Res,
};
use crate::reader::{parse_term_text, DoubleQuotes, OpType, Parser};
use crate::term::{atoms, Atom, Term, VarRef};
use crate::writer::{format_float, format_term_with, WriteOptions};

pub type DetFn = fn(&mut Machine, &[Term]) -> Res<bool>;
pub type Alternatives = Option<(Term, Box<dyn Iterator<Item = Term>>)>;
pub type NonDetFn = fn(&mut Machine, &[Term]) -> Res<Alternatives>;
pub type GoalFn = fn(&mut Machine, &[Term]) -> Res<Term>;

#[derive(Clone, Copy)]
pub enum Builtin {
    Det(DetFn),
    NonDet(NonDetFn),
    /// Rewrites into a goal that is called opaquely to cut.
    Goal(GoalFn),
}

pub fn table() -> FxHashMap<(Atom, usize), Builtin> {
    let mut t: FxHashMap<(Atom, usize), Builtin> = FxHashMap::default();
    let mut det = |name: &str, arity: usize, f: DetFn| {
        t.insert((Atom::new(name), arity), Builtin::Det(f));
    };
    // type checks
    det("var", 1, |_, a| Ok(matches!(a[0].deref(), Term::Var(_))));
    det("nonvar", 1, |_, a| Ok(!matches!(a[0].deref(), Term::Var(_))));
    det("atom", 1, |_, a| Ok(matches!(a[0].deref(), Term::Atom(_))));
    det("number", 1, |_, a| Ok(a[0].deref().is_number()));
    det("integer", 1, |_, a| {
        Ok(matches!(a[0].deref(), Term::Int(_) | Term::BigInt(_)))
    });
    det("float", 1, |_, a| Ok(matches!(a[0].deref(), Term::Float(_))));
    det("atomic", 1, |_, a| Ok(a[0].deref().is_atomic()));
    det("compound", 1, |_, a| Ok(matches!(a[0].deref(), Term::Cmp(_))));
    det("callable", 1, |_, a| Ok(a[0].deref().is_callable()));
    det("is_list", 1, |_, a| Ok(a[0].proper_list().is_some()));
    det("string", 1, |_, a| Ok(matches!(a[0].deref(), Term::Str(_))));
    det("text", 1, |_, a| {
        Ok(matches!(a[0].deref(), Term::Str(_) | Term::Atom(_)))
    });
    det("ground", 1, |_, a| Ok(term_variables(&a[0]).is_empty()));
    det("is_dict", 1, |_, _| Ok(false));

    // unification and comparison
    det("=", 2, |m, a| Ok(m.unify(&a[0], &a[1])));
    det("\\=", 2, |m, a| Ok(!m.unifiable(&a[0], &a[1])));
    det("unify_with_occurs_check", 2, |m, a| {
        let saved = m.flags.occurs_check;
        m.flags.occurs_check = true;
        let ok = m.unify(&a[0], &a[1]);
        m.flags.occurs_check = saved;
        Ok(ok)
    });
    det("==", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) == Ordering::Equal));
    det("\\==", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) != Ordering::Equal));
    det("@<", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) == Ordering::Less));
    det("@>", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) == Ordering::Greater));
    det("@=<", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) != Ordering::Greater));
    det("@>=", 2, |_, a| Ok(compare_terms(&a[0], &a[1]) != Ordering::Less));
    det("compare", 3, |m, a| {
        let order = match compare_terms(&a[1], &a[2]) {
            Ordering::Less => "<",
            Ordering::Equal => "=",
            Ordering::Greater => ">",
        };
        Ok(m.unify(&a[0], &Term::atom(order)))
    });
    det("?=", 2, |m, a| {
        Ok(compare_terms(&a[0], &a[1]) == Ordering::Equal || !m.unifiable(&a[0], &a[1]))
    });

    // arithmetic
    det("is", 2, |m, a| {
        let value = eval(&a[1])?;
        Ok(m.unify(&a[0], &value.to_term()))
    });
    det("=:=", 2, |_, a| Ok(num_cmp(a)? == Ordering::Equal));
    det("=\\=", 2, |_, a| Ok(num_cmp(a)? != Ordering::Equal));
    det("<", 2, |_, a| Ok(num_cmp(a)? == Ordering::Less));
    det(">", 2, |_, a| Ok(num_cmp(a)? == Ordering::Greater));
    det("=<", 2, |_, a| Ok(num_cmp(a)? != Ordering::Greater));
    det(">=", 2, |_, a| Ok(num_cmp(a)? != Ordering::Less));
    det("succ", 2, builtin_succ);
    det("plus", 3, builtin_plus);

    // term construction and inspection
    det("functor", 3, builtin_functor);
    det("=..", 2, builtin_univ);
    det("copy_term", 2, |m, a| {
        let copy = copy_term(&a[0]);
        Ok(m.unify(&a[1], &copy))
    });
    det("term_variables", 2, |m, a| {
        let vars = term_variables(&a[0]);
        Ok(m.unify(&a[1], &Term::list_from(vars)))
    });
    det("setarg", 3, |_, _| Err(permission_error("modify", "term", Term::atom("setarg"))));

    // atoms and strings
    det("atom_codes", 2, |m, a| text_to_list(m, a, TextKind::Atom, ListKind::Codes));
    det("atom_chars", 2, |m, a| text_to_list(m, a, TextKind::Atom, ListKind::Chars));
    det("char_code", 2, builtin_char_code);
    det("atom_length", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::Int(text.chars().count() as i64)))
    });
    det("string_length", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::Int(text.chars().count() as i64)))
    });
    det("atom_number", 2, builtin_atom_number);
    det("number_string", 2, |m, a| {
        match a[1].deref() {
            Term::Var(_) => {
                let n = a[0].deref();
                if !n.is_number() {
                    return Err(instantiation_error());
                }
                let text = m.format(&n, false);
                Ok(m.unify(&a[1], &Term::string(&text)))
            }
            _ => {
                let text = text_of(&a[1])?;
                match parse_number(m, text.trim()) {
                    Some(n) => Ok(m.unify(&a[0], &n)),
                    None => Err(syntax_error("illegal_number")),
                }
            }
        }
    });
    det("number_codes", 2, |m, a| number_to_list(m, a, ListKind::Codes));
    det("number_chars", 2, |m, a| number_to_list(m, a, ListKind::Chars));
    det("atom_string", 2, |m, a| match a[0].deref() {
        Term::Var(_) => {
            let text = text_of(&a[1])?;
            Ok(m.unify(&a[0], &Term::atom(&text)))
        }
        t => {
            let text = text_of(&t)?;
            Ok(m.unify(&a[1], &Term::string(&text)))
        }
    });
    det("atom_to_term", 3, |m, a| {
        let text = text_of(&a[0])?;
        let read = parse_term_text(&text, &m.ops, m.flags.double_quotes)
            .map_err(|e| syntax_error(&e.message))?;
        let bindings = Term::list_from(
            read.variable_names
                .iter()
                .map(|(n, v)| Term::compound(atoms::EQUALS, vec![Term::atom(n), v.clone()]))
                .collect(),
        );
        Ok(m.unify(&a[1], &read.term) && m.unify(&a[2], &bindings))
    });
    det("term_to_atom", 2, |m, a| match a[1].deref() {
        Term::Var(_) => {
            let text = m.format(&a[0], true);
            Ok(m.unify(&a[1], &Term::atom(&text)))
        }
        t => {
            let text = text_of(&t)?;
            let read = parse_term_text(&text, &m.ops, m.flags.double_quotes)
                .map_err(|e| syntax_error(&e.message))?;
            Ok(m.unify(&a[0], &read.term))
        }
    });
    det("term_string", 2, |m, a| match a[1].deref() {
        Term::Var(_) => {
            let text = m.format(&a[0], true);
            Ok(m.unify(&a[1], &Term::string(&text)))
        }
        t => {
            let text = text_of(&t)?;
            let read = parse_term_text(&text, &m.ops, m.flags.double_quotes)
                .map_err(|e| syntax_error(&e.message))?;
            Ok(m.unify(&a[0], &read.term))
        }
    });
    det("read_term_from_atom", 3, |m, a| {
        let text = text_of(&a[0])?;
        let read = parse_term_text(&text, &m.ops, m.flags.double_quotes)
            .map_err(|e| syntax_error(&e.message))?;
        Ok(m.unify(&a[1], &read.term))
    });
    det("string_chars", 2, |m, a| text_to_list(m, a, TextKind::String, ListKind::Chars));
    det("string_codes", 2, |m, a| text_to_list(m, a, TextKind::String, ListKind::Codes));
    det("string_to_atom", 2, |m, a| match a[0].deref() {
        Term::Var(_) => {
            let text = text_of(&a[1])?;
            Ok(m.unify(&a[0], &Term::string(&text)))
        }
        t => {
            let text = text_of(&t)?;
            Ok(m.unify(&a[1], &Term::atom(&text)))
        }
    });
    det("string_code", 3, |m, a| {
        let index = int_arg(&a[0])?;
        let text = text_of(&a[1])?;
        match text.chars().nth((index - 1).max(0) as usize) {
            Some(c) if index >= 1 => Ok(m.unify(&a[2], &Term::Int(c as i64))),
            _ => Ok(false),
        }
    });
    det("string", 1, |_, a| Ok(matches!(a[0].deref(), Term::Str(_))));
    det("string_lower", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::string(&text.to_lowercase())))
    });
    det("string_upper", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::string(&text.to_uppercase())))
    });
    det("upcase_atom", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::atom(&text.to_uppercase())))
    });
    det("downcase_atom", 2, |m, a| {
        let text = text_of(&a[0])?;
        Ok(m.unify(&a[1], &Term::atom(&text.to_lowercase())))
    });
    det("split_string", 4, builtin_split_string);
    det("atomic_list_concat", 2, |m, a| {
        let items = a[0].proper_list().ok_or_else(instantiation_error)?;
        let mut out = String::new();
        for item in items {
            out.push_str(&text_of(&item)?);
        }
        Ok(m.unify(&a[1], &Term::atom(&out)))
    });
    det("atomic_list_concat", 3, builtin_atomic_list_concat);
    det("string_concat", 3, |m, a| {
        let (x, y) = (text_of(&a[0])?, text_of(&a[1])?);
        Ok(m.unify(&a[2], &Term::string(&(x + &y))))
    });
    det("char_type", 2, builtin_char_type);
    det("code_type", 2, builtin_char_type);
    det("text_concat", 3, |m, a| {
        let (x, y) = (text_of(&a[0])?, text_of(&a[1])?);
        let both_strings = matches!(a[0].deref(), Term::Str(_)) || matches!(a[1].deref(), Term::Str(_));
        let joined = x + &y;
        let out = if both_strings { Term::string(&joined) } else { Term::atom(&joined) };
        Ok(m.unify(&a[2], &out))
    });
    det("sformat", 3, |m, a| {
        let text = format_to_string(m, &a[1], &a[2])?;
        Ok(m.unify(&a[0], &Term::string(&text)))
    });
    det("format_atom", 3, |m, a| {
        let text = format_to_string(m, &a[1], &a[2])?;
        Ok(m.unify(&a[0], &Term::atom(&text)))
    });

    // lists
    det("msort", 2, |m, a| {
        let mut items = list_arg(&a[0])?;
        items.sort_by(compare_terms);
        Ok(m.unify(&a[1], &Term::list_from(items)))
    });
    det("sort", 2, |m, a| {
        let mut items = list_arg(&a[0])?;
        items.sort_by(compare_terms);
        items.dedup_by(|x, y| compare_terms(x, y) == Ordering::Equal);
        Ok(m.unify(&a[1], &Term::list_from(items)))
    });
    det("sort", 4, builtin_sort4);
    det("keysort", 2, |m, a| {
        let items = list_arg(&a[0])?;
        let mut pairs = Vec::with_capacity(items.len());
        for item in items {
            let item = item.deref();
            match &item {
                Term::Cmp(c) if c.name == atoms::MINUS && c.args.len() == 2 => {
                    pairs.push((c.args[0].clone(), item.clone()))
                }
                Term::Var(_) => return Err(instantiation_error()),
                _ => return Err(type_error("pair", item.clone())),
            }
        }
        pairs.sort_by(|x, y| compare_terms(&x.0, &y.0));
        Ok(m.unify(&a[1], &Term::list_from(pairs.into_iter().map(|p| p.1).collect())))
    });
    det("reverse", 2, |m, a| {
        let mut items = list_arg(&a[0])?;
        items.reverse();
        Ok(m.unify(&a[1], &Term::list_from(items)))
    });
    det("sum_list", 2, builtin_sum_list);
    det("sumlist", 2, builtin_sum_list);
    det("max_list", 2, |m, a| extreme_list(m, a, Ordering::Greater));
    det("min_list", 2, |m, a| extreme_list(m, a, Ordering::Less));
    det("numlist", 3, |m, a| {
        let (lo, hi) = (int_arg(&a[0])?, int_arg(&a[1])?);
        if hi < lo {
            return Ok(false);
        }
        if hi - lo > 50_000_000 {
            return Err(crate::error::resource_error("memory"));
        }
        let items = (lo..=hi).map(Term::Int).collect();
        Ok(m.unify(&a[2], &Term::list_from(items)))
    });
    det("memberchk", 2, |m, a| {
        let mut current = a[1].deref();
        loop {
            let next = match &current {
                Term::Cmp(c) if c.name == atoms::DOT && c.args.len() == 2 => {
                    if m.unifiable(&a[0], &c.args[0]) {
                        return Ok(m.unify(&a[0], &c.args[0]));
                    }
                    c.args[1].deref()
                }
                Term::Var(_) => {
                    let tail = Term::fresh_var();
                    return Ok(m.unify(&current, &Term::cons(a[0].clone(), tail)));
                }
                _ => return Ok(false),
            };
            current = next;
        }
    });
    det("list_to_set", 2, |m, a| {
        let items = list_arg(&a[0])?;
        let mut out: Vec<Term> = Vec::new();
        for item in items {
            if !out.iter().any(|o| compare_terms(o, &item) == Ordering::Equal) {
                out.push(item);
            }
        }
        Ok(m.unify(&a[1], &Term::list_from(out)))
    });

    // control helpers
    det("throw", 1, |_, a| {
        let ball = a[0].deref();
        if matches!(ball, Term::Var(_)) {
            return Err(instantiation_error());
        }
        Err(Flow::Throw(ball.resolve()))
    });
    det("halt", 0, |m, _| {
        m.flush();
        Err(Flow::Halt(0))
    });
    det("halt", 1, |m, a| {
        m.flush();
        Err(Flow::Halt(int_arg(&a[0])? as i32))
    });
    det("findall", 3, |m, a| {
        let results = findall(m, &a[0], &a[1])?;
        Ok(m.unify(&a[2], &Term::list_from(results)))
    });
    det("findall", 4, |m, a| {
        let results = findall(m, &a[0], &a[1])?;
        Ok(m.unify(&a[2], &Term::list_with_tail(results, a[3].clone())))
    });
    det("forall", 2, |m, a| {
        let mut holds = true;
        let action = a[1].clone();
        m.for_each_solution(&a[0], |m| {
            let mut found = false;
            m.for_each_solution(&action, |_| {
                found = true;
                Ok(false)
            })?;
            if !found {
                holds = false;
            }
            Ok(found)
        })?;
        Ok(holds)
    });
    det("aggregate_all", 3, builtin_aggregate_all);
    det("aggregate_all", 4, |m, a| {
        // aggregate_all(count, Discriminator, Goal, Count) style is rare; treat as /3
        builtin_aggregate_all(m, &[a[0].clone(), a[2].clone(), a[3].clone()])
    });
    det("with_output_to", 2, |m, a| {
        let (text, ok) = capture_output(m, &a[1])?;
        if !ok {
            return Ok(false);
        }
        unify_sink(m, &a[0], &text)
    });
    det("tab", 1, |m, a| {
        let n = eval(&a[0])?.as_f64() as usize;
        m.write_out(&" ".repeat(n))?;
        Ok(true)
    });
    det("tab", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        let n = eval(&a[1])?.as_f64() as usize;
        m.write_to(s, &" ".repeat(n))?;
        Ok(true)
    });
    det("nl", 0, |m, _| {
        m.write_out("\n")?;
        Ok(true)
    });
    det("nl", 1, |m, a| {
        let s = stream_arg(m, &a[0])?;
        m.write_to(s, "\n")?;
        Ok(true)
    });
    det("write", 1, |m, a| write_term_out(m, None, &a[0], false));
    det("print", 1, |m, a| write_term_out(m, None, &a[0], true));
    det("write", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        write_term_out(m, Some(s), &a[1], false)
    });
    det("writeln", 1, |m, a| {
        write_term_out(m, None, &a[0], false)?;
        m.write_out("\n")?;
        Ok(true)
    });
    det("writeln", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        write_term_out(m, Some(s), &a[1], false)?;
        m.write_to(s, "\n")?;
        Ok(true)
    });
    det("writeq", 1, |m, a| write_term_out(m, None, &a[0], true));
    det("writeq", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        write_term_out(m, Some(s), &a[1], true)
    });
    det("print", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        write_term_out(m, Some(s), &a[1], true)
    });
    det("write_canonical", 1, |m, a| {
        let text = format_term_with(
            &a[0],
            &m.ops,
            WriteOptions {
                quoted: true,
                ignore_ops: true,
            },
        );
        m.write_out(&text)?;
        Ok(true)
    });
    det("write_term", 2, |m, a| {
        let quoted = option_true(&a[1], "quoted");
        write_term_out(m, None, &a[0], quoted)
    });
    det("write_term", 3, |m, a| {
        let s = stream_arg(m, &a[0])?;
        let quoted = option_true(&a[2], "quoted");
        write_term_out(m, Some(s), &a[1], quoted)
    });
    det("put_char", 1, |m, a| {
        let text = text_of(&a[0])?;
        m.write_out(&text)?;
        Ok(true)
    });
    det("put_char", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        let text = text_of(&a[1])?;
        m.write_to(s, &text)?;
        Ok(true)
    });
    det("format", 1, |m, a| {
        let text = format_to_string(m, &a[0], &Term::nil())?;
        m.write_out(&text)?;
        Ok(true)
    });
    det("format", 2, |m, a| {
        let text = format_to_string(m, &a[0], &a[1])?;
        m.write_out(&text)?;
        Ok(true)
    });
    det("format", 3, |m, a| {
        let sink = a[0].deref();
        if let Term::Cmp(c) = &sink {
            if c.args.len() == 1 {
                let text = format_to_string(m, &a[1], &a[2])?;
                return unify_sink(m, &sink, &text);
            }
        }
        let s = stream_arg(m, &sink)?;
        let text = format_to_string(m, &a[1], &a[2])?;
        m.write_to(s, &text)?;
        Ok(true)
    });
    det("print_message", 2, |m, a| {
        let kind = a[0].deref();
        if matches!(&kind, Term::Atom(k) if k.name().as_ref() == "silent" || k.name().as_ref() == "informational") {
            return Ok(true);
        }
        let text = m.format(&a[1], true);
        m.write_to(2, &format!("{}: {}\n", m.format(&kind, false), text))?;
        Ok(true)
    });
    det("flush_output", 0, |m, _| {
        m.flush();
        Ok(true)
    });
    det("flush_output", 1, |m, _| {
        m.flush();
        Ok(true)
    });

    // database
    det("assert", 1, |m, a| m.add_clause(&copy_term(&a[0]), true).map(|_| true));
    det("assertz", 1, |m, a| m.add_clause(&copy_term(&a[0]), true).map(|_| true));
    det("asserta", 1, |m, a| m.add_clause(&copy_term(&a[0]), false).map(|_| true));
    det("retractall", 1, |m, a| {
        let head = a[0].deref();
        let key = head.functor().ok_or_else(|| type_error("callable", head.clone()))?;
        if m.builtins.contains_key(&key) {
            return Err(permission_error("modify", "static_procedure", indicator(key.0, key.1)));
        }
        let clauses = match m.db.get(&key) {
            Some(pred) => pred.clauses.clone(),
            None => {
                m.declare_dynamic(key.0, key.1)?;
                return Ok(true);
            }
        };
        for clause in clauses.iter() {
            let (h, _) = Machine::clause_term(clause);
            if m.unifiable(&h, &head) {
                m.erase_clause(key, clause.id);
            }
        }
        Ok(true)
    });
    det("abolish", 1, |m, a| {
        let spec = a[0].deref();
        if let Some((name, arity)) = pred_indicator(&spec) {
            m.db.remove(&(name, arity));
        }
        Ok(true)
    });
    det("$erase", 2, |m, a| {
        let id = int_arg(&a[1])? as u64;
        let head = a[0].deref();
        let key = head.functor().ok_or_else(|| type_error("callable", head.clone()))?;
        Ok(m.erase_clause(key, id))
    });
    det("dynamic", 1, |m, a| {
        for spec in comma_list(&a[0]) {
            let (name, arity) = pred_indicator(&spec).ok_or_else(|| type_error("predicate_indicator", spec.clone()))?;
            m.declare_dynamic(name, arity)?;
        }
        Ok(true)
    });
    det("discontiguous", 1, |_, _| Ok(true));
    det("multifile", 1, |_, _| Ok(true));
    det("module", 2, |_, _| Ok(true));
    det("use_module", 1, |_, _| Ok(true));
    det("use_module", 2, |_, _| Ok(true));
    det("ensure_loaded", 1, |_, _| Ok(true));
    det("set_prolog_flag", 2, builtin_set_flag);
    det("style_check", 1, |_, _| Ok(true));
    det("garbage_collect", 0, |_, _| Ok(true));
    det("license", 1, |_, _| Ok(true));
    det("table", 1, |m, a| {
        for spec in comma_list(&a[0]) {
            if let Some((name, arity)) = pred_indicator(&spec) {
                let pred = m.db.entry((name, arity)).or_default();
                pred.tabled = true;
            }
        }
        Ok(true)
    });
    det("abolish_all_tables", 0, |m, _| {
        m.tables.clear();
        Ok(true)
    });
    det("initialization", 1, |m, a| {
        m.pending_init.push(a[0].resolve());
        Ok(true)
    });
    det("initialization", 2, |m, a| {
        let goal = a[0].resolve();
        let halt_after = matches!(a[1].deref(), Term::Atom(w) if w.name().as_ref() == "main");
        if halt_after {
            m.pending_init.push(Term::compound(
                atoms::COMMA,
                vec![goal, Term::compound_str("halt", vec![])],
            ));
        } else {
            m.pending_init.push(goal);
        }
        Ok(true)
    });
    det("op", 3, builtin_op);
    det("statistics", 2, |m, a| {
        let key = a[0].deref();
        let name = key.as_atom().map(|x| x.name().to_string()).unwrap_or_default();
        let ms = m.started.elapsed().as_millis() as i64;
        let value = match name.as_str() {
            "runtime" | "cputime" | "process_cputime" | "real_time" | "walltime" => {
                if name == "cputime" {
                    Term::Float(ms as f64 / 1000.0)
                } else {
                    Term::list_from(vec![Term::Int(ms), Term::Int(0)])
                }
            }
            "inferences" => Term::Int(m.inferences as i64),
            _ => return Err(domain_error("statistics_key", key.clone())),
        };
        Ok(m.unify(&a[1], &value))
    });
    det("get_time", 1, |m, a| {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Ok(m.unify(&a[0], &Term::Float(now)))
    });
    det("sleep", 1, |_, a| {
        let secs = eval(&a[0])?.as_f64();
        if secs > 0.0 {
            std::thread::sleep(std::time::Duration::from_secs_f64(secs.min(3600.0)));
        }
        Ok(true)
    });
    det("shell", 1, |_, _| Err(permission_error("execute", "shell", Term::atom("shell"))));
    det("shell", 2, |_, _| Err(permission_error("execute", "shell", Term::atom("shell"))));
    det("random_between", 3, |m, a| {
        let (lo, hi) = (int_arg(&a[0])?, int_arg(&a[1])?);
        if hi < lo {
            return Ok(false);
        }
        let r = eval(&Term::compound_str("random", vec![Term::Int(hi - lo + 1)]))?;
        let v = lo + r.as_f64() as i64;
        Ok(m.unify(&a[2], &Term::Int(v)))
    });
    det("random", 1, |m, a| {
        let r = eval(&Term::atom("random"))?;
        Ok(m.unify(&a[0], &r.to_term()))
    });

    // global variables
    det("nb_setval", 2, |m, a| {
        let key = atom_arg(&a[0])?;
        m.globals.insert(key, a[1].resolve());
        Ok(true)
    });
    det("b_setval", 2, |m, a| {
        let key = atom_arg(&a[0])?;
        m.globals.insert(key, a[1].resolve());
        Ok(true)
    });
    det("nb_getval", 2, |m, a| {
        let key = atom_arg(&a[0])?;
        match m.globals.get(&key).cloned() {
            Some(v) => Ok(m.unify(&a[1], &v)),
            None => Err(existence_error("variable", Term::Atom(key))),
        }
    });
    det("b_getval", 2, |m, a| {
        let key = atom_arg(&a[0])?;
        match m.globals.get(&key).cloned() {
            Some(v) => Ok(m.unify(&a[1], &v)),
            None => Err(existence_error("variable", Term::Atom(key))),
        }
    });

    // streams
    det("open", 3, |m, a| open_stream(m, &a[0], &a[1], &a[2]));
    det("open", 4, |m, a| open_stream(m, &a[0], &a[1], &a[2]));
    det("close", 1, |m, a| close_stream(m, &a[0]));
    det("close", 2, |m, a| close_stream(m, &a[0]));
    det("read_term", 3, |m, a| {
        let s = stream_arg(m, &a[0])?;
        read_term_from(m, s, &a[1], &a[2])
    });
    det("read_term", 2, |m, a| {
        let s = m.current_input;
        read_term_from(m, s, &a[0], &a[1])
    });
    det("get_char", 1, |m, a| {
        let s = m.current_input;
        char_from(m, s, &a[0], true)
    });
    det("get_char", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        char_from(m, s, &a[1], true)
    });
    det("peek_char", 1, |m, a| {
        let s = m.current_input;
        char_from(m, s, &a[0], false)
    });
    det("peek_char", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        char_from(m, s, &a[1], false)
    });
    det("read_line_to_string", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        let line = match read_line(m, s)? {
            Some(line) => Term::string(&line),
            None => Term::Atom(atoms::END_OF_FILE),
        };
        Ok(m.unify(&a[1], &line))
    });
    det("read_line_to_codes", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        let line = match read_line(m, s)? {
            Some(line) => Term::list_from(line.chars().map(|c| Term::Int(c as i64)).collect()),
            None => Term::Int(-1),
        };
        Ok(m.unify(&a[1], &line))
    });
    det("read", 1, |m, a| {
        let s = m.current_input;
        read_term_from(m, s, &a[0], &Term::nil())
    });
    det("read", 2, |m, a| {
        let s = stream_arg(m, &a[0])?;
        read_term_from(m, s, &a[1], &Term::nil())
    });
    det("current_output", 1, |m, a| {
        let s = m.current_output;
        Ok(m.unify(&a[0], &stream_term(s)))
    });
    det("current_input", 1, |m, a| {
        let s = m.current_input;
        Ok(m.unify(&a[0], &stream_term(s)))
    });
    det("set_output", 1, |m, a| {
        m.current_output = stream_arg(m, &a[0])?;
        Ok(true)
    });
    det("set_input", 1, |m, a| {
        m.current_input = stream_arg(m, &a[0])?;
        Ok(true)
    });
    det("consult", 1, |m, a| {
        let path = text_of(&a[0])?;
        let path = if std::path::Path::new(&path).exists() {
            path
        } else {
            format!("{}.pl", path)
        };
        match m.consult_file(&path) {
            Ok(_) => Ok(true),
            Err(_) => Err(existence_error("source_sink", a[0].deref())),
        }
    });
    det("dcg_translate_rule", 2, |m, a| {
        let clause = dcg_translate(m, &a[0])?;
        Ok(m.unify(&a[1], &clause))
    });

    let mut nondet = |name: &str, arity: usize, f: NonDetFn| {
        t.insert((Atom::new(name), arity), Builtin::NonDet(f));
    };
    nondet("between", 3, builtin_between);
    nondet("length", 2, builtin_length);
    nondet("arg", 3, builtin_arg);
    nondet("atom_concat", 3, |m, a| concat_alternatives(m, a, TextKind::Atom));
    nondet("sub_atom", 5, |m, a| sub_text(m, a, TextKind::Atom));
    nondet("sub_string", 5, |m, a| sub_text(m, a, TextKind::String));
    nondet("$clause", 3, builtin_clause);
    nondet("current_op", 3, builtin_current_op);
    nondet("bagof", 3, |m, a| bag_or_set(m, a, false));
    nondet("setof", 3, |m, a| bag_or_set(m, a, true));
    nondet("current_prolog_flag", 2, |m, a| {
        let flags = vec![
            ("bounded", Term::atom("false")),
            (
                "double_quotes",
                Term::atom(match m.flags.double_quotes {
                    DoubleQuotes::Codes => "codes",
                    DoubleQuotes::Chars => "chars",
                    DoubleQuotes::Atom => "atom",
                    DoubleQuotes::String => "string",
                }),
            ),
            ("max_integer", Term::Int(i64::MAX)),
            ("min_integer", Term::Int(i64::MIN)),
            (
                "unknown",
                Term::atom(if m.flags.unknown_error { "error" } else { "fail" }),
            ),
            (
                "occurs_check",
                Term::atom(if m.flags.occurs_check { "true" } else { "false" }),
            ),
        ];
        let mut items: Vec<Term> = flags
            .into_iter()
            .map(|(k, v)| Term::compound_str("f", vec![Term::atom(k), v]))
            .collect();
        for (k, v) in m.flag_values.iter() {
            items.push(Term::compound_str("f", vec![Term::Atom(*k), v.clone()]));
        }
        let pattern = Term::compound_str("f", vec![a[0].clone(), a[1].clone()]);
        Ok(Some((pattern, Box::new(items.into_iter()))))
    });
    nondet("current_predicate", 1, |m, a| {
        let mut items = Vec::new();
        for ((name, arity), pred) in m.db.iter() {
            if !pred.clauses.is_empty() || pred.dynamic {
                items.push(indicator(*name, *arity));
            }
        }
        Ok(Some((a[0].clone(), Box::new(items.into_iter()))))
    });
    nondet("nb_current", 2, |m, a| {
        let items: Vec<Term> = m
            .globals
            .iter()
            .map(|(k, v)| Term::compound_str("g", vec![Term::Atom(*k), v.clone()]))
            .collect();
        let pattern = Term::compound_str("g", vec![a[0].clone(), a[1].clone()]);
        Ok(Some((pattern, Box::new(items.into_iter()))))
    });

    let mut goal = |name: &str, arity: usize, f: GoalFn| {
        t.insert((Atom::new(name), arity), Builtin::Goal(f));
    };
    goal("once", 1, |_, a| {
        Ok(Term::compound(
            atoms::ARROW,
            vec![a[0].clone(), Term::Atom(atoms::TRUE)],
        ))
    });
    goal("ignore", 1, |_, a| {
        Ok(Term::compound(
            atoms::SEMI,
            vec![
                Term::compound(atoms::ARROW, vec![a[0].clone(), Term::Atom(atoms::TRUE)]),
                Term::Atom(atoms::TRUE),
            ],
        ))
    });
    goal("not", 1, |_, a| {
        Ok(Term::compound(atoms::NOT_PROVABLE, vec![a[0].clone()]))
    });
    goal("phrase", 2, |m, a| {
        dcg_body(m, &a[0], a[1].clone(), Term::nil())
    });
    goal("phrase", 3, |m, a| dcg_body(m, &a[0], a[1].clone(), a[2].clone()));
    goal("apply", 2, |_, a| {
        let extra = a[1].proper_list().ok_or_else(instantiation_error)?;
        let mut args = vec![a[0].clone()];
        args.extend(extra);
        Ok(Term::compound(atoms::CALL, args))
    });
    goal("call_cleanup", 2, |_, a| {
        // cleanup runs once the goal has finished deterministically or failed
        let run = Term::compound(atoms::ARROW, vec![a[0].clone(), Term::Atom(atoms::TRUE)]);
        let cleanup = Term::compound_str("ignore", vec![a[1].clone()]);
        Ok(Term::compound(
            atoms::SEMI,
            vec![
                Term::compound(
                    atoms::ARROW,
                    vec![run, Term::compound(atoms::COMMA, vec![cleanup.clone(), Term::Atom(atoms::TRUE)])],
                ),
                Term::compound(atoms::COMMA, vec![cleanup, Term::Atom(atoms::FAIL)]),
            ],
        ))
    });
    goal("setup_call_cleanup", 3, |_, a| {
        let once_setup = Term::compound(atoms::ARROW, vec![a[0].clone(), Term::Atom(atoms::TRUE)]);
        let body = Term::compound_str("call_cleanup", vec![a[1].clone(), a[2].clone()]);
        Ok(Term::compound(atoms::COMMA, vec![once_setup, body]))
    });
    t
}

// ---- helpers ----------------------------------------------------------

fn num_cmp(a: &[Term]) -> Res<Ordering> {
    let x = eval(&a[0])?;
    let y = eval(&a[1])?;
    Ok(compare_num(&x, &y))
}

pub(crate) fn int_arg(term: &Term) -> Res<i64> {
    match term.deref() {
        Term::Int(i) => Ok(i),
        Term::Var(_) => Err(instantiation_error()),
        Term::BigInt(_) => Err(representation_error("max_integer")),
        other => Err(type_error("integer", other)),
    }
}

fn atom_arg(term: &Term) -> Res<Atom> {
    match term.deref() {
        Term::Atom(a) => Ok(a),
        Term::Var(_) => Err(instantiation_error()),
        other => Err(type_error("atom", other)),
    }
}

fn list_arg(term: &Term) -> Res<Vec<Term>> {
    let (items, tail) = term.list_items();
    match tail {
        Term::Atom(a) if a == atoms::NIL => Ok(items),
        Term::Var(_) => Err(instantiation_error()),
        other => Err(type_error("list", other)),
    }
}

fn comma_list(term: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    let mut current = term.deref();
    loop {
        match &current {
            Term::Cmp(c) if c.name == atoms::COMMA && c.args.len() == 2 => {
                out.push(c.args[0].deref());
                let next = c.args[1].deref();
                current = next;
            }
            _ => {
                if let Some(items) = current.proper_list() {
                    out.extend(items.into_iter().map(|t| t.deref()));
                } else {
                    out.push(current.clone());
                }
                return out;
            }
        }
    }
}

fn pred_indicator(spec: &Term) -> Option<(Atom, usize)> {
    match spec.deref() {
        Term::Cmp(c) if c.name == atoms::SLASH && c.args.len() == 2 => {
            let name = c.args[0].deref().as_atom()?;
            match c.args[1].deref() {
                Term::Int(n) if n >= 0 => Some((name, n as usize)),
                _ => None,
            }
        }
        Term::Cmp(c) if c.name.name().as_ref() == "//" && c.args.len() == 2 => {
            let name = c.args[0].deref().as_atom()?;
            match c.args[1].deref() {
                Term::Int(n) if n >= 0 => Some((name, n as usize + 2)),
                _ => None,
            }
        }
        _ => None,
    }
}

fn option_true(options: &Term, name: &str) -> bool {
    options.proper_list().unwrap_or_default().iter().any(|o| {
        let o = o.deref();
        matches!(&o, Term::Cmp(c) if c.name.name().as_ref() == name && c.args.len() == 1
            && matches!(c.args[0].deref(), Term::Atom(a) if a == atoms::TRUE))
    })
}

pub fn term_variables(term: &Term) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    let mut seen: Vec<VarRef> = Vec::new();
    let mut stack = vec![term.clone()];
    while let Some(t) = stack.pop() {
        match t.deref() {
            Term::Var(v) => {
                if !seen.iter().any(|s| Rc::ptr_eq(s, &v)) {
                    seen.push(v.clone());
                    out.push(Term::Var(v));
                }
            }
            Term::Cmp(c) => {
                for arg in c.args.iter().rev() {
                    stack.push(arg.clone());
                }
            }
            _ => {}
        }
    }
    out
}

pub fn copy_term(term: &Term) -> Term {
    fn copy(term: &Term, map: &mut Vec<(VarRef, Term)>) -> Term {
        match term.deref() {
            Term::Var(v) => {
                if let Some((_, t)) = map.iter().find(|(k, _)| Rc::ptr_eq(k, &v)) {
                    return t.clone();
                }
                let fresh = Term::fresh_var();
                map.push((v, fresh.clone()));
                fresh
            }
            Term::Cmp(c) => {
                if c.name == atoms::DOT && c.args.len() == 2 {
                    let whole = Term::Cmp(c.clone());
                    let (items, tail) = whole.list_items();
                    let items = items.iter().map(|i| copy(i, map)).collect();
                    let tail = copy(&tail, map);
                    return Term::list_with_tail(items, tail);
                }
                Term::compound(c.name, c.args.iter().map(|a| copy(a, map)).collect())
            }
            other => other,
        }
    }
    copy(term, &mut Vec::new())
}

fn type_rank(term: &Term) -> u8 {
    match term {
        Term::Var(_) | Term::Local(_) => 0,
        Term::Float(_) | Term::Int(_) | Term::BigInt(_) => 1,
        Term::Atom(_) => 3,
        Term::Str(_) => 4,
        Term::Cmp(_) => 5,
    }
}

/// Standard order of terms.
pub fn compare_terms(a: &Term, b: &Term) -> Ordering {
    let mut stack = vec![(a.clone(), b.clone())];
    while let Some((x, y)) = stack.pop() {
        let x = x.deref();
        let y = y.deref();
        let (rx, ry) = (type_rank(&x), type_rank(&y));
        if rx != ry {
            return rx.cmp(&ry);
        }
        let ord = match (&x, &y) {
            (Term::Var(p), Term::Var(q)) => p.id.cmp(&q.id),
            (Term::Atom(p), Term::Atom(q)) => {
                if p == q {
                    Ordering::Equal
                } else {
                    p.name().cmp(&q.name())
                }
            }
            (Term::Str(p), Term::Str(q)) => p.cmp(q),
            (Term::Cmp(p), Term::Cmp(q)) => {
                let ord = p
                    .args
                    .len()
                    .cmp(&q.args.len())
                    .then_with(|| p.name.name().cmp(&q.name.name()));
                if ord == Ordering::Equal {
                    for (s, t) in p.args.iter().zip(q.args.iter()).rev() {
                        stack.push((s.clone(), t.clone()));
                    }
                }
                ord
            }
            _ => {
                let nx = Num::from_term(&x).expect("number");
                let ny = Num::from_term(&y).expect("number");
                match compare_num(&nx, &ny) {
                    Ordering::Equal => {
                        let fx = matches!(x, Term::Float(_));
                        let fy = matches!(y, Term::Float(_));
                        fy.cmp(&fx)
                    }
                    other => other,
                }
            }
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    Ordering::Equal
}

/// Text of an atom, string, number, or code/char list.
pub fn text_of(term: &Term) -> Res<String> {
    let t = term.deref();
    match &t {
        Term::Atom(a) => Ok(a.name().to_string()),
        Term::Str(s) => Ok(s.to_string()),
        Term::Int(i) => Ok(i.to_string()),
        Term::BigInt(b) => Ok(b.to_string()),
        Term::Float(f) => Ok(format_float(*f)),
        Term::Var(_) => Err(instantiation_error()),
        Term::Cmp(_) => {
            let items = t.proper_list().ok_or_else(|| type_error("text", t.clone()))?;
            let mut out = String::new();
            for item in items {
                match item.deref() {
                    Term::Int(code) => out.push(
                        char::from_u32(code as u32)
                            .ok_or_else(|| representation_error("character_code"))?,
                    ),
                    Term::Atom(a) => {
                        let name = a.name();
                        if name.chars().count() != 1 {
                            return Err(type_error("character", Term::Atom(a)));
                        }
                        out.push_str(&name);
                    }
                    Term::Var(_) => return Err(instantiation_error()),
                    other => return Err(type_error("text", other)),
                }
            }
            Ok(out)
        }
        _ => Err(type_error("text", t.clone())),
    }
}

/// Text of the list side of a conversion, where `[]` is the empty list.
fn list_text(term: &Term) -> Res<String> {
    if term.deref().is_nil() {
        Ok(String::new())
    } else {
        text_of(term)
    }
}

#[derive(Clone, Copy)]
pub(crate) enum TextKind {
    Atom,
    String,
}

#[derive(Clone, Copy)]
enum ListKind {
    Codes,
    Chars,
}

fn make_text(text: &str, kind: TextKind) -> Term {
    match kind {
        TextKind::Atom => Term::atom(text),
        TextKind::String => Term::string(text),
    }
}

fn make_list(text: &str, kind: ListKind) -> Term {
    Term::list_from(
        text.chars()
            .map(|c| match kind {
                ListKind::Codes => Term::Int(c as i64),
                ListKind::Chars => Term::atom(&c.to_string()),
            })
            .collect(),
    )
}

fn text_to_list(m: &mut Machine, a: &[Term], kind: TextKind, list: ListKind) -> Res<bool> {
    match a[0].deref() {
        Term::Var(_) => {
            let text = list_text(&a[1])?;
            Ok(m.unify(&a[0], &make_text(&text, kind)))
        }
        t => {
            let text = text_of(&t)?;
            Ok(m.unify(&a[1], &make_list(&text, list)))
        }
    }
}

fn parse_number(m: &Machine, text: &str) -> Option<Term> {
    let read = parse_term_text(text, &m.ops, DoubleQuotes::Codes).ok()?;
    let t = read.term.deref();
    if t.is_number() {
        Some(t)
    } else {
        match &t {
            Term::Cmp(c) if c.name == atoms::PLUS && c.args.len() == 1 && c.args[0].deref().is_number() => {
                Some(c.args[0].deref())
            }
            _ => None,
        }
    }
}

fn number_to_list(m: &mut Machine, a: &[Term], list: ListKind) -> Res<bool> {
    let n = a[0].deref();
    if n.is_number() {
        let text = m.format(&n, false);
        return Ok(m.unify(&a[1], &make_list(&text, list)));
    }
    let text = text_of(&a[1])?;
    match parse_number(m, text.trim()) {
        Some(num) => Ok(m.unify(&a[0], &num)),
        None => Err(syntax_error("illegal_number")),
    }
}

fn builtin_atom_number(m: &mut Machine, a: &[Term]) -> Res<bool> {
    match a[0].deref() {
        Term::Var(_) => {
            let n = a[1].deref();
            if !n.is_number() {
                return Err(instantiation_error());
            }
            let text = m.format(&n, false);
            Ok(m.unify(&a[0], &Term::atom(&text)))
        }
        t => {
            let text = text_of(&t)?;
            match parse_number(m, &text) {
                Some(n) => Ok(m.unify(&a[1], &n)),
                None => Ok(false),
            }
        }
    }
}

fn builtin_char_code(m: &mut Machine, a: &[Term]) -> Res<bool> {
    match a[0].deref() {
        Term::Atom(c) => {
            let name = c.name();
            let ch = name.chars().next().ok_or_else(|| type_error("character", Term::Atom(c)))?;
            Ok(m.unify(&a[1], &Term::Int(ch as i64)))
        }
        Term::Var(_) => {
            let code = int_arg(&a[1])?;
            let ch = char::from_u32(code as u32).ok_or_else(|| representation_error("character_code"))?;
            Ok(m.unify(&a[0], &Term::atom(&ch.to_string())))
        }
        other => Err(type_error("character", other)),
    }
}

fn builtin_succ(m: &mut Machine, a: &[Term]) -> Res<bool> {
    match a[0].deref() {
        Term::Int(i) => {
            if i < 0 {
                return Err(type_error("not_less_than_zero", Term::Int(i)));
            }
            Ok(m.unify(&a[1], &Term::Int(i + 1)))
        }
        Term::Var(_) => {
            let j = int_arg(&a[1])?;
            if j < 0 {
                return Err(type_error("not_less_than_zero", Term::Int(j)));
            }
            if j == 0 {
                return Ok(false);
            }
            Ok(m.unify(&a[0], &Term::Int(j - 1)))
        }
        other => Err(type_error("integer", other)),
    }
}

fn builtin_plus(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let (x, y, z) = (a[0].deref(), a[1].deref(), a[2].deref());
    if !matches!(x, Term::Var(_)) && !matches!(y, Term::Var(_)) {
        let v = eval(&Term::compound(atoms::PLUS, vec![x, y]))?;
        return Ok(m.unify(&z, &v.to_term()));
    }
    if !matches!(x, Term::Var(_)) {
        let v = eval(&Term::compound(atoms::MINUS, vec![z, x]))?;
        return Ok(m.unify(&y, &v.to_term()));
    }
    let v = eval(&Term::compound(atoms::MINUS, vec![z, y]))?;
    Ok(m.unify(&x, &v.to_term()))
}

fn builtin_functor(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let t = a[0].deref();
    match &t {
        Term::Var(_) => {
            let name = a[1].deref();
            let arity = int_arg(&a[2])?;
            if arity == 0 {
                return Ok(m.unify(&t, &name));
            }
            let name = match name {
                Term::Atom(n) => n,
                Term::Var(_) => return Err(instantiation_error()),
                other => return Err(type_error("atomic", other)),
            };
            let args = (0..arity).map(|_| Term::fresh_var()).collect();
            Ok(m.unify(&t, &Term::compound(name, args)))
        }
        Term::Cmp(c) => {
            Ok(m.unify(&a[1], &Term::Atom(c.name)) && m.unify(&a[2], &Term::Int(c.args.len() as i64)))
        }
        other => Ok(m.unify(&a[1], other) && m.unify(&a[2], &Term::Int(0))),
    }
}

fn builtin_univ(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let t = a[0].deref();
    match &t {
        Term::Var(_) => {
            let items = list_arg(&a[1])?;
            let (head, rest) = items.split_first().ok_or_else(|| domain_error("non_empty_list", Term::nil()))?;
            let head = head.deref();
            if rest.is_empty() {
                return Ok(m.unify(&t, &head));
            }
            let name = match head {
                Term::Atom(n) => n,
                Term::Var(_) => return Err(instantiation_error()),
                other => return Err(type_error("atom", other)),
            };
            Ok(m.unify(&t, &Term::compound(name, rest.to_vec())))
        }
        Term::Cmp(c) => {
            let mut items = vec![Term::Atom(c.name)];
            items.extend(c.args.iter().cloned());
            Ok(m.unify(&a[1], &Term::list_from(items)))
        }
        other => Ok(m.unify(&a[1], &Term::list_from(vec![other.clone()]))),
    }
}

fn builtin_arg(_m: &mut Machine, a: &[Term]) -> Res<Alternatives> {
    let t = a[1].deref();
    let args: Vec<Term> = match &t {
        Term::Cmp(c) => c.args.clone(),
        Term::Var(_) => return Err(instantiation_error()),
        other => return Err(type_error("compound", other.clone())),
    };
    match a[0].deref() {
        Term::Int(n) => {
            if n < 1 || n as usize > args.len() {
                return Ok(None);
            }
            Ok(Some((a[2].clone(), Box::new(std::iter::once(args[n as usize - 1].clone())))))
        }
        Term::Var(_) => {
            let pattern = Term::compound_str("a", vec![a[0].clone(), a[2].clone()]);
            let items: Vec<Term> = args
                .into_iter()
                .enumerate()
                .map(|(i, arg)| Term::compound_str("a", vec![Term::Int(i as i64 + 1), arg]))
                .collect();
            Ok(Some((pattern, Box::new(items.into_iter()))))
        }
        other => Err(type_error("integer", other)),
    }
}

fn builtin_between(_m: &mut Machine, a: &[Term]) -> Res<Alternatives> {
    let lo = int_arg(&a[0])?;
    let hi = match a[1].deref() {
        Term::Atom(x) if matches!(x.name().as_ref(), "inf" | "infinite") => i64::MAX,
        _ => int_arg(&a[1])?,
    };
    match a[2].deref() {
        Term::Int(x) => {
            if x >= lo && x <= hi {
                Ok(Some((Term::nil(), Box::new(std::iter::once(Term::nil())))))
            } else {
                Ok(None)
            }
        }
        Term::Var(_) => {
            if lo > hi {
                return Ok(None);
            }
            Ok(Some((a[2].clone(), Box::new((lo..=hi).map(Term::Int)))))
        }
        other => Err(type_error("integer", other)),
    }
}

fn builtin_length(m: &mut Machine, a: &[Term]) -> Res<Alternatives> {
    let (items, tail) = a[0].list_items();
    let known = items.len() as i64;
    match tail {
        Term::Atom(x) if x == atoms::NIL => {
            let n = Term::Int(known);
            Ok(Some((a[1].clone(), Box::new(std::iter::once(n)))))
        }
        Term::Var(_) => match a[1].deref() {
            Term::Int(n) => {
                if n < known {
                    return Ok(None);
                }
                let fresh: Vec<Term> = (0..(n - known)).map(|_| Term::fresh_var()).collect();
                Ok(Some((tail, Box::new(std::iter::once(Term::list_from(fresh))))))
            }
            Term::Var(_) => {
                let pattern = Term::compound_str("l", vec![tail, a[1].clone()]);
                let _ = m;
                Ok(Some((
                    pattern,
                    Box::new((0i64..).map(move |extra| {
                        let fresh: Vec<Term> = (0..extra).map(|_| Term::fresh_var()).collect();
                        Term::compound_str("l", vec![Term::list_from(fresh), Term::Int(known + extra)])
                    })),
                )))
            }
            other => Err(type_error("integer", other)),
        },
        other => Err(type_error("list", other)),
    }
}

fn builtin_sum_list(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let items = list_arg(&a[0])?;
    let mut total = Num::Int(0);
    for item in items {
        total = eval(&Term::compound(atoms::PLUS, vec![total.to_term(), item]))?;
    }
    Ok(m.unify(&a[1], &total.to_term()))
}

fn extreme_list(m: &mut Machine, a: &[Term], want: Ordering) -> Res<bool> {
    let items = list_arg(&a[0])?;
    let mut best: Option<Num> = None;
    for item in items {
        let value = eval(&item)?;
        best = Some(match best {
            None => value,
            Some(b) => {
                if compare_num(&value, &b) == want {
                    value
                } else {
                    b
                }
            }
        });
    }
    match best {
        Some(b) => Ok(m.unify(&a[1], &b.to_term())),
        None => Ok(false),
    }
}

fn builtin_sort4(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let key = int_arg(&a[0])?;
    let order = atom_arg(&a[1])?;
    let items = list_arg(&a[2])?;
    let mut keyed = Vec::with_capacity(items.len());
    for item in items {
        let k = if key == 0 {
            item.clone()
        } else {
            let d = item.deref();
            match &d {
                Term::Cmp(c) if (key as usize) <= c.args.len() => c.args[key as usize - 1].clone(),
                _ => return Err(type_error("compound", d.clone())),
            }
        };
        keyed.push((k, item));
    }
    let order = order.name();
    match order.as_ref() {
        "@<" | "@=<" => keyed.sort_by(|x, y| compare_terms(&x.0, &y.0)),
        "@>" | "@>=" => keyed.sort_by(|x, y| compare_terms(&y.0, &x.0)),
        _ => return Err(domain_error("order", Term::atom(&order))),
    }
    if order.as_ref() == "@<" || order.as_ref() == "@>" {
        keyed.dedup_by(|x, y| compare_terms(&x.0, &y.0) == Ordering::Equal);
    }
    Ok(m.unify(&a[3], &Term::list_from(keyed.into_iter().map(|p| p.1).collect())))
}

pub(crate) fn findall(m: &mut Machine, template: &Term, goal: &Term) -> Res<Vec<Term>> {
    let mut results = Vec::new();
    m.for_each_solution(goal, |_| {
        results.push(copy_term(&template.resolve()));
        Ok(true)
    })?;
    Ok(results)
}

fn builtin_aggregate_all(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let spec = a[0].deref();
    let goal = a[1].clone();
    let (kind, template) = match &spec {
        Term::Atom(x) if x.name().as_ref() == "count" => ("count", Term::nil()),
        Term::Cmp(c) if c.args.len() == 1 => (
            match c.name.name().as_ref() {
                "count" => "count",
                "sum" => "sum",
                "max" => "max",
                "min" => "min",
                "bag" => "bag",
                "set" => "set",
                _ => return Err(domain_error("aggregate_spec", spec.clone())),
            },
            c.args[0].clone(),
        ),
        Term::Cmp(c) if c.args.len() == 2 && matches!(c.name.name().as_ref(), "max" | "min") => {
            let kind = if c.name.name().as_ref() == "max" { "max_witness" } else { "min_witness" };
            (kind, Term::compound(atoms::MINUS, vec![c.args[0].clone(), c.args[1].clone()]))
        }
        Term::Var(_) => return Err(instantiation_error()),
        _ => return Err(domain_error("aggregate_spec", spec.clone())),
    };
    let results = findall(m, &template, &goal)?;
    let value = match kind {
        "count" => Term::Int(results.len() as i64),
        "sum" => {
            let mut total = Num::Int(0);
            for r in results {
                total = eval(&Term::compound(atoms::PLUS, vec![total.to_term(), r]))?;
            }
            total.to_term()
        }
        "max" | "min" => {
            let want = if kind == "max" { Ordering::Greater } else { Ordering::Less };
            let mut best: Option<Num> = None;
            for r in results {
                let v = eval(&r)?;
                best = Some(match best {
                    None => v,
                    Some(b) => if compare_num(&v, &b) == want { v } else { b },
                });
            }
            match best {
                Some(b) => b.to_term(),
                None => return Ok(false),
            }
        }
        "max_witness" | "min_witness" => {
            let want = if kind == "max_witness" { Ordering::Greater } else { Ordering::Less };
            let mut best: Option<(Num, Term)> = None;
            for r in results {
                let (score, witness) = match r.deref() {
                    Term::Cmp(c) => (eval(&c.args[0])?, c.args[1].clone()),
                    _ => continue,
                };
                best = Some(match best {
                    None => (score, witness),
                    Some((b, w)) => {
                        if compare_num(&score, &b) == want {
                            (score, witness)
                        } else {
                            (b, w)
                        }
                    }
                });
            }
            match best {
                Some((score, witness)) => {
                    let name = if kind == "max_witness" { "max" } else { "min" };
                    Term::compound_str(name, vec![score.to_term(), witness])
                }
                None => return Ok(false),
            }
        }
        "bag" => Term::list_from(results),
        _ => {
            let mut results = results;
            results.sort_by(compare_terms);
            results.dedup_by(|x, y| compare_terms(x, y) == Ordering::Equal);
            Term::list_from(results)
        }
    };
    Ok(m.unify(&a[2], &value))
}

fn strip_carets(goal: &Term) -> (Term, Vec<Term>) {
    let mut bound = Vec::new();
    let mut current = goal.deref();
    loop {
        match &current {
            Term::Cmp(c) if c.name.name().as_ref() == "^" && c.args.len() == 2 => {
                bound.extend(term_variables(&c.args[0]));
                let next = c.args[1].deref();
                current = next;
            }
            _ => return (current, bound),
        }
    }
}

fn bag_or_set(m: &mut Machine, a: &[Term], sorted: bool) -> Res<Alternatives> {
    let template = a[0].clone();
    let (goal, bound) = strip_carets(&a[1]);
    let template_vars = term_variables(&template);
    let free: Vec<Term> = term_variables(&goal)
        .into_iter()
        .filter(|v| {
            !template_vars.iter().any(|t| compare_terms(t, v) == Ordering::Equal)
                && !bound.iter().any(|t| compare_terms(t, v) == Ordering::Equal)
        })
        .collect();
    let witness = Term::list_from(free);
    let pair_template = Term::compound(atoms::MINUS, vec![witness.clone(), template]);
    let results = findall(m, &pair_template, &goal)?;
    if results.is_empty() {
        return Ok(None);
    }
    let mut groups: Vec<(Term, Vec<Term>)> = Vec::new();
    for r in results {
        let (w, t) = match r.deref() {
            Term::Cmp(c) => (c.args[0].clone(), c.args[1].clone()),
            _ => continue,
        };
        match groups
            .iter_mut()
            .find(|(gw, _)| compare_terms(gw, &w) == Ordering::Equal)
        {
            Some((_, items)) => items.push(t),
            None => groups.push((w, vec![t])),
        }
    }
    if sorted {
        groups.sort_by(|x, y| compare_terms(&x.0, &y.0));
    }
    let alternatives: Vec<Term> = groups
        .into_iter()
        .map(|(w, mut items)| {
            if sorted {
                items.sort_by(compare_terms);
                items.dedup_by(|x, y| compare_terms(x, y) == Ordering::Equal);
            }
            Term::compound(atoms::MINUS, vec![w, Term::list_from(items)])
        })
        .collect();
    let pattern = Term::compound(atoms::MINUS, vec![witness, a[2].clone()]);
    Ok(Some((pattern, Box::new(alternatives.into_iter()))))
}

fn builtin_clause(m: &mut Machine, a: &[Term]) -> Res<Alternatives> {
    let head = a[0].deref();
    let key = match &head {
        Term::Var(_) => return Err(instantiation_error()),
        t => t.functor().ok_or_else(|| type_error("callable", t.clone()))?,
    };
    if m.builtins.contains_key(&key) {
        return Err(permission_error("access", "private_procedure", indicator(key.0, key.1)));
    }
    let clauses = match m.db.get(&key) {
        Some(pred) => pred.clauses.clone(),
        None => return Ok(None),
    };
    let pattern = Term::compound_str("$c", vec![a[0].clone(), a[1].clone(), a[2].clone()]);
    let iter = (0..clauses.len()).map(move |i| {
        let (h, b) = Machine::clause_term(&clauses[i]);
        Term::compound_str("$c", vec![h, b, Term::Int(clauses[i].id as i64)])
    });
    Ok(Some((pattern, Box::new(iter))))
}

fn builtin_current_op(m: &mut Machine, a: &[Term]) -> Res<Alternatives> {
    let items: Vec<Term> = m
        .ops
        .all()
        .into_iter()
        .map(|(name, p, t)| {
            Term::compound_str(
                "op",
                vec![Term::Int(p as i64), Term::atom(t.name()), Term::Atom(name)],
            )
        })
        .collect();
    let pattern = Term::compound_str("op", vec![a[0].clone(), a[1].clone(), a[2].clone()]);
    Ok(Some((pattern, Box::new(items.into_iter()))))
}

fn builtin_op(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let priority = int_arg(&a[0])?;
    if !(0..=1200).contains(&priority) {
        return Err(domain_error("operator_priority", Term::Int(priority)));
    }
    let kind = atom_arg(&a[1])?;
    let kind = OpType::parse(&kind.name()).ok_or_else(|| domain_error("operator_specifier", Term::Atom(kind)))?;
    let names = match a[2].deref() {
        Term::Atom(n) => vec![n],
        other => {
            let items = other.proper_list().ok_or_else(|| type_error("list", other.clone()))?;
            items.iter().map(atom_arg).collect::<Res<Vec<_>>>()?
        }
    };
    for name in names {
        if name == atoms::COMMA {
            return Err(permission_error("modify", "operator", Term::Atom(name)));
        }
        m.ops.add(priority as u16, kind, name);
    }
    Ok(true)
}

fn builtin_set_flag(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let flag = atom_arg(&a[0])?;
    let value = a[1].deref();
    match flag.name().as_ref() {
        "double_quotes" => {
            m.flags.double_quotes = match value.as_atom().map(|v| v.name().to_string()).as_deref() {
                Some("codes") => DoubleQuotes::Codes,
                Some("chars") => DoubleQuotes::Chars,
                Some("atom") => DoubleQuotes::Atom,
                Some("string") => DoubleQuotes::String,
                _ => return Err(domain_error("flag_value", value.clone())),
            }
        }
        "unknown" => {
            m.flags.unknown_error = !matches!(value.as_atom().map(|v| v.name().to_string()).as_deref(), Some("fail"));
        }
        "occurs_check" => {
            m.flags.occurs_check = matches!(value.as_atom().map(|v| v.name().to_string()).as_deref(), Some("true"));
        }
        _ => {
            m.flag_values.insert(flag, value.resolve());
        }
    }
    Ok(true)
}

fn builtin_split_string(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let text = text_of(&a[0])?;
    let seps: Vec<char> = text_of(&a[1])?.chars().collect();
    let pad: Vec<char> = text_of(&a[2])?.chars().collect();
    let mut parts: Vec<String> = Vec::new();
    if seps.is_empty() {
        parts.push(text.clone());
    } else {
        let mut current = String::new();
        for c in text.chars() {
            if seps.contains(&c) {
                parts.push(std::mem::take(&mut current));
            } else {
                current.push(c);
            }
        }
        parts.push(current);
    }
    let items = parts
        .into_iter()
        .map(|p| Term::string(p.trim_matches(|c| pad.contains(&c))))
        .collect();
    Ok(m.unify(&a[3], &Term::list_from(items)))
}

fn builtin_atomic_list_concat(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let sep = text_of(&a[1])?;
    let (items, tail) = a[0].list_items();
    let ground = tail.is_nil() && items.iter().all(|i| !matches!(i.deref(), Term::Var(_)));
    if ground {
        let mut parts = Vec::with_capacity(items.len());
        for item in items {
            parts.push(text_of(&item)?);
        }
        return Ok(m.unify(&a[2], &Term::atom(&parts.join(&sep))));
    }
    if sep.is_empty() {
        return Err(instantiation_error());
    }
    let whole = text_of(&a[2])?;
    let parts = whole.split(sep.as_str()).map(Term::atom).collect();
    Ok(m.unify(&a[0], &Term::list_from(parts)))
}

fn builtin_char_type(m: &mut Machine, a: &[Term]) -> Res<bool> {
    let c = match a[0].deref() {
        Term::Atom(x) => x.name().chars().next().ok_or_else(instantiation_error)?,
        Term::Int(code) => char::from_u32(code as u32).ok_or_else(|| representation_error("character_code"))?,
        Term::Var(_) => return Err(instantiation_error()),
        other => return Err(type_error("character", other)),
    };
    let kind = a[1].deref();
    let as_char = |ch: char| -> Term {
        match a[0].deref() {
            Term::Int(_) => Term::Int(ch as i64),
            _ => Term::atom(&ch.to_string()),
        }
    };
    match &kind {
        Term::Atom(k) => Ok(match k.name().as_ref() {
            "alpha" => c.is_alphanumeric() || c == '_',
            "alnum" => c.is_alphanumeric(),
            "csym" => c.is_alphanumeric() || c == '_',
            "csymf" => c.is_alphabetic() || c == '_',
            "digit" => c.is_ascii_digit(),
            "space" | "white" => c.is_whitespace(),
            "upper" => c.is_uppercase(),
            "lower" => c.is_lowercase(),
            "punct" => c.is_ascii_punctuation(),
            "graph" => !c.is_whitespace() && !c.is_control(),
            "print" => !c.is_control(),
            "cntrl" => c.is_control(),
            "ascii" => c.is_ascii(),
            "end_of_line" => c == '\n' || c == '\r',
            "newline" => c == '\n',
            "period" => c == '.' || c == '!' || c == '?',
            "quote" => c == '\'' || c == '"' || c == '`',
            "paren" => c == '(' || c == ')',
            _ => false,
        }),
        Term::Cmp(k) if k.args.len() == 1 => match k.name.name().as_ref() {
            "digit" => match c.to_digit(10) {
                Some(w) => Ok(m.unify(&k.args[0], &Term::Int(w as i64))),
                None => Ok(false),
            },
            "to_lower" => {
                let lower = c.to_lowercase().next().unwrap_or(c);
                Ok(m.unify(&k.args[0], &as_char(lower)))
            }
            "to_upper" => {
                let upper = c.to_uppercase().next().unwrap_or(c);
                Ok(m.unify(&k.args[0], &as_char(upper)))
            }
            "upper" => {
                if !c.is_uppercase() {
                    return Ok(false);
                }
                let lower = c.to_lowercase().next().unwrap_or(c);
                Ok(m.unify(&k.args[0], &as_char(lower)))
            }
            "lower" => {
                if !c.is_lowercase() {
                    return Ok(false);
                }
                let upper = c.to_uppercase().next().unwrap_or(c);
                Ok(m.unify(&k.args[0], &as_char(upper)))
            }
            "code" => Ok(m.unify(&k.args[0], &Term::Int(c as i64))),
            _ => Ok(false),
        },
        Term::Var(_) => Err(instantiation_error()),
        _ => Ok(false),
    }
}

fn concat_alternatives(_m: &mut Machine, a: &[Term], kind: TextKind) -> Res<Alternatives> {
    let x = a[0].deref();
    let y = a[1].deref();
    if !matches!(x, Term::Var(_)) && !matches!(y, Term::Var(_)) {
        let joined = text_of(&x)? + &text_of(&y)?;
        return Ok(Some((a[2].clone(), Box::new(std::iter::once(make_text(&joined, kind))))));
    }
    let whole = text_of(&a[2])?;
    let chars: Vec<char> = whole.chars().collect();
    let pattern = Term::compound_str("c", vec![a[0].clone(), a[1].clone()]);
    let iter = (0..=chars.len()).map(move |i| {
        let left: String = chars[..i].iter().collect();
        let right: String = chars[i..].iter().collect();
        Term::compound_str("c", vec![make_text(&left, kind), make_text(&right, kind)])
    });
    Ok(Some((pattern, Box::new(iter))))
}

fn sub_text(_m: &mut Machine, a: &[Term], kind: TextKind) -> Res<Alternatives> {
    let text = text_of(&a[0])?;
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let pattern = Term::compound_str(
        "s",
        vec![a[1].clone(), a[2].clone(), a[3].clone(), a[4].clone()],
    );
    let make = move |b: usize, l: usize, chars: &[char]| {
        let sub: String = chars[b..b + l].iter().collect();
        Term::compound_str(
            "s",
            vec![
                Term::Int(b as i64),
                Term::Int(l as i64),
                Term::Int((n - b - l) as i64),
                make_text(&sub, kind),
            ],
        )
    };
    if let Ok(sub) = text_of(&a[4]) {
        let sub_chars: Vec<char> = sub.chars().collect();
        let l = sub_chars.len();
        let mut out = Vec::new();
        if l <= n {
            for b in 0..=(n - l) {
                if chars[b..b + l] == sub_chars[..] {
                    out.push(make(b, l, &chars));
                }
            }
        }
        return Ok(Some((pattern, Box::new(out.into_iter()))));
    }
    let fixed_b = match a[1].deref() {
        Term::Int(b) => Some(b.max(0) as usize),
        _ => None,
    };
    let fixed_l = match a[2].deref() {
        Term::Int(l) => Some(l.max(0) as usize),
        _ => None,
    };
    let fixed_a = match a[3].deref() {
        Term::Int(x) => Some(x.max(0) as usize),
        _ => None,
    };
    let mut out = Vec::new();
    for b in 0..=n {
        if fixed_b.is_some_and(|fb| fb != b) {
            continue;
        }
        for l in 0..=(n - b) {
            if fixed_l.is_some_and(|fl| fl != l) {
                continue;
            }
            if fixed_a.is_some_and(|fa| fa != n - b - l) {
                continue;
            }
            out.push(make(b, l, &chars));
        }
    }
    Ok(Some((pattern, Box::new(out.into_iter()))))
}

// ---- output helpers ---------------------------------------------------

fn write_term_out(m: &mut Machine, stream: Option<i64>, term: &Term, quoted: bool) -> Res<bool> {
    let text = m.format(term, quoted);
    match stream {
        Some(s) => m.write_to(s, &text)?,
        None => m.write_out(&text)?,
    }
    Ok(true)
}

fn stream_term(id: i64) -> Term {
    Term::compound_str("$stream", vec![Term::Int(id)])
}

fn stream_arg(m: &Machine, term: &Term) -> Res<i64> {
    let t = term.deref();
    match &t {
        Term::Var(_) => Err(instantiation_error()),
        Term::Atom(alias) => {
            for (id, s) in m.streams.iter() {
                if s.alias == Some(*alias) {
                    return Ok(*id);
                }
            }
            Err(existence_error("stream", t.clone()))
        }
        Term::Cmp(c) if c.name.name().as_ref() == "$stream" && c.args.len() == 1 => {
            let id = int_arg(&c.args[0])?;
            if m.streams.contains_key(&id) {
                Ok(id)
            } else {
                Err(existence_error("stream", t.clone()))
            }
        }
        _ => Err(domain_error("stream_or_alias", t.clone())),
    }
}

fn open_stream(m: &mut Machine, path: &Term, mode: &Term, out: &Term) -> Res<bool> {
    let path_text = text_of(path)?;
    let mode = atom_arg(mode)?;
    let kind = match mode.name().as_ref() {
        "read" => {
            let text = std::fs::read_to_string(&path_text)
                .map_err(|_| existence_error("source_sink", path.deref()))?;
            StreamKind::Text {
                text: Rc::from(text.as_str()),
                pos: 0,
            }
        }
        "write" => StreamKind::File(BufWriter::new(
            File::create(&path_text)
                .map_err(|_| permission_error("open", "source_sink", path.deref()))?,
        )),
        "append" => StreamKind::File(BufWriter::new(
            OpenOptions::new()
                .append(true)
                .create(true)
                .open(&path_text)
                .map_err(|_| permission_error("open", "source_sink", path.deref()))?,
        )),
        _ => return Err(domain_error("io_mode", Term::Atom(mode))),
    };
    let id = m.next_stream;
    m.next_stream += 1;
    m.streams.insert(id, Stream { kind, alias: None });
    Ok(m.unify(out, &stream_term(id)))
}

fn close_stream(m: &mut Machine, s: &Term) -> Res<bool> {
    let id = stream_arg(m, s)?;
    if id <= 2 {
        return Ok(true);
    }
    if let Some(mut stream) = m.streams.remove(&id) {
        if let StreamKind::File(f) = &mut stream.kind {
            use std::io::Write;
            let _ = f.flush();
        }
    }
    if m.current_output == id {
        m.current_output = 1;
    }
    if m.current_input == id {
        m.current_input = 0;
    }
    Ok(true)
}

fn input_text(m: &Machine, stream: i64) -> Res<(Rc<str>, usize)> {
    match m.streams.get(&stream).map(|s| &s.kind) {
        Some(StreamKind::Text { text, pos }) => Ok((text.clone(), *pos)),
        Some(StreamKind::Stdin) => Ok((Rc::from(""), 0)),
        _ => Err(permission_error("input", "stream", Term::Int(stream))),
    }
}

fn advance(m: &mut Machine, stream: i64, next: usize) {
    if let Some(Stream {
        kind: StreamKind::Text { pos, .. },
        ..
    }) = m.streams.get_mut(&stream)
    {
        *pos = next;
    }
}

fn char_from(m: &mut Machine, stream: i64, out: &Term, consume: bool) -> Res<bool> {
    let (text, pos) = input_text(m, stream)?;
    let c = text[pos..].chars().next();
    if consume {
        advance(m, stream, pos + c.map(char::len_utf8).unwrap_or(0));
    }
    let value = match c {
        Some(c) => Term::atom(c.encode_utf8(&mut [0; 4])),
        None => Term::Atom(atoms::END_OF_FILE),
    };
    Ok(m.unify(out, &value))
}

fn read_line(m: &mut Machine, stream: i64) -> Res<Option<String>> {
    let (text, pos) = input_text(m, stream)?;
    let rest = &text[pos..];
    if rest.is_empty() {
        return Ok(None);
    }
    let (line, used) = match rest.find('\n') {
        Some(at) => (&rest[..at], at + 1),
        None => (rest, rest.len()),
    };
    let line = line.strip_suffix('\r').unwrap_or(line).to_string();
    advance(m, stream, pos + used);
    Ok(Some(line))
}

fn read_term_from(m: &mut Machine, stream: i64, out: &Term, options: &Term) -> Res<bool> {
    let (text, pos) = match m.streams.get(&stream).map(|s| &s.kind) {
        Some(StreamKind::Text { text, pos }) => (text.clone(), *pos),
        Some(StreamKind::Stdin) => (Rc::from(""), 0),
        _ => return Err(permission_error("input", "stream", Term::Int(stream))),
    };
    let (result, next) = {
        let mut parser = Parser::new(&text, pos, &m.ops, m.flags.double_quotes);
        let result = parser.read_clause();
        if result.is_err() {
            parser.recover();
        }
        (result, parser.position())
    };
    if let Some(Stream {
        kind: StreamKind::Text { pos, .. },
        ..
    }) = m.streams.get_mut(&stream)
    {
        *pos = next;
    }
    match result {
        Err(e) => {
            let line = text[..e.offset.min(text.len())].matches('\n').count() + 1;
            Err(Flow::Throw(Term::compound(
                atoms::ERROR,
                vec![
                    Term::compound_str("syntax_error", vec![Term::atom(&e.message)]),
                    Term::compound_str("stream", vec![stream_term(stream), Term::Int(line as i64)]),
                ],
            )))
        }
        Ok(None) => Ok(m.unify(out, &Term::Atom(atoms::END_OF_FILE))),
        Ok(Some(read)) => {
            for option in options.proper_list().unwrap_or_default() {
                let option = option.deref();
                if let Term::Cmp(c) = &option {
                    if c.args.len() != 1 {
                        continue;
                    }
                    let value = match c.name.name().as_ref() {
                        "variable_names" => Term::list_from(
                            read.variable_names
                                .iter()
                                .map(|(n, v)| Term::compound(atoms::EQUALS, vec![Term::atom(n), v.clone()]))
                                .collect(),
                        ),
                        "variables" => Term::list_from(term_variables(&read.term)),
                        "singletons" => Term::list_from(
                            read.singletons
                                .iter()
                                .filter_map(|n| {
                                    read.variable_names
                                        .iter()
                                        .find(|(vn, _)| vn == n)
                                        .map(|(vn, v)| Term::compound(atoms::EQUALS, vec![Term::atom(vn), v.clone()]))
                                })
                                .collect(),
                        ),
                        _ => continue,
                    };
                    if !m.unify(&c.args[0], &value) {
                        return Ok(false);
                    }
                }
            }
            Ok(m.unify(out, &read.term))
        }
    }
}

fn capture_output(m: &mut Machine, goal: &Term) -> Res<(String, bool)> {
    let id = m.next_stream;
    m.next_stream += 1;
    m.streams.insert(
        id,
        Stream {
            kind: StreamKind::Capture(String::new()),
            alias: None,
        },
    );
    let saved = m.current_output;
    m.current_output = id;
    let result = m.run_once(goal);
    m.current_output = saved;
    let text = match m.streams.remove(&id) {
        Some(Stream {
            kind: StreamKind::Capture(s),
            ..
        }) => s,
        _ => String::new(),
    };
    let ok = result?;
    Ok((text, ok))
}

fn unify_sink(m: &mut Machine, sink: &Term, text: &str) -> Res<bool> {
    let sink = sink.deref();
    match &sink {
        Term::Cmp(c) if c.args.len() == 1 => {
            let value = match c.name.name().as_ref() {
                "atom" => Term::atom(text),
                "string" => Term::string(text),
                "codes" => make_list(text, ListKind::Codes),
                "chars" => make_list(text, ListKind::Chars),
                _ => return Err(domain_error("output_sink", sink.clone())),
            };
            Ok(m.unify(&c.args[0], &value))
        }
        _ => Err(domain_error("output_sink", sink.clone())),
    }
}

fn format_error(message: &str) -> Flow {
    Flow::Throw(Term::compound(
        atoms::ERROR,
        vec![
            Term::compound_str("format", vec![Term::string(message)]),
            Term::fresh_var(),
        ],
    ))
}

pub(crate) fn format_to_string(m: &mut Machine, format: &Term, args: &Term) -> Res<String> {
    let fmt = text_of(format)?;
    let args_term = args.deref();
    let mut args: std::collections::VecDeque<Term> = match args_term.proper_list() {
        Some(items) => items.into(),
        None => vec![args_term.clone()].into(),
    };
    let mut out = String::new();
    let mut line_start = 0usize;
    let mut segment_start = 0usize;
    let mut fill_positions: Vec<(usize, char)> = Vec::new();
    let mut chars = fmt.chars().peekable();
    let next_arg = |args: &mut std::collections::VecDeque<Term>| {
        args.pop_front().ok_or_else(|| format_error("not enough arguments"))
    };
    while let Some(c) = chars.next() {
        if c != '~' {
            out.push(c);
            if c == '\n' {
                line_start = out.len();
                segment_start = out.len();
                fill_positions.clear();
            }
            continue;
        }
        let mut numeric: Option<i64> = None;
        let mut fill_char = ' ';
        if chars.peek() == Some(&'*') {
            chars.next();
            numeric = Some(int_arg(&next_arg(&mut args)?)?);
        } else if chars.peek() == Some(&'`') {
            chars.next();
            fill_char = chars.next().unwrap_or(' ');
        } else {
            let mut digits = String::new();
            while let Some(d) = chars.peek() {
                if d.is_ascii_digit() {
                    digits.push(*d);
                    chars.next();
                } else {
                    break;
                }
            }
            if !digits.is_empty() {
                numeric = digits.parse().ok();
            }
        }
        let directive = chars.next().ok_or_else(|| format_error("truncated format"))?;
        match directive {
            '~' => out.push('~'),
            'w' => {
                let a = next_arg(&mut args)?;
                out.push_str(&m.format(&a, false));
            }
            'p' => {
                let a = next_arg(&mut args)?;
                out.push_str(&m.format(&a, true));
            }
            'q' => {
                let a = next_arg(&mut args)?;
                out.push_str(&m.format(&a, true));
            }
            'a' => {
                let a = next_arg(&mut args)?;
                out.push_str(&text_of(&a)?);
            }
            's' => {
                let a = next_arg(&mut args)?;
                out.push_str(&text_of(&a)?);
            }
            'd' | 'D' => {
                let a = next_arg(&mut args)?;
                let value = match eval(&a)? {
                    Num::Int(i) => BigInt::from(i),
                    Num::Big(b) => b,
                    Num::Float(_) => return Err(format_error("~d expects an integer argument")),
                };
                let negative = value.sign() == num_bigint::Sign::Minus;
                let mut digits = value.magnitude().to_string();
                let mut frac = String::new();
                if let Some(n) = numeric.filter(|n| *n > 0) {
                    let n = n as usize;
                    while digits.len() <= n {
                        digits.insert(0, '0');
                    }
                    frac = digits.split_off(digits.len() - n);
                }
                if directive == 'D' {
                    let mut grouped = String::new();
                    for (i, ch) in digits.chars().enumerate() {
                        if i > 0 && (digits.len() - i) % 3 == 0 {
                            grouped.push(',');
                        }
                        grouped.push(ch);
                    }
                    digits = grouped;
                }
                if negative {
                    out.push('-');
                }
                out.push_str(&digits);
                if !frac.is_empty() {
                    out.push('.');
                    out.push_str(&frac);
                }
            }
            'f' | 'e' | 'g' => {
                let a = next_arg(&mut args)?;
                let value = eval(&a)?.as_f64();
                let precision = numeric.unwrap_or(6).max(0) as usize;
                match directive {
                    'f' => out.push_str(&format!("{:.*}", precision, value)),
                    'e' => {
                        let text = format!("{:.*e}", precision, value);
                        // C-style exponent: at least two digits with sign
                        let (mantissa, exp) = text.split_once('e').unwrap_or((&text, "0"));
                        let exp: i32 = exp.parse().unwrap_or(0);
                        out.push_str(&format!("{}e{}{:02}", mantissa, if exp < 0 { '-' } else { '+' }, exp.abs()));
                    }
                    _ => out.push_str(&format!("{}", value)),
                }
            }
            'n' => {
                for _ in 0..numeric.unwrap_or(1).max(1) {
                    out.push('\n');
                }
                line_start = out.len();
                segment_start = out.len();
                fill_positions.clear();
            }
            'c' => {
                let a = next_arg(&mut args)?;
                let code = int_arg(&a)?;
                let ch = char::from_u32(code as u32).ok_or_else(|| representation_error("character_code"))?;
                for _ in 0..numeric.unwrap_or(1).max(1) {
                    out.push(ch);
                }
            }
            'r' | 'R' => {
                let a = next_arg(&mut args)?;
                let radix = numeric.ok_or_else(|| format_error("~r requires a radix"))? as u32;
                let value = match eval(&a)? {
                    Num::Int(i) => BigInt::from(i),
                    Num::Big(b) => b,
                    Num::Float(_) => return Err(format_error("~r expects an integer argument")),
                };
                let text = value.to_str_radix(radix);
                out.push_str(&if directive == 'R' { text.to_uppercase() } else { text });
            }
            'i' => {
                next_arg(&mut args)?;
            }
            't' => fill_positions.push((out.len(), fill_char)),
            '|' | '+' => {
                let line_len = out[line_start..].chars().count();
                let segment_col = out[line_start..segment_start].chars().count();
                let target = match directive {
                    '+' => segment_col + numeric.unwrap_or(8) as usize,
                    _ => numeric.map(|n| n as usize).unwrap_or(line_len),
                };
                if line_len < target {
                    let pad = target - line_len;
                    let (pos, ch) = match fill_positions.first() {
                        Some(&(pos, ch)) => (pos, ch),
                        None if directive == '+' => (segment_start, ' '),
                        None => (out.len(), ' '),
                    };
                    let padding: String = std::iter::repeat_n(ch, pad).collect();
                    out.insert_str(pos, &padding);
                }
                segment_start = out.len();
                fill_positions.clear();
            }
            other => return Err(format_error(&format!("unknown directive ~{}", other))),
        }
    }
    if !args.is_empty() {
        return Err(format_error("too many arguments"));
    }
    Ok(out)
}

// ---- DCG ----------------------------------------------------------------

pub(crate) fn dcg_translate(m: &mut Machine, rule: &Term) -> Res<Term> {
    let rule = rule.deref();
    let (head, body) = match &rule {
        Term::Cmp(c) if c.name == atoms::DCG_ARROW && c.args.len() == 2 => {
            (c.args[0].deref(), c.args[1].clone())
        }
        _ => return Err(type_error("dcg_rule", rule.clone())),
    };
    let s0 = Term::fresh_var();
    let s = Term::fresh_var();
    let (head, pushback) = match &head {
        Term::Cmp(c) if c.name == atoms::COMMA && c.args.len() == 2 => {
            (c.args[0].deref(), Some(c.args[1].clone()))
        }
        _ => (head.clone(), None),
    };
    let new_head = match &head {
        Term::Atom(a) => Term::compound(*a, vec![s0.clone(), s.clone()]),
        Term::Cmp(c) => {
            let mut args = c.args.clone();
            args.push(s0.clone());
            args.push(s.clone());
            Term::compound(c.name, args)
        }
        Term::Var(_) => return Err(instantiation_error()),
        other => return Err(type_error("callable", other.clone())),
    };
    let new_body = match pushback {
        None => dcg_body(m, &body, s0, s)?,
        Some(list) => {
            let mid = Term::fresh_var();
            let first = dcg_body(m, &body, s0, mid.clone())?;
            let items = list.proper_list().ok_or_else(|| type_error("list", list.clone()))?;
            let second = Term::compound(atoms::EQUALS, vec![s, Term::list_with_tail(items, mid)]);
            Term::compound(atoms::COMMA, vec![first, second])
        }
    };
    Ok(Term::compound(atoms::NECK, vec![new_head, new_body]))
}

#[allow(clippy::only_used_in_recursion)]
pub(crate) fn dcg_body(m: &mut Machine, body: &Term, s0: Term, s: Term) -> Res<Term> {
    let body = body.deref();
    let eq = |a: Term, b: Term| Term::compound(atoms::EQUALS, vec![a, b]);
    match &body {
        Term::Var(_) => Ok(Term::compound_str("phrase", vec![body.clone(), s0, s])),
        Term::Atom(a) if *a == atoms::NIL => Ok(eq(s0, s)),
        Term::Atom(a) if *a == atoms::CUT => Ok(Term::compound(
            atoms::COMMA,
            vec![Term::Atom(atoms::CUT), eq(s0, s)],
        )),
        Term::Str(text) => {
            let items = text.chars().map(|c| Term::Int(c as i64)).collect();
            Ok(eq(s0, Term::list_with_tail(items, s)))
        }
        Term::Cmp(c) if c.name == atoms::DOT && c.args.len() == 2 => {
            let items = body.proper_list().ok_or_else(|| type_error("list", body.clone()))?;
            Ok(eq(s0, Term::list_with_tail(items, s)))
        }
        Term::Cmp(c) if c.name == atoms::COMMA && c.args.len() == 2 => {
            let mid = Term::fresh_var();
            let left = dcg_body(m, &c.args[0], s0, mid.clone())?;
            let right = dcg_body(m, &c.args[1], mid, s)?;
            Ok(Term::compound(atoms::COMMA, vec![left, right]))
        }
        Term::Cmp(c) if (c.name == atoms::SEMI || c.name == atoms::BAR) && c.args.len() == 2 => {
            let left = dcg_body(m, &c.args[0], s0.clone(), s.clone())?;
            let right = dcg_body(m, &c.args[1], s0, s)?;
            Ok(Term::compound(atoms::SEMI, vec![left, right]))
        }
        Term::Cmp(c) if c.name == atoms::ARROW && c.args.len() == 2 => {
            let mid = Term::fresh_var();
            let cond = dcg_body(m, &c.args[0], s0, mid.clone())?;
            let then = dcg_body(m, &c.args[1], mid, s)?;
            Ok(Term::compound(atoms::ARROW, vec![cond, then]))
        }
        Term::Cmp(c) if c.name == atoms::NOT_PROVABLE && c.args.len() == 1 => {
            let inner = dcg_body(m, &c.args[0], s0.clone(), Term::fresh_var())?;
            Ok(Term::compound(
                atoms::COMMA,
                vec![Term::compound(atoms::NOT_PROVABLE, vec![inner]), eq(s0, s)],
            ))
        }
        Term::Cmp(c) if c.name == atoms::CURLY && c.args.len() == 1 => Ok(Term::compound(
            atoms::COMMA,
            vec![c.args[0].clone(), eq(s0, s)],
        )),
        Term::Cmp(c) if c.name == atoms::CALL => {
            let mut args = c.args.clone();
            args.push(s0);
            args.push(s);
            Ok(Term::compound(atoms::CALL, args))
        }
        Term::Atom(a) => Ok(Term::compound(*a, vec![s0, s])),
        Term::Cmp(c) => {
            let mut args = c.args.clone();
            args.push(s0);
            args.push(s);
            Ok(Term::compound(c.name, args))
        }
        other => Err(type_error("callable", other.clone())),
    }
}
