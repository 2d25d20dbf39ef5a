//! The solver: clause database, choicepoint stack, trail and the main
//! resolution loop.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::rc::Rc;
use std::time::Instant;

use crate::builtins::{self, Builtin};
use rustc_hash::FxHashMap;
use crate::error::{
    existence_error, indicator, instantiation_error, permission_error, type_error, Flow, Res,
};
use crate::reader::{DoubleQuotes, Ops, Parser};
use crate::term::{atoms, var_serial, Atom, Term, VarRef};
use crate::writer::{format_term_with, WriteOptions};

pub struct Clause {
    pub head: Term,
    pub body: Term,
    pub nvars: usize,
    pub id: u64,
    first_arg: Option<IndexKey>,
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum IndexKey {
    Atom(Atom),
    Int(i64),
    Functor(Atom, usize),
}

fn index_key(term: &Term) -> Option<IndexKey> {
    match term {
        Term::Atom(a) => Some(IndexKey::Atom(*a)),
        Term::Int(i) => Some(IndexKey::Int(*i)),
        Term::Cmp(c) => Some(IndexKey::Functor(c.name, c.args.len())),
        _ => None,
    }
}

#[derive(Default)]
pub struct Pred {
    pub clauses: Rc<Vec<Rc<Clause>>>,
    pub dynamic: bool,
    pub library: bool,
    pub tabled: bool,
}

pub(crate) struct Frame {
    pub goal: Term,
    pub cutb: usize,
    pub next: Cont,
}

pub(crate) type Cont = Option<Rc<Frame>>;

// Continuations of deep non-tail recursion form long chains.
impl Drop for Frame {
    fn drop(&mut self) {
        let mut next = self.next.take();
        while let Some(rc) = next {
            match Rc::try_unwrap(rc) {
                Ok(mut frame) => next = frame.next.take(),
                Err(_) => break,
            }
        }
    }
}

pub(crate) fn push_goal(goal: Term, cutb: usize, next: Cont) -> Cont {
    Some(Rc::new(Frame { goal, cutb, next }))
}

pub(crate) type AltIter = std::iter::Peekable<Box<dyn Iterator<Item = Term>>>;

enum Alt {
    Clauses {
        goal: Term,
        clauses: Rc<Vec<Rc<Clause>>>,
        next: usize,
        cont: Cont,
    },
    Goal {
        goal: Term,
        cutb: usize,
        cont: Cont,
    },
    Iter {
        pattern: Term,
        alts: AltIter,
        cont: Cont,
    },
    Catch {
        catcher: Term,
        recovery: Term,
        cutb: usize,
        cont: Cont,
    },
    Barrier,
    Disabled,
}

struct ChoicePoint {
    alt: Alt,
    trail_len: usize,
    var_mark: u64,
}

pub enum StreamKind {
    Stdout,
    Stderr,
    Stdin,
    Text { text: Rc<str>, pos: usize },
    File(BufWriter<File>),
    Capture(String),
}

pub struct Stream {
    pub kind: StreamKind,
    pub alias: Option<Atom>,
}

pub struct Flags {
    pub double_quotes: DoubleQuotes,
    pub unknown_error: bool,
    pub occurs_check: bool,
}

pub struct Machine {
    pub(crate) db: FxHashMap<(Atom, usize), Pred>,
    pub(crate) builtins: FxHashMap<(Atom, usize), Builtin>,
    pub ops: Ops,
    pub flags: Flags,
    trail: Vec<VarRef>,
    cps: Vec<ChoicePoint>,
    pub(crate) globals: HashMap<Atom, Term>,
    pub(crate) streams: HashMap<i64, Stream>,
    pub(crate) next_stream: i64,
    pub(crate) current_output: i64,
    pub(crate) current_input: i64,
    stdout: BufWriter<std::io::Stdout>,
    next_clause_id: u64,
    pub(crate) loading_library: bool,
    pub(crate) tables: HashMap<String, Rc<Vec<Term>>>,
    pub(crate) tables_in_progress: HashSet<String>,
    pub(crate) inferences: u64,
    pub(crate) started: Instant,
    pub(crate) flag_values: HashMap<Atom, Term>,
    pub(crate) pending_init: Vec<Term>,
    unify_stack: Vec<(Term, Term)>,
}

pub fn cpu_seconds() -> f64 {
    thread_local! {
        static START: Instant = Instant::now();
    }
    START.with(|s| s.elapsed().as_secs_f64())
}

const PRELUDE: &str = include_str!("prelude.pl");

impl Default for Machine {
    fn default() -> Self {
        Self::new()
    }
}

impl Machine {
    pub fn new() -> Machine {
        let mut streams = HashMap::new();
        streams.insert(
            0,
            Stream {
                kind: StreamKind::Stdin,
                alias: Some(Atom::new("user_input")),
            },
        );
        streams.insert(
            1,
            Stream {
                kind: StreamKind::Stdout,
                alias: Some(Atom::new("user_output")),
            },
        );
        streams.insert(
            2,
            Stream {
                kind: StreamKind::Stderr,
                alias: Some(Atom::new("user_error")),
            },
        );
        let mut machine = Machine {
            db: FxHashMap::default(),
            builtins: builtins::table(),
            ops: Ops::default(),
            flags: Flags {
                double_quotes: DoubleQuotes::Codes,
                unknown_error: true,
                occurs_check: false,
            },
            trail: Vec::new(),
            cps: Vec::new(),
            globals: HashMap::new(),
            streams,
            next_stream: 3,
            current_output: 1,
            current_input: 0,
            stdout: BufWriter::new(std::io::stdout()),
            next_clause_id: 1,
            loading_library: true,
            tables: HashMap::new(),
            tables_in_progress: HashSet::new(),
            inferences: 0,
            started: Instant::now(),
            flag_values: HashMap::new(),
            pending_init: Vec::new(),
            unify_stack: Vec::new(),
        };
        machine.consult_text(PRELUDE, "prelude");
        machine.loading_library = false;
        machine.flags.double_quotes = DoubleQuotes::String;
        machine
    }

    // ---- output -------------------------------------------------------

    pub(crate) fn write_to(&mut self, stream: i64, text: &str) -> Res<()> {
        let s = self
            .streams
            .get_mut(&stream)
            .ok_or_else(|| existence_error("stream", Term::Int(stream)))?;
        match &mut s.kind {
            StreamKind::Stdout => {
                let _ = self.stdout.write_all(text.as_bytes());
            }
            StreamKind::Stderr => {
                let _ = self.stdout.flush();
                let _ = std::io::stderr().write_all(text.as_bytes());
            }
            StreamKind::File(f) => {
                let _ = f.write_all(text.as_bytes());
            }
            StreamKind::Capture(buf) => buf.push_str(text),
            StreamKind::Stdin | StreamKind::Text { .. } => {
                return Err(permission_error("output", "stream", Term::Int(stream)))
            }
        }
        Ok(())
    }

    /// Redirects standard output into an in-memory buffer.
    pub fn capture_stdout(&mut self) {
        if let Some(s) = self.streams.get_mut(&1) {
            s.kind = StreamKind::Capture(String::new());
        }
    }

    /// Drains text captured after [`Machine::capture_stdout`].
    pub fn take_output(&mut self) -> String {
        match self.streams.get_mut(&1).map(|s| &mut s.kind) {
            Some(StreamKind::Capture(buf)) => std::mem::take(buf),
            _ => String::new(),
        }
    }

    /// Parses and runs a goal once, reporting exceptions as text.
    pub fn query(&mut self, text: &str) -> Result<bool, String> {
        let read = crate::reader::parse_term_text(text, &self.ops, self.flags.double_quotes)
            .map_err(|e| format!("syntax error: {}", e.message))?;
        match self.run_once(&read.term) {
            Ok(ok) => Ok(ok),
            Err(flow) => Err(self.describe_flow(flow)),
        }
    }

    pub(crate) fn write_out(&mut self, text: &str) -> Res<()> {
        self.write_to(self.current_output, text)
    }

    pub fn flush(&mut self) {
        let _ = self.stdout.flush();
        for s in self.streams.values_mut() {
            if let StreamKind::File(f) = &mut s.kind {
                let _ = f.flush();
            }
        }
    }

    pub fn format(&self, term: &Term, quoted: bool) -> String {
        format_term_with(
            term,
            &self.ops,
            WriteOptions {
                quoted,
                ignore_ops: false,
            },
        )
    }

    // ---- bindings -----------------------------------------------------

    pub(crate) fn bind(&mut self, var: &VarRef, value: Term) {
        *var.value.borrow_mut() = Some(value);
        if let Some(top) = self.cps.last() {
            if var.id < top.var_mark {
                self.trail.push(var.clone());
            }
        }
    }

    fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            let v = self.trail.pop().expect("trail entry");
            *v.value.borrow_mut() = None;
        }
    }

    fn occurs(var: &VarRef, term: &Term) -> bool {
        let mut stack = vec![term.clone()];
        while let Some(t) = stack.pop() {
            match t.deref() {
                Term::Var(v) if Rc::ptr_eq(&v, var) => return true,
                Term::Cmp(c) => stack.extend(c.args.iter().cloned()),
                _ => {}
            }
        }
        false
    }

    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let mut stack = std::mem::take(&mut self.unify_stack);
        stack.clear();
        stack.push((a.clone(), b.clone()));
        let ok = self.unify_with(&mut stack);
        stack.clear();
        self.unify_stack = stack;
        ok
    }

    fn unify_with(&mut self, stack: &mut Vec<(Term, Term)>) -> bool {
        while let Some((x, y)) = stack.pop() {
            let x = x.deref();
            let y = y.deref();
            match (&x, &y) {
                (Term::Var(v1), Term::Var(v2)) => {
                    if !Rc::ptr_eq(v1, v2) {
                        if v1.id < v2.id {
                            self.bind(v2, x.clone());
                        } else {
                            self.bind(v1, y.clone());
                        }
                    }
                }
                (Term::Var(v), _) => {
                    if self.flags.occurs_check && Self::occurs(v, &y) {
                        return false;
                    }
                    self.bind(v, y.clone())
                }
                (_, Term::Var(v)) => {
                    if self.flags.occurs_check && Self::occurs(v, &x) {
                        return false;
                    }
                    self.bind(v, x.clone())
                }
                (Term::Atom(p), Term::Atom(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::Int(p), Term::Int(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::BigInt(p), Term::BigInt(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::Float(p), Term::Float(q)) => {
                    if p.to_bits() != q.to_bits() && p != q {
                        return false;
                    }
                }
                (Term::Str(p), Term::Str(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::Cmp(p), Term::Cmp(q)) => {
                    if Rc::ptr_eq(p, q) {
                        continue;
                    }
                    if p.name != q.name || p.args.len() != q.args.len() {
                        return false;
                    }
                    for (s, t) in p.args.iter().zip(q.args.iter()).rev() {
                        stack.push((s.clone(), t.clone()));
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Unifies and undoes the bindings again; reports whether it succeeded.
    pub(crate) fn unifiable(&mut self, a: &Term, b: &Term) -> bool {
        self.push_cp(Alt::Barrier);
        let ok = self.unify(a, b);
        self.pop_undo();
        ok
    }

    fn push_cp(&mut self, alt: Alt) {
        self.cps.push(ChoicePoint {
            alt,
            trail_len: self.trail.len(),
            var_mark: var_serial(),
        });
    }

    fn pop_undo(&mut self) {
        if let Some(cp) = self.cps.pop() {
            self.undo_to(cp.trail_len);
        }
    }

    pub(crate) fn cut_to(&mut self, height: usize) {
        if self.cps.len() > height {
            self.cps.truncate(height);
        }
    }

    // ---- database -----------------------------------------------------

    fn compile_term(term: &Term, map: &mut Vec<VarRef>) -> Term {
        match term.deref() {
            Term::Var(v) => {
                let index = match map.iter().position(|m| Rc::ptr_eq(m, &v)) {
                    Some(i) => i,
                    None => {
                        map.push(v.clone());
                        map.len() - 1
                    }
                };
                Term::Local(index as u32)
            }
            Term::Cmp(c) => {
                Term::compound(c.name, c.args.iter().map(|a| Self::compile_term(a, map)).collect())
            }
            other => other,
        }
    }

    /// Wraps variables in goal positions into `call/1`.
    fn wrap_body(body: &Term) -> Term {
        let body = body.deref();
        match &body {
            Term::Var(_) => Term::compound(atoms::CALL, vec![body.clone()]),
            Term::Cmp(c)
                if c.args.len() == 2
                    && (c.name == atoms::COMMA
                        || c.name == atoms::SEMI
                        || c.name == atoms::ARROW
                        || c.name == atoms::SOFT_ARROW) =>
            {
                Term::compound(
                    c.name,
                    vec![Self::wrap_body(&c.args[0]), Self::wrap_body(&c.args[1])],
                )
            }
            Term::Cmp(c) if c.args.len() == 1 && c.name == atoms::NOT_PROVABLE => {
                Term::compound(c.name, vec![Self::wrap_body(&c.args[0])])
            }
            _ => body,
        }
    }

    fn is_control(name: Atom, arity: usize) -> bool {
        matches!(
            (name, arity),
            (atoms::COMMA, 2)
                | (atoms::SEMI, 2)
                | (atoms::ARROW, 2)
                | (atoms::SOFT_ARROW, 2)
                | (atoms::CUT, 0)
                | (atoms::TRUE, 0)
                | (atoms::FAIL, 0)
                | (atoms::FALSE, 0)
                | (atoms::NOT_PROVABLE, 1)
        ) || (name == atoms::CALL && arity >= 1)
    }

    pub(crate) fn split_clause(term: &Term) -> Res<(Term, Term)> {
        let term = term.deref();
        let (head, body) = match &term {
            Term::Cmp(c) if c.name == atoms::NECK && c.args.len() == 2 => {
                (c.args[0].deref(), c.args[1].deref())
            }
            _ => (term.clone(), Term::Atom(atoms::TRUE)),
        };
        match &head {
            Term::Var(_) => return Err(instantiation_error()),
            Term::Atom(_) | Term::Cmp(_) => {}
            _ => return Err(type_error("callable", head.clone())),
        }
        match &body {
            Term::Int(_) | Term::BigInt(_) | Term::Float(_) | Term::Str(_) => {
                return Err(type_error("callable", body.clone()))
            }
            _ => {}
        }
        Ok((head, body))
    }

    pub fn add_clause(&mut self, term: &Term, at_end: bool) -> Res<()> {
        let (head, body) = Self::split_clause(term)?;
        let (name, arity) = head.functor().expect("callable head");
        if Self::is_control(name, arity) || self.builtins.contains_key(&(name, arity)) {
            return Err(permission_error(
                "modify",
                "static_procedure",
                indicator(name, arity),
            ));
        }
        let body = Self::wrap_body(&body);
        let mut map = Vec::new();
        let head_c = Self::compile_term(&head, &mut map);
        let body_c = Self::compile_term(&body, &mut map);
        let first_arg = head_c.args().first().and_then(index_key);
        let clause = Rc::new(Clause {
            head: head_c,
            body: body_c,
            nvars: map.len(),
            id: self.next_clause_id,
            first_arg,
        });
        self.next_clause_id += 1;
        let loading_library = self.loading_library;
        let pred = self.db.entry((name, arity)).or_default();
        if pred.library && !loading_library {
            if pred.dynamic {
                // library-declared dynamic predicates keep their clauses
            } else {
                pred.clauses = Rc::new(Vec::new());
                pred.library = false;
            }
        }
        if loading_library && pred.clauses.is_empty() {
            pred.library = true;
        }
        let list = Rc::make_mut(&mut pred.clauses);
        if at_end {
            list.push(clause);
        } else {
            list.insert(0, clause);
        }
        Ok(())
    }

    pub(crate) fn declare_dynamic(&mut self, name: Atom, arity: usize) -> Res<()> {
        if self.builtins.contains_key(&(name, arity)) || Self::is_control(name, arity) {
            return Err(permission_error(
                "modify",
                "static_procedure",
                indicator(name, arity),
            ));
        }
        let loading_library = self.loading_library;
        let pred = self.db.entry((name, arity)).or_default();
        if pred.library && !loading_library {
            pred.clauses = Rc::new(Vec::new());
            pred.library = false;
        }
        pred.dynamic = true;
        Ok(())
    }

    pub(crate) fn erase_clause(&mut self, key: (Atom, usize), id: u64) -> bool {
        if let Some(pred) = self.db.get_mut(&key) {
            let list = Rc::make_mut(&mut pred.clauses);
            if let Some(pos) = list.iter().position(|c| c.id == id) {
                list.remove(pos);
                return true;
            }
        }
        false
    }

    pub(crate) fn instantiate(term: &Term, vars: &mut [Option<Term>]) -> Term {
        match term {
            Term::Local(i) => {
                let slot = &mut vars[*i as usize];
                match slot {
                    Some(v) => v.clone(),
                    None => {
                        let v = Term::fresh_var();
                        *slot = Some(v.clone());
                        v
                    }
                }
            }
            Term::Cmp(c) => Term::compound(
                c.name,
                c.args.iter().map(|a| Self::instantiate(a, vars)).collect(),
            ),
            other => other.clone(),
        }
    }

    /// A fresh `Head :- Body` copy of a stored clause.
    pub(crate) fn clause_term(clause: &Clause) -> (Term, Term) {
        let mut vars = vec![None; clause.nvars];
        let head = Self::instantiate(&clause.head, &mut vars);
        let body = Self::instantiate(&clause.body, &mut vars);
        (head, body)
    }

    // ---- consulting -----------------------------------------------------

    pub fn consult_file(&mut self, path: &str) -> Result<usize, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path, e))?;
        Ok(self.consult_text(&text, path))
    }

    /// Loads clauses and runs directives; returns the number of errors
    /// reported on standard error.
    pub fn consult_text(&mut self, text: &str, origin: &str) -> usize {
        let mut pos = 0;
        let mut errors = 0;
        loop {
            let (result, next_pos) = {
                let mut parser = Parser::new(text, pos, &self.ops, self.flags.double_quotes);
                let result = parser.read_clause();
                if result.is_err() {
                    parser.recover();
                }
                (result, parser.position())
            };
            pos = next_pos;
            match result {
                Ok(None) => break,
                Ok(Some(read)) => {
                    if let Err(message) = self.handle_clause(&read.term) {
                        errors += 1;
                        self.warn(&format!("{}: {}", origin, message));
                    }
                }
                Err(e) => {
                    errors += 1;
                    let line = text[..e.offset.min(text.len())].matches('\n').count() + 1;
                    self.warn(&format!("{}:{}: syntax error: {}", origin, line, e.message));
                }
            }
        }
        errors
    }

    pub(crate) fn warn(&mut self, message: &str) {
        self.flush();
        eprintln!("Warning: {}", message);
    }

    fn handle_clause(&mut self, term: &Term) -> Result<(), String> {
        let term = term.deref();
        if let Term::Cmp(c) = &term {
            if (c.name == atoms::NECK || c.name == atoms::QUESTION) && c.args.len() == 1 {
                let goal = c.args[0].clone();
                return match self.run_once(&goal) {
                    Ok(true) => Ok(()),
                    Ok(false) => Err(format!("goal (directive) failed: {}", self.format(&goal, true))),
                    Err(Flow::Throw(ball)) => Err(format!(
                        "goal (directive) raised exception: {}",
                        self.format(&ball, true)
                    )),
                    Err(Flow::Halt(code)) => {
                        self.flush();
                        std::process::exit(code)
                    }
                };
            }
            if c.name == atoms::DCG_ARROW && c.args.len() == 2 {
                let clause = crate::builtins::dcg_translate(self, &term)
                    .map_err(|f| self.describe_flow(f))?;
                return self
                    .add_clause(&clause, true)
                    .map_err(|f| self.describe_flow(f));
            }
        }
        self.add_clause(&term, true).map_err(|f| self.describe_flow(f))
    }

    pub fn describe_flow(&self, flow: Flow) -> String {
        match flow {
            Flow::Throw(ball) => self.format(&ball, true),
            Flow::Halt(code) => format!("halt({})", code),
        }
    }

    // ---- solving --------------------------------------------------------

    /// Runs a goal to its first solution, keeping the bindings.
    pub fn run_once(&mut self, goal: &Term) -> Res<bool> {
        let base_cp = self.cps.len();
        self.push_cp(Alt::Barrier);
        let base = self.cps.len();
        let result = self.run(push_goal(goal.clone(), base, None), base, false);
        // drop remaining alternatives but keep the bindings
        self.cut_to(base_cp);
        result
    }

    /// Calls `on_solution` for each solution of `goal` until it returns
    /// `false`; all bindings are undone afterwards.
    pub(crate) fn for_each_solution(
        &mut self,
        goal: &Term,
        mut on_solution: impl FnMut(&mut Machine) -> Res<bool>,
    ) -> Res<()> {
        let barrier = self.cps.len();
        self.push_cp(Alt::Barrier);
        let base = self.cps.len();
        let mut result = self.run(push_goal(goal.clone(), base, None), base, false);
        let outcome = loop {
            match result {
                Ok(true) => match on_solution(self) {
                    Ok(true) => result = self.run(None, base, true),
                    Ok(false) => break Ok(()),
                    Err(e) => break Err(e),
                },
                Ok(false) => break Ok(()),
                Err(e) => break Err(e),
            }
        };
        self.cut_to(barrier + 1);
        self.pop_undo();
        outcome
    }

    fn run(&mut self, mut cont: Cont, base: usize, mut backtracking: bool) -> Res<bool> {
        loop {
            if backtracking {
                match self.backtrack(base) {
                    Ok(Some(c)) => {
                        cont = c;
                        backtracking = false;
                    }
                    Ok(None) => return Ok(false),
                    Err(Flow::Throw(ball)) => {
                        cont = self.handle_throw(ball, base)?;
                        backtracking = false;
                    }
                    Err(halt) => return Err(halt),
                }
                continue;
            }
            let frame = match cont.take() {
                None => return Ok(true),
                Some(f) => f,
            };
            let goal = frame.goal.clone();
            let cutb = frame.cutb;
            let next = frame.next.clone();
            drop(frame);
            match self.step(goal, cutb, next) {
                Ok(Some(c)) => cont = c,
                Ok(None) => backtracking = true,
                Err(Flow::Throw(ball)) => cont = self.handle_throw(ball, base)?,
                Err(halt) => return Err(halt),
            }
        }
    }

    fn handle_throw(&mut self, ball: Term, base: usize) -> Res<Cont> {
        let ball = ball.resolve();
        while self.cps.len() > base {
            let cp = self.cps.pop().expect("choicepoint");
            self.undo_to(cp.trail_len);
            if let Alt::Catch {
                catcher,
                recovery,
                cutb,
                cont,
            } = cp.alt
            {
                let mark = self.trail.len();
                self.push_cp(Alt::Barrier);
                let matched = self.unify(&catcher, &ball);
                if matched {
                    // keep the catcher bindings: drop the barrier without undo
                    let cp = self.cps.pop().expect("barrier");
                    let _ = cp;
                    return Ok(push_goal(recovery, cutb, cont));
                }
                self.pop_undo();
                self.undo_to(mark);
            }
        }
        Err(Flow::Throw(ball))
    }

    fn backtrack(&mut self, base: usize) -> Res<Option<Cont>> {
        loop {
            if self.cps.len() <= base {
                return Ok(None);
            }
            let cp = self.cps.pop().expect("choicepoint");
            self.undo_to(cp.trail_len);
            match cp.alt {
                Alt::Goal { goal, cutb, cont } => return Ok(Some(push_goal(goal, cutb, cont))),
                Alt::Clauses {
                    goal,
                    clauses,
                    next,
                    cont,
                } => {
                    if let Some(c) = self.try_clauses(goal, clauses, next, cont)? {
                        return Ok(Some(c));
                    }
                }
                Alt::Iter {
                    pattern,
                    alts,
                    cont,
                } => {
                    if let Some(c) = self.try_alternatives(pattern, alts, cont) {
                        return Ok(Some(c));
                    }
                }
                Alt::Catch { .. } | Alt::Disabled => {}
                Alt::Barrier => return Ok(None),
            }
        }
    }

    pub(crate) fn try_alternatives(&mut self, pattern: Term, mut alts: AltIter, cont: Cont) -> Option<Cont> {
        let candidate = alts.next()?;
        if alts.peek().is_some() {
            // on failure, resume from this choicepoint
            self.push_cp(Alt::Iter {
                pattern: pattern.clone(),
                alts,
                cont: cont.clone(),
            });
        }
        if self.unify(&pattern, &candidate) {
            Some(cont)
        } else {
            None
        }
    }

    fn try_clauses(
        &mut self,
        goal: Term,
        clauses: Rc<Vec<Rc<Clause>>>,
        start: usize,
        cont: Cont,
    ) -> Res<Option<Cont>> {
        let first = goal.args().first().map(|a| index_key(&a.deref()));
        let matches = |c: &Clause| match (&first, &c.first_arg) {
            (Some(Some(k)), Some(ck)) => k == ck,
            _ => true,
        };
        let Some(i) = (start..clauses.len()).find(|&i| matches(&clauses[i])) else {
            return Ok(None);
        };
        let cutb = self.cps.len();
        if let Some(j) = (i + 1..clauses.len()).find(|&j| matches(&clauses[j])) {
            self.push_cp(Alt::Clauses {
                goal: goal.clone(),
                clauses: clauses.clone(),
                next: j,
                cont: cont.clone(),
            });
        }
        let clause = &clauses[i];
        let mut vars = vec![None; clause.nvars];
        let head = Self::instantiate(&clause.head, &mut vars);
        let goal_args = goal.args();
        let head_args = head.args();
        for (h, g) in head_args.iter().zip(goal_args.iter()) {
            if !self.unify(h, g) {
                return Ok(None);
            }
        }
        if matches!(clause.body, Term::Atom(a) if a == atoms::TRUE) {
            return Ok(Some(cont));
        }
        let body = Self::instantiate(&clause.body, &mut vars);
        Ok(Some(push_goal(body, cutb, cont)))
    }

    fn add_args(goal: &Term, extra: &[Term]) -> Res<Term> {
        let goal = goal.deref();
        match &goal {
            Term::Var(_) => Err(instantiation_error()),
            Term::Atom(a) => Ok(Term::compound(*a, extra.to_vec())),
            Term::Cmp(c) => {
                let mut args = c.args.clone();
                args.extend_from_slice(extra);
                Ok(Term::compound(c.name, args))
            }
            _ => Err(type_error("callable", goal.clone())),
        }
    }

    fn step(&mut self, goal: Term, cutb: usize, next: Cont) -> Res<Option<Cont>> {
        self.inferences += 1;
        let goal = goal.deref();
        let (name, arity) = match &goal {
            Term::Var(_) => return Err(instantiation_error()),
            Term::Atom(a) => (*a, 0),
            Term::Cmp(c) => (c.name, c.args.len()),
            _ => return Err(type_error("callable", goal.clone())),
        };
        let args = goal.args();
        match (name, arity) {
            (atoms::TRUE, 0) => return Ok(Some(next)),
            (atoms::FAIL, 0) | (atoms::FALSE, 0) => return Ok(None),
            (atoms::CUT, 0) => {
                self.cut_to(cutb);
                return Ok(Some(next));
            }
            (atoms::COMMA, 2) => {
                let rest = push_goal(args[1].clone(), cutb, next);
                return Ok(Some(push_goal(args[0].clone(), cutb, rest)));
            }
            (atoms::SEMI, 2) => {
                let left = args[0].deref();
                if let Term::Cmp(c) = &left {
                    if c.args.len() == 2 && c.name == atoms::ARROW {
                        return Ok(Some(self.if_then_else(
                            c.args[0].clone(),
                            c.args[1].clone(),
                            args[1].clone(),
                            cutb,
                            next,
                        )));
                    }
                    if c.args.len() == 2 && c.name == atoms::SOFT_ARROW {
                        let b = self.cps.len();
                        self.push_cp(Alt::Goal {
                            goal: args[1].clone(),
                            cutb,
                            cont: next.clone(),
                        });
                        let then = push_goal(c.args[1].clone(), cutb, next);
                        let mark = push_goal(
                            Term::compound(atoms::SOFT_CUT, vec![Term::Int(b as i64)]),
                            0,
                            then,
                        );
                        return Ok(Some(push_goal(c.args[0].clone(), b + 1, mark)));
                    }
                }
                self.push_cp(Alt::Goal {
                    goal: args[1].clone(),
                    cutb,
                    cont: next.clone(),
                });
                return Ok(Some(push_goal(left, cutb, next)));
            }
            (atoms::ARROW, 2) => {
                return Ok(Some(self.if_then_else(
                    args[0].clone(),
                    args[1].clone(),
                    Term::Atom(atoms::FAIL),
                    cutb,
                    next,
                )));
            }
            (atoms::SOFT_ARROW, 2) => {
                let then = push_goal(args[1].clone(), cutb, next);
                let b = self.cps.len();
                return Ok(Some(push_goal(args[0].clone(), b, then)));
            }
            (atoms::NOT_PROVABLE, 1) => {
                return Ok(Some(self.if_then_else(
                    args[0].clone(),
                    Term::Atom(atoms::FAIL),
                    Term::Atom(atoms::TRUE),
                    cutb,
                    next,
                )));
            }
            (atoms::ITE_CUT, 1) => {
                if let Term::Int(b) = args[0].deref() {
                    self.cut_to(b as usize);
                }
                return Ok(Some(next));
            }
            (atoms::SOFT_CUT, 1) => {
                if let Term::Int(b) = args[0].deref() {
                    if let Some(cp) = self.cps.get_mut(b as usize) {
                        if matches!(cp.alt, Alt::Goal { .. }) {
                            cp.alt = Alt::Disabled;
                        }
                    }
                }
                return Ok(Some(next));
            }
            (atoms::CATCH_EXIT, 1) => {
                if let Term::Int(b) = args[0].deref() {
                    let b = b as usize;
                    if self.cps.len() == b + 1 && matches!(self.cps[b].alt, Alt::Catch { .. }) {
                        self.cps.pop();
                    }
                }
                return Ok(Some(next));
            }
            (atoms::CALL, n) if n >= 1 => {
                let target = Self::add_args(&args[0], &args[1..])?;
                let b = self.cps.len();
                return Ok(Some(push_goal(target, b, next)));
            }
            _ => {}
        }
        if name == atoms::UNTABLED && arity == 1 {
            let target = args[0].deref();
            let Some(key) = target.functor() else {
                return Err(type_error("callable", target));
            };
            let clauses = match self.db.get(&key) {
                Some(pred) => pred.clauses.clone(),
                None => return Ok(None),
            };
            return self.try_clauses(target, clauses, 0, next);
        }
        if name == atoms::CATCH && arity == 3 {
            let b = self.cps.len();
            self.push_cp(Alt::Catch {
                catcher: args[1].clone(),
                recovery: args[2].clone(),
                cutb,
                cont: next.clone(),
            });
            let exit = push_goal(
                Term::compound(atoms::CATCH_EXIT, vec![Term::Int(b as i64)]),
                0,
                next,
            );
            return Ok(Some(push_goal(args[0].clone(), b + 1, exit)));
        }
        if let Some(builtin) = self.builtins.get(&(name, arity)).cloned() {
            return match builtin {
                Builtin::Det(f) => Ok(if f(self, args)? { Some(next) } else { None }),
                Builtin::NonDet(f) => match f(self, args)? {
                    None => Ok(None),
                    Some((pattern, alts)) => {
                        let alts: AltIter = alts.peekable();
                        Ok(self.try_alternatives(pattern, alts, next))
                    }
                },
                Builtin::Goal(f) => {
                    let expanded = f(self, args)?;
                    let b = self.cps.len();
                    Ok(Some(push_goal(expanded, b, next)))
                }
            };
        }
        let (clauses, tabled) = match self.db.get(&(name, arity)) {
            Some(pred) => (pred.clauses.clone(), pred.tabled),
            None => {
                if self.flags.unknown_error {
                    return Err(existence_error("procedure", indicator(name, arity)));
                }
                return Ok(None);
            }
        };
        if tabled {
            return self.tabled_call(goal, clauses, next);
        }
        self.try_clauses(goal, clauses, 0, next)
    }

    fn if_then_else(&mut self, cond: Term, then: Term, otherwise: Term, cutb: usize, next: Cont) -> Cont {
        let b = self.cps.len();
        self.push_cp(Alt::Goal {
            goal: otherwise,
            cutb,
            cont: next.clone(),
        });
        let then = push_goal(then, cutb, next);
        let mark = push_goal(
            Term::compound(atoms::ITE_CUT, vec![Term::Int(b as i64)]),
            0,
            then,
        );
        push_goal(cond, b + 1, mark)
    }

    fn tabled_call(&mut self, goal: Term, clauses: Rc<Vec<Rc<Clause>>>, next: Cont) -> Res<Option<Cont>> {
        let key = self.variant_key_of(&goal);
        if let Some(answers) = self.tables.get(&key).cloned() {
            let alts: Box<dyn Iterator<Item = Term>> =
                Box::new((0..answers.len()).map(move |i| answers[i].clone()));
            return Ok(self.try_alternatives(goal, alts.peekable(), next));
        }
        if self.tables_in_progress.contains(&key) {
            return self.try_clauses(goal, clauses, 0, next);
        }
        self.tables_in_progress.insert(key.clone());
        let mut answers: Vec<Term> = Vec::new();
        let mut seen = HashSet::new();
        let untabled = Term::compound_str("$untabled", vec![goal.clone()]);
        let result = self.for_each_solution(&untabled, |m| {
            let answer = goal.resolve();
            let k = m.variant_key_of(&answer);
            if seen.insert(k) {
                answers.push(answer);
            }
            Ok(true)
        });
        self.tables_in_progress.remove(&key);
        result?;
        let answers = Rc::new(answers);
        self.tables.insert(key, answers.clone());
        let alts: Box<dyn Iterator<Item = Term>> =
            Box::new((0..answers.len()).map(move |i| answers[i].clone()));
        Ok(self.try_alternatives(goal, alts.peekable(), next))
    }

    /// Textual key identifying a term up to variable renaming.
    pub(crate) fn variant_key_of(&self, term: &Term) -> String {
        fn number(term: &Term, seen: &mut Vec<VarRef>) -> Term {
            match term.deref() {
                Term::Var(v) => {
                    let i = match seen.iter().position(|s| Rc::ptr_eq(s, &v)) {
                        Some(i) => i,
                        None => {
                            seen.push(v.clone());
                            seen.len() - 1
                        }
                    };
                    Term::compound_str("$VAR", vec![Term::Int(i as i64)])
                }
                Term::Cmp(c) => Term::compound(c.name, c.args.iter().map(|a| number(a, seen)).collect()),
                other => other,
            }
        }
        let numbered = number(term, &mut Vec::new());
        self.format(&numbered, true)
    }
}
