//! Term representation: interned atoms, reference-counted structures and
//! mutable variable cells.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use num_bigint::BigInt;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom(u32);

macro_rules! predefined_atoms {
    ($($ident:ident => $text:expr),* $(,)?) => {
        pub mod atoms {
            use super::Atom;
            predefined_atoms!(@consts 0u32; $($ident),*);
            pub(super) const TEXTS: &[&str] = &[$($text),*];
        }
    };
    (@consts $n:expr; $head:ident $(, $tail:ident)*) => {
        pub const $head: Atom = Atom($n);
        predefined_atoms!(@consts $n + 1u32; $($tail),*);
    };
    (@consts $n:expr;) => {};
}

predefined_atoms! {
    NIL => "[]",
    DOT => "[|]",
    CURLY => "{}",
    COMMA => ",",
    SEMI => ";",
    ARROW => "->",
    SOFT_ARROW => "*->",
    NECK => ":-",
    TRUE => "true",
    FAIL => "fail",
    FALSE => "false",
    CUT => "!",
    MINUS => "-",
    PLUS => "+",
    SLASH => "/",
    EQUALS => "=",
    NOT_PROVABLE => "\\+",
    CALL => "call",
    ERROR => "error",
    END_OF_FILE => "end_of_file",
    BAR => "|",
    DCG_ARROW => "-->",
    EMPTY => "",
    USER => "user",
    ON => "on",
    OFF => "off",
    QUESTION => "?-",
    CATCH_EXIT => "$catch_exit",
    ITE_CUT => "$ite_cut",
    SOFT_CUT => "$soft_cut",
    CALL_CLEANUP_MARK => "$cleanup",
    CATCH => "catch",
    UNTABLED => "$untabled",
}

struct Interner {
    ids: HashMap<Rc<str>, u32>,
    names: Vec<Rc<str>>,
}

impl Interner {
    fn new() -> Self {
        let mut interner = Interner {
            ids: HashMap::new(),
            names: Vec::new(),
        };
        for text in atoms::TEXTS {
            interner.intern(text);
        }
        interner
    }

    fn intern(&mut self, text: &str) -> u32 {
        if let Some(&id) = self.ids.get(text) {
            return id;
        }
        let id = self.names.len() as u32;
        let rc: Rc<str> = Rc::from(text);
        self.names.push(rc.clone());
        self.ids.insert(rc, id);
        id
    }
}

thread_local! {
    static INTERNER: RefCell<Interner> = RefCell::new(Interner::new());
    static NEXT_VAR: Cell<u64> = const { Cell::new(1) };
}

impl Atom {
    pub fn new(text: &str) -> Atom {
        INTERNER.with(|i| Atom(i.borrow_mut().intern(text)))
    }

    pub fn name(self) -> Rc<str> {
        INTERNER.with(|i| i.borrow().names[self.0 as usize].clone())
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

pub struct VarCell {
    pub id: u64,
    pub value: RefCell<Option<Term>>,
}

pub type VarRef = Rc<VarCell>;

/// Serial assigned to the next fresh variable; choicepoints record it so
/// bindings of younger variables can skip the trail.
pub fn var_serial() -> u64 {
    NEXT_VAR.with(|c| c.get())
}

pub struct Compound {
    pub name: Atom,
    pub args: Vec<Term>,
}

#[derive(Clone)]
pub enum Term {
    Var(VarRef),
    /// Clause-local variable slot, only present in stored clauses.
    Local(u32),
    Atom(Atom),
    Int(i64),
    BigInt(Rc<BigInt>),
    Float(f64),
    Str(Rc<str>),
    Cmp(Rc<Compound>),
}

impl Term {
    pub fn fresh_var() -> Term {
        let id = NEXT_VAR.with(|c| {
            let id = c.get();
            c.set(id + 1);
            id
        });
        Term::Var(Rc::new(VarCell {
            id,
            value: RefCell::new(None),
        }))
    }

    pub fn atom(text: &str) -> Term {
        Term::Atom(Atom::new(text))
    }

    pub fn compound(name: Atom, args: Vec<Term>) -> Term {
        if args.is_empty() {
            Term::Atom(name)
        } else {
            Term::Cmp(Rc::new(Compound { name, args }))
        }
    }

    pub fn compound_str(name: &str, args: Vec<Term>) -> Term {
        Term::compound(Atom::new(name), args)
    }

    pub fn string(text: &str) -> Term {
        Term::Str(Rc::from(text))
    }

    pub fn integer(value: BigInt) -> Term {
        use num_traits::ToPrimitive;
        match value.to_i64() {
            Some(small) => Term::Int(small),
            None => Term::BigInt(Rc::new(value)),
        }
    }

    pub fn nil() -> Term {
        Term::Atom(atoms::NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::compound(atoms::DOT, vec![head, tail])
    }

    pub fn list_from(items: Vec<Term>) -> Term {
        Term::list_with_tail(items, Term::nil())
    }

    pub fn list_with_tail(items: Vec<Term>, tail: Term) -> Term {
        let mut list = tail;
        for item in items.into_iter().rev() {
            list = Term::cons(item, list);
        }
        list
    }

    /// Follows variable bindings until an unbound variable or a non-variable.
    pub fn deref(&self) -> Term {
        let mut current = self.clone();
        loop {
            let next = match &current {
                Term::Var(v) => v.value.borrow().clone(),
                _ => None,
            };
            match next {
                Some(bound) => current = bound,
                None => return current,
            }
        }
    }

    pub fn is_callable(&self) -> bool {
        matches!(self, Term::Atom(_) | Term::Cmp(_))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Term::Atom(_) | Term::Int(_) | Term::BigInt(_) | Term::Float(_) | Term::Str(_)
        )
    }

    pub fn is_number(&self) -> bool {
        matches!(self, Term::Int(_) | Term::BigInt(_) | Term::Float(_))
    }

    /// Name and arity of an atom or compound.
    pub fn functor(&self) -> Option<(Atom, usize)> {
        match self {
            Term::Atom(a) => Some((*a, 0)),
            Term::Cmp(c) => Some((c.name, c.args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Cmp(c) => &c.args,
            _ => &[],
        }
    }

    pub fn as_atom(&self) -> Option<Atom> {
        match self {
            Term::Atom(a) => Some(*a),
            _ => None,
        }
    }

    pub fn is_nil(&self) -> bool {
        matches!(self, Term::Atom(a) if *a == atoms::NIL)
    }

    /// Splits a proper (dereferenced) list into its items and tail.
    pub fn list_items(&self) -> (Vec<Term>, Term) {
        let mut items = Vec::new();
        let mut current = self.deref();
        loop {
            let next = match &current {
                Term::Cmp(c) if c.name == atoms::DOT && c.args.len() == 2 => {
                    items.push(c.args[0].clone());
                    c.args[1].deref()
                }
                _ => return (items, current),
            };
            current = next;
        }
    }

    /// Items of a proper list, `None` for partial or non-lists.
    pub fn proper_list(&self) -> Option<Vec<Term>> {
        let (items, tail) = self.list_items();
        if tail.is_nil() {
            Some(items)
        } else {
            None
        }
    }

    /// Fully dereferenced copy, sharing nothing with variable bindings.
    pub fn resolve(&self) -> Term {
        let t = self.deref();
        match &t {
            Term::Cmp(c) => {
                if c.name == atoms::DOT && c.args.len() == 2 {
                    let (items, tail) = t.list_items();
                    let items = items.iter().map(Term::resolve).collect();
                    let tail = match tail {
                        Term::Cmp(_) => tail.resolve(),
                        other => other,
                    };
                    return Term::list_with_tail(items, tail);
                }
                Term::compound(c.name, c.args.iter().map(Term::resolve).collect())
            }
            _ => t,
        }
    }

    pub fn same_var(a: &VarRef, b: &VarRef) -> bool {
        Rc::ptr_eq(a, b)
    }
}

fn drop_iteratively(mut stack: Vec<Term>) {
    while let Some(term) = stack.pop() {
        match term {
            Term::Cmp(rc) => {
                if let Ok(mut c) = Rc::try_unwrap(rc) {
                    stack.append(&mut c.args);
                }
            }
            Term::Var(rc) => {
                if let Ok(cell) = Rc::try_unwrap(rc) {
                    if let Some(t) = cell.value.borrow_mut().take() {
                        stack.push(t);
                    }
                }
            }
            _ => {}
        }
    }
}

// Long lists are chains of nested compounds; the default recursive drop
// would overflow the stack.
fn owned_subterm(term: &Term) -> bool {
    match term {
        Term::Cmp(rc) => Rc::strong_count(rc) == 1,
        Term::Var(rc) => Rc::strong_count(rc) == 1 && rc.value.borrow().is_some(),
        _ => false,
    }
}

impl Drop for Compound {
    fn drop(&mut self) {
        if self.args.iter().any(owned_subterm) {
            drop_iteratively(std::mem::take(&mut self.args));
        }
    }
}

impl Drop for VarCell {
    fn drop(&mut self) {
        if let Some(t) = self.value.get_mut().take() {
            if owned_subterm(&t) {
                drop_iteratively(vec![t]);
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::writer::format_term(self, true))
    }
}
