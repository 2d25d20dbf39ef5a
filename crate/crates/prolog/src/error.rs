use crate::term::{atoms, Atom, Term};

/// Non-local exits out of the solver.
#[derive(Debug)]
pub enum Flow {
    /// An uncaught Prolog exception carrying the ball.
    Throw(Term),
    Halt(i32),
}

pub type Res<T> = Result<T, Flow>;

fn error_term(formal: Term) -> Flow {
    Flow::Throw(Term::compound(atoms::ERROR, vec![formal, Term::fresh_var()]))
}

pub fn instantiation_error() -> Flow {
    error_term(Term::atom("instantiation_error"))
}

pub fn type_error(kind: &str, culprit: Term) -> Flow {
    error_term(Term::compound_str("type_error", vec![Term::atom(kind), culprit]))
}

pub fn domain_error(kind: &str, culprit: Term) -> Flow {
    error_term(Term::compound_str(
        "domain_error",
        vec![Term::atom(kind), culprit],
    ))
}

pub fn existence_error(kind: &str, culprit: Term) -> Flow {
    error_term(Term::compound_str(
        "existence_error",
        vec![Term::atom(kind), culprit],
    ))
}

pub fn permission_error(action: &str, kind: &str, culprit: Term) -> Flow {
    error_term(Term::compound_str(
        "permission_error",
        vec![Term::atom(action), Term::atom(kind), culprit],
    ))
}

pub fn evaluation_error(what: &str) -> Flow {
    error_term(Term::compound_str("evaluation_error", vec![Term::atom(what)]))
}

pub fn representation_error(what: &str) -> Flow {
    error_term(Term::compound_str(
        "representation_error",
        vec![Term::atom(what)],
    ))
}

pub fn resource_error(what: &str) -> Flow {
    error_term(Term::compound_str("resource_error", vec![Term::atom(what)]))
}

pub fn syntax_error(message: &str) -> Flow {
    error_term(Term::compound_str("syntax_error", vec![Term::atom(message)]))
}

pub fn indicator(name: Atom, arity: usize) -> Term {
    Term::compound(atoms::SLASH, vec![Term::Atom(name), Term::Int(arity as i64)])
}
