//! Arithmetic evaluation for `is/2` and the comparison predicates.

use std::cmp::Ordering;
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{FromPrimitive, Pow, Signed, ToPrimitive, Zero};

use crate::error::{evaluation_error, instantiation_error, type_error, Res};
use crate::term::{atoms, Term};

#[derive(Clone, Debug)]
pub enum Num {
    Int(i64),
    Big(BigInt),
    Float(f64),
}

impl Num {
    fn big(value: BigInt) -> Num {
        match value.to_i64() {
            Some(small) => Num::Int(small),
            None => Num::Big(value),
        }
    }

    pub fn to_term(&self) -> Term {
        match self {
            Num::Int(i) => Term::Int(*i),
            Num::Big(b) => Term::BigInt(Rc::new(b.clone())),
            Num::Float(f) => Term::Float(*f),
        }
    }

    pub fn from_term(term: &Term) -> Option<Num> {
        match term {
            Term::Int(i) => Some(Num::Int(*i)),
            Term::BigInt(b) => Some(Num::Big((**b).clone())),
            Term::Float(f) => Some(Num::Float(*f)),
            _ => None,
        }
    }

    fn as_big(&self) -> Option<BigInt> {
        match self {
            Num::Int(i) => Some(BigInt::from(*i)),
            Num::Big(b) => Some(b.clone()),
            Num::Float(_) => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Num::Int(i) => *i as f64,
            Num::Big(b) => b.to_f64().unwrap_or(f64::INFINITY),
            Num::Float(f) => *f,
        }
    }

    fn is_int(&self) -> bool {
        !matches!(self, Num::Float(_))
    }
}

pub fn compare_num(a: &Num, b: &Num) -> Ordering {
    match (a, b) {
        (Num::Int(x), Num::Int(y)) => x.cmp(y),
        (Num::Float(_), _) | (_, Num::Float(_)) => a
            .as_f64()
            .partial_cmp(&b.as_f64())
            .unwrap_or(Ordering::Equal),
        _ => a.as_big().cmp(&b.as_big()),
    }
}

fn check_float(value: f64) -> Res<Num> {
    if value.is_nan() {
        Err(evaluation_error("undefined"))
    } else if value.is_infinite() {
        Err(evaluation_error("float_overflow"))
    } else {
        Ok(Num::Float(value))
    }
}

fn require_int(n: &Num, culprit: &Term) -> Res<BigInt> {
    n.as_big()
        .ok_or_else(|| type_error("integer", culprit.clone()))
}

fn int_binop(
    a: &Num,
    b: &Num,
    small: impl Fn(i64, i64) -> Option<i64>,
    big: impl Fn(&BigInt, &BigInt) -> BigInt,
    float: impl Fn(f64, f64) -> f64,
) -> Res<Num> {
    match (a, b) {
        (Num::Int(x), Num::Int(y)) => match small(*x, *y) {
            Some(v) => Ok(Num::Int(v)),
            None => Ok(Num::big(big(&BigInt::from(*x), &BigInt::from(*y)))),
        },
        (Num::Float(_), _) | (_, Num::Float(_)) => check_float(float(a.as_f64(), b.as_f64())),
        _ => Ok(Num::big(big(
            &a.as_big().expect("int"),
            &b.as_big().expect("int"),
        ))),
    }
}

fn to_integer_rounded(value: f64, f: impl Fn(f64) -> f64) -> Res<Num> {
    if !value.is_finite() {
        return Err(evaluation_error("undefined"));
    }
    let rounded = f(value);
    if rounded.abs() < 9.0e18 {
        Ok(Num::Int(rounded as i64))
    } else {
        BigInt::from_f64(rounded)
            .map(Num::big)
            .ok_or_else(|| evaluation_error("undefined"))
    }
}

pub fn eval(term: &Term) -> Res<Num> {
    let term = term.deref();
    match &term {
        Term::Int(i) => Ok(Num::Int(*i)),
        Term::BigInt(b) => Ok(Num::Big((**b).clone())),
        Term::Float(f) => Ok(Num::Float(*f)),
        Term::Var(_) => Err(instantiation_error()),
        Term::Str(s) if s.chars().count() == 1 => {
            Ok(Num::Int(s.chars().next().expect("one char") as i64))
        }
        Term::Atom(a) => match a.name().as_ref() {
            "pi" => Ok(Num::Float(std::f64::consts::PI)),
            "e" => Ok(Num::Float(std::f64::consts::E)),
            "inf" | "infinite" => Ok(Num::Float(f64::INFINITY)),
            "nan" => Ok(Num::Float(f64::NAN)),
            "epsilon" => Ok(Num::Float(f64::EPSILON)),
            "max_tagged_integer" => Ok(Num::Int((1i64 << 60) - 1)),
            "min_tagged_integer" => Ok(Num::Int(-(1i64 << 60))),
            "random" => Ok(Num::Float(pseudo_random())),
            "random_float" => Ok(Num::Float(pseudo_random())),
            "cputime" => Ok(Num::Float(crate::engine::cpu_seconds())),
            "realtime" => Ok(Num::Int(
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs() as i64)
                    .unwrap_or(0),
            )),
            "[]" => Err(type_error("evaluable", term.clone())),
            _ => Err(type_error(
                "evaluable",
                crate::error::indicator(*a, 0),
            )),
        },
        Term::Cmp(c) => {
            if c.name == atoms::DOT && c.args.len() == 2 && c.args[1].deref().is_nil() {
                return eval(&c.args[0]);
            }
            let name = c.name.name();
            if c.args.len() == 1 {
                let x = eval(&c.args[0])?;
                return eval_unary(&name, x, &term);
            }
            if c.args.len() == 2 {
                let x = eval(&c.args[0])?;
                let y = eval(&c.args[1])?;
                return eval_binary(&name, x, y, &term);
            }
            Err(type_error(
                "evaluable",
                crate::error::indicator(c.name, c.args.len()),
            ))
        }
        Term::Str(_) => Err(type_error("evaluable", term.clone())),
        Term::Local(_) => Err(instantiation_error()),
    }
}

fn pseudo_random() -> f64 {
    use std::cell::Cell;
    thread_local! {
        static STATE: Cell<u64> = const { Cell::new(0x2545_F491_4F6C_DD1D) };
    }
    STATE.with(|s| {
        let mut x = s.get();
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        s.set(x);
        (x >> 11) as f64 / (1u64 << 53) as f64
    })
}

fn eval_unary(name: &str, x: Num, term: &Term) -> Res<Num> {
    let culprit = || crate::error::indicator(term.functor().expect("cmp").0, 1);
    match name {
        "-" => match x {
            Num::Int(i) => Ok(i.checked_neg().map(Num::Int).unwrap_or_else(|| Num::big(-BigInt::from(i)))),
            Num::Big(b) => Ok(Num::big(-b)),
            Num::Float(f) => Ok(Num::Float(-f)),
        },
        "+" => Ok(x),
        "abs" => match x {
            Num::Int(i) => Ok(i.checked_abs().map(Num::Int).unwrap_or_else(|| Num::big(BigInt::from(i).abs()))),
            Num::Big(b) => Ok(Num::big(b.abs())),
            Num::Float(f) => Ok(Num::Float(f.abs())),
        },
        "sign" => match x {
            Num::Int(i) => Ok(Num::Int(i.signum())),
            Num::Big(b) => Ok(Num::Int(if b.is_negative() { -1 } else { 1 })),
            Num::Float(f) => Ok(Num::Float(if f == 0.0 { 0.0 } else { f.signum() })),
        },
        "min" | "max" => Err(type_error("evaluable", culprit())),
        "sqrt" => {
            let v = x.as_f64();
            if v < 0.0 {
                return Err(evaluation_error("undefined"));
            }
            check_float(v.sqrt())
        }
        "sin" => check_float(x.as_f64().sin()),
        "cos" => check_float(x.as_f64().cos()),
        "tan" => check_float(x.as_f64().tan()),
        "asin" => check_float(x.as_f64().asin()),
        "acos" => check_float(x.as_f64().acos()),
        "atan" => check_float(x.as_f64().atan()),
        "sinh" => check_float(x.as_f64().sinh()),
        "cosh" => check_float(x.as_f64().cosh()),
        "tanh" => check_float(x.as_f64().tanh()),
        "exp" => check_float(x.as_f64().exp()),
        "log" => {
            let v = x.as_f64();
            if v <= 0.0 {
                return Err(evaluation_error("undefined"));
            }
            check_float(v.ln())
        }
        "log2" => {
            let v = x.as_f64();
            if v <= 0.0 {
                return Err(evaluation_error("undefined"));
            }
            check_float(v.log2())
        }
        "float" => Ok(Num::Float(x.as_f64())),
        "integer" => match x {
            Num::Float(f) => to_integer_rounded(f, f64::round),
            other => Ok(other),
        },
        "float_integer_part" => Ok(Num::Float(x.as_f64().trunc())),
        "float_fractional_part" => Ok(Num::Float(x.as_f64().fract())),
        "truncate" => match x {
            Num::Float(f) => to_integer_rounded(f, f64::trunc),
            other => Ok(other),
        },
        "round" => match x {
            Num::Float(f) => to_integer_rounded(f, f64::round),
            other => Ok(other),
        },
        "ceiling" => match x {
            Num::Float(f) => to_integer_rounded(f, f64::ceil),
            other => Ok(other),
        },
        "floor" => match x {
            Num::Float(f) => to_integer_rounded(f, f64::floor),
            other => Ok(other),
        },
        "\\" => {
            let b = require_int(&x, term)?;
            Ok(Num::big(!b))
        }
        "msb" => {
            let b = require_int(&x, term)?;
            if !b.is_positive() {
                return Err(type_error("positive_integer", term.clone()));
            }
            Ok(Num::Int(b.bits() as i64 - 1))
        }
        "succ" => int_binop(&x, &Num::Int(1), i64::checked_add, |a, b| a + b, |a, b| a + b),
        "random" => {
            let b = require_int(&x, term)?;
            let n = b.to_i64().unwrap_or(i64::MAX).max(1);
            Ok(Num::Int((pseudo_random() * n as f64) as i64))
        }
        "random_float" => Ok(Num::Float(pseudo_random())),
        _ => Err(type_error("evaluable", culprit())),
    }
}

fn int_pow(base: &BigInt, exp: &BigInt, term: &Term) -> Res<Num> {
    if exp.is_negative() {
        if base == &BigInt::from(1) {
            return Ok(Num::Int(1));
        }
        if base == &BigInt::from(-1) {
            return Ok(Num::Int(if exp.is_even() { 1 } else { -1 }));
        }
        if base.is_zero() {
            return Err(evaluation_error("zero_divisor"));
        }
        return Err(type_error("float", term.clone()));
    }
    let e = exp
        .to_u32()
        .ok_or_else(|| crate::error::resource_error("memory"))?;
    Ok(Num::big(Pow::pow(base, e)))
}

fn eval_binary(name: &str, x: Num, y: Num, term: &Term) -> Res<Num> {
    match name {
        "+" => int_binop(&x, &y, i64::checked_add, |a, b| a + b, |a, b| a + b),
        "-" => int_binop(&x, &y, i64::checked_sub, |a, b| a - b, |a, b| a - b),
        "*" => int_binop(&x, &y, i64::checked_mul, |a, b| a * b, |a, b| a * b),
        "/" => {
            if x.is_int() && y.is_int() {
                let (a, b) = (x.as_big().expect("int"), y.as_big().expect("int"));
                if b.is_zero() {
                    return Err(evaluation_error("zero_divisor"));
                }
                let (q, r) = a.div_rem(&b);
                if r.is_zero() {
                    return Ok(Num::big(q));
                }
                return check_float(x.as_f64() / y.as_f64());
            }
            if y.as_f64() == 0.0 {
                return Err(evaluation_error("zero_divisor"));
            }
            check_float(x.as_f64() / y.as_f64())
        }
        "//" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            if b.is_zero() {
                return Err(evaluation_error("zero_divisor"));
            }
            Ok(Num::big(a / b))
        }
        "div" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            if b.is_zero() {
                return Err(evaluation_error("zero_divisor"));
            }
            Ok(Num::big(a.div_floor(&b)))
        }
        "mod" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            if b.is_zero() {
                return Err(evaluation_error("zero_divisor"));
            }
            Ok(Num::big(a.mod_floor(&b)))
        }
        "rem" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            if b.is_zero() {
                return Err(evaluation_error("zero_divisor"));
            }
            Ok(Num::big(a % b))
        }
        "min" => Ok(if compare_num(&y, &x) == Ordering::Less { y } else { x }),
        "max" => Ok(if compare_num(&y, &x) == Ordering::Greater { y } else { x }),
        "gcd" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            Ok(Num::big(a.gcd(&b)))
        }
        "**" => {
            if x.is_int() && y.is_int() {
                return int_pow(&x.as_big().expect("int"), &y.as_big().expect("int"), term)
                    .or_else(|_| check_float(x.as_f64().powf(y.as_f64())));
            }
            check_float(x.as_f64().powf(y.as_f64()))
        }
        "^" => {
            if x.is_int() && y.is_int() {
                return int_pow(&x.as_big().expect("int"), &y.as_big().expect("int"), term);
            }
            check_float(x.as_f64().powf(y.as_f64()))
        }
        "atan" | "atan2" => check_float(x.as_f64().atan2(y.as_f64())),
        "copysign" => check_float(x.as_f64().copysign(y.as_f64())),
        "log" => {
            let (b, v) = (x.as_f64(), y.as_f64());
            if b <= 0.0 || v <= 0.0 {
                return Err(evaluation_error("undefined"));
            }
            check_float(v.ln() / b.ln())
        }
        ">>" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            let shift = b.to_usize().unwrap_or(usize::MAX).min(1 << 20);
            Ok(Num::big(a >> shift))
        }
        "<<" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            let shift = b
                .to_usize()
                .filter(|s| *s < 1 << 20)
                .ok_or_else(|| crate::error::resource_error("memory"))?;
            Ok(Num::big(a << shift))
        }
        "/\\" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            Ok(Num::big(a & b))
        }
        "\\/" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            Ok(Num::big(a | b))
        }
        "xor" => {
            let (a, b) = (require_int(&x, term)?, require_int(&y, term)?);
            Ok(Num::big(a ^ b))
        }
        "truncate" => Err(type_error("evaluable", term.clone())),
        _ => Err(type_error(
            "evaluable",
            crate::error::indicator(term.functor().expect("cmp").0, 2),
        )),
    }
}
