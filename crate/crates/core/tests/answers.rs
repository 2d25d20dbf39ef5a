use num_bigint::BigInt;
use verdict_core::{compare_answers, normalize_answer, AnswerValue};

enum Want {
    I(&'static str),
    D(f64),
    L(&'static str),
}

/// Hand-listed numeric and non-numeric strings with their normal forms.
const TABLE: [(&str, Want); 50] = [
    ("42", Want::I("42")),
    ("42.0", Want::I("42")),
    ("yes", Want::L("yes")),
    ("0", Want::I("0")),
    ("-0", Want::I("0")),
    ("-17", Want::I("-17")),
    ("+5", Want::I("5")),
    ("007", Want::I("7")),
    ("  42  ", Want::I("42")),
    ("\n18\n", Want::I("18")),
    ("2.5", Want::D(2.5)),
    ("-3.75", Want::D(-3.75)),
    (".5", Want::D(0.5)),
    ("5.", Want::I("5")),
    ("1e3", Want::I("1000")),
    ("1.5e2", Want::I("150")),
    ("-2.5E-1", Want::D(-0.25)),
    ("1.0000000001", Want::I("1")),
    ("4.9999999999", Want::I("5")),
    ("4.99999", Want::D(4.99999)),
    ("2.000001", Want::D(2.000001)),
    ("0.1", Want::D(0.1)),
    ("-0.0", Want::I("0")),
    ("18.000", Want::I("18")),
    ("4.12560", Want::D(4.1256)),
    ("99999999999999999999", Want::I("99999999999999999999")),
    ("-99999999999999999999", Want::I("-99999999999999999999")),
    ("1267650600228229401496703205376", Want::I("1267650600228229401496703205376")),
    ("1e400", Want::L("1e400")),
    ("NaN", Want::L("NaN")),
    ("inf", Want::L("inf")),
    ("1.0Inf", Want::L("1.0Inf")),
    ("1.5NaN", Want::L("1.5NaN")),
    ("1,200", Want::L("1,200")),
    ("1_000", Want::L("1_000")),
    ("0x1F", Want::L("0x1F")),
    ("12abc", Want::L("12abc")),
    ("", Want::L("")),
    ("   ", Want::L("")),
    ("+", Want::L("+")),
    ("--5", Want::L("--5")),
    ("0.1+0.2", Want::L("0.1+0.2")),
    ("3/4", Want::L("3/4")),
    ("[1,2,3]", Want::L("[1,2,3]")),
    ("'hello'", Want::L("'hello'")),
    ("no", Want::L("no")),
    ("true", Want::L("true")),
    ("$5", Want::L("$5")),
    ("5 apples", Want::L("5 apples")),
    ("1.2.3", Want::L("1.2.3")),
];

#[test]
fn normalization_table() {
    for (raw, want) in TABLE.iter() {
        let got = normalize_answer(raw);
        let expected = match want {
            Want::I(text) => AnswerValue::Integer(text.parse::<BigInt>().unwrap()),
            Want::D(d) => AnswerValue::Decimal(*d),
            Want::L(text) => AnswerValue::Literal(text.to_string()),
        };
        assert_eq!(got, expected, "{:?}", raw);
    }
}

#[test]
fn comparison_rules() {
    let n = normalize_answer;
    assert!(compare_answers(&n("18"), &n("18")));
    assert!(compare_answers(&n("2.5000001"), &n("2.5")));
    assert!(compare_answers(&n("2.5000009"), &n("2.5")));
    assert!(!compare_answers(&n("2.50001"), &n("2.5")));
    assert!(!compare_answers(&n("a"), &n("1")));
    assert!(!compare_answers(&n("1"), &n("a")));
    assert!(compare_answers(&n("abc"), &n(" abc ")));
    assert!(!compare_answers(&n("17"), &n("18")));
    assert!(compare_answers(&n("18.0000000001"), &n("18")));
    assert!(compare_answers(&n("0.3333333"), &n("0.33333333")));
    let big = n("99999999999999999999");
    assert!(compare_answers(&big, &n("99999999999999999999")));
    assert!(!compare_answers(&big, &n("99999999999999999998")));
}

#[test]
fn oracle_is_the_direct_difference() {
    // |a - b| computed directly against the comparison's verdict
    let values = [0.0, 0.5, 1.0, 2.5, 2.5000001, 2.500002, -1.0, 1e-7, 1e-6, 3.3333333];
    for &a in &values {
        for &b in &values {
            let (x, y) = (AnswerValue::from(a), AnswerValue::from(b));
            let direct = match (x.clone(), y.clone()) {
                (AnswerValue::Integer(p), AnswerValue::Integer(q)) => p == q,
                _ => (a - b).abs() <= 1e-6,
            };
            assert_eq!(compare_answers(&x, &y), direct, "{} vs {}", a, b);
        }
    }
}

#[test]
fn wire_form_round_trips() {
    for raw in ["42", "2.5", "yes", "99999999999999999999", "-3"] {
        let v = normalize_answer(raw);
        let json = serde_json::to_string(&v).unwrap();
        let back: AnswerValue = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v, "{}", json);
    }
    assert_eq!(serde_json::to_string(&normalize_answer("42")).unwrap(), "42");
    assert_eq!(serde_json::to_string(&normalize_answer("yes")).unwrap(), "\"yes\"");
}
