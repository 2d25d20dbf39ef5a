use proptest::prelude::*;

use verdict_core::parser::{parse_text, render_template, REQUIRED_TAGS};
use verdict_core::reward::xmlcount_reward;
use verdict_core::{count_required_tags, detect_strict, extract_soft, StructuralReport};

const TOKENS: [&str; 6] = ["<reasoning>", "</reasoning>", "<code>", "</code>", "<query>", "</query>"];

/// Text that mixes tag tokens, near-miss tags and arbitrary unicode.
fn completion_text() -> impl Strategy<Value = String> {
    let piece = prop_oneof![
        3 => prop::sample::select(TOKENS.to_vec()).prop_map(str::to_string),
        1 => prop::sample::select(vec!["<code", "code>", "</ query>", "<Query>", "<<code>>", "\n", "  "])
            .prop_map(str::to_string),
        3 => any::<String>(),
        2 => "[a-zA-Z0-9_ ().,:-]{0,20}",
    ];
    prop::collection::vec(piece, 0..14).prop_map(|v| v.concat())
}

fn tag_body() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9_ ().,:\n-]{0,30}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parse_is_total_and_consistent(text in completion_text()) {
        let parsed = parse_text(&text);
        let r = parsed.report;
        prop_assert!(r.required_tag_count <= 5);
        // strict => soft => both segments present
        if r.strict_match {
            prop_assert!(r.soft_extractable);
        }
        if r.soft_extractable {
            prop_assert!(parsed.code.is_some() && parsed.query.is_some());
        }
        prop_assert_eq!(r.soft_extractable, extract_soft(&text).is_some());
        prop_assert_eq!(r.strict_match, detect_strict(&text));
        prop_assert_eq!((r.required_tag_count, r.query_nested_in_code), count_required_tags(&text));
        if r.query_nested_in_code {
            prop_assert!(r.required_tag_count >= 3);
        }
    }

    #[test]
    fn appending_a_missing_tag_never_lowers_the_count(text in completion_text(), which in 0usize..5) {
        let tag = REQUIRED_TAGS[which];
        let (before, _) = count_required_tags(&text);
        let (after, _) = count_required_tags(&format!("{}{}", text, tag));
        prop_assert!(after >= before);
        if !text.contains(tag) {
            prop_assert!(after > before);
        }
    }

    #[test]
    fn strict_parse_survives_reserialization(
        reasoning in tag_body(),
        code in tag_body(),
        query in tag_body(),
        gap in "[ \n\t]{0,3}",
    ) {
        let text = format!(
            "{gap}<reasoning>{reasoning}</reasoning>{gap}<code>{code}</code>{gap}<query>{query}</query>{gap}"
        );
        let parsed = parse_text(&text);
        prop_assert!(parsed.report.strict_match);
        let again = parse_text(&parsed.to_template().unwrap());
        prop_assert_eq!(again, parsed);
    }
}

#[test]
fn every_tag_subset_and_nesting() {
    let mut best = f64::MIN;
    for mask in 0u32..32 {
        for nested in [false, true] {
            let has = |i: usize| mask & (1 << i) != 0;
            let mut text = String::new();
            if has(0) {
                text.push_str("<reasoning>");
            }
            text.push_str("think");
            if has(1) {
                text.push_str("</reasoning>");
            }
            text.push('\n');
            if has(2) {
                text.push_str("<code>");
            }
            text.push_str("p(1).");
            let can_nest = has(2) && has(3) && has(4);
            if nested && can_nest {
                text.push_str("<query>p(X).</query>");
            }
            if has(3) {
                text.push_str("</code>");
            }
            text.push('\n');
            if has(4) && !(nested && can_nest) {
                text.push_str("<query>");
            }
            text.push_str("p(X).</query>");

            let parsed = parse_text(&text);
            let r = parsed.report;
            assert_eq!(r.required_tag_count as u32, mask.count_ones(), "{text}");
            assert_eq!(r.query_nested_in_code, nested && can_nest, "{text}");
            let xml: f64 = xmlcount_reward(&r);
            let expected = 0.125 * mask.count_ones() as f64 - if nested && can_nest { 0.5 } else { 0.0 };
            assert_eq!(xml, expected);
            assert!((-0.5..=0.625).contains(&xml));
            if r.strict_match {
                assert!(r.soft_extractable, "{text}");
                assert_eq!(mask, 31);
            }
            if mask == 31 && !nested {
                assert!(r.strict_match, "{text}");
            }
            best = best.max(xml);
        }
    }
    assert_eq!(best, 0.625);

    // the scoring rule itself over every reachable report
    for count in 0..=5u8 {
        for nested in [false, true] {
            let report = StructuralReport {
                required_tag_count: count,
                query_nested_in_code: nested,
                ..Default::default()
            };
            let xml: f64 = xmlcount_reward(&report);
            assert!((-0.5..=0.625).contains(&xml));
            assert_eq!(xml == 0.625, count == 5 && !nested);
            assert_eq!(xml == -0.5, count == 0 && nested);
        }
    }
}

#[test]
fn repeated_tags_count_once() {
    let text = "<code><code><code></code><reasoning><reasoning>";
    assert_eq!(count_required_tags(text), (3, false));
    let spam = REQUIRED_TAGS.repeat(10).concat();
    assert_eq!(count_required_tags(&spam).0, 5);
}

#[test]
fn template_rendering_is_strict() {
    assert!(detect_strict(&render_template("r", "c.", "q(X).")));
}
