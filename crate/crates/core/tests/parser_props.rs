mod common;

use common::plan;
use gpsr_core::parser::{parse, render, FailureKind, ParseOutcome};
use gpsr_core::primitives::{registry, ActionStep, Plan, PrimitiveKind};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn render_then_parse_is_identity(plan in plan()) {
        let text = render(&plan);
        prop_assert_eq!(parse(&text).into_result().ok(), Some(plan.clone()), "rendered {}", text);
    }

    #[test]
    fn parse_is_total_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let text = String::from_utf8_lossy(&bytes);
        if let ParseOutcome::Parsed { plan } = parse(&text) {
            prop_assert_eq!(parse(&render(&plan)).into_result().ok(), Some(plan.clone()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn parse_is_total_on_bracket_soup(text in "[\\[\\], \"'\\\\a-z]{0,60}") {
        if let ParseOutcome::Parsed { plan } = parse(&text) {
            prop_assert_eq!(parse(&render(&plan)).into_result().ok(), Some(plan.clone()));
        }
    }

    #[test]
    fn surrounding_prose_is_ignored(plan in plan(), before in "[a-zA-Z .:]{0,30}", after in "[a-zA-Z .]{0,30}") {
        prop_assume!(!plan.is_empty());
        let text = format!("{before}{}{after}", render(&plan));
        prop_assert_eq!(parse(&text).into_result().ok(), Some(plan.clone()));
    }

    #[test]
    fn spacing_between_tokens_is_ignored(
        steps in prop::collection::vec((0..PrimitiveKind::ALL.len(), "[a-z][a-z ]{0,10}[a-z]"), 0..6),
        pad in "[ \t\n]{0,3}",
    ) {
        let plan = Plan::new(
            steps.iter().map(|(k, a)| ActionStep::new(PrimitiveKind::ALL[*k], a.as_str()).unwrap()).collect(),
        );
        let items: Vec<String> = plan
            .steps
            .iter()
            .map(|s| format!("[{pad}{}{pad},{pad}{}{pad}]", s.kind().surface_name(), s.argument()))
            .collect();
        let text = format!("[{pad}{}{pad}]", items.join(&format!("{pad},{pad}")));
        prop_assert_eq!(parse(&text).into_result().ok(), Some(plan.clone()), "text {:?}", text);
    }

    #[test]
    fn unregistered_action_is_unknown_action(name in "[a-z][a-z ]{0,12}[a-z]", arg in "[a-z]{1,8}") {
        prop_assume!(registry().iter().all(|s| s.surface_name != name.as_str()));
        let text = format!("[[move to, sink], [{name}, {arg}]]");
        prop_assert_eq!(parse(&text).failure_kind(), Some(FailureKind::UnknownAction));
    }
}
