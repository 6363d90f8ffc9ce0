//! Property-based invariants: the printer and parser are inverse on
//! arbitrary formulas, and the prefix relations obey their order laws.

use proptest::prelude::*;

use kledge_core::logic::{parse_formula, Formula, YOp};
use kledge_core::model::{is_prefix, is_t_prefix, IndexicalSet, Ledger};

fn arb_agent() -> impl Strategy<Value = String> {
    prop_oneof![Just("1".to_string()), Just("a1".to_string()), Just("judge_2".to_string())]
}

fn arb_ids() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop_oneof![Just("t1".to_string()), Just("b0".to_string())], 0..3)
}

fn arb_yop() -> impl Strategy<Value = YOp> {
    prop_oneof![
        Just(YOp::Id),
        (0usize..4).prop_map(YOp::Next),
        (0usize..4).prop_map(YOp::NextAlways),
    ]
}

fn arb_formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        arb_agent().prop_map(Formula::honest),
        Just(Formula::HonestSelf),
        Just(Formula::Acc),
        Just(Formula::Prop("settled".to_string())),
        (arb_ids(), arb_agent()).prop_map(|(ids, a)| Formula::tprefix(&ids, a.as_str())),
        arb_ids().prop_map(|ids| Formula::tprefix_self(&ids)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.clone().prop_map(Formula::always),
            (0usize..4, inner.clone()).prop_map(|(k, f)| Formula::next(k, f)),
            (arb_agent(), inner.clone()).prop_map(|(a, f)| Formula::knows(a.as_str(), f)),
            (arb_agent(), inner.clone()).prop_map(|(a, f)| Formula::believes(a.as_str(), f)),
            (any::<bool>(), inner.clone()).prop_map(|(acc, f)| {
                Formula::Everyone(IndexicalSet::Honest, acc, std::sync::Arc::new(f))
            }),
            (arb_yop(), any::<bool>(), inner.clone()).prop_map(|(y, acc, f)| {
                Formula::Common(IndexicalSet::Honest, y, acc, std::sync::Arc::new(f))
            }),
            (1u32..5, 1u32..5, inner).prop_map(|(n, extra, f)| {
                let alpha =
                    num_rational::BigRational::new(n.into(), (n + extra).into());
                Formula::init_geq(alpha, f)
            }),
        ]
    })
}

fn arb_ledger() -> impl Strategy<Value = Ledger> {
    prop::collection::vec(prop_oneof![Just("a"), Just("b"), Just("c")], 0..6)
        .prop_map(|ids| Ledger::from_ids(&ids))
}

proptest! {
    #[test]
    fn printing_then_parsing_is_identity(f in arb_formula()) {
        let printed = f.to_string();
        let parsed = parse_formula(&printed)
            .unwrap_or_else(|e| panic!("cannot reparse {printed:?}: {e}"));
        prop_assert_eq!(parsed, f);
    }

    #[test]
    fn prefixes_are_a_partial_order(x in arb_ledger(), y in arb_ledger(), z in arb_ledger()) {
        prop_assert!(is_prefix(&x, &x));
        if is_prefix(&x, &y) && is_prefix(&y, &x) {
            prop_assert_eq!(&x, &y);
        }
        if is_prefix(&x, &y) && is_prefix(&y, &z) {
            prop_assert!(is_prefix(&x, &z));
        }
    }

    #[test]
    fn settled_prefixes_deepen_with_smaller_cuts(l in arb_ledger(), t in 0usize..8) {
        let settled = l.max_t_prefix(t);
        prop_assert!(is_t_prefix(&settled, &l, t));
        // every prefix of a settled prefix is settled too
        for n in 0..=settled.len() {
            prop_assert!(is_t_prefix(&settled.prefix(n), &l, t));
        }
        // a deeper cut only shrinks the settled prefix
        prop_assert!(is_prefix(&l.max_t_prefix(t + 1), &settled));
        if is_t_prefix(&settled, &l, t + 1) {
            prop_assert_eq!(settled.len(), l.len().saturating_sub(t + 1));
        }
    }
}
