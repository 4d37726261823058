//! Hand-written cases with pinned query texts. Each runs on the bundled
//! engine and must pass with the expected rows.
mod common;

use coddtest::oracle::{execute_case, DiscardReason, FoldedConstant, OracleConfig, Outcome, RelationForm};
use coddtest::value::SqlValue;
use common::*;

fn pinned(name: &str) {
    let p = pinned_examples().into_iter().find(|p| p.name == name).unwrap();
    if let Err(e) = check_pinned(&p, &mut bundled()) {
        panic!("{e}");
    }
}

#[test]
fn view_aggregate_folds_to_zero() {
    let v = check_pinned(&pinned_examples().remove(0), &mut bundled()).unwrap();
    assert_eq!(v.triple.folded_constant, Some(FoldedConstant::Scalar(0.into())));
}

#[test]
fn correlated_average_becomes_case_over_class() {
    pinned("class average");
}

#[test]
fn left_join_mapping_has_the_single_null_entry() {
    let p = pinned_examples().into_iter().find(|p| p.name == "left join is null").unwrap();
    let v = check_pinned(&p, &mut bundled()).unwrap();
    match v.triple.folded_constant.unwrap() {
        FoldedConstant::RowMapping { entries, .. } => {
            assert_eq!(entries, vec![(vec![SqlValue::Null], SqlValue::Integer(1))]);
        }
        other => panic!("expected a mapping, got {other:?}"),
    }
}

#[test]
fn two_rows_map_to_zero_and_one() {
    pinned("two-row sum");
}

#[test]
fn inserted_relation_vs_values() {
    pinned("inserted relation");
}

#[test]
fn common_table_expression_vs_values() {
    pinned("common table expression");
}

#[test]
fn every_relation_form_pair_passes() {
    for o in RelationForm::ALL {
        for f in RelationForm::ALL {
            if o != f {
                let ex = relation_example(o, f);
                let mut s = bundled();
                apply(&mut s, &ex.script);
                let v = execute_case(&ex.case, &mut s, &OracleConfig::default());
                assert_eq!(v.outcome, Outcome::Pass, "{o:?}/{f:?}: {}", v.reason);
            }
        }
    }
}

#[test]
fn view_aggregate_state_has_one_row() {
    let ex = view_aggregate();
    let mut s = bundled();
    apply(&mut s, &ex.script);
    let r = s.execute("SELECT COUNT(*) FROM t0").unwrap();
    assert_eq!(r.single_value(), Some(&SqlValue::Integer(1)));
    let r = s.execute("SELECT (SELECT COUNT(c0)>0 FROM v0 GROUP BY c0)").unwrap();
    assert_eq!(r.single_value(), Some(&SqlValue::Integer(0)));
}

#[test]
fn empty_inner_join_is_discarded() {
    let mut s = bundled();
    for seed in 0..25 {
        let ex = empty_inner_join(seed);
        apply(&mut s, &ex.script);
        let v = execute_case(&ex.case, &mut s, &OracleConfig::default());
        assert_eq!(v.outcome, Outcome::Discarded(DiscardReason::EmptyAuxiliary), "seed {seed}: {}", v.reason);
    }
}
