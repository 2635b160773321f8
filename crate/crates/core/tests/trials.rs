//! Trial estimators against the general path-count estimator and against
//! direct enumeration of patient sequences.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use proptest::prelude::*;

use stopwalk_core::scalar::{rational_from_ints as q, ratio};
use stopwalk_core::trial::{
    stop_states, IneffectiveRule, PromisingRule, Stage, StageRule, TrialState,
};
use stopwalk_core::{
    count_paths, is_simple, trial_decision, trial_region, trial_unbiased_estimate, trial_verify,
    unbiased_estimate, Decision, Rational, TrialDesign,
};

fn example_design() -> TrialDesign {
    TrialDesign::new(vec![
        Stage {
            n: 3,
            rule: StageRule::Interim {
                promising: PromisingRule { r_min: 3, e_max: 0 },
                ineffective: IneffectiveRule { r_max: 0, e_min: 2 },
            },
        },
        Stage {
            n: 3,
            rule: StageRule::Final { promising: PromisingRule { r_min: 4, e_max: 1 }, ineffective: None },
        },
    ])
    .unwrap()
}

/// Runs every one of the `3^N_K` patient sequences through the decision
/// rule, tallying stop states and the first patient's outcome.
fn enumerate_patients(design: &TrialDesign) -> BTreeMap<(usize, u32, u32), (u64, [u64; 3])> {
    let total = *design.cumulative().last().unwrap();
    let mut out: BTreeMap<(usize, u32, u32), (u64, [u64; 3])> = BTreeMap::new();
    for code in 0..3u64.pow(total) {
        let mut c = code;
        let (mut r, mut e) = (0u32, 0u32);
        let mut first = None;
        for j in 1..=total {
            let outcome = (c % 3) as usize;
            c /= 3;
            first.get_or_insert(outcome);
            match outcome {
                0 => r += 1,
                2 => e += 1,
                _ => {}
            }
            if let Some(s) = design.cumulative().iter().position(|&n| n == j) {
                let d = trial_decision(design, TrialState::new(j, r, e).unwrap()).unwrap();
                if d != Decision::Continue {
                    let slot = out.entry((s + 1, r, e)).or_default();
                    slot.0 += 1;
                    slot.1[first.unwrap()] += 1;
                    break;
                }
            }
        }
    }
    out
}

fn check_design(design: &TrialDesign) {
    let region = trial_region(design);
    let table = count_paths(&region, region.horizon()).unwrap();
    let stops = stop_states(design);
    let brute = enumerate_patients(design);
    // Each stopping prefix appears once per completion of the remaining
    // patients among the full sequences.
    let total = *design.cumulative().last().unwrap();
    assert_eq!(stops.len(), brute.len());
    let boundary: Vec<_> = table.boundary().map(|(y, _)| y.clone()).collect();
    assert_eq!(boundary.len(), stops.len());
    for stop in &stops {
        let est = trial_unbiased_estimate(design, stop.state.r, stop.state.e, stop.stage).unwrap();
        let y = stop.state.point();
        assert_eq!(est.as_vec(), unbiased_estimate(&table, &y).unwrap(), "stop {stop:?}");
        let (count, firsts) = brute[&(stop.stage, stop.state.r, stop.state.e)];
        let scale = 3u64.pow(total - stop.state.j);
        assert_eq!(est.sequences, BigUint::from(count / scale));
        let bf = |i: usize| ratio(&BigUint::from(firsts[i] / scale), &BigUint::from(count / scale));
        assert_eq!(est.response, bf(0));
        assert_eq!(est.non_response, bf(1));
        assert_eq!(est.progression, bf(2));
        assert!(est.response.clone() + est.progression.clone() <= Rational::from_integer(1.into()));
    }
}

#[test]
fn example_design_three_way_agreement() {
    check_design(&example_design());
}

#[test]
fn terminal_four_one_at_stage_two() {
    let d = example_design();
    let est = trial_unbiased_estimate(&d, 4, 1, 2).unwrap();
    let table = count_paths(&trial_region(&d), 6).unwrap();
    assert_eq!(est.as_vec(), unbiased_estimate(&table, &[4, 1, 1].into()).unwrap());
}

#[test]
fn example_design_region_is_reported_for_simplicity() {
    let region = trial_region(&example_design());
    let report = is_simple(&region, 5).unwrap();
    assert!(report.certificates_verified(&region));
}

fn rule_strategy() -> impl Strategy<Value = (i64, i64, i64, i64)> {
    // r_max < r_min and e_max < e_min by construction.
    (-1i64..4, 1i64..4, -1i64..4, 1i64..4).prop_map(|(r_max, dr, e_max, de)| (r_max, r_max + dr, e_max, e_max + de))
}

fn design_strategy() -> impl Strategy<Value = TrialDesign> {
    (1u32..=4, 1u32..=4, rule_strategy(), 0i64..6, -1i64..4, prop::bool::ANY).prop_map(
        |(n1, n2, (r_max, r_min, e_max, e_min), fr, fe, two_stage)| {
            let last = Stage {
                n: if two_stage { n2 } else { n1 },
                rule: StageRule::Final { promising: PromisingRule { r_min: fr, e_max: fe }, ineffective: None },
            };
            let stages = if two_stage {
                vec![
                    Stage {
                        n: n1,
                        rule: StageRule::Interim {
                            promising: PromisingRule { r_min, e_max },
                            ineffective: IneffectiveRule { r_max, e_min },
                        },
                    },
                    last,
                ]
            } else {
                vec![last]
            };
            TrialDesign::new(stages).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn small_designs_agree_with_path_counts(design in design_strategy()) {
        check_design(&design);
    }

    #[test]
    fn small_designs_are_exactly_unbiased(design in design_strategy(), a in 1i64..5, b in 1i64..5, c in 1i64..5) {
        let t = a + b + c;
        let v = trial_verify(&design, [q(a, t), q(b, t), q(c, t)]).unwrap();
        prop_assert!(v.holds(), "{:?}", v);
    }

    #[test]
    fn decisions_are_total(design in design_strategy()) {
        for (s, &j) in design.cumulative().iter().enumerate() {
            for &(r, e) in design.reachable_states(s + 1) {
                prop_assert!(trial_decision(&design, TrialState::new(j, r, e).unwrap()).is_ok());
            }
        }
    }
}
