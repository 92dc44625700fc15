// Copyright (c) The specminer Contributors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::collections::BTreeSet;

use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use specminer_core::correlation::linear_fit;
use specminer_core::coverage::{compute_coverage, hit_sets};
use specminer_core::engine::InferredSpec;
use specminer_core::engine::{implies, infer, infer_point, prune_redundant, InferenceConfig};
use specminer_core::eval::{
    classify_detailed, match_predicates, round2, ClassificationReport, MatchVerdict, Review,
};
use specminer_core::invariant::{
    instantiate_candidates, Constant, Number, Predicate, Status, TemplateConfig,
};
use specminer_core::subject;
use specminer_core::trace::{
    pair_invocations, parse_trace, write_trace, PointKind, ProbeEvent, ProbeKind, ProbeManifest,
    ProgramPointDecl, Sample, Value,
};

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed_cafe),
        failure_persistence: None,
        ..Config::default()
    }
}

fn lookup<'a>(
    decl: &'a ProgramPointDecl,
    sample: &'a Sample,
) -> impl Fn(&str) -> Option<&'a Value> {
    move |name| decl.var_index(name).map(|i| &sample.values[i])
}

fn inference(k: usize, ternary: bool) -> InferenceConfig {
    InferenceConfig {
        oneof_cardinality: k,
        enable_ternary: ternary,
        ..InferenceConfig::default()
    }
}

proptest! {
    #![proptest_config(config(96))]

    #[test]
    fn infer_matches_oracle(seed in any::<u64>(), k in 1usize..=4, ternary in any::<bool>()) {
        let trace = common::random_trace(seed);
        let cfg = inference(k, ternary);
        let got = infer(&trace, &cfg).unwrap();
        prop_assert_eq!(got.to_text(), common::oracle(&trace, &cfg).to_text());
    }

    #[test]
    fn trace_round_trips(seed in any::<u64>()) {
        let trace = common::random_trace(seed);
        let parsed = parse_trace(&write_trace(&trace), &ProbeManifest::default()).unwrap();
        prop_assert_eq!(parsed, trace);
    }

    #[test]
    fn orig_copies_enter_values(seed in any::<u64>()) {
        let trace = common::random_trace(seed);
        let mut exits = 0;
        for inv in pair_invocations(&trace).unwrap() {
            let Some(exit) = inv.exit else { continue };
            exits += 1;
            let enter_decl = &trace.decls[inv.enter.point];
            let exit_decl = &trace.decls[exit.point];
            for (var, value) in enter_decl.vars.iter().zip(&inv.enter.values) {
                let orig = exit_decl.var_index(&format!("orig({})", var.name));
                prop_assert_eq!(orig.is_some(), var.kind.is_numeric());
                if let Some(i) = orig {
                    prop_assert_eq!(&exit.values[i], value);
                }
            }
        }
        let count = |kind| trace.samples.iter().filter(|s| trace.decls[s.point].key.kind == kind).count();
        prop_assert_eq!(count(PointKind::Exit), exits);
        prop_assert!(count(PointKind::Enter) >= exits);
    }

    #[test]
    fn candidates_only_weaken(seed in any::<u64>(), k in 1usize..=4) {
        let trace = common::random_trace(seed);
        for (p, decl) in trace.decls.iter().enumerate() {
            let samples: Vec<&Sample> = trace.samples_at(p).collect();
            let mut candidates = instantiate_candidates(decl, TemplateConfig { oneof_cardinality: k, ternary: true });
            for c in &mut candidates {
                let mut before: Option<Predicate> = None;
                for (n, s) in samples.iter().enumerate() {
                    let was = c.status();
                    c.feed(s).unwrap();
                    if was == Status::Falsified {
                        prop_assert_eq!(c.status(), Status::Falsified);
                    }
                    let now = c.predicate();
                    if let Some(pred) = &now {
                        for earlier in &samples[..=n] {
                            prop_assert!(pred.holds(lookup(decl, earlier)), "{} fails on history", pred);
                        }
                    }
                    match (&before, &now) {
                        (Some(Predicate::LowerBound { bound: a, .. }), Some(Predicate::LowerBound { bound: b, .. })) => {
                            prop_assert!(b.value_cmp(*a).is_le());
                        }
                        (Some(Predicate::UpperBound { bound: a, .. }), Some(Predicate::UpperBound { bound: b, .. })) => {
                            prop_assert!(b.value_cmp(*a).is_ge());
                        }
                        (Some(Predicate::OneOf { values: a, .. }), Some(Predicate::OneOf { values: b, .. })) => {
                            prop_assert!(a.iter().all(|v| b.contains(v)));
                        }
                        _ => {}
                    }
                    if now.is_some() {
                        before = now;
                    }
                }
            }
        }
    }

    #[test]
    fn reported_invariants_hold_on_every_sample(seed in any::<u64>()) {
        let trace = common::random_trace(seed);
        let spec = infer(&trace, &InferenceConfig::default()).unwrap();
        for (p, decl) in trace.decls.iter().enumerate() {
            for pred in spec.get(&decl.key) {
                for s in trace.samples_at(p) {
                    prop_assert!(pred.holds(lookup(decl, s)), "{} at {}", pred, decl.key);
                }
            }
        }
    }

    #[test]
    fn extending_a_trace_never_revives_a_falsified_invariant(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let trace = common::random_trace(seed);
        let cfg = InferenceConfig::default();
        for (p, decl) in trace.decls.iter().enumerate() {
            let samples: Vec<&Sample> = trace.samples_at(p).collect();
            let prefix = &samples[..(samples.len() as f64 * cut) as usize];
            for pred in infer_point(decl, samples.iter().copied(), &cfg).unwrap() {
                prop_assert!(prefix.iter().all(|s| pred.holds(lookup(decl, s))), "{} was falsified by the prefix", pred);
            }
        }
    }

    #[test]
    fn sample_order_does_not_matter(seed in any::<u64>(), shuffle in any::<u64>()) {
        let trace = common::random_trace(seed);
        let cfg = InferenceConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
        for (p, decl) in trace.decls.iter().enumerate() {
            let mut samples: Vec<&Sample> = trace.samples_at(p).collect();
            let forward = infer_point(decl, samples.iter().copied(), &cfg).unwrap();
            samples.shuffle(&mut rng);
            prop_assert_eq!(infer_point(decl, samples.iter().copied(), &cfg).unwrap(), forward);
        }
    }

    #[test]
    fn rendered_invariants_parse_back(seed in any::<u64>()) {
        let trace = common::random_trace(seed);
        let spec = infer(&trace, &InferenceConfig::default()).unwrap();
        for inv in spec.invariants() {
            let text = inv.predicate.to_string();
            let parsed: Predicate = text.parse().unwrap();
            prop_assert_eq!(&parsed, &inv.predicate);
            prop_assert_eq!(match_predicates(&parsed, &inv.predicate), MatchVerdict::Equivalent);
        }
        prop_assert_eq!(InferredSpec::parse(&spec.to_text()).unwrap().to_text(), spec.to_text());
    }
}

fn number() -> impl Strategy<Value = Number> {
    prop_oneof![
        (-3i64..=3).prop_map(Number::Int),
        (-3i64..=3).prop_map(|v| Number::Real(v as f64))
    ]
}

fn int_number() -> impl Strategy<Value = Number> {
    (-3i64..=3).prop_map(Number::Int)
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(v.into())
}

/// Predicates over `x` and `y`, both integer variables.
fn predicate() -> impl Strategy<Value = Predicate> {
    let var = prop::sample::select(vec!["x", "y"]).prop_map(String::from);
    let pair = prop::sample::select(vec![("x", "y"), ("y", "x")])
        .prop_map(|(a, b)| (a.to_string(), b.to_string()));
    prop_oneof![
        (
            var.clone(),
            prop::collection::btree_set(int_number(), 1..=3)
        )
            .prop_map(|(var, set)| {
                Predicate::OneOf {
                    var,
                    values: set.into_iter().map(Constant::Num).collect(),
                }
            }),
        (var.clone(), int_number()).prop_map(|(var, bound)| Predicate::LowerBound { var, bound }),
        (var.clone(), int_number()).prop_map(|(var, bound)| Predicate::UpperBound { var, bound }),
        var.prop_map(|var| Predicate::NonZero { var }),
        pair.clone().prop_map(|(x, y)| Predicate::VarEqual { x, y }),
        pair.clone()
            .prop_map(|(x, y)| Predicate::VarLessEqual { x, y }),
        pair.prop_map(|(x, y)| Predicate::VarLess { x, y }),
        (-2i64..=2, -2i64..=2).prop_map(|(a, b)| Predicate::LinearBinary {
            x: "x".into(),
            y: "y".into(),
            a: rat(a),
            b: rat(b),
        }),
    ]
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn prune_keeps_an_implication_minimal_cover(preds in prop::collection::vec(predicate(), 0..12)) {
        let kept = prune_redundant(preds.clone());
        for a in &kept {
            for b in &kept {
                prop_assert!(a == b || !implies(a, b), "{} implies {}", a, b);
            }
        }
        for p in &preds {
            prop_assert!(kept.contains(p) || kept.iter().any(|k| implies(k, p)), "{} dropped without cover", p);
        }
        prop_assert_eq!(prune_redundant(kept.clone()), kept);
    }

    #[test]
    fn prune_handles_mixed_representations(bounds in prop::collection::vec(number(), 1..6)) {
        let preds: Vec<Predicate> = bounds
            .into_iter()
            .map(|bound| Predicate::LowerBound { var: "x".into(), bound })
            .collect();
        let kept = prune_redundant(preds.clone());
        prop_assert_eq!(kept.len(), 1);
        let max = preds.iter().filter_map(|p| match p { Predicate::LowerBound { bound, .. } => Some(*bound), _ => None })
            .max_by(|a, b| a.value_cmp(*b)).unwrap();
        match &kept[0] {
            Predicate::LowerBound { bound, .. } => prop_assert!(bound.value_cmp(max).is_eq()),
            other => prop_assert!(false, "unexpected {}", other),
        }
    }

    #[test]
    fn verdicts_mirror(a in predicate(), b in predicate()) {
        let ab = match_predicates(&a, &b);
        let ba = match_predicates(&b, &a);
        prop_assert_eq!(ab == MatchVerdict::OverApproximation, ba == MatchVerdict::UnderApproximation);
        prop_assert_eq!(ab == MatchVerdict::Equivalent, ba == MatchVerdict::Equivalent);
        prop_assert_eq!(ab == MatchVerdict::Unrelated, ba == MatchVerdict::Unrelated);
    }

    #[test]
    fn report_percentages_follow_counts(co in 0usize..2000, extra in 0usize..200, inc in 0usize..3000, mo in 0usize..800, mextra in 0usize..400) {
        let r = ClassificationReport::from_counts(co, co + extra, inc, mo, mo + mextra);
        let pct = |num: usize, den: usize| if den == 0 { 0.0 } else { (num * 100) as f64 / den as f64 };
        let expected = [
            pct(co, co + inc),
            pct(co, co + mo),
            pct(co + extra, co + extra + inc),
            pct(co + extra, co + mo + extra + mextra),
        ];
        for (got, want) in r.percentages().iter().zip(expected) {
            prop_assert!((round2(*got) - want).abs() <= 0.005 + 1e-9);
        }
    }

    #[test]
    fn classification_partitions(keep in prop::collection::vec(any::<bool>(), 89), shift in prop::collection::vec(any::<bool>(), 89)) {
        let gt = subject::ground_truth();
        let mut spec = InferredSpec::new();
        let mut i = 0;
        for (point, props) in &gt.original {
            let mut chosen = Vec::new();
            for p in props {
                let (k, s) = (keep[i % keep.len()], shift[i % shift.len()]);
                i += 1;
                if !k {
                    continue;
                }
                chosen.push(match (s, p) {
                    (true, Predicate::LowerBound { var, bound }) => Predicate::LowerBound {
                        var: var.clone(),
                        bound: match bound {
                            Number::Int(v) => Number::Int(v + 1),
                            Number::Real(v) => Number::Real(v + 1.0),
                        },
                    },
                    _ => p.clone(),
                });
            }
            spec.insert(point.clone(), chosen);
        }
        let c = classify_detailed(&spec, &mut gt.clone(), &Review::default());
        let r = c.report();
        prop_assert_eq!(r.correct_total + r.incorrect, spec.len());
        let matched: BTreeSet<String> = gt
            .original
            .iter()
            .flat_map(|(pt, props)| props.iter().map(move |p| (pt, p)))
            .filter(|(pt, p)| spec.get(pt).iter().any(|q| match_predicates(q, p) == MatchVerdict::Equivalent))
            .map(|(pt, p)| format!("{pt} {p}"))
            .collect();
        prop_assert_eq!(matched.len() + r.missed_orig, gt.original_count());
        for m in &c.missed_orig {
            let key = format!("{} {}", m.point, m.predicate);
            prop_assert!(!matched.contains(&key), "{}", key);
        }
    }
}

fn subject_events() -> Vec<ProbeEvent> {
    let manifest = subject::manifest();
    ProbeKind::ALL
        .into_iter()
        .flat_map(|k| {
            manifest
                .ids(k)
                .map(|id| ProbeEvent::new(k, id))
                .collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(config(128))]

    #[test]
    fn coverage_is_monotone_and_counts_distinct_ids(a in prop::collection::vec(any::<bool>(), 1..400), b in prop::collection::vec(any::<bool>(), 1..400)) {
        let all = subject_events();
        let manifest = subject::manifest();
        let pick = |mask: &[bool]| -> Vec<ProbeEvent> {
            all.iter().enumerate().filter(|(i, _)| mask[i % mask.len()]).map(|(_, e)| e.clone()).collect()
        };
        let (ea, eb) = (pick(&a), pick(&b));
        let union: Vec<ProbeEvent> = ea.iter().chain(&eb).cloned().collect();
        let ra = compute_coverage(&ea, &manifest).unwrap();
        let ru = compute_coverage(&union, &manifest).unwrap();
        for (x, y) in ra.percentages().iter().zip(ru.percentages()) {
            prop_assert!(*x <= y);
        }
        let (ha, hb) = (hit_sets(&ea), hit_sets(&eb));
        for (i, kind) in ProbeKind::ALL.into_iter().enumerate() {
            let joined: BTreeSet<&str> = ha[i].union(&hb[i]).copied().collect();
            prop_assert_eq!(ru.get(kind).hit, joined.len());
        }
        // Repeating events changes nothing.
        let doubled: Vec<ProbeEvent> = ea.iter().chain(&ea).cloned().collect();
        prop_assert_eq!(compute_coverage(&doubled, &manifest).unwrap(), ra);
    }

    #[test]
    fn regression_is_scale_equivariant(
        pts in prop::collection::vec((0u32..10_000, 0u32..10_000), 3..12),
        scale in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        shift in -100.0f64..100.0,
    ) {
        let xs: Vec<f64> = pts.iter().map(|p| p.0 as f64 / 100.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1 as f64 / 100.0).collect();
        let Ok(fit) = linear_fit(&xs, &ys) else { return Ok(()) };
        let scaled: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let refit = linear_fit(&scaled, &ys).unwrap();
        prop_assert!((refit.r_squared - fit.r_squared).abs() < 1e-12);
        prop_assert!((refit.slope * scale - fit.slope).abs() <= 1e-9 * fit.slope.abs().max(1.0));
        let swapped = linear_fit(&ys, &xs).unwrap();
        prop_assert!((swapped.r_squared - fit.r_squared).abs() < 1e-12);
        let residual = |x: &f64, y: &f64| y - (fit.slope * x + fit.intercept);
        let sum: f64 = xs.iter().zip(&ys).map(|(x, y)| residual(x, y)).sum();
        let weighted: f64 = xs.iter().zip(&ys).map(|(x, y)| x * residual(x, y)).sum();
        prop_assert!(sum.abs() < 1e-9, "residual sum {}", sum);
        prop_assert!(weighted.abs() < 1e-9, "weighted residual sum {}", weighted);
    }
}

#[test]
fn subject_manifest_has_no_empty_kind() {
    let manifest = subject::manifest();
    for k in ProbeKind::ALL {
        assert!(manifest.count(k) > 0, "{k}");
    }
}
