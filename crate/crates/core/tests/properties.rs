use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use promise_scale::analysis::{downstream_analysis, linearity_of, satisfiable_without, timescale_from_times, Keeping};
use promise_scale::graph::cluster_id;
use promise_scale::scale::{check_redundant, classify_state, compose};
use promise_scale::sim::{self, Scenario};
use promise_scale::{Agent, AgentId, Body, Promise, PromiseGraph, Promisees, StateClass, Variable};

const LABELS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Debug, Clone)]
struct Spec {
    histories: Vec<Vec<u32>>,
    promises: Vec<(usize, usize, bool, usize, Option<usize>)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(0u32..4, 0..3), n),
            prop::collection::vec(
                (0..n, 0..n, any::<bool>(), 0..LABELS.len(), prop::option::of(0..LABELS.len())),
                0..=3 * n,
            ),
        )
            .prop_map(|(histories, promises)| Spec { histories, promises })
    })
}

fn build(spec: &Spec, order: &[usize]) -> PromiseGraph {
    let mut g = PromiseGraph::new();
    for (i, hs) in spec.histories.iter().enumerate() {
        let mut a = Agent::new(&format!("A{i}"));
        for (v, h) in hs.iter().enumerate() {
            a.variables.push(Variable {
                name: format!("v{v}"),
                domain: Vec::new(),
                history: *h,
                constant: false,
            });
        }
        g = g.with_agent(a);
    }
    for &k in order {
        let (from, to, offer, label, cond) = spec.promises[k];
        if from == to {
            continue;
        }
        let (from, to, id) = (format!("A{from}"), format!("A{to}"), format!("p{k}"));
        let body = Body::of([LABELS[label]]);
        let mut p = if offer {
            Promise::offer(&id, &from, Promisees::of([to.as_str()]), body)
        } else {
            Promise::accept(&id, &from, Promisees::of([to.as_str()]), body)
        };
        if let Some(c) = cond {
            p = p.given(Body::of([LABELS[c]]));
        }
        g = g.with_promise(p);
    }
    g
}

fn in_order(spec: &Spec) -> PromiseGraph {
    build(spec, &(0..spec.promises.len()).collect::<Vec<_>>())
}

fn ids(g: &PromiseGraph) -> Vec<AgentId> {
    g.agents.keys().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bindings_ignore_declaration_order(s in spec(), seed in any::<u64>()) {
        let n = s.promises.len();
        let mut order: Vec<usize> = (0..n).collect();
        // Deterministic shuffle from the seed.
        let mut x = seed | 1;
        for i in (1..n).rev() {
            x ^= x << 13; x ^= x >> 7; x ^= x << 17;
            order.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let mut a = in_order(&s).bind_promises().unwrap();
        let mut b = build(&s, &order).bind_promises().unwrap();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn composite_class_dominates_members(s in spec(), cut in 1usize..6) {
        let g = in_order(&s);
        let agents = ids(&g);
        let cut = cut.min(agents.len());
        let partition = vec![agents[..cut].iter().cloned().collect::<BTreeSet<_>>()];
        let composed = compose(&g, &partition).unwrap();
        let id = if cut == 1 { agents[0].clone() } else { cluster_id(&partition[0]) };
        let whole = classify_state(&composed, &id).unwrap().class;
        for a in &partition[0] {
            let part = classify_state(&g, a).unwrap().class;
            prop_assert!(whole >= part, "{} is {} but member {} is {}", id, whole, a, part);
        }
    }

    #[test]
    fn singleton_composition_preserves_classes(s in spec()) {
        let g = in_order(&s);
        let partition: Vec<BTreeSet<AgentId>> = ids(&g).into_iter().map(|a| BTreeSet::from([a])).collect();
        let composed = compose(&g, &partition).unwrap();
        for a in ids(&g) {
            prop_assert_eq!(classify_state(&g, &a).unwrap().class, classify_state(&composed, &a).unwrap().class);
        }
    }

    #[test]
    fn collapse_is_idempotent(s in spec(), cut in 2usize..6) {
        let g = in_order(&s);
        let agents = ids(&g);
        prop_assume!(agents.len() >= 2);
        let cluster: BTreeSet<AgentId> = agents[..cut.min(agents.len())].iter().cloned().collect();
        let once = g.collapse_assisted(&cluster).unwrap();
        let id = cluster_id(&cluster);
        let twice = once.collapse_assisted(&BTreeSet::from([id.clone()])).unwrap();
        prop_assert_eq!(classify_state(&once, &id).unwrap(), classify_state(&twice, &id).unwrap());
        let mut p1: Vec<_> = once.promises.iter().map(|p| (p.promiser.clone(), p.polarity, p.body.clone())).collect();
        let mut p2: Vec<_> = twice.promises.iter().map(|p| (p.promiser.clone(), p.polarity, p.body.clone())).collect();
        p1.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        p2.sort_by(|a, b| format!("{a:?}").cmp(&format!("{b:?}")));
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn redundancy_is_symmetric(s in spec()) {
        let g = in_order(&s);
        let agents = ids(&g);
        for a1 in &agents {
            for a2 in &agents {
                for o in &agents {
                    prop_assert_eq!(
                        check_redundant(&g, a1, a2, o).unwrap(),
                        check_redundant(&g, a2, a1, o).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn removing_a_non_spof_keeps_promises_satisfiable(s in spec()) {
        let g = in_order(&s);
        let report = downstream_analysis(&g).unwrap();
        for p in &g.promises {
            if report.unsatisfiable.contains(&p.id) {
                continue;
            }
            let spofs = report.spof_by_promise.get(&p.id).cloned().unwrap_or_default();
            // The promiser is never counted as its own point of failure.
            for a in ids(&g).into_iter().filter(|a| *a != p.promiser) {
                let removed = BTreeSet::from([a.clone()]);
                let ok = satisfiable_without(&g, &p.id, &removed).unwrap();
                prop_assert_eq!(ok, !spofs.contains(&a), "promise {} without {}", p.id, a);
            }
        }
    }

    #[test]
    fn static_mappings_are_linear(table in prop::collection::btree_map(0u8..6, 0u8..3, 1..6), picks in prop::collection::vec(any::<prop::sample::Index>(), 12..40)) {
        let keys: Vec<_> = table.keys().copied().collect();
        let ks: Vec<Keeping> = picks.iter().enumerate().map(|(t, ix)| {
            let d = keys[ix.index(keys.len())];
            Keeping { global_step: t as u64, proper_time: t as u64, dependency: d.to_string(), output: table[&d].to_string() }
        }).collect();
        let counts = ks.iter().fold(BTreeMap::new(), |mut m: BTreeMap<&str, usize>, k| { *m.entry(&k.dependency).or_default() += 1; m });
        match linearity_of(&ks) {
            Ok(r) => {
                prop_assert!(r.linear && r.witness.is_none());
                let distinct: BTreeSet<_> = r.mapping.values().collect();
                prop_assert_eq!(r.causally_independent, r.mapping.len() >= 2 && distinct.len() == 1);
            }
            Err(_) => prop_assert!(counts.values().any(|c| *c < 2)),
        }
    }

    #[test]
    fn timescale_ratio_is_unit_free(inner in prop::collection::btree_set(1u64..500, 2..30), outer in prop::collection::btree_set(1u64..500, 1..10), c in 1u64..20) {
        let inner: Vec<u64> = inner.into_iter().collect();
        let outer: Vec<u64> = outer.into_iter().collect();
        let scaled = |v: &[u64]| v.iter().map(|t| t * c).collect::<Vec<_>>();
        let a = timescale_from_times(0, &inner, &outer, 0.01).unwrap();
        let b = timescale_from_times(0, &scaled(&inner), &scaled(&outer), 0.01).unwrap();
        prop_assert!((a.ratio - b.ratio).abs() < 1e-9 * a.ratio.max(1.0));
        prop_assert_eq!(a.effectively_invariant, b.effectively_invariant);
    }

    #[test]
    fn same_seed_same_trace(s in spec(), seed in any::<u64>()) {
        let g = in_order(&s);
        let sc = Scenario::default();
        let a = sim::run(&g, &sc, seed, 60).unwrap().trace.to_bytes();
        let b = sim::run(&g, &sc, seed, 60).unwrap().trace.to_bytes();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn proper_time_is_local(s in spec(), seed in any::<u64>()) {
        let g = in_order(&s);
        let run = sim::run(&g, &Scenario::default(), seed, 60).unwrap();
        let mut clocks: BTreeMap<AgentId, u64> = BTreeMap::new();
        for e in &run.trace.events {
            let clock = clocks.entry(e.observer.clone()).or_default();
            if e.kind.ticks() {
                prop_assert!(e.observer_proper_time > *clock || e.observer_proper_time == *clock + 1);
            }
            prop_assert!(e.observer_proper_time >= *clock, "{}'s clock went backwards", e.observer);
            *clock = e.observer_proper_time;
        }
        for (a, t) in &clocks {
            let ticks = run.trace.by(a).filter(|e| e.kind.ticks()).count() as u64;
            prop_assert_eq!(*t, ticks, "{} ticked only on its own events", a);
        }
    }
}

#[test]
fn strongly_stateless_agents_compose_to_strongly_stateless() {
    let g = PromiseGraph::new()
        .with_agents(["X", "Y", "Z"])
        .with_promise(Promise::offer("x", "X", Promisees::of(["Z"]), Body::of(["a"])))
        .with_promise(Promise::offer("y", "Y", Promisees::of(["Z"]), Body::of(["b"])));
    let set: BTreeSet<AgentId> = ["X", "Y"].into_iter().map(AgentId::new).collect();
    let composed = compose(&g, std::slice::from_ref(&set)).unwrap();
    assert_eq!(classify_state(&composed, &cluster_id(&set)).unwrap().class, StateClass::StronglyStateless);
}
