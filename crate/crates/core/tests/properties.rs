use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reveal_core::belief::{self, BuildOptions};
use reveal_core::cassandra::{parse_pomdp, serialize_pomdp};
use reveal_core::mdp_solve::{almost_sure_parity, brute_force_parity_oracle, mec_decomposition, MdpGraph};
use reveal_core::model::validate;
use reveal_core::pipeline::{self, decide, Regime, SupportStrategy};
use reveal_core::random::{random_mdp, random_pomdp, RandomParams};
use reveal_core::revelation;
use reveal_core::sim::{self, bad_metric};
use reveal_core::{Pomdp, Support};

fn small_pomdp(seed: u64) -> Pomdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = RandomParams {
        states: 2 + (seed % 4) as usize,
        actions: 1 + (seed % 2) as usize,
        signals: 1 + (seed % 3) as usize,
        ..RandomParams::default()
    };
    random_pomdp(&mut rng, &params)
}

fn support_from_mask(n: usize, mask: u32) -> Support {
    Support::from_states(n, (0..n).filter(|q| mask >> q & 1 == 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_pomdps_are_valid(seed in any::<u64>()) {
        prop_assert!(validate(&small_pomdp(seed)).is_empty());
    }

    #[test]
    fn update_is_monotone_and_distributes_over_union(seed in any::<u64>(), m1 in 1u32..64, m2 in 1u32..64) {
        let p = small_pomdp(seed);
        let n = p.num_states();
        let (b1, b2) = (support_from_mask(n, m1), support_from_mask(n, m2));
        prop_assume!(!b1.is_empty() && !b2.is_empty());
        let mut union = b1.clone();
        union.union_with(&b2);
        for a in 0..p.num_actions() {
            for s in 0..p.num_signals() {
                let u = belief::update(&p, &union, a, s);
                let (x, y) = (belief::update(&p, &b1, a, s), belief::update(&p, &b2, a, s));
                let mut joined = p.empty_support();
                for part in [&x, &y].into_iter().flatten() {
                    joined.union_with(part);
                    prop_assert!(part.is_subset(u.as_ref().unwrap()));
                }
                prop_assert_eq!(u.unwrap_or_else(|| p.empty_support()), joined);
            }
        }
    }

    #[test]
    fn round_trip(seed in any::<u64>()) {
        let p = small_pomdp(seed);
        let q = parse_pomdp(&serialize_pomdp(&p)).unwrap();
        prop_assert_eq!(p.state_names(), q.state_names());
        prop_assert_eq!(p.priorities(), q.priorities());
        for s in 0..p.num_states() {
            for a in 0..p.num_actions() {
                let (r1, r2) = (p.row(s, a), q.row(s, a));
                prop_assert_eq!(r1.len(), r2.len());
                for (x, y) in r1.iter().zip(r2) {
                    prop_assert_eq!((x.signal, x.next), (y.signal, y.next));
                    prop_assert!((x.prob - y.prob).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn parity_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 1 + (seed % 6) as usize, 1 + (seed % 3) as usize, 3);
        let g = MdpGraph::from_mdp(&mdp);
        let prios = mdp.priorities.clone().unwrap();
        let sol = almost_sure_parity(&g, &prios);
        prop_assert_eq!(&sol.winning, &brute_force_parity_oracle(&g, &prios).unwrap());
        // strategy stays inside the winning region
        for q in sol.winning_states() {
            let a = sol.strategy.get(q).unwrap();
            prop_assert!(g.successors(q, a).iter().all(|&t| sol.winning[t]));
        }
    }

    #[test]
    fn mecs_are_disjoint_and_closed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 6, 2, 0);
        let g = MdpGraph::from_mdp(&mdp);
        let mut owner = vec![None; g.num_states()];
        for (i, ec) in mec_decomposition(&g).iter().enumerate() {
            for (k, &q) in ec.states.iter().enumerate() {
                prop_assert!(owner[q].is_none());
                owner[q] = Some(i);
                prop_assert!(!ec.actions[k].is_empty());
                for &a in &ec.actions[k] {
                    prop_assert!(g.successors(q, a).iter().all(|t| ec.states.contains(t)));
                }
            }
        }
    }

    #[test]
    fn strongly_implies_weakly_and_sr_is_strong(seed in any::<u64>(), eps in 0.01f64..0.99) {
        let p = small_pomdp(seed);
        let v = revelation::classify(&p, 1 << 16).unwrap();
        prop_assert!(!v.strongly || v.weakly);
        let sr = pipeline::transform_sr(&p, eps).unwrap();
        prop_assert!(revelation::is_strongly_revealing(&sr).0);
        prop_assert!(validate(&sr).is_empty());
    }

    #[test]
    fn controller_tracks_history_support(seed in any::<u64>()) {
        let p = small_pomdp(seed);
        let bm = belief::build_belief_mdp(&p, &BuildOptions::default()).unwrap();
        // play action 0 everywhere
        let strategy = SupportStrategy::new(p.initial_support().clone(), bm.nodes().iter().map(|b| (b.clone(), 0)).collect());
        let mut c = pipeline::lift_strategy(&p, &strategy);
        let trace = sim::simulate(&p, &mut c, 30, seed).unwrap();
        let mut history = Vec::new();
        for step in &trace.steps {
            history.push((step.action, step.signal));
            let b = belief::update_star(&p, p.initial_support(), &history).unwrap();
            // the true state is always in the tracked support
            prop_assert!(b.contains(step.state));
        }
        prop_assert_eq!(c.current(), &belief::update_star(&p, p.initial_support(), &history).unwrap());
    }

    #[test]
    fn metric_laws(prios in proptest::collection::vec(0u32..5, 0..60)) {
        let m = bad_metric(&prios);
        prop_assert_eq!(m.len(), prios.len());
        for t in 1..m.len() {
            prop_assert!(m[t] <= m[t - 1] + 1);
            if prios[t] % 2 == 0 && prios[..=t].iter().all(|&p| p % 2 == 0 || p < prios[t]) {
                prop_assert_eq!(m[t], 0);
            }
        }
    }
}

#[test]
fn decision_matrix_has_ten_entries() {
    let mut seen = 0;
    for r in Regime::ALL {
        for w in [false, true] {
            let _ = decide(r, w);
            seen += 1;
        }
    }
    assert_eq!(seen, 10);
}

#[test]
fn weakly_revealing_reaches_singletons() {
    for seed in 0..100u64 {
        let p = small_pomdp(seed);
        let v = revelation::classify(&p, 1 << 16).unwrap();
        if !v.weakly {
            continue;
        }
        let bm = belief::build_belief_mdp(&p, &BuildOptions::default()).unwrap();
        for node in 0..bm.num_nodes() {
            assert!(
                bm.support(node).is_singleton() || belief::revelation_distance(&bm, node, true).is_some(),
                "seed {seed} node {node}"
            );
        }
    }
}
