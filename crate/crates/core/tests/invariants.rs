use bolt::harness::workload::{generate, Op, Weights, WorkloadConfig};
use bolt::ltt::LazyTailTree;
use bolt::{Assigned, ForestState, LogStatus, Position};
use proptest::prelude::*;

fn config(seed: u64, ops: usize, promote_heavy: bool) -> WorkloadConfig {
    let mut weights = Weights::default();
    if promote_heavy {
        weights.promote = 15;
        weights.cfork = 20;
    }
    WorkloadConfig { ops, seed, weights, promotable: if promote_heavy { 0.4 } else { 0.1 }, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tails_conserve_records(seed in any::<u64>(), heavy in any::<bool>()) {
        let w = generate(&config(seed, 600, heavy));
        let mut st = ForestState::new();
        for op in &w.ops {
            if let Op::Cmd(c) = op {
                let _ = st.apply(c);
                st.check_conservation().map_err(|e| TestCaseError::fail(e.to_string()))?;
            }
        }
    }

    #[test]
    fn readable_prefix_matches_resolve(seed in any::<u64>()) {
        let w = generate(&config(seed, 400, true));
        let mut st = ForestState::new();
        for op in &w.ops {
            if let Op::Cmd(c) = op {
                let _ = st.apply(c);
            }
        }
        for log in st.live_logs() {
            let all = st.resolve_all(log).unwrap();
            let limit = st.read_limit(log).unwrap().unwrap_or(Position(all.len() as u64));
            let visible = st.read_meta(log, Position(0), limit).unwrap();
            prop_assert_eq!(&visible[..], &all[..limit.0 as usize]);
            if let Assigned::At(t) = st.get_tail(log).unwrap() {
                prop_assert_eq!(t.0, all.len() as u64);
            }
        }
    }

    #[test]
    fn image_round_trip_preserves_fingerprint(seed in any::<u64>()) {
        let w = generate(&config(seed, 500, true));
        let mut st = ForestState::new();
        for op in &w.ops {
            if let Op::Cmd(c) = op {
                let _ = st.apply(c);
            }
        }
        let back = ForestState::from_image(&st.image(), LazyTailTree::new()).unwrap();
        prop_assert_eq!(back.fingerprint(), st.fingerprint());
        for log in st.live_logs() {
            prop_assert_eq!(back.resolve_all(log).unwrap(), st.resolve_all(log).unwrap());
        }
    }
}

#[test]
fn squashed_logs_stay_dead() {
    let w = generate(&config(11, 3000, true));
    let mut st = ForestState::new();
    for op in &w.ops {
        if let Op::Cmd(c) = op {
            let _ = st.apply(c);
        }
    }
    let dead: Vec<_> = st.descriptors().filter(|d| d.status != LogStatus::Live).map(|d| d.id).collect();
    assert!(!dead.is_empty());
    for log in dead {
        assert!(st.get_tail(log).is_err());
        assert!(st.read_meta(log, Position(0), Position(0)).is_err());
    }
}
