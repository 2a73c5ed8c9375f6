mod common;

use std::collections::BTreeSet;

use droidmark::features::SuspectList;
use droidmark::monitor::{
    emit_trace, generate_instances, instances_to_trace, parse_trace, replay_events, replay_trace, EventRecord,
    Signal, DEFAULT_WINDOW_MS, PROCESS_NAMES,
};
use proptest::prelude::*;

fn suspects() -> SuspectList {
    SuspectList(PROCESS_NAMES.iter().map(|s| s.to_string()).collect())
}

fn events() -> impl Strategy<Value = Vec<EventRecord>> {
    let process = prop::sample::select(vec![
        "com.elite.SMSReceiver",
        "com.elite.BootReceiver",
        "com.samsung.ui",
        "com.other.App",
    ]);
    let event = (0u64..500, process, prop::collection::btree_set(0usize..4, 0..4), any::<bool>());
    prop::collection::vec(event, 0..40).prop_map(|mut evs| {
        evs.sort_by_key(|e| e.0);
        evs.into_iter()
            .map(|(t, p, sigs, wake)| EventRecord {
                timestamp: t,
                process: p.to_string(),
                signals: sigs.into_iter().map(|i| Signal::ALL[i]).collect(),
                screen_wake: wake,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn instances_bounded_by_buckets(evs in events(), window in 1u64..200) {
        let out = replay_events(&evs, &suspects(), window).unwrap();
        let buckets: BTreeSet<(u64, &str)> = evs
            .iter()
            .filter(|e| suspects().contains(&e.process))
            .map(|e| (e.timestamp / window, e.process.as_str()))
            .collect();
        prop_assert_eq!(out.len(), buckets.len());
        prop_assert!(out.iter().all(|i| i.process_name != "com.other.App"));
    }

    #[test]
    fn trace_text_round_trips(evs in events()) {
        prop_assert_eq!(parse_trace(&emit_trace(&evs)).unwrap(), evs);
    }

    #[test]
    fn trace_parser_is_total(text in "[ -~\n]{0,200}") {
        let _ = replay_trace(&text, &suspects(), 10);
    }
}

#[test]
fn bundled_trace_matches_generator() {
    let text = common::read_fixture("elite_trace.csv");
    let expected = emit_trace(&instances_to_trace(&generate_instances(1, 32), DEFAULT_WINDOW_MS));
    assert_eq!(text, expected);
    let replayed = replay_trace(&text, &suspects(), DEFAULT_WINDOW_MS).unwrap();
    assert_eq!(replayed.len(), 32);
}
