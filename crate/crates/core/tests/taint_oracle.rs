mod common;

use std::collections::BTreeSet;

use common::{expected_flows, oracle_flows, random_app, read_fixture, RANDOM_CATALOG};
use droidmark::catalog::SourceSinkCatalog;
use droidmark::ir::{parse_app, StmtId};
use droidmark::taint::{analyze, AnalysisConfig, FlowReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn engine_flows(app: &droidmark::ir::AppModel, cat: &SourceSinkCatalog) -> BTreeSet<(StmtId, StmtId)> {
    analyze(app, cat, &AnalysisConfig::default())
        .unwrap()
        .into_iter()
        .map(|f| (f.source_site, f.sink_site))
        .collect()
}

#[test]
fn random_apps_match_concrete_oracle() {
    let cat = SourceSinkCatalog::parse(RANDOM_CATALOG).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut nonempty = 0;
    for case in 0..300 {
        let app = random_app(&mut rng, 20);
        let expected = oracle_flows(&app, &cat, 3);
        let got = engine_flows(&app, &cat);
        assert_eq!(got, expected, "case {case}:\n{}", app.emit());
        nonempty += usize::from(!got.is_empty());
    }
    // the generator must actually exercise flows
    assert!(nonempty > 50, "only {nonempty} apps had flows");
}

#[test]
fn fixtures_report_planted_flows() {
    let cat = SourceSinkCatalog::bundled();
    for (ir, expected) in [("elite.ir", "elite.expected"), ("alias.ir", "alias.expected")] {
        let app = parse_app(&read_fixture(ir)).unwrap();
        let got = engine_flows(&app, &cat);
        for planted in expected_flows(expected) {
            assert!(got.contains(&planted), "{ir}: missing {planted:?}");
        }
        // the interpreter agrees on these fixtures too
        assert_eq!(got, oracle_flows(&app, &cat, 3), "{ir}");
    }
}

#[test]
fn appending_dead_code_keeps_flows() {
    let cat = SourceSinkCatalog::bundled();
    let base = read_fixture("elite.ir");
    let before = engine_flows(&parse_app(&base).unwrap(), &cat);
    let extra = [
        "  call android.util.Log.i(id)\n",
        "  id = call android.telephony.TelephonyManager.getDeviceId()\n",
        "  return\n  call android.util.Log.i(id)\n",
    ];
    for tail in extra {
        let mutated = base.replacen(
            "  call com.elite.AlarmReceiver.schedule(context)\n",
            &format!("  call com.elite.AlarmReceiver.schedule(context)\n{tail}"),
            1,
        );
        let after = engine_flows(&parse_app(&mutated).unwrap(), &cat);
        assert!(after.is_superset(&before), "{tail}");
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let cat = SourceSinkCatalog::bundled();
    let app = parse_app(&read_fixture("elite.ir")).unwrap();
    let run = || {
        FlowReport {
            app: app.app_name.clone(),
            flows: analyze(&app, &cat, &AnalysisConfig::default()).unwrap(),
        }
        .to_json()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(FlowReport::from_json(&a).unwrap().to_json(), a);
}
