mod common;

use droidmark::ir::{parse_app, parse_app_bytes};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixtures_round_trip() {
    for name in ["elite.ir", "alias.ir"] {
        let app = parse_app(&common::read_fixture(name)).unwrap();
        let text = app.emit();
        let again = parse_app(&text).unwrap();
        assert_eq!(again, app, "{name}");
        assert_eq!(again.emit(), text, "{name}: emit is not canonical");
    }
}

#[test]
fn random_apps_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let app = common::random_app(&mut rng, 20);
        assert_eq!(parse_app(&app.emit()).unwrap(), app);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 2000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn parser_is_total_on_bytes(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_app_bytes(&bytes);
    }

    #[test]
    fn parser_is_total_on_mutated_fixture(cut in 0usize..4000, len in 0usize..40, junk in "[ -~\n]{0,12}") {
        let text = common::read_fixture("elite.ir");
        let start = cut.min(text.len());
        let end = (start + len).min(text.len());
        if text.is_char_boundary(start) && text.is_char_boundary(end) {
            let mutated = format!("{}{}{}", &text[..start], junk, &text[end..]);
            if let Err(e) = parse_app(&mutated) {
                let (line, col) = e.position();
                prop_assert!(line >= 1 && col >= 1);
            }
        }
    }
}
