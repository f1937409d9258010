//! PRISM export against a golden file, plus row-sum and round-trip checks.

mod common;

use common::three_state;

use std::path::PathBuf;

use mdpabs::verify::{check_bounded_reach_max, parse_prism, prism_model, properties_text, PropertySpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn three_state_model_matches_golden_file() {
    let text = prism_model(&three_state());
    let expected = std::fs::read_to_string(golden("three_state.prism")).unwrap();
    assert_eq!(text, expected);
}

#[test]
fn properties_match_golden_file() {
    let specs = [PropertySpec::reward_min(51), PropertySpec::reach_max("isCrashed", 51)];
    let expected = std::fs::read_to_string(golden("three_state.props")).unwrap();
    assert_eq!(properties_text(&specs), expected);
}

/// Sums the printed probabilities of every command as exact decimal integers.
fn printed_row_units(text: &str) -> Vec<u64> {
    text.lines()
        .filter(|l| l.trim_start().starts_with("[a") && l.contains("->"))
        .map(|l| {
            l.split("->").nth(1).unwrap().split('+').map(|branch| {
                let p = branch.trim().split(':').next().unwrap();
                let (int, frac) = p.split_once('.').unwrap();
                assert_eq!(frac.len(), 9, "{p}");
                int.parse::<u64>().unwrap() * 1_000_000_000 + frac.parse::<u64>().unwrap()
            })
            .sum()
        })
        .collect()
}

#[test]
fn printed_rows_sum_to_exactly_one() {
    let rows = printed_row_units(&prism_model(&three_state()));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|&u| u == 1_000_000_000), "{rows:?}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mdp = common::random_mdp(&mut rng, 6, 3);
        let rows = printed_row_units(&prism_model(&mdp));
        assert!(rows.iter().all(|&u| u == 1_000_000_000), "{rows:?}");
    }
}

#[test]
fn parsed_model_gives_the_same_answers() {
    let mdp = three_state();
    let back = parse_prism(&prism_model(&mdp)).unwrap();
    for h in [1, 2, 5] {
        let a = check_bounded_reach_max(&mdp, "isCrashed", h).unwrap();
        let b = check_bounded_reach_max(&back, "isCrashed", h).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
#[ignore = "rewrites the golden files"]
fn write_golden_files() {
    std::fs::create_dir_all(golden("")).unwrap();
    std::fs::write(golden("three_state.prism"), prism_model(&three_state())).unwrap();
    let specs = [PropertySpec::reward_min(51), PropertySpec::reach_max("isCrashed", 51)];
    std::fs::write(golden("three_state.props"), properties_text(&specs)).unwrap();
}
