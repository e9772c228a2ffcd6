use enclab_cli::config::{parse_config, render_config};
use proptest::prelude::*;

fn num() -> impl Strategy<Value = f64> {
    -0.2..0.2f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn echo_reparses_to_the_same_config(
        c in (num(), num(), num()),
        radius in 0.05..0.4f64,
        h in prop_oneof![-0.9..-0.05f64, 0.05..5.0f64],
        gap in 0.01..0.5f64,
        width in 0.05..2.0f64,
        grid in any::<bool>(),
        n in 8usize..40,
        count in 2usize..30,
        range in proptest::option::of((1.0..50.0f64, 1.5..10.0f64)),
        prefactor in any::<bool>(),
        timedomain in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let mut text = String::new();
        if grid {
            text.push_str(&format!("body.kind = box\nsolver.mode = grid\ngrid.n = {n}\nshell.r1 = {}\n", 3f64.sqrt() + gap));
        } else {
            text.push_str(&format!("body.kind = ball\nbody.radius = 1\nshell.r1 = {}\n", 1.0 + gap));
        }
        let r1 = if grid { 3f64.sqrt() + gap } else { 1.0 + gap };
        text.push_str(&format!("shell.r2 = {}\n", r1 + width));
        let center = if grid { format!("{}, {}, {}", c.0, c.1, c.2) } else { "0, 0, 0".into() };
        text.push_str(&format!("inclusion.center = {center}\ninclusion.radius = {radius}\ninclusion.h = {h}\n"));
        text.push_str(&format!("tau.count = {count}\nseed = {seed}\n"));
        if let Some((lo, factor)) = range {
            text.push_str(&format!("tau.min = {lo}\ntau.max = {}\n", lo * factor));
        }
        if prefactor {
            text.push_str("fit.model = prefactor\n");
        }
        if timedomain {
            text.push_str("path = timedomain\n");
        }
        let cfg = parse_config(&text).unwrap();
        let echo = render_config(&cfg);
        let again = parse_config(&echo).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(echo, render_config(&again));
    }
}
