//! Alignment properties on random trees: monotonicity under exec-delay
//! growth, prefix simultaneity, and sweep conservation.

use beeflow_core::path::same_prefix;
use beeflow_core::trace::{align, estimate, io_intervals, ProfileDefaults, TraceStore};
use beeflow_testkit as testkit;
use rand::Rng;

#[test]
fn growing_one_exec_delay_never_pulls_other_leaves_earlier() {
    let mut rng = testkit::rng(61);
    for case in 0..50 {
        let tree = testkit::random_tree(&mut rng, 20, 5);
        let est = estimate(&TraceStore::new(), &tree, &ProfileDefaults::default());
        let before = align(&tree, &est.profiles, &est.loops).unwrap();

        let leaves = tree.real_leaf_ids();
        if leaves.is_empty() {
            continue;
        }
        let victim = leaves[rng.random_range(0..leaves.len())].clone();
        let mut profiles = est.profiles.clone();
        profiles.get_mut(&victim).unwrap().exec_delay_s += rng.random_range(0.5..3.0);
        let after = align(&tree, &profiles, &est.loops).unwrap();

        for leaf in tree.leaf_ids() {
            let b = before.get(leaf).unwrap();
            let a = after.get(leaf).unwrap();
            assert!(
                a.init.start >= b.init.start - 1e-12,
                "case {case}: {leaf} moved earlier ({} -> {}) after slowing {victim}",
                b.init.start,
                a.init.start
            );
        }
    }
}

#[test]
fn same_prefix_leaves_share_their_init_start_in_alignment() {
    let mut rng = testkit::rng(62);
    let mut pairs = 0usize;
    for _ in 0..60 {
        let tree = testkit::random_tree(&mut rng, 22, 5);
        let est = estimate(&TraceStore::new(), &tree, &ProfileDefaults::default());
        let timeline = align(&tree, &est.profiles, &est.loops).unwrap();
        let leaves = tree.real_leaf_ids();
        for (i, a) in leaves.iter().enumerate() {
            for b in &leaves[i + 1..] {
                if same_prefix(&tree, a, b).unwrap() {
                    let sa = timeline.get(a).unwrap().init.start;
                    let sb = timeline.get(b).unwrap().init.start;
                    assert_eq!(sa, sb, "{a} vs {b}");
                    pairs += 1;
                }
            }
        }
    }
    assert!(pairs > 0, "generator produced no same-prefix pairs");
}

#[test]
fn sweep_weighted_length_equals_period_sum() {
    let mut rng = testkit::rng(63);
    for _ in 0..100 {
        let (timeline, ids) = testkit::random_timeline(&mut rng, 7);
        let intervals = io_intervals(&timeline, &ids).unwrap();
        let weighted: f64 = intervals.iter().map(|i| i.len() * i.degree as f64).sum();
        let direct: f64 = ids
            .iter()
            .flat_map(|l| timeline.get(l).unwrap().io_periods())
            .map(|p| p.len())
            .sum();
        assert!((weighted - direct).abs() < 1e-9);
        // Intervals are maximal: no two adjacent entries share a degree.
        for w in intervals.windows(2) {
            assert!(w[0].end < w[1].start || w[0].degree != w[1].degree);
        }
    }
}

#[test]
fn leaf_period_order_always_holds() {
    let mut rng = testkit::rng(64);
    for _ in 0..40 {
        let tree = testkit::random_tree(&mut rng, 20, 5);
        let est = estimate(&TraceStore::new(), &tree, &ProfileDefaults::default());
        let timeline = align(&tree, &est.profiles, &est.loops).unwrap();
        for entry in timeline.leaves.values() {
            assert!(entry.init.start <= entry.init.end);
            assert!(entry.init.end <= entry.input.start);
            assert!(entry.input.end <= entry.exec.start);
            assert!(entry.exec.end <= entry.output.start);
        }
    }
}
