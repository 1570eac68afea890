//! Schedule builders and closed forms against independently written counts.

mod common;

use common::*;
use hiercoop::analytic::{
    h_level_slots, mac_slots, modified_hier_exact, session_hier_slots, session_slots,
    three_phase_slots, Counting,
};
use hiercoop::cluster::{Cell, Reuse, SquareGrid};
use hiercoop::engine::{execute_schedule, verify_against_analytic, VerifyMode};
use hiercoop::mac::{recursive_mac, tdma_mac, MacProblem};
use hiercoop::schemes::{build_h_level, build_modified_hier, build_three_phase, BuildOptions};

#[test]
fn three_phase_counts() {
    for (n, m) in [(16u64, 4u64), (64, 16), (64, 4), (256, 16), (256, 4)] {
        for q in 1..=3u64 {
            let [p1, p2, p3] = three_phase_count(n, m, q);
            let a = three_phase_slots(n as usize, m as usize, q as u32, Counting::Exact).unwrap();
            assert_eq!(a.total_slots, p1 + p2 + p3, "n={n} M={m} Q={q}");
            let s = build_three_phase(&lattice(n as usize), m as usize, q as u32, &BuildOptions::exact()).unwrap();
            let got: Vec<u64> = s.trace.phase_totals().into_iter().map(|(_, v)| v).collect();
            assert_eq!(got, vec![p1, p2, p3], "n={n} M={m} Q={q}");
        }
    }
    assert_eq!(three_phase_count(16, 4, 2).iter().sum::<u64>(), 52);
}

#[test]
fn squared_counting_rounds_up() {
    // M² and M sub-phases instead of M(M−1) and M−1.
    let a = three_phase_slots(16, 4, 2, Counting::Squared).unwrap();
    assert_eq!(a.total_slots, 16 + 16 + 2 * 16);
}

#[test]
fn h_level_counts() {
    for (n, sizes) in [(64u64, vec![16u64, 4]), (256, vec![64, 16]), (256, vec![64, 16, 4]), (256, vec![16, 4])] {
        let want = h_level_count(n, &sizes, 2);
        let us: Vec<usize> = sizes.iter().map(|&x| x as usize).collect();
        let a = h_level_slots(n as usize, &us, 2, Counting::Exact).unwrap();
        assert_eq!(a.total_slots, want, "n={n} sizes={sizes:?}");
        let s = build_h_level(&lattice(n as usize), &us, 2, &BuildOptions::exact()).unwrap();
        assert_eq!(s.trace.total_slots, want, "n={n} sizes={sizes:?}");
        verify_against_analytic(&s.trace, &a, VerifyMode::Exact).unwrap();
    }
}

#[test]
fn h_level_bulk_is_product_of_sizes() {
    let mut s = build_h_level(&lattice(256), &[64, 16], 2, &BuildOptions::exact()).unwrap();
    assert_eq!(s.bulk, 64 * 16);
    let m = execute_schedule(&mut s).unwrap();
    assert_eq!(m.total_bits, 256 * 64 * 16);
}

#[test]
fn tdma_examples() {
    let net = random(8, 0);
    let cell = Cell::root(&net);
    let sub = |k: usize| Cell {
        nodes: cell.nodes[..k].to_vec(),
        ..cell.clone()
    };
    assert_eq!(tdma_mac(&MacProblem::full(sub(2), 1, 2)).unwrap().total_slots, 2);
    assert_eq!(tdma_mac(&MacProblem::full(sub(4), 1, 2)).unwrap().total_slots, 12);
    let s = tdma_mac(&MacProblem::full(sub(4), 3, 2)).unwrap();
    assert_eq!(s.total_slots, 36);
    s.verify_delivery().unwrap();
}

#[test]
fn recursive_mac_counts() {
    for (m, levels) in [(16u64, 2u32), (64, 3), (256, 2), (256, 1), (4096, 2)] {
        let net = lattice(m as usize);
        let grid = SquareGrid::new(&net);
        let s = recursive_mac(&MacProblem::full(Cell::root(&net), 1, 2), levels as usize, &grid, Reuse::NONE).unwrap();
        let want = mac_count(m, 1, 2, levels);
        assert_eq!(s.total_slots, want, "m={m} levels={levels}");
        assert_eq!(mac_slots(m as usize, 2, levels as usize, 1, Counting::Exact), want);
    }
    assert_eq!(mac_count(16, 1, 2, 2), 160);
}

#[test]
fn modified_counts() {
    for (m, levels) in [(16u64, 2u32), (64, 3), (16, 1)] {
        let want = modified_count(256, m, 2, levels);
        let a = modified_hier_exact(256, m as usize, 2, levels as usize).unwrap();
        assert_eq!(a.total_slots, want, "M={m} levels={levels}");
        let s = build_modified_hier(&lattice(256), m as usize, 2, levels as usize, &BuildOptions::exact()).unwrap();
        assert_eq!(s.trace.total_slots, want, "M={m} levels={levels}");
    }
}

#[test]
fn session_closed_forms() {
    let a = session_slots(16384, 128, 2, None).unwrap();
    assert_eq!(a.bulk_size, 128);
    // Span M + active + Q·M·log₂n = 4 + 4 + 32, over n/active = 4 sessions.
    let s = session_slots(16, 4, 2, Some(4)).unwrap();
    assert_eq!((s.delay, s.total_slots), (40.0, 160));
    let h = session_hier_slots(4096, 256, 16, 2, 1, 2, None).unwrap();
    assert!((h.delay - 5120.0).abs() < 1.0, "span {}", h.delay);
}

#[test]
fn random_instances_diverge_from_the_exact_form() {
    // Unequal clusters: the trace still delivers everything, but its phases
    // no longer match the perfect-instance count.
    let mut s = build_three_phase(&random(200, 3), 14, 2, &BuildOptions::exact()).unwrap();
    execute_schedule(&mut s).unwrap();
    let a = three_phase_slots(200, 14, 2, Counting::Exact).unwrap();
    assert!(verify_against_analytic(&s.trace, &a, VerifyMode::Exact).is_err());
}
