//! Measures generalized multiple-access trace lengths over many seeds and
//! prints the smallest constant `K/c_h(Q)` that covers all of them, plus
//! the fitted growth exponent of the full recursive construction.
//!
//! Run with `cargo run --release --example calibrate_gmac`.

use hiercoop::cluster::{Cell, Reuse, SquareGrid};
use hiercoop::mac::{generalized_mac, recursion_constant, recursive_mac, MacProblem};
use hiercoop::netmodel::{ChannelParams, Network};
use hiercoop::sweep::fit_exponent;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let q = 2;
    for levels in 1..=3usize {
        let mut pts = Vec::new();
        for m in [16usize, 64, 256, 1024, 4096] {
            let net = Network::generate(m, ChannelParams::default(), 7).unwrap();
            let p = MacProblem::full(Cell::root(&net), 1, q);
            let s = recursive_mac(&p, levels, &SquareGrid::new(&net), Reuse::NONE).unwrap();
            let ideal = hiercoop::analytic::mac_slots(m, q, levels, 1, hiercoop::analytic::Counting::Exact);
            println!("  m={m} levels={levels} trace={} closed-form={ideal}", s.total_slots);
            pts.push((m as f64, s.total_slots as f64));
        }
        let fit = fit_exponent(&pts).unwrap();
        println!("recursive levels={levels} slope={:.4} (target {:.4})", fit.slope, (levels as f64 + 1.0) / levels as f64);
    }

    let mut worst: f64 = 0.0;
    for levels in 1..=3usize {
        for m in [256usize, 1024] {
            let e = levels as f64 / (levels as f64 + 1.0);
            for a in [(m as f64).powf(e).round() as usize, m] {
                for seed in 0..100u64 {
                    let net = Network::generate(m, ChannelParams::default(), seed).unwrap();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
                    let p = MacProblem::random_targets(Cell::root(&net), a, 1, q, &mut rng);
                    let s = generalized_mac(&p, levels, &SquareGrid::new(&net), Reuse::NONE).unwrap();
                    let mf = m as f64;
                    let shape = recursion_constant(levels, q)
                        * (a as f64 / mf)
                        * mf.powf((levels as f64 + 1.0) / levels as f64)
                        * mf.log2();
                    worst = worst.max(s.total_slots as f64 / shape);
                }
            }
        }
    }
    println!("generalized: worst trace/shape ratio = {worst:.4}");
}
