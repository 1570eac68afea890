//! Test-side reference counts, written from the scheme descriptions and not
//! from the library's closed forms.

#![allow(dead_code)]

use hiercoop::netmodel::{ChannelParams, Network};

pub fn lattice(n: usize) -> Network {
    Network::lattice(n, ChannelParams::default(), 0).unwrap()
}

pub fn random(n: usize, seed: u64) -> Network {
    Network::generate(n, ChannelParams::default(), seed).unwrap()
}

/// Slot count of the three-phase scheme on a perfect instance, counted
/// transmission by transmission: every source sends one bit to each other
/// member (phase 1), one MIMO slot per source (phase 2), and every member
/// sends `Q` bits to each other member's destination (phase 3).
pub fn three_phase_count(n: u64, m: u64, q: u64) -> [u64; 3] {
    let mut p1 = 0;
    for _src in 0..m {
        for _other in 1..m {
            p1 += 1;
        }
    }
    let p2 = n;
    let mut p3 = 0;
    for _member in 0..m {
        for _dest in 1..m {
            p3 += q;
        }
    }
    [p1, p2, p3]
}

/// Slots for every member of an `m`-node cluster to move `∏sizes` bits to
/// the member at a fixed cyclic offset, three-phase style with nested
/// clusters `sizes`. With no nesting the `m` single-bit transfers go one per
/// slot.
pub fn shift_cost(m: u64, sizes: &[u64], q: u64) -> u64 {
    let Some((&c, rest)) = sizes.split_first() else {
        return m;
    };
    let below: u64 = rest.iter().product();
    // Spreading: c−1 offsets, each carrying `below` bits per member.
    let spread = (c - 1) * shift_cost(c, rest, q);
    // Long range: `below` MIMO slots per source.
    let mimo = m * below;
    // Decoding: Q bits per received observation, again c−1 offsets.
    let decode = q * spread;
    spread + mimo + decode
}

/// Total slots of the h-level hierarchy with sizes `M1 > M2 > …` on a
/// perfect instance.
pub fn h_level_count(n: u64, sizes: &[u64], q: u64) -> u64 {
    shift_cost(n, sizes, q)
}

/// Full multiple access on `m` nodes with `levels` levels, `l` bits per
/// ordered pair. Inner cluster size is `m^{(levels−1)/levels}`, which is
/// the size that balances the long-range sweep against the recursion.
pub fn mac_count(m: u64, l: u64, q: u64, levels: u32) -> u64 {
    if levels <= 1 || m < 4 {
        return m * (m - 1) * l;
    }
    let inner = (m as f64).powf((levels - 1) as f64 / levels as f64).round() as u64;
    let clusters = m / inner;
    // One cluster at a time: a MIMO slot towards every node, then all
    // clusters decode their Q·l-bit observations in parallel.
    clusters * (m * l + mac_count(inner, q * l, q, levels - 1))
}

/// Modified hierarchy on a perfect instance: multiple access inside clusters
/// of `m` for spreading (1 bit per pair) and decoding (`Q` bits per pair).
pub fn modified_count(n: u64, m: u64, q: u64, levels: u32) -> u64 {
    mac_count(m, 1, q, levels) + n + mac_count(m, q, q, levels)
}

/// Ordinary least-squares slope of `log₂ y` against `log₂ x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
