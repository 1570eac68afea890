//! Non-sessionized unicast schedules: three-phase, `h`-level hierarchy and
//! the modified hierarchy with multiple-access cooperation phases.
//!
//! Every source holds `B` bits for its destination. Inside a cluster tree
//! the three phases are:
//!
//! 1. each source spreads its bits over the members of its cluster; for
//!    every in-cluster shift `r` this is a permutation problem solved one
//!    level deeper (or by TDMA at the bottom);
//! 2. sources take turns sending their spread bits to the destination
//!    cluster with `⌈B/c⌉` MIMO slots;
//! 3. destination clusters forward `Q` quantized bits per observation to
//!    each destination, again as shift problems.
//!
//! Sub-problems depend only on (cluster, shift, bits), so their lengths are
//! memoized and never expanded into events below depth 1.

use std::collections::HashMap;

use crate::cluster::{ClusterTree, Reuse, SquareGrid};
use crate::error::{Error, Result};
use crate::mac::{build_plan, IdAlloc, MacPlan, MacProblem};
use crate::netmodel::{Network, NodeId};
use crate::trace::{BitLedger, Event, EventKind, Phase, Schedule, ScheduleTrace, NETWORK_WIDE};

use super::{ceil_div, share, BuildOptions};

/// Lengths of one three-phase run inside a cluster.
struct Run {
    p1: u64,
    p2: u64,
    p3: u64,
    /// (cluster, offset, length) of the per-cluster work in phases 1 and 3.
    p1_jobs: Vec<(usize, u64, u64)>,
    p3_jobs: Vec<(usize, u64, u64)>,
    /// MIMO slots per member, in member order.
    mimo: Vec<u64>,
}

struct Unicast<'t> {
    tree: &'t ClusterTree,
    q: u64,
    reuse: Reuse,
    memo: HashMap<(usize, usize, u64), u64>,
}

impl<'t> Unicast<'t> {
    fn new(tree: &'t ClusterTree, q: u32, reuse: Reuse) -> Self {
        Unicast {
            tree,
            q: q as u64,
            reuse,
            memo: HashMap::new(),
        }
    }

    /// Slots for member `i` of cluster `id` to send `b` bits to member
    /// `(i + r) mod c`, for every `i` at once.
    fn shift(&mut self, id: usize, r: usize, b: u64) -> u64 {
        let tree = self.tree;
        let c = tree.clusters[id].cell.len();
        if b == 0 || r % c == 0 {
            return 0;
        }
        if let Some(&v) = self.memo.get(&(id, r, b)) {
            return v;
        }
        let v = if tree.clusters[id].children.is_empty() {
            c as u64 * b
        } else {
            let dest: Vec<usize> = (0..c).map(|i| (i + r) % c).collect();
            let run = self.run(id, &dest, b);
            run.p1 + run.p2 + run.p3
        };
        self.memo.insert((id, r, b), v);
        v
    }

    /// Three phases inside cluster `id`; member `i` sends `b` bits to
    /// member `dest[i]`.
    fn run(&mut self, id: usize, dest: &[usize], b: u64) -> Run {
        let tree = self.tree;
        let parent = &tree.clusters[id];
        let depth = parent.depth + 1;
        let child_of: Vec<usize> = parent.cell.nodes.iter().map(|&v| tree.locate(depth, v).0).collect();

        let mut p1_jobs = Vec::with_capacity(parent.children.len());
        for &ch in &parent.children {
            let c = tree.clusters[ch].cell.len();
            let len: u64 = (1..c).map(|r| self.shift(ch, r, share(b, c, r))).sum();
            p1_jobs.push((ch, len));
        }

        let mimo: Vec<u64> = child_of
            .iter()
            .map(|&ch| ceil_div(b, tree.clusters[ch].cell.len() as u64))
            .collect();
        let p2 = mimo.iter().sum();

        // MIMO slots addressed to each member, then the per-cluster maximum
        let mut inbound = vec![0u64; dest.len()];
        for (i, &d) in dest.iter().enumerate() {
            inbound[d] = mimo[i];
        }
        let mut peak: HashMap<usize, u64> = HashMap::new();
        for (i, &ch) in child_of.iter().enumerate() {
            let e = peak.entry(ch).or_default();
            *e = (*e).max(inbound[i]);
        }
        let mut p3_jobs = Vec::with_capacity(parent.children.len());
        for &ch in &parent.children {
            let c = tree.clusters[ch].cell.len();
            let bits = self.q * peak.get(&ch).copied().unwrap_or(0);
            let len: u64 = (1..c).map(|r| self.shift(ch, r, bits)).sum();
            p3_jobs.push((ch, len));
        }

        let (p1, p1_jobs) = self.place(p1_jobs);
        let (p3, p3_jobs) = self.place(p3_jobs);
        Run {
            p1,
            p2,
            p3,
            p1_jobs,
            p3_jobs,
            mimo,
        }
    }

    fn place(&self, jobs: Vec<(usize, u64)>) -> (u64, Vec<(usize, u64, u64)>) {
        let keyed: Vec<_> = jobs
            .iter()
            .map(|&(ch, len)| (self.tree.clusters[ch].cell.coord, len))
            .collect();
        let (total, starts) = self.reuse.schedule(&keyed);
        let placed = jobs
            .into_iter()
            .zip(starts)
            .map(|((ch, len), s)| (ch, s, len))
            .collect();
        (total, placed)
    }
}

fn check_sizes(n: usize, sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::InvalidParams("at least one cluster size is required".into()));
    }
    if sizes[0] > n || sizes.iter().any(|&m| m < 1) {
        return Err(Error::InvalidParams(format!("cluster sizes {sizes:?} must lie in [1, n = {n}]")));
    }
    if sizes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams(format!(
            "cluster sizes {sizes:?} must be strictly decreasing"
        )));
    }
    Ok(())
}

fn phase_event(start: u64, end: u64, phase: Phase, payload_bits: u64) -> Event {
    Event {
        start,
        end,
        session: 0,
        phase,
        depth: 0,
        cluster: NETWORK_WIDE,
        kind: EventKind::Recurse,
        payload_bits,
        batches: Vec::new(),
    }
}

fn cluster_event(start: u64, len: u64, phase: Phase, cluster: usize, kind: EventKind) -> Event {
    Event {
        start,
        end: start + len,
        session: 0,
        phase,
        depth: 1,
        cluster: cluster as u32,
        kind,
        payload_bits: 0,
        batches: Vec::new(),
    }
}

/// Ledger with one batch of `bulk` bits per source, all departing at 0.
fn unicast_ledger(net: &Network, bulk: u64) -> BitLedger {
    let mut ledger = BitLedger::new();
    for s in net.nodes() {
        ledger.inject(s, net.destination(s), bulk, 0);
    }
    ledger
}

/// Phase-2 MIMO events (one per source) followed by the delivery event.
fn push_long_range(
    trace: &mut ScheduleTrace,
    start: u64,
    mimo: &[u64],
    sources: &[(NodeId, usize)],
    detail: u32,
) {
    let mut t = start;
    for (&len, &(s, cluster)) in mimo.iter().zip(sources) {
        if detail >= 1 && len > 0 {
            trace.push(Event {
                start: t,
                end: t + len,
                session: 0,
                phase: Phase::LongRange,
                depth: 1,
                cluster: cluster as u32,
                kind: EventKind::Mimo,
                payload_bits: len,
                batches: vec![s.0 as u32],
            });
        }
        t += len;
    }
}

fn push_delivery(trace: &mut ScheduleTrace, at: u64, ledger: &BitLedger) {
    trace.push(Event {
        start: at,
        end: at,
        session: 0,
        phase: Phase::Decode,
        depth: 0,
        cluster: NETWORK_WIDE,
        kind: EventKind::Deliver,
        payload_bits: ledger.total_bits,
        batches: (0..ledger.len() as u32).collect(),
    });
}

/// Three-phase scheme with clusters of about `m1` nodes.
pub fn build_three_phase(net: &Network, m1: usize, q: u32, opts: &BuildOptions) -> Result<Schedule> {
    build_h_level(net, &[m1], q, opts)
}

/// Original `h`-level hierarchy with cluster sizes `sizes` (largest first);
/// the bulk per pair is their product.
pub fn build_h_level(net: &Network, sizes: &[usize], q: u32, opts: &BuildOptions) -> Result<Schedule> {
    check_sizes(net.len(), sizes)?;
    let tree = ClusterTree::build(net, &SquareGrid::new(net), sizes);
    let bulk: u64 = sizes.iter().map(|&m| m as u64).product();
    let mut uni = Unicast::new(&tree, q, opts.reuse);
    let dest: Vec<usize> = net.nodes().map(|s| net.destination(s).0).collect();
    let run = uni.run(0, &dest, bulk);

    let name = if sizes.len() == 1 { "three-phase" } else { "h-level" };
    let mut trace = ScheduleTrace::new(name);
    let ledger = unicast_ledger(net, bulk);
    let (t1, t2) = (run.p1, run.p1 + run.p2);
    let end = t2 + run.p3;
    trace.push(phase_event(0, t1, Phase::Distribute, ledger.total_bits));
    trace.push(phase_event(t1, t2, Phase::LongRange, ledger.total_bits));
    trace.push(phase_event(t2, end, Phase::Decode, ledger.total_bits));
    if opts.detail >= 1 {
        for &(ch, s, len) in &run.p1_jobs {
            if len > 0 {
                trace.push(cluster_event(s, len, Phase::Distribute, ch, leaf_kind(&tree, ch)));
            }
        }
        for &(ch, s, len) in &run.p3_jobs {
            if len > 0 {
                trace.push(cluster_event(t2 + s, len, Phase::Decode, ch, leaf_kind(&tree, ch)));
            }
        }
    }
    let sources: Vec<(NodeId, usize)> = net.nodes().map(|s| (s, tree.locate(1, s).0)).collect();
    push_long_range(&mut trace, t1, &run.mimo, &sources, opts.detail);
    push_delivery(&mut trace, end, &ledger);
    Ok(Schedule { trace, ledger, bulk })
}

fn leaf_kind(tree: &ClusterTree, id: usize) -> EventKind {
    if tree.clusters[id].children.is_empty() {
        EventKind::Tdma
    } else {
        EventKind::Recurse
    }
}

/// Modified hierarchy: bulk `M`; the cooperation phases inside each
/// cluster are full multiple-access problems solved with `mac_levels`
/// recursion levels.
pub fn build_modified_hier(
    net: &Network,
    m: usize,
    q: u32,
    mac_levels: usize,
    opts: &BuildOptions,
) -> Result<Schedule> {
    check_sizes(net.len(), &[m])?;
    if mac_levels < 1 {
        return Err(Error::InvalidParams("macLevels must be at least 1".into()));
    }
    let grid = SquareGrid::new(net);
    let tree = ClusterTree::build(net, &grid, &[m]);
    let bulk = m as u64;
    let children = tree.clusters[0].children.clone();
    let mut ids = IdAlloc::starting_at(tree.clusters.len() as u32);

    let mut p1_plans: Vec<(usize, MacPlan)> = Vec::new();
    for &ch in &children {
        let cell = tree.clusters[ch].cell.clone();
        let l = ceil_div(bulk, cell.len() as u64);
        let plan = build_plan(&MacProblem::full(cell, l, q), mac_levels, &grid, opts.reuse, &mut ids);
        p1_plans.push((ch, plan));
    }
    let mimo: Vec<u64> = net
        .nodes()
        .map(|s| ceil_div(bulk, tree.clusters[tree.locate(1, s).0].cell.len() as u64))
        .collect();
    let mut inbound_peak: HashMap<usize, u64> = HashMap::new();
    for s in net.nodes() {
        let dc = tree.locate(1, net.destination(s)).0;
        let e = inbound_peak.entry(dc).or_default();
        *e = (*e).max(mimo[s.0]);
    }
    let mut p3_plans: Vec<(usize, MacPlan)> = Vec::new();
    for &ch in &children {
        let cell = tree.clusters[ch].cell.clone();
        let l = q as u64 * inbound_peak.get(&ch).copied().unwrap_or(0);
        let plan = if l == 0 {
            MacPlan::Empty
        } else {
            build_plan(&MacProblem::full(cell, l, q), mac_levels, &grid, opts.reuse, &mut ids)
        };
        p3_plans.push((ch, plan));
    }

    let schedule_plans = |plans: &[(usize, MacPlan)]| {
        let jobs: Vec<_> = plans
            .iter()
            .map(|(ch, p)| (tree.clusters[*ch].cell.coord, p.slots()))
            .collect();
        opts.reuse.schedule(&jobs)
    };
    let (p1, s1) = schedule_plans(&p1_plans);
    let (p3, s3) = schedule_plans(&p3_plans);
    let p2: u64 = mimo.iter().sum();
    let (t1, t2) = (p1, p1 + p2);
    let end = t2 + p3;

    let mut trace = ScheduleTrace::new("modified-hier");
    let ledger = unicast_ledger(net, bulk);
    trace.push(phase_event(0, t1, Phase::Distribute, ledger.total_bits));
    trace.push(phase_event(t1, t2, Phase::LongRange, ledger.total_bits));
    trace.push(phase_event(t2, end, Phase::Decode, ledger.total_bits));
    if opts.detail >= 1 {
        for ((_, plan), s) in p1_plans.iter().zip(s1) {
            plan.emit(&mut trace, s, 0, Phase::Distribute, 1, opts.detail);
        }
        for ((_, plan), s) in p3_plans.iter().zip(s3) {
            plan.emit(&mut trace, t2 + s, 0, Phase::Decode, 1, opts.detail);
        }
    }
    let sources: Vec<(NodeId, usize)> = net.nodes().map(|s| (s, tree.locate(1, s).0)).collect();
    push_long_range(&mut trace, t1, &mimo, &sources, opts.detail);
    push_delivery(&mut trace, end, &ledger);
    Ok(Schedule { trace, ledger, bulk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{h_level_slots, modified_hier_exact, Counting};
    use crate::netmodel::ChannelParams;

    fn lattice(n: usize) -> Network {
        Network::lattice(n, ChannelParams::default(), 11).unwrap()
    }

    #[test]
    fn three_phase_sixteen() {
        let s = build_three_phase(&lattice(16), 4, 2, &BuildOptions::exact()).unwrap();
        assert_eq!(s.trace.total_slots, 52);
        assert_eq!(s.bulk, 4);
        assert_eq!(
            s.trace.phase_totals(),
            vec![(Phase::Distribute, 12), (Phase::LongRange, 16), (Phase::Decode, 24)]
        );
        s.trace.validate().unwrap();
    }

    #[test]
    fn singleton_clusters_are_direct() {
        let net = Network::generate(30, ChannelParams::default(), 1).unwrap();
        let s = build_three_phase(&net, 1, 2, &BuildOptions::exact()).unwrap();
        assert_eq!(s.trace.total_slots, 30);
    }

    #[test]
    fn h_level_matches_closed_form_on_lattices() {
        for (n, sizes) in [(16usize, vec![4usize, 1]), (64, vec![16, 4]), (256, vec![64, 16]), (256, vec![16])] {
            let s = build_h_level(&lattice(n), &sizes, 2, &BuildOptions::exact()).unwrap();
            let a = h_level_slots(n, &sizes, 2, Counting::Exact).unwrap();
            assert_eq!(s.trace.total_slots, a.total_slots, "n={n} sizes={sizes:?}");
            assert_eq!(s.trace.phase_totals(), a.phases);
        }
    }

    #[test]
    fn modified_matches_mac_counts() {
        for (m, levels) in [(16usize, 2usize), (64, 3)] {
            let s = build_modified_hier(&lattice(256), m, 2, levels, &BuildOptions::exact()).unwrap();
            let a = modified_hier_exact(256, m, 2, levels).unwrap();
            assert_eq!(s.trace.total_slots, a.total_slots, "M={m} levels={levels}");
            assert_eq!(s.trace.phase_totals(), a.phases);
        }
        let one = build_modified_hier(&lattice(256), 16, 2, 1, &BuildOptions::exact()).unwrap();
        let three = build_three_phase(&lattice(256), 16, 2, &BuildOptions::exact()).unwrap();
        assert_eq!(one.trace.total_slots, three.trace.total_slots);
    }

    #[test]
    fn size_ordering_enforced() {
        let net = lattice(64);
        assert!(build_h_level(&net, &[4, 16], 2, &BuildOptions::exact()).is_err());
        assert!(build_h_level(&net, &[65], 2, &BuildOptions::exact()).is_err());
    }
}
