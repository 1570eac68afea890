//! Sessionized schedules: only a subset of the pairs runs through the three
//! phases at a time, so each bit waits for one session instead of the
//! whole schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytic::check_session_hier_constraint;
use crate::cluster::{Cell, ClusterTree, GridBuilder, SquareGrid};
use crate::error::{Error, Result};
use crate::mac::{build_plan, generalized_mac_unchecked, IdAlloc, MacPlan, MacProblem};
use crate::netmodel::{Network, NodeId};
use crate::trace::{BitLedger, Event, EventKind, Phase, Schedule, ScheduleTrace, NETWORK_WIDE};

use super::{ceil_div, share, BuildOptions, Phase3Budget};

fn session_rng(net: &Network, opts: &BuildOptions) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(net.seed().rotate_left(32) ^ opts.seed ^ 0x5e55_10a5)
}

/// Picks up to `limit` clusters that still have work, most remaining first
/// with ties broken at random. `None` selects every cluster with work.
fn pick_active<T>(remaining: &[Vec<T>], limit: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..remaining.len()).filter(|&i| !remaining[i].is_empty()).collect();
    if let Some(limit) = limit {
        idx.shuffle(rng);
        idx.sort_by_key(|&i| std::cmp::Reverse(remaining[i].len()));
        idx.truncate(limit);
        idx.sort_unstable();
    }
    idx
}

/// Records one session's phases and delivery.
struct SessionWriter<'a> {
    trace: &'a mut ScheduleTrace,
    session: u32,
    detail: u32,
}

impl SessionWriter<'_> {
    fn phase(&mut self, start: u64, end: u64, phase: Phase) {
        if end > start {
            self.trace.push(Event {
                start,
                end,
                session: self.session,
                phase,
                depth: 0,
                cluster: NETWORK_WIDE,
                kind: EventKind::Recurse,
                payload_bits: 0,
                batches: Vec::new(),
            });
        }
    }

    fn cluster(&mut self, start: u64, len: u64, phase: Phase, cluster: u32, kind: EventKind, batches: Vec<u32>) {
        if self.detail >= 1 && len > 0 {
            self.trace.push(Event {
                start,
                end: start + len,
                session: self.session,
                phase,
                depth: 1,
                cluster,
                kind,
                payload_bits: len,
                batches,
            });
        }
    }

    fn deliver(&mut self, at: u64, batches: Vec<u32>, bits: u64) {
        self.trace.push(Event {
            start: at,
            end: at,
            session: self.session,
            phase: Phase::Decode,
            depth: 0,
            cluster: NETWORK_WIDE,
            kind: EventKind::Deliver,
            payload_bits: bits,
            batches,
        });
    }
}

/// Sessionized three-phase scheme with clusters of about `m` nodes and
/// bulk `m` per pair. Each session serves one random unserved source per
/// active cluster: every cluster by default, or the `m` clusters with the
/// most unserved sources when `opts.restricted` is set.
pub fn build_session(net: &Network, m: usize, q: u32, opts: &BuildOptions) -> Result<Schedule> {
    let n = net.len();
    if m < 1 || m > n {
        return Err(Error::InvalidParams(format!("need 1 ≤ M ≤ n (M={m}, n={n})")));
    }
    let q = q as u64;
    let bulk = m as u64;
    let cells = SquareGrid::new(net).split(&Cell::root(net), m);
    let mut home = vec![0usize; n];
    for (ci, c) in cells.iter().enumerate() {
        for &v in &c.nodes {
            home[v.0] = ci;
        }
    }
    let mut rng = session_rng(net, opts);
    let mut remaining: Vec<Vec<NodeId>> = cells
        .iter()
        .map(|c| {
            let mut v = c.nodes.clone();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let limit = opts.restricted.then_some(m);
    let reserve = match opts.budget {
        Phase3Budget::Realized => 0,
        Phase3Budget::Reserved => q * (m as u64 - 1) * (n as f64).log2().ceil() as u64,
    };

    let mut trace = ScheduleTrace::new(if opts.restricted { "session-restricted" } else { "session" });
    let mut ledger = BitLedger::new();
    let mut t = 0u64;
    let mut session = 0u32;
    loop {
        let active = pick_active(&remaining, limit, &mut rng);
        if active.is_empty() {
            break;
        }
        let served: Vec<(NodeId, usize)> = active
            .iter()
            .map(|&ci| (remaining[ci].pop().expect("active cluster has work"), ci))
            .collect();
        let batches: Vec<u32> = served
            .iter()
            .map(|&(s, _)| ledger.inject(s, net.destination(s), bulk, t))
            .collect();

        // Phase 1: the source keeps its own share and hands out the rest.
        let p1_jobs: Vec<_> = served
            .iter()
            .map(|&(_, ci)| (cells[ci].coord, bulk - share(bulk, cells[ci].len(), 0)))
            .collect();
        let (p1, s1) = opts.reuse.schedule(&p1_jobs);

        // Phase 2: one MIMO block per served pair.
        let mimo: Vec<u64> = served.iter().map(|&(_, ci)| ceil_div(bulk, cells[ci].len() as u64)).collect();
        let p2: u64 = mimo.iter().sum();

        // Phase 3: each destination cluster relays Q bits per observation
        // from every other member to each destination it holds.
        let mut p3_len = vec![0u64; cells.len()];
        for (&(s, _), &k) in served.iter().zip(&mimo) {
            let d = home[net.destination(s).0];
            p3_len[d] += q * (cells[d].len() as u64 - 1) * k;
        }
        let p3_jobs: Vec<_> = cells
            .iter()
            .zip(&p3_len)
            .map(|(c, &len)| (c.coord, len.max(reserve)))
            .collect();
        let (p3, s3) = opts.reuse.schedule(&p3_jobs);

        let (t1, t2, end) = (t + p1, t + p1 + p2, t + p1 + p2 + p3);
        let mut w = SessionWriter {
            trace: &mut trace,
            session,
            detail: opts.detail,
        };
        w.phase(t, t1, Phase::Distribute);
        w.phase(t1, t2, Phase::LongRange);
        w.phase(t2, end, Phase::Decode);
        for (((_, ci), (_, len)), s) in served.iter().zip(&p1_jobs).zip(s1) {
            w.cluster(t + s, *len, Phase::Distribute, *ci as u32, EventKind::Tdma, Vec::new());
        }
        let mut at = t1;
        for ((&(_, ci), &k), &b) in served.iter().zip(&mimo).zip(&batches) {
            w.cluster(at, k, Phase::LongRange, ci as u32, EventKind::Mimo, vec![b]);
            at += k;
        }
        for (ci, ((_, len), s)) in p3_jobs.iter().zip(s3).enumerate() {
            w.cluster(t2 + s, *len, Phase::Decode, ci as u32, EventKind::Tdma, Vec::new());
        }
        w.deliver(end, batches, served.len() as u64 * bulk);
        t = end;
        session += 1;
    }
    Ok(Schedule { trace, ledger, bulk })
}

/// Sessionized two-scale hierarchy: large clusters of about `m1` nodes
/// split into small clusters of about `m2`. Each session activates one
/// unserved small cluster per active large cluster (all of them by default,
/// `round(m1^{1/h2})` when `opts.restricted` is set); its members are the
/// sources of that session. The bulk is `m1`, capped at the smallest large
/// cluster so that one MIMO block carries a whole source.
pub fn build_session_hier(
    net: &Network,
    m1: usize,
    m2: usize,
    q: u32,
    h1: usize,
    h2: usize,
    opts: &BuildOptions,
) -> Result<Schedule> {
    let n = net.len();
    if !(1 <= m2 && m2 <= m1 && m1 <= n) || h1 < 1 || h2 < 1 {
        return Err(Error::InvalidParams(format!(
            "need 1 ≤ M2 ≤ M1 ≤ n and h1, h2 ≥ 1 (M1={m1}, M2={m2}, n={n})"
        )));
    }
    check_session_hier_constraint(m1, m2, h2)?;
    let grid = SquareGrid::new(net);
    let tree = ClusterTree::build(net, &grid, &[m1, m2]);
    let large: Vec<usize> = tree.clusters[0].children.clone();
    // Each source's bits must fit one MIMO block of its large cluster.
    let bulk = large
        .iter()
        .map(|&l| tree.clusters[l].cell.len() as u64)
        .min()
        .unwrap_or(1)
        .min(m1 as u64);
    let qb = q as u64;

    let mut rng = session_rng(net, opts);
    let mut remaining: Vec<Vec<usize>> = large
        .iter()
        .map(|&l| {
            let mut v = tree.clusters[l].children.clone();
            v.shuffle(&mut rng);
            v
        })
        .collect();
    let limit = opts
        .restricted
        .then(|| ((m1 as f64).powf(1.0 / h2 as f64).round() as usize).max(2));

    let mut ids = IdAlloc::starting_at(tree.clusters.len() as u32);
    // Sub-phase 2 plans depend only on the small cluster and the payload.
    let mut sub2_plans: std::collections::HashMap<(usize, u64), MacPlan> = Default::default();

    let mut trace = ScheduleTrace::new(if opts.restricted { "session-hier-restricted" } else { "session-hier" });
    let mut ledger = BitLedger::new();
    let mut t = 0u64;
    let mut session = 0u32;
    loop {
        let active = pick_active(&remaining, limit, &mut rng);
        if active.is_empty() {
            break;
        }
        // (large index, small cluster id)
        let picked: Vec<(usize, usize)> = active
            .iter()
            .map(|&li| (li, remaining[li].pop().expect("active cluster has work")))
            .collect();
        let mut sources: Vec<(NodeId, usize)> = Vec::new();
        for &(li, sc) in &picked {
            for &s in &tree.clusters[sc].cell.nodes {
                sources.push((s, li));
            }
        }
        let batches: Vec<u32> = sources
            .iter()
            .map(|&(s, _)| ledger.inject(s, net.destination(s), bulk, t))
            .collect();

        // Sub-phase 1: one MIMO block per member of the large cluster;
        // member at position p holds share(bulk, |L|, p) bits of each source.
        let sub1_jobs: Vec<_> = picked
            .iter()
            .map(|&(li, _)| (tree.clusters[large[li]].cell.coord, bulk))
            .collect();
        let (sub1, s_sub1) = opts.reuse.schedule(&sub1_jobs);

        // Sub-phase 2: every small cluster of an active large cluster
        // exchanges its quantized observations.
        let mut sub2_jobs = Vec::new();
        let mut sub2_keys = Vec::new();
        for &(li, _) in &picked {
            let lc = &tree.clusters[large[li]];
            let payload = qb * ceil_div(bulk, lc.cell.len() as u64);
            for &sc in &lc.children {
                let plan = sub2_plans.entry((sc, payload)).or_insert_with(|| {
                    let p = MacProblem::full(tree.clusters[sc].cell.clone(), payload, q);
                    build_plan(&p, h1, &grid, opts.reuse, &mut ids)
                });
                sub2_jobs.push((tree.clusters[sc].cell.coord, plan.slots()));
                sub2_keys.push((sc, payload));
            }
        }
        let (sub2, s_sub2) = opts.reuse.schedule(&sub2_jobs);

        // Phase 2: each source's bits leave its large cluster.
        let mimo: Vec<u64> = sources
            .iter()
            .map(|&(_, li)| ceil_div(bulk, tree.clusters[large[li]].cell.len() as u64))
            .collect();
        let p2: u64 = mimo.iter().sum();

        // Phase 3: generalized multiple access inside each large cluster
        // towards the destinations it holds.
        let mut targets: Vec<Vec<NodeId>> = vec![Vec::new(); large.len()];
        let mut peak = vec![0u64; large.len()];
        for (&(s, _), &k) in sources.iter().zip(&mimo) {
            let d = net.destination(s);
            let li = large
                .iter()
                .position(|&l| l == tree.locate(1, d).0)
                .expect("destination has a large cluster");
            targets[li].push(d);
            peak[li] = peak[li].max(k);
        }
        let mut p3_plans = Vec::new();
        for (li, tg) in targets.into_iter().enumerate() {
            if tg.is_empty() {
                continue;
            }
            let cell = tree.clusters[large[li]].cell.clone();
            let p = MacProblem {
                cell,
                targets: tg,
                bits_per_pair: qb * peak[li],
                q,
            };
            let sched = generalized_mac_unchecked(&p, h2, &grid, opts.reuse, &mut ids);
            p3_plans.push((li, sched.plan));
        }
        let p3_jobs: Vec<_> = p3_plans
            .iter()
            .map(|(li, plan)| (tree.clusters[large[*li]].cell.coord, plan.slots()))
            .collect();
        let (p3, s_p3) = opts.reuse.schedule(&p3_jobs);

        let t1 = t + sub1;
        let t2 = t1 + sub2;
        let t3 = t2 + p2;
        let end = t3 + p3;
        let mut w = SessionWriter {
            trace: &mut trace,
            session,
            detail: opts.detail,
        };
        w.phase(t, t1, Phase::DistributeMimo);
        w.phase(t1, t2, Phase::DistributeDecode);
        w.phase(t2, t3, Phase::LongRange);
        w.phase(t3, end, Phase::Decode);
        for ((&(li, _), &(_, len)), s) in picked.iter().zip(&sub1_jobs).zip(s_sub1) {
            w.cluster(t + s, len, Phase::DistributeMimo, large[li] as u32, EventKind::Mimo, Vec::new());
        }
        for (key, s) in sub2_keys.iter().zip(s_sub2) {
            sub2_plans[key].emit(w.trace, t1 + s, session, Phase::DistributeDecode, 1, opts.detail);
        }
        let mut at = t2;
        for ((&(_, li), &k), &b) in sources.iter().zip(&mimo).zip(&batches) {
            w.cluster(at, k, Phase::LongRange, large[li] as u32, EventKind::Mimo, vec![b]);
            at += k;
        }
        for ((_, plan), s) in p3_plans.iter().zip(s_p3) {
            plan.emit(w.trace, t3 + s, session, Phase::Decode, 1, opts.detail);
        }
        w.deliver(end, batches, sources.len() as u64 * bulk);
        t = end;
        session += 1;
    }
    Ok(Schedule { trace, ledger, bulk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::session_slots;
    use crate::netmodel::ChannelParams;

    #[test]
    fn session_serves_every_pair_once() {
        let net = Network::generate(256, ChannelParams::default(), 3).unwrap();
        let s = build_session(&net, 16, 2, &BuildOptions::default()).unwrap();
        let mut seen = vec![0; 256];
        for b in &s.ledger.entries {
            seen[b.source.0] += 1;
            assert_eq!(b.size, 16);
        }
        assert!(seen.iter().all(|&c| c == 1));
        s.trace.validate().unwrap();
    }

    #[test]
    fn session_lattice_counts() {
        let net = Network::lattice(16, ChannelParams::default(), 0).unwrap();
        let s = build_session(&net, 4, 2, &BuildOptions::exact()).unwrap();
        let totals = s.trace.phase_totals();
        // 4 sessions; 3 TDMA slots and 4 MIMO slots per session
        assert_eq!(totals[0], (Phase::Distribute, 12));
        assert_eq!(totals[1], (Phase::LongRange, 16));
        let a = session_slots(16, 4, 2, None).unwrap();
        assert!(s.trace.total_slots as f64 <= a.total_slots as f64 * 1.5);
    }

    #[test]
    fn restricted_session_count() {
        let net = Network::generate(1024, ChannelParams::default(), 8).unwrap();
        let opts = BuildOptions {
            restricted: true,
            ..BuildOptions::default()
        };
        let s = build_session(&net, 8, 2, &opts).unwrap();
        let sessions = s.trace.events.iter().map(|e| e.session).max().unwrap() + 1;
        assert_eq!(sessions, 1024 / 8);
    }

    #[test]
    fn session_hier_constraint() {
        let net = Network::generate(1024, ChannelParams::default(), 1).unwrap();
        let err = build_session_hier(&net, 256, 4, 2, 1, 2, &BuildOptions::default());
        assert!(matches!(err, Err(Error::Constraint(_))));
    }

    #[test]
    fn session_hier_serves_every_pair() {
        let net = Network::generate(1024, ChannelParams::default(), 2).unwrap();
        let s = build_session_hier(&net, 128, 16, 2, 1, 2, &BuildOptions::default()).unwrap();
        assert_eq!(s.ledger.len(), 1024);
        let mut seen = vec![false; 1024];
        for b in &s.ledger.entries {
            assert!(!seen[b.source.0]);
            seen[b.source.0] = true;
        }
        s.trace.validate().unwrap();
    }
}
