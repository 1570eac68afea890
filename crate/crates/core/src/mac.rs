//! Schedules for the network multiple-access problem: every source holds
//! `L` independent bits for every target.
//!
//! A schedule is kept as a plan tree. A recursive level splits the nodes
//! into square cells; source cells take turns sweeping their bits to every
//! target with one MIMO block per target, after which all cells, in
//! parallel, exchange their quantized observations by solving a smaller
//! problem with payload `Q·L`. The tree gives exact slot counts cheaply and
//! is flattened into trace events on demand.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::analytic::mac_cluster_target;
use crate::cluster::{Cell, GridBuilder, Reuse};
use crate::error::{Error, Result};
use crate::netmodel::NodeId;
use crate::trace::{Event, EventKind, Phase, ScheduleTrace};

/// Slack applied to the idealized recursive count in [`MacSchedule::claimed_bound`].
pub const RECURSIVE_SLACK: f64 = 2.0;

/// Frozen constant of the generalized bound
/// `K·(A/m)·m^{(h+1)/h}·log m` with `K = GENERALIZED_SLACK·c_h(Q)`.
/// Calibrated by `examples/calibrate_gmac.rs`.
pub const GENERALIZED_SLACK: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct MacProblem {
    pub cell: Cell,
    pub targets: Vec<NodeId>,
    pub bits_per_pair: u64,
    pub q: u32,
}

impl MacProblem {
    /// Every node is a target.
    pub fn full(cell: Cell, bits_per_pair: u64, q: u32) -> Self {
        let targets = cell.nodes.clone();
        MacProblem {
            cell,
            targets,
            bits_per_pair,
            q,
        }
    }

    /// `a` targets drawn uniformly without replacement.
    pub fn random_targets<R: Rng + ?Sized>(
        cell: Cell,
        a: usize,
        bits_per_pair: u64,
        q: u32,
        rng: &mut R,
    ) -> Self {
        let targets = cell.nodes.choose_multiple(rng, a.min(cell.len())).copied().collect();
        MacProblem {
            cell,
            targets,
            bits_per_pair,
            q,
        }
    }

    pub fn size(&self) -> usize {
        self.cell.len()
    }

    fn validate(&self) -> Result<()> {
        if self.cell.len() < 2 {
            return Err(Error::InvalidParams(format!(
                "a multiple-access problem needs at least 2 nodes, got {}",
                self.cell.len()
            )));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParams("target set is empty".into()));
        }
        if self.bits_per_pair == 0 || self.q == 0 {
            return Err(Error::InvalidParams("L and Q must be positive".into()));
        }
        let members: std::collections::HashSet<NodeId> = self.cell.nodes.iter().copied().collect();
        if let Some(t) = self.targets.iter().find(|t| !members.contains(t)) {
            return Err(Error::InvalidParams(format!("target {t} is not a member node")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum MacPlan {
    /// Fewer than two nodes or no targets: nothing to exchange.
    Empty,
    Tdma(TdmaPlan),
    Recursive(Box<RecursivePlan>),
}

#[derive(Debug, Clone)]
pub struct TdmaPlan {
    pub id: u32,
    pub nodes: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    pub payload: u64,
}

#[derive(Debug, Clone)]
pub struct RecursivePlan {
    pub id: u32,
    pub nodes: Vec<NodeId>,
    pub targets: Vec<NodeId>,
    pub payload: u64,
    pub clusters: Vec<SubCluster>,
    /// Length of one parallel decode phase and each cluster's offset in it.
    pub decode_len: u64,
}

#[derive(Debug, Clone)]
pub struct SubCluster {
    pub id: u32,
    pub cell: Cell,
    pub targets: Vec<NodeId>,
    pub plan: MacPlan,
    pub offset: u64,
}

impl MacPlan {
    pub fn slots(&self) -> u64 {
        match self {
            MacPlan::Empty => 0,
            MacPlan::Tdma(t) => t.targets.len() as u64 * (t.nodes.len() as u64 - 1) * t.payload,
            MacPlan::Recursive(r) => r.clusters.len() as u64 * r.round_len(),
        }
    }

    /// Depth of the plan tree, counting a TDMA leaf as one level.
    pub fn levels(&self) -> usize {
        match self {
            MacPlan::Empty => 0,
            MacPlan::Tdma(_) => 1,
            MacPlan::Recursive(r) => {
                1 + r.clusters.iter().map(|c| c.plan.levels()).max().unwrap_or(0).max(1)
            }
        }
    }

    /// Appends the plan's events starting at `start`. Events deeper than
    /// `max_depth` are summarized by their enclosing `Recurse` event.
    pub fn emit(
        &self,
        trace: &mut ScheduleTrace,
        start: u64,
        session: u32,
        phase: Phase,
        depth: u32,
        max_depth: u32,
    ) {
        match self {
            MacPlan::Empty => {}
            MacPlan::Tdma(t) => trace.push(Event {
                start,
                end: start + self.slots(),
                session,
                phase,
                depth,
                cluster: t.id,
                kind: EventKind::Tdma,
                payload_bits: self.slots(),
                batches: Vec::new(),
            }),
            MacPlan::Recursive(r) => {
                let total = self.slots();
                trace.push(Event {
                    start,
                    end: start + total,
                    session,
                    phase,
                    depth,
                    cluster: r.id,
                    kind: EventKind::Recurse,
                    payload_bits: r.targets.len() as u64 * (r.nodes.len() as u64 - 1) * r.payload,
                    batches: Vec::new(),
                });
                if depth >= max_depth {
                    return;
                }
                let sweep = r.sweep_len();
                let mut t = start;
                for source in &r.clusters {
                    trace.push(Event {
                        start: t,
                        end: t + sweep,
                        session,
                        phase,
                        depth: depth + 1,
                        cluster: source.id,
                        kind: EventKind::Mimo,
                        payload_bits: source.cell.len() as u64 * sweep,
                        batches: Vec::new(),
                    });
                    t += sweep;
                    for c in &r.clusters {
                        c.plan.emit(trace, t + c.offset, session, phase, depth + 1, max_depth);
                    }
                    t += r.decode_len;
                }
            }
        }
    }
}

impl RecursivePlan {
    /// One MIMO block of `L` slots per target.
    fn sweep_len(&self) -> u64 {
        self.targets.len() as u64 * self.payload
    }

    fn round_len(&self) -> u64 {
        self.sweep_len() + self.decode_len
    }
}

/// Which construction produced a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacVariant {
    Tdma,
    Recursive,
    Generalized,
}

#[derive(Debug, Clone)]
pub struct MacSchedule {
    pub variant: MacVariant,
    pub levels: usize,
    pub plan: MacPlan,
    pub problem_size: usize,
    pub targets: usize,
    pub bits_per_pair: u64,
    pub q: u32,
    pub total_slots: u64,
    pub claimed_bound: f64,
}

/// Leading constant of the idealized recursive count:
/// `c₁ = 1`, `c_{h+1} = 1 + Q·c_h`.
pub fn recursion_constant(levels: usize, q: u32) -> f64 {
    let mut c = 1.0;
    for _ in 1..levels.max(1) {
        c = 1.0 + q as f64 * c;
    }
    c
}

impl MacSchedule {
    fn new(variant: MacVariant, levels: usize, problem: &MacProblem, plan: MacPlan) -> Self {
        let m = problem.size() as f64;
        let a = problem.targets.len() as f64;
        let l = problem.bits_per_pair as f64;
        let e = (levels as f64 + 1.0) / levels as f64;
        let c = recursion_constant(levels, problem.q);
        let claimed_bound = match variant {
            MacVariant::Tdma => a * (m - 1.0) * l,
            MacVariant::Recursive => RECURSIVE_SLACK * c * m.powf(e) * l,
            MacVariant::Generalized => GENERALIZED_SLACK * c * (a / m) * m.powf(e) * m.log2() * l,
        };
        MacSchedule {
            variant,
            levels,
            total_slots: plan.slots(),
            plan,
            problem_size: problem.size(),
            targets: problem.targets.len(),
            bits_per_pair: problem.bits_per_pair,
            q: problem.q,
            claimed_bound,
        }
    }

    pub fn within_bound(&self) -> bool {
        self.total_slots as f64 <= self.claimed_bound
    }

    /// Flattens the plan into a standalone trace.
    pub fn trace(&self, max_depth: u32) -> ScheduleTrace {
        let mut trace = ScheduleTrace::new(match self.variant {
            MacVariant::Tdma => "tdma-mac",
            MacVariant::Recursive => "recursive-mac",
            MacVariant::Generalized => "generalized-mac",
        });
        self.plan.emit(&mut trace, 0, 0, Phase::Tdma, 0, max_depth);
        trace
    }

    /// Replays the plan and checks that every (source, target) pair with
    /// source ≠ target receives exactly `L` bits and no other pair receives
    /// any. Cost is quadratic in the problem size.
    pub fn verify_delivery(&self) -> Result<()> {
        let (nodes, targets, payload) = match &self.plan {
            MacPlan::Empty => return Ok(()),
            MacPlan::Tdma(t) => (&t.nodes, &t.targets, t.payload),
            MacPlan::Recursive(r) => (&r.nodes, &r.targets, r.payload),
        };
        let counts = delivered(&self.plan, self.q);
        check_counts(nodes, targets, payload, &counts)
    }
}

type Counts = HashMap<(NodeId, NodeId), u64>;

fn check_counts(nodes: &[NodeId], targets: &[NodeId], payload: u64, counts: &Counts) -> Result<()> {
    let mut missing = Vec::new();
    let is_target: std::collections::HashSet<NodeId> = targets.iter().copied().collect();
    for &s in nodes {
        for &t in nodes {
            let want = if s != t && is_target.contains(&t) { payload } else { 0 };
            let got = counts.get(&(s, t)).copied().unwrap_or(0);
            if got != want {
                missing.push((s, t, got, want));
            }
        }
    }
    match missing.first() {
        None => Ok(()),
        Some(&(s, t, got, want)) if got > want => Err(Error::Mismatch(format!(
            "pair {s} -> {t} received {got} bits, expected {want}"
        ))),
        Some(&(s, t, _, _)) => Err(Error::Incomplete {
            count: missing.len(),
            source_node: s.0,
            destination: t.0,
        }),
    }
}

/// Bits delivered per (source, target) pair by a plan.
fn delivered(plan: &MacPlan, q: u32) -> Counts {
    let mut counts = Counts::new();
    match plan {
        MacPlan::Empty => {}
        MacPlan::Tdma(t) => {
            for &target in &t.targets {
                for &s in t.nodes.iter().filter(|&&s| s != target) {
                    *counts.entry((s, target)).or_default() += t.payload;
                }
            }
        }
        MacPlan::Recursive(r) => {
            // A cell's observations reach a target only if the cell's own
            // exchange hands every target the full Q·L observation bits.
            let sub_payload = r.payload * q as u64;
            let decoded: Vec<bool> = r
                .clusters
                .iter()
                .map(|c| {
                    let sub = delivered(&c.plan, q);
                    check_counts(&c.cell.nodes, &c.targets, sub_payload, &sub).is_ok()
                })
                .collect();
            let home: HashMap<NodeId, usize> = r
                .clusters
                .iter()
                .enumerate()
                .flat_map(|(i, c)| c.cell.nodes.iter().map(move |&n| (n, i)))
                .collect();
            for source in &r.clusters {
                for &target in &r.targets {
                    if !decoded[home[&target]] {
                        continue;
                    }
                    for &s in source.cell.nodes.iter().filter(|&&s| s != target) {
                        *counts.entry((s, target)).or_default() += r.payload;
                    }
                }
            }
        }
    }
    counts
}

/// Allocates cluster ids that are unique within one trace.
#[derive(Debug, Default)]
pub struct IdAlloc(u32);

impl IdAlloc {
    pub fn starting_at(first: u32) -> Self {
        IdAlloc(first)
    }

    pub fn next_id(&mut self) -> u32 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

/// Round-robin TDMA: `A·(m−1)·L` slots.
pub fn tdma_mac(problem: &MacProblem) -> Result<MacSchedule> {
    problem.validate()?;
    let plan = tdma_plan(problem, &mut IdAlloc::default());
    Ok(MacSchedule::new(MacVariant::Tdma, 1, problem, plan))
}

fn tdma_plan(problem: &MacProblem, ids: &mut IdAlloc) -> MacPlan {
    if problem.cell.len() < 2 || problem.targets.is_empty() {
        return MacPlan::Empty;
    }
    MacPlan::Tdma(TdmaPlan {
        id: ids.next_id(),
        nodes: problem.cell.nodes.clone(),
        targets: problem.targets.clone(),
        payload: problem.bits_per_pair,
    })
}

/// Full multiple access with `levels` recursion levels.
pub fn recursive_mac<G: GridBuilder>(
    problem: &MacProblem,
    levels: usize,
    grid: &G,
    reuse: Reuse,
) -> Result<MacSchedule> {
    problem.validate()?;
    if levels < 1 {
        return Err(Error::InvalidParams("levels must be at least 1".into()));
    }
    if problem.targets.len() != problem.size() {
        return Err(Error::InvalidParams(
            "the full multiple-access problem targets every node".into(),
        ));
    }
    let plan = build_plan(problem, levels, grid, reuse, &mut IdAlloc::default());
    let variant = if levels == 1 { MacVariant::Tdma } else { MacVariant::Recursive };
    Ok(MacSchedule::new(variant, levels, problem, plan))
}

/// Multiple access towards a target subset. Requires
/// `A ≥ m^{levels/(levels+1)}` (rounded).
pub fn generalized_mac<G: GridBuilder>(
    problem: &MacProblem,
    levels: usize,
    grid: &G,
    reuse: Reuse,
) -> Result<MacSchedule> {
    problem.validate()?;
    if levels < 1 {
        return Err(Error::InvalidParams("levels must be at least 1".into()));
    }
    let m = problem.size() as f64;
    let need = m.powf(levels as f64 / (levels as f64 + 1.0)).round();
    if (problem.targets.len() as f64) < need {
        return Err(Error::Constraint(format!(
            "generalized multiple access needs A(m) ≥ m^(h/(h+1)): A = {} < {need} (m = {}, h = {levels})",
            problem.targets.len(),
            problem.size()
        )));
    }
    Ok(generalized_mac_unchecked(problem, levels, grid, reuse, &mut IdAlloc::default()))
}

/// [`generalized_mac`] without the target-count precondition, sharing an
/// id allocator with an enclosing schedule.
pub(crate) fn generalized_mac_unchecked<G: GridBuilder>(
    problem: &MacProblem,
    levels: usize,
    grid: &G,
    reuse: Reuse,
    ids: &mut IdAlloc,
) -> MacSchedule {
    let plan = build_plan(problem, levels, grid, reuse, ids);
    MacSchedule::new(MacVariant::Generalized, levels, problem, plan)
}

/// Builds the plan for any target set: TDMA at one level or when the cell
/// is too small to split, otherwise one recursive level.
pub(crate) fn build_plan<G: GridBuilder>(
    problem: &MacProblem,
    levels: usize,
    grid: &G,
    reuse: Reuse,
    ids: &mut IdAlloc,
) -> MacPlan {
    let m = problem.cell.len();
    if m < 2 || problem.targets.is_empty() {
        return MacPlan::Empty;
    }
    let target = match mac_cluster_target(m, levels) {
        Some(t) => t,
        None => return tdma_plan(problem, ids),
    };
    let id = ids.next_id();
    let is_target: std::collections::HashSet<NodeId> = problem.targets.iter().copied().collect();
    let sub_payload = problem.bits_per_pair * problem.q as u64;
    let mut clusters: Vec<SubCluster> = grid
        .split(&problem.cell, target)
        .into_iter()
        .map(|cell| {
            let targets: Vec<NodeId> = cell.nodes.iter().copied().filter(|n| is_target.contains(n)).collect();
            let sub = MacProblem {
                cell,
                targets,
                bits_per_pair: sub_payload,
                q: problem.q,
            };
            let plan = build_plan(&sub, levels - 1, grid, reuse, ids);
            SubCluster {
                id: ids.next_id(),
                cell: sub.cell,
                targets: sub.targets,
                plan,
                offset: 0,
            }
        })
        .collect();
    let jobs: Vec<_> = clusters.iter().map(|c| (c.cell.coord, c.plan.slots())).collect();
    let (decode_len, starts) = reuse.schedule(&jobs);
    for (c, s) in clusters.iter_mut().zip(starts) {
        c.offset = s;
    }
    MacPlan::Recursive(Box::new(RecursivePlan {
        id,
        nodes: problem.cell.nodes.clone(),
        targets: problem.targets.clone(),
        payload: problem.bits_per_pair,
        clusters,
        decode_len,
    }))
}
