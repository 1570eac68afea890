//! Executes schedules against their bit ledgers, compares traces with
//! closed-form predictions, and runs the balls-into-bins experiment.

use std::collections::HashMap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticResult;
use crate::error::{Error, Result};
use crate::trace::{BitLedger, EventKind, Phase, Schedule, ScheduleTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Bits per slot over the whole network.
    pub throughput: f64,
    /// Size-weighted mean of arrival − departure.
    pub mean_delay: f64,
    pub max_delay: u64,
    pub bulk_size: u64,
    pub total_slots: u64,
    pub total_bits: u64,
    /// `throughput / number of sources`.
    pub per_pair_rate: f64,
}

/// Fills arrival slots from the trace's delivery events and measures
/// throughput and delay.
pub fn execute(trace: &ScheduleTrace, ledger: &mut BitLedger, bulk: u64) -> Result<Metrics> {
    if ledger.total_bits == 0 || trace.total_slots == 0 {
        return Err(Error::Degenerate(format!(
            "{} bits over {} slots",
            ledger.total_bits, trace.total_slots
        )));
    }
    for b in &mut ledger.entries {
        b.arrival = None;
        if b.departure > trace.total_slots {
            return Err(Error::InvalidParams(format!(
                "batch {} -> {} departs at {} after the trace ends",
                b.source, b.destination, b.departure
            )));
        }
    }
    for e in trace.events.iter().filter(|e| e.kind == EventKind::Deliver) {
        for &i in &e.batches {
            let batch = ledger.entries.get_mut(i as usize).ok_or_else(|| {
                Error::InvalidParams(format!("delivery references unknown batch {i}"))
            })?;
            if batch.arrival.is_some() {
                return Err(Error::Mismatch(format!(
                    "batch {} -> {} delivered twice",
                    batch.source, batch.destination
                )));
            }
            if e.end < batch.departure {
                return Err(Error::Mismatch(format!(
                    "batch {} -> {} arrives before it departs",
                    batch.source, batch.destination
                )));
            }
            batch.arrival = Some(e.end);
        }
    }
    let undelivered: Vec<_> = ledger.entries.iter().filter(|b| b.arrival.is_none()).collect();
    if let Some(first) = undelivered.first() {
        return Err(Error::Incomplete {
            count: undelivered.len(),
            source_node: first.source.0,
            destination: first.destination.0,
        });
    }

    let mut weighted = 0u128;
    let mut max_delay = 0u64;
    for b in &ledger.entries {
        let d = b.arrival.expect("checked above") - b.departure;
        weighted += d as u128 * b.size as u128;
        max_delay = max_delay.max(d);
    }
    let sources = ledger
        .entries
        .iter()
        .map(|b| b.source)
        .collect::<std::collections::HashSet<_>>()
        .len();
    let throughput = ledger.total_bits as f64 / trace.total_slots as f64;
    Ok(Metrics {
        throughput,
        mean_delay: weighted as f64 / ledger.total_bits as f64,
        max_delay,
        bulk_size: bulk,
        total_slots: trace.total_slots,
        total_bits: ledger.total_bits,
        per_pair_rate: throughput / sources as f64,
    })
}

/// Executes a schedule and checks that every source-destination pair moved
/// exactly `bulk` bits.
pub fn execute_schedule(schedule: &mut Schedule) -> Result<Metrics> {
    let metrics = execute(&schedule.trace, &mut schedule.ledger, schedule.bulk)?;
    let mut per_pair: HashMap<(usize, usize), u64> = HashMap::new();
    for b in &schedule.ledger.entries {
        *per_pair.entry((b.source.0, b.destination.0)).or_default() += b.size;
    }
    if let Some((&(s, d), &bits)) = per_pair.iter().find(|(_, &v)| v != schedule.bulk) {
        return Err(Error::Mismatch(format!(
            "pair {s} -> {d} moved {bits} bits, bulk is {}",
            schedule.bulk
        )));
    }
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VerifyMode {
    Exact,
    /// Trace may exceed the prediction by at most this fraction.
    Bounded(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub trace_slots: u64,
    pub predicted_slots: u64,
    /// (phase, trace slots, predicted slots)
    pub phases: Vec<(Phase, u64, u64)>,
}

/// Compares a trace with a closed-form prediction, phase by phase where the
/// prediction has a breakdown.
pub fn verify_against_analytic(
    trace: &ScheduleTrace,
    predicted: &AnalyticResult,
    mode: VerifyMode,
) -> Result<VerifyReport> {
    let measured: HashMap<Phase, u64> = trace.phase_totals().into_iter().collect();
    let ok = |got: u64, want: u64| match mode {
        VerifyMode::Exact => got == want,
        VerifyMode::Bounded(tol) => got as f64 <= want as f64 * (1.0 + tol),
    };
    let mut phases = Vec::new();
    for &(phase, want) in &predicted.phases {
        let got = measured.get(&phase).copied().unwrap_or(0);
        phases.push((phase, got, want));
        if !ok(got, want) {
            return Err(Error::Mismatch(format!(
                "{} trace first diverges in {phase}: {got} slots vs {want} predicted (total {} vs {})",
                trace.scheme, trace.total_slots, predicted.total_slots
            )));
        }
    }
    if !ok(trace.total_slots, predicted.total_slots) {
        return Err(Error::Mismatch(format!(
            "{} trace has {} slots vs {} predicted",
            trace.scheme, trace.total_slots, predicted.total_slots
        )));
    }
    Ok(VerifyReport {
        trace_slots: trace.total_slots,
        predicted_slots: predicted.total_slots,
        phases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinsReport {
    pub bins: usize,
    pub balls: u64,
    pub trials: usize,
    pub max_load: Vec<u64>,
    pub min_load: Vec<u64>,
    pub mean_load: Vec<f64>,
}

impl BinsReport {
    /// Fraction of trials whose largest bin holds at most `bound` balls.
    pub fn fraction_max_at_most(&self, bound: f64) -> f64 {
        self.max_load.iter().filter(|&&m| m as f64 <= bound).count() as f64 / self.trials as f64
    }

    /// Fraction of trials with every bin load inside `[lo, hi]`.
    pub fn fraction_all_within(&self, lo: f64, hi: f64) -> f64 {
        self.min_load
            .iter()
            .zip(&self.max_load)
            .filter(|(&a, &b)| a as f64 >= lo && b as f64 <= hi)
            .count() as f64
            / self.trials as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["trial", "maxLoad", "meanLoad"])?;
        for (i, (m, mean)) in self.max_load.iter().zip(&self.mean_load).enumerate() {
            out.write_record([i.to_string(), m.to_string(), format!("{mean}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Throws `balls` balls into `bins` bins uniformly, `trials` times. Trial
/// `i` uses ChaCha stream `i` of `seed`, so results do not depend on
/// thread scheduling.
pub fn balls_bins(bins: usize, balls: u64, trials: usize, seed: u64) -> Result<BinsReport> {
    if bins == 0 || trials == 0 {
        return Err(Error::InvalidParams("need at least one bin and one trial".into()));
    }
    let samples: Vec<(u64, u64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            let mut load = vec![0u64; bins];
            for _ in 0..balls {
                load[rng.gen_range(0..bins)] += 1;
            }
            let max = load.iter().copied().max().unwrap_or(0);
            let min = load.iter().copied().min().unwrap_or(0);
            (max, min, balls as f64 / bins as f64)
        })
        .collect();
    Ok(BinsReport {
        bins,
        balls,
        trials,
        max_load: samples.iter().map(|s| s.0).collect(),
        min_load: samples.iter().map(|s| s.1).collect(),
        mean_load: samples.iter().map(|s| s.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{three_phase_slots, Counting};
    use crate::netmodel::{ChannelParams, Network};
    use crate::schemes::{build_three_phase, BuildOptions};

    #[test]
    fn empty_is_degenerate() {
        let mut ledger = BitLedger::new();
        let trace = ScheduleTrace::new("empty");
        assert!(matches!(execute(&trace, &mut ledger, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn three_phase_metrics() {
        let net = Network::lattice(16, ChannelParams::default(), 0).unwrap();
        let mut s = build_three_phase(&net, 4, 2, &BuildOptions::exact()).unwrap();
        let m = execute_schedule(&mut s).unwrap();
        assert_eq!(m.total_slots, 52);
        assert!((m.throughput - 64.0 / 52.0).abs() < 1e-12);
        assert_eq!(m.mean_delay, 52.0);
        assert_eq!(m.throughput * m.total_slots as f64, m.total_bits as f64);
    }

    #[test]
    fn perturbed_trace_names_phase3() {
        let net = Network::lattice(16, ChannelParams::default(), 0).unwrap();
        let s = build_three_phase(&net, 4, 2, &BuildOptions::exact()).unwrap();
        let predicted = three_phase_slots(16, 4, 2, Counting::Exact).unwrap();
        verify_against_analytic(&s.trace, &predicted, VerifyMode::Exact).unwrap();
        let mut t = s.trace.clone();
        let last = t
            .events
            .iter_mut()
            .filter(|e| e.depth == 0 && e.phase == Phase::Decode && e.kind != EventKind::Deliver)
            .last()
            .unwrap();
        last.end += 1;
        t.total_slots += 1;
        let err = verify_against_analytic(&t, &predicted, VerifyMode::Exact).unwrap_err();
        assert!(err.to_string().contains("phase3"), "{err}");
    }

    #[test]
    fn missing_delivery_is_reported() {
        let net = Network::lattice(16, ChannelParams::default(), 0).unwrap();
        let mut s = build_three_phase(&net, 4, 2, &BuildOptions::exact()).unwrap();
        for e in &mut s.trace.events {
            if e.kind == EventKind::Deliver {
                e.batches.pop();
            }
        }
        assert!(matches!(execute_schedule(&mut s), Err(Error::Incomplete { count: 1, .. })));
    }

    #[test]
    fn zero_balls() {
        let r = balls_bins(10, 0, 5, 1).unwrap();
        assert!(r.max_load.iter().all(|&m| m == 0));
        assert_eq!(r.max_load.len(), 5);
    }

    #[test]
    fn bins_are_deterministic() {
        assert_eq!(balls_bins(64, 500, 20, 3).unwrap(), balls_bins(64, 500, 20, 3).unwrap());
    }
}
