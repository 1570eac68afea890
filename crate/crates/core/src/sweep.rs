//! Parameter sweeps, exponent fits and throughput-delay trade-off curves.
//!
//! Sweep points run in parallel but rows are collected in grid order, so
//! CSV output depends only on the sweep specification.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    h_level_slots, modified_hier_throughput, optimize_cluster_sizes, session_hier_slots, session_slots,
    three_phase_slots, Counting, SchemeKind, SchemeParams,
};
use crate::cluster::Reuse;
use crate::engine::execute_schedule;
use crate::error::{Error, Result};
use crate::netmodel::{ChannelParams, Network};
use crate::schemes::{build, BuildOptions, Phase3Budget};

/// Largest network the trace mode will build.
pub const TRACE_CAP: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Analytic,
    Trace,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(Mode::Analytic),
            "trace" => Ok(Mode::Trace),
            _ => Err(Error::InvalidParams(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SchemeKind,
    pub n_grid: Vec<usize>,
    pub h: usize,
    pub q: u32,
    /// Operating exponent for the restricted session variants.
    pub b: Option<f64>,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    pub reuse: Reuse,
    pub budget: Phase3Budget,
    /// Place nodes on a square lattice instead of uniformly at random.
    pub lattice: bool,
}

impl SweepSpec {
    pub fn new(kind: SchemeKind, n_grid: Vec<usize>, h: usize, mode: Mode) -> Self {
        SweepSpec {
            kind,
            n_grid,
            h,
            q: 2,
            b: None,
            seeds: vec![0],
            mode,
            reuse: Reuse::NONE,
            budget: Phase3Budget::Realized,
            lattice: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams("the n grid must be non-empty and strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParams("at least one seed is required".into()));
        }
        if self.mode == Mode::Trace {
            if let Some(&big) = self.n_grid.iter().find(|&&n| n > TRACE_CAP) {
                return Err(Error::InvalidParams(format!(
                    "trace mode is capped at n = {TRACE_CAP} (got {big}); use analytic mode for larger networks"
                )));
            }
        }
        if let Some(b) = self.b {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidParams(format!("b = {b} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scheme: String,
    pub n: usize,
    pub h: usize,
    pub q: u32,
    pub m1: usize,
    pub m2: usize,
    pub seed: u64,
    pub total_slots: u64,
    pub bits: u64,
    pub throughput: f64,
    pub delay: f64,
    pub bulk: u64,
}

/// Scheme parameters at one grid point: closed-form optimum sizes, or the
/// restricted operating point when `b` is given.
pub fn point_params(kind: SchemeKind, n: usize, h: usize, q: u32, b: Option<f64>) -> Result<(SchemeParams, Option<usize>)> {
    if let Some(b) = b {
        let op = operating_point(b, n, q)?;
        return Ok((op.params, Some(op.active)));
    }
    let mut params = optimize_cluster_sizes(kind, n, q, h)?.params;
    if kind == SchemeKind::ModifiedHier {
        params.h = h;
    }
    Ok((params, None))
}

/// Restricted trade-off scheme for exponent `b`: the sessionized
/// three-phase scheme with `M = n^b` when `b ≤ 1/2`, otherwise the
/// sessionized hierarchy with the smallest `h` such that `h/(h+1) ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub kind: SchemeKind,
    pub params: SchemeParams,
    /// Active pairs (session) or active large clusters (hierarchy).
    pub active: usize,
}

pub fn operating_point(b: f64, n: usize, q: u32) -> Result<OperatingPoint> {
    if !(0.0..1.0).contains(&b) {
        return Err(Error::InvalidParams(format!("b = {b} must lie in [0, 1)")));
    }
    let nf = n as f64;
    let mut params = SchemeParams {
        n,
        q,
        b,
        ..SchemeParams::default()
    };
    if b <= 0.5 {
        let m = (nf.powf(b).round() as usize).clamp(1, n);
        params.h = 1;
        params.sizes = vec![m];
        return Ok(OperatingPoint {
            kind: SchemeKind::Session,
            params,
            active: m,
        });
    }
    // Grid values are given to two decimals, so 0.67 means 2/3.
    let mut h = 1usize;
    while (h as f64) / (h as f64 + 1.0) < b - 0.005 {
        h += 1;
    }
    let round2 = |x: f64| (x.round() as usize).max(2);
    let m1 = round2(nf.powf(b)).min(n);
    let m2 = round2((m1 as f64).powf((h as f64 - 1.0) / h as f64)).min(m1);
    params.h = h;
    params.h1 = (h - 1).max(1);
    params.h2 = h;
    params.sizes = vec![m1, m2];
    Ok(OperatingPoint {
        kind: SchemeKind::SessionHier,
        params,
        active: round2((m1 as f64).powf(1.0 / h as f64)),
    })
}

/// Closed-form row for one parameter set.
pub fn analytic_row(kind: SchemeKind, params: &SchemeParams, active: Option<usize>) -> Result<Row> {
    let p = params;
    let r = match kind {
        SchemeKind::ThreePhase => three_phase_slots(p.n, p.sizes[0], p.q, Counting::Squared)?,
        SchemeKind::HLevel => h_level_slots(p.n, &p.sizes, p.q, Counting::Squared)?,
        SchemeKind::ModifiedHier => modified_hier_throughput(p.n, p.sizes[0], p.q, p.k, p.h)?,
        SchemeKind::Session => session_slots(p.n, p.sizes[0], p.q, active)?,
        SchemeKind::SessionHier => session_hier_slots(p.n, p.sizes[0], p.sizes[1], p.q, p.h1, p.h2, active)?,
    };
    Ok(Row {
        scheme: kind.name().to_string(),
        n: p.n,
        h: p.h,
        q: p.q,
        m1: p.sizes[0],
        m2: p.sizes.get(1).copied().unwrap_or(0),
        seed: 0,
        total_slots: r.total_slots,
        bits: r.bits_delivered,
        throughput: r.throughput,
        delay: r.delay,
        bulk: r.bulk_size,
    })
}

/// Builds and executes one schedule.
pub fn trace_row(
    kind: SchemeKind,
    params: &SchemeParams,
    opts: &BuildOptions,
    seed: u64,
    lattice: bool,
) -> Result<Row> {
    let net = if lattice {
        Network::lattice(params.n, ChannelParams::default(), seed)?
    } else {
        Network::generate(params.n, ChannelParams::default(), seed)?
    };
    let mut schedule = build(kind, &net, params, opts)?;
    let m = execute_schedule(&mut schedule)?;
    Ok(Row {
        scheme: kind.name().to_string(),
        n: params.n,
        h: params.h,
        q: params.q,
        m1: params.sizes[0],
        m2: params.sizes.get(1).copied().unwrap_or(0),
        seed,
        total_slots: m.total_slots,
        bits: m.total_bits,
        throughput: m.throughput,
        delay: m.mean_delay,
        bulk: m.bulk_size,
    })
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<Row>> {
    spec.validate()?;
    let kind = match spec.b {
        Some(b) => operating_point(b, spec.n_grid[0], spec.q)?.kind,
        None => spec.kind,
    };
    match spec.mode {
        Mode::Analytic => spec
            .n_grid
            .iter()
            .map(|&n| {
                let (params, active) = point_params(kind, n, spec.h, spec.q, spec.b)?;
                analytic_row(kind, &params, active)
            })
            .collect(),
        Mode::Trace => {
            let jobs: Vec<(usize, u64)> = spec
                .n_grid
                .iter()
                .flat_map(|&n| spec.seeds.iter().map(move |&s| (n, s)))
                .collect();
            jobs.par_iter()
                .map(|&(n, seed)| {
                    let (params, _) = point_params(kind, n, spec.h, spec.q, spec.b)?;
                    let opts = BuildOptions {
                        reuse: spec.reuse,
                        restricted: spec.b.is_some(),
                        budget: spec.budget,
                        seed,
                        ..BuildOptions::default()
                    };
                    trace_row(kind, &params, &opts, seed, spec.lattice)
                })
                .collect()
        }
    }
}

pub fn write_rows<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Least-squares line through `(log₂ x, log₂ y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
}

pub fn fit_exponent(points: &[(f64, f64)]) -> Result<Fit> {
    if points.len() < 2 {
        return Err(Error::InvalidParams("a fit needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidParams("fit points must be positive".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log2(), y.log2())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParams("fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    Ok(Fit {
        slope,
        intercept,
        r2,
        residuals: logs.iter().map(|&(x, y)| y - (intercept + slope * x)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    N,
    TotalSlots,
    Bits,
    Throughput,
    Delay,
    Bulk,
}

impl Field {
    fn get(self, r: &Row) -> f64 {
        match self {
            Field::N => r.n as f64,
            Field::TotalSlots => r.total_slots as f64,
            Field::Bits => r.bits as f64,
            Field::Throughput => r.throughput,
            Field::Delay => r.delay,
            Field::Bulk => r.bulk as f64,
        }
    }
}

impl std::str::FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "n" => Ok(Field::N),
            "totalslots" | "slots" => Ok(Field::TotalSlots),
            "bits" => Ok(Field::Bits),
            "throughput" | "t" => Ok(Field::Throughput),
            "delay" | "d" => Ok(Field::Delay),
            "bulk" | "b" => Ok(Field::Bulk),
            _ => Err(Error::InvalidParams(format!("unknown field `{s}`"))),
        }
    }
}

/// Fits `y` against `x` after averaging `y` over rows sharing an `x` value
/// (the seeds of one grid point) and dropping the `burn_in` smallest `x`.
pub fn fit_rows(rows: &[Row], x: Field, y: Field, burn_in: usize) -> Result<Fit> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let xv = x.get(r);
        let e = groups.entry(xv.to_bits()).or_insert((xv, 0.0, 0));
        e.1 += y.get(r);
        e.2 += 1;
    }
    let mut pts: Vec<(f64, f64)> = groups.values().map(|&(xv, sum, k)| (xv, sum / k as f64)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pts: Vec<_> = pts.into_iter().skip(burn_in).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "fitting needs at least 3 distinct {x:?} values, got {}",
            pts.len()
        )));
    }
    fit_exponent(&pts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub b: f64,
    pub scheme: String,
    pub h: usize,
    pub m1: usize,
    pub m2: usize,
    pub active: usize,
    pub throughput: f64,
    pub delay: f64,
    pub ratio: f64,
    pub log2n_sq: f64,
}

/// One (T, D) point per exponent in `b_grid`. Trace mode averages over
/// `seeds`.
pub fn tradeoff_curve(
    b_grid: &[f64],
    n: usize,
    q: u32,
    mode: Mode,
    seeds: &[u64],
    budget: Phase3Budget,
) -> Result<Vec<TradeoffRow>> {
    if mode == Mode::Trace && n > TRACE_CAP {
        return Err(Error::InvalidParams(format!(
            "trace mode is capped at n = {TRACE_CAP}; use analytic mode"
        )));
    }
    b_grid
        .iter()
        .map(|&b| {
            let op = operating_point(b, n, q)?;
            let (t, d) = match mode {
                Mode::Analytic => {
                    let r = analytic_row(op.kind, &op.params, Some(op.active))?;
                    (r.throughput, r.delay)
                }
                Mode::Trace => {
                    if seeds.is_empty() {
                        return Err(Error::InvalidParams("at least one seed is required".into()));
                    }
                    let rows: Vec<Row> = seeds
                        .par_iter()
                        .map(|&seed| {
                            let opts = BuildOptions {
                                reuse: Reuse::NONE,
                                restricted: true,
                                budget,
                                seed,
                                ..BuildOptions::default()
                            };
                            trace_row(op.kind, &op.params, &opts, seed, false)
                        })
                        .collect::<Result<_>>()?;
                    let k = rows.len() as f64;
                    (
                        rows.iter().map(|r| r.throughput).sum::<f64>() / k,
                        rows.iter().map(|r| r.delay).sum::<f64>() / k,
                    )
                }
            };
            let lg = (n as f64).log2();
            Ok(TradeoffRow {
                b,
                scheme: op.kind.name().to_string(),
                h: op.params.h,
                m1: op.params.sizes[0],
                m2: op.params.sizes.get(1).copied().unwrap_or(0),
                active: op.active,
                throughput: t,
                delay: d,
                ratio: d / t,
                log2n_sq: lg * lg,
            })
        })
        .collect()
}

pub fn write_tradeoff<W: Write>(rows: &[TradeoffRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_power_law() {
        let pts: Vec<_> = (4..12).map(|e| {
            let x = (1u64 << e) as f64;
            (x, 3.0 * x.powf(0.75))
        }).collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-9));
        assert!(fit_exponent(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    }

    #[test]
    fn analytic_three_phase_monotone() {
        let grid: Vec<usize> = (6..=16).map(|e| 1usize << e).collect();
        let rows = run_sweep(&SweepSpec::new(SchemeKind::ThreePhase, grid, 1, Mode::Analytic)).unwrap();
        assert!(rows.windows(2).all(|w| w[1].throughput > w[0].throughput));
    }

    #[test]
    fn modified_hier_slope_window() {
        let grid: Vec<usize> = (8..=20).map(|e| 1usize << e).collect();
        let rows = run_sweep(&SweepSpec::new(SchemeKind::ModifiedHier, grid, 2, Mode::Analytic)).unwrap();
        let f = fit_rows(&rows, Field::N, Field::Throughput, 0).unwrap();
        assert!((0.62..=0.70).contains(&f.slope), "{}", f.slope);
    }

    #[test]
    fn trace_cap_refused() {
        let spec = SweepSpec::new(SchemeKind::ThreePhase, vec![1 << 15], 1, Mode::Trace);
        assert!(run_sweep(&spec).is_err());
    }

    #[test]
    fn operating_points() {
        let op = operating_point(0.3, 1 << 16, 1).unwrap();
        assert_eq!(op.kind, SchemeKind::Session);
        assert_eq!(op.params.sizes, vec![28]);
        let op = operating_point(0.67, 1 << 16, 1).unwrap();
        assert_eq!((op.kind, op.params.h), (SchemeKind::SessionHier, 2));
        let op = operating_point(0.7, 1 << 12, 1).unwrap();
        assert_eq!(op.params.h, 3);
        assert!(operating_point(1.0, 16, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_sweep(&SweepSpec::new(SchemeKind::Session, vec![64, 256, 1024], 1, Mode::Analytic)).unwrap();
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scheme,n,h,q,m1,m2,seed,total_slots,bits,throughput,delay,bulk"));
        assert_eq!(read_rows(&buf[..]).unwrap(), rows);
    }
}
