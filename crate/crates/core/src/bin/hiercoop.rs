//! Command-line front end: closed-form rows, schedule traces, multiple-access
//! runs, balls-into-bins trials, trade-off curves and exponent fits.
//!
//! Exit codes: 0 on success, 2 when a scheme precondition is violated, 3 when
//! a trace disagrees with its closed form, 1 for anything else.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hiercoop::analytic::{
    h_level_slots, modified_hier_exact, three_phase_slots, Counting, SchemeKind, SchemeParams,
};
use hiercoop::cluster::{Cell, Reuse, SquareGrid};
use hiercoop::config::{parse_list, Config};
use hiercoop::engine::{balls_bins, execute_schedule, verify_against_analytic, VerifyMode};
use hiercoop::mac::{generalized_mac, recursive_mac, MacProblem};
use hiercoop::netmodel::{ChannelParams, Network};
use hiercoop::schemes::{build, BuildOptions, Phase3Budget};
use hiercoop::sweep::{
    analytic_row, fit_rows, operating_point, point_params, read_rows, run_sweep, tradeoff_curve,
    write_rows, write_tradeoff, Field, Mode, Row, SweepSpec,
};
use hiercoop::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "hiercoop", version, about = "Hierarchical cooperation schedules for wireless ad hoc networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Comma-separated network sizes for sweeps.
    #[arg(long, global = true)]
    n_grid: Option<String>,
    #[arg(long, global = true)]
    scheme: Option<SchemeKind>,
    #[arg(long, global = true)]
    h: Option<usize>,
    #[arg(long, global = true)]
    h1: Option<usize>,
    #[arg(long, global = true)]
    h2: Option<usize>,
    #[arg(long, global = true)]
    q: Option<u32>,
    /// Operating exponent; a comma-separated list for `tradeoff`.
    #[arg(long, global = true)]
    b: Option<String>,
    #[arg(long, global = true)]
    m1: Option<usize>,
    #[arg(long, global = true)]
    m2: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Spatial reuse factor (a perfect square; 1 disables reuse).
    #[arg(long, global = true)]
    reuse: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Closed-form slot counts, throughput and delay.
    Analytic,
    /// Build and execute a schedule (or a trace-mode sweep with --n-grid).
    Trace {
        /// Place nodes on a square lattice.
        #[arg(long)]
        lattice: bool,
        /// Fail with exit code 3 unless the trace matches the exact closed form.
        #[arg(long)]
        verify: bool,
        /// Reserve the high-probability decode budget in session schemes.
        #[arg(long)]
        reserved: bool,
        /// Event depth written with --trace-out.
        #[arg(long, default_value_t = 1)]
        detail: u32,
    },
    /// Multiple-access schedule on one cluster of --n nodes.
    Mac {
        /// Number of targets; omit for the full problem.
        #[arg(long)]
        targets: Option<usize>,
        /// Bits per (source, target) pair.
        #[arg(long, default_value_t = 1)]
        l: u64,
    },
    /// Balls into bins: --n bins.
    Bins {
        /// Defaults to --n.
        #[arg(long)]
        balls: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Throughput and delay along the trade-off curve.
    Tradeoff {
        #[arg(long, default_value = "analytic")]
        mode: Mode,
        #[arg(long)]
        reserved: bool,
    },
    /// Log-log fit of two columns of a sweep CSV.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "n")]
        x: Field,
        #[arg(long, default_value = "throughput")]
        y: Field,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
    },
}

/// Flags merged with the config file.
struct Settings {
    n: Option<usize>,
    n_grid: Option<Vec<usize>>,
    scheme: SchemeKind,
    h: usize,
    h1: Option<usize>,
    h2: Option<usize>,
    q: u32,
    b: Option<Vec<f64>>,
    m1: Option<usize>,
    m2: Option<usize>,
    seeds: Vec<u64>,
    reuse: Reuse,
    out: Option<PathBuf>,
    trace_out: Option<PathBuf>,
}

fn list<T: std::str::FromStr>(flag: Option<&str>, cfg: &Config, key: &str) -> Result<Option<Vec<T>>>
where
    T::Err: std::fmt::Display,
{
    match flag {
        Some(s) => parse_list(s)
            .map(Some)
            .map_err(|e| Error::InvalidParams(format!("--{key}: {e}"))),
        None => cfg.get_list(key),
    }
}

impl Settings {
    fn resolve(c: &Common) -> Result<Settings> {
        let cfg = match &c.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let reuse = cfg.pick(c.reuse, "reuse")?.unwrap_or(1);
        Ok(Settings {
            n: cfg.pick(c.n, "n")?,
            n_grid: list(c.n_grid.as_deref(), &cfg, "n-grid")?,
            scheme: cfg.pick(c.scheme, "scheme")?.unwrap_or(SchemeKind::ThreePhase),
            h: cfg.pick(c.h, "h")?.unwrap_or(1),
            h1: cfg.pick(c.h1, "h1")?,
            h2: cfg.pick(c.h2, "h2")?,
            q: cfg.pick(c.q, "q")?.unwrap_or(2),
            b: list(c.b.as_deref(), &cfg, "b")?,
            m1: cfg.pick(c.m1, "m1")?,
            m2: cfg.pick(c.m2, "m2")?,
            seeds: list(c.seeds.as_deref(), &cfg, "seeds")?.unwrap_or_else(|| vec![0]),
            reuse: Reuse::new(reuse)?,
            out: c.out.clone().or_else(|| cfg.raw("out").map(PathBuf::from)),
            trace_out: c.trace_out.clone().or_else(|| cfg.raw("trace-out").map(PathBuf::from)),
        })
    }

    fn n(&self) -> Result<usize> {
        self.n.ok_or_else(|| Error::InvalidParams("--n is required".into()))
    }

    fn single_b(&self) -> Result<Option<f64>> {
        match self.b.as_deref() {
            None => Ok(None),
            Some([b]) => Ok(Some(*b)),
            Some(_) => Err(Error::InvalidParams("--b takes a single value here".into())),
        }
    }

    /// Parameters at size `n`: the operating point for `--b`, otherwise
    /// the closed-form optimum with any explicit sizes and depths applied.
    fn params(&self, n: usize) -> Result<(SchemeKind, SchemeParams, Option<usize>)> {
        if let Some(b) = self.single_b()? {
            let op = operating_point(b, n, self.q)?;
            return Ok((op.kind, op.params, Some(op.active)));
        }
        let kind = self.scheme;
        let (mut p, active) = if self.m1.is_some() {
            (
                SchemeParams {
                    n,
                    q: self.q,
                    h: self.h,
                    ..SchemeParams::default()
                },
                None,
            )
        } else {
            point_params(kind, n, self.h, self.q, None)?
        };
        if let Some(m1) = self.m1 {
            p.sizes = vec![m1];
            p.sizes.extend(self.m2);
        }
        if let Some(h1) = self.h1 {
            p.h1 = h1;
        }
        if let Some(h2) = self.h2 {
            p.h2 = h2;
        }
        p.validate()?;
        Ok((kind, p, active))
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn analytic(s: &Settings) -> Result<()> {
    let rows: Vec<Row> = match &s.n_grid {
        Some(grid) => {
            let mut spec = SweepSpec::new(s.scheme, grid.clone(), s.h, Mode::Analytic);
            spec.q = s.q;
            spec.b = s.single_b()?;
            run_sweep(&spec)?
        }
        None => {
            let (kind, p, active) = s.params(s.n()?)?;
            vec![analytic_row(kind, &p, active)?]
        }
    };
    write_rows(&rows, open_out(s.out.as_deref())?)
}

fn exact_prediction(kind: SchemeKind, p: &SchemeParams) -> Result<hiercoop::analytic::AnalyticResult> {
    match kind {
        SchemeKind::ThreePhase => three_phase_slots(p.n, p.sizes[0], p.q, Counting::Exact),
        SchemeKind::HLevel => h_level_slots(p.n, &p.sizes, p.q, Counting::Exact),
        SchemeKind::ModifiedHier => modified_hier_exact(p.n, p.sizes[0], p.q, p.h),
        _ => Err(Error::InvalidParams(format!("{kind} has no exact closed form to verify against"))),
    }
}

fn trace(s: &Settings, lattice: bool, verify: bool, reserved: bool, detail: u32) -> Result<()> {
    let budget = if reserved { Phase3Budget::Reserved } else { Phase3Budget::Realized };
    if let Some(grid) = &s.n_grid {
        let mut spec = SweepSpec::new(s.scheme, grid.clone(), s.h, Mode::Trace);
        spec.q = s.q;
        spec.b = s.single_b()?;
        spec.seeds = s.seeds.clone();
        spec.reuse = s.reuse;
        spec.budget = budget;
        spec.lattice = lattice;
        return write_rows(&run_sweep(&spec)?, open_out(s.out.as_deref())?);
    }
    let n = s.n()?;
    let (kind, p, _) = s.params(n)?;
    let opts = BuildOptions {
        reuse: s.reuse,
        detail,
        restricted: s.single_b()?.is_some(),
        budget,
        seed: s.seeds[0],
    };
    let mut rows = Vec::new();
    for (i, &seed) in s.seeds.iter().enumerate() {
        let net = if lattice {
            Network::lattice(n, ChannelParams::default(), seed)?
        } else {
            Network::generate(n, ChannelParams::default(), seed)?
        };
        let mut schedule = build(kind, &net, &p, &BuildOptions { seed, ..opts })?;
        if verify {
            verify_against_analytic(&schedule.trace, &exact_prediction(kind, &p)?, VerifyMode::Exact)?;
        }
        let m = execute_schedule(&mut schedule)?;
        if i == 0 {
            if let Some(path) = &s.trace_out {
                schedule.trace.write_jsonl(BufWriter::new(File::create(path)?))?;
            }
        }
        rows.push(Row {
            scheme: kind.name().to_string(),
            n,
            h: p.h,
            q: p.q,
            m1: p.sizes[0],
            m2: p.sizes.get(1).copied().unwrap_or(0),
            seed,
            total_slots: m.total_slots,
            bits: m.total_bits,
            throughput: m.throughput,
            delay: m.mean_delay,
            bulk: m.bulk_size,
        });
    }
    write_rows(&rows, open_out(s.out.as_deref())?)
}

fn mac(s: &Settings, targets: Option<usize>, l: u64) -> Result<()> {
    let n = s.n()?;
    let levels = s.h;
    let mut out = csv::Writer::from_writer(open_out(s.out.as_deref())?);
    out.write_record(["m", "levels", "targets", "seed", "slots", "bound", "within"])?;
    for &seed in &s.seeds {
        let net = Network::generate(n, ChannelParams::default(), seed)?;
        let grid = SquareGrid::new(&net);
        let cell = Cell::root(&net);
        let sched = match targets {
            None => recursive_mac(&MacProblem::full(cell, l, s.q), levels, &grid, s.reuse)?,
            Some(a) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let problem = MacProblem::random_targets(cell, a, l, s.q, &mut rng);
                generalized_mac(&problem, levels, &grid, s.reuse)?
            }
        };
        if let Some(path) = &s.trace_out {
            sched.trace(1).write_jsonl(BufWriter::new(File::create(path)?))?;
        }
        out.write_record([
            n.to_string(),
            levels.to_string(),
            sched.targets.to_string(),
            seed.to_string(),
            sched.total_slots.to_string(),
            format!("{:.3}", sched.claimed_bound),
            sched.within_bound().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn bins(s: &Settings, balls: Option<u64>, trials: usize) -> Result<()> {
    let n = s.n()?;
    let report = balls_bins(n, balls.unwrap_or(n as u64), trials, s.seeds[0])?;
    report.write_csv(open_out(s.out.as_deref())?)
}

fn tradeoff(s: &Settings, mode: Mode, reserved: bool) -> Result<()> {
    let n = s.n()?;
    let grid = s.b.clone().unwrap_or_else(|| vec![0.3, 0.5, 0.67, 0.75]);
    let budget = if reserved { Phase3Budget::Reserved } else { Phase3Budget::Realized };
    let rows = tradeoff_curve(&grid, n, s.q, mode, &s.seeds, budget)?;
    write_tradeoff(&rows, open_out(s.out.as_deref())?)
}

fn fit(s: &Settings, input: &Path, x: Field, y: Field, burn_in: usize) -> Result<()> {
    let rows = read_rows(File::open(input)?)?;
    let f = fit_rows(&rows, x, y, burn_in)?;
    let mut w = open_out(s.out.as_deref())?;
    writeln!(w, "slope,intercept,r2")?;
    writeln!(w, "{},{},{}", f.slope, f.intercept, f.r2)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::resolve(&cli.common)?;
    match cli.cmd {
        Cmd::Analytic => analytic(&s),
        Cmd::Trace {
            lattice,
            verify,
            reserved,
            detail,
        } => trace(&s, lattice, verify, reserved, detail),
        Cmd::Mac { targets, l } => mac(&s, targets, l),
        Cmd::Bins { balls, trials } => bins(&s, balls, trials),
        Cmd::Tradeoff { mode, reserved } => tradeoff(&s, mode, reserved),
        Cmd::Fit {
            input,
            x,
            y,
            burn_in,
        } => fit(&s, &input, x, y, burn_in),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Constraint(_) => 2,
                Error::Mismatch(_) => 3,
                _ => 1,
            })
        }
    }
}
