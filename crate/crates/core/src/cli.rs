//! Command-line front end. Every command is deterministic given its flags.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::analysis::{dominant_eigenvalue, fit_tail, moments, waiting_pdf_capped, DEFAULT_EPS};
use crate::builders::SchemeTree;
use crate::chain::{AbsorbingChain, RepeaterParams};
use crate::closed_forms::{approx_doubling, harmonic_approx, nested_approx, p_from_length, parse_schedule, relative_error};
use crate::error::{out_of_range, Error, Result};
use crate::montecarlo::{estimate, write_histogram_csv, Estimate};
use crate::scheme::{parse_cutoff, SchemeKind, SchemeSpec};

pub const MAX_GRID_POINTS: usize = 10_000;
/// Distribution steps computed by `stats` before the tail fit is skipped.
pub const STATS_PDF_STEPS: u64 = 100_000;

#[derive(Parser, Debug)]
#[command(name = "qrwt", version, about = "Waiting-time statistics for quantum repeater chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mean, variance and tail of the waiting time.
    Stats(StatsArgs),
    /// Waiting-time distribution as CSV.
    Pdf(PdfArgs),
    /// A metric over a grid of (p, a).
    Sweep(SweepArgs),
    /// Monte Carlo simulation of the doubling scheme.
    Mc(McArgs),
    /// Transition matrix in the plain-text dump format.
    Dump(DumpArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    /// fixed-tree, doubling, dynamical, deterministic, asymmetric,
    /// two-seg-cutoff, finite-memory or cc-doubling.
    #[arg(long)]
    pub scheme: String,
    /// Number of segments.
    #[arg(long)]
    pub n: Option<usize>,
    /// Doubling levels, n = 2^d.
    #[arg(long)]
    pub d: Option<u32>,
    /// Distribution probability per attempt.
    #[arg(long)]
    pub p: Option<f64>,
    /// Segment length in km, p = exp(-L0 / 22).
    #[arg(long = "L0")]
    pub l0: Option<f64>,
    /// Swap success probability.
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Memory cutoff in time steps, or `inf`.
    #[arg(long, default_value = "inf")]
    pub m: String,
    /// Announcement delay of the first doubling level.
    #[arg(long, default_value_t = 1)]
    pub c: u32,
    /// Composition order for fixed-tree, e.g. "((- -) -)".
    #[arg(long)]
    pub tree: Option<String>,
    /// Comma-separated per-segment probabilities for asymmetric.
    #[arg(long)]
    pub ps: Option<String>,
}

impl SchemeArgs {
    fn segments(&self) -> Result<usize> {
        match (self.n, self.d) {
            (Some(_), Some(_)) => Err(Error::Unsupported("give either --n or --d, not both".into())),
            (Some(n), None) => Ok(n),
            (None, Some(d)) if d < usize::BITS => Ok(1 << d),
            (None, Some(d)) => Err(out_of_range("d", d, "too many levels")),
            (None, None) => match (&self.ps, &self.tree) {
                (Some(ps), _) => Ok(parse_list(ps)?.len()),
                (None, Some(t)) => Ok(t.parse::<SchemeTree>()?.leaves()),
                (None, None) => Err(Error::Unsupported("missing --n (or --d)".into())),
            },
        }
    }

    fn probability(&self) -> Result<Option<f64>> {
        match (self.p, self.l0) {
            (Some(_), Some(_)) => Err(Error::Unsupported("give either --p or --L0, not both".into())),
            (Some(p), None) => Ok(Some(p)),
            (None, Some(l)) => p_from_length(l).map(Some),
            (None, None) => Ok(None),
        }
    }

    /// Scheme at the flag values; `p` falls back to `default_p` for sweeps.
    fn spec(&self, default_p: Option<f64>) -> Result<SchemeSpec> {
        let kind: SchemeKind = self.scheme.parse()?;
        let p = match self.probability()?.or(default_p) {
            Some(p) => p,
            None if kind == SchemeKind::Asymmetric => 1.0,
            None => return Err(Error::Unsupported("missing --p (or --L0)".into())),
        };
        let mut params = RepeaterParams::new(self.segments()?, p, self.a)?.with_cutoff(parse_cutoff(&self.m)?)?;
        params.c = self.c;
        let mut spec = SchemeSpec::new(kind, params);
        if let Some(t) = &self.tree {
            spec.tree = Some(t.parse()?);
        }
        if let Some(ps) = &self.ps {
            spec.p_list = parse_list(ps)?;
        }
        Ok(spec)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Parse(format!("bad number `{t}` in `{s}`"))))
        .collect()
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct PdfArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value_t = DEFAULT_EPS)]
    pub eps: f64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Mean waiting time.
    Mean,
    /// Mean divided by the mean of --baseline.
    RatioTo,
    /// Percent error of the --schedule approximation against the exact mean.
    RelError,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// "pmin:pmax:steps,amin:amax:steps".
    #[arg(long)]
    pub grid: String,
    /// Read the first grid axis as L0 in km instead of p.
    #[arg(long)]
    pub l0_axis: bool,
    #[arg(long, value_enum, default_value_t = Metric::Mean)]
    pub metric: Metric,
    /// Scheme in the denominator of ratio-to; same n, m and c.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Nested factors such as "2|8", or `doubling-estimate` / `harmonic`, for rel-error.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[arg(long)]
    pub d: Option<u32>,
    /// Alternative to --d; must be a power of two.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "L0")]
    pub l0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    #[arg(long)]
    pub cc: bool,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Histogram CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[command(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status for an error: 1 numerical, 2 unsupported or invalid, 3 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 3,
        Error::Numerical(_) | Error::NoConvergence { .. } | Error::MalformedChain(_) => 1,
        _ => 2,
    }
}

/// Output of `stats`.
#[derive(Clone, Debug, Serialize)]
pub struct StatsRecord {
    pub scheme: String,
    pub n: usize,
    pub p: f64,
    pub a: f64,
    pub m: String,
    pub states: usize,
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub tail_lambda: f64,
    /// Absent when the distribution was not computed far enough to fit it.
    pub tail_c: Option<f64>,
    pub pdf_steps: usize,
    pub pdf_mass: f64,
}

impl StatsRecord {
    const CSV_HEADER: &'static str =
        "scheme,n,p,a,m,states,mean,second_moment,variance,std_dev,tail_lambda,tail_c,pdf_steps,pdf_mass";

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.scheme,
            self.n,
            self.p,
            self.a,
            self.m,
            self.states,
            self.mean,
            self.second_moment,
            self.variance,
            self.std_dev,
            self.tail_lambda,
            self.tail_c.map(|c| c.to_string()).unwrap_or_default(),
            self.pdf_steps,
            self.pdf_mass
        )
    }
}

pub fn stats_record(spec: &SchemeSpec, chain: &AbsorbingChain, eps: f64) -> Result<StatsRecord> {
    let (mean, second) = moments(chain)?;
    let lambda = dominant_eigenvalue(chain)?.0;
    // Each step of an implicit chain costs a dense product; leave the
    // distribution to `pdf` there.
    let budget = if chain.is_structured() { 0 } else { STATS_PDF_STEPS };
    let pdf = if budget > 0 {
        waiting_pdf_capped(chain, eps, budget).ok()
    } else {
        None
    };
    let (pdf_steps, pdf_mass, tail_c) = match &pdf {
        Some(pdf) => (pdf.len(), pdf.iter().map(|x| x.1).sum(), Some(fit_tail(pdf, lambda).0)),
        None => (0, 0.0, None),
    };
    let variance = second[0] - mean[0] * mean[0];
    Ok(StatsRecord {
        scheme: spec.kind.to_string(),
        n: spec.params.n,
        p: spec.params.p,
        a: spec.params.a,
        m: spec.params.m.to_string(),
        states: chain.len(),
        mean: mean[0],
        second_moment: second[0],
        variance,
        std_dev: variance.max(0.0).sqrt(),
        tail_lambda: lambda,
        tail_c,
        pdf_steps,
        pdf_mass,
    })
}

fn open_out(path: &Option<PathBuf>, stdout: &mut dyn Write, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

/// Run a parsed command line. Tables and records go to `stdout`,
/// summaries of file-producing commands to `stderr` when the table itself
/// is on `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Stats(args) => {
            let spec = args.scheme.spec(None)?;
            let chain = spec.build()?;
            let record = stats_record(&spec, &chain, args.eps)?;
            match args.format {
                Format::Json => write_json(stdout, &record)?,
                Format::Csv => {
                    writeln!(stdout, "{}", StatsRecord::CSV_HEADER)?;
                    writeln!(stdout, "{}", record.csv_row())?;
                }
            }
            Ok(())
        }
        Command::Pdf(args) => {
            let spec = args.scheme.spec(None)?;
            let chain = spec.build()?;
            let pdf = waiting_pdf_capped(&chain, args.eps, crate::analysis::DEFAULT_MAX_STEPS)?;
            let lambda = dominant_eigenvalue(&chain)?.0;
            let (c1, _) = fit_tail(&pdf, lambda);
            let mut cumulative = 0.0;
            open_out(&args.out, stdout, |w| {
                writeln!(w, "k,p_k,cumulative")?;
                for &(k, pk) in &pdf {
                    cumulative += pk;
                    writeln!(w, "{k},{pk:.17e},{cumulative:.17e}")?;
                }
                Ok(())
            })?;
            let summary = PdfSummary {
                steps: pdf.len(),
                cumulative,
                tail_lambda: lambda,
                tail_c: c1,
            };
            let target: &mut dyn Write = if args.out.is_some() { stdout } else { stderr };
            write_json(target, &summary)
        }
        Command::Sweep(args) => {
            let rows = sweep(&args)?;
            open_out(&args.out, stdout, |w| {
                let first = if args.l0_axis { "L0" } else { "p" };
                writeln!(w, "{first},a,value")?;
                for r in &rows {
                    writeln!(w, "{},{},{}", r.0, r.1, r.2)?;
                }
                Ok(())
            })
        }
        Command::Mc(args) => {
            let d = match (args.d, args.n) {
                (Some(d), None) => d,
                (None, Some(n)) if n.is_power_of_two() => n.trailing_zeros(),
                (None, Some(n)) => return Err(Error::Unsupported(format!("simulation needs n = 2^d, got {n}"))),
                _ => return Err(Error::Unsupported("give exactly one of --d and --n".into())),
            };
            let p = match (args.p, args.l0) {
                (Some(p), None) => p,
                (None, Some(l)) => p_from_length(l)?,
                _ => return Err(Error::Unsupported("give exactly one of --p and --L0".into())),
            };
            let est = estimate(d, p, args.a, args.cc, args.trials, args.seed)?;
            if let Some(path) = &args.out {
                let mut w = BufWriter::new(File::create(path)?);
                write_histogram_csv(&est.histogram, &mut w)?;
                w.flush()?;
            }
            match args.format {
                Format::Json => write_json(stdout, &McRecord::from(&est)),
                Format::Csv => {
                    writeln!(stdout, "d,p,a,cc,trials,seed,mean,variance,std_error,ci99")?;
                    writeln!(
                        stdout,
                        "{},{},{},{},{},{},{},{},{},{}",
                        est.d, est.p, est.a, est.cc, est.trials, est.seed, est.mean, est.variance, est.std_error, est.ci99
                    )?;
                    Ok(())
                }
            }
        }
        Command::Dump(args) => {
            let chain = args.scheme.spec(None)?.build()?;
            open_out(&args.out, stdout, |w| chain.write_dump(w))
        }
    }
}

#[derive(Serialize)]
struct PdfSummary {
    steps: usize,
    cumulative: f64,
    tail_lambda: f64,
    tail_c: f64,
}

#[derive(Serialize)]
struct McRecord {
    d: u32,
    p: f64,
    a: f64,
    cc: bool,
    trials: u64,
    seed: u64,
    mean: f64,
    variance: f64,
    std_error: f64,
    ci99: f64,
    mean_restarts: f64,
    mean_steps_times_restarts: f64,
}

impl From<&Estimate> for McRecord {
    fn from(e: &Estimate) -> Self {
        Self {
            d: e.d,
            p: e.p,
            a: e.a,
            cc: e.cc,
            trials: e.trials,
            seed: e.seed,
            mean: e.mean,
            variance: e.variance,
            std_error: e.std_error,
            ci99: e.ci99,
            mean_restarts: e.restarts.mean,
            mean_steps_times_restarts: e.steps_times_restarts.mean,
        }
    }
}

/// `min:max:steps`, evenly spaced and inclusive.
pub fn parse_axis(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Parse(format!("bad grid axis `{s}`, expected min:max:steps"));
    let [lo, hi, steps] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    let steps: usize = steps.trim().parse().map_err(|_| bad())?;
    if steps == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect())
}

pub fn parse_grid(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ps, as_) = s
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("bad grid `{s}`, expected pmin:pmax:steps,amin:amax:steps")))?;
    let (ps, as_) = (parse_axis(ps)?, parse_axis(as_)?);
    if ps.len() * as_.len() > MAX_GRID_POINTS {
        return Err(out_of_range("grid", ps.len() * as_.len(), "at most 10^4 points"));
    }
    Ok((ps, as_))
}

enum Reference {
    None,
    Baseline(SchemeSpec),
    Schedule(Vec<u32>),
    DoublingEstimate,
    Harmonic,
}

fn exact_mean(spec: &SchemeSpec) -> Result<f64> {
    Ok(crate::analysis::mean_absorption(&spec.build()?)?[0])
}

/// Rows `(axis value, a, metric)` in grid order, first axis outermost.
pub fn sweep(args: &SweepArgs) -> Result<Vec<(f64, f64, f64)>> {
    let (xs, as_) = parse_grid(&args.grid)?;
    let to_p = |x: f64| if args.l0_axis { p_from_length(x) } else { Ok(x) };
    let base = args.scheme.spec(Some(to_p(xs[0])?))?;
    let reference = match args.metric {
        Metric::Mean => Reference::None,
        Metric::RatioTo => {
            let name = args
                .baseline
                .as_ref()
                .ok_or_else(|| Error::Unsupported("ratio-to needs --baseline".into()))?;
            let mut b = base.clone();
            b.kind = name.parse()?;
            Reference::Baseline(b)
        }
        Metric::RelError => match args.schedule.as_deref() {
            None => return Err(Error::Unsupported("rel-error needs --schedule".into())),
            Some("doubling-estimate") => Reference::DoublingEstimate,
            Some("harmonic") => Reference::Harmonic,
            Some(s) => Reference::Schedule(parse_schedule(s)?),
        },
    };
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| as_.iter().map(move |&a| (x, a))).collect();
    let eval = |&(x, a): &(f64, f64)| -> Result<(f64, f64, f64)> {
        let p = to_p(x)?;
        let spec = base.at(p, a)?;
        let n = spec.params.n;
        let value = match &reference {
            Reference::None => exact_mean(&spec)?,
            Reference::Baseline(b) => exact_mean(&spec)? / exact_mean(&b.at(p, a)?)?,
            Reference::Schedule(s) => relative_error(nested_approx(s, p, a)?, exact_mean(&spec)?)?,
            Reference::DoublingEstimate => {
                if !n.is_power_of_two() {
                    return Err(Error::Unsupported("doubling-estimate needs n = 2^d".into()));
                }
                relative_error(approx_doubling(p, a, n.trailing_zeros())?, exact_mean(&spec)?)?
            }
            Reference::Harmonic => relative_error(harmonic_approx(p, n)?, exact_mean(&spec)?)?,
        };
        Ok((x, a, value))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(eval).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (Result<()>, String, String) {
        let cli = Cli::try_parse_from(std::iter::once("qrwt").chain(args.iter().copied())).unwrap();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let r = run(cli, &mut out, &mut err);
        (r, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_axis("0.1:0.5:3").unwrap(), vec![0.1, 0.30000000000000004, 0.5]);
        assert_eq!(parse_axis("0.2:0.9:1").unwrap(), vec![0.2]);
        assert!(parse_axis("0.1:0.5").is_err());
        assert!(parse_grid("0.1:0.5:200,0.1:1:200").is_err());
        assert_eq!(parse_grid("0.1:0.5:2,1:1:1").unwrap().0.len(), 2);
    }

    #[test]
    fn stats_examples() {
        let (r, out, _) = run_args(&["stats", "--scheme", "deterministic", "--n", "2", "--p", "0.5"]);
        r.unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert!((v["mean"].as_f64().unwrap() - 8.0 / 3.0).abs() < 1e-12);
        let (r, out, _) = run_args(&[
            "stats", "--scheme", "two-seg-cutoff", "--p", "0.5", "--a", "1", "--m", "1", "--n", "2", "--format", "csv",
        ]);
        r.unwrap();
        let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[6].parse::<f64>().unwrap().round(), 3.0);
    }

    #[test]
    fn error_codes() {
        let (r, _, _) = run_args(&["stats", "--scheme", "finite-memory", "--n", "4", "--p", "0.5", "--a", "0.5", "--m", "3"]);
        let e = r.unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("cutoff with a<1 supported only for n=2"));
        let (r, _, _) = run_args(&[
            "pdf", "--scheme", "doubling", "--n", "2", "--p", "0.5", "--a", "0.5", "--out", "/nonexistent/dir/x.csv",
        ]);
        assert_eq!(exit_code(&r.unwrap_err()), 3);
    }
}
