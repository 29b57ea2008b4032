//! Monte Carlo ensembles and the verdicts computed from them. The command
//! functions and the acceptance suite share these, so one ensemble can feed
//! several verdicts.

use rayon::prelude::*;

use super::result::{ExperimentResult, Table, Verdict};
use crate::dual::{
    ancestor_process, coalescence_stats, crossing_stat, estimate_sigma, reach_sweep, renewal_times, DualMc,
    RenewalRecord, SeriesPoint, SigmaEstimate,
};
use crate::error::{Error, Result};
use crate::harris::{EventStream, HarrisWindow, Rates, Site, Window, WindowPolicy};
use crate::interface::{run_heaviside_stream, CouplingResult, EdgeTracker, InterfaceState, InterfaceTrace, RegenSpec};
use crate::process::{BoundaryPolicy, LazyContact, Survival};
use crate::row;
use crate::seeds::{mix, stream_rng};
use crate::stats::{self, bootstrap_ci_by, ks_normal, wilson_interval, Sample};

/// Interface position of the heaviside start, `(0 + 1) / 2`.
pub const I0: f64 = 0.5;

/// Heaviside replications sampled on a common grid.
#[derive(Debug, Clone)]
pub struct HeavisideEnsemble {
    pub seed: u64,
    pub window: Window,
    /// Traces restricted to the kept times.
    pub traces: Vec<InterfaceTrace>,
    /// Regeneration results of the first `regen_reps` replications, without
    /// their distance series.
    pub couplings: Vec<Vec<CouplingResult>>,
    /// Replications whose edges came within range of the window boundary.
    pub omega_failures: usize,
}

/// Runs `reps` heaviside replications on the window of `policy` for the
/// last grid time. Every replication is sampled on `grid`; regenerated
/// copies are compared at grid times, and only the `keep` times are stored.
#[allow(clippy::too_many_arguments)]
pub fn heaviside_ensemble(
    rates: &Rates,
    policy: &WindowPolicy,
    grid: &[f64],
    keep: &[f64],
    reps: usize,
    seed: u64,
    regen: &[RegenSpec],
    regen_reps: usize,
) -> Result<HeavisideEnsemble> {
    let t_max = *grid.last().ok_or_else(|| Error::InvalidArgument("empty sample grid".into()))?;
    let window = policy.window(1, t_max)?;
    let idx: Vec<usize> = keep
        .iter()
        .map(|t| {
            grid.iter()
                .position(|g| g == t)
                .ok_or_else(|| Error::InvalidArgument(format!("kept time {t} is not on the grid")))
        })
        .collect::<Result<_>>()?;
    let out: Vec<(InterfaceTrace, Vec<CouplingResult>, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let specs = if (rep as usize) < regen_reps { regen } else { &[] };
            let (tr, mut cs) = run_heaviside_stream(rates, &window, seed, rep, grid, specs)?;
            for c in &mut cs {
                c.series = Vec::new();
            }
            let ok = tr.omega_ok.iter().all(|&b| b);
            let kept = InterfaceTrace {
                times: idx.iter().map(|&i| tr.times[i]).collect(),
                states: idx.iter().map(|&i| tr.states[i]).collect(),
                omega_ok: idx.iter().map(|&i| tr.omega_ok[i]).collect(),
            };
            Ok((kept, cs, ok))
        })
        .collect::<Result<_>>()?;
    let omega_failures = out.iter().filter(|o| !o.2).count();
    let (traces, couplings): (Vec<_>, Vec<_>) = out.into_iter().map(|(t, c, _)| (t, c)).unzip();
    Ok(HeavisideEnsemble { seed, window, traces, couplings: couplings.into_iter().take(regen_reps).collect(), omega_failures })
}

fn states_at(traces: &[InterfaceTrace], t: f64) -> Result<Vec<InterfaceState>> {
    traces
        .iter()
        .map(|tr| tr.at(t).map(|s| s.0).ok_or_else(|| Error::InvalidArgument(format!("time {t} was not kept"))))
        .collect()
}

/// Per-replication rows `seed, rep, t, r, l, twice_i`.
pub fn trace_table(ens: &HeavisideEnsemble) -> Table {
    let mut t = Table::new(&["seed", "rep", "t", "r", "l", "twice_i", "omega_ok"]);
    for (rep, tr) in ens.traces.iter().enumerate() {
        for ((time, s), ok) in tr.times.iter().zip(&tr.states).zip(&tr.omega_ok) {
            t.push(row![ens.seed, rep, time, s.r, s.l, s.twice_i, *ok as u8]);
        }
    }
    t
}

pub fn omega_verdict(res: &mut ExperimentResult, ens: &HeavisideEnsemble) {
    res.scalar("omega_failures", ens.omega_failures as f64);
    res.verdict(Verdict::new(
        "window_boundary_untouched",
        ens.omega_failures == 0,
        format!("{} of {} replications reached the window boundary", ens.omega_failures, ens.traces.len()),
    ));
}

/// Quantile `q` of `|r_t - l_t|` at each grid time with a bootstrap
/// interval; passes when the value at the last time lies in the interval of
/// the one before.
pub fn tightness_report(
    res: &mut ExperimentResult,
    traces: &[InterfaceTrace],
    t_grid: &[f64],
    q: f64,
    resamples: usize,
    seed: u64,
) -> Result<()> {
    if t_grid.len() < 2 {
        return Err(Error::Config("tightness needs at least two grid times".into()));
    }
    let mut table = Table::new(&["seed", "t", "quantile", "ci_low", "ci_high", "n"]);
    let mut rows = Vec::new();
    for (j, &t) in t_grid.iter().enumerate() {
        let w: Vec<f64> = states_at(traces, t)?.iter().map(|s| s.width() as f64).collect();
        let est = stats::quantile(&w, q);
        let (lo, hi) = bootstrap_ci_by(
            w.len(),
            |idx| stats::quantile(&idx.iter().map(|&i| w[i]).collect::<Vec<_>>(), q),
            0.95,
            resamples,
            mix(seed, j as u64),
        )?;
        table.push(row![seed, t, est, lo, hi, w.len()]);
        res.scalar(&format!("width_q_t{t}"), est);
        rows.push((t, est, lo, hi));
    }
    res.table("tightness", table);
    let (t1, e1, _, _) = rows[rows.len() - 1];
    let (t0, _, lo, hi) = rows[rows.len() - 2];
    res.verdict(Verdict::new(
        "tightness_no_growth",
        lo <= e1 && e1 <= hi,
        format!("quantile {e1} at t={t1} vs 95% CI [{lo}, {hi}] at t={t0}"),
    ));
    Ok(())
}

/// Estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn overlaps(&self, o: &Interval) -> bool {
        self.low <= o.high && o.low <= self.high
    }
}

/// `(i_t - i_0) / sqrt(t)` against `N(0, sigma^2)` with `sigma` the sample
/// SD; returns `sigma` with its bootstrap interval.
pub fn clt_report(
    res: &mut ExperimentResult,
    traces: &[InterfaceTrace],
    t: f64,
    resamples: usize,
    seed: u64,
) -> Result<Interval> {
    if t <= 0.0 {
        return Err(Error::Config("CLT time must be positive".into()));
    }
    let x: Vec<f64> = states_at(traces, t)?.iter().map(|s| (s.i() - I0) / t.sqrt()).collect();
    let sample = Sample::new(x.clone())?;
    let (m, sd, n) = (sample.mean(), sample.sd(), x.len());
    let ks = ks_normal(&sample, 0.0, sd)?;
    let (lo, hi) = bootstrap_ci_by(
        n,
        |idx| stats::variance(&idx.iter().map(|&i| x[i]).collect::<Vec<_>>()).sqrt(),
        0.95,
        resamples,
        seed,
    )?;
    res.scalar("sigma_interface", sd);
    res.scalar("sigma_interface_ci_low", lo);
    res.scalar("sigma_interface_ci_high", hi);
    res.scalar("clt_mean", m);
    res.scalar("ks_statistic", ks.statistic);
    res.scalar("ks_p_value", ks.p_value);
    let se = sd / (n as f64).sqrt();
    res.verdict(Verdict::new("clt_ks", ks.p_value > 0.01, format!("KS D = {}, p = {} (n = {n})", ks.statistic, ks.p_value)));
    res.verdict(Verdict::new("clt_centred", m.abs() < 3.0 * se, format!("mean {m}, 3 SE = {}", 3.0 * se)));
    Ok(Interval { estimate: sd, low: lo, high: hi })
}

/// Increments `N_j = (i_{a_j t} - i_{a_{j-1} t}) / sqrt(t)` with `a_0 = 0`.
pub fn fdd_report(
    res: &mut ExperimentResult,
    traces: &[InterfaceTrace],
    t: f64,
    a_grid: &[f64],
    max_corr: f64,
    var_tol: f64,
) -> Result<()> {
    if a_grid.first().is_none_or(|&a| a <= 0.0) {
        return Err(Error::Config("a_grid must start above 0".into()));
    }
    let cols: Vec<Vec<f64>> =
        a_grid.iter().map(|&a| Ok(states_at(traces, a * t)?.iter().map(|s| s.i()).collect())).collect::<Result<_>>()?;
    let n = traces.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let mut prev = I0;
            cols.iter()
                .map(|c| {
                    let d = (c[r] - prev) / t.sqrt();
                    prev = c[r];
                    d
                })
                .collect()
        })
        .collect();
    let report = stats::increment_independence(&rows)?;
    let mut table = Table::new(&["j", "a", "gap", "variance", "variance_per_gap", "corr_with_next"]);
    let mut ratios = Vec::new();
    let mut prev_a = 0.0;
    for (j, &a) in a_grid.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let v = stats::variance(&col);
        let gap = a - prev_a;
        prev_a = a;
        let rho = report.components.get(j).copied().unwrap_or(f64::NAN);
        table.push(row![j + 1, a, gap, v, v / gap, rho]);
        ratios.push(v / gap);
    }
    res.table("fdd", table);
    let max_rho = report.components.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mean_ratio = stats::mean(&ratios);
    let worst = ratios.iter().fold(0.0f64, |m, r| m.max((r / mean_ratio - 1.0).abs()));
    res.scalar("fdd_max_abs_corr", max_rho);
    res.scalar("fdd_independence_p", report.p_value);
    res.scalar("fdd_worst_variance_deviation", worst);
    res.verdict(Verdict::new(
        "fdd_uncorrelated",
        max_rho < max_corr,
        format!("max |rho| = {max_rho} (limit {max_corr}), p = {}", report.p_value),
    ));
    res.verdict(Verdict::new(
        "fdd_variance_proportional",
        worst < var_tol,
        format!("variance per unit gap {ratios:?}; worst relative deviation {worst} (limit {var_tol})"),
    ));
    Ok(())
}

/// `P[ sup |i^s_t - i_t| > threshold ]` for each regeneration time.
pub fn regeneration_report(
    res: &mut ExperimentResult,
    couplings: &[Vec<CouplingResult>],
    seed: u64,
    threshold: f64,
    max_tail: f64,
) -> Result<()> {
    let k = couplings.first().map_or(0, |c| c.len());
    if k == 0 || couplings.iter().any(|c| c.len() != k) {
        return Err(Error::InsufficientData("no regeneration results".into()));
    }
    let n = couplings.len();
    let mut per_rep = Table::new(&["seed", "rep", "s", "x", "initial_distance", "sup_distance"]);
    for (rep, cs) in couplings.iter().enumerate() {
        for c in cs {
            per_rep.push(row![seed, rep, c.s, c.x, c.initial_distance, c.sup_distance]);
        }
    }
    let mut table = Table::new(&["seed", "s", "tail", "ci_low", "ci_high", "n"]);
    let mut ivs = Vec::new();
    for j in 0..k {
        let s = couplings[0][j].s;
        let hits = couplings.iter().filter(|c| c[j].sup_distance > threshold).count();
        let (lo, hi) = wilson_interval(hits, n, 0.95);
        let p = hits as f64 / n as f64;
        table.push(row![seed, s, p, lo, hi, n]);
        res.scalar(&format!("regeneration_tail_s{s}"), p);
        ivs.push((s, Interval { estimate: p, low: lo, high: hi }));
    }
    res.table("regeneration", table);
    res.table("regeneration_reps", per_rep);
    let worst = ivs.iter().map(|(_, i)| i.estimate).fold(0.0, f64::max);
    res.verdict(Verdict::new(
        "regeneration_tail_small",
        worst <= max_tail,
        format!("largest P[sup > {threshold}] = {worst} (limit {max_tail})"),
    ));
    let overlap = ivs.iter().all(|a| ivs.iter().all(|b| a.1.overlaps(&b.1)));
    res.verdict(Verdict::new(
        "regeneration_uniform_in_s",
        overlap,
        format!("intervals {:?}", ivs.iter().map(|(s, i)| (*s, i.low, i.high)).collect::<Vec<_>>()),
    ));
    Ok(())
}

/// Renewal records of ancestor paths from `(0, 0)`, one list per guard.
#[derive(Debug, Clone)]
pub struct RenewalEnsemble {
    pub seed: u64,
    pub horizon: f64,
    pub guards: Vec<f64>,
    /// `records[g][rep]`.
    pub records: Vec<Vec<RenewalRecord>>,
    /// Systems drawn per replication until `(0, 0)` reached the horizon.
    pub attempts: Vec<u32>,
}

const MAX_ATTEMPTS: u32 = 64;

/// Samples fresh systems on the window of `policy` for `horizon`, keeping
/// the first in which `(0, 0)` reaches the horizon (attempt `a` of
/// replication `k` uses stream `k` keyed by `mix(seed, a)`), and records
/// the renewals of the ancestor process for every guard.
pub fn renewal_ensemble(
    rates: &Rates,
    policy: &WindowPolicy,
    horizon: f64,
    reps: usize,
    seed: u64,
    guards: &[f64],
) -> Result<RenewalEnsemble> {
    if guards.is_empty() || guards.iter().any(|&g| !(g >= 0.0 && g < horizon)) {
        return Err(Error::Config(format!("guards must lie in [0, {horizon})")));
    }
    let window = policy.window(0, horizon)?;
    let per: Vec<(Vec<RenewalRecord>, u32)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            for a in 0..MAX_ATTEMPTS {
                let h = HarrisWindow::sample_stream(*rates, window, mix(seed, a as u64), rep);
                let reach = reach_sweep(&h, horizon, BoundaryPolicy::Vacant)?;
                if !reach.contains(0, 0.0) {
                    continue;
                }
                let eta = ancestor_process(&h, 0, 0.0, horizon, BoundaryPolicy::Vacant)?;
                let recs = guards.iter().map(|&g| renewal_times(&eta, &reach, g)).collect::<Result<_>>()?;
                return Ok((recs, a + 1));
            }
            Err(Error::InsufficientData(format!("no surviving origin in {MAX_ATTEMPTS} systems")))
        })
        .collect::<Result<_>>()?;
    let mut records = vec![Vec::with_capacity(reps); guards.len()];
    let mut attempts = Vec::with_capacity(reps);
    for (recs, a) in per {
        for (g, r) in recs.into_iter().enumerate() {
            records[g].push(r);
        }
        attempts.push(a);
    }
    Ok(RenewalEnsemble { seed, horizon, guards: guards.to_vec(), records, attempts })
}

/// Per-replication renewal rows for guard index `g`.
pub fn renewal_table(ens: &RenewalEnsemble, g: usize) -> Table {
    let mut t = Table::new(&["seed", "rep", "attempts", "k", "tau", "eta"]);
    for (rep, r) in ens.records[g].iter().enumerate() {
        for (k, (tau, eta)) in r.times.iter().zip(&r.positions).enumerate() {
            t.push(row![ens.seed, rep, ens.attempts[rep], k, tau, eta]);
        }
    }
    t
}

/// Renewal-based `sigma` and the i.i.d. proxies: lag-1 correlation of
/// successive `deta` within paths and `dtau >= 1`.
pub fn sigma_dual_report(
    res: &mut ExperimentResult,
    records: &[RenewalRecord],
    resamples: usize,
    seed: u64,
    max_lag1: f64,
    min_increments: usize,
) -> Result<SigmaEstimate> {
    let est = estimate_sigma(records, resamples, seed)?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut short = 0usize;
    let mut n = 0usize;
    for r in records {
        let inc = r.increments();
        short += inc.iter().filter(|(dt, _)| *dt < 1.0).count();
        let tail: Vec<f64> = inc.iter().skip(1).map(|i| i.1).collect();
        n += tail.len();
        for w in tail.windows(2) {
            a.push(w[0]);
            b.push(w[1]);
        }
    }
    let lag1 = stats::pearson(&a, &b);
    res.scalar("sigma_dual", est.sigma_hat);
    res.scalar("sigma_dual_ci_low", est.ci_low);
    res.scalar("sigma_dual_ci_high", est.ci_high);
    res.scalar("renewal_rate", est.mu_hat);
    res.scalar("renewal_increments", n as f64);
    res.scalar("renewal_lag1", lag1);
    res.verdict(Verdict::new("renewal_spacing", short == 0, format!("{short} renewal gaps below 1")));
    res.verdict(Verdict::new(
        "renewal_lag1",
        n >= min_increments && lag1.abs() <= max_lag1,
        format!("lag-1 correlation {lag1} over {n} increments (need >= {min_increments}, |rho| <= {max_lag1})"),
    ));
    Ok(est)
}

/// Agreement of the dual and interface estimates of `sigma`.
pub fn sigma_agreement(res: &mut ExperimentResult, dual: &SigmaEstimate, iface: &Interval, rel_tol: f64) {
    let d = Interval { estimate: dual.sigma_hat, low: dual.ci_low, high: dual.ci_high };
    let rel = (d.estimate - iface.estimate).abs() / d.estimate.min(iface.estimate);
    res.scalar("sigma_relative_difference", rel);
    res.verdict(Verdict::new(
        "sigma_intervals_overlap",
        d.overlaps(iface),
        format!("dual [{}, {}] vs interface [{}, {}]", d.low, d.high, iface.low, iface.high),
    ));
    res.verdict(Verdict::new(
        "sigma_estimates_close",
        rel <= rel_tol,
        format!("dual {} vs interface {}: relative difference {rel} (limit {rel_tol})", d.estimate, iface.estimate),
    ));
}

/// Spread of `sigma_dual` across guards relative to its mean.
pub fn guard_report(
    res: &mut ExperimentResult,
    ens: &RenewalEnsemble,
    resamples: usize,
    tol: f64,
) -> Result<Vec<SigmaEstimate>> {
    let mut table = Table::new(&["seed", "guard", "sigma", "ci_low", "ci_high", "increments"]);
    let mut ests = Vec::new();
    for (g, recs) in ens.guards.iter().zip(&ens.records) {
        let e = estimate_sigma(recs, resamples, ens.seed)?;
        table.push(row![ens.seed, g, e.sigma_hat, e.ci_low, e.ci_high, e.n_increments]);
        ests.push(e);
    }
    res.table("guard_sensitivity", table);
    let s: Vec<f64> = ests.iter().map(|e| e.sigma_hat).collect();
    let spread = (s.iter().cloned().fold(f64::MIN, f64::max) - s.iter().cloned().fold(f64::MAX, f64::min)) / stats::mean(&s);
    res.scalar("guard_relative_spread", spread);
    res.verdict(Verdict::new(
        "guard_insensitive",
        spread < tol,
        format!("sigma across guards {:?}: relative spread {spread} (limit {tol})", ens.guards.iter().zip(&s).collect::<Vec<_>>()),
    ));
    Ok(ests)
}

/// Per-replication outcome of a paired truncation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPair {
    /// First grid time at which the edges differ.
    pub first_difference: Option<f64>,
    pub narrow_ok: bool,
}

/// Heaviside runs on the window `W` of `policy` and on the window of twice
/// its half-width, driven by one system: the narrow run sees exactly the
/// events of the wide one with an endpoint inside `W`.
pub fn truncation_pairs(
    rates: &Rates,
    policy: &WindowPolicy,
    grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<(Window, Window, Vec<TruncationPair>)> {
    let t_max = *grid.last().ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;
    let narrow = policy.window(1, t_max)?;
    let wide = Window::symmetric(2 * narrow.x_max, t_max)?;
    let range = rates.range();
    let pairs = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut a = EdgeTracker::heaviside_at(&narrow, 0, range);
            let mut b = EdgeTracker::heaviside_at(&wide, 0, range);
            let mut j = 0;
            let mut out = TruncationPair { first_difference: None, narrow_ok: true };
            let check = |j: usize, a: &EdgeTracker, b: &EdgeTracker, out: &mut TruncationPair| {
                out.narrow_ok &= a.omega_ok();
                if out.first_difference.is_none() && a.state() != b.state() {
                    out.first_difference = Some(grid[j]);
                }
            };
            while j < grid.len() && grid[j] <= 0.0 {
                check(j, &a, &b, &mut out);
                j += 1;
            }
            for e in EventStream::new(rates, &wide, seed, rep) {
                while j < grid.len() && e.time > grid[j] {
                    check(j, &a, &b, &mut out);
                    j += 1;
                }
                if j == grid.len() {
                    break;
                }
                b.apply(&e);
                if narrow.contains(e.source()) || narrow.contains(e.target()) {
                    a.apply(&e);
                }
            }
            while j < grid.len() {
                check(j, &a, &b, &mut out);
                j += 1;
            }
            out
        })
        .collect();
    Ok((narrow, wide, pairs))
}

pub fn truncation_report(
    res: &mut ExperimentResult,
    seed: u64,
    pairs: &[TruncationPair],
    max_fraction: f64,
) {
    let mut table = Table::new(&["seed", "rep", "differs", "first_difference", "narrow_ok"]);
    for (rep, p) in pairs.iter().enumerate() {
        let first = p.first_difference.map_or(String::new(), |t| t.to_string());
        table.push(row![seed, rep, p.first_difference.is_some() as u8, first, p.narrow_ok as u8]);
    }
    res.table("truncation_reps", table);
    let differ = pairs.iter().filter(|p| p.first_difference.is_some()).count();
    let frac = differ as f64 / pairs.len() as f64;
    res.scalar("truncation_differ_fraction", frac);
    res.verdict(Verdict::new(
        "truncation_robust",
        frac < max_fraction,
        format!("{differ} of {} paired replications differ (limit {max_fraction})", pairs.len()),
    ));
}

/// Importance-splitting settings for [`survival_tail`]: at each level time
/// a live run with at most `below` occupied sites is replaced by `factor`
/// independent copies of weight `1 / factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct Splitting {
    pub levels: Vec<f64>,
    pub factor: usize,
    pub below: usize,
}

fn survival_root(
    rates: &Rates,
    t_grid: &[f64],
    horizon: f64,
    cap: usize,
    split: &Splitting,
    seed: u64,
    rep: u64,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; t_grid.len()];
    // (state, next level index, weight, rng)
    let mut stack = vec![(LazyContact::new(rates, &[0])?, 0usize, 1.0f64, stream_rng(seed, rep))];
    let mut key = rep;
    while let Some((mut lc, mut lvl, w, mut rng)) = stack.pop() {
        loop {
            let until = split.levels.get(lvl).copied().filter(|&l| l < horizon).unwrap_or(horizon);
            match lc.advance(until, cap, &mut rng) {
                Some(Survival::DiedAt(t)) => {
                    for (a, g) in acc.iter_mut().zip(t_grid) {
                        if t > *g {
                            *a += w;
                        }
                    }
                    break;
                }
                Some(_) => break,
                None if until >= horizon => break,
                None => {
                    lvl += 1;
                    if lc.population() <= split.below && split.factor > 1 {
                        for _ in 0..split.factor {
                            key = mix(key, rep + 1);
                            stack.push((lc.clone(), lvl, w / split.factor as f64, stream_rng(mix(seed, key), 1)));
                        }
                        break;
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// `P[t < T < horizon]` for the one-type process from `{0}` on a grid of
/// `t`, where `T` is the extinction time. Runs reaching `cap` occupied
/// sites count as surviving. Intervals bootstrap the root replications.
#[allow(clippy::too_many_arguments)]
pub fn survival_tail(
    rates: &Rates,
    t_grid: &[f64],
    horizon: f64,
    roots: usize,
    seed: u64,
    cap: usize,
    split: &Splitting,
    resamples: usize,
) -> Result<Vec<SeriesPoint>> {
    if t_grid.last().is_some_and(|&t| t >= horizon) {
        return Err(Error::Config("survival grid must stay below the horizon".into()));
    }
    if split.levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("split levels must increase".into()));
    }
    if cap < 2 {
        return Err(Error::Config("cap must be at least 2".into()));
    }
    let per: Vec<Vec<f64>> = (0..roots as u64)
        .into_par_iter()
        .map(|rep| survival_root(rates, t_grid, horizon, cap, split, seed, rep))
        .collect::<Result<_>>()?;
    t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let col: Vec<f64> = per.iter().map(|r| r[j]).collect();
            let (lo, hi) = bootstrap_ci_by(
                roots,
                |idx| idx.iter().map(|&i| col[i]).sum::<f64>() / idx.len() as f64,
                0.95,
                resamples,
                mix(seed, j as u64),
            )?;
            Ok(SeriesPoint { t, estimate: stats::mean(&col), ci_low: lo, ci_high: hi, n: roots })
        })
        .collect()
}

pub fn series_table(seed: u64, s: &[SeriesPoint]) -> Table {
    let mut t = Table::new(&["seed", "t", "estimate", "ci_low", "ci_high", "n"]);
    for p in s {
        t.push(row![seed, p.t, p.estimate, p.ci_low, p.ci_high, p.n]);
    }
    t
}

/// Strict decrease of the estimates and a negative slope of `log p`
/// against `t`.
pub fn survival_report(res: &mut ExperimentResult, seed: u64, series: &[SeriesPoint]) {
    res.table("survival", series_table(seed, series));
    let decreasing = series.windows(2).all(|w| w[1].estimate < w[0].estimate);
    res.verdict(Verdict::new(
        "survival_decreasing",
        decreasing,
        format!("estimates {:?}", series.iter().map(|p| p.estimate).collect::<Vec<_>>()),
    ));
    let positive = series.iter().all(|p| p.estimate > 0.0);
    let fit = if positive {
        let xs: Vec<f64> = series.iter().map(|p| p.t).collect();
        let ys: Vec<f64> = series.iter().map(|p| p.estimate.ln()).collect();
        stats::linear_fit(&xs, &ys).ok()
    } else {
        None
    };
    match fit {
        Some((slope, se)) => {
            res.scalar("survival_log_slope", slope);
            res.verdict(Verdict::new("survival_log_linear_decay", slope < 0.0, format!("slope {slope} (SE {se})")));
        }
        None => res.verdict(Verdict::new("survival_log_linear_decay", false, "no fit: an estimate is zero")),
    }
}

/// Pair and density series from one dual ensemble, with their verdicts.
#[allow(clippy::too_many_arguments)]
pub fn coalescence_report(
    res: &mut ExperimentResult,
    mc: &DualMc,
    pair_gap: Site,
    probe: &[Site],
    t_grid: &[f64],
    reps: usize,
    seed: u64,
    slope: (f64, f64),
    density_times: (f64, f64),
) -> Result<()> {
    let (pairs, dens) = coalescence_stats(mc, (0, pair_gap), probe, t_grid, reps, seed)?;
    res.table("pair_coalescence", series_table(seed, &pairs));
    res.table("density", series_table(seed, &dens));
    let pts: Vec<(f64, f64)> = pairs.iter().map(|p| (p.t, p.estimate)).collect();
    match stats::loglog_slope(&pts) {
        Ok((b, se)) => {
            res.scalar("pair_loglog_slope", b);
            res.verdict(Verdict::new(
                "pair_slope",
                (b - slope.0).abs() <= slope.1,
                format!("log-log slope {b} (SE {se}), target {} +- {}", slope.0, slope.1),
            ));
        }
        Err(e) => res.verdict(Verdict::new("pair_slope", false, format!("no fit: {e}"))),
    }
    let find = |t: f64| {
        dens.iter().find(|p| p.t == t).ok_or_else(|| Error::Config(format!("density time {t} is not in t_grid")))
    };
    let (early, late) = (find(density_times.0)?, find(density_times.1)?);
    res.verdict(Verdict::new(
        "density_decays",
        late.estimate < early.estimate && late.ci_high < early.ci_low,
        format!(
            "t={}: {} [{}, {}]; t={}: {} [{}, {}]",
            early.t, early.estimate, early.ci_low, early.ci_high, late.t, late.estimate, late.ci_low, late.ci_high
        ),
    ));
    Ok(())
}

/// Crossing probabilities on a grid of `t` with a log-log slope (reported,
/// not judged).
pub fn crossing_report(
    res: &mut ExperimentResult,
    mc: &DualMc,
    pair_gap: Site,
    u: f64,
    t_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<()> {
    let s: Vec<SeriesPoint> =
        t_grid.iter().map(|&t| crossing_stat(mc, 0, pair_gap, u, t, reps, seed)).collect::<Result<_>>()?;
    if let Ok((b, _)) = stats::loglog_slope(&s.iter().map(|p| (p.t, p.estimate)).collect::<Vec<_>>()) {
        res.scalar("crossing_loglog_slope", b);
    }
    res.table("crossing", series_table(seed, &s));
    Ok(())
}
