//! The ancestor (dual) process, its renewal structure and the coalescence
//! statistics built on it.
//!
//! For a point `(x, r)` and a horizon `t`, `psi*` is the unique infection
//! path from `(x, r)` that reaches time `t` and jumps only when staying put
//! would not reach time `t`. The ancestor process is `eta_s = psi*_{x,r,s}(s)`:
//! its horizon moves with `s`. Run on the reversed Harris system of a primal
//! run, the ancestors identify where each present particle came from.
//!
//! Three independent constructions are provided and cross-checked in the
//! tests: the labeled process on the reversed system ([`ancestor_map`]), the
//! `psi*` trace against a [`ReachTable`] ([`ancestor_path`]), and a forward
//! lineage tracker that yields the whole process `s -> eta_s`
//! ([`ancestor_process`]).

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harris::{Event, EventStream, HarrisWindow, Mark, Rates, Site, Window, WindowPolicy};
use crate::process::{evolve_labeled, BoundaryPolicy, Label, LabelConfiguration, Sweep};
use crate::stats::{self, bootstrap_ci_by};

/// The sets `R(s) = { y : (y, s) <-> Z x {horizon} }` for `s` in
/// `[0, horizon]`, stored per site as the times where membership flips.
///
/// Membership is reported right-continuously: at an event time `u` a site
/// has the membership it has just after `u`. Between events this is exact.
#[derive(Debug, Clone)]
pub struct ReachTable {
    horizon: f64,
    x_min: Site,
    at_zero: Vec<bool>,
    toggles: Vec<Vec<f64>>,
    frozen: bool,
}

impl ReachTable {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn slot(&self, x: Site) -> Option<usize> {
        let i = x.wrapping_sub(self.x_min) as u32 as usize;
        (i < self.at_zero.len()).then_some(i)
    }

    pub fn contains(&self, x: Site, s: f64) -> bool {
        match self.slot(x) {
            None => self.frozen,
            Some(i) => {
                let flips = self.toggles[i].partition_point(|&u| u <= s);
                self.at_zero[i] ^ (flips % 2 == 1)
            }
        }
    }

    /// First time `u > s` at which `x` enters the set, if `x` is outside
    /// it at `s`.
    pub fn next_entry(&self, x: Site, s: f64) -> Option<f64> {
        let i = self.slot(x)?;
        let tg = &self.toggles[i];
        let k = tg.partition_point(|&u| u <= s);
        let member = self.at_zero[i] ^ (k % 2 == 1);
        if member {
            return Some(s);
        }
        tg.get(k).copied()
    }

    pub fn members_at(&self, s: f64) -> Vec<Site> {
        (0..self.at_zero.len())
            .map(|i| self.x_min + i as Site)
            .filter(|&x| self.contains(x, s))
            .collect()
    }
}

/// Builds the reach table of `h` for `horizon` by one backward sweep: a
/// recovery at `(z, u)` removes `z`; an arrow `a -> b` at `u` adds `a` when
/// `b` is in the set.
pub fn reach_sweep(h: &HarrisWindow, horizon: f64, boundary: BoundaryPolicy) -> Result<ReachTable> {
    if !(horizon > 0.0 && horizon <= h.window.t_max) {
        return Err(Error::TimeOutOfRange(format!(
            "horizon {horizon} outside (0, {}]",
            h.window.t_max
        )));
    }
    let w = h.window;
    let n = w.n_sites();
    let frozen = boundary == BoundaryPolicy::Frozen;
    let mut member = vec![true; n];
    let mut toggles: Vec<Vec<f64>> = vec![Vec::new(); n];
    let inside = |x: Site| x.wrapping_sub(w.x_min) as u32 as usize;
    let end = h.events().partition_point(|e| e.time <= horizon);
    for e in h.events()[..end].iter().rev() {
        match e.mark() {
            Mark::Recovery(z) => {
                let i = inside(z);
                if member[i] {
                    member[i] = false;
                    toggles[i].push(e.time);
                }
            }
            Mark::Arrow(a, b) => {
                let ia = inside(a);
                if ia >= n || member[ia] {
                    continue;
                }
                let ib = inside(b);
                let b_in = if ib < n { member[ib] } else { frozen };
                if b_in {
                    member[ia] = true;
                    toggles[ia].push(e.time);
                }
            }
        }
    }
    for t in &mut toggles {
        t.reverse();
    }
    Ok(ReachTable { horizon, x_min: w.x_min, at_zero: member, toggles, frozen })
}

/// A piecewise-constant path started at `origin`, with its jump times and
/// the time it entered the cemetery, if it did.
#[derive(Debug, Clone, PartialEq)]
pub struct AncestorPath {
    pub origin: (Site, f64),
    pub horizon: f64,
    /// `(time, new position)` in increasing time.
    pub jumps: Vec<(f64, Site)>,
    pub death: Option<f64>,
}

impl AncestorPath {
    /// Position at time `s`, or `None` before the origin time or once dead.
    pub fn position_at(&self, s: f64) -> Option<Site> {
        if s < self.origin.1 || s > self.horizon || self.death.is_some_and(|d| s >= d) {
            return None;
        }
        let k = self.jumps.partition_point(|&(u, _)| u <= s);
        Some(if k == 0 { self.origin.0 } else { self.jumps[k - 1].1 })
    }

    pub fn terminal(&self) -> Option<Site> {
        self.position_at(self.horizon)
    }

    pub fn is_alive_at_horizon(&self) -> bool {
        self.death.is_none()
    }

    /// Maximal constant pieces `(start, end, site)`.
    pub fn segments(&self) -> Vec<(f64, f64, Site)> {
        let end = self.death.unwrap_or(self.horizon);
        let mut out = Vec::with_capacity(self.jumps.len() + 1);
        let mut start = self.origin.1;
        let mut site = self.origin.0;
        for &(u, y) in &self.jumps {
            out.push((start, u, site));
            start = u;
            site = y;
        }
        out.push((start, end, site));
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,position")?;
        writeln!(w, "{},{}", self.origin.1, self.origin.0)?;
        for (u, y) in &self.jumps {
            writeln!(w, "{u},{y}")?;
        }
        if let Some(d) = self.death {
            writeln!(w, "{d},dead")?;
        }
        Ok(())
    }
}

fn check_origin(h: &HarrisWindow, x: Site, r: f64, horizon: f64) -> Result<()> {
    if !h.window.contains(x) {
        return Err(Error::SiteOutOfRange(format!("origin {x} outside the window")));
    }
    if !(r >= 0.0 && r < horizon && horizon <= h.window.t_max) {
        return Err(Error::TimeOutOfRange(format!(
            "need 0 <= r < horizon <= {}, got r = {r}, horizon = {horizon}",
            h.window.t_max
        )));
    }
    Ok(())
}

/// `psi*_{x,r,horizon}`: stays on its site and jumps along an arrow
/// `c -> b` exactly when `c` no longer reaches the horizon and `b` does.
///
/// When `(x, r)` does not reach the horizon there is no such path; the
/// ancestor process itself up to its death time is returned instead.
pub fn ancestor_path(
    h: &HarrisWindow,
    x: Site,
    r: f64,
    horizon: f64,
    boundary: BoundaryPolicy,
) -> Result<AncestorPath> {
    check_origin(h, x, r, horizon)?;
    let reach = reach_sweep(h, horizon, boundary)?;
    ancestor_path_in(h, &reach, x, r, boundary)
}

/// [`ancestor_path`] against a precomputed reach table.
pub fn ancestor_path_in(
    h: &HarrisWindow,
    reach: &ReachTable,
    x: Site,
    r: f64,
    boundary: BoundaryPolicy,
) -> Result<AncestorPath> {
    let horizon = reach.horizon;
    check_origin(h, x, r, horizon)?;
    if !reach.contains(x, r) {
        return ancestor_process(h, x, r, horizon, boundary);
    }
    let w = h.window;
    let mut c = x;
    let mut jumps = Vec::new();
    let start = h.events().partition_point(|e| e.time <= r);
    for e in &h.events()[start..] {
        if e.time > horizon {
            break;
        }
        match e.mark() {
            Mark::Arrow(a, b) if a == c => {
                if !reach.contains(c, e.time) && reach.contains(b, e.time) {
                    c = b;
                    jumps.push((e.time, b));
                }
            }
            Mark::Recovery(z) if z == c && w.contains(c) => {
                // unreachable when the origin reaches the horizon
                return Ok(AncestorPath { origin: (x, r), horizon, jumps, death: Some(e.time) });
            }
            _ => {}
        }
    }
    Ok(AncestorPath { origin: (x, r), horizon, jumps, death: None })
}

const NIL: u32 = u32::MAX;

/// Forward tracker of the ancestor process `s -> eta^{(x,r)}_s`.
///
/// Keeps every site reachable from `(x, r)` together with the preferred
/// infection path reaching it, in the order "stay before jump" at the
/// first point where two paths differ. A birth `c -> b` onto a free site
/// places `b` right after `c`; an arrow `c -> b` onto an occupied site
/// moves `b` right after `c` when `c` comes first (the new path to `b` is
/// then preferred). The head of the order is `eta_s`. Order queries use
/// integer labels that are respread when a gap closes.
#[derive(Debug, Clone)]
pub struct LineageTracker {
    lo: Site,
    x_min: Site,
    x_max: Site,
    frozen: bool,
    r: f64,
    next: Vec<u32>,
    prev: Vec<u32>,
    label: Vec<u64>,
    alive: Vec<bool>,
    head: u32,
    count: usize,
}

impl LineageTracker {
    pub fn new(window: &Window, range: u32, x: Site, r: f64, boundary: BoundaryPolicy) -> Result<Self> {
        if !window.contains(x) {
            return Err(Error::SiteOutOfRange(format!("origin {x} outside the window")));
        }
        let lo = window.x_min - range as Site;
        let n = window.n_sites() + 2 * range as usize;
        let mut t = LineageTracker {
            lo,
            x_min: window.x_min,
            x_max: window.x_max,
            frozen: boundary == BoundaryPolicy::Frozen,
            r,
            next: vec![NIL; n],
            prev: vec![NIL; n],
            label: vec![0; n],
            alive: vec![false; n],
            head: NIL,
            count: 0,
        };
        let i = (x - lo) as u32;
        t.alive[i as usize] = true;
        t.label[i as usize] = u64::MAX / 2;
        t.head = i;
        t.count = 1;
        Ok(t)
    }

    /// Current ancestor position, `None` once every path has died.
    #[inline]
    pub fn head(&self) -> Option<Site> {
        (self.head != NIL).then(|| self.lo + self.head as Site)
    }

    pub fn occupied(&self) -> usize {
        self.count
    }

    fn relabel(&mut self) {
        let step = u64::MAX / (self.count as u64 + 2);
        let mut i = self.head;
        let mut k = 1u64;
        while i != NIL {
            self.label[i as usize] = step * k;
            k += 1;
            i = self.next[i as usize];
        }
    }

    fn unlink(&mut self, i: u32) {
        let (p, n) = (self.prev[i as usize], self.next[i as usize]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p as usize] = n;
        }
        if n != NIL {
            self.prev[n as usize] = p;
        }
        self.prev[i as usize] = NIL;
        self.next[i as usize] = NIL;
    }

    fn link_after(&mut self, c: u32, b: u32) {
        let n = self.next[c as usize];
        let lo = self.label[c as usize];
        let hi = if n == NIL { u64::MAX } else { self.label[n as usize] };
        if hi - lo < 2 {
            self.relabel();
            return self.link_after(c, b);
        }
        self.label[b as usize] = lo + (hi - lo) / 2;
        self.prev[b as usize] = c;
        self.next[b as usize] = n;
        self.next[c as usize] = b;
        if n != NIL {
            self.prev[n as usize] = b;
        }
    }

    fn admissible(&self, x: Site) -> bool {
        (x >= self.x_min && x <= self.x_max) || self.frozen
    }

    /// Applies one event; returns whether the head changed.
    #[inline]
    pub fn apply(&mut self, e: &Event) -> bool {
        if e.time < self.r || self.head == NIL {
            return false;
        }
        let before = self.head;
        let ib = e.target().wrapping_sub(self.lo) as u32;
        if ib as usize >= self.alive.len() {
            return false;
        }
        if e.is_recovery() {
            if self.alive[ib as usize] {
                self.unlink(ib);
                self.alive[ib as usize] = false;
                self.count -= 1;
            }
        } else {
            if e.time == self.r {
                return false;
            }
            let ic = e.source().wrapping_sub(self.lo) as u32;
            if ic as usize >= self.alive.len() || !self.alive[ic as usize] {
                return false;
            }
            if !self.alive[ib as usize] {
                if !self.admissible(e.target()) {
                    return false;
                }
                self.alive[ib as usize] = true;
                self.count += 1;
                self.link_after(ic, ib);
            } else if self.label[ic as usize] < self.label[ib as usize] && self.prev[ib as usize] != ic {
                self.unlink(ib);
                self.link_after(ic, ib);
            }
        }
        self.head != before
    }
}

/// The ancestor process `eta^{(x,r)}_s` for `s` in `[r, until]`.
pub fn ancestor_process(
    h: &HarrisWindow,
    x: Site,
    r: f64,
    until: f64,
    boundary: BoundaryPolicy,
) -> Result<AncestorPath> {
    check_origin(h, x, r, until)?;
    let mut tr = LineageTracker::new(&h.window, h.rates.range(), x, r, boundary)?;
    let start = h.events().partition_point(|e| e.time < r);
    let mut jumps = Vec::new();
    for e in &h.events()[start..] {
        if e.time > until {
            break;
        }
        if tr.apply(e) {
            match tr.head() {
                Some(y) => jumps.push((e.time, y)),
                None => return Ok(AncestorPath { origin: (x, r), horizon: until, jumps, death: Some(e.time) }),
            }
        }
    }
    Ok(AncestorPath { origin: (x, r), horizon: until, jumps, death: None })
}

/// `eta^x_t` for every site: the labeled process on `reverse(h, t)` started
/// from the identity labeling. Used with `h` the reversal of a primal
/// system, `xi_t(x) = xi_0(eta^x_t)` with the cemetery mapped to 0.
pub fn ancestor_map(h: &HarrisWindow, t: f64, boundary: BoundaryPolicy) -> Result<LabelConfiguration> {
    let rev = h.reverse(t)?;
    evolve_labeled(&rev, &LabelConfiguration::identity(&rev.window), boundary)
}

/// Renewal times of an ancestor path and the embedded walk.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalRecord {
    pub times: Vec<f64>,
    pub positions: Vec<Site>,
    pub guard: f64,
}

impl RenewalRecord {
    /// `(dtau_k, deta_k)` for consecutive renewals, `k = 0, 1, ...`.
    pub fn increments(&self) -> Vec<(f64, f64)> {
        self.times
            .windows(2)
            .zip(self.positions.windows(2))
            .map(|(t, p)| (t[1] - t[0], (p[1] - p[0]) as f64))
            .collect()
    }
}

/// `tau_0 = r`, `tau_{k+1}` = first `s >= tau_k + 1` with `eta_s` in the
/// reach set of the table's horizon; enumeration stops at
/// `horizon - guard`. Reaching the horizon stands in for surviving forever.
pub fn renewal_times(path: &AncestorPath, reach: &ReachTable, guard: f64) -> Result<RenewalRecord> {
    let stop = reach.horizon - guard;
    if !(guard >= 0.0) || stop < path.origin.1 {
        return Err(Error::InvalidArgument(format!("guard {guard} leaves no room after the origin")));
    }
    if path.death.is_some_and(|d| d <= stop) || path.horizon < stop {
        return Err(Error::InsufficientData("path does not live to horizon - guard".into()));
    }
    let segs = path.segments();
    let mut times = vec![path.origin.1];
    let mut positions = vec![path.origin.0];
    let mut k = 0;
    'outer: loop {
        let from = times.last().unwrap() + 1.0;
        if from > stop {
            break;
        }
        while k < segs.len() && segs[k].1 <= from {
            k += 1;
        }
        for &(a, b, y) in &segs[k..] {
            let s = a.max(from);
            if s > stop {
                break 'outer;
            }
            if let Some(u) = reach.next_entry(y, s) {
                if u < b && u <= stop {
                    times.push(u);
                    positions.push(y);
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(RenewalRecord { times, positions, guard })
}

/// Renewal-reward estimate `sigma^2 = Var(deta) / E(dtau)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SigmaEstimate {
    pub sigma_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_increments: usize,
    pub mu_hat: f64,
}

fn sigma_of(incs: &[(f64, f64)]) -> (f64, f64) {
    let n = incs.len() as f64;
    let mt = incs.iter().map(|i| i.0).sum::<f64>() / n;
    let me = incs.iter().map(|i| i.1).sum::<f64>() / n;
    let ve = incs.iter().map(|i| (i.1 - me).powi(2)).sum::<f64>() / (n - 1.0);
    ((ve / mt).sqrt(), mt)
}

/// Pools the increments with `k >= 1` of every record (the first block has
/// a different law) and bootstraps whole records for a percentile
/// interval. The interval is widened to contain the point estimate.
pub fn estimate_sigma(records: &[RenewalRecord], resamples: usize, seed: u64) -> Result<SigmaEstimate> {
    let per: Vec<Vec<(f64, f64)>> = records.iter().map(|r| r.increments().into_iter().skip(1).collect()).collect();
    let pooled: Vec<(f64, f64)> = per.iter().flatten().copied().collect();
    if pooled.len() < 100 {
        return Err(Error::InsufficientData(format!("need at least 100 increments, got {}", pooled.len())));
    }
    let (sigma_hat, mt) = sigma_of(&pooled);
    let (lo, hi) = bootstrap_ci_by(
        per.len(),
        |idx| {
            let sample: Vec<(f64, f64)> = idx.iter().flat_map(|&i| per[i].iter().copied()).collect();
            if sample.len() < 2 {
                f64::NAN
            } else {
                sigma_of(&sample).0
            }
        },
        0.95,
        resamples,
        seed,
    )?;
    Ok(SigmaEstimate {
        sigma_hat,
        ci_low: lo.min(sigma_hat),
        ci_high: hi.max(sigma_hat),
        n_increments: pooled.len(),
        mu_hat: 1.0 / mt,
    })
}

/// One point of a Monte Carlo series.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

pub fn write_series_csv<W: Write>(series: &[SeriesPoint], mut w: W) -> Result<()> {
    writeln!(w, "t,estimate,ci_low,ci_high,n")?;
    for p in series {
        writeln!(w, "{},{},{},{},{}", p.t, p.estimate, p.ci_low, p.ci_high, p.n)?;
    }
    Ok(())
}

/// Shared settings of the dual Monte Carlo drivers.
///
/// Each replication samples a fresh system, which has the law of a
/// reversed one. Statistics are averaged over `translates` copies of the
/// probe spaced `stride` apart within the same replication (the law is
/// translation invariant); intervals bootstrap whole replications.
#[derive(Debug, Clone, Copy)]
pub struct DualMc {
    pub rates: Rates,
    pub policy: WindowPolicy,
    pub translates: usize,
    pub stride: Site,
    pub resamples: usize,
}

impl DualMc {
    pub fn new(rates: Rates) -> Self {
        DualMc { rates, policy: WindowPolicy::default_for(&rates), translates: 1, stride: 0, resamples: 1000 }
    }

    fn offsets(&self) -> Vec<Site> {
        let k = self.translates.max(1) as Site;
        (0..k).map(|j| (j - (k - 1) / 2) * self.stride).collect()
    }

    fn span(&self, extra: Site) -> Site {
        let k = self.translates.max(1) as Site;
        extra + (k / 2 + 1) * self.stride.abs()
    }

    fn summarize(&self, t_grid: &[f64], per_rep: &[Vec<f64>], seed: u64) -> Result<Vec<SeriesPoint>> {
        t_grid
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let col: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
                let est = stats::mean(&col);
                let (lo, hi) = bootstrap_ci_by(
                    col.len(),
                    |idx| idx.iter().map(|&i| col[i]).sum::<f64>() / idx.len() as f64,
                    0.95,
                    self.resamples,
                    seed ^ j as u64,
                )?;
                Ok(SeriesPoint { t, estimate: est, ci_low: lo, ci_high: hi, n: col.len() * self.translates.max(1) })
            })
            .collect()
    }

    /// Runs the labeled process from the identity labeling and hands the
    /// labels at each grid time to `probe`.
    fn labeled_snapshots<F>(&self, window: &Window, seed: u64, rep: u64, t_grid: &[f64], mut probe: F)
    where
        F: FnMut(usize, &Sweep<Label>),
    {
        let mut sweep = Sweep::labeled(&LabelConfiguration::identity(window), BoundaryPolicy::Vacant);
        let mut j = 0;
        while j < t_grid.len() && t_grid[j] <= 0.0 {
            probe(j, &sweep);
            j += 1;
        }
        for e in EventStream::new(&self.rates, window, seed, rep) {
            while j < t_grid.len() && e.time > t_grid[j] {
                probe(j, &sweep);
                j += 1;
            }
            if j == t_grid.len() {
                return;
            }
            sweep.apply(&e);
        }
        while j < t_grid.len() {
            probe(j, &sweep);
            j += 1;
        }
    }
}

fn check_grid(t_grid: &[f64], reps: usize) -> Result<()> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!("need at least 100 replications, got {reps}")));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] < 0.0 {
        return Err(Error::InvalidArgument("time grid must be nonempty, nonnegative and increasing".into()));
    }
    Ok(())
}

/// `P[eta^x_t and eta^y_t both alive and distinct]` on a time grid.
pub fn pair_coalescence_stat(
    mc: &DualMc,
    x: Site,
    y: Site,
    t_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<SeriesPoint>> {
    check_grid(t_grid, reps)?;
    let t_max = *t_grid.last().unwrap();
    let window = mc.policy.window(mc.span(x.abs().max(y.abs())), t_max.max(1.0))?;
    let offsets = mc.offsets();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut out = vec![0.0; t_grid.len()];
            mc.labeled_snapshots(&window, seed, rep, t_grid, |j, sw| {
                let hits = offsets
                    .iter()
                    .filter(|&&z| {
                        let (a, b) = (sw.get(x + z), sw.get(y + z));
                        a.is_some() && b.is_some() && a != b
                    })
                    .count();
                out[j] = hits as f64 / offsets.len() as f64;
            });
            out
        })
        .collect();
    mc.summarize(t_grid, &per_rep, seed)
}

/// `P[ some eta^x_t lands in the probe set ]`. Ancestors landing on `z`
/// are exactly the sites holding label `z` in the labeled process.
pub fn density_stat(mc: &DualMc, probe: &[Site], t_grid: &[f64], reps: usize, seed: u64) -> Result<Vec<SeriesPoint>> {
    check_grid(t_grid, reps)?;
    if probe.is_empty() {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    let t_max = *t_grid.last().unwrap();
    let reach = probe.iter().map(|p| p.abs()).max().unwrap();
    let window = mc.policy.window(mc.span(reach), t_max.max(1.0))?;
    let offsets = mc.offsets();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut out = vec![0.0; t_grid.len()];
            let mut present = vec![false; window.n_sites()];
            mc.labeled_snapshots(&window, seed, rep, t_grid, |j, sw| {
                present.iter_mut().for_each(|p| *p = false);
                for l in sw.cells().iter().flatten() {
                    present[(l - window.x_min) as usize] = true;
                }
                let hits = offsets
                    .iter()
                    .filter(|&&z| probe.iter().any(|&p| present[(p + z - window.x_min) as usize]))
                    .count();
                out[j] = hits as f64 / offsets.len() as f64;
            });
            out
        })
        .collect();
    mc.summarize(t_grid, &per_rep, seed)
}

/// [`pair_coalescence_stat`] and [`density_stat`] from one shared sweep per
/// replication.
pub fn coalescence_stats(
    mc: &DualMc,
    pair: (Site, Site),
    probe: &[Site],
    t_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<(Vec<SeriesPoint>, Vec<SeriesPoint>)> {
    check_grid(t_grid, reps)?;
    if probe.is_empty() {
        return Err(Error::InvalidArgument("empty probe set".into()));
    }
    let (x, y) = pair;
    let t_max = *t_grid.last().unwrap();
    let reach = probe.iter().map(|p| p.abs()).chain([x.abs(), y.abs()]).max().unwrap();
    let window = mc.policy.window(mc.span(reach), t_max.max(1.0))?;
    let offsets = mc.offsets();
    let per_rep: Vec<(Vec<f64>, Vec<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut pairs = vec![0.0; t_grid.len()];
            let mut dens = vec![0.0; t_grid.len()];
            let mut present = vec![false; window.n_sites()];
            mc.labeled_snapshots(&window, seed, rep, t_grid, |j, sw| {
                let hits = offsets
                    .iter()
                    .filter(|&&z| {
                        let (a, b) = (sw.get(x + z), sw.get(y + z));
                        a.is_some() && b.is_some() && a != b
                    })
                    .count();
                pairs[j] = hits as f64 / offsets.len() as f64;
                present.iter_mut().for_each(|p| *p = false);
                for l in sw.cells().iter().flatten() {
                    present[(l - window.x_min) as usize] = true;
                }
                let hits = offsets
                    .iter()
                    .filter(|&&z| probe.iter().any(|&p| present[(p + z - window.x_min) as usize]))
                    .count();
                dens[j] = hits as f64 / offsets.len() as f64;
            });
            (pairs, dens)
        })
        .collect();
    let (p, d): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per_rep.into_iter().unzip();
    Ok((mc.summarize(t_grid, &p, seed)?, mc.summarize(t_grid, &d, seed ^ 0x5555)?))
}

/// `P[ for some s <= t both ancestors are alive and eta^x_s > eta^y_s + u sqrt(t) ]`
/// with a Wilson interval.
pub fn crossing_stat(mc: &DualMc, x: Site, y: Site, u: f64, t: f64, reps: usize, seed: u64) -> Result<SeriesPoint> {
    if x >= y {
        return Err(Error::InvalidArgument(format!("need x < y, got {x}, {y}")));
    }
    if !(u > 0.0) {
        return Err(Error::InvalidArgument(format!("need u > 0, got {u}")));
    }
    check_grid(&[t], reps)?;
    let window = mc.policy.window(x.abs().max(y.abs()), t)?;
    let gap = u * t.sqrt();
    let range = mc.rates.range();
    let hits: usize = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut a = LineageTracker::new(&window, range, x, 0.0, BoundaryPolicy::Vacant).expect("origin in window");
            let mut b = LineageTracker::new(&window, range, y, 0.0, BoundaryPolicy::Vacant).expect("origin in window");
            for e in EventStream::new(&mc.rates, &window, seed, rep) {
                a.apply(&e);
                b.apply(&e);
                match (a.head(), b.head()) {
                    (Some(p), Some(q)) => {
                        if (p - q) as f64 > gap {
                            return 1;
                        }
                    }
                    _ => return 0,
                }
            }
            0
        })
        .sum();
    let (lo, hi) = stats::wilson_interval(hits, reps, 0.95);
    Ok(SeriesPoint { t, estimate: hits as f64 / reps as f64, ci_low: lo, ci_high: hi, n: reps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harris::quantize_time;
    use crate::process::{evolve_multitype, reachable, Alphabet, Configuration, Target};
    use proptest::prelude::*;
    use rand::Rng;

    fn rates() -> Rates {
        Rates::new(2.0, 1).unwrap()
    }

    fn fixture(x_min: Site, x_max: Site, t_max: f64, events: Vec<Event>) -> HarrisWindow {
        HarrisWindow::from_events(rates(), Window::new(x_min, x_max, t_max).unwrap(), events).unwrap()
    }

    /// Times strictly between consecutive events, plus 0.
    fn probe_times(h: &HarrisWindow, horizon: f64) -> Vec<f64> {
        let mut ts = vec![0.0];
        let mut prev = 0.0;
        for e in h.events().iter().filter(|e| e.time <= horizon) {
            ts.push((prev + e.time) / 2.0);
            prev = e.time;
        }
        ts.push((prev + horizon) / 2.0);
        ts
    }

    #[test]
    fn reach_table_fixtures() {
        let h = fixture(-2, 2, 1.0, vec![]);
        let rt = reach_sweep(&h, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(rt.members_at(0.0), vec![-2, -1, 0, 1, 2]);

        let h = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.6)]);
        let rt = reach_sweep(&h, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert!(!rt.contains(0, 0.3));
        assert!(rt.contains(0, 0.8));

        let h = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.8), Event::arrow(0, 1, 0.5)]);
        let rt = reach_sweep(&h, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert!(rt.contains(0, 0.2));
        assert!(!rt.contains(0, 0.6));
        assert!(rt.contains(0, 0.9));
        assert!(reach_sweep(&h, 2.0, BoundaryPolicy::Vacant).is_err());
    }

    #[test]
    fn ancestor_path_fixtures() {
        let h = fixture(-2, 2, 1.0, vec![]);
        let p = ancestor_path(&h, 0, 0.0, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!((p.terminal(), p.death, p.jumps.len()), (Some(0), None, 0));

        let h = fixture(-2, 2, 1.0, vec![Event::arrow(0, 1, 0.3), Event::recovery(0, 0.7)]);
        let p = ancestor_path(&h, 0, 0.0, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(p.jumps, vec![(quantize_time(0.3), 1)]);
        assert_eq!(p.terminal(), Some(1));
        assert!(ancestor_path(&h, 9, 0.0, 1.0, BoundaryPolicy::Vacant).is_err());
    }

    #[test]
    fn ancestor_process_differs_from_fixed_horizon_path() {
        // before 0.7 staying at 0 reaches time s, so eta_s = 0; psi* for
        // horizon 1 has already jumped at 0.3
        let h = fixture(-2, 2, 1.0, vec![Event::arrow(0, 1, 0.3), Event::recovery(0, 0.7)]);
        let eta = ancestor_process(&h, 0, 0.0, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(eta.position_at(0.5), Some(0));
        assert_eq!(eta.position_at(0.8), Some(1));
        assert_eq!(eta.jumps, vec![(quantize_time(0.7), 1)]);
        let dead = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.4)]);
        let eta = ancestor_process(&dead, 0, 0.0, 1.0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(eta.death, Some(quantize_time(0.4)));
        assert_eq!(eta.position_at(0.5), None);
    }

    #[test]
    fn ancestor_map_identity_and_translation() {
        let h = fixture(-3, 3, 1.0, vec![]);
        assert_eq!(ancestor_map(&h, 1.0, BoundaryPolicy::Vacant).unwrap(), LabelConfiguration::identity(&h.window));
        let h = HarrisWindow::sample(rates(), Window::new(-10, 10, 3.0).unwrap(), 4);
        let m = ancestor_map(&h, 3.0, BoundaryPolicy::Vacant).unwrap();
        let s = ancestor_map(&h.shift(5, 0.0).unwrap(), 3.0, BoundaryPolicy::Vacant).unwrap();
        for x in -10..=10 {
            assert_eq!(s.get(x + 5), m.get(x).map(|a| a + 5));
        }
    }

    #[test]
    fn renewal_fixtures() {
        let h = fixture(-2, 2, 10.0, vec![]);
        let rt = reach_sweep(&h, 10.0, BoundaryPolicy::Vacant).unwrap();
        let p = ancestor_process(&h, 0, 0.0, 10.0, BoundaryPolicy::Vacant).unwrap();
        let rec = renewal_times(&p, &rt, 2.0).unwrap();
        assert_eq!(rec.times, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let rec = renewal_times(&p, &rt, 10.0).unwrap();
        assert_eq!(rec.times, vec![0.0]);
    }

    #[test]
    fn sigma_synthetic() {
        let flat = RenewalRecord { times: (0..200).map(|k| k as f64).collect(), positions: vec![0; 200], guard: 0.0 };
        let est = estimate_sigma(&[flat], 1000, 1).unwrap();
        assert_eq!((est.sigma_hat, est.ci_low, est.ci_high), (0.0, 0.0, 0.0));

        let mut rng = crate::seeds::stream_rng(8, 0);
        let records: Vec<RenewalRecord> = (0..100)
            .map(|_| {
                let mut pos = vec![0];
                for _ in 0..101 {
                    let step = if rng.random::<bool>() { 1 } else { -1 };
                    pos.push(pos.last().unwrap() + step);
                }
                RenewalRecord { times: (0..102).map(|k| k as f64).collect(), positions: pos, guard: 0.0 }
            })
            .collect();
        let est = estimate_sigma(&records, 1000, 2).unwrap();
        assert_eq!(est.n_increments, 10_000);
        assert!((est.sigma_hat - 1.0).abs() < 0.05, "{est:?}");
        assert!(est.ci_low <= est.sigma_hat && est.sigma_hat <= est.ci_high);
        let short = RenewalRecord { times: records[0].times[..50].to_vec(), positions: records[0].positions[..50].to_vec(), guard: 0.0 };
        assert!(estimate_sigma(&[short], 1000, 2).is_err());
    }

    #[test]
    fn driver_edge_cases() {
        let mc = DualMc::new(rates());
        let s = pair_coalescence_stat(&mc, 0, 0, &[0.0, 1.0], 100, 1).unwrap();
        assert!(s.iter().all(|p| p.estimate == 0.0));
        let s = pair_coalescence_stat(&mc, 0, 2, &[0.0], 100, 1).unwrap();
        assert_eq!(s[0].estimate, 1.0);
        let d = density_stat(&mc, &[0], &[0.0, 0.5], 100, 1).unwrap();
        assert_eq!(d[0].estimate, 1.0);
        assert!(pair_coalescence_stat(&mc, 0, 2, &[1.0], 99, 1).is_err());
        let c = crossing_stat(&mc, 0, 1, 1e6, 4.0, 100, 1).unwrap();
        assert_eq!(c.estimate, 0.0);
        assert!(crossing_stat(&mc, 0, 1, 0.0, 4.0, 100, 1).is_err());
        assert!(crossing_stat(&mc, 1, 0, 1.0, 4.0, 100, 1).is_err());
    }

    #[test]
    fn combined_sweep_matches_separate_drivers() {
        let mc = DualMc::new(rates());
        let grid = [0.5, 2.0];
        let (p, d) = coalescence_stats(&mc, (0, 2), &[2], &grid, 100, 4).unwrap();
        assert_eq!(p, pair_coalescence_stat(&mc, 0, 2, &grid, 100, 4).unwrap());
        assert_eq!(d.iter().map(|s| s.estimate).collect::<Vec<_>>(),
            density_stat(&mc, &[2], &grid, 100, 4).unwrap().iter().map(|s| s.estimate).collect::<Vec<_>>());
        assert!(coalescence_stats(&mc, (0, 2), &[], &grid, 100, 4).is_err());
    }

    #[test]
    fn density_trivial_without_events() {
        let h = fixture(-3, 3, 2.0, vec![]);
        let m = ancestor_map(&h, 2.0, BoundaryPolicy::Vacant).unwrap();
        assert!(m.labels.iter().any(|l| *l == Some(0)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reach_table_matches_forward_reachability(seed in any::<u64>(), frozen in any::<bool>()) {
            let b = if frozen { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant };
            let h = HarrisWindow::sample(Rates::new(1.5, 2).unwrap(), Window::new(-5, 5, 2.0).unwrap(), seed);
            let rt = reach_sweep(&h, 2.0, b).unwrap();
            for s in probe_times(&h, 2.0) {
                for x in -5..=5 {
                    let fwd = reachable(&h, (x, s), Target::Anywhere(2.0), b).unwrap();
                    prop_assert_eq!(rt.contains(x, s), fwd, "site {} time {}", x, s);
                }
            }
        }

        #[test]
        fn three_constructions_agree(seed in any::<u64>(), frozen in any::<bool>()) {
            let b = if frozen { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant };
            let t = 3.0;
            let g = HarrisWindow::sample(rates(), Window::new(-8, 8, t).unwrap(), seed);
            let map = ancestor_map(&g, t, b).unwrap();
            let rt = reach_sweep(&g, t, b).unwrap();
            for x in -8..=8 {
                let psi = ancestor_path_in(&g, &rt, x, 0.0, b).unwrap();
                let eta = ancestor_process(&g, x, 0.0, t, b).unwrap();
                prop_assert_eq!(map.get(x), psi.terminal());
                prop_assert_eq!(psi.terminal(), eta.terminal());
                for w in psi.jumps.iter() {
                    prop_assert!(w.1 - psi.position_at(w.0 - 1e-9).unwrap() != 0);
                }
            }
        }

        #[test]
        fn ancestor_process_is_terminal_value_of_each_horizon(seed in any::<u64>()) {
            let g = HarrisWindow::sample(rates(), Window::new(-8, 8, 4.0).unwrap(), seed);
            let eta = ancestor_process(&g, 0, 0.0, 4.0, BoundaryPolicy::Vacant).unwrap();
            for k in 1..=16 {
                let s = quantize_time(0.25 * k as f64 - 0.1);
                let psi = ancestor_path(&g, 0, 0.0, s, BoundaryPolicy::Vacant).unwrap();
                let expect = if psi.is_alive_at_horizon() { psi.terminal() } else { None };
                prop_assert_eq!(eta.position_at(s), expect);
            }
        }

        #[test]
        fn concatenation(seed in any::<u64>()) {
            let g = HarrisWindow::sample(rates(), Window::new(-8, 8, 4.0).unwrap(), seed);
            let horizon = 4.0;
            let t = quantize_time(1.7);
            let rt = reach_sweep(&g, horizon, BoundaryPolicy::Vacant).unwrap();
            let first = ancestor_path(&g, 0, 0.0, t, BoundaryPolicy::Vacant).unwrap();
            if let (true, Some(y)) = (first.is_alive_at_horizon(), first.terminal()) {
                if rt.contains(y, t) && rt.contains(0, 0.0) {
                    let whole = ancestor_path_in(&g, &rt, 0, 0.0, BoundaryPolicy::Vacant).unwrap();
                    let rest = ancestor_path_in(&g, &rt, y, t, BoundaryPolicy::Vacant).unwrap();
                    for s in probe_times(&g, horizon).into_iter().filter(|&s| s >= t) {
                        prop_assert_eq!(whole.position_at(s), rest.position_at(s));
                    }
                }
            }
        }

        #[test]
        fn duality_identity(seed in any::<u64>(), frozen in any::<bool>()) {
            let b = if frozen { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant };
            let w = Window::new(-10, 10, 3.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let mut rng = crate::seeds::stream_rng(seed, 5);
            let states: Vec<u8> = w.sites().map(|_| rng.random_range(1..=2)).collect();
            let xi0 = Configuration::with_exterior(Alphabet::MultiType, w.x_min, states, (1, 2)).unwrap();
            let xi_t = evolve_multitype(&h, &xi0, b).unwrap().final_state();
            let eta = ancestor_map(&h.reverse(3.0).unwrap(), 3.0, b).unwrap();
            for x in w.sites() {
                let dual = eta.get(x).map_or(0, |a| xi0.get(a));
                prop_assert_eq!(xi_t.get(x), dual);
            }
        }

        #[test]
        fn renewal_spacing(seed in any::<u64>()) {
            let g = HarrisWindow::sample(rates(), Window::new(-30, 30, 20.0).unwrap(), seed);
            let rt = reach_sweep(&g, 20.0, BoundaryPolicy::Vacant).unwrap();
            let eta = ancestor_process(&g, 0, 0.0, 20.0, BoundaryPolicy::Vacant).unwrap();
            if rt.contains(0, 0.0) {
                let rec = renewal_times(&eta, &rt, 5.0).unwrap();
                prop_assert!(rec.times.windows(2).all(|w| w[1] - w[0] >= 1.0));
                prop_assert!(rec.times.iter().all(|&t| t <= 15.0));
                for (t, p) in rec.times.iter().zip(&rec.positions) {
                    prop_assert_eq!(eta.position_at(*t), Some(*p));
                    prop_assert!(rt.contains(*p, *t));
                }
            }
        }
    }
}
