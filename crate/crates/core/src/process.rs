//! One-type, multitype and labeled contact processes driven by a Harris
//! system, plus infection-path reachability.
//!
//! Every process uses the same two rules, applied in time order:
//! a recovery mark at `x` empties `x`; an arrow `x -> y` copies the state of
//! `x` onto `y` when `x` is occupied and `y` is vacant. Occupied sites are
//! never overwritten, so types (and labels) never displace each other.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harris::{Event, HarrisWindow, Mark, Rates, Site, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alphabet {
    /// States `{0, 1}`.
    OneType,
    /// States `{0, 1, 2}`.
    MultiType,
}

impl Alphabet {
    pub fn max_state(self) -> u8 {
        match self {
            Alphabet::OneType => 1,
            Alphabet::MultiType => 2,
        }
    }
}

/// What happens outside the simulated window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryPolicy {
    /// Exterior sites keep their initial state forever (never recover) and
    /// act as arrow sources into the window.
    Frozen,
    /// Exterior sites are permanently empty.
    Vacant,
}

/// A finite configuration with constant exterior states.
///
/// `exterior = (left, right)` gives the state of every site left of `x_min`
/// and right of `x_max`; it is only consulted under `BoundaryPolicy::Frozen`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    alphabet: Alphabet,
    x_min: Site,
    states: Vec<u8>,
    exterior: (u8, u8),
}

impl Configuration {
    pub fn new(alphabet: Alphabet, x_min: Site, states: Vec<u8>) -> Result<Self> {
        Self::with_exterior(alphabet, x_min, states, (0, 0))
    }

    pub fn with_exterior(alphabet: Alphabet, x_min: Site, states: Vec<u8>, exterior: (u8, u8)) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidWindow("empty configuration".into()));
        }
        let max = alphabet.max_state();
        if let Some((i, s)) = states.iter().enumerate().find(|(_, &s)| s > max) {
            return Err(Error::Alphabet(format!("state {s} at site {} exceeds {max}", x_min + i as Site)));
        }
        if exterior.0 > max || exterior.1 > max {
            return Err(Error::Alphabet(format!("exterior states {exterior:?} exceed {max}")));
        }
        Ok(Configuration { alphabet, x_min, states, exterior })
    }

    /// Type 1 on `x <= x0`, type 2 on `x > x0`, extended outside the window.
    pub fn heaviside_at(window: &Window, x0: Site) -> Self {
        let states = window.sites().map(|x| if x <= x0 { 1 } else { 2 }).collect();
        Configuration { alphabet: Alphabet::MultiType, x_min: window.x_min, states, exterior: (1, 2) }
    }

    pub fn heaviside(window: &Window) -> Self {
        Self::heaviside_at(window, 0)
    }

    /// Every window site in `state`; the exterior copies it.
    pub fn constant(alphabet: Alphabet, window: &Window, state: u8) -> Result<Self> {
        Self::with_exterior(alphabet, window.x_min, vec![state; window.n_sites()], (state, state))
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn x_min(&self) -> Site {
        self.x_min
    }

    pub fn x_max(&self) -> Site {
        self.x_min + self.states.len() as Site - 1
    }

    pub fn exterior(&self) -> (u8, u8) {
        self.exterior
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State at any site; exterior sites report the exterior state.
    pub fn get(&self, x: Site) -> u8 {
        if x < self.x_min {
            self.exterior.0
        } else if x > self.x_max() {
            self.exterior.1
        } else {
            self.states[(x - self.x_min) as usize]
        }
    }

    pub fn set(&mut self, x: Site, state: u8) -> Result<()> {
        if x < self.x_min || x > self.x_max() {
            return Err(Error::SiteOutOfRange(format!("site {x} outside [{}, {}]", self.x_min, self.x_max())));
        }
        if state > self.alphabet.max_state() {
            return Err(Error::Alphabet(format!("state {state} not in alphabet")));
        }
        self.states[(x - self.x_min) as usize] = state;
        Ok(())
    }

    /// The indicator of `{state != 0}` as a one-type configuration.
    pub fn occupancy(&self) -> Configuration {
        let ind = |s: u8| (s != 0) as u8;
        Configuration {
            alphabet: Alphabet::OneType,
            x_min: self.x_min,
            states: self.states.iter().map(|&s| ind(s)).collect(),
            exterior: (ind(self.exterior.0), ind(self.exterior.1)),
        }
    }

    fn check_window(&self, window: &Window) -> Result<()> {
        if self.x_min != window.x_min || self.x_max() != window.x_max {
            return Err(Error::InvalidWindow(format!(
                "configuration spans [{}, {}] but the window is [{}, {}]",
                self.x_min,
                self.x_max(),
                window.x_min,
                window.x_max
            )));
        }
        Ok(())
    }

    pub fn to_rle_json(&self) -> Result<String> {
        let mut runs: Vec<(u8, usize)> = Vec::new();
        for &s in &self.states {
            match runs.last_mut() {
                Some((v, n)) if *v == s => *n += 1,
                _ => runs.push((s, 1)),
            }
        }
        let rec = RleRecord { alphabet: self.alphabet, x_min: self.x_min, exterior: self.exterior, runs };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_rle_json(s: &str) -> Result<Self> {
        let rec: RleRecord = serde_json::from_str(s)?;
        let mut states = Vec::new();
        for (v, n) in rec.runs {
            states.extend(std::iter::repeat_n(v, n));
        }
        Self::with_exterior(rec.alphabet, rec.x_min, states, rec.exterior)
    }
}

#[derive(Serialize, Deserialize)]
struct RleRecord {
    alphabet: Alphabet,
    x_min: Site,
    exterior: (u8, u8),
    runs: Vec<(u8, usize)>,
}

/// Streaming state of a process on a window: apply events one at a time.
///
/// `T` is the cell type: `u8` for one-type and multitype states, [`Label`]
/// for the labeled process. Exterior sites are read through a function of
/// the coordinate and are never written.
pub struct Sweep<T> {
    x_min: Site,
    cells: Vec<T>,
    vacant: T,
    exterior: Box<dyn Fn(Site) -> T + Send + Sync>,
}

/// Label of the labeled process: `None` is vacant.
pub type Label = Option<Site>;

/// State sweep for `{0, 1}` and `{0, 1, 2}` valued processes.
pub type Evolver = Sweep<u8>;

impl<T: Copy + PartialEq> Sweep<T> {
    #[inline]
    pub fn get(&self, x: Site) -> T {
        let i = x.wrapping_sub(self.x_min) as u32 as usize;
        if i < self.cells.len() {
            self.cells[i]
        } else {
            (self.exterior)(x)
        }
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn x_min(&self) -> Site {
        self.x_min
    }

    pub fn x_max(&self) -> Site {
        self.x_min + self.cells.len() as Site - 1
    }

    /// Applies one event. Returns `(site, old, new)` when a window cell
    /// changed.
    #[inline]
    pub fn apply(&mut self, e: &Event) -> Option<(Site, T, T)> {
        let y = e.target();
        let j = y.wrapping_sub(self.x_min) as u32 as usize;
        if j >= self.cells.len() {
            return None;
        }
        let old = self.cells[j];
        if e.is_recovery() {
            if old == self.vacant {
                return None;
            }
            self.cells[j] = self.vacant;
            return Some((y, old, self.vacant));
        }
        if old != self.vacant {
            return None;
        }
        let src = self.get(e.source());
        if src == self.vacant {
            return None;
        }
        self.cells[j] = src;
        Some((y, old, src))
    }
}

impl Evolver {
    pub fn new(cfg: &Configuration, boundary: BoundaryPolicy) -> Self {
        let (l, r) = match boundary {
            BoundaryPolicy::Frozen => cfg.exterior,
            BoundaryPolicy::Vacant => (0, 0),
        };
        let x_min = cfg.x_min;
        Sweep {
            x_min,
            cells: cfg.states.clone(),
            vacant: 0,
            exterior: Box::new(move |x| if x < x_min { l } else { r }),
        }
    }

    pub fn to_configuration(&self, template: &Configuration) -> Configuration {
        Configuration { states: self.cells.clone(), ..template.clone() }
    }
}

impl Sweep<Label> {
    /// Labeled sweep. Under `Frozen` an exterior site carries its own
    /// coordinate as a label.
    pub fn labeled(labels: &LabelConfiguration, boundary: BoundaryPolicy) -> Self {
        let exterior: Box<dyn Fn(Site) -> Label + Send + Sync> = match boundary {
            BoundaryPolicy::Frozen => Box::new(Some),
            BoundaryPolicy::Vacant => Box::new(|_| None),
        };
        Sweep { x_min: labels.x_min, cells: labels.labels.clone(), vacant: None, exterior }
    }
}

/// One state change of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub time: f64,
    pub site: Site,
    pub state: u8,
}

/// A process path stored as its initial configuration and the ordered
/// list of state changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub deltas: Vec<Delta>,
    pub horizon: f64,
}

impl Trajectory {
    /// Configuration at time `t`, right-continuous: changes at time `t`
    /// are included.
    pub fn state_at(&self, t: f64) -> Configuration {
        let mut cfg = self.initial.clone();
        for d in self.deltas.iter().take_while(|d| d.time <= t) {
            cfg.states[(d.site - cfg.x_min) as usize] = d.state;
        }
        cfg
    }

    pub fn final_state(&self) -> Configuration {
        self.state_at(f64::INFINITY)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,site,new_state")?;
        for d in &self.deltas {
            writeln!(w, "{},{},{}", d.time, d.site, d.state)?;
        }
        Ok(())
    }
}

fn run(h: &HarrisWindow, cfg: &Configuration, boundary: BoundaryPolicy) -> Trajectory {
    let mut ev = Evolver::new(cfg, boundary);
    let mut deltas = Vec::new();
    for e in h.events() {
        if let Some((site, _, state)) = ev.apply(e) {
            deltas.push(Delta { time: e.time, site, state });
        }
    }
    Trajectory { initial: cfg.clone(), deltas, horizon: h.window.t_max }
}

pub fn evolve_onetype(h: &HarrisWindow, zeta0: &Configuration, boundary: BoundaryPolicy) -> Result<Trajectory> {
    if zeta0.alphabet != Alphabet::OneType {
        return Err(Error::Alphabet("one-type evolution needs a {0,1} configuration".into()));
    }
    zeta0.check_window(&h.window)?;
    Ok(run(h, zeta0, boundary))
}

pub fn evolve_multitype(h: &HarrisWindow, xi0: &Configuration, boundary: BoundaryPolicy) -> Result<Trajectory> {
    if xi0.alphabet != Alphabet::MultiType {
        return Err(Error::Alphabet("multitype evolution needs a {0,1,2} configuration".into()));
    }
    xi0.check_window(&h.window)?;
    Ok(run(h, xi0, boundary))
}

/// Runs `xi` and `xi2` on the same events and counts event times at which
/// `{xi = 2} ⊆ {xi2 = 2}` or `{xi = 1} ⊇ {xi2 = 1}` fails at some window
/// site. Both starts, and under `Frozen` both exteriors, must themselves
/// satisfy the inclusions; exterior states never change afterwards.
pub fn coupling_violations(
    h: &HarrisWindow,
    xi: &Configuration,
    xi2: &Configuration,
    boundary: BoundaryPolicy,
) -> Result<usize> {
    for c in [xi, xi2] {
        if c.alphabet != Alphabet::MultiType {
            return Err(Error::Alphabet("coupling check needs multitype configurations".into()));
        }
        c.check_window(&h.window)?;
    }
    let ordered = |a: u8, b: u8| (a != 2 || b == 2) && (b != 1 || a == 1);
    let ext = |c: &Configuration| [c.exterior.0, c.exterior.1];
    if boundary == BoundaryPolicy::Frozen && !ext(xi).iter().zip(ext(xi2).iter()).all(|(&a, &b)| ordered(a, b)) {
        return Err(Error::InvalidArgument("exterior states are not ordered".into()));
    }
    if !xi.states.iter().zip(&xi2.states).all(|(&a, &b)| ordered(a, b)) {
        return Err(Error::InvalidArgument("initial configurations are not ordered".into()));
    }
    let mut a = Evolver::new(xi, boundary);
    let mut b = Evolver::new(xi2, boundary);
    let mut bad = 0;
    for e in h.events() {
        a.apply(e);
        b.apply(e);
        if !a.cells().iter().zip(b.cells()).all(|(&p, &q)| ordered(p, q)) {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Integer labels over a window; `None` marks a vacant site.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConfiguration {
    pub x_min: Site,
    pub labels: Vec<Label>,
}

impl LabelConfiguration {
    /// Every site labeled by its own coordinate.
    pub fn identity(window: &Window) -> Self {
        LabelConfiguration { x_min: window.x_min, labels: window.sites().map(Some).collect() }
    }

    pub fn get(&self, x: Site) -> Label {
        self.labels[(x - self.x_min) as usize]
    }

    pub fn x_max(&self) -> Site {
        self.x_min + self.labels.len() as Site - 1
    }
}

/// Runs the labeled process to the horizon of `h`. Labels must be
/// distinct, so that the label found at a site identifies the starting
/// point of the unique path that carried it there.
pub fn evolve_labeled(
    h: &HarrisWindow,
    labels0: &LabelConfiguration,
    boundary: BoundaryPolicy,
) -> Result<LabelConfiguration> {
    let mut seen = HashSet::new();
    for l in labels0.labels.iter().flatten() {
        if !seen.insert(*l) {
            return Err(Error::DuplicateLabel(*l as i64));
        }
    }
    if boundary == BoundaryPolicy::Frozen {
        if let Some(l) = seen.iter().find(|&&l| l < h.window.x_min || l > h.window.x_max) {
            // exterior sites carry their own coordinates under this policy
            return Err(Error::DuplicateLabel(*l as i64));
        }
    }
    evolve_labels_unchecked(h, labels0, boundary)
}

/// Labeled evolution without the distinctness check; with repeated labels
/// the output only records which label arrived, not where it started.
pub fn evolve_labels_unchecked(
    h: &HarrisWindow,
    labels0: &LabelConfiguration,
    boundary: BoundaryPolicy,
) -> Result<LabelConfiguration> {
    if labels0.x_min != h.window.x_min || labels0.x_max() != h.window.x_max {
        return Err(Error::InvalidWindow("label configuration does not match the window".into()));
    }
    let mut sweep = Sweep::labeled(labels0, boundary);
    for e in h.events() {
        sweep.apply(e);
    }
    Ok(LabelConfiguration { x_min: labels0.x_min, labels: sweep.cells })
}

/// Endpoint set of a reachability query.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Point(Site, f64),
    Sites(&'a [Site], f64),
    /// `Z x {t}`: any site at time `t`.
    Anywhere(f64),
}

impl Target<'_> {
    fn time(&self) -> f64 {
        match *self {
            Target::Point(_, t) | Target::Sites(_, t) | Target::Anywhere(t) => t,
        }
    }
}

/// Occupancy set of infection paths, swept forward through the events.
/// Sites up to `R` outside the window are tracked; under `Frozen` they
/// never recover, under `Vacant` they can never be entered.
struct PathSweep {
    lo: Site,
    alive: Vec<bool>,
    count: usize,
    x_min: Site,
    x_max: Site,
    frozen: bool,
}

impl PathSweep {
    fn new(h: &HarrisWindow, boundary: BoundaryPolicy) -> Self {
        let r = h.rates.range() as Site;
        let w = h.window;
        PathSweep {
            lo: w.x_min - r,
            alive: vec![false; w.n_sites() + 2 * r as usize],
            count: 0,
            x_min: w.x_min,
            x_max: w.x_max,
            frozen: boundary == BoundaryPolicy::Frozen,
        }
    }

    fn admissible(&self, x: Site) -> bool {
        (x >= self.x_min && x <= self.x_max) || self.frozen
    }

    fn insert(&mut self, x: Site) {
        let i = (x - self.lo) as usize;
        if !self.alive[i] {
            self.alive[i] = true;
            self.count += 1;
        }
    }

    fn is_alive(&self, x: Site) -> bool {
        x >= self.lo && ((x - self.lo) as usize) < self.alive.len() && self.alive[(x - self.lo) as usize]
    }

    /// Applies an event at time `t > start`, or a recovery at `t >= start`.
    fn apply(&mut self, e: &Event) {
        match e.mark() {
            Mark::Recovery(z) => {
                let i = (z - self.lo) as usize;
                if self.alive[i] {
                    self.alive[i] = false;
                    self.count -= 1;
                }
            }
            Mark::Arrow(a, b) => {
                if self.is_alive(a) && self.admissible(b) {
                    self.insert(b);
                }
            }
        }
    }
}

fn check_site(h: &HarrisWindow, x: Site, boundary: BoundaryPolicy) -> Result<()> {
    let r = h.rates.range() as Site;
    let w = h.window;
    let ok = match boundary {
        BoundaryPolicy::Vacant => w.contains(x),
        BoundaryPolicy::Frozen => x >= w.x_min - r && x <= w.x_max + r,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::SiteOutOfRange(format!("site {x} outside the window")))
    }
}

/// Whether an infection path exists from `from` to `to`.
///
/// A path may not use an arrow at its starting time, is killed by a
/// recovery at its current site at any time of the closed interval, and may
/// use an arrow at its final time. A point is connected to itself.
pub fn reachable(h: &HarrisWindow, from: (Site, f64), to: Target<'_>, boundary: BoundaryPolicy) -> Result<bool> {
    let (x, t0) = from;
    let t1 = to.time();
    if !(t0 >= 0.0 && t0 <= t1 && t1 <= h.window.t_max) {
        return Err(Error::TimeOutOfRange(format!(
            "need 0 <= {t0} <= {t1} <= {}",
            h.window.t_max
        )));
    }
    check_site(h, x, boundary)?;
    if t0 == t1 {
        return Ok(match to {
            Target::Point(y, _) => y == x,
            Target::Sites(ys, _) => ys.contains(&x),
            Target::Anywhere(_) => true,
        });
    }
    let mut sweep = PathSweep::new(h, boundary);
    sweep.insert(x);
    let start = h.events().partition_point(|e| e.time < t0);
    for e in &h.events()[start..] {
        if e.time > t1 {
            break;
        }
        if e.time == t0 && !e.is_recovery() {
            continue;
        }
        sweep.apply(e);
        if sweep.count == 0 {
            return Ok(false);
        }
    }
    Ok(match to {
        Target::Point(y, _) => sweep.is_alive(y),
        Target::Sites(ys, _) => ys.iter().any(|&y| sweep.is_alive(y)),
        Target::Anywhere(_) => sweep.count > 0,
    })
}

/// Outcome of a survival query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Survival {
    DiedAt(f64),
    AliveAtHorizon,
    /// The lazy runner stopped early because the population reached its
    /// size cap at this time.
    Established(f64),
}

/// Last time the infection started from `A x {0}` is alive, or
/// `AliveAtHorizon`.
pub fn survival_time(h: &HarrisWindow, a: &[Site], boundary: BoundaryPolicy) -> Result<Survival> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty initial set".into()));
    }
    let mut sweep = PathSweep::new(h, boundary);
    for &x in a {
        if !h.window.contains(x) {
            return Err(Error::SiteOutOfRange(format!("site {x} outside the window")));
        }
        sweep.insert(x);
    }
    for e in h.events() {
        sweep.apply(e);
        if sweep.count == 0 {
            return Ok(Survival::DiedAt(e.time));
        }
    }
    Ok(Survival::AliveAtHorizon)
}

/// The one-type process on all of Z, generating only the clocks of
/// occupied sites: each occupied site carries a rate-1 recovery and `2R`
/// outgoing arrows at rate `lambda`; clocks at vacant sites cannot change
/// the process and are never drawn. The state is Markov, so a run may be
/// paused at any time, cloned, and resumed with fresh randomness.
#[derive(Debug, Clone)]
pub struct LazyContact {
    range: Site,
    per_site: f64,
    occupied: Vec<Site>,
    index: HashMap<Site, usize>,
    time: f64,
}

impl LazyContact {
    pub fn new(rates: &Rates, a: &[Site]) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidArgument("empty initial set".into()));
        }
        let mut lc = LazyContact {
            range: rates.range() as Site,
            per_site: rates.rate_per_site(),
            occupied: Vec::new(),
            index: HashMap::new(),
            time: 0.0,
        };
        for &x in a {
            lc.insert(x);
        }
        Ok(lc)
    }

    fn insert(&mut self, x: Site) {
        if let Entry::Vacant(v) = self.index.entry(x) {
            v.insert(self.occupied.len());
            self.occupied.push(x);
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn population(&self) -> usize {
        self.occupied.len()
    }

    /// Runs until extinction, until `cap` sites are occupied, or until time
    /// `until`; returns `None` in the last case, with the clock set to
    /// `until`.
    pub fn advance<G: Rng>(&mut self, until: f64, cap: usize, rng: &mut G) -> Option<Survival> {
        if self.occupied.is_empty() {
            return Some(Survival::DiedAt(self.time));
        }
        let p_rec = 1.0 / self.per_site;
        loop {
            if self.occupied.len() >= cap {
                return Some(Survival::Established(self.time));
            }
            let gap: f64 = rng.sample(rand_distr::Exp1);
            let t = self.time + gap / (self.per_site * self.occupied.len() as f64);
            if t > until {
                self.time = until;
                return None;
            }
            self.time = t;
            let i = rng.random_range(0..self.occupied.len());
            let x = self.occupied[i];
            if rng.random::<f64>() < p_rec {
                self.occupied.swap_remove(i);
                self.index.remove(&x);
                if let Some(&moved) = self.occupied.get(i) {
                    self.index.insert(moved, i);
                }
                if self.occupied.is_empty() {
                    return Some(Survival::DiedAt(t));
                }
            } else {
                let mut d = rng.random_range(-self.range..self.range);
                if d >= 0 {
                    d += 1;
                }
                self.insert(x + d);
            }
        }
    }
}

/// Survival of the one-type process from `A x {0}` on all of Z via
/// [`LazyContact`]. Stops with `Established` once `cap` sites are occupied.
pub fn survival_time_lazy<G: Rng>(rates: &Rates, a: &[Site], horizon: f64, cap: usize, rng: &mut G) -> Result<Survival> {
    let mut lc = LazyContact::new(rates, a)?;
    Ok(lc.advance(horizon, cap, rng).unwrap_or(Survival::AliveAtHorizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harris::quantize_time;
    use proptest::prelude::*;
    use rand::Rng;

    fn rates() -> Rates {
        Rates::new(2.0, 1).unwrap()
    }

    fn fixture(x_min: Site, x_max: Site, t_max: f64, events: Vec<Event>) -> HarrisWindow {
        HarrisWindow::from_events(rates(), Window::new(x_min, x_max, t_max).unwrap(), events).unwrap()
    }

    #[test]
    fn onetype_hand_traces() {
        let h = fixture(0, 1, 1.0, vec![Event::arrow(0, 1, 0.5)]);
        let z0 = Configuration::new(Alphabet::OneType, 0, vec![1, 0]).unwrap();
        let tr = evolve_onetype(&h, &z0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(tr.state_at(1.0).states(), &[1, 1]);
        assert_eq!(tr.state_at(0.4).states(), &[1, 0]);

        let h = fixture(0, 1, 1.0, vec![Event::recovery(0, 0.2), Event::arrow(1, 0, 0.4)]);
        let z0 = Configuration::new(Alphabet::OneType, 0, vec![1, 1]).unwrap();
        let tr = evolve_onetype(&h, &z0, BoundaryPolicy::Vacant).unwrap();
        assert_eq!(tr.state_at(0.1).get(0), 1);
        assert_eq!(tr.state_at(0.2).get(0), 0);
        assert_eq!(tr.state_at(0.39).get(0), 0);
        assert_eq!(tr.state_at(quantize_time(0.4)).get(0), 1);
    }

    #[test]
    fn no_events_is_identity() {
        let h = fixture(-3, 3, 2.0, vec![]);
        let xi = Configuration::heaviside(&h.window);
        let tr = evolve_multitype(&h, &xi, BoundaryPolicy::Frozen).unwrap();
        assert_eq!(tr.final_state(), xi);
        let lab = evolve_labeled(&h, &LabelConfiguration::identity(&h.window), BoundaryPolicy::Vacant).unwrap();
        assert_eq!(lab, LabelConfiguration::identity(&h.window));
    }

    #[test]
    fn multitype_hand_traces() {
        let xi = Configuration::new(Alphabet::MultiType, 0, vec![1, 2]).unwrap();
        let h = fixture(0, 1, 1.0, vec![Event::arrow(0, 1, 0.5)]);
        assert_eq!(evolve_multitype(&h, &xi, BoundaryPolicy::Vacant).unwrap().final_state(), xi);
        let h = fixture(0, 1, 1.0, vec![Event::recovery(1, 0.3), Event::arrow(0, 1, 0.6)]);
        let out = evolve_multitype(&h, &xi, BoundaryPolicy::Vacant).unwrap().final_state();
        assert_eq!(out.states(), &[1, 1]);
    }

    #[test]
    fn labeled_hand_traces() {
        let h = fixture(-1, 1, 1.0, vec![Event::recovery(0, 0.5)]);
        let out = evolve_labeled(&h, &LabelConfiguration::identity(&h.window), BoundaryPolicy::Vacant).unwrap();
        assert_eq!(out.get(0), None);
        let h = fixture(-1, 1, 1.0, vec![Event::recovery(0, 0.3), Event::arrow(1, 0, 0.6)]);
        let out = evolve_labeled(&h, &LabelConfiguration::identity(&h.window), BoundaryPolicy::Vacant).unwrap();
        assert_eq!(out.get(0), Some(1));
    }

    #[test]
    fn frozen_exterior_feeds_the_window() {
        let h = fixture(0, 2, 1.0, vec![Event::recovery(0, 0.1), Event::arrow(-1, 0, 0.2)]);
        let xi = Configuration::heaviside_at(&h.window, 0);
        let out = evolve_multitype(&h, &xi, BoundaryPolicy::Frozen).unwrap().final_state();
        assert_eq!(out.get(0), 1);
        let out = evolve_multitype(&h, &xi, BoundaryPolicy::Vacant).unwrap().final_state();
        assert_eq!(out.get(0), 0);
        let lab = evolve_labeled(&h, &LabelConfiguration::identity(&h.window), BoundaryPolicy::Frozen).unwrap();
        assert_eq!(lab.get(0), Some(-1));
    }

    #[test]
    fn rejects_alphabet_and_label_errors() {
        let w = Window::new(0, 1, 1.0).unwrap();
        let h = HarrisWindow::sample(rates(), w, 1);
        let xi = Configuration::new(Alphabet::MultiType, 0, vec![1, 2]).unwrap();
        assert!(evolve_onetype(&h, &xi, BoundaryPolicy::Vacant).is_err());
        assert!(Configuration::new(Alphabet::OneType, 0, vec![2]).is_err());
        let dup = LabelConfiguration { x_min: 0, labels: vec![Some(4), Some(4)] };
        assert!(matches!(evolve_labeled(&h, &dup, BoundaryPolicy::Vacant), Err(Error::DuplicateLabel(4))));
    }

    #[test]
    fn reachability_conventions() {
        let h = fixture(-2, 2, 1.0, vec![]);
        assert!(reachable(&h, (0, 0.3), Target::Point(0, 0.3), BoundaryPolicy::Vacant).unwrap());
        assert!(reachable(&h, (0, 0.0), Target::Point(0, 1.0), BoundaryPolicy::Vacant).unwrap());
        assert!(!reachable(&h, (0, 0.0), Target::Point(1, 1.0), BoundaryPolicy::Vacant).unwrap());
        let h = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.5)]);
        assert!(!reachable(&h, (0, 0.0), Target::Point(0, 1.0), BoundaryPolicy::Vacant).unwrap());
        // marks at the endpoints
        let h = fixture(-2, 2, 1.0, vec![Event::arrow(0, 1, 0.5)]);
        assert!(!reachable(&h, (0, 0.5), Target::Point(1, 1.0), BoundaryPolicy::Vacant).unwrap());
        assert!(reachable(&h, (0, 0.0), Target::Point(1, 0.5), BoundaryPolicy::Vacant).unwrap());
        let h = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.5)]);
        assert!(!reachable(&h, (0, 0.5), Target::Anywhere(1.0), BoundaryPolicy::Vacant).unwrap());
        assert!(!reachable(&h, (0, 0.0), Target::Anywhere(0.5), BoundaryPolicy::Vacant).unwrap());
        assert!(reachable(&h, (0, 0.0), Target::Point(1, 0.2), BoundaryPolicy::Vacant).is_ok());
        assert!(reachable(&h, (0, 0.6), Target::Point(1, 0.2), BoundaryPolicy::Vacant).is_err());
    }

    #[test]
    fn survival_fixtures() {
        let h = fixture(-2, 2, 1.0, vec![]);
        assert_eq!(survival_time(&h, &[0], BoundaryPolicy::Vacant).unwrap(), Survival::AliveAtHorizon);
        let h = fixture(-2, 2, 1.0, vec![Event::recovery(0, 0.7)]);
        assert_eq!(
            survival_time(&h, &[0], BoundaryPolicy::Vacant).unwrap(),
            Survival::DiedAt(quantize_time(0.7))
        );
        assert!(survival_time(&h, &[], BoundaryPolicy::Vacant).is_err());
    }

    #[test]
    fn lazy_survival_matches_windowed_law_roughly() {
        // subcritical-ish rates so that both runners finish quickly
        let r = Rates::new(0.8, 1).unwrap();
        let n = 4000;
        let mut rng = crate::seeds::stream_rng(5, 0);
        let lazy = (0..n)
            .filter(|_| matches!(survival_time_lazy(&r, &[0], 3.0, usize::MAX, &mut rng).unwrap(), Survival::AliveAtHorizon))
            .count();
        let win = (0..n)
            .filter(|&k| {
                let h = HarrisWindow::sample_stream(r, Window::new(-40, 40, 3.0).unwrap(), 6, k);
                survival_time(&h, &[0], BoundaryPolicy::Vacant).unwrap() == Survival::AliveAtHorizon
            })
            .count();
        let (p, q) = (lazy as f64 / n as f64, win as f64 / n as f64);
        let se = (p * (1.0 - p) / n as f64 * 2.0).sqrt();
        assert!((p - q).abs() < 4.0 * se, "lazy {p} vs windowed {q}");
    }

    #[test]
    fn coupling_rejects_unordered_starts() {
        let w = Window::new(0, 2, 1.0).unwrap();
        let h = fixture(0, 2, 1.0, vec![]);
        let a = Configuration::new(Alphabet::MultiType, 0, vec![2, 1, 0]).unwrap();
        let b = Configuration::new(Alphabet::MultiType, 0, vec![1, 1, 0]).unwrap();
        assert!(coupling_violations(&h, &a, &b, BoundaryPolicy::Vacant).is_err());
        assert_eq!(coupling_violations(&h, &b, &a, BoundaryPolicy::Vacant).unwrap(), 0);
        let one = Configuration::constant(Alphabet::OneType, &w, 1).unwrap();
        assert!(coupling_violations(&h, &one, &one, BoundaryPolicy::Vacant).is_err());
    }

    #[test]
    fn paused_lazy_runs_resume() {
        let r = rates();
        let mut rng = crate::seeds::stream_rng(3, 0);
        let mut lc = LazyContact::new(&r, &[0, 1]).unwrap();
        assert_eq!(lc.population(), 2);
        let out = lc.advance(0.5, usize::MAX, &mut rng);
        if out.is_none() {
            assert_eq!(lc.time(), 0.5);
            let mut copy = lc.clone();
            let _ = copy.advance(1.0, usize::MAX, &mut rng);
            assert!(copy.time() >= 0.5);
        }
        let mut dead = LazyContact::new(&r, &[0]).unwrap();
        dead.occupied.clear();
        assert_eq!(dead.advance(1.0, 10, &mut rng), Some(Survival::DiedAt(0.0)));
        assert!(LazyContact::new(&r, &[]).is_err());
    }

    #[test]
    fn rle_round_trip() {
        let mut xi = Configuration::heaviside(&Window::new(-5, 5, 1.0).unwrap());
        xi.set(2, 0).unwrap();
        xi.set(-3, 2).unwrap();
        let back = Configuration::from_rle_json(&xi.to_rle_json().unwrap()).unwrap();
        assert_eq!(back, xi);
    }

    #[test]
    fn trajectory_csv_header() {
        let h = fixture(0, 1, 1.0, vec![Event::arrow(0, 1, 0.5)]);
        let z0 = Configuration::new(Alphabet::OneType, 0, vec![1, 0]).unwrap();
        let mut buf = Vec::new();
        evolve_onetype(&h, &z0, BoundaryPolicy::Vacant).unwrap().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "time,site,new_state\n0.5,1,1\n");
    }

    fn random_config(seed: u64, w: &Window, alphabet: Alphabet) -> Configuration {
        let mut rng = crate::seeds::stream_rng(seed, 99);
        let max = alphabet.max_state();
        let states = w.sites().map(|_| rng.random_range(0..=max)).collect();
        let ext = (rng.random_range(0..=max), rng.random_range(0..=max));
        Configuration::with_exterior(alphabet, w.x_min, states, ext).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn colorblind_identity(seed in any::<u64>(), frozen in any::<bool>()) {
            let w = Window::new(-10, 10, 4.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let b = if frozen { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant };
            let xi = random_config(seed, &w, Alphabet::MultiType);
            let mut multi = Evolver::new(&xi, b);
            let mut one = Evolver::new(&xi.occupancy(), b);
            for e in h.events() {
                multi.apply(e);
                one.apply(e);
                prop_assert!(multi.cells().iter().zip(one.cells()).all(|(&a, &b)| (a != 0) as u8 == b));
            }
        }

        #[test]
        fn monotone_coupling(seed in any::<u64>(), frozen in any::<bool>()) {
            let b = if frozen { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant };
            let w = Window::new(-6, 6, 4.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let mut rng = crate::seeds::stream_rng(seed, 9);
            let lo: Vec<u8> = w.sites().map(|_| rng.random_range(0..=2)).collect();
            // raising 1 -> 0 -> 2 keeps the pair ordered
            let hi: Vec<u8> = lo.iter().map(|&s| match (s, rng.random_range(0..3)) {
                (1, 1) => 0,
                (1, 2) | (0, 2) => 2,
                _ => s,
            }).collect();
            let a = Configuration::with_exterior(Alphabet::MultiType, w.x_min, lo, (1, 2)).unwrap();
            let c = Configuration::with_exterior(Alphabet::MultiType, w.x_min, hi, (1, 2)).unwrap();
            prop_assert_eq!(coupling_violations(&h, &a, &c, b).unwrap(), 0);
        }

        #[test]
        fn additivity(seed in any::<u64>()) {
            let w = Window::new(-8, 8, 3.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let a = random_config(seed, &w, Alphabet::OneType);
            let b = random_config(seed ^ 1, &w, Alphabet::OneType);
            let union = Configuration::new(
                Alphabet::OneType, w.x_min,
                a.states().iter().zip(b.states()).map(|(x, y)| x | y).collect()).unwrap();
            let fa = evolve_onetype(&h, &a, BoundaryPolicy::Vacant).unwrap().final_state();
            let fb = evolve_onetype(&h, &b, BoundaryPolicy::Vacant).unwrap().final_state();
            let fu = evolve_onetype(&h, &union, BoundaryPolicy::Vacant).unwrap().final_state();
            let joined: Vec<u8> = fa.states().iter().zip(fb.states()).map(|(x, y)| x | y).collect();
            prop_assert_eq!(fu.states(), &joined[..]);
        }

        #[test]
        fn equal_labels_collapse_to_occupancy(seed in any::<u64>()) {
            let w = Window::new(-8, 8, 3.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let z = random_config(seed, &w, Alphabet::OneType);
            let labels = LabelConfiguration {
                x_min: w.x_min,
                labels: z.states().iter().map(|&s| (s == 1).then_some(7)).collect(),
            };
            let lab = evolve_labels_unchecked(&h, &labels, BoundaryPolicy::Vacant).unwrap();
            let one = evolve_onetype(&h, &z, BoundaryPolicy::Vacant).unwrap().final_state();
            for (l, &s) in lab.labels.iter().zip(one.states()) {
                prop_assert_eq!(l.is_some(), s == 1);
            }
        }

        #[test]
        fn onetype_matches_path_reachability(seed in any::<u64>()) {
            let w = Window::new(-6, 6, 2.0).unwrap();
            let h = HarrisWindow::sample(rates(), w, seed);
            let z = random_config(seed, &w, Alphabet::OneType);
            let fin = evolve_onetype(&h, &z, BoundaryPolicy::Vacant).unwrap().final_state();
            let sources: Vec<Site> = w.sites().filter(|&x| z.get(x) == 1).collect();
            for y in w.sites() {
                let hit = sources.iter().any(|&x| reachable(&h, (x, 0.0), Target::Point(y, w.t_max), BoundaryPolicy::Vacant).unwrap());
                prop_assert_eq!(hit, fin.get(y) == 1);
            }
        }
    }
}
