//! Interface observables of the multitype process started from the
//! heaviside configuration, configuration classifiers, and the
//! regeneration coupling.
//!
//! `r` is the rightmost 1 and `l` the leftmost 2. The interface position
//! `i = (r + l) / 2` is a half-integer and is stored exactly as
//! `twice_i = r + l`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harris::{Event, EventStream, HarrisWindow, Rates, Site, Window};
use crate::process::{BoundaryPolicy, Configuration, Evolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InterfaceState {
    /// Rightmost site in state 1.
    pub r: Site,
    /// Leftmost site in state 2.
    pub l: Site,
    pub twice_i: i64,
    /// `min(r, l)`.
    pub m: Site,
    /// `max(r, l)`.
    pub big_m: Site,
}

impl InterfaceState {
    pub fn from_edges(r: Site, l: Site) -> Self {
        InterfaceState { r, l, twice_i: r as i64 + l as i64, m: r.min(l), big_m: r.max(l) }
    }

    pub fn i(&self) -> f64 {
        self.twice_i as f64 / 2.0
    }

    /// `floor(i)`, computed on the exact representation.
    pub fn floor_i(&self) -> Site {
        self.twice_i.div_euclid(2) as Site
    }

    pub fn width(&self) -> Site {
        (self.r - self.l).abs()
    }
}

fn rightmost(xi: &Configuration, state: u8) -> Option<Site> {
    (xi.x_min()..=xi.x_max()).rev().find(|&x| xi.get(x) == state)
}

fn leftmost(xi: &Configuration, state: u8) -> Option<Site> {
    (xi.x_min()..=xi.x_max()).find(|&x| xi.get(x) == state)
}

/// Interface edges of a configuration whose 1s extend to the far left and
/// whose 2s extend to the far right. Exterior states count: with exterior
/// `(1, 2)` and no 1 inside the window, `r = x_min - 1`.
pub fn edges(xi: &Configuration) -> Result<InterfaceState> {
    let (left, right) = xi.exterior();
    if right == 1 || left == 2 {
        return Err(Error::NotInOmega("infinitely many strays beyond the window".into()));
    }
    let r = rightmost(xi, 1)
        .or((left == 1).then(|| xi.x_min() - 1))
        .ok_or_else(|| Error::NotInOmega("no site in state 1".into()))?;
    let l = leftmost(xi, 2)
        .or((right == 2).then(|| xi.x_max() + 1))
        .ok_or_else(|| Error::NotInOmega("no site in state 2".into()))?;
    Ok(InterfaceState::from_edges(r, l))
}

/// `X^(0) = m` followed by the next `k` occupied sites to its right.
pub fn gap_positions(xi: &Configuration, k: usize) -> Result<Vec<Site>> {
    let e = edges(xi)?;
    let mut out = vec![e.m];
    let mut x = e.m;
    while out.len() <= k {
        x += 1;
        if x > xi.x_max() {
            return Err(Error::WindowTooSmall(format!("fewer than {k} occupied sites right of {}", e.m)));
        }
        if xi.get(x) != 0 {
            out.push(x);
        }
    }
    Ok(out)
}

/// Membership in `Gamma_{S,L}`: some `a < b` with `b - a <= L`, both edges
/// in `(a, b)`, state 1 throughout `[a - S, a]` and state 2 throughout
/// `[b, b + S]`.
pub fn in_gamma(xi: &Configuration, s: Site, l: Site) -> Result<bool> {
    if s < 0 || l < 1 {
        return Err(Error::InvalidArgument(format!("need S >= 0 and L >= 1, got {s}, {l}")));
    }
    let e = edges(xi)?;
    let (a_lo, a_hi) = (e.big_m + 1 - l, e.m - 1);
    if a_lo > a_hi {
        return Ok(false);
    }
    let b_hi = a_hi + l;
    if a_lo - s < xi.x_min() || b_hi + s > xi.x_max() {
        return Err(Error::WindowTooSmall(format!(
            "isolation segments need [{}, {}] inside the window",
            a_lo - s,
            b_hi + s
        )));
    }
    // run[x] = length of the constant run of `state` ending (or starting) at x
    let x0 = xi.x_min();
    let n = xi.len();
    let mut ones_left = vec![0 as Site; n];
    for i in 0..n {
        if xi.states()[i] == 1 {
            ones_left[i] = if i > 0 { ones_left[i - 1] + 1 } else { 1 };
        }
    }
    let mut twos_right = vec![0 as Site; n];
    for i in (0..n).rev() {
        if xi.states()[i] == 2 {
            twos_right[i] = if i + 1 < n { twos_right[i + 1] + 1 } else { 1 };
        }
    }
    for a in a_lo..=a_hi {
        if ones_left[(a - x0) as usize] < s + 1 {
            continue;
        }
        for b in (e.big_m + 1)..=(a + l) {
            if twos_right[(b - x0) as usize] >= s + 1 {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Direct enumeration of every `(a, b)` whose isolation segments fit in the
/// window.
pub fn in_gamma_brute(xi: &Configuration, s: Site, l: Site) -> Result<bool> {
    let e = edges(xi)?;
    for a in xi.x_min()..=xi.x_max() {
        for b in (a + 1)..=(a + l) {
            if a - s < xi.x_min() || b + s > xi.x_max() {
                continue;
            }
            let inside = |x: Site| a < x && x < b;
            if inside(e.r)
                && inside(e.l)
                && (a - s..=a).all(|x| xi.get(x) == 1)
                && (b..=b + s).all(|x| xi.get(x) == 2)
            {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Membership in `Pi_{k,L}`: at least `k` ones in `[m - L, m)`, at least
/// `k` twos in `(M, M + L]`, and `M - m <= L`.
pub fn in_pi(xi: &Configuration, k: usize, l: Site) -> Result<bool> {
    if (l as i64) < k as i64 {
        return Err(Error::InvalidArgument(format!("need L >= k, got L = {l}, k = {k}")));
    }
    let e = edges(xi)?;
    if e.big_m - e.m > l {
        return Ok(false);
    }
    let ones = (e.m - l..e.m).filter(|&x| xi.get(x) == 1).count();
    if ones < k {
        return Ok(false);
    }
    let twos = (e.big_m + 1..=e.big_m + l).filter(|&x| xi.get(x) == 2).count();
    Ok(twos >= k)
}

/// Counting oracle for [`in_pi`], sweeping the whole window once.
pub fn in_pi_brute(xi: &Configuration, k: usize, l: Site) -> Result<bool> {
    if (l as i64) < k as i64 {
        return Err(Error::InvalidArgument(format!("need L >= k, got L = {l}, k = {k}")));
    }
    let e = edges(xi)?;
    let (mut ones, mut twos) = (0, 0);
    for x in (xi.x_min() - l)..=(xi.x_max() + l) {
        let v = xi.get(x);
        if v == 1 && x >= e.m - l && x < e.m {
            ones += 1;
        }
        if v == 2 && x > e.big_m && x <= e.big_m + l {
            twos += 1;
        }
    }
    Ok(ones >= k && twos >= k && e.big_m - e.m <= l)
}

/// Multitype state with frozen exterior `(1, 2)` and incrementally
/// maintained edges.
pub struct EdgeTracker {
    ev: Evolver,
    r: Site,
    l: Site,
    range: Site,
}

impl EdgeTracker {
    pub fn new(xi: &Configuration, range: u32) -> Result<Self> {
        if xi.exterior() != (1, 2) {
            return Err(Error::NotInOmega("edge tracking needs exterior states (1, 2)".into()));
        }
        let e = edges(xi)?;
        Ok(EdgeTracker { ev: Evolver::new(xi, BoundaryPolicy::Frozen), r: e.r, l: e.l, range: range as Site })
    }

    pub fn heaviside_at(window: &Window, x0: Site, range: u32) -> Self {
        Self::new(&Configuration::heaviside_at(window, x0), range).expect("heaviside is in the interface class")
    }

    #[inline]
    pub fn apply(&mut self, e: &Event) {
        if let Some((y, old, new)) = self.ev.apply(e) {
            match (old, new) {
                (1, 0) if y == self.r => {
                    let mut x = y - 1;
                    while self.ev.get(x) != 1 {
                        x -= 1;
                    }
                    self.r = x;
                }
                (2, 0) if y == self.l => {
                    let mut x = y + 1;
                    while self.ev.get(x) != 2 {
                        x += 1;
                    }
                    self.l = x;
                }
                (0, 1) if y > self.r => self.r = y,
                (0, 2) if y < self.l => self.l = y,
                _ => {}
            }
        }
    }

    pub fn state(&self) -> InterfaceState {
        InterfaceState::from_edges(self.r, self.l)
    }

    /// False when a 1 lies within range of the right edge of the window or
    /// a 2 within range of the left edge, where the frozen exterior may have
    /// distorted the edges.
    pub fn omega_ok(&self) -> bool {
        self.r <= self.ev.x_max() - self.range && self.l >= self.ev.x_min() + self.range
    }

    pub fn get(&self, x: Site) -> u8 {
        self.ev.get(x)
    }
}

/// Interface states sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterfaceTrace {
    pub times: Vec<f64>,
    pub states: Vec<InterfaceState>,
    pub omega_ok: Vec<bool>,
}

impl InterfaceTrace {
    pub fn at(&self, t: f64) -> Option<(InterfaceState, bool)> {
        let k = self.times.iter().position(|&s| s == t)?;
        Some((self.states[k], self.omega_ok[k]))
    }

    pub fn write_csv<W: Write>(&self, rep: u64, mut w: W, header: bool) -> Result<()> {
        if header {
            writeln!(w, "rep,t,r,l,twice_i,omega_ok")?;
        }
        for ((t, s), ok) in self.times.iter().zip(&self.states).zip(&self.omega_ok) {
            writeln!(w, "{rep},{t},{},{},{},{}", s.r, s.l, s.twice_i, *ok as u8)?;
        }
        Ok(())
    }
}

/// Distance between an interface and its regenerated copy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingResult {
    pub s: f64,
    /// Centre `floor(i_s)` of the regenerated heaviside start.
    pub x: Site,
    pub initial_distance: f64,
    pub sup_distance: f64,
    pub series: Vec<(f64, f64)>,
}

fn check_grid(times: &[f64], t_max: f64) -> Result<()> {
    if times.windows(2).any(|w| w[0] >= w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument("sample times must be increasing and nonnegative".into()));
    }
    if times.last().is_some_and(|&t| t > t_max) {
        return Err(Error::WindowTooSmall(format!("sample time beyond the window horizon {t_max}")));
    }
    Ok(())
}

/// Regeneration request for a joint sweep: at time `s` a copy restarts
/// from the heaviside configuration centred at `floor(i_s)` and is compared
/// with the original at every sample time in `[s, until]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegenSpec {
    pub s: f64,
    pub until: f64,
}

struct Copy_ {
    spec: RegenSpec,
    tracker: Option<EdgeTracker>,
    result: Option<CouplingResult>,
}

/// Heaviside run over an event stream, sampling the interface on `times`
/// and carrying the requested regenerated copies along the same events.
pub fn run_heaviside_events<I>(
    events: I,
    window: &Window,
    range: u32,
    times: &[f64],
    regen: &[RegenSpec],
) -> Result<(InterfaceTrace, Vec<CouplingResult>)>
where
    I: IntoIterator<Item = Event>,
{
    check_grid(times, window.t_max)?;
    if !window.contains(0) || !window.contains(1) {
        return Err(Error::WindowTooSmall("window must contain sites 0 and 1".into()));
    }
    for g in regen {
        if !times.contains(&g.s) || g.until < g.s {
            return Err(Error::InvalidArgument(format!("regeneration time {} is not a sample time", g.s)));
        }
    }
    let mut main = EdgeTracker::heaviside_at(window, 0, range);
    let mut copies: Vec<Copy_> = regen.iter().map(|&spec| Copy_ { spec, tracker: None, result: None }).collect();
    let mut trace = InterfaceTrace { times: Vec::new(), states: Vec::new(), omega_ok: Vec::new() };
    let mut j = 0;
    let sample = |j: usize, main: &EdgeTracker, copies: &mut [Copy_], trace: &mut InterfaceTrace| -> Result<()> {
        let t = times[j];
        let st = main.state();
        trace.times.push(t);
        trace.states.push(st);
        trace.omega_ok.push(main.omega_ok());
        for c in copies.iter_mut() {
            if c.spec.s == t {
                if !main.omega_ok() {
                    return Err(Error::WindowTooSmall(format!("interface undefined at regeneration time {t}")));
                }
                let x = st.floor_i();
                c.tracker = Some(EdgeTracker::heaviside_at(window, x, range));
                c.result = Some(CouplingResult { s: t, x, initial_distance: 0.0, sup_distance: 0.0, series: Vec::new() });
            }
            if let (Some(tr), Some(res)) = (&c.tracker, &mut c.result) {
                if t <= c.spec.until {
                    let d = (tr.state().twice_i - st.twice_i).abs() as f64 / 2.0;
                    if res.series.is_empty() {
                        res.initial_distance = d;
                    }
                    res.sup_distance = res.sup_distance.max(d);
                    res.series.push((t, d));
                }
            }
        }
        Ok(())
    };
    while j < times.len() && times[j] <= 0.0 {
        sample(j, &main, &mut copies, &mut trace)?;
        j += 1;
    }
    for e in events {
        while j < times.len() && e.time > times[j] {
            sample(j, &main, &mut copies, &mut trace)?;
            j += 1;
        }
        if j == times.len() {
            break;
        }
        main.apply(&e);
        for c in copies.iter_mut() {
            if let Some(tr) = &mut c.tracker {
                if e.time <= c.spec.until {
                    tr.apply(&e);
                }
            }
        }
    }
    while j < times.len() {
        sample(j, &main, &mut copies, &mut trace)?;
        j += 1;
    }
    let results = copies.into_iter().map(|c| c.result.expect("every regeneration time is sampled")).collect();
    Ok((trace, results))
}

/// Heaviside run on a sampled window streamed straight from its seed.
pub fn run_heaviside_stream(
    rates: &Rates,
    window: &Window,
    seed: u64,
    stream: u64,
    times: &[f64],
    regen: &[RegenSpec],
) -> Result<(InterfaceTrace, Vec<CouplingResult>)> {
    run_heaviside_events(EventStream::new(rates, window, seed, stream), window, rates.range(), times, regen)
}

/// Interface of the heaviside start evolved under `h` with frozen exterior.
pub fn run_heaviside(h: &HarrisWindow, times: &[f64]) -> Result<InterfaceTrace> {
    Ok(run_heaviside_events(h.events().iter().copied(), &h.window, h.rates.range(), times, &[])?.0)
}

/// Regenerated interface `i^s_t = x + i_{t-s}(shift(h, -x, s))` with
/// `x = floor(i_s)`, compared with `trace` at its sample times in `[s, t_max]`.
pub fn regenerate(h: &HarrisWindow, s: f64, trace: &InterfaceTrace) -> Result<CouplingResult> {
    let (st, ok) = trace
        .at(s)
        .ok_or_else(|| Error::InvalidArgument(format!("{s} is not a sample time of the trace")))?;
    if !ok {
        return Err(Error::WindowTooSmall(format!("interface undefined at time {s}")));
    }
    let x = st.floor_i();
    let later: Vec<(f64, InterfaceState)> =
        trace.times.iter().zip(&trace.states).filter(|(t, _)| **t >= s).map(|(t, st)| (*t, *st)).collect();
    let shifted_times: Vec<f64> = later.iter().map(|(t, _)| t - s).collect();
    let copy = if s == 0.0 {
        run_heaviside(&h.shift(-x, 0.0)?, &shifted_times)?
    } else {
        run_heaviside(&h.shift(-x, s)?, &shifted_times)?
    };
    let mut res = CouplingResult { s, x, initial_distance: 0.0, sup_distance: 0.0, series: Vec::new() };
    for ((t, orig), c) in later.iter().zip(&copy.states) {
        let d = (c.twice_i + 2 * x as i64 - orig.twice_i).abs() as f64 / 2.0;
        if res.series.is_empty() {
            res.initial_distance = d;
        }
        res.sup_distance = res.sup_distance.max(d);
        res.series.push((*t, d));
    }
    Ok(res)
}

/// Empirical tail of a windowed displacement of the interface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementTail {
    pub start: f64,
    pub k: f64,
    pub tail: f64,
    pub n: usize,
}

/// `P[ sup_{start <= t <= start + len} |i_t - i_start| > K ]` over an
/// ensemble of traces sharing one grid (spacing at most 1).
pub fn displacement_stat(
    traces: &[InterfaceTrace],
    len: f64,
    starts: &[f64],
    k_grid: &[f64],
) -> Result<Vec<DisplacementTail>> {
    let first = traces.first().ok_or_else(|| Error::InsufficientData("empty ensemble".into()))?;
    if first.times.windows(2).any(|w| w[1] - w[0] > 1.0) {
        return Err(Error::InvalidArgument("trace grid spacing must not exceed 1".into()));
    }
    if traces.iter().any(|t| t.times != first.times) {
        return Err(Error::InvalidArgument("traces do not share a grid".into()));
    }
    let mut out = Vec::new();
    for &start in starts {
        let i0 = first
            .times
            .iter()
            .position(|&t| t == start)
            .ok_or_else(|| Error::InvalidArgument(format!("start {start} is not a grid time")))?;
        let sups: Vec<f64> = traces
            .iter()
            .map(|tr| {
                let base = tr.states[i0].twice_i;
                tr.times[i0..]
                    .iter()
                    .zip(&tr.states[i0..])
                    .take_while(|(t, _)| **t <= start + len)
                    .map(|(_, s)| (s.twice_i - base).abs() as f64 / 2.0)
                    .fold(0.0, f64::max)
            })
            .collect();
        for &k in k_grid {
            let hits = sups.iter().filter(|&&d| d > k).count();
            out.push(DisplacementTail { start, k, tail: hits as f64 / traces.len() as f64, n: traces.len() });
        }
    }
    Ok(out)
}
