//! Harris systems (graphical constructions) on finite space-time windows.
//!
//! A Harris system is a family of independent Poisson processes: a rate-1
//! process of recovery marks at every site and a rate-`lambda` process of
//! arrows for every ordered pair of sites at `l∞` distance at most `R`. Here
//! the family is truncated to a window `[x_min, x_max] x [0, t_max]`. Arrows
//! are kept whenever at least one endpoint lies in the window, so boundary
//! arrows exist in both directions and time reversal maps the family onto
//! itself.
//!
//! All event times live on the dyadic grid `k * 2^-32`. Shifting, restricting
//! and reversing by grid times is then exact in `f64`, which makes
//! `reverse(reverse(h, t), t) == h` hold bit for bit.

use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::stream_rng;

pub type Site = i32;

const GRID_SCALE: f64 = 4_294_967_296.0;

/// Rounds `t` to the nearest point of the event-time grid.
#[inline]
pub fn quantize_time(t: f64) -> f64 {
    (t * GRID_SCALE).round() / GRID_SCALE
}

/// Birth rate per directed pair and interaction range. The death rate is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    lambda: f64,
    range: u32,
}

impl Rates {
    pub fn new(lambda: f64, range: u32) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidRates(format!("lambda must be positive, got {lambda}")));
        }
        if range < 1 {
            return Err(Error::InvalidRates("range must be at least 1".into()));
        }
        Ok(Rates { lambda, range })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn death(&self) -> f64 {
        1.0
    }

    /// Total event rate attached to one site: its recovery clock plus its
    /// `2R` outgoing arrow clocks.
    pub fn rate_per_site(&self) -> f64 {
        1.0 + 2.0 * self.range as f64 * self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x_min: Site,
    pub x_max: Site,
    pub t_max: f64,
}

impl Window {
    pub fn new(x_min: Site, x_max: Site, t_max: f64) -> Result<Self> {
        if x_min > x_max {
            return Err(Error::InvalidWindow(format!("x_min {x_min} > x_max {x_max}")));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(Error::InvalidWindow(format!("t_max must be positive, got {t_max}")));
        }
        Ok(Window { x_min, x_max, t_max: quantize_time(t_max) })
    }

    /// Window `[-half_width, half_width] x [0, t_max]`.
    pub fn symmetric(half_width: Site, t_max: f64) -> Result<Self> {
        Window::new(-half_width, half_width, t_max)
    }

    pub fn n_sites(&self) -> usize {
        (self.x_max as i64 - self.x_min as i64 + 1) as usize
    }

    #[inline]
    pub fn contains(&self, x: Site) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> {
        self.x_min..=self.x_max
    }
}

/// Window sizing for a run of length `t` around an initial region of
/// half-width `span`: `W = span + ceil(c_speed * t) + margin`.
///
/// For range 1 the front of any infection path advances by a sum of
/// independent `Exp(lambda)` waiting times, so its speed is at most
/// `lambda`; in general it is at most `lambda * R(R+1)(R+2)/6`. The default
/// takes 1.5 times that bound, where large deviations of the front are
/// already negligible at the horizons used here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub c_speed: f64,
    pub margin: Site,
}

impl WindowPolicy {
    pub fn default_for(rates: &Rates) -> Self {
        let r = rates.range() as f64;
        WindowPolicy { c_speed: 1.5 * rates.lambda() * r * (r + 1.0) * (r + 2.0) / 6.0, margin: 20 }
    }

    pub fn half_width(&self, span: Site, t: f64) -> Site {
        span + (self.c_speed * t).ceil() as Site + self.margin
    }

    /// Symmetric window for horizon `t`.
    pub fn window(&self, span: Site, t: f64) -> Result<Window> {
        Window::symmetric(self.half_width(span, t), t)
    }
}

/// What an event does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Recovery(Site),
    Arrow(Site, Site),
}

/// One Poisson arrival. A recovery is stored with `source == target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    source: Site,
    target: Site,
}

impl Event {
    pub fn recovery(site: Site, time: f64) -> Self {
        Event { time, source: site, target: site }
    }

    pub fn arrow(from: Site, to: Site, time: f64) -> Self {
        assert_ne!(from, to, "an arrow needs two distinct sites");
        Event { time, source: from, target: to }
    }

    #[inline]
    pub fn mark(&self) -> Mark {
        if self.source == self.target {
            Mark::Recovery(self.source)
        } else {
            Mark::Arrow(self.source, self.target)
        }
    }

    #[inline]
    pub fn is_recovery(&self) -> bool {
        self.source == self.target
    }

    /// Recovery site, or arrow source.
    #[inline]
    pub fn source(&self) -> Site {
        self.source
    }

    /// Recovery site, or arrow target.
    #[inline]
    pub fn target(&self) -> Site {
        self.target
    }
}

/// The clocks of a window in a fixed enumeration: recoveries by site
/// ascending, then arrows by (source, offset).
#[derive(Debug, Clone)]
struct Channels {
    x_min: Site,
    n_sites: usize,
    pairs: Vec<(Site, Site)>,
    p_recovery: f64,
    total_rate: f64,
}

impl Channels {
    fn new(rates: &Rates, window: &Window) -> Self {
        let r = rates.range() as Site;
        let mut pairs = Vec::new();
        for x in (window.x_min - r)..=(window.x_max + r) {
            for d in -r..=r {
                if d == 0 {
                    continue;
                }
                let y = x + d;
                if window.contains(x) || window.contains(y) {
                    pairs.push((x, y));
                }
            }
        }
        let n_sites = window.n_sites();
        let rec_rate = n_sites as f64;
        let arrow_rate = rates.lambda() * pairs.len() as f64;
        Channels {
            x_min: window.x_min,
            n_sites,
            pairs,
            p_recovery: rec_rate / (rec_rate + arrow_rate),
            total_rate: rec_rate + arrow_rate,
        }
    }
}

/// Time-ordered stream of the events of a window, generated as one
/// superposed Poisson process whose arrivals are assigned to clocks
/// uniformly by rate. Equal in law to sampling every clock separately and
/// merging, but needs no sort and no storage, so windows with tens of
/// millions of events can be swept without materializing them.
#[derive(Debug, Clone)]
pub struct EventStream {
    rng: ChaCha8Rng,
    channels: Channels,
    now: f64,
    t_max: f64,
    done: bool,
}

impl EventStream {
    pub fn new(rates: &Rates, window: &Window, seed: u64, stream: u64) -> Self {
        EventStream {
            rng: stream_rng(seed, stream),
            channels: Channels::new(rates, window),
            now: 0.0,
            t_max: window.t_max,
            done: false,
        }
    }
}

impl Iterator for EventStream {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if self.done {
            return None;
        }
        let ch = &self.channels;
        loop {
            let gap: f64 = self.rng.sample(Exp1);
            let t = quantize_time(self.now + gap / ch.total_rate);
            if t > self.t_max {
                self.done = true;
                return None;
            }
            // redraw ties so that event times stay pairwise distinct
            if t <= self.now {
                continue;
            }
            self.now = t;
            let u: f64 = self.rng.random();
            return Some(if u < ch.p_recovery {
                let i = self.rng.random_range(0..ch.n_sites);
                Event::recovery(ch.x_min + i as Site, t)
            } else {
                let (x, y) = ch.pairs[self.rng.random_range(0..ch.pairs.len())];
                Event::arrow(x, y, t)
            });
        }
    }
}

/// A Harris system truncated to a window, stored as one time-sorted list.
#[derive(Debug, Clone, PartialEq)]
pub struct HarrisWindow {
    pub rates: Rates,
    pub window: Window,
    pub seed: u64,
    pub stream: u64,
    events: Vec<Event>,
}

impl HarrisWindow {
    /// Samples the window from replication stream 0 of `seed`.
    pub fn sample(rates: Rates, window: Window, seed: u64) -> Self {
        Self::sample_stream(rates, window, seed, 0)
    }

    pub fn sample_stream(rates: Rates, window: Window, seed: u64, stream: u64) -> Self {
        let events = EventStream::new(&rates, &window, seed, stream).collect();
        HarrisWindow { rates, window, seed, stream, events }
    }

    /// Builds a window from explicit events (hand-made fixtures, decoded
    /// files). Times are snapped to the grid and sorted; every invariant is
    /// checked.
    pub fn from_events(rates: Rates, window: Window, mut events: Vec<Event>) -> Result<Self> {
        for e in &mut events {
            e.time = quantize_time(e.time);
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let h = HarrisWindow { rates, window, seed: 0, stream: 0, events };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.window;
        let r = self.rates.range() as i64;
        let mut prev = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.time >= 0.0 && e.time <= w.t_max) {
                return Err(Error::MalformedHarris(format!("event time {} outside [0, {}]", e.time, w.t_max)));
            }
            if e.time <= prev {
                return Err(Error::MalformedHarris(format!("event times not strictly increasing at {}", e.time)));
            }
            prev = e.time;
            match e.mark() {
                Mark::Recovery(x) => {
                    if !w.contains(x) {
                        return Err(Error::MalformedHarris(format!("recovery at {x} outside window")));
                    }
                }
                Mark::Arrow(x, y) => {
                    let d = (x as i64 - y as i64).abs();
                    if d > r {
                        return Err(Error::MalformedHarris(format!("arrow {x}->{y} longer than range {r}")));
                    }
                    if !w.contains(x) && !w.contains(y) {
                        return Err(Error::MalformedHarris(format!("arrow {x}->{y} does not touch the window")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with time in `[t0, t1]`, re-based so that `t0` becomes 0.
    pub fn restrict(&self, t0: f64, t1: f64) -> Result<Self> {
        let (t0, t1) = (quantize_time(t0), quantize_time(t1));
        if !(t0 >= 0.0 && t0 < t1 && t1 <= self.window.t_max) {
            return Err(Error::TimeOutOfRange(format!(
                "restrict needs 0 <= t0 < t1 <= {}, got [{t0}, {t1}]",
                self.window.t_max
            )));
        }
        let events = self
            .events
            .iter()
            .filter(|e| e.time >= t0 && e.time <= t1)
            .map(|e| Event { time: e.time - t0, ..*e })
            .collect();
        Ok(HarrisWindow {
            window: Window { t_max: t1 - t0, ..self.window },
            events,
            ..*self.without_events()
        })
    }

    /// Space-time shift: the event at `(x, s)` with `s >= t` moves to
    /// `(x + z, s - t)`; the window moves with it.
    pub fn shift(&self, z: Site, t: f64) -> Result<Self> {
        let t = quantize_time(t);
        if !(t >= 0.0 && t < self.window.t_max) {
            return Err(Error::TimeOutOfRange(format!(
                "shift needs 0 <= t < {}, got {t}",
                self.window.t_max
            )));
        }
        let events = self
            .events
            .iter()
            .filter(|e| e.time >= t)
            .map(|e| Event { time: e.time - t, source: e.source + z, target: e.target + z })
            .collect();
        let w = self.window;
        Ok(HarrisWindow {
            window: Window { x_min: w.x_min + z, x_max: w.x_max + z, t_max: w.t_max - t },
            events,
            ..*self.without_events()
        })
    }

    /// Time reversal on `[0, t]`: `(x, s)` becomes `(x, t - s)` and every
    /// arrow is turned around.
    pub fn reverse(&self, t: f64) -> Result<Self> {
        let t = quantize_time(t);
        if !(t > 0.0 && t <= self.window.t_max) {
            return Err(Error::TimeOutOfRange(format!(
                "reverse needs 0 < t <= {}, got {t}",
                self.window.t_max
            )));
        }
        let events = self
            .events
            .iter()
            .rev()
            .filter(|e| e.time <= t)
            .map(|e| Event { time: t - e.time, source: e.target, target: e.source })
            .collect();
        Ok(HarrisWindow {
            window: Window { t_max: t, ..self.window },
            events,
            ..*self.without_events()
        })
    }

    /// Spatial restriction to the sub-window `[a, b]`. The result is exactly
    /// the Harris system one would have on the smaller window, so runs on
    /// nested windows can be coupled.
    pub fn crop(&self, a: Site, b: Site) -> Result<Self> {
        if a > b || !self.window.contains(a) || !self.window.contains(b) {
            return Err(Error::InvalidWindow(format!(
                "crop [{a}, {b}] is not inside [{}, {}]",
                self.window.x_min, self.window.x_max
            )));
        }
        let inside = |x: Site| x >= a && x <= b;
        let events = self
            .events
            .iter()
            .filter(|e| inside(e.source) || inside(e.target))
            .copied()
            .collect();
        Ok(HarrisWindow {
            window: Window { x_min: a, x_max: b, ..self.window },
            events,
            ..*self.without_events()
        })
    }

    fn without_events(&self) -> Box<HarrisWindow> {
        Box::new(HarrisWindow {
            rates: self.rates,
            window: self.window,
            seed: self.seed,
            stream: self.stream,
            events: Vec::new(),
        })
    }
}

const BINARY_MAGIC: &[u8; 4] = b"CILH";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EventRecord {
    Recovery { x: Site, t: f64 },
    Arrow { x: Site, y: Site, t: f64 },
}

#[derive(Serialize, Deserialize)]
struct HarrisRecord {
    version: u32,
    rates: Rates,
    window: Window,
    seed: u64,
    stream: u64,
    events: Vec<EventRecord>,
}

impl HarrisWindow {
    pub fn to_json(&self) -> Result<String> {
        let rec = HarrisRecord {
            version: FORMAT_VERSION,
            rates: self.rates,
            window: self.window,
            seed: self.seed,
            stream: self.stream,
            events: self
                .events
                .iter()
                .map(|e| match e.mark() {
                    Mark::Recovery(x) => EventRecord::Recovery { x, t: e.time },
                    Mark::Arrow(x, y) => EventRecord::Arrow { x, y, t: e.time },
                })
                .collect(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: HarrisRecord = serde_json::from_str(s)?;
        if rec.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", rec.version)));
        }
        let rates = Rates::new(rec.rates.lambda, rec.rates.range)?;
        let window = Window::new(rec.window.x_min, rec.window.x_max, rec.window.t_max)?;
        let events = rec
            .events
            .into_iter()
            .map(|r| match r {
                EventRecord::Recovery { x, t } => Ok(Event::recovery(x, t)),
                EventRecord::Arrow { x, y, t } if x != y => Ok(Event::arrow(x, y, t)),
                EventRecord::Arrow { x, .. } => Err(Error::Format(format!("self-arrow at {x}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let h = HarrisWindow { rates, window, seed: rec.seed, stream: rec.stream, events };
        h.validate()?;
        Ok(h)
    }

    /// Little-endian binary record: magic, version, header, then one record
    /// per event (kind byte, `x`, `y` for arrows, `t` as an IEEE-754 double).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.rates.lambda.to_le_bytes())?;
        w.write_all(&self.rates.range.to_le_bytes())?;
        w.write_all(&self.window.x_min.to_le_bytes())?;
        w.write_all(&self.window.x_max.to_le_bytes())?;
        w.write_all(&self.window.t_max.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.stream.to_le_bytes())?;
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for e in &self.events {
            match e.mark() {
                Mark::Recovery(x) => {
                    w.write_all(&[0u8])?;
                    w.write_all(&x.to_le_bytes())?;
                }
                Mark::Arrow(x, y) => {
                    w.write_all(&[1u8])?;
                    w.write_all(&x.to_le_bytes())?;
                    w.write_all(&y.to_le_bytes())?;
                }
            }
            w.write_all(&e.time.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf)?;
            Ok(buf)
        }
        if &take::<4, _>(&mut r)? != BINARY_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let lambda = f64::from_le_bytes(take(&mut r)?);
        let range = u32::from_le_bytes(take(&mut r)?);
        let x_min = Site::from_le_bytes(take(&mut r)?);
        let x_max = Site::from_le_bytes(take(&mut r)?);
        let t_max = f64::from_le_bytes(take(&mut r)?);
        let seed = u64::from_le_bytes(take(&mut r)?);
        let stream = u64::from_le_bytes(take(&mut r)?);
        let n = u64::from_le_bytes(take(&mut r)?);
        let mut events = Vec::with_capacity(n.min(1 << 24) as usize);
        for _ in 0..n {
            let kind = take::<1, _>(&mut r)?[0];
            let x = Site::from_le_bytes(take(&mut r)?);
            let e = match kind {
                0 => Event::recovery(x, 0.0),
                1 => {
                    let y = Site::from_le_bytes(take(&mut r)?);
                    if x == y {
                        return Err(Error::Format(format!("self-arrow at {x}")));
                    }
                    Event::arrow(x, y, 0.0)
                }
                k => return Err(Error::Format(format!("unknown event kind {k}"))),
            };
            events.push(Event { time: f64::from_le_bytes(take(&mut r)?), ..e });
        }
        let h = HarrisWindow {
            rates: Rates::new(lambda, range)?,
            window: Window::new(x_min, x_max, t_max)?,
            seed,
            stream,
            events,
        };
        h.validate()?;
        Ok(h)
    }
}
