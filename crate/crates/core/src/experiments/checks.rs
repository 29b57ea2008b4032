//! Exact pathwise identities on random small windows. Any mismatch is a
//! bug, so these report counts rather than statistics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::result::Table;
use crate::dual::{ancestor_map, ancestor_path_in, reach_sweep};
use crate::error::{Error, Result};
use crate::harris::{quantize_time, HarrisWindow, Rates, Site, Window};
use crate::interface::{in_gamma, in_gamma_brute, in_pi, in_pi_brute};
use crate::process::{
    coupling_violations, evolve_multitype, reachable, Alphabet, BoundaryPolicy, Configuration, Evolver, Target,
};
use crate::row;
use crate::seeds::stream_rng;

/// Initial configurations for the duality check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    /// Independent uniform types in `{1, 2}`.
    Random,
    Heaviside,
    /// Every site empty; rejected, the dual readout needs full occupancy.
    Vacant,
}

impl std::str::FromStr for Initial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Initial::Random),
            "heaviside" => Ok(Initial::Heaviside),
            "vacant" => Ok(Initial::Vacant),
            _ => Err(Error::Config(format!("initial must be random, heaviside or vacant, got {s:?}"))),
        }
    }
}

/// A window of `5..=max_sites` sites placed around the origin with a
/// horizon uniform in `[1, max_horizon]`.
pub fn random_window(rng: &mut ChaCha8Rng, max_sites: usize, max_horizon: f64) -> Result<Window> {
    if max_sites < 5 || !(max_horizon >= 1.0) {
        return Err(Error::Config(format!("need at least 5 sites and horizon >= 1, got {max_sites}, {max_horizon}")));
    }
    let n = rng.random_range(5..=max_sites) as Site;
    let x_min = -rng.random_range(0..n);
    Window::new(x_min, x_min + n - 1, rng.random_range(1.0..=max_horizon))
}

fn boundary_for(rep: u64, choice: Option<BoundaryPolicy>) -> BoundaryPolicy {
    choice.unwrap_or(if rep % 2 == 0 { BoundaryPolicy::Frozen } else { BoundaryPolicy::Vacant })
}

/// Outcome of the duality check.
#[derive(Debug, Clone)]
pub struct DualityOutcome {
    pub mismatches: usize,
    pub comparisons: usize,
    pub table: Table,
}

/// `xi_t(x) = xi_0(eta^x_t)` at three times per window, with the primal
/// side from the multitype evolution and the dual side from the `psi*`
/// trace on the reversed system. `boundary = None` alternates the two
/// policies.
pub fn duality_check(
    rates: &Rates,
    reps: usize,
    seed: u64,
    max_sites: usize,
    max_horizon: f64,
    initial: Initial,
    boundary: Option<BoundaryPolicy>,
) -> Result<DualityOutcome> {
    if max_sites > 60 || max_horizon > 20.0 {
        return Err(Error::Config(format!(
            "duality windows are limited to 60 sites and horizon 20, got {max_sites}, {max_horizon}"
        )));
    }
    if initial == Initial::Vacant {
        return Err(Error::Config("the dual readout needs a fully occupied initial configuration".into()));
    }
    let rows: Vec<(usize, usize, Window, BoundaryPolicy)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let w = random_window(&mut rng, max_sites, max_horizon)?;
            let b = boundary_for(rep, boundary);
            let h = HarrisWindow::sample_stream(*rates, w, seed, rep ^ (1 << 63));
            let xi0 = match initial {
                Initial::Random => {
                    let ext = (rng.random_range(1..=2), rng.random_range(1..=2));
                    let states = w.sites().map(|_| rng.random_range(1..=2)).collect();
                    Configuration::with_exterior(Alphabet::MultiType, w.x_min, states, ext)?
                }
                _ => Configuration::heaviside(&w),
            };
            let traj = evolve_multitype(&h, &xi0, b)?;
            let (mut bad, mut total) = (0, 0);
            for frac in [1.0 / 3.0, 2.0 / 3.0, 1.0] {
                let t = quantize_time(w.t_max * frac);
                let xi_t = traj.state_at(t);
                let g = h.reverse(t)?;
                let reach = reach_sweep(&g, t, b)?;
                for x in w.sites() {
                    let eta = ancestor_path_in(&g, &reach, x, 0.0, b)?;
                    let dual = eta.terminal().map_or(0, |a| xi0.get(a));
                    total += 1;
                    bad += (dual != xi_t.get(x)) as usize;
                }
            }
            Ok((bad, total, w, b))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["seed", "rep", "x_min", "x_max", "horizon", "boundary", "comparisons", "mismatches"]);
    for (rep, (bad, total, w, b)) in rows.iter().enumerate() {
        table.push(row![seed, rep, w.x_min, w.x_max, w.t_max, format!("{b:?}").to_lowercase(), total, bad]);
    }
    Ok(DualityOutcome {
        mismatches: rows.iter().map(|r| r.0).sum(),
        comparisons: rows.iter().map(|r| r.1).sum(),
        table,
    })
}

fn random_multitype(rng: &mut ChaCha8Rng, w: &Window) -> Result<Configuration> {
    let states = w.sites().map(|_| rng.random_range(0..=2)).collect();
    Configuration::with_exterior(Alphabet::MultiType, w.x_min, states, (1, 2))
}

/// Ordered pairs `{xi = 2} ⊆ {xi' = 2}`, `{xi = 1} ⊇ {xi' = 1}` evolved on
/// one system; counts event times with a violated inclusion.
pub fn monotone_check(rates: &Rates, reps: usize, seed: u64) -> Result<usize> {
    let counts: Vec<usize> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let w = random_window(&mut rng, 60, 20.0)?;
            let h = HarrisWindow::sample_stream(*rates, w, seed, rep ^ (1 << 63));
            let lo = random_multitype(&mut rng, &w)?;
            let mut hi = lo.clone();
            for x in w.sites() {
                let s = match (lo.get(x), rng.random_range(0..3)) {
                    (1, 1) => 0,
                    (1, 2) | (0, 2) => 2,
                    (s, _) => s,
                };
                hi.set(x, s)?;
            }
            coupling_violations(&h, &lo, &hi, boundary_for(rep, None))
        })
        .collect::<Result<_>>()?;
    Ok(counts.into_iter().sum())
}

/// Occupancy of the multitype run against the one-type run from the
/// occupancy, compared after every event.
pub fn colorblind_check(rates: &Rates, reps: usize, seed: u64) -> Result<usize> {
    let counts: Vec<usize> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let w = random_window(&mut rng, 60, 20.0)?;
            let h = HarrisWindow::sample_stream(*rates, w, seed, rep ^ (1 << 63));
            let xi = random_multitype(&mut rng, &w)?;
            let b = boundary_for(rep, None);
            let mut multi = Evolver::new(&xi, b);
            let mut one = Evolver::new(&xi.occupancy(), b);
            let mut bad = 0;
            for e in h.events() {
                multi.apply(e);
                one.apply(e);
                bad += multi.cells().iter().zip(one.cells()).any(|(&m, &o)| (m != 0) as u8 != o) as usize;
            }
            Ok(bad)
        })
        .collect::<Result<_>>()?;
    Ok(counts.into_iter().sum())
}

/// Mismatches between `ancestor_map` and the `psi*` terminal values at
/// every site, and between the reach table and forward reachability at
/// three random times strictly between events.
pub fn construction_check(rates: &Rates, reps: usize, seed: u64) -> Result<(usize, usize)> {
    let counts: Vec<(usize, usize)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let w = random_window(&mut rng, 60, 20.0)?;
            let b = boundary_for(rep, None);
            let g = HarrisWindow::sample_stream(*rates, w, seed, rep ^ (1 << 63));
            let t = w.t_max;
            let map = ancestor_map(&g, t, b)?;
            let reach = reach_sweep(&g, t, b)?;
            let mut map_bad = 0;
            for x in w.sites() {
                map_bad += (map.get(x) != ancestor_path_in(&g, &reach, x, 0.0, b)?.terminal()) as usize;
            }
            let mut reach_bad = 0;
            let ev = g.events();
            for _ in 0..3 {
                let s = if ev.len() < 2 {
                    t / 2.0
                } else {
                    let k = rng.random_range(0..ev.len() - 1);
                    (ev[k].time + ev[k + 1].time) / 2.0
                };
                for x in w.sites() {
                    let fwd = reachable(&g, (x, s), Target::Anywhere(t), b)?;
                    reach_bad += (fwd != reach.contains(x, s)) as usize;
                }
            }
            Ok((map_bad, reach_bad))
        })
        .collect::<Result<_>>()?;
    Ok(counts.into_iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1)))
}

/// A configuration in the interface class: either a heaviside run on a
/// small window stopped at a random time, or a synthetic one with strays.
pub fn random_omega(rates: &Rates, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    if rng.random_bool(0.5) {
        let w = Window::new(-40, 40, 20.0)?;
        let h = HarrisWindow::sample_stream(*rates, w, rng.random(), 0);
        let t = quantize_time(rng.random_range(0.5..20.0));
        let traj = evolve_multitype(&h, &Configuration::heaviside(&w), BoundaryPolicy::Frozen)?;
        return Ok(traj.state_at(t));
    }
    let n: Site = rng.random_range(40..=80);
    let centre = rng.random_range(15..n - 15);
    let states: Vec<u8> = (0..n)
        .map(|i| {
            let own = if i < centre { 1 } else { 2 };
            if (i - centre).abs() < 8 {
                rng.random_range(0..=2)
            } else if i < 6 || i >= n - 6 {
                own
            } else {
                match rng.random_range(0..20) {
                    0..=2 => 0,
                    3 => 3 - own,
                    _ => own,
                }
            }
        })
        .collect();
    Configuration::with_exterior(Alphabet::MultiType, -centre, states, (1, 2))
}

/// Outcome of the classifier check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassifierOutcome {
    pub gamma_mismatches: usize,
    pub pi_mismatches: usize,
    /// Cases where the isolation segments did not fit in the window.
    pub gamma_skipped: usize,
    pub gamma_members: usize,
    pub pi_members: usize,
}

/// `in_gamma` and `in_pi` against their brute-force oracles on random
/// configurations and parameters.
pub fn classifier_check(rates: &Rates, reps: usize, seed: u64) -> Result<ClassifierOutcome> {
    let per: Vec<ClassifierOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let xi = random_omega(rates, &mut rng)?;
            let s = rng.random_range(0..4);
            let l = rng.random_range(1..12);
            let k = rng.random_range(0..=l as usize);
            let mut o = ClassifierOutcome::default();
            match in_gamma(&xi, s, l) {
                Ok(v) => {
                    o.gamma_mismatches = (v != in_gamma_brute(&xi, s, l)?) as usize;
                    o.gamma_members = v as usize;
                }
                Err(Error::WindowTooSmall(_)) => o.gamma_skipped = 1,
                Err(e) => return Err(e),
            }
            let p = in_pi(&xi, k, l)?;
            o.pi_mismatches = (p != in_pi_brute(&xi, k, l)?) as usize;
            o.pi_members = p as usize;
            Ok(o)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().fold(ClassifierOutcome::default(), |a, c| ClassifierOutcome {
            gamma_mismatches: a.gamma_mismatches + c.gamma_mismatches,
            pi_mismatches: a.pi_mismatches + c.pi_mismatches,
            gamma_skipped: a.gamma_skipped + c.gamma_skipped,
            gamma_members: a.gamma_members + c.gamma_members,
            pi_members: a.pi_members + c.pi_members,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates() -> Rates {
        Rates::new(2.0, 1).unwrap()
    }

    #[test]
    fn random_windows_respect_bounds() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..200 {
            let w = random_window(&mut rng, 12, 4.0).unwrap();
            assert!((5..=12).contains(&w.n_sites()));
            assert!((1.0..=4.0).contains(&w.t_max));
        }
        assert!(random_window(&mut rng, 4, 4.0).is_err());
        assert!(random_window(&mut rng, 10, 0.5).is_err());
    }

    #[test]
    fn exact_checks_are_clean_at_small_scale() {
        let r = rates();
        assert_eq!(checks_total(&r), (0, 0, 0, 0));
        let out = duality_check(&r, 30, 4, 30, 6.0, Initial::Heaviside, Some(BoundaryPolicy::Frozen)).unwrap();
        assert_eq!(out.mismatches, 0);
        assert!(duality_check(&r, 3, 4, 30, 6.0, Initial::Vacant, None).is_err());
        let c = classifier_check(&r, 300, 9).unwrap();
        assert_eq!((c.gamma_mismatches, c.pi_mismatches), (0, 0));
        assert!(c.gamma_members > 0 && c.pi_members > 0);
    }

    fn checks_total(r: &Rates) -> (usize, usize, usize, usize) {
        let (m, s) = construction_check(r, 40, 2).unwrap();
        (monotone_check(r, 40, 2).unwrap(), colorblind_check(r, 40, 2).unwrap(), m, s)
    }

    #[test]
    fn initial_names() {
        assert_eq!("random".parse::<Initial>().unwrap(), Initial::Random);
        assert!("full".parse::<Initial>().is_err());
    }
}
