//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harris::{Rates, Site, WindowPolicy};

/// Command names accepted by [`ExperimentConfig::defaults`].
pub const COMMANDS: [&str; 9] = [
    "duality_check",
    "tightness",
    "clt",
    "fdd",
    "sigma_dual",
    "regeneration",
    "coalescence",
    "truncation",
    "survival",
];

const COMMON: &[(&str, &str)] = &[
    ("lambda", "2"),
    ("range", "1"),
    ("seed", "1"),
    ("c_speed", "auto"),
    ("margin", "20"),
    ("resamples", "1000"),
    ("out", "results"),
];

fn specific(command: &str) -> Option<&'static [(&'static str, &'static str)]> {
    Some(match command {
        "duality_check" => &[
            ("reps", "1000"),
            ("horizon", "20"),
            ("max_sites", "60"),
            ("initial", "random"),
            ("boundary", "both"),
        ],
        "tightness" => &[("reps", "2000"), ("horizon", "200"), ("t_grid", "25,50,100,200"), ("quantile", "0.95")],
        "clt" => &[("reps", "5000"), ("horizon", "400")],
        "fdd" => &[
            ("reps", "5000"),
            ("horizon", "150"),
            ("a_grid", "1,2,3"),
            ("max_corr", "0.05"),
            ("var_tol", "0.2"),
        ],
        "sigma_dual" => &[
            ("reps", "200"),
            ("horizon", "400"),
            ("guard", "20"),
            ("interface_reps", "5000"),
            ("interface_horizon", "400"),
            ("rel_tol", "0.15"),
            ("max_lag1", "0.05"),
            ("min_increments", "10000"),
        ],
        "regeneration" => &[
            ("reps", "2000"),
            ("horizon", "250"),
            ("s_grid", "0,50,100"),
            ("threshold", "30"),
            ("max_tail", "0.1"),
            ("grid_step", "0.25"),
        ],
        "coalescence" => &[
            ("reps", "200"),
            ("horizon", "800"),
            ("t_grid", "50,100,200,400,800"),
            ("pair_gap", "2"),
            ("translates", "20"),
            ("stride", "40"),
            ("probe", "0"),
            ("slope", "-0.5"),
            ("slope_tol", "0.1"),
            ("density_early", "50"),
            ("density_late", "400"),
            ("crossing_u", "1"),
            ("crossing_t", "50,100,200"),
            ("crossing_reps", "400"),
        ],
        "truncation" => &[
            ("reps", "1000"),
            ("horizon", "200"),
            ("grid_step", "1"),
            ("max_fraction", "0.01"),
            ("guards", "10,20,40"),
            ("dual_reps", "200"),
            ("dual_horizon", "400"),
            ("guard_tol", "0.05"),
        ],
        "survival" => &[
            ("reps", "100000"),
            ("horizon", "400"),
            ("t_grid", "5,10,20,40,80"),
            ("cap", "64"),
            ("split_levels", "10,20,30,40,50,60,70,80,90"),
            ("split_factor", "3"),
            ("split_below", "12"),
        ],
        _ => return None,
    })
}

/// Resolved configuration of one experiment: command defaults, then the
/// config file, then command-line overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    experiment: String,
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn defaults(command: &str) -> Result<Self> {
        let own = specific(command).ok_or_else(|| {
            Error::Config(format!("unknown experiment {command:?}; expected one of {}", COMMANDS.join(", ")))
        })?;
        let values = COMMON.iter().chain(own).map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Ok(ExperimentConfig { experiment: command.to_string(), values })
    }

    /// Defaults overlaid with the `key = value` lines of `text`. Blank lines
    /// and `#` comments are ignored; an `experiment` key must name `command`.
    pub fn parse(command: &str, text: &str) -> Result<Self> {
        let mut cfg = Self::defaults(command)?;
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {k:?}", n + 1)));
            }
            if k == "experiment" {
                if v != command {
                    return Err(Error::Config(format!("config is for {v:?}, not {command:?}")));
                }
                continue;
            }
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(command: &str, path: &Path) -> Result<Self> {
        Self::parse(command, &std::fs::read_to_string(path)?)
    }

    /// Overrides one known key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key {key:?} for {}", self.experiment))),
        }
    }

    pub fn experiment(&self) -> &str {
        &self.experiment
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("{} has no key {key:?}", self.experiment)))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::Config(format!("{key} = {v:?} is not a valid {}", std::any::type_name::<T>())))
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let x: f64 = self.parse_as(key)?;
        if !x.is_finite() {
            return Err(Error::Config(format!("{key} must be finite")));
        }
        Ok(x)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse_as(key)
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse_as(key)
    }

    pub fn site(&self, key: &str) -> Result<Site> {
        self.parse_as(key)
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.get(key)?;
        v.split(',')
            .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {p:?}"))))
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.list(key)
    }

    pub fn site_list(&self, key: &str) -> Result<Vec<Site>> {
        self.list(key)
    }

    /// A strictly increasing, nonempty list of finite nonnegative values.
    pub fn grid(&self, key: &str) -> Result<Vec<f64>> {
        let g = self.f64_list(key)?;
        if g.is_empty() || g.iter().any(|t| !t.is_finite() || *t < 0.0) || g.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("{key} must be increasing and nonnegative, got {:?}", self.get(key)?)));
        }
        Ok(g)
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let x = self.f64(key)?;
        if x <= 0.0 {
            return Err(Error::Config(format!("{key} must be positive, got {x}")));
        }
        Ok(x)
    }

    pub fn at_least(&self, key: &str, min: usize) -> Result<usize> {
        let n = self.usize(key)?;
        if n < min {
            return Err(Error::Config(format!("{key} must be at least {min}, got {n}")));
        }
        Ok(n)
    }

    pub fn rates(&self) -> Result<Rates> {
        Rates::new(self.f64("lambda")?, self.parse_as("range")?)
    }

    /// `c_speed = auto` selects [`WindowPolicy::default_for`].
    pub fn policy(&self) -> Result<WindowPolicy> {
        let mut p = WindowPolicy::default_for(&self.rates()?);
        if self.get("c_speed")? != "auto" {
            p.c_speed = self.positive("c_speed")?;
        }
        p.margin = self.site("margin")?;
        if p.margin < 0 {
            return Err(Error::Config("margin must be nonnegative".into()));
        }
        Ok(p)
    }

    /// Sorted `key=value` lines of every setting except `out`.
    pub fn canonical(&self) -> String {
        let mut s = format!("experiment={}\n", self.experiment);
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "out") {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// `<out>/<experiment>-<first 16 hex digits of the hash>`.
    pub fn output_dir(&self) -> Result<PathBuf> {
        Ok(Path::new(self.get("out")?).join(format!("{}-{}", self.experiment, &self.hash()[..16])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_file_and_overrides_layer() {
        let mut cfg = ExperimentConfig::parse("clt", "# comment\nreps = 10\n\nlambda=2.5 # trailing\n").unwrap();
        assert_eq!(cfg.usize("reps").unwrap(), 10);
        assert_eq!(cfg.f64("lambda").unwrap(), 2.5);
        assert_eq!(cfg.f64("horizon").unwrap(), 400.0);
        cfg.set("reps", "20").unwrap();
        assert_eq!(cfg.usize("reps").unwrap(), 20);
        assert!(cfg.set("bogus", "1").is_err());
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(ExperimentConfig::parse("clt", "reps 10").is_err());
        assert!(ExperimentConfig::parse("clt", "reps = 1\nreps = 2").is_err());
        assert!(ExperimentConfig::parse("clt", "experiment = fdd").is_err());
        assert!(ExperimentConfig::parse("clt", "experiment = clt").is_ok());
        assert!(ExperimentConfig::parse("nope", "").is_err());
        let cfg = ExperimentConfig::parse("clt", "reps = many").unwrap();
        assert!(cfg.usize("reps").is_err());
        let cfg = ExperimentConfig::parse("tightness", "t_grid = 5,3").unwrap();
        assert!(cfg.grid("t_grid").is_err());
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = ExperimentConfig::defaults("fdd").unwrap();
        let mut b = a.clone();
        b.set("out", "elsewhere").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "2").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig::defaults("clt").unwrap().hash());
        assert!(a.output_dir().unwrap().ends_with(format!("fdd-{}", &a.hash()[..16])));
    }

    #[test]
    fn policy_and_rates() {
        let mut cfg = ExperimentConfig::defaults("clt").unwrap();
        let auto = cfg.policy().unwrap();
        assert_eq!(auto, WindowPolicy::default_for(&cfg.rates().unwrap()));
        cfg.set("c_speed", "5").unwrap();
        assert_eq!(cfg.policy().unwrap().c_speed, 5.0);
        cfg.set("c_speed", "-1").unwrap();
        assert!(cfg.policy().is_err());
        cfg.set("lambda", "0").unwrap();
        assert!(cfg.rates().is_err());
    }
}
