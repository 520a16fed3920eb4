use chrono::{Datelike, Days, NaiveDate};

use super::{BranchSeries, Observation};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::RngStream;

/// Parameters of the synthetic branch generator.
///
/// Daily revenue is `base_level · trend^(years since start) · factor(weekday)
/// · (1 + ε)` with `ε ~ N(0, noise_sd)`. Weekday factors run Monday..Sunday;
/// closed weekdays carry a factor of 0 and are omitted from the series.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_branches: usize,
    pub seed: u64,
    pub weekly_profiles: Vec<[f64; 7]>,
    pub base_level: f64,
    pub trend: f64,
    pub noise_sd: f64,
    pub closed_days: Vec<Vec<u32>>,
}

/// Weekend peak, strongest on Saturday.
pub const PROFILE_SATURDAY_PEAK: [f64; 7] = [0.75, 0.8, 0.85, 0.95, 1.15, 1.5, 1.2];
/// Busy midweek, trough at the weekend.
pub const PROFILE_WEEKDAY_TRADE: [f64; 7] = [1.3, 1.4, 1.35, 1.25, 1.0, 0.45, 0.55];
/// Friday-heavy, closed on Sunday.
pub const PROFILE_FRIDAY_CLOSED_SUNDAY: [f64; 7] = [0.6, 0.7, 1.0, 1.2, 1.9, 1.1, 0.0];

impl SynthConfig {
    pub fn branch_label(i: usize) -> String {
        format!("B{}", i + 1)
    }

    /// Six branches in the spirit of a two-chain restaurant roster: three
    /// with a Saturday peak (one closed on Sundays), two with a weekend
    /// trough and one steady riser.
    pub fn six_branch(seed: u64) -> Self {
        let mut sat_closed = PROFILE_SATURDAY_PEAK;
        sat_closed[6] = 0.0;
        SynthConfig {
            n_branches: 6,
            seed,
            weekly_profiles: vec![
                PROFILE_SATURDAY_PEAK,
                [0.8, 0.85, 0.9, 1.0, 1.2, 1.45, 1.1],
                [0.85, 0.9, 0.95, 1.0, 1.1, 1.2, 1.25],
                PROFILE_WEEKDAY_TRADE,
                sat_closed,
                [1.2, 1.3, 1.3, 1.2, 1.1, 0.6, 0.7],
            ],
            base_level: 1000.0,
            trend: 1.03,
            noise_sd: 0.1,
            closed_days: vec![vec![], vec![], vec![], vec![], vec![6], vec![]],
        }
    }

    /// Four branches: B1 and B2 share a weekly profile, B3 and B4 each
    /// follow their own.
    pub fn four_branch(seed: u64) -> Self {
        SynthConfig {
            n_branches: 4,
            seed,
            weekly_profiles: vec![
                PROFILE_SATURDAY_PEAK,
                PROFILE_SATURDAY_PEAK,
                PROFILE_WEEKDAY_TRADE,
                PROFILE_FRIDAY_CLOSED_SUNDAY,
            ],
            base_level: 1000.0,
            trend: 1.03,
            noise_sd: 0.1,
            closed_days: vec![vec![], vec![], vec![], vec![6]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_branches == 0 {
            return Err(Error::Config("n_branches must be at least 1".into()));
        }
        if self.weekly_profiles.len() != self.n_branches || self.closed_days.len() != self.n_branches {
            return Err(Error::Config(format!(
                "expected {} weekly profiles and closed-day sets, got {} and {}",
                self.n_branches,
                self.weekly_profiles.len(),
                self.closed_days.len()
            )));
        }
        if !(0.0..1.0).contains(&self.noise_sd) {
            return Err(Error::Config(format!("noise_sd {} outside [0, 1)", self.noise_sd)));
        }
        if !(self.base_level > 0.0 && self.trend > 0.0) {
            return Err(Error::Config("base_level and trend must be positive".into()));
        }
        for (b, (profile, closed)) in self.weekly_profiles.iter().zip(&self.closed_days).enumerate() {
            for (d, f) in profile.iter().enumerate() {
                let is_closed = closed.contains(&(d as u32));
                let ok = if is_closed { *f == 0.0 } else { *f > 0.0 && f.is_finite() };
                if !ok {
                    return Err(Error::Config(format!(
                        "branch {}: weekday {d} factor {f} inconsistent with closed days {closed:?}",
                        b + 1
                    )));
                }
            }
            if closed.iter().any(|&d| d > 6) {
                return Err(Error::Config(format!("branch {}: weekday index > 6", b + 1)));
            }
        }
        Ok(())
    }

    /// Reads keys `n_branches`, `seed`, `base_level`, `trend`, `noise_sd`,
    /// `weekly_profiles.<i>` (seven comma-separated factors) and
    /// `closed_days.<i>` (comma-separated weekday indices, 0 = Monday), with
    /// `i` counting branches from 1.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let n_branches: usize = kv
            .get("n_branches")?
            .ok_or_else(|| Error::Config("missing n_branches".into()))?;
        let defaults = SynthConfig::six_branch(0);
        let mut weekly_profiles = Vec::with_capacity(n_branches);
        let mut closed_days = Vec::with_capacity(n_branches);
        for i in 1..=n_branches {
            let profile = match kv.get_list::<f64>(&format!("weekly_profiles.{i}"))? {
                Some(v) => <[f64; 7]>::try_from(v.as_slice()).map_err(|_| {
                    Error::Config(format!("weekly_profiles.{i} needs exactly 7 factors"))
                })?,
                None => *defaults
                    .weekly_profiles
                    .get(i - 1)
                    .ok_or_else(|| Error::Config(format!("missing weekly_profiles.{i}")))?,
            };
            let closed = match kv.get_list::<u32>(&format!("closed_days.{i}"))? {
                Some(v) => v,
                None => (0..7).filter(|&d| profile[d as usize] == 0.0).collect(),
            };
            weekly_profiles.push(profile);
            closed_days.push(closed);
        }
        let cfg = SynthConfig {
            n_branches,
            seed: kv.get_or("seed", 0)?,
            weekly_profiles,
            base_level: kv.get_or("base_level", defaults.base_level)?,
            trend: kv.get_or("trend", defaults.trend)?,
            noise_sd: kv.get_or("noise_sd", defaults.noise_sd)?,
            closed_days,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("n_branches", self.n_branches);
        kv.set("seed", self.seed);
        kv.set("base_level", self.base_level);
        kv.set("trend", self.trend);
        kv.set("noise_sd", self.noise_sd);
        for (i, (p, c)) in self.weekly_profiles.iter().zip(&self.closed_days).enumerate() {
            kv.set(&format!("weekly_profiles.{}", i + 1), join(p.iter()));
            kv.set(&format!("closed_days.{}", i + 1), join(c.iter()));
        }
        kv
    }
}

fn join<T: ToString>(it: impl Iterator<Item = T>) -> String {
    it.map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Generates one series per configured branch over `[start, end]`.
pub fn generate_synthetic(config: &SynthConfig, start: NaiveDate, end: NaiveDate) -> Result<Vec<BranchSeries>> {
    config.validate()?;
    if start >= end {
        return Err(Error::Config(format!("start {start} must precede end {end}")));
    }
    let days = (end - start).num_days() as u64 + 1;
    let mut out = Vec::with_capacity(config.n_branches);
    for b in 0..config.n_branches {
        let label = SynthConfig::branch_label(b);
        let mut rng = RngStream::labeled(config.seed, &["synth", &label]);
        let profile = &config.weekly_profiles[b];
        let closed = &config.closed_days[b];
        let mut obs = Vec::with_capacity(days as usize);
        for i in 0..days {
            let date = start + Days::new(i);
            let wd = date.weekday().num_days_from_monday();
            if closed.contains(&wd) {
                continue;
            }
            let years = date.year() - start.year();
            let level = config.base_level * config.trend.powi(years) * profile[wd as usize];
            let eps = rng.normal(0.0, config.noise_sd);
            obs.push(Observation {
                date,
                revenue: level * (1.0 + eps),
            });
        }
        out.push(BranchSeries::new(label, obs).with_closed_weekdays(closed.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    #[test]
    fn noiseless_flat_profile_is_constant() {
        let cfg = SynthConfig {
            n_branches: 1,
            seed: 1,
            weekly_profiles: vec![[1.0; 7]],
            base_level: 250.0,
            trend: 1.0,
            noise_sd: 0.0,
            closed_days: vec![vec![]],
        };
        let s = &generate_synthetic(&cfg, d(2016, 1, 1), d(2016, 3, 1)).unwrap()[0];
        assert!(s.observations.iter().all(|o| o.revenue == 250.0));
        assert_eq!(s.len(), 61);
    }

    #[test]
    fn deterministic_and_closed_days_omitted() {
        let cfg = SynthConfig::four_branch(9);
        let a = generate_synthetic(&cfg, d(2015, 1, 1), d(2015, 12, 31)).unwrap();
        let b = generate_synthetic(&cfg, d(2015, 1, 1), d(2015, 12, 31)).unwrap();
        assert_eq!(a, b);
        assert!(a[3]
            .observations
            .iter()
            .all(|o| o.date.weekday() != chrono::Weekday::Sun));
        assert_eq!(a[3].closed_weekdays, vec![6]);
        let other = generate_synthetic(&SynthConfig::four_branch(10), d(2015, 1, 1), d(2015, 12, 31)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn validation() {
        let mut cfg = SynthConfig::four_branch(0);
        cfg.n_branches = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::four_branch(0);
        cfg.closed_days[0] = vec![2];
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::four_branch(0);
        cfg.noise_sd = 1.0;
        assert!(cfg.validate().is_err());
        assert!(generate_synthetic(&SynthConfig::four_branch(0), d(2015, 1, 2), d(2015, 1, 1)).is_err());
    }

    #[test]
    fn kv_round_trip() {
        let cfg = SynthConfig::six_branch(123);
        let back = SynthConfig::from_kv(&KvFile::parse(&cfg.to_kv().render()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
