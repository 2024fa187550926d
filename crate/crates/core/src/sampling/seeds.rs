use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    Two,
    E,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// How many distinct seeds `g` workers use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeedPolicy {
    AllDistinct,
    AllSame,
    /// `max(1, round(log_b g))` seeds.
    Log(LogBase),
    /// `max(1, ceil(g^alpha))` seeds.
    PowerLaw(f64),
    /// Power law whose exponent comes from a fitted type/token curve.
    ZipfFreq(f64),
}

impl fmt::Display for SeedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedPolicy::AllDistinct => f.write_str("distinct"),
            SeedPolicy::AllSame => f.write_str("same"),
            SeedPolicy::Log(LogBase::Two) => f.write_str("log2"),
            SeedPolicy::Log(LogBase::E) => f.write_str("loge"),
            SeedPolicy::Log(LogBase::Ten) => f.write_str("log10"),
            SeedPolicy::PowerLaw(a) => write!(f, "power:{a}"),
            SeedPolicy::ZipfFreq(a) => write!(f, "zipf:{a}"),
        }
    }
}

impl FromStr for SeedPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let alpha = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad exponent in seed policy `{s}`")))
        };
        match s {
            "distinct" => Ok(SeedPolicy::AllDistinct),
            "same" => Ok(SeedPolicy::AllSame),
            "log2" => Ok(SeedPolicy::Log(LogBase::Two)),
            "loge" => Ok(SeedPolicy::Log(LogBase::E)),
            "log10" => Ok(SeedPolicy::Log(LogBase::Ten)),
            _ => {
                if let Some(v) = s.strip_prefix("power:") {
                    Ok(SeedPolicy::PowerLaw(alpha(v)?))
                } else if let Some(v) = s.strip_prefix("zipf:") {
                    Ok(SeedPolicy::ZipfFreq(alpha(v)?))
                } else {
                    Err(Error::Config(format!(
                        "seed policy must be one of distinct, same, log2, loge, log10, power:<alpha>; got `{s}`"
                    )))
                }
            }
        }
    }
}

pub fn group_count(policy: SeedPolicy, g: usize) -> Result<usize> {
    if g == 0 {
        return Err(Error::Config("seed plan needs at least one worker".into()));
    }
    let gf = g as f64;
    let count = match policy {
        SeedPolicy::AllDistinct => g,
        SeedPolicy::AllSame => 1,
        SeedPolicy::Log(base) => (base.log(gf).round() as usize).max(1),
        SeedPolicy::PowerLaw(alpha) | SeedPolicy::ZipfFreq(alpha) => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(Error::Config(format!("seed exponent must lie in (0, 1], got {alpha}")));
            }
            // tolerate g^alpha landing a hair above an integer
            let raw = gf.powf(alpha);
            let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
            (snapped as usize).max(1)
        }
    };
    Ok(count.min(g))
}

/// Worker-to-seed assignment. Workers form contiguous rank blocks of
/// near-equal size; each block shares one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedGroupPlan {
    pub policy: SeedPolicy,
    pub g: usize,
    pub group_count: usize,
    pub group_of: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SeedGroupPlan {
    pub fn seed_of(&self, worker: usize) -> u64 {
        self.seeds[worker]
    }
}

pub fn plan_seeds(g: usize, policy: SeedPolicy, master_seed: u64) -> Result<SeedGroupPlan> {
    let groups = group_count(policy, g)?;
    let group_of: Vec<usize> = (0..g).map(|r| r * groups / g).collect();
    let group_seeds: Vec<u64> = (0..groups as u64)
        .map(|i| seed::derive_indexed(master_seed, "seed-group", i))
        .collect();
    Ok(SeedGroupPlan {
        policy,
        g,
        group_count: groups,
        seeds: group_of.iter().map(|&grp| group_seeds[grp]).collect(),
        group_of,
    })
}
