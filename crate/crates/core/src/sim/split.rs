use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MotionProfile, SceneConfig, SNR_CHOICES, T60_CHOICES};
use crate::error::bail;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl core::fmt::Display for Split {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => bail!(Config, "unknown split {s:?} (expected train, val or test)"),
        }
    }
}

/// Dataset plan: scene count, the condition grid, and the template for
/// every other scene parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SplitConfig {
    pub n_scenes: usize,
    pub seed: u64,
    pub profiles: Vec<MotionProfile>,
    pub snrs: Vec<f64>,
    pub t60s: Vec<f64>,
    /// Train / val / test shares.
    pub fractions: [f64; 3],
    pub scene: SceneConfig,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_scenes: 9,
            seed: 0,
            profiles: MotionProfile::ALL.to_vec(),
            snrs: SNR_CHOICES.to_vec(),
            t60s: T60_CHOICES.to_vec(),
            fractions: [0.6, 0.2, 0.2],
            scene: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePlan {
    pub name: String,
    pub split: Split,
    pub config: SceneConfig,
}

/// Split sizes for a group of `n`: at least one val and one test scene once
/// the group has three members.
fn quotas(n: usize, frac: [f64; 3]) -> [usize; 3] {
    let total: f64 = frac.iter().sum();
    let mut val = libm::round(n as f64 * frac[1] / total) as usize;
    let mut test = libm::round(n as f64 * frac[2] / total) as usize;
    if n >= 3 {
        val = val.max(1);
        test = test.max(1);
    }
    while val + test > n {
        if test >= val {
            test -= 1
        } else {
            val -= 1
        }
    }
    [n - val - test, val, test]
}

/// Assigns conditions round-robin (profile fastest, then SNR, then T60) and
/// splits each profile group so that every split spreads over the SNRs.
pub fn plan_split(cfg: &SplitConfig) -> Result<Vec<ScenePlan>> {
    if cfg.n_scenes == 0 {
        bail!(Config, "n_scenes must be at least 1");
    }
    if cfg.profiles.is_empty() || cfg.snrs.is_empty() || cfg.t60s.is_empty() {
        bail!(Config, "profiles, snrs and t60s must be non-empty");
    }
    if cfg.fractions.iter().any(|f| !(*f >= 0.0)) || !(cfg.fractions.iter().sum::<f64>() > 0.0) {
        bail!(Config, "split fractions must be non-negative with a positive sum");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (np, ns) = (cfg.profiles.len(), cfg.snrs.len());
    let mut plans: Vec<ScenePlan> = (0..cfg.n_scenes)
        .map(|i| {
            let mut sc = cfg.scene.clone();
            sc.profile = cfg.profiles[i % np];
            sc.snr_db = cfg.snrs[(i / np) % ns];
            sc.t60 = cfg.t60s[(i / (np * ns)) % cfg.t60s.len()];
            sc.seed = rng.random();
            ScenePlan { name: format!("scene_{i:04}"), split: Split::Train, config: sc }
        })
        .collect();
    for p in &plans {
        p.config.validate()?;
    }

    for prof in &cfg.profiles {
        let members: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].config.profile == *prof).collect();
        let q = quotas(members.len(), cfg.fractions);
        // spread each split evenly along the SNR-cycling order
        let mut given = [0usize; 3];
        for (j, &i) in members.iter().enumerate() {
            let progress = (j + 1) as f64 / members.len() as f64;
            let s = (0..3)
                .filter(|&s| given[s] < q[s])
                .max_by(|&a, &b| {
                    let da = q[a] as f64 * progress - given[a] as f64;
                    let db = q[b] as f64 * progress - given[b] as f64;
                    // ties go to the rarer split
                    da.total_cmp(&db).then(q[b].cmp(&q[a]))
                })
                .unwrap_or(0);
            given[s] += 1;
            plans[i].split = [Split::Train, Split::Val, Split::Test][s];
        }
    }
    Ok(plans)
}
