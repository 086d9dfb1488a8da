//! Scenario configuration and the on-disk scenario format.
//!
//! Scenario files are TOML documents whose keys mirror [`ScenarioConfig`]
//! one-to-one. The first line must be the version header
//! `# overwatch-scenario v1`. Named presets (`m1`, `m2`, `m3`, `m1-small`,
//! `corridor`) are compiled into the library.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCENARIO_HEADER: &str = "# overwatch-scenario v1";

const PRESETS: &[(&str, &str)] = &[
    ("m1", include_str!("../scenarios/m1.cfg")),
    ("m2", include_str!("../scenarios/m2.cfg")),
    ("m3", include_str!("../scenarios/m3.cfg")),
    ("m1-small", include_str!("../scenarios/m1-small.cfg")),
    ("corridor", include_str!("../scenarios/corridor.cfg")),
];

/// Shape of the unit risk an adversary imposes around its position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RiskProfile {
    /// `max(0, peak - slope * |s - z|)` on `[z - peak/slope, z + peak/slope]`.
    Triangular { peak: f64, slope: f64 },
    /// Linear interpolation between `[offset, unit_risk]` pairs, offsets
    /// relative to the adversary position and strictly increasing.
    Piecewise { breakpoints: Vec<[f64; 2]> },
}

impl RiskProfile {
    pub fn triangular(peak: f64, slope: f64) -> Self {
        RiskProfile::Triangular { peak, slope }
    }

    pub fn peak(&self) -> f64 {
        match self {
            RiskProfile::Triangular { peak, .. } => *peak,
            RiskProfile::Piecewise { breakpoints } => {
                breakpoints.iter().map(|b| b[1]).fold(0.0, f64::max)
            }
        }
    }

    /// Impact zone for an adversary at `z`, clipped to the route.
    pub fn zone(&self, z: f64, route_length: f64) -> (f64, f64) {
        let (lo, hi) = match self {
            RiskProfile::Triangular { peak, slope } => (z - peak / slope, z + peak / slope),
            RiskProfile::Piecewise { breakpoints } => (
                z + breakpoints[0][0],
                z + breakpoints[breakpoints.len() - 1][0],
            ),
        };
        (lo.max(0.0), hi.min(route_length))
    }

    /// Unit risk at `s` for an adversary at `z`; zero outside the zone.
    pub fn risk(&self, s: f64, z: f64, route_length: f64) -> f64 {
        let (lo, hi) = self.zone(z, route_length);
        if s < lo || s > hi {
            return 0.0;
        }
        match self {
            RiskProfile::Triangular { peak, slope } => (peak - slope * (s - z).abs()).max(0.0),
            RiskProfile::Piecewise { breakpoints } => {
                let x = s - z;
                for w in breakpoints.windows(2) {
                    let ([x0, y0], [x1, y1]) = (w[0], w[1]);
                    if x >= x0 && x <= x1 {
                        let frac = (x - x0) / (x1 - x0);
                        return (y0 + frac * (y1 - y0)).max(0.0);
                    }
                }
                0.0
            }
        }
    }

    fn validate(&self, idx: usize) -> Result<()> {
        match self {
            RiskProfile::Triangular { peak, slope } => {
                if !(peak.is_finite() && *peak > 0.0 && slope.is_finite() && *slope > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "adversary {idx}: triangular profile needs peak > 0 and slope > 0"
                    )));
                }
            }
            RiskProfile::Piecewise { breakpoints } => {
                if breakpoints.len() < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "adversary {idx}: piecewise profile needs at least two breakpoints"
                    )));
                }
                if breakpoints
                    .iter()
                    .any(|b| !(b[0].is_finite() && b[1].is_finite() && b[1] >= 0.0))
                {
                    return Err(Error::InvalidConfig(format!(
                        "adversary {idx}: breakpoint risks must be finite and nonnegative"
                    )));
                }
                if breakpoints.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(Error::InvalidConfig(format!(
                        "adversary {idx}: breakpoint offsets must be strictly increasing"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    /// Default position, used when placements are fixed.
    pub position: f64,
    /// Admissible positions the adversary is drawn from.
    pub support: Vec<f64>,
    /// Per-adversary override of the scenario-wide guard coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub risk: RiskProfile,
}

impl AdversarySpec {
    pub fn triangular(position: f64, support: Vec<f64>, peak: f64, slope: f64) -> Self {
        AdversarySpec {
            position,
            support,
            beta: None,
            risk: RiskProfile::triangular(peak, slope),
        }
    }

    pub fn in_support(&self, z: f64) -> bool {
        self.support.contains(&z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub route_length: f64,
    pub dt: f64,
    pub n_robots: usize,
    pub v_max: f64,
    pub time_penalty: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub shaping_c: f64,
    pub terminal_q: f64,
    pub reward_scale: f64,
    pub beta: f64,
    #[serde(default)]
    pub adversaries: Vec<AdversarySpec>,
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset '{name}'")))?;
        Self::parse(text, Path::new(name))
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// Resolves either a preset name (`m1`, `m1.cfg`) or a path on disk.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.exists() {
            return Self::load(path);
        }
        let stem = name_or_path.strip_suffix(".cfg").unwrap_or(name_or_path);
        Self::preset(stem)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        if text.lines().next().map(str::trim) != Some(SCENARIO_HEADER) {
            return Err(Error::format(
                origin,
                format!("missing version header '{SCENARIO_HEADER}'"),
            ));
        }
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_file_string(&self) -> String {
        let body = toml::to_string(self).expect("scenario serializes");
        format!("{SCENARIO_HEADER}\n{body}")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn n_adversaries(&self) -> usize {
        self.adversaries.len()
    }

    pub fn beta_for(&self, j: usize) -> f64 {
        self.adversaries[j].beta.unwrap_or(self.beta)
    }

    pub fn zone(&self, j: usize, z: f64) -> (f64, f64) {
        self.adversaries[j].risk.zone(z, self.route_length)
    }

    /// Integer speeds `0..=floor(v_max)`, the discrete action set.
    pub fn discrete_speeds(&self) -> Vec<f64> {
        (0..=self.v_max.floor() as usize)
            .map(|v| v as f64)
            .collect()
    }

    /// Length of one weighted-hot block.
    pub fn block_len(&self) -> usize {
        self.route_length.ceil() as usize + 1
    }

    pub fn with_robots(mut self, n: usize) -> Self {
        self.n_robots = n;
        self
    }

    pub fn default_placement(&self) -> Vec<f64> {
        self.adversaries.iter().map(|a| a.position).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let l = self.route_length;
        if !(l.is_finite() && l > 0.0) {
            return bad(format!("route_length must be positive, got {l}"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_robots == 0 {
            return bad("n_robots must be at least 1".into());
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.time_penalty.is_finite() && self.time_penalty >= 0.0) {
            return bad("time_penalty must be nonnegative".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.shaping_c.is_finite() && self.shaping_c >= 0.0) {
            return bad("shaping_c must be nonnegative".into());
        }
        if !(self.terminal_q.is_finite() && self.terminal_q >= 0.0) {
            return bad("terminal_q must be nonnegative".into());
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward_scale must be positive".into());
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        for (j, adv) in self.adversaries.iter().enumerate() {
            adv.risk.validate(j)?;
            if let Some(b) = adv.beta {
                if !(b > 0.0 && b < 1.0) {
                    return bad(format!("adversary {j}: beta must lie in (0, 1), got {b}"));
                }
            }
            if adv.support.is_empty() {
                return bad(format!("adversary {j}: empty support"));
            }
            if let Some(d) = adv.support.iter().find(|&&d| !(d > 0.0 && d < l)) {
                return bad(format!("adversary {j}: support point {d} outside (0, {l})"));
            }
            if !adv.in_support(adv.position) {
                return bad(format!(
                    "adversary {j}: position {} not in its support",
                    adv.position
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in ScenarioConfig::preset_names() {
            let cfg = ScenarioConfig::preset(name).unwrap();
            assert_eq!(cfg.name, name);
        }
    }

    #[test]
    fn m1_support_is_eleven_positions_centered() {
        let cfg = ScenarioConfig::preset("m1").unwrap();
        let d = &cfg.adversaries[0].support;
        assert_eq!(d.len(), 11);
        assert_eq!(d[0] + d[10], cfg.route_length);
    }

    #[test]
    fn file_round_trip() {
        let cfg = ScenarioConfig::preset("m3").unwrap();
        let back = ScenarioConfig::parse(&cfg.to_file_string(), Path::new("mem")).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn missing_header_rejected() {
        let text = ScenarioConfig::preset("m1").unwrap().to_file_string();
        let stripped: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ScenarioConfig::parse(&stripped, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = ScenarioConfig::preset("m1").unwrap();
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::preset("m1").unwrap();
        cfg.adversaries[0].position = 12.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::preset("m1").unwrap();
        cfg.adversaries[0].support.push(70.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn triangular_zone_clipped_to_route() {
        let p = RiskProfile::triangular(6.0, 1.0);
        assert_eq!(p.zone(3.0, 70.0), (0.0, 9.0));
        assert_eq!(p.zone(35.0, 70.0), (29.0, 41.0));
    }

    #[test]
    fn piecewise_interpolates_and_vanishes_outside() {
        let p = RiskProfile::Piecewise {
            breakpoints: vec![[-4.0, 0.0], [0.0, 2.0], [2.0, 6.0], [3.0, 0.0]],
        };
        assert_eq!(p.zone(10.0, 70.0), (6.0, 13.0));
        assert_eq!(p.risk(8.0, 10.0, 70.0), 1.0);
        assert_eq!(p.risk(11.0, 10.0, 70.0), 4.0);
        assert_eq!(p.risk(5.0, 10.0, 70.0), 0.0);
        assert_eq!(p.peak(), 6.0);
    }
}
