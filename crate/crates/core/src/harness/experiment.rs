use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::env::TeamState;
use crate::error::{Error, Result};
use crate::harness::log::write_trajectory;
use crate::ppo::{
    load_policy, policy_episode, save_policy, train, write_curve, CurvePoint, PolicyParams,
    TrainConfig, Variant,
};
use crate::solvers::{
    greedy_baseline, overwatch_heuristic, solve_exact_cached, DiscreteInstance, OracleSolution,
};
use crate::trajectory::{run_episode, Relocation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Oracle,
    Greedy,
    Overwatch,
    DPpo,
    HPpo,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Oracle,
        Method::Greedy,
        Method::Overwatch,
        Method::DPpo,
        Method::HPpo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Oracle => "oracle",
            Method::Greedy => "greedy",
            Method::Overwatch => "overwatch",
            Method::DPpo => "d-ppo",
            Method::HPpo => "h-ppo",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::DPpo => Some(Variant::Discrete),
            Method::HPpo => Some(Variant::Hybrid),
            _ => None,
        }
    }

    pub fn is_learned(self) -> bool {
        self.variant().is_some()
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "") == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Where adversaries sit during an evaluation episode.
#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    /// Drawn from each support with the run's seed.
    Sampled,
    Fixed(Vec<f64>),
    /// Start at `initial`, then move `adversary` to `position` before the
    /// action at `step`.
    Relocate {
        initial: Vec<f64>,
        step: usize,
        adversary: usize,
        position: f64,
    },
}

impl Placement {
    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<()> {
        match self {
            Placement::Sampled => Ok(()),
            Placement::Fixed(p) => TeamState::new(cfg, p.clone()).map(|_| ()),
            Placement::Relocate {
                initial,
                step,
                adversary,
                position,
            } => {
                TeamState::new(cfg, initial.clone())?;
                if *step >= cfg.horizon {
                    return Err(Error::InvalidConfig(format!(
                        "relocation step {step} must be before the horizon {}",
                        cfg.horizon
                    )));
                }
                let adv = cfg.adversaries.get(*adversary).ok_or_else(|| {
                    Error::InvalidConfig(format!("no adversary {}", adversary + 1))
                })?;
                if !adv.in_support(*position) {
                    return Err(Error::NotInSupport {
                        adversary: *adversary,
                        position: *position,
                    });
                }
                Ok(())
            }
        }
    }

    fn start<R: rand::Rng>(&self, cfg: &ScenarioConfig, rng: &mut R) -> Result<TeamState> {
        match self {
            Placement::Sampled => Ok(TeamState::sample(cfg, rng)),
            Placement::Fixed(p) | Placement::Relocate { initial: p, .. } => {
                TeamState::new(cfg, p.clone())
            }
        }
    }

    fn relocations(&self) -> Vec<Relocation> {
        match self {
            Placement::Relocate {
                step,
                adversary,
                position,
                ..
            } => vec![Relocation {
                step: *step,
                adversary: *adversary,
                position: *position,
            }],
            _ => Vec::new(),
        }
    }

    fn is_fixed(&self) -> bool {
        !matches!(self, Placement::Sampled)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    /// Preset name or scenario file path.
    pub scenario: String,
    /// Overrides the scenario's robot count.
    pub robots: Option<usize>,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub placement: Placement,
    pub out_dir: PathBuf,
    pub train: TrainConfig,
    /// Evaluate this policy instead of training: either a policy file used
    /// for every seed, or a directory holding `seed-<s>/policy.bin`,
    /// optionally under a `<method>/` subdirectory.
    pub checkpoint: Option<PathBuf>,
    /// Oracle cache directory; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
    /// Round hybrid speeds onto the integer speed set during evaluation.
    pub snap_speeds: bool,
}

impl ExperimentSpec {
    pub fn new(scenario: impl Into<String>, method: Method, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            scenario: scenario.into(),
            robots: None,
            method,
            seeds: vec![0],
            placement: Placement::Sampled,
            out_dir: out_dir.into(),
            train: TrainConfig::default(),
            checkpoint: None,
            cache_dir: None,
            snap_speeds: true,
        }
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let cfg = ScenarioConfig::resolve(&self.scenario)?;
        let cfg = match self.robots {
            Some(n) => cfg.with_robots(n),
            None => cfg,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of the comparison table. `mean_return` is `None` for runs that
/// failed, with the reason in `note`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub scenario: String,
    pub method: Method,
    pub mean_return: Option<f64>,
    pub std_return: Option<f64>,
    pub seeds: usize,
    pub episodes_to_converge: Option<f64>,
    pub wall_clock_seconds: f64,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub log_path: PathBuf,
    pub curve: Option<Vec<CurvePoint>>,
    pub params: Option<PolicyParams>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub row: ComparisonRow,
    pub runs: Vec<SeedRun>,
}

/// Episodes consumed before the learning curve first comes within 5% of
/// its final level (the mean of its last tenth).
pub fn episodes_to_converge(curve: &[CurvePoint]) -> Option<usize> {
    let finite: Vec<&CurvePoint> = curve.iter().filter(|p| p.mean_return.is_finite()).collect();
    if finite.is_empty() {
        return None;
    }
    let tail = (finite.len() / 10).max(1);
    let level = finite[finite.len() - tail..]
        .iter()
        .map(|p| p.mean_return)
        .sum::<f64>()
        / tail as f64;
    finite
        .iter()
        .find(|p| p.mean_return >= level - 0.05 * level.abs())
        .map(|p| p.episodes)
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Oracle policy that re-solves whenever the adversaries move.
struct OraclePolicy<'a> {
    cfg: &'a ScenarioConfig,
    cache_dir: Option<&'a Path>,
    solutions: HashMap<Vec<u64>, OracleSolution>,
}

impl OraclePolicy<'_> {
    fn action(&mut self, state: &TeamState) -> Result<crate::env::HybridAction> {
        let key: Vec<u64> = state.adversaries.iter().map(|z| z.to_bits()).collect();
        if !self.solutions.contains_key(&key) {
            let inst = DiscreteInstance::new(self.cfg.clone(), state.adversaries.clone())?;
            let sol = solve_exact_cached(&inst, self.cache_dir)?;
            self.solutions.insert(key.clone(), sol);
        }
        self.solutions[&key].policy_action(state)
    }
}

/// Runs one method over the experiment's seeds, writing a trajectory log (and
/// for learners a checkpoint and learning curve) per seed under
/// `out_dir/<method>/seed-<s>/`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let cfg = spec.scenario_config()?;
    spec.placement.validate(&cfg)?;
    if spec.seeds.is_empty() {
        return Err(Error::InvalidConfig("at least one seed is required".into()));
    }
    let clock = Instant::now();
    let seeds: Vec<u64> = if !spec.method.is_learned() && spec.placement.is_fixed() {
        spec.seeds[..1].to_vec()
    } else {
        spec.seeds.clone()
    };
    let relocations = spec.placement.relocations();
    let mut oracle = OraclePolicy {
        cfg: &cfg,
        cache_dir: spec.cache_dir.as_deref(),
        solutions: HashMap::new(),
    };
    let mut runs = Vec::new();
    for &seed in &seeds {
        let dir = spec
            .out_dir
            .join(spec.method.name())
            .join(format!("seed-{seed}"));
        std::fs::create_dir_all(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_ad5e);
        let start = spec.placement.start(&cfg, &mut rng)?;
        let (trajectory, curve, params) = match spec.method {
            Method::Oracle => (
                run_episode(&cfg, start, &relocations, |s| oracle.action(s))?,
                None,
                None,
            ),
            Method::Greedy => (
                run_episode(&cfg, start, &relocations, |s| greedy_baseline(s, &cfg))?,
                None,
                None,
            ),
            Method::Overwatch => (
                run_episode(&cfg, start, &relocations, |s| overwatch_heuristic(s, &cfg))?,
                None,
                None,
            ),
            Method::DPpo | Method::HPpo => {
                let variant = spec.method.variant().expect("learned method");
                let (params, curve) = match &spec.checkpoint {
                    Some(ck) => {
                        let path = if ck.is_dir() {
                            let per_method = ck.join(spec.method.name());
                            let root = if per_method.is_dir() { &per_method } else { ck };
                            root.join(format!("seed-{seed}")).join("policy.bin")
                        } else {
                            ck.clone()
                        };
                        let params = load_policy(&path, &cfg)?;
                        if params.variant != variant {
                            return Err(Error::InvalidConfig(format!(
                                "checkpoint {} holds a {} policy, not {}",
                                path.display(),
                                params.variant.name(),
                                variant.name()
                            )));
                        }
                        (params, None)
                    }
                    None => {
                        let out = train(&cfg, &spec.train, variant, seed)?;
                        save_policy(&out.params, &dir.join("policy.bin"))?;
                        write_curve(&dir.join("curve.csv"), &out.curve)?;
                        (out.params, Some(out.curve))
                    }
                };
                let traj = policy_episode(&params, &cfg, start, &relocations, spec.snap_speeds)?;
                (traj, curve, Some(params))
            }
        };
        let log_path = dir.join("trajectory.csv");
        write_trajectory(&log_path, &trajectory, &cfg)?;
        runs.push(SeedRun {
            seed,
            trajectory,
            log_path,
            curve,
            params,
        });
    }
    let returns: Vec<f64> = runs.iter().map(|r| r.trajectory.raw_return()).collect();
    let converge: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.curve.as_deref().and_then(episodes_to_converge))
        .map(|e| e as f64)
        .collect();
    let row = ComparisonRow {
        scenario: cfg.name.clone(),
        method: spec.method,
        mean_return: Some(returns.iter().sum::<f64>() / returns.len() as f64),
        std_return: Some(population_std(&returns)),
        seeds: runs.len(),
        episodes_to_converge: if converge.is_empty() {
            None
        } else {
            Some(converge.iter().sum::<f64>() / converge.len() as f64)
        },
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        note: String::new(),
    };
    Ok(ExperimentResult { row, runs })
}
