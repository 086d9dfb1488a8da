use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::env::{self, TeamState};
use crate::error::{Error, Result};
use crate::ppo::buffer::{Boundary, RolloutBatch};
use crate::ppo::policy::{save_policy, Encoding, PolicyParams, Variant};
use crate::ppo::update::{new_optimizer, ppo_update};

pub const TRAIN_HEADER: &str = "# overwatch-train v1";
pub const CURVE_HEADER: &str = "# format: overwatch-curve/1";

/// Learner hyperparameters. Files use the TOML layout of scenario files
/// under the `# overwatch-train v1` header; omitted keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub clip_epsilon: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub rollout_steps: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Linearly decay the learning rate to zero over the step budget.
    pub anneal_lr: bool,
    pub seeds: usize,
    pub total_steps: usize,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_spread: f64,
    pub encoding: Encoding,
    pub normalize_advantages: bool,
    /// Overrides the scenario's discount when set.
    pub gamma: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clip_epsilon: 0.2,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch_size: 256,
            rollout_steps: 2048,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            anneal_lr: false,
            seeds: 5,
            total_steps: 200_000,
            max_grad_norm: 0.5,
            hidden: vec![128, 128],
            init_log_spread: 0.0,
            encoding: Encoding::WeightedHot,
            normalize_advantages: true,
            gamma: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            ));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!(
                "gae_lambda must lie in [0, 1], got {}",
                self.gae_lambda
            ));
        }
        let counts = [
            ("epochs", self.epochs),
            ("minibatch_size", self.minibatch_size),
            ("rollout_steps", self.rollout_steps),
            ("seeds", self.seeds),
            ("total_steps", self.total_steps),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        let reals = [
            ("entropy_coef", self.entropy_coef),
            ("value_coef", self.value_coef),
            ("max_grad_norm", self.max_grad_norm),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if !self.init_log_spread.is_finite() {
            return bad("init_log_spread must be finite".into());
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad(format!("gamma must lie in (0, 1], got {g}"));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        if text.lines().next().map(str::trim) != Some(TRAIN_HEADER) {
            return Err(Error::format(
                origin,
                format!("missing version header '{TRAIN_HEADER}'"),
            ));
        }
        let tc: TrainConfig = toml::from_str(text)?;
        tc.validate()?;
        Ok(tc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_file_string(&self) -> String {
        let body = toml::to_string(self).expect("train config serializes");
        format!("{TRAIN_HEADER}\n{body}")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn discount(&self, cfg: &ScenarioConfig) -> f64 {
        self.gamma.unwrap_or(cfg.gamma)
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub steps: usize,
    pub episodes: usize,
    /// Mean raw return of episodes finished during this iteration (NaN if
    /// none finished).
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub curve: Vec<CurvePoint>,
    pub episodes: usize,
    pub steps: usize,
}

/// Trains a fresh policy with default options.
pub fn train(
    cfg: &ScenarioConfig,
    tc: &TrainConfig,
    variant: Variant,
    seed: u64,
) -> Result<TrainOutcome> {
    train_with(cfg, tc, variant, seed, None, |_| {})
}

/// Trains a fresh policy. Adversaries are resampled from their supports at
/// every episode reset. If an update diverges and `abort_dir` is given, the
/// last good parameters are written there as `aborted.policy` before the
/// error is returned. `progress` sees every curve point as it is produced.
pub fn train_with(
    cfg: &ScenarioConfig,
    tc: &TrainConfig,
    variant: Variant,
    seed: u64,
    abort_dir: Option<&Path>,
    mut progress: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    tc.validate()?;
    let gamma = tc.discount(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = PolicyParams::new(
        cfg,
        variant,
        tc.encoding,
        &tc.hidden,
        tc.init_log_spread,
        &mut rng,
    );
    let mut opt = new_optimizer(&params, tc.learning_rate);
    let mut state = TeamState::sample(cfg, &mut rng);
    let mut episode_return = 0.0;
    let mut curve = Vec::new();
    let mut steps = 0;
    let mut episodes = 0;
    let iterations = tc.total_steps.div_ceil(tc.rollout_steps);

    for iteration in 0..iterations {
        if tc.anneal_lr {
            opt.lr = tc.learning_rate * (1.0 - iteration as f64 / iterations as f64);
        }
        let mut batch = RolloutBatch::new();
        let mut finished = Vec::new();
        for _ in 0..tc.rollout_steps {
            let enc = params.encode(&state, cfg)?;
            let value = params.value(&enc)?;
            let sampled = params.sample_action(&enc, &mut rng)?;
            let out = env::step(&state, &sampled.action, cfg)?;
            episode_return += out.raw_reward;
            steps += 1;
            let boundary = if out.done {
                if out.next_state.all_arrived(cfg) {
                    Boundary::Done
                } else {
                    let next = params.encode(&out.next_state, cfg)?;
                    Boundary::Truncated {
                        bootstrap: params.value(&next)?,
                    }
                }
            } else {
                Boundary::None
            };
            batch.push(enc, sampled, out.shaped_reward, value, boundary);
            if out.done {
                finished.push(episode_return);
                episodes += 1;
                episode_return = 0.0;
                state = TeamState::sample(cfg, &mut rng);
            } else {
                state = out.next_state;
            }
        }
        if batch.boundaries.last() == Some(&Boundary::None) {
            let next = params.encode(&state, cfg)?;
            batch.mark_last(Boundary::Truncated {
                bootstrap: params.value(&next)?,
            });
        }
        batch.compute_advantages(gamma, tc.gae_lambda)?;
        let snapshot = params.clone();
        let stats = match ppo_update(&mut params, &mut opt, &batch, tc, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                if let Some(dir) = abort_dir {
                    save_policy(&snapshot, &dir.join("aborted.policy"))?;
                }
                return Err(e);
            }
        };
        let mean_return = if finished.is_empty() {
            f64::NAN
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        let point = CurvePoint {
            iteration,
            steps,
            episodes,
            mean_return,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        };
        progress(&point);
        curve.push(point);
    }
    Ok(TrainOutcome {
        params,
        curve,
        episodes,
        steps,
    })
}

/// Writes the learning curve as CSV under a versioned comment header.
pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut text = Vec::new();
    writeln!(text, "{CURVE_HEADER}")?;
    let mut w = csv::Writer::from_writer(&mut text);
    w.write_record([
        "iteration",
        "steps",
        "episodes",
        "mean_return",
        "policy_loss",
        "value_loss",
        "entropy",
        "clip_fraction",
    ])?;
    for p in curve {
        w.write_record([
            p.iteration.to_string(),
            p.steps.to_string(),
            p.episodes.to_string(),
            p.mean_return.to_string(),
            p.policy_loss.to_string(),
            p.value_loss.to_string(),
            p.entropy.to_string(),
            p.clip_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    drop(w);
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a learning-curve CSV written by [`write_curve`].
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = std::fs::read_to_string(path)?;
    let body = text
        .strip_prefix(CURVE_HEADER)
        .ok_or_else(|| Error::format(path, format!("missing header '{CURVE_HEADER}'")))?;
    let mut r = csv::Reader::from_reader(body.trim_start().as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 8 {
            return Err(Error::format(
                path,
                format!("expected 8 columns, got {}", rec.len()),
            ));
        }
        let f = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|_| Error::format(path, format!("bad number '{}'", &rec[k])))
        };
        let u = |k: usize| -> Result<usize> {
            rec[k]
                .parse()
                .map_err(|_| Error::format(path, format!("bad count '{}'", &rec[k])))
        };
        out.push(CurvePoint {
            iteration: u(0)?,
            steps: u(1)?,
            episodes: u(2)?,
            mean_return: f(3)?,
            policy_loss: f(4)?,
            value_loss: f(5)?,
            entropy: f(6)?,
            clip_fraction: f(7)?,
        });
    }
    Ok(out)
}
