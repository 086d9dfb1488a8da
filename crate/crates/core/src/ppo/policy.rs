use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::encoder;
use crate::env::{HybridAction, TeamState};
use crate::error::{Error, Result};
use crate::nn::{read_net, write_net, DenseNet, Matrix, Tape, Var};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
pub const LOG_SPREAD_MIN: f64 = -5.0;
pub const LOG_SPREAD_MAX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Categorical speed over the integer speed set.
    #[serde(rename = "d-ppo")]
    Discrete,
    /// Continuous speed from a clamped Gaussian.
    #[serde(rename = "h-ppo")]
    Hybrid,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Discrete => "d-ppo",
            Variant::Hybrid => "h-ppo",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d-ppo" | "dppo" | "discrete" => Ok(Variant::Discrete),
            "h-ppo" | "hppo" | "hybrid" => Ok(Variant::Hybrid),
            other => Err(Error::InvalidConfig(format!(
                "unknown learner variant '{other}'"
            ))),
        }
    }
}

/// State featurisation fed to both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    WeightedHot,
    /// Positions divided by the route length; the encoding ablation.
    Scalar,
}

impl Encoding {
    pub fn dim(self, cfg: &ScenarioConfig) -> usize {
        match self {
            Encoding::WeightedHot => encoder::encoded_dim(cfg),
            Encoding::Scalar => cfg.n_robots + cfg.n_adversaries(),
        }
    }

    pub fn encode(self, state: &TeamState, cfg: &ScenarioConfig) -> Result<Vec<f64>> {
        match self {
            Encoding::WeightedHot => encoder::encode_state(state, cfg),
            Encoding::Scalar => Ok(encoder::encode_scalar_features(state, cfg)),
        }
    }
}

/// A sampled joint action together with what is needed to re-evaluate its
/// probability: speed indices (discrete) or pre-clamp draws (hybrid).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAction {
    pub action: HybridAction,
    pub speed_choice: Vec<usize>,
    pub raw_speeds: Vec<f64>,
    pub log_prob: f64,
}

/// Actor, critic and the hybrid head's per-robot log-spreads.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub variant: Variant,
    pub encoding: Encoding,
    pub n_robots: usize,
    pub n_adversaries: usize,
    pub speeds: Vec<f64>,
    pub v_max: f64,
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub speed_log_spread: Vec<f64>,
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(
        cfg: &ScenarioConfig,
        variant: Variant,
        encoding: Encoding,
        hidden: &[usize],
        init_log_spread: f64,
        rng: &mut R,
    ) -> Self {
        let speeds = cfg.discrete_speeds();
        let input = encoding.dim(cfg);
        let block = match variant {
            Variant::Discrete => speeds.len() + cfg.n_adversaries(),
            Variant::Hybrid => 1 + cfg.n_adversaries(),
        };
        let mut actor_sizes = vec![input];
        actor_sizes.extend_from_slice(hidden);
        actor_sizes.push(cfg.n_robots * block);
        let mut critic_sizes = vec![input];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        let actor = DenseNet::new(&actor_sizes, 0.01, rng);
        let critic = DenseNet::new(&critic_sizes, 1.0, rng);
        let speed_log_spread = match variant {
            Variant::Discrete => Vec::new(),
            Variant::Hybrid => vec![init_log_spread; cfg.n_robots],
        };
        PolicyParams {
            variant,
            encoding,
            n_robots: cfg.n_robots,
            n_adversaries: cfg.n_adversaries(),
            speeds,
            v_max: cfg.v_max,
            actor,
            critic,
            speed_log_spread,
        }
    }

    /// Width of one robot's block of actor outputs.
    pub fn block_len(&self) -> usize {
        self.speed_width() + self.n_adversaries
    }

    fn speed_width(&self) -> usize {
        match self.variant {
            Variant::Discrete => self.speeds.len(),
            Variant::Hybrid => 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.actor.input_dim()
    }

    /// Checks that the networks fit `cfg`'s robot, adversary and encoding
    /// dimensions.
    pub fn check_compatible(&self, cfg: &ScenarioConfig) -> Result<()> {
        let checks = [
            (self.n_robots, cfg.n_robots, "policy robot count"),
            (
                self.n_adversaries,
                cfg.n_adversaries(),
                "policy adversary count",
            ),
            (
                self.input_dim(),
                self.encoding.dim(cfg),
                "policy input dimension",
            ),
            (
                self.critic.input_dim(),
                self.encoding.dim(cfg),
                "critic input dimension",
            ),
            (
                self.actor.output_dim(),
                self.n_robots * self.block_len(),
                "actor output width",
            ),
            (self.critic.output_dim(), 1, "critic output width"),
        ];
        for (actual, expected, context) in checks {
            if actual != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual,
                    context,
                });
            }
        }
        if self.variant == Variant::Hybrid && self.speed_log_spread.len() != self.n_robots {
            return Err(Error::DimensionMismatch {
                expected: self.n_robots,
                actual: self.speed_log_spread.len(),
                context: "speed spread count",
            });
        }
        if self.speeds != cfg.discrete_speeds() || self.v_max != cfg.v_max {
            return Err(Error::InvalidConfig(format!(
                "policy speed range (v_max = {}) does not match the scenario (v_max = {})",
                self.v_max, cfg.v_max
            )));
        }
        Ok(())
    }

    pub fn encode(&self, state: &TeamState, cfg: &ScenarioConfig) -> Result<Vec<f64>> {
        self.encoding.encode(state, cfg)
    }

    fn actor_output(&self, enc: &[f64]) -> Result<Vec<f64>> {
        let out = self.actor.forward(enc)?;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("actor output".into()));
        }
        Ok(out)
    }

    pub fn value(&self, enc: &[f64]) -> Result<f64> {
        let v = self.critic.forward(enc)?[0];
        if !v.is_finite() {
            return Err(Error::NonFinite("critic output".into()));
        }
        Ok(v)
    }

    fn speed_mean(&self, out: f64) -> f64 {
        self.v_max * (0.5 + out)
    }

    /// Draws a joint action and its combined log-probability.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        enc: &[f64],
        rng: &mut R,
    ) -> Result<SampledAction> {
        let out = self.actor_output(enc)?;
        let bl = self.block_len();
        let sw = self.speed_width();
        let mut sampled = SampledAction {
            action: HybridAction::new(Vec::new(), Vec::new()),
            speed_choice: Vec::with_capacity(self.n_robots),
            raw_speeds: Vec::with_capacity(self.n_robots),
            log_prob: 0.0,
        };
        for i in 0..self.n_robots {
            let block = &out[i * bl..(i + 1) * bl];
            match self.variant {
                Variant::Discrete => {
                    let lp = log_softmax(&block[..sw]);
                    let k = sample_categorical(&lp, rng);
                    sampled.log_prob += lp[k];
                    sampled.speed_choice.push(k);
                    sampled.raw_speeds.push(self.speeds[k]);
                    sampled.action.speeds.push(self.speeds[k]);
                }
                Variant::Hybrid => {
                    let mu = self.speed_mean(block[0]);
                    let ls = self.speed_log_spread[i];
                    let eps: f64 = StandardNormal.sample(rng);
                    let x = mu + ls.exp() * eps;
                    sampled.log_prob += -0.5 * eps * eps - ls - 0.5 * LN_2PI;
                    sampled.speed_choice.push(0);
                    sampled.raw_speeds.push(x);
                    sampled.action.speeds.push(x.clamp(0.0, self.v_max));
                }
            }
            if self.n_adversaries > 0 {
                let lp = log_softmax(&block[sw..]);
                let g = sample_categorical(&lp, rng);
                sampled.log_prob += lp[g];
                sampled.action.guards.push(g);
            } else {
                sampled.action.guards.push(0);
            }
        }
        Ok(sampled)
    }

    /// Mode of the policy: argmax speed and guard, or the clamped mean.
    /// With `snap`, hybrid speeds are rounded to the integer speed set.
    pub fn greedy_action(&self, enc: &[f64], snap: bool) -> Result<HybridAction> {
        let out = self.actor_output(enc)?;
        let bl = self.block_len();
        let sw = self.speed_width();
        let mut action = HybridAction::new(Vec::new(), Vec::new());
        for i in 0..self.n_robots {
            let block = &out[i * bl..(i + 1) * bl];
            let v = match self.variant {
                Variant::Discrete => self.speeds[argmax(&block[..sw])],
                Variant::Hybrid => {
                    let v = self.speed_mean(block[0]).clamp(0.0, self.v_max);
                    if snap {
                        v.round().clamp(0.0, self.v_max.floor())
                    } else {
                        v
                    }
                }
            };
            action.speeds.push(v);
            action.guards.push(if self.n_adversaries > 0 {
                argmax(&block[sw..])
            } else {
                0
            });
        }
        Ok(action)
    }

    /// Log-probability of `speed_choice`/`raw_speeds`/`guards` under the
    /// current parameters, without recording gradients.
    pub fn log_prob(&self, enc: &[f64], sampled: &SampledAction) -> Result<f64> {
        let out = self.actor_output(enc)?;
        let bl = self.block_len();
        let sw = self.speed_width();
        let mut total = 0.0;
        for i in 0..self.n_robots {
            let block = &out[i * bl..(i + 1) * bl];
            total += match self.variant {
                Variant::Discrete => log_softmax(&block[..sw])[sampled.speed_choice[i]],
                Variant::Hybrid => {
                    let ls = self.speed_log_spread[i];
                    let z = (sampled.raw_speeds[i] - self.speed_mean(block[0])) * (-ls).exp();
                    -0.5 * z * z - ls - 0.5 * LN_2PI
                }
            };
            if self.n_adversaries > 0 {
                total += log_softmax(&block[sw..])[sampled.action.guards[i]];
            }
        }
        Ok(total)
    }

    /// Records per-sample combined log-probabilities and entropies
    /// (`batch x 1` each) for stored actions on `tape`.
    pub(crate) fn record_log_probs(
        &self,
        tape: &mut Tape,
        actor_out: Var,
        spread: Option<Var>,
        samples: &[&SampledAction],
    ) -> (Var, Var) {
        let bl = self.block_len();
        let sw = self.speed_width();
        let rows = samples.len();
        let mut logp: Option<Var> = None;
        let mut entropy: Option<Var> = None;
        let acc = |tape: &mut Tape, slot: &mut Option<Var>, v: Var| {
            *slot = Some(match *slot {
                None => v,
                Some(prev) => tape.add(prev, v),
            });
        };
        let spread_rows = spread.map(|s| tape.broadcast_rows(s, rows));
        for i in 0..self.n_robots {
            match self.variant {
                Variant::Discrete => {
                    let logits = tape.cols(actor_out, i * bl, sw);
                    let ls = tape.log_softmax(logits);
                    let idx = samples.iter().map(|s| s.speed_choice[i]).collect();
                    let picked = tape.pick(ls, idx);
                    acc(tape, &mut logp, picked);
                    let ent = categorical_entropy(tape, ls);
                    acc(tape, &mut entropy, ent);
                }
                Variant::Hybrid => {
                    let out = tape.cols(actor_out, i * bl, 1);
                    let shifted = tape.add_scalar(out, 0.5);
                    let mu = tape.scale(shifted, self.v_max);
                    let x = tape.constant(Matrix::column(
                        samples.iter().map(|s| s.raw_speeds[i]).collect(),
                    ));
                    let ls = tape.cols(spread_rows.expect("hybrid head has spreads"), i, 1);
                    let neg_ls = tape.scale(ls, -1.0);
                    let inv_sigma = tape.exp(neg_ls);
                    let diff = tape.sub(x, mu);
                    let z = tape.mul(diff, inv_sigma);
                    let z2 = tape.square(z);
                    let half = tape.scale(z2, -0.5);
                    let lp = tape.sub(half, ls);
                    let lp = tape.add_scalar(lp, -0.5 * LN_2PI);
                    acc(tape, &mut logp, lp);
                    let ent = tape.add_scalar(ls, 0.5 * (1.0 + LN_2PI));
                    acc(tape, &mut entropy, ent);
                }
            }
            if self.n_adversaries > 0 {
                let logits = tape.cols(actor_out, i * bl + sw, self.n_adversaries);
                let ls = tape.log_softmax(logits);
                let idx = samples.iter().map(|s| s.action.guards[i]).collect();
                let picked = tape.pick(ls, idx);
                acc(tape, &mut logp, picked);
                let ent = categorical_entropy(tape, ls);
                acc(tape, &mut entropy, ent);
            }
        }
        (
            logp.expect("at least one robot"),
            entropy.expect("at least one robot"),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.speed_log_spread.iter().all(|x| x.is_finite())
    }
}

/// `-sum(p * log p)` per row, from row-wise log-probabilities.
fn categorical_entropy(tape: &mut Tape, log_probs: Var) -> Var {
    let p = tape.exp(log_probs);
    let plogp = tape.mul(p, log_probs);
    let s = tape.row_sum(plogp);
    tape.scale(s, -1.0)
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            return k;
        }
    }
    log_probs.len() - 1
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = k;
        }
    }
    best
}

const POLICY_MAGIC: &[u8; 4] = b"OWPP";
const POLICY_VERSION: u32 = 1;

pub fn save_policy(params: &PolicyParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(POLICY_MAGIC);
    buf.extend_from_slice(&POLICY_VERSION.to_le_bytes());
    buf.push(match params.variant {
        Variant::Discrete => 0,
        Variant::Hybrid => 1,
    });
    buf.push(match params.encoding {
        Encoding::WeightedHot => 0,
        Encoding::Scalar => 1,
    });
    for x in [params.n_robots, params.n_adversaries, params.speeds.len()] {
        buf.extend_from_slice(&(x as u32).to_le_bytes());
    }
    buf.extend_from_slice(&params.v_max.to_le_bytes());
    for v in &params.speeds {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(params.speed_log_spread.len() as u32).to_le_bytes());
    for v in &params.speed_log_spread {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    write_net(&params.actor, &mut buf)?;
    write_net(&params.critic, &mut buf)?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Loads a policy checkpoint and validates it against `cfg`.
pub fn load_policy(path: &Path, cfg: &ScenarioConfig) -> Result<PolicyParams> {
    let params = read_policy(path)?;
    params.check_compatible(cfg)?;
    Ok(params)
}

/// Decodes a policy checkpoint without checking it against a scenario.
pub fn read_policy(path: &Path) -> Result<PolicyParams> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingCheckpoint(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let mut r = bytes.as_slice();
    let bad = |reason: &str| Error::format(path, reason.to_string());
    let eof = |_| Error::format(path, "truncated policy checkpoint");
    let mut head = [0u8; 10];
    r.read_exact(&mut head).map_err(eof)?;
    if &head[..4] != POLICY_MAGIC {
        return Err(bad("not a policy checkpoint"));
    }
    if head[4..8] != POLICY_VERSION.to_le_bytes() {
        return Err(bad("unsupported policy checkpoint version"));
    }
    let variant = match head[8] {
        0 => Variant::Discrete,
        1 => Variant::Hybrid,
        _ => return Err(bad("unknown learner variant")),
    };
    let encoding = match head[9] {
        0 => Encoding::WeightedHot,
        1 => Encoding::Scalar,
        _ => return Err(bad("unknown encoding")),
    };
    let u32s = |r: &mut &[u8]| -> Result<usize> {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(eof)?;
        Ok(u32::from_le_bytes(b) as usize)
    };
    let n_robots = u32s(&mut r)?;
    let n_adversaries = u32s(&mut r)?;
    let n_speeds = u32s(&mut r)?;
    let f64s = |r: &mut &[u8], k: usize| -> Result<Vec<f64>> {
        if k > 1024 {
            return Err(bad("implausible vector length"));
        }
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(eof)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    };
    let v_max = f64s(&mut r, 1)?[0];
    let speeds = f64s(&mut r, n_speeds)?;
    let n_spread = u32s(&mut r)?;
    let speed_log_spread = f64s(&mut r, n_spread)?;
    let actor = read_net(&mut r, path)?;
    let critic = read_net(&mut r, path)?;
    if !r.is_empty() {
        return Err(bad("trailing bytes after policy checkpoint"));
    }
    let params = PolicyParams {
        variant,
        encoding,
        n_robots,
        n_adversaries,
        speeds,
        v_max,
        actor,
        critic,
        speed_log_spread,
    };
    if !params.is_finite() {
        return Err(bad("non-finite parameters"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(variant: Variant) -> (ScenarioConfig, PolicyParams) {
        let cfg = ScenarioConfig::preset("m1-small").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::new(
            &cfg,
            variant,
            Encoding::WeightedHot,
            &[16, 16],
            -0.5,
            &mut rng,
        );
        (cfg, p)
    }

    #[test]
    fn sampled_log_prob_matches_evaluation() {
        for variant in [Variant::Discrete, Variant::Hybrid] {
            let (cfg, p) = params(variant);
            let enc = p.encode(&TeamState::initial(&cfg), &cfg).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..20 {
                let s = p.sample_action(&enc, &mut rng).unwrap();
                let lp = p.log_prob(&enc, &s).unwrap();
                assert!((lp - s.log_prob).abs() < 1e-12);
                assert!(s
                    .action
                    .speeds
                    .iter()
                    .all(|&v| (0.0..=cfg.v_max).contains(&v)));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let (cfg, p) = params(Variant::Hybrid);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.bin");
        save_policy(&p, &path).unwrap();
        assert_eq!(load_policy(&path, &cfg).unwrap(), p);
        let other = ScenarioConfig::preset("m1").unwrap();
        assert!(matches!(
            load_policy(&path, &other),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            load_policy(&dir.path().join("none.bin"), &cfg),
            Err(Error::MissingCheckpoint(_))
        ));
    }
}
