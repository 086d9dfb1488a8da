use crate::error::{Error, Result};
use crate::ppo::policy::SampledAction;

/// How the trajectory continues after a stored step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// The next stored step continues the same episode.
    None,
    /// Terminal state: nothing follows.
    Done,
    /// Cut short (horizon or end of rollout); the tail is estimated by the
    /// critic's value at the next state.
    Truncated { bootstrap: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<SampledAction>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub boundaries: Vec<Boundary>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(
        &mut self,
        state: Vec<f64>,
        action: SampledAction,
        reward: f64,
        value: f64,
        boundary: Boundary,
    ) {
        self.states.push(state);
        self.actions.push(action);
        self.rewards.push(reward);
        self.values.push(value);
        self.boundaries.push(boundary);
    }

    /// Marks the last stored step, e.g. when the rollout ends mid-episode.
    pub fn mark_last(&mut self, boundary: Boundary) {
        if let Some(b) = self.boundaries.last_mut() {
            *b = boundary;
        }
    }

    fn audit(&self) -> Result<()> {
        let n = self.states.len();
        let lens = [
            self.actions.len(),
            self.rewards.len(),
            self.values.len(),
            self.boundaries.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::MalformedBatch(format!(
                "column lengths differ: {n} states vs {lens:?}"
            )));
        }
        if n == 0 {
            return Err(Error::MalformedBatch("empty batch".into()));
        }
        if self.boundaries[n - 1] == Boundary::None {
            return Err(Error::MalformedBatch(
                "last step carries no episode boundary".into(),
            ));
        }
        let finite = self
            .rewards
            .iter()
            .chain(&self.values)
            .all(|x| x.is_finite())
            && self.boundaries.iter().all(|b| match b {
                Boundary::Truncated { bootstrap } => bootstrap.is_finite(),
                _ => true,
            });
        if !finite {
            return Err(Error::MalformedBatch("non-finite reward or value".into()));
        }
        Ok(())
    }

    /// Fills `advantages` (GAE) and `returns` (advantage + value).
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        self.audit()?;
        let n = self.len();
        let mut adv = vec![0.0; n];
        let mut carry = 0.0;
        for k in (0..n).rev() {
            let (next_value, next_carry) = match self.boundaries[k] {
                Boundary::None => (self.values[k + 1], carry),
                Boundary::Done => (0.0, 0.0),
                Boundary::Truncated { bootstrap } => (bootstrap, 0.0),
            };
            let delta = self.rewards[k] + gamma * next_value - self.values[k];
            carry = delta + gamma * lambda * next_carry;
            adv[k] = carry;
        }
        self.returns = adv.iter().zip(&self.values).map(|(a, v)| a + v).collect();
        self.advantages = adv;
        Ok(())
    }

    /// Advantages shifted and scaled to zero mean and unit variance.
    pub fn normalized_advantages(&self) -> Vec<f64> {
        normalize(&self.advantages)
    }
}

/// Zero-mean unit-variance copy of `xs`. A single value is returned as is,
/// since centring it would erase its sign.
pub fn normalize(xs: &[f64]) -> Vec<f64> {
    if xs.len() < 2 {
        return xs.to_vec();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}
