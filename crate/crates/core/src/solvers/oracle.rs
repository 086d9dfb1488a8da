//! Exact backward induction over the integer-discretised instance.
//!
//! Robots are homogeneous, so the value function is stored over sorted
//! position tuples (multisets) ranked with the combinatorial number system.
//! Stage `h` holds the optimal cost-to-go with `h` steps remaining; the
//! recursion stops early once two consecutive stages agree bit for bit.

use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::ScenarioConfig;
use crate::env::{self, HybridAction, TeamState};
use crate::error::{Error, Result};
use crate::trajectory::{run_episode, Trajectory};

pub const MAX_ROBOTS: usize = 3;
pub const MAX_ROUTE_LENGTH: usize = 80;
pub const MAX_SPEEDS: usize = 4;
pub const MAX_ADVERSARIES: usize = 3;
/// Default cap on stored values (`states x stages`).
pub const DEFAULT_BUDGET: usize = 60_000_000;

const CACHE_MAGIC: &[u8; 4] = b"OWOR";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Team cost `J`, optionally discounted per step (`discount = 1` is `J`).
    Raw { discount: f64 },
    /// Reshaped cost discounted by the scenario's `gamma`. Terminal and
    /// truncated states carry their shaping potential as boundary value.
    Shaped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteInstance {
    pub cfg: ScenarioConfig,
    pub placement: Vec<f64>,
    pub speeds: Vec<f64>,
    pub objective: Objective,
    pub budget: usize,
}

impl DiscreteInstance {
    /// Undiscounted instance over the scenario's integer speed set.
    pub fn new(cfg: ScenarioConfig, placement: Vec<f64>) -> Result<Self> {
        let speeds = cfg.discrete_speeds();
        let inst = DiscreteInstance {
            cfg,
            placement,
            speeds,
            objective: Objective::Raw { discount: 1.0 },
            budget: DEFAULT_BUDGET,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_objective(mut self, objective: Objective) -> Result<Self> {
        self.objective = objective;
        self.validate()?;
        Ok(self)
    }

    pub fn with_speeds(mut self, speeds: Vec<f64>) -> Result<Self> {
        self.speeds = speeds;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    /// Number of sorted position tuples, `C(L + n, n)`.
    pub fn n_states(&self) -> usize {
        binomial(
            self.cfg.route_length as usize + self.cfg.n_robots,
            self.cfg.n_robots,
        )
    }

    pub fn initial_state(&self) -> TeamState {
        TeamState {
            positions: vec![0.0; self.cfg.n_robots],
            adversaries: self.placement.clone(),
            t: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = &self.cfg;
        cfg.validate()?;
        let l = cfg.route_length;
        if cfg.n_robots > MAX_ROBOTS
            || l > MAX_ROUTE_LENGTH as f64
            || self.speeds.len() > MAX_SPEEDS
            || cfg.n_adversaries() > MAX_ADVERSARIES
        {
            return Err(Error::InstanceTooLarge(format!(
                "n={}, L={}, |speeds|={}, m={} (limits: n<={MAX_ROBOTS}, L<={MAX_ROUTE_LENGTH}, \
                 |speeds|<={MAX_SPEEDS}, m<={MAX_ADVERSARIES})",
                cfg.n_robots,
                l,
                self.speeds.len(),
                cfg.n_adversaries()
            )));
        }
        if cfg.dt != 1.0 || l.fract() != 0.0 {
            return Err(Error::InvalidConfig(
                "exact solving needs dt = 1 and an integer route length".into(),
            ));
        }
        if self.speeds.is_empty()
            || self
                .speeds
                .iter()
                .any(|&v| v.fract() != 0.0 || !(v >= 0.0 && v <= cfg.v_max))
            || self.speeds.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::InvalidConfig(format!(
                "speed set {:?} must be strictly increasing integers in [0, v_max]",
                self.speeds
            )));
        }
        TeamState::new(cfg, self.placement.clone())?;
        match self.objective {
            Objective::Raw { discount } if !(discount > 0.0 && discount <= 1.0) => Err(
                Error::InvalidConfig(format!("discount {discount} outside (0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Precomputed per-position tables for one instance.
#[derive(Debug, Clone)]
struct Model {
    n: usize,
    m: usize,
    l: usize,
    n_guards: usize,
    speed_steps: Vec<usize>,
    speeds: Vec<f64>,
    /// `risk[s * m + j]`
    risk: Vec<f64>,
    /// `alpha[code(s, v, g) * m + j]`
    alpha: Vec<f64>,
    /// Action codes `v * n_guards + g` worth considering at each position.
    local: Vec<Vec<u16>>,
    full: Vec<u16>,
    penalty: f64,
    discount: f64,
    shaped: bool,
    shaping_c: f64,
    terminal_q: f64,
    gamma: f64,
    binom: Vec<Vec<usize>>,
    states: Vec<[u16; MAX_ROBOTS]>,
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl Model {
    fn new(inst: &DiscreteInstance) -> Self {
        let cfg = &inst.cfg;
        let n = cfg.n_robots;
        let m = cfg.n_adversaries();
        let l = cfg.route_length as usize;
        let n_guards = m.max(1);
        let nv = inst.speeds.len();

        let mut risk = vec![0.0; (l + 1) * m];
        let mut alpha = vec![1.0; (l + 1) * nv * n_guards * m];
        for s in 0..=l {
            let sf = s as f64;
            for j in 0..m {
                risk[s * m + j] = env::unit_risk(sf, inst.placement[j], &cfg.adversaries[j], cfg);
            }
            if s == l {
                continue;
            }
            for (vi, &v) in inst.speeds.iter().enumerate() {
                for g in 0..n_guards {
                    let code = (s * nv + vi) * n_guards + g;
                    for j in 0..m {
                        alpha[code * m + j] =
                            env::guard_discount(v, g, j, sf, inst.placement[j], cfg);
                    }
                }
            }
        }

        let full: Vec<u16> = (0..nv * n_guards).map(|c| c as u16).collect();
        let mut local = Vec::with_capacity(l + 1);
        for s in 0..=l {
            if s == l {
                local.push(vec![((nv - 1) * n_guards) as u16]);
                continue;
            }
            let mut codes = Vec::new();
            for vi in 0..nv {
                let row = |g: usize| {
                    let c = (s * nv + vi) * n_guards + g;
                    &alpha[c * m..(c + 1) * m]
                };
                let mut kept: Vec<usize> = Vec::new();
                for g in 0..n_guards {
                    if kept.iter().any(|&h| row(h) == row(g)) {
                        continue;
                    }
                    kept.push(g);
                }
                // Guarding never raises cost, so a choice whose discounts are
                // all 1 is dominated whenever any real guard is available.
                if kept.len() > 1 {
                    kept.retain(|&g| row(g).iter().any(|&a| a != 1.0));
                }
                codes.extend(kept.into_iter().map(|g| (vi * n_guards + g) as u16));
            }
            local.push(codes);
        }

        let (discount, shaped) = match inst.objective {
            Objective::Raw { discount } => (discount, false),
            Objective::Shaped => (cfg.gamma, true),
        };

        let binom: Vec<Vec<usize>> = (0..=l + n + 1)
            .map(|a| (0..=n + 1).map(|b| binomial(a, b)).collect())
            .collect();

        let mut model = Model {
            n,
            m,
            l,
            n_guards,
            speed_steps: inst.speeds.iter().map(|&v| v as usize).collect(),
            speeds: inst.speeds.clone(),
            risk,
            alpha,
            local,
            full,
            penalty: cfg.time_penalty * cfg.dt,
            discount,
            shaped,
            shaping_c: cfg.shaping_c,
            terminal_q: cfg.terminal_q,
            gamma: cfg.gamma,
            binom,
            states: Vec::new(),
        };
        model.states = model.enumerate_states();
        model
    }

    fn n_states(&self) -> usize {
        self.binom[self.l + self.n][self.n]
    }

    fn rank(&self, sorted: &[usize]) -> usize {
        sorted
            .iter()
            .enumerate()
            .map(|(k, &p)| self.binom[p + k][k + 1])
            .sum()
    }

    fn enumerate_states(&self) -> Vec<[u16; MAX_ROBOTS]> {
        let mut out = vec![[0u16; MAX_ROBOTS]; self.n_states()];
        let mut pos = vec![0usize; self.n];
        loop {
            let mut key = [0u16; MAX_ROBOTS];
            for (k, &p) in pos.iter().enumerate() {
                key[k] = p as u16;
            }
            out[self.rank(&pos)] = key;
            // next non-decreasing tuple
            let mut k = self.n;
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if pos[k] < self.l {
                    pos[k] += 1;
                    let v = pos[k];
                    pos[k + 1..].iter_mut().for_each(|p| *p = v);
                    break;
                }
            }
        }
    }

    fn arrived(&self, pos: &[usize]) -> bool {
        pos.iter().all(|&p| p >= self.l)
    }

    /// Shaping potential in cost units.
    fn potential(&self, pos: &[usize]) -> f64 {
        let progress = self.shaping_c * pos.iter().map(|&p| p as f64).sum::<f64>();
        if self.arrived(pos) {
            progress + self.terminal_q / self.gamma
        } else {
            progress
        }
    }

    /// Boundary value for a state with no steps left (or already arrived).
    fn boundary(&self, pos: &[usize]) -> f64 {
        if self.shaped {
            self.potential(pos)
        } else {
            0.0
        }
    }

    /// Step cost under the objective and the sorted successor rank.
    fn transition(&self, pos: &[usize], codes: &[u16]) -> (f64, usize) {
        let nv = self.speeds.len();
        let mut cost = 0.0;
        let mut active = 0usize;
        for j in 0..self.m {
            let mut team = 1.0;
            let mut exposure = 0.0;
            for (k, &p) in pos.iter().enumerate() {
                if p >= self.l {
                    continue;
                }
                let c = codes[k] as usize;
                let code = (p * nv + c / self.n_guards) * self.n_guards + c % self.n_guards;
                team *= self.alpha[code * self.m + j];
                exposure += self.risk[p * self.m + j];
            }
            cost += team * exposure;
        }
        let mut next = [0usize; MAX_ROBOTS];
        for (k, &p) in pos.iter().enumerate() {
            if p >= self.l {
                next[k] = p;
            } else {
                active += 1;
                let step = self.speed_steps[codes[k] as usize / self.n_guards];
                next[k] = (p + step).min(self.l);
            }
        }
        cost += self.penalty * active as f64;
        let next = &mut next[..self.n];
        next.sort_unstable();
        if self.shaped {
            let mut bonus = self.shaping_c
                * pos
                    .iter()
                    .zip(next.iter())
                    .map(|(&s, &s2)| self.gamma * s2 as f64 - s as f64)
                    .sum::<f64>();
            if self.arrived(next) && !self.arrived(pos) {
                bonus += self.terminal_q;
            }
            cost -= bonus;
        }
        (cost, self.rank(next))
    }

    /// Visits joint action codes in lexicographic order. With `pruned`,
    /// `pos` must be sorted; only each position's useful actions are used
    /// and robots sharing a position take non-decreasing action indices.
    fn for_each_joint(&self, pos: &[usize], pruned: bool, mut f: impl FnMut(&[u16])) {
        let n = self.n;
        let lists: Vec<&[u16]> = pos
            .iter()
            .map(|&p| {
                if pruned {
                    self.local[p].as_slice()
                } else {
                    self.full.as_slice()
                }
            })
            .collect();
        let start = |k: usize, idx: &[usize]| {
            if pruned && k > 0 && pos[k] == pos[k - 1] {
                idx[k - 1]
            } else {
                0
            }
        };
        let mut idx = [0usize; MAX_ROBOTS];
        for k in 0..n {
            idx[k] = start(k, &idx);
        }
        let mut codes = [0u16; MAX_ROBOTS];
        loop {
            for k in 0..n {
                codes[k] = lists[k][idx[k]];
            }
            f(&codes[..n]);
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < lists[k].len() {
                    break;
                }
            }
            for k2 in k + 1..n {
                idx[k2] = start(k2, &idx);
            }
        }
    }

    fn positions_of(&self, idx: usize) -> Vec<usize> {
        self.states[idx][..self.n]
            .iter()
            .map(|&p| p as usize)
            .collect()
    }

    fn stage(&self, prev: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .into_par_iter()
            .map(|idx| {
                let pos = self.positions_of(idx);
                if self.arrived(&pos) {
                    return self.boundary(&pos);
                }
                let mut best = f64::INFINITY;
                self.for_each_joint(&pos, true, |codes| {
                    let (c, next) = self.transition(&pos, codes);
                    let q = c + self.discount * prev[next];
                    if q < best {
                        best = q;
                    }
                });
                best
            })
            .collect()
    }

    fn decode(&self, codes: &[u16]) -> HybridAction {
        HybridAction {
            speeds: codes
                .iter()
                .map(|&c| self.speeds[c as usize / self.n_guards])
                .collect(),
            guards: codes.iter().map(|&c| c as usize % self.n_guards).collect(),
        }
    }
}

/// Optimal cost-to-go for every (sorted positions, remaining steps) pair,
/// with lazily evaluated optimal action sets.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    instance: DiscreteInstance,
    model: Model,
    /// `values[h][rank]`, `h = 0..=converged_stage`.
    values: Vec<Vec<f64>>,
}

/// Relative tolerance used to decide which actions tie for optimal.
pub const TIE_TOLERANCE: f64 = 1e-9;

impl OracleSolution {
    pub fn instance(&self) -> &DiscreteInstance {
        &self.instance
    }

    pub fn n_states(&self) -> usize {
        self.model.n_states()
    }

    /// Remaining-step count beyond which the values no longer change.
    pub fn converged_stage(&self) -> usize {
        self.values.len() - 1
    }

    fn stage_for(&self, t: usize) -> usize {
        (self.instance.cfg.horizon - t).min(self.converged_stage())
    }

    fn check_state(&self, state: &TeamState) -> Result<Vec<usize>> {
        let cfg = &self.instance.cfg;
        state.validate(cfg)?;
        if state.adversaries != self.instance.placement {
            return Err(Error::InvalidState(format!(
                "adversaries at {:?}, but the solution is for {:?}",
                state.adversaries, self.instance.placement
            )));
        }
        state
            .positions
            .iter()
            .map(|&s| {
                if s.fract() == 0.0 {
                    Ok(s as usize)
                } else {
                    Err(Error::InvalidState(format!(
                        "position {s} is not on the grid"
                    )))
                }
            })
            .collect()
    }

    /// Optimal cost-to-go (objective units, before `reward_scale`).
    pub fn value(&self, state: &TeamState) -> Result<f64> {
        let mut pos = self.check_state(state)?;
        pos.sort_unstable();
        Ok(self.values[self.stage_for(state.t)][self.model.rank(&pos)])
    }

    /// Optimal value of the start state as a return. For the shaped
    /// objective the start potential is removed, so the number is the raw
    /// discounted optimum.
    pub fn optimal_return(&self) -> f64 {
        let start = self.instance.initial_state();
        let v = self.value(&start).expect("initial state is valid");
        let v = if self.model.shaped {
            v - self.model.potential(&vec![0; self.model.n])
        } else {
            v
        };
        -v / self.instance.cfg.reward_scale
    }

    /// Action values `cost + discount * V(next)` for every joint action in
    /// lexicographic order; empty for finished states.
    pub fn action_values(&self, state: &TeamState) -> Result<Vec<(HybridAction, f64)>> {
        let pos = self.check_state(state)?;
        if state.is_done(&self.instance.cfg) {
            return Ok(Vec::new());
        }
        let next_values = &self.values[self.stage_for(state.t + 1)];
        let mut out = Vec::new();
        self.model.for_each_joint(&pos, false, |codes| {
            let (c, next) = self.model.transition(&pos, codes);
            out.push((
                self.model.decode(codes),
                c + self.model.discount * next_values[next],
            ));
        });
        Ok(out)
    }

    /// All optimal joint actions at `state`, lexicographically ordered.
    pub fn optimal_actions(&self, state: &TeamState) -> Result<Vec<HybridAction>> {
        let q = self.action_values(state)?;
        let best = q.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        let tol = TIE_TOLERANCE * best.abs().max(1.0);
        Ok(q.into_iter()
            .filter(|(_, v)| *v <= best + tol)
            .map(|(a, _)| a)
            .collect())
    }

    /// Deterministic choice: the lexicographically smallest optimal action.
    pub fn policy_action(&self, state: &TeamState) -> Result<HybridAction> {
        self.optimal_actions(state)?
            .into_iter()
            .next()
            .ok_or(Error::EpisodeDone { t: state.t })
    }

    /// Rollout of the deterministic optimal policy from the start state.
    pub fn rollout(&self) -> Result<Trajectory> {
        run_episode(
            &self.instance.cfg,
            self.instance.initial_state(),
            &[],
            |s| self.policy_action(s),
        )
    }
}

pub fn solve_exact(inst: &DiscreteInstance) -> Result<OracleSolution> {
    inst.validate()?;
    let model = Model::new(inst);
    let states = model.n_states();
    let stages = inst.cfg.horizon + 1;
    if states.saturating_mul(stages) > inst.budget {
        return Err(Error::BudgetExceeded {
            states,
            stages,
            budget: inst.budget,
        });
    }
    let boundary: Vec<f64> = (0..states)
        .map(|idx| model.boundary(&model.positions_of(idx)))
        .collect();
    let mut values = vec![boundary];
    for _ in 0..inst.cfg.horizon {
        let next = model.stage(values.last().expect("non-empty"));
        if &next == values.last().expect("non-empty") {
            break;
        }
        values.push(next);
    }
    Ok(OracleSolution {
        instance: inst.clone(),
        model,
        values,
    })
}

/// Content hash identifying an instance in the solution cache.
pub fn cache_key(inst: &DiscreteInstance) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"overwatch-oracle\n");
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(inst.cfg.to_file_string().as_bytes());
    h.update(
        format!(
            "{:?}|{:?}|{:?}",
            inst.placement, inst.speeds, inst.objective
        )
        .as_bytes(),
    );
    h.finalize().into()
}

pub fn cache_path(inst: &DiscreteInstance, dir: &Path) -> PathBuf {
    let hex: String = cache_key(inst).iter().map(|b| format!("{b:02x}")).collect();
    dir.join(format!("{hex}.oracle"))
}

fn read_cache(inst: &DiscreteInstance, path: &Path, states: usize) -> Option<Vec<Vec<f64>>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .ok()?
        .read_to_end(&mut bytes)
        .ok()?;
    let (head, rest) = bytes.split_at_checked(4 + 4 + 32 + 16)?;
    if &head[..4] != CACHE_MAGIC
        || head[4..8] != CACHE_VERSION.to_le_bytes()
        || head[8..40] != cache_key(inst)
    {
        return None;
    }
    let n = u64::from_le_bytes(head[40..48].try_into().ok()?) as usize;
    let stages = u64::from_le_bytes(head[48..56].try_into().ok()?) as usize;
    if n != states || stages == 0 || rest.len() != n.checked_mul(stages)?.checked_mul(8)? {
        return None;
    }
    let flat: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Some(flat.chunks(n).map(<[f64]>::to_vec).collect())
}

fn write_cache(sol: &OracleSolution, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&cache_key(&sol.instance));
    buf.extend_from_slice(&(sol.n_states() as u64).to_le_bytes());
    buf.extend_from_slice(&(sol.values.len() as u64).to_le_bytes());
    for stage in &sol.values {
        for v in stage {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("oracle.tmp");
    std::fs::write(&tmp, buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Like [`solve_exact`], reusing a cached solution from `cache_dir` when
/// one matches the instance. Unreadable cache entries are recomputed.
pub fn solve_exact_cached(
    inst: &DiscreteInstance,
    cache_dir: Option<&Path>,
) -> Result<OracleSolution> {
    let Some(dir) = cache_dir else {
        return solve_exact(inst);
    };
    inst.validate()?;
    let path = cache_path(inst, dir);
    let model = Model::new(inst);
    if let Some(values) = read_cache(inst, &path, model.n_states()) {
        return Ok(OracleSolution {
            instance: inst.clone(),
            model,
            values,
        });
    }
    let sol = solve_exact(inst)?;
    write_cache(&sol, &path)?;
    Ok(sol)
}
