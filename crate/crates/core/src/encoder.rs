//! Weighted-hot encoding of route positions.
//!
//! A position `s` splits into integer and fractional parts; the block puts
//! `1 - frac` on index `floor(s)` and `frac` on the next index. Robot
//! blocks come first, then adversary blocks.

use crate::config::ScenarioConfig;
use crate::env::TeamState;
use crate::error::{Error, Result};

/// Encodes `s` into a block of length `len`, which must cover `[0, len - 1]`.
pub fn encode_scalar(s: f64, len: usize) -> Result<Vec<f64>> {
    let mut block = vec![0.0; len];
    write_block(s, &mut block)?;
    Ok(block)
}

fn write_block(s: f64, block: &mut [f64]) -> Result<()> {
    let top = (block.len() - 1) as f64;
    if !(s >= 0.0 && s <= top) {
        return Err(Error::InvalidState(format!(
            "position {s} outside encodable range [0, {top}]"
        )));
    }
    let idx = s.floor() as usize;
    match split_weights(s) {
        None => block[idx] = 1.0,
        Some((lo, hi)) => {
            block[idx] = lo;
            block[idx + 1] = hi;
        }
    }
    Ok(())
}

/// Weights `(1 - frac, frac)` for a non-integer `s`, taken from the shortest
/// decimal representation of `s` so that e.g. 3.2 yields exactly the
/// doubles 0.8 and 0.2 rather than `1 - (3.2 - 3)`.
fn split_weights(s: f64) -> Option<(f64, f64)> {
    let text = s.to_string();
    let digits = match text.split_once('.') {
        None => return None,
        Some((_, d)) => d,
    };
    let k = digits.len();
    let (lo, hi) = match digits.parse::<u128>() {
        Ok(num) if k <= 36 && num > 0 => {
            let denom = 10u128.pow(k as u32);
            let lo_text = format!("0.{:0>width$}", denom - num, width = k);
            let hi_text = format!("0.{digits}");
            (lo_text.parse::<f64>().ok()?, hi_text.parse::<f64>().ok()?)
        }
        _ => {
            let frac = s - s.floor();
            if frac == 0.0 {
                return None;
            }
            (1.0 - frac, frac)
        }
    };
    if lo + hi == 1.0 {
        Some((lo, hi))
    } else {
        Some((1.0 - hi, hi))
    }
}

/// Stacked weighted-hot vector of length `(n + m) * block_len`.
pub fn encode_state(state: &TeamState, cfg: &ScenarioConfig) -> Result<Vec<f64>> {
    let len = cfg.block_len();
    let mut out = vec![0.0; encoded_dim(cfg)];
    for (chunk, &s) in out
        .chunks_mut(len)
        .zip(state.positions.iter().chain(&state.adversaries))
    {
        write_block(s, chunk)?;
    }
    Ok(out)
}

pub fn encoded_dim(cfg: &ScenarioConfig) -> usize {
    (cfg.n_robots + cfg.n_adversaries()) * cfg.block_len()
}

/// Raw-scalar features (positions divided by route length), the ablation
/// alternative to weighted-hot blocks.
pub fn encode_scalar_features(state: &TeamState, cfg: &ScenarioConfig) -> Vec<f64> {
    state
        .positions
        .iter()
        .chain(&state.adversaries)
        .map(|s| s / cfg.route_length)
        .collect()
}

/// Recovers the position encoded in one block.
pub fn decode_block(block: &[f64]) -> f64 {
    block.iter().enumerate().map(|(k, w)| k as f64 * w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(
            encode_scalar(3.2, 5).unwrap(),
            vec![0.0, 0.0, 0.0, 0.8, 0.2]
        );
        assert_eq!(
            encode_scalar(0.7, 5).unwrap(),
            vec![0.3, 0.7, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            encode_scalar(4.0, 5).unwrap(),
            vec![0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(encode_scalar(-0.1, 5).is_err());
        assert!(encode_scalar(4.01, 5).is_err());
        assert!(encode_scalar(f64::NAN, 5).is_err());
    }

    #[test]
    fn state_stacking() {
        let mut cfg = ScenarioConfig::preset("m1").unwrap().with_robots(1);
        cfg.route_length = 4.0;
        cfg.adversaries[0].support = vec![2.0];
        cfg.adversaries[0].position = 2.0;
        let state = TeamState::initial(&cfg);
        let enc = encode_state(&state, &cfg).unwrap();
        assert_eq!(enc, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_robots_identical_blocks() {
        let cfg = ScenarioConfig::preset("m1").unwrap();
        let mut state = TeamState::initial(&cfg);
        state.positions = vec![17.25, 17.25];
        let enc = encode_state(&state, &cfg).unwrap();
        let len = cfg.block_len();
        assert_eq!(enc.len(), 3 * len);
        assert_eq!(enc[..len], enc[len..2 * len]);
    }

    #[test]
    fn non_integer_route_uses_ceiling() {
        let mut cfg = ScenarioConfig::preset("corridor").unwrap();
        cfg.route_length = 9.5;
        assert_eq!(cfg.block_len(), 11);
        let mut state = TeamState::initial(&cfg);
        state.positions = vec![9.5, 0.0];
        let enc = encode_state(&state, &cfg).unwrap();
        assert_eq!(enc[9], 0.5);
        assert_eq!(enc[10], 0.5);
    }

    proptest! {
        #[test]
        fn block_invariants(s in 0.0f64..=40.0) {
            let block = encode_scalar(s, 41).unwrap();
            let sum: f64 = block.iter().sum();
            prop_assert_eq!(sum, 1.0);
            let nz: Vec<usize> = (0..41).filter(|&k| block[k] != 0.0).collect();
            prop_assert!(!nz.is_empty() && nz.len() <= 2);
            if nz.len() == 2 {
                prop_assert_eq!(nz[1], nz[0] + 1);
            }
            prop_assert!((decode_block(&block) - s).abs() < 1e-12);
        }

        #[test]
        fn continuity(s in 0.0f64..39.0, eps in 0.0f64..0.5) {
            let a = encode_scalar(s, 41).unwrap();
            let b = encode_scalar(s + eps, 41).unwrap();
            let dist = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(dist <= 2.0 * eps + 1e-12);
        }

        #[test]
        fn distant_positions_disjoint(s in 0.0f64..20.0, gap in 2.0f64..20.0) {
            let a = encode_scalar(s, 41).unwrap();
            let b = encode_scalar(s + gap, 41).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| x * y == 0.0));
        }
    }
}
