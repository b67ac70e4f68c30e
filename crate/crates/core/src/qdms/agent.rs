use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reward::{rank_models, reward_error, reward_error_reduction, reward_rank, RankVector, RewardStrategy};
use super::table::{q_update, MdpSpace, QTable};
use crate::{Error, Real, Result};

/// Learning parameters of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig<T> {
    /// Learning rate, in (0, 1].
    pub alpha: T,
    /// Discount factor, in [0, 1).
    pub gamma: T,
    pub episodes: usize,
    pub reward: RewardStrategy,
    pub seed: u64,
}

impl<T: Real> Default for AgentConfig<T> {
    fn default() -> Self {
        AgentConfig {
            alpha: T::of(0.1),
            gamma: T::of(0.8),
            episodes: 100,
            reward: RewardStrategy::RankImprovement,
            seed: 0,
        }
    }
}

impl<T: Real> AgentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > T::zero() && self.alpha <= T::one()) {
            return Err(Error::InvalidConfig(format!("alpha {} not in (0, 1]", self.alpha)));
        }
        if !(self.gamma >= T::zero() && self.gamma < T::one()) {
            return Err(Error::InvalidConfig(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Historical window an agent learns from: per step, the candidates' ranks
/// (and APEs when error-based rewards are wanted).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentWindow<T> {
    ranks: Vec<RankVector>,
    apes: Option<Vec<Vec<T>>>,
}

impl<T: Real> AgentWindow<T> {
    /// `apes[t][k]` is the APE of candidate `k` at window step `t`.
    pub fn from_apes(apes: Vec<Vec<T>>) -> Result<Self> {
        let width = apes.first().map_or(0, |r| r.len());
        if apes.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("ragged APE window".into()));
        }
        let ranks = apes.iter().map(|r| rank_models(r)).collect::<Result<_>>()?;
        Ok(AgentWindow {
            ranks,
            apes: Some(apes),
        })
    }

    /// Rank-only window; only the rank-improvement reward can be used with it.
    pub fn from_ranks(ranks: Vec<RankVector>) -> Result<Self> {
        let width = ranks.first().map_or(0, |r| r.len());
        if ranks.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidInput("ragged rank window".into()));
        }
        Ok(AgentWindow { ranks, apes: None })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn width(&self) -> usize {
        self.ranks.first().map_or(0, |r| r.len())
    }

    pub fn ranks(&self) -> &[RankVector] {
        &self.ranks
    }

    /// Reward for being on candidate `s` at step `t` and switching to `a` for step `t + 1`.
    fn reward(&self, strategy: RewardStrategy, t: usize, s: usize, a: usize) -> Result<T> {
        let apes = || {
            self.apes
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("{strategy:?} reward needs APEs")))
        };
        Ok(match strategy {
            RewardStrategy::RankImprovement => {
                reward_rank(self.ranks[t].rank(s), self.ranks[t + 1].rank(a))
            }
            RewardStrategy::Error => reward_error(apes()?[t + 1][a]),
            RewardStrategy::ErrorReduction => {
                let apes = apes()?;
                reward_error_reduction(apes[t][s], apes[t + 1][a])
            }
        })
    }
}

/// Sum of all Q-table entries after each episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve<T>(pub Vec<T>);

impl<T: Real> LearningCurve<T> {
    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `episode,q_sum` lines, episodes numbered from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "episode,q_sum")?;
        for (e, v) in self.0.iter().enumerate() {
            writeln!(w, "{},{}", e + 1, v)?;
        }
        Ok(())
    }
}

/// Exploration probability for episode `e` of `total`: `max(0, 1 - e/total)`.
pub fn epsilon_at(e: usize, total: usize) -> f64 {
    if total == 0 || e >= total {
        return 0.0;
    }
    (total - e) as f64 / total as f64
}

/// Tabular Q-learning over a historical window.
///
/// Episodes `e = 1..=E` each walk the window in time order starting from the
/// candidate ranked first at step 0. At step `t` the action is random with
/// probability `epsilon_at(e, E)`, otherwise greedy; the reward compares the
/// current model at `t` with the chosen model at `t + 1`, and the chosen
/// model becomes the next state.
pub fn train_agent<T: Real>(
    space: MdpSpace,
    window: &AgentWindow<T>,
    config: &AgentConfig<T>,
) -> Result<(QTable<T>, LearningCurve<T>)> {
    train_agent_observed(space, window, config, |_| {})
}

/// [`train_agent`] with a callback invoked after every Q update.
pub fn train_agent_observed<T: Real, F: FnMut(&QTable<T>)>(
    space: MdpSpace,
    window: &AgentWindow<T>,
    config: &AgentConfig<T>,
    mut observe: F,
) -> Result<(QTable<T>, LearningCurve<T>)> {
    config.validate()?;
    if window.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "agent window needs at least 2 steps, got {}",
            window.len()
        )));
    }
    let n = space.len();
    if window.width() != n {
        return Err(Error::InvalidInput(format!(
            "window covers {} models but the space has {n}",
            window.width()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut q = QTable::zeros(space);
    let mut curve = Vec::with_capacity(config.episodes);
    let start_state = window.ranks[0].best();

    for e in 1..=config.episodes {
        let eps = epsilon_at(e, config.episodes);
        let mut s = start_state;
        for t in 0..window.len() - 1 {
            let explore = rng.random::<f64>() < eps;
            let a = if explore { rng.random_range(0..n) } else { q.greedy(s) };
            let r = window.reward(config.reward, t, s, a)?;
            q_update(&mut q, s, a, r, a, config.alpha, config.gamma)?;
            observe(&q);
            s = a;
        }
        curve.push(q.sum());
    }
    Ok((q, LearningCurve(curve)))
}

/// Greedy rollout of `horizon` actions from state `s0`.
pub fn apply_policy<T: Real>(q: &QTable<T>, s0: usize, horizon: usize) -> Result<Vec<usize>> {
    if s0 >= q.size() {
        return Err(Error::IndexOutOfRange(format!("initial state {s0}")));
    }
    let mut s = s0;
    Ok((0..horizon)
        .map(|_| {
            s = q.greedy(s);
            s
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule() {
        assert_eq!(epsilon_at(30, 100), 0.7);
        assert_eq!(epsilon_at(0, 100), 1.0);
        assert_eq!(epsilon_at(100, 100), 0.0);
        assert_eq!(epsilon_at(250, 100), 0.0);
    }

    #[test]
    fn rollout_examples() {
        let sp = MdpSpace::indices(3).unwrap();
        let q = QTable::from_rows(sp.clone(), &[vec![0.0, 0.0, 5.0], vec![1.0, 0.0, 4.0], vec![0.0, 0.0, 9.0]]).unwrap();
        assert_eq!(apply_policy(&q, 0, 4).unwrap(), vec![2, 2, 2, 2]);
        assert_eq!(apply_policy(&QTable::<f64>::zeros(sp), 2, 3).unwrap(), vec![0, 0, 0]);
        let alt = QTable::from_rows(MdpSpace::indices(2).unwrap(), &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(apply_policy(&alt, 0, 3).unwrap(), vec![1, 0, 1]);
        assert!(apply_policy(&alt, 2, 1).is_err());
    }

    #[test]
    fn curve_length_and_determinism() {
        let apes: Vec<Vec<f64>> = (0..20)
            .map(|t| vec![0.01 * (t % 3) as f64, 0.02, 0.015 + 0.001 * t as f64])
            .collect();
        let w = AgentWindow::from_apes(apes).unwrap();
        let cfg = AgentConfig { episodes: 37, seed: 5, ..AgentConfig::default() };
        let (q1, c1) = train_agent(MdpSpace::indices(3).unwrap(), &w, &cfg).unwrap();
        let (q2, c2) = train_agent(MdpSpace::indices(3).unwrap(), &w, &cfg).unwrap();
        assert_eq!(c1.len(), 37);
        assert_eq!(q1, q2);
        assert_eq!(c1, c2);
        assert_eq!(*c1.values().last().unwrap(), q1.sum());
    }

    #[test]
    fn config_and_window_errors() {
        let sp = MdpSpace::indices(2).unwrap();
        let one = AgentWindow::<f64>::from_apes(vec![vec![0.1, 0.2]]).unwrap();
        assert!(train_agent(sp.clone(), &one, &AgentConfig::default()).is_err());
        let w = AgentWindow::<f64>::from_apes(vec![vec![0.1, 0.2]; 3]).unwrap();
        let bad = AgentConfig { gamma: 1.0, ..AgentConfig::default() };
        assert!(matches!(train_agent(sp.clone(), &w, &bad), Err(Error::InvalidConfig(_))));
        let bad = AgentConfig { alpha: 0.0, ..AgentConfig::default() };
        assert!(train_agent(sp.clone(), &w, &bad).is_err());
        let ranks_only = AgentWindow::<f64>::from_ranks(w.ranks().to_vec()).unwrap();
        let err_cfg = AgentConfig { reward: RewardStrategy::ErrorReduction, ..AgentConfig::default() };
        assert!(train_agent(sp, &ranks_only, &err_cfg).is_err());
    }
}
