use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// How a transition from the current model to the next one is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardStrategy {
    /// Negated APE of the next model. Ignores the current state.
    Error,
    /// APE of the current model minus APE of the next model.
    ErrorReduction,
    /// Rank of the current model minus rank of the next model.
    #[default]
    RankImprovement,
}

impl std::str::FromStr for RewardStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" | "rank_improvement" => Ok(RewardStrategy::RankImprovement),
            "error" => Ok(RewardStrategy::Error),
            "error_reduction" => Ok(RewardStrategy::ErrorReduction),
            other => Err(Error::InvalidConfig(format!(
                "unknown reward strategy `{other}` (expected rank, error or error_reduction)"
            ))),
        }
    }
}

/// Per-model ranks at one step, 1 = best. Always a permutation of `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn rank(&self, k: usize) -> usize {
        self.0[k]
    }

    /// Index of the model ranked first.
    pub fn best(&self) -> usize {
        self.0.iter().position(|&r| r == 1).unwrap_or(0)
    }

    /// Checks the permutation property.
    pub fn from_ranks(ranks: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; ranks.len()];
        for &r in &ranks {
            if r == 0 || r > ranks.len() || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::InvalidInput(format!("{ranks:?} is not a rank permutation")));
            }
        }
        Ok(RankVector(ranks))
    }
}

/// Ranks models by absolute percentage error; ties go to the lower index.
pub fn rank_models<T: Real>(ape: &[T]) -> Result<RankVector> {
    if let Some(k) = ape.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidInput(format!("APE of model {k} is NaN")));
    }
    let mut order: Vec<usize> = (0..ape.len()).collect();
    // stable sort keeps index order among equal errors
    order.sort_by(|&a, &b| ape[a].partial_cmp(&ape[b]).expect("NaN filtered"));
    let mut ranks = vec![0; ape.len()];
    for (r, &k) in order.iter().enumerate() {
        ranks[k] = r + 1;
    }
    Ok(RankVector(ranks))
}

pub fn reward_rank<T: Real>(rank_current: usize, rank_next: usize) -> T {
    T::of_usize(rank_current) - T::of_usize(rank_next)
}

pub fn reward_error<T: Real>(ape_next: T) -> T {
    -ape_next
}

pub fn reward_error_reduction<T: Real>(ape_current: T, ape_next: T) -> T {
    ape_current - ape_next
}
