//! Model selection as a Markov decision process solved by tabular Q-learning.
//!
//! States are "the model currently in use" and actions are "the model to use
//! at the next step", both ranging over `I` pre-selected candidates. Rewards
//! come from realized errors or rankings inside a historical window.

mod agent;
mod reward;
mod table;

pub use agent::{
    apply_policy, epsilon_at, train_agent, train_agent_observed, AgentConfig, AgentWindow,
    LearningCurve,
};
pub use reward::{rank_models, reward_error, reward_error_reduction, reward_rank, RankVector, RewardStrategy};
pub use table::{q_update, MdpSpace, QTable};
