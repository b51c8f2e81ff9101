pub mod agent;
pub mod buffer;
pub mod config;

pub use agent::{
    actor_objective_gradient, actor_spec, actor_update, bellman_targets, critic_spec,
    critic_update, select_action, soft_update, soft_update_network, Batch, DdpgAgent, UpdateStats,
};
pub use buffer::{buffer_push, buffer_sample, ReplayBuffer, Transition};
pub use config::{AgentConfig, NoiseSchedule};
