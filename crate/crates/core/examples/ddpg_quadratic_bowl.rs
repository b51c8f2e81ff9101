//! DDPG on a one-step task with reward −(a − 0.7)². The greedy action
//! should settle near 0.7.

use gridmarl::ddpg::{AgentConfig, DdpgAgent, NoiseSchedule, Transition};
use gridmarl::nn::{Activation, OptimizerConfig};
use rand::SeedableRng;

const TARGET: f64 = 0.7;
const STEPS: usize = 2000;

fn main() -> gridmarl::Result<()> {
    let cfg = AgentConfig {
        obs_dim: 1,
        act_dim: 1,
        act_low: vec![-1.0],
        act_high: vec![1.0],
        gamma: 0.0,
        tau: 0.05,
        batch_size: 32,
        hidden_layers: vec![16, 16],
        actor_hidden_activation: Activation::Tanh,
        actor_output_activation: Activation::Tanh,
        critic_hidden_activation: Activation::Tanh,
        batch_norm: false,
        actor_optimizer: OptimizerConfig::adam(1e-3),
        critic_optimizer: OptimizerConfig::adam(1e-2),
        noise: NoiseSchedule {
            initial: 0.5,
            final_std: 0.05,
            decay_fraction: 0.8,
        },
        buffer_capacity: 10_000,
        warmup: Some(64),
        grad_clip: Some(10.0),
    };
    for seed in 0..3 {
        let mut agent =
            DdpgAgent::new(cfg.clone(), gridmarl::data::StreamRng::seed_from_u64(seed))?;
        let s = vec![1.0];
        let mut trace = Vec::new();
        for t in 0..STEPS {
            let noise = 0.5 * (1.0 - t as f64 / STEPS as f64) + 0.05;
            agent.observe(&s)?;
            let a = agent.act(&s, noise)?;
            let r = -(a[0] - TARGET).powi(2);
            agent.remember(Transition {
                s: s.clone(),
                a,
                r,
                s_next: s.clone(),
                terminal: true,
            });
            if agent.ready() {
                agent.train_step()?;
            }
            if (t + 1) % 500 == 0 {
                trace.push(format!("{:.3}", agent.act_greedy(&s)?[0]));
            }
        }
        println!(
            "seed {seed}: greedy action every 500 steps {}",
            trace.join(" -> ")
        );
    }
    Ok(())
}
