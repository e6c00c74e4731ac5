//! Rolls out one episode and writes it as JSON lines, one object per step
//! with `step`, `state`, `action`, `reward`, `cost` and `cum_cost`.
//!
//! ```text
//! cargo run --example trajectory_dump -- grid [seed] > grid.jsonl
//! cargo run --example trajectory_dump -- point [seed] > point.jsonl
//! ```
//!
//! `grid` follows a noisy goal-seeking table policy; `point` an untrained
//! Gaussian MLP policy.

use std::io::Write;

use smpo::approx::PolicyFunction;
use smpo::cmdp::{
    rollout_episode, write_trajectory_dump, Environment, HazardGrid, PointHazard, TabularEnv, Trajectory,
};
use smpo::harness::check::goal_directed_policy;
use smpo::seeding::{rng, Stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let which = args.next().unwrap_or_else(|| "grid".into());
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut rng = rng(seed, Stream::Episode, &[0]);

    let traj: Trajectory = match which.as_str() {
        "grid" => {
            let grid = HazardGrid::default();
            let policy = goal_directed_policy(&grid, 0.2);
            let mut env = TabularEnv::new(grid, 50, 0.99)?;
            rollout_episode(&mut env, &policy, &mut rng, 50)?
        }
        "point" => {
            let mut env = PointHazard::new(Default::default())?;
            let spec = env.spec();
            let policy = PolicyFunction::new(spec.observation_dim, &[32, 32], spec.action_space, seed);
            rollout_episode(&mut env, &policy, &mut rng, spec.max_episode_steps)?
        }
        other => return Err(format!("unknown environment {other:?}, expected grid or point").into()),
    };

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    write_trajectory_dump(&traj, &mut out)?;
    out.flush()?;
    eprintln!(
        "{} steps, discounted reward {:.3}, total cost {}",
        traj.len(),
        traj.episode_reward_discounted,
        traj.episode_cost_undiscounted
    );
    Ok(())
}
