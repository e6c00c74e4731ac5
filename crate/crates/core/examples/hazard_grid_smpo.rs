//! Trains SMPO on the grid world with its desk-scale defaults, then saves the
//! policy checkpoint, loads it back and draws the greedy route.
//!
//! ```text
//! cargo run --release --example hazard_grid_smpo -- [epochs] [seed]
//! ```
//!
//! The default run (200 epochs) takes well under a minute in release mode.

use smpo::approx::{read_checkpoint, write_checkpoint, Checkpoint, PolicyFunction};
use smpo::cmdp::{Cell, HazardGrid, TabularModel};
use smpo::harness::{EnvConfig, GridConfig};
use smpo::smpo::{Method, SmpoConfig, Trainer};

fn main() -> smpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(200, |s| s.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let cfg = SmpoConfig {
        epochs,
        ..SmpoConfig::hazard_grid()
    };
    let env = EnvConfig::HazardGrid(GridConfig::default()).build(cfg.discount)?;
    let mut trainer = Trainer::new(env, Method::Smpo, cfg.clone(), seed)?;

    println!("{:>6} {:>9} {:>7} {:>6}", "epoch", "reward", "cost", "d'");
    for _ in 0..epochs {
        let rec = trainer.run_epoch()?;
        if (rec.epoch + 1) % 20 == 0 {
            println!(
                "{:>6} {:>9.2} {:>7.2} {:>6.2}",
                rec.epoch + 1,
                rec.avg_episode_reward,
                rec.avg_episode_cost,
                rec.d_prime
            );
        }
    }
    let (reward, cost) = trainer.log().tail_means(10).unwrap_or((0.0, 0.0));
    println!(
        "last 10 epochs: reward {reward:.2}, cost {cost:.2} (d = {})",
        cfg.threshold
    );

    let path = std::env::temp_dir().join(format!("hazard_grid_smpo_seed{seed}.policy.ckpt"));
    write_checkpoint(&path, &Checkpoint::from_policy(trainer.policy()))?;
    let spec = *trainer.env_spec();
    let mut restored = PolicyFunction::new(spec.observation_dim, &cfg.policy_hidden, spec.action_space, 0);
    read_checkpoint(&path)?.restore_policy(&mut restored)?;
    assert_eq!(restored.params(), trainer.policy().params());
    println!("checkpoint round trip ok: {}", path.display());

    draw(&HazardGrid::default(), &restored)
}

/// Most likely action per cell; `#` marks hazards, `G` the goal.
fn draw(grid: &HazardGrid, policy: &PolicyFunction) -> smpo::Result<()> {
    let arrows = ['^', '>', 'v', '<'];
    for y in 0..grid.height() {
        let mut line = String::new();
        for x in 0..grid.width() {
            let c = Cell::new(x, y);
            let p = policy.probabilities(&grid.observe(grid.index(c)))?;
            let best = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
            let mark = if c == grid.goal() {
                'G'
            } else if grid.is_hazard(c) {
                '#'
            } else {
                ' '
            };
            line.push_str(&format!("{mark}{} ", arrows[best]));
        }
        println!("{line}");
    }
    Ok(())
}
