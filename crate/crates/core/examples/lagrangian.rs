//! Lagrangian PG on the grid world: prints the dual multiplier as it climbs
//! while episodes overspend the budget and settles once they do not.
//!
//! ```text
//! cargo run --release --example lagrangian -- [epochs] [multiplier_lr]
//! ```

use smpo::baselines::LagrangeConfig;
use smpo::harness::{EnvConfig, GridConfig};
use smpo::smpo::{Method, SmpoConfig, Trainer};

fn main() -> smpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(150, |s| s.parse().expect("epochs"));
    let multiplier_lr: f64 = args.next().map_or(0.05, |s| s.parse().expect("multiplier_lr"));

    let cfg = SmpoConfig {
        epochs,
        ..SmpoConfig::hazard_grid()
    };
    let lagrange = LagrangeConfig {
        multiplier_lr,
        ..LagrangeConfig::default()
    };
    let env = EnvConfig::HazardGrid(GridConfig::default()).build(cfg.discount)?;
    let mut trainer = Trainer::with_lagrange(env, Method::LagrangianPg, cfg.clone(), lagrange, 0)?;

    println!("budget d = {}", cfg.threshold);
    println!("{:>6} {:>9} {:>7} {:>8}", "epoch", "reward", "cost", "mu");
    for _ in 0..epochs {
        let rec = trainer.run_epoch()?;
        if rec.epoch % 10 == 0 || rec.epoch + 1 == epochs {
            println!(
                "{:>6} {:>9.2} {:>7.2} {:>8.4}",
                rec.epoch,
                rec.avg_episode_reward,
                rec.avg_episode_cost,
                rec.multiplier.unwrap_or(0.0)
            );
        }
    }
    Ok(())
}
