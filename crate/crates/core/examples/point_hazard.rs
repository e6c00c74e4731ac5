//! SMPO with a Gaussian policy on the continuous point-robot task, next to an
//! unconstrained run with the same budget.
//!
//! ```text
//! cargo run --release --example point_hazard -- [epochs]
//! ```

use smpo::harness::EnvConfig;
use smpo::smpo::{Method, SmpoConfig, Trainer};

fn main() -> smpo::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(30, |s| s.parse().expect("epochs"));
    let env_cfg = EnvConfig::PointHazard(Default::default());
    let cfg = SmpoConfig {
        epochs,
        ..env_cfg.default_smpo()
    };

    for method in [Method::Smpo, Method::VanillaPg] {
        let env = env_cfg.build(cfg.discount)?;
        let mut trainer = Trainer::new(env, method, cfg.clone(), 0)?;
        println!("{} (d = {})", method.name(), cfg.threshold);
        println!("{:>6} {:>9} {:>7} {:>6}", "epoch", "reward", "cost", "d'");
        for _ in 0..epochs {
            let rec = trainer.run_epoch()?;
            if rec.epoch % 5 == 0 || rec.epoch + 1 == epochs {
                println!(
                    "{:>6} {:>9.2} {:>7.2} {:>6.2}",
                    rec.epoch, rec.avg_episode_reward, rec.avg_episode_cost, rec.d_prime
                );
            }
        }
        println!();
    }
    Ok(())
}
