//! Fits the MLP safety critic to transitions from a fixed noisy policy on the
//! grid world and prints it next to the exact dynamic-programming table.
//!
//! ```text
//! cargo run --release --example critic_oracle
//! ```

use smpo::cmdp::{Action, ActionSpace, Cell, HazardGrid, TabularModel};
use smpo::critic::{dp_cost_oracle, fit_fixed_policy, CriticConfig, SafetyCritic};
use smpo::harness::check::{collect_transitions, critic_oracle_report, goal_directed_policy, CRITIC_FIT};

fn main() -> smpo::Result<()> {
    let grid = HazardGrid::default();
    let policy = goal_directed_policy(&grid, 0.3);
    let discount = 0.99;

    let exact = dp_cost_oracle(&grid, &policy, discount, 1e-9)?;
    println!("exact Q^c(s, down) for the goal-directed policy (noise 0.3):");
    print_grid(&grid, |s| exact.get(s, 2));

    let data = collect_transitions(grid.clone(), &policy, 200, discount, 20_000, 3)?;
    let mut critic = SafetyCritic::new(grid.num_states(), &[64, 64], ActionSpace::Discrete(4), 3);
    let cfg = CriticConfig {
        l2: 0.0,
        discount,
        ..CriticConfig::default()
    };
    let loss = fit_fixed_policy(&mut critic, &data, &policy, &cfg, CRITIC_FIT)?;
    println!(
        "\nMLP critic after {} steps on {} transitions (loss {loss:.4}):",
        CRITIC_FIT.steps,
        data.len()
    );
    print_grid(&grid, |s| {
        critic.predict(&grid.observe(s), &Action::Discrete(2)).unwrap()
    });

    let report = critic_oracle_report(50_000, CRITIC_FIT, 100)?;
    let (s, a, pred, truth) = report.worst;
    println!(
        "\n50k transitions: max |error| {:.4} over {} well-visited pairs (worst: state {s}, action {a}: {pred:.3} vs {truth:.3})",
        report.max_abs_error, report.compared_pairs
    );
    Ok(())
}

fn print_grid(grid: &HazardGrid, value: impl Fn(usize) -> f64) {
    for y in 0..grid.height() {
        let row: Vec<String> = (0..grid.width())
            .map(|x| {
                let c = Cell::new(x, y);
                let mark = if grid.is_hazard(c) { '#' } else { ' ' };
                format!("{mark}{:5.2}", value(grid.index(c)))
            })
            .collect();
        println!("  {}", row.join(" "));
    }
}
