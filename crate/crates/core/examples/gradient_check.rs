//! Checks every hand-derived gradient in the crate against central finite
//! differences: the weighting function, MLP backpropagation, and the full
//! two-term policy gradient on an enumerable two-state CMDP.

use smpo::harness::check::{mlp_gradient_error, policy_gradient_oracle_error, weight_gradient_error};

fn main() -> smpo::Result<()> {
    let seed = 11;
    println!(
        "df/dq at 100 interior points      max rel err {:.3e}",
        weight_gradient_error(100, seed)?
    );
    println!(
        "MLP backward, 20 random networks  max rel err {:.3e}",
        mlp_gradient_error(20, seed)?
    );
    for with_b in [true, false] {
        let err = policy_gradient_oracle_error(10, with_b, seed)?;
        let label = if with_b { "with" } else { "without" };
        println!("policy gradient {label:>7} critic term  max rel err {err:.3e}");
    }
    Ok(())
}
