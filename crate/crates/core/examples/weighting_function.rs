//! Tabulates the cost-aware weight `f`, its slope, and the hard-threshold
//! modulation it smooths, for a few bases.
//!
//! ```text
//! cargo run --example weighting_function -- 25
//! ```

use smpo::modulation::{piecewise_reference, weight, weight_grad_q, ModulationConfig};

fn main() -> smpo::Result<()> {
    let d: f64 = std::env::args()
        .nth(1)
        .map_or(Ok(25.0), |s| s.parse())
        .expect("threshold must be a number");

    for base in [2.0, 3.0, 4.0] {
        let cfg = ModulationConfig::new(base, d)?;
        println!("b = {base}, d = {d}");
        println!("{:>8} {:>14} {:>14} {:>10}", "total", "f", "df/dq", "hard");
        for k in 0..=8 {
            let total = d * (k as f64) / 6.0;
            // all of the total attributed to the critic so the slope is defined up to d
            let q = total.min(d);
            let cum = total - q;
            println!(
                "{:>8.2} {:>14.6} {:>14.6} {:>10}",
                total,
                weight(cum, q, &cfg)?,
                weight_grad_q(cum, q, &cfg)?,
                piecewise_reference(1.0, cum, q, &cfg),
            );
        }
        println!();
    }

    let sat = ModulationConfig::new(3.0, 5.0)?.with_saturation(2.0)?;
    println!("b = 3, d = 5, saturating 2 units past d: floor {:.4}", sat.floor());
    for total in [4.0, 5.0, 6.0, 7.0, 10.0] {
        println!("  f({total}) = {:.4}", weight(total, 0.0, &sat)?);
    }
    Ok(())
}
