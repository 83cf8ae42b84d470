//! Evaluates hand-made predictions with the four task metrics.

use narrascore::metrics::{binary_report, derive_ri, kappa_linear, mae, r_squared};

fn main() -> narrascore::Result<()> {
    let truth_ns = [3.0, 7.5, 12.0, 9.0];
    let pred_ns = [4.0, 7.0, 10.5, 9.5];
    println!("NS R² {:.3}, MAE {:.3}", r_squared(&truth_ns, &pred_ns)?, mae(&truth_ns, &pred_ns)?);
    let truth_sc = [1, 2, 4, 5, 6, 3];
    let pred_sc = [2, 2, 4, 6, 5, 3];
    println!("SC linear κ {:.3}", kappa_linear(&truth_sc, &pred_sc, 6)?);
    let report = binary_report(&derive_ri(&truth_sc)?, &derive_ri(&pred_sc)?)?;
    println!("RI {report:?}");
    Ok(())
}
