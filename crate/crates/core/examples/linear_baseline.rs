//! L1 and L2 penalized logits along a path of penalty strengths.
//!
//! cargo run --release --example linear_baseline

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilience::linear::{fit_penalized_logit, LinearParams, Penalty};
use resilience::numeric::sigmoid;
use resilience::Matrix;

fn main() -> resilience::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..1000).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(rng.random_bool(sigmoid(2.5 * r[0] - 1.5 * r[3]))))
        .collect();
    let x = Matrix::from_rows(&rows)?;
    for penalty in [Penalty::L1, Penalty::L2] {
        println!("{penalty:?}");
        for c in [0.001, 0.01, 0.1, 1.0, f64::INFINITY] {
            let m = fit_penalized_logit(&x, &y, &LinearParams { penalty, c, ..LinearParams::default() })?;
            let w: Vec<String> = m.weights.iter().map(|v| format!("{v:+.3}")).collect();
            println!("  C = {c:<6} iterations {:>3}  weights [{}]", m.iterations, w.join(" "));
        }
    }
    Ok(())
}
