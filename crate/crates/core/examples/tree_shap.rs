//! Exact SHAP values for a fitted booster: check them against subset
//! enumeration, confirm local accuracy and print the global ranking.
//!
//! cargo run --release --example tree_shap

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilience::explain::{global_importance, shap_brute_force, shap_values, ShapMatrix};
use resilience::gbt::{fit_gbt, GbtParams, Output};
use resilience::numeric::sigmoid;
use resilience::Matrix;

fn main() -> resilience::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let names: Vec<String> = ["age", "income", "noise_a", "noise_b", "score"].map(String::from).to_vec();
    let rows: Vec<Vec<f64>> = (0..800).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(rng.random_bool(sigmoid(2.0 * r[0] + 3.0 * r[1] * r[4]))))
        .collect();
    let x = Matrix::from_rows(&rows)?;
    let model = fit_gbt(&x, &y, &GbtParams { n_trees: 60, max_depth: 4, ..GbtParams::default() })?;

    let row = x.row(0);
    let (phi0, phi) = shap_values(&model, row)?;
    let brute = shap_brute_force(&model, row)?;
    let gap = phi.iter().zip(&brute).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let margin = model.predict(row, Output::Margin)?;
    println!("row 0: phi0 {phi0:.4} + sum phi {:.4} = margin {margin:.4}", phi.iter().sum::<f64>());
    println!("max difference from subset enumeration: {gap:.2e}");

    let keys = (0..x.n_rows()).map(|i| i.to_string()).collect();
    let shap = ShapMatrix::compute(&model, &x, keys, names)?;
    for e in global_importance(&shap)?.entries {
        println!("{:<8} mean |SHAP| {:.4}", e.feature, e.mean_abs_shap);
    }
    Ok(())
}
