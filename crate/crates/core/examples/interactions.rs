//! SHAP interaction values: a product term shows up off the diagonal, an
//! additive term stays on it, and each row sums back to the SHAP value.
//!
//! cargo run --release --example interactions

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilience::explain::{shap_interactions, shap_values, write_interactions_csv};
use resilience::gbt::{fit_gbt, GbtParams};
use resilience::numeric::sigmoid;
use resilience::Matrix;

fn main() -> resilience::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows: Vec<Vec<f64>> = (0..1500).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    // x0 * x1 interacts; x2 is additive.
    let y: Vec<u8> = rows
        .iter()
        .map(|r| u8::from(rng.random_bool(sigmoid(4.0 * r[0] * r[1] + 1.5 * r[2]))))
        .collect();
    let x = Matrix::from_rows(&rows)?;
    let model = fit_gbt(&x, &y, &GbtParams { n_trees: 80, max_depth: 3, ..GbtParams::default() })?;

    let row = [0.8, 0.7, -0.5];
    let inter = shap_interactions(&model, &row)?;
    let (_, phi) = shap_values(&model, &row)?;
    let names: Vec<String> = ["x0", "x1", "x2"].map(String::from).to_vec();
    write_interactions_csv(&inter, &names, std::io::stdout().lock())?;
    for (i, name) in names.iter().enumerate() {
        println!("{name}: row sum {:.6}  shap {:.6}", inter.row(i).iter().sum::<f64>(), phi[i]);
    }
    Ok(())
}
