//! Cross-validated comparison of boosted trees against penalized logits on
//! data with a non-linear signal and an interaction.
//!
//! cargo run --release --example gbt_grid_search

use resilience::dataset::{stratified_undersampled_folds, synth_generate, SynthConfig};
use resilience::gbt::{grid_search, GbtParams, GridPoint};
use resilience::linear::{LinearParams, Penalty};

fn main() -> resilience::Result<()> {
    let out = synth_generate(
        &SynthConfig {
            countries: 4,
            schools_per_country: 10,
            students_per_school: 40,
            beta_ses: 0.8,
            nonlinear: true,
            nonlinear_coef: 1.5,
            interaction: true,
            interaction_coef: 2.0,
            ..SynthConfig::default()
        },
        7,
    )?;
    let x = out.table.matrix();
    let y = &out.latent.outcomes;
    let folds = stratified_undersampled_folds(y, 5, 1)?;
    let gbt = |max_depth, subsample| {
        GridPoint::Gbt(GbtParams {
            n_trees: 80,
            max_depth,
            subsample,
            ..GbtParams::default()
        })
    };
    let logit = |penalty, c| GridPoint::Linear(LinearParams { penalty, c, ..LinearParams::default() });
    let grid = vec![
        gbt(2, 1.0),
        gbt(4, 0.8),
        logit(Penalty::L2, 1.0),
        logit(Penalty::L1, 0.1),
    ];
    let res = grid_search(&x, y, &grid, &folds)?;
    for &i in &res.ranking {
        let r = &res.results[i];
        println!("{:<40} AUROC {:.4}  AUPRC {:.4}", r.label, r.mean_auroc, r.mean_auprc);
    }
    println!("winner: {}", res.best().label);
    Ok(())
}
