//! Partial dependence of a fitted booster on two features, on the
//! relative-probability and odds-ratio scales.
//!
//! cargo run --release --example partial_dependence

use resilience::dataset::{synth_generate, SynthConfig};
use resilience::dependence::{odds_ratio_transform, partial_dependence, GridSpec, OddsReference};
use resilience::gbt::{fit_gbt, GbtParams};

fn main() -> resilience::Result<()> {
    let config = SynthConfig {
        feature_effects: [("CovidBKGD_Closeddays".to_string(), -0.8), ("StudBKGD_Perseverance".to_string(), 0.6)]
            .into_iter()
            .collect(),
        ..SynthConfig::default()
    };
    let out = synth_generate(&config, 5)?;
    let x = out.table.matrix();
    let model = fit_gbt(&x, &out.latent.outcomes, &GbtParams { n_trees: 60, ..GbtParams::default() })?;
    for name in ["CovidBKGD_Closeddays", "StudBKGD_Perseverance"] {
        let j = out.table.schema().require(name)?;
        let curve = partial_dependence(&model, &x, j, name, &GridSpec::Auto)?;
        let lowest = curve.grid[0];
        let (_, or_low) = odds_ratio_transform(&curve, OddsReference::GridValue(lowest))?;
        println!("{name} (baseline probability {:.3})", curve.baseline);
        for k in 0..curve.grid.len() {
            println!(
                "  {:>8.3}  f {:.3}  RP {:.3}  OR vs baseline {}  OR vs {lowest:.1} {}",
                curve.grid[k],
                curve.f_s[k],
                curve.rp[k],
                curve.odds_ratio[k].map_or("unbounded".into(), |v| format!("{v:.3}")),
                or_low[k].map_or("unbounded".into(), |v| format!("{v:.3}")),
            );
        }
    }
    Ok(())
}
