//! Render every figure kind from a small fitted model into ./figures.
//!
//! cargo run --release --example svg_figures

use std::fs;

use resilience::dataset::{synth_generate, SynthConfig};
use resilience::dependence::{partial_dependence, GridSpec};
use resilience::explain::{beeswarm_export, global_importance, local_profiles, paired_importance, ShapMatrix};
use resilience::gbt::{fit_gbt, GbtParams};
use resilience::svg::{render_svg, CurveScale, PlotData, PlotKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig {
        beta_ses: 1.0,
        nonlinear: true,
        interaction: true,
        missing_rate: 0.03,
        ..SynthConfig::default()
    };
    let out = synth_generate(&config, 8)?;
    let x = out.table.matrix();
    let names = out.table.schema().names();
    let model = fit_gbt(&x, &out.latent.outcomes, &GbtParams { n_trees: 50, ..GbtParams::default() })?;
    let shap = ShapMatrix::compute(&model, &x, out.table.student_ids().to_vec(), names)?;
    let ranking = global_importance(&shap)?;
    let top: Vec<String> = ranking.top(10).iter().map(|e| e.feature.clone()).collect();
    let profiles = local_profiles(&shap, &x, 8)?;

    // Halves of the table stand in for two sub-systems.
    let half = x.n_rows() / 2;
    let keys = out.table.student_ids().to_vec();
    let first: Vec<usize> = (0..half).collect();
    let second: Vec<usize> = (half..x.n_rows()).collect();
    let sub = |rows: &[usize]| -> resilience::Result<_> {
        let xs = x.select_rows(rows);
        let k = rows.iter().map(|&i| keys[i].clone()).collect();
        global_importance(&ShapMatrix::compute(&model, &xs, k, shap.feature_names.clone())?)
    };
    let paired = paired_importance(&sub(&first)?, &sub(&second)?, "first", "second", 15)?;

    let j = out.table.schema().require("StudBKGD_Curiosity")?;
    let curve = partial_dependence(&model, &x, j, "StudBKGD_Curiosity", &GridSpec::Auto)?;

    let figures = [
        ("importance.svg", PlotKind::ImportanceBar, PlotData::ImportanceBar { title: "mean |SHAP|".into(), ranking: ranking.clone(), top_n: 15 }),
        ("beeswarm.svg", PlotKind::Beeswarm, PlotData::Beeswarm { title: "SHAP values".into(), features: top.clone(), records: beeswarm_export(&shap, &x, &top)? }),
        ("local_max.svg", PlotKind::LocalProfile, PlotData::LocalProfile { title: "highest margin".into(), profile: profiles.max.clone() }),
        ("pdp_or.svg", PlotKind::PdpCurve, PlotData::PdpCurve { title: "curiosity".into(), curves: vec![curve.clone()], scale: CurveScale::OddsRatio }),
        ("pdp_rp.svg", PlotKind::PdpCurve, PlotData::PdpCurve { title: "curiosity".into(), curves: vec![curve], scale: CurveScale::RelativeProbability }),
        ("paired.svg", PlotKind::PairedImportance, PlotData::PairedImportance { title: "first vs second half".into(), paired }),
    ];
    fs::create_dir_all("figures")?;
    for (file, kind, data) in figures {
        let path = format!("figures/{file}");
        fs::write(&path, render_svg(kind, &data)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
