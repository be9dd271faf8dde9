//! Fit the three-level random-intercept logit to synthetic data with known
//! variance components and compare the estimates with the truth.
//!
//! cargo run --release --example multilevel_recovery

use std::time::Instant;

use resilience::dataset::{synth_generate, SynthConfig};
use resilience::multilevel::{fit_3level_logit, school_means, MultilevelOptions};

fn main() -> resilience::Result<()> {
    let config = SynthConfig {
        countries: 10,
        schools_per_country: 20,
        students_per_school: 50,
        beta_ses: 1.0,
        sigma2_school: 0.5,
        sigma2_country: 0.3,
        ..SynthConfig::default()
    };
    let start = Instant::now();
    let mut sums = [0.0; 3];
    let seeds = 1..=5u64;
    for seed in seeds.clone() {
        let out = synth_generate(&config, seed)?;
        let t = &out.table;
        let ses = &out.latent.ses;
        let means = school_means(ses, t.school_ids());
        let fit = fit_3level_logit(
            &out.latent.outcomes,
            ses,
            &means,
            t.school_ids(),
            t.country_ids(),
            &MultilevelOptions::default(),
        )?;
        println!(
            "seed {seed}: beta_ses {:.3}  sigma2_school {:.3}  sigma2_country {:.3}  ({} iterations, converged {})",
            fit.beta_ses, fit.sigma2_school, fit.sigma2_country, fit.convergence.iterations, fit.convergence.converged
        );
        sums[0] += fit.beta_ses;
        sums[1] += fit.sigma2_school;
        sums[2] += fit.sigma2_country;
    }
    let n = seeds.count() as f64;
    println!(
        "mean: beta_ses {:.3} (truth 1.0)  sigma2_school {:.3} (truth 0.5)  sigma2_country {:.3} (truth 0.3)",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n
    );
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
