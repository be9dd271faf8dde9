//! Ranking metrics on a small hand-made example.
//!
//! cargo run --example metrics

use resilience::metrics::{auprc, auroc, spearman, spearman_exact_p, MetricReport};

fn main() -> resilience::Result<()> {
    let labels = [1, 0, 1, 1, 0, 0, 1, 0, 0, 0];
    let scores = [0.9, 0.8, 0.7, 0.7, 0.6, 0.4, 0.35, 0.3, 0.2, 0.1];
    println!("AUROC {:.4}", auroc(&labels, &scores)?);
    println!("AUPRC {:.4}", auprc(&labels, &scores)?);
    println!("{:?}", MetricReport::evaluate(&labels, &scores)?);

    let rank_a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    let rank_b = [2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 6.0];
    let s = spearman(&rank_a, &rank_b)?;
    println!(
        "Spearman rho {:.4}, t-approximation p {:.4}, exact p {:.4}",
        s.rho.unwrap_or(f64::NAN),
        s.p_value.unwrap_or(f64::NAN),
        spearman_exact_p(&rank_a, &rank_b)?.unwrap_or(f64::NAN)
    );
    Ok(())
}
