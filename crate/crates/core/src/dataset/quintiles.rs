use crate::error::{Error, Result};

/// Tolerance applied to cumulative shares so that sums such as `0.7 + 0.1`
/// land on the boundary they represent exactly.
const SHARE_EPS: f64 = 1e-9;

/// Weighted quintile labels in `1..=5`.
///
/// Rows are ordered by value, ties by input position. Row `r` gets label `q`
/// when the weighted share of rows strictly before it lies in
/// `[(q - 1) / 5, q / 5)`.
pub fn assign_quintiles(values: &[f64], weights: &[f64]) -> Result<Vec<u8>> {
    assign_ntiles(values, weights, 5)
}

pub fn assign_ntiles(values: &[f64], weights: &[f64], groups: u8) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Err(Error::Empty("quintile input"));
    }
    if values.len() != weights.len() {
        return Err(Error::InvalidInput("values and weights differ in length".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("quintile values must be finite".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("all weights are zero".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));

    let g = f64::from(groups);
    let mut labels = vec![0u8; values.len()];
    let mut below = 0.0;
    for &i in &order {
        let share = below / total;
        let q = ((share * g + SHARE_EPS).floor() as i64 + 1).clamp(1, i64::from(groups));
        labels[i] = q as u8;
        below += weights[i];
    }
    Ok(labels)
}
