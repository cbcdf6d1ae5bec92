use crate::error::{Error, Result};

/// 1 (sensitive) iff the IC50 is strictly below the mean IC50; values equal
/// to the mean are resistant.
pub fn binarize_ic50(ic50: &[f64]) -> Result<Vec<u8>> {
    if ic50.is_empty() {
        return Err(Error::data("no IC50 values to binarize"));
    }
    if ic50.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("IC50 values must be finite"));
    }
    let mean = ic50.iter().sum::<f64>() / ic50.len() as f64;
    Ok(ic50.iter().map(|&v| u8::from(v < mean)).collect())
}
