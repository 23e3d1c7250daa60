//! Masked next-token cross entropy.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Log-softmax of one logit row, `f64` throughout.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

fn check(logits: &Mat, targets: &[u32], mask: &[bool]) -> Result<usize> {
    if targets.len() != logits.rows || mask.len() != logits.rows {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows but {} targets and {} mask entries",
            logits.rows,
            targets.len(),
            mask.len()
        )));
    }
    if mask.first() == Some(&true) {
        return Err(Error::DegenerateLoss(
            "position 0 has no preceding logits to predict it".into(),
        ));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::DegenerateLoss("loss mask selects no positions".into()));
    }
    if let Some(&id) = targets
        .iter()
        .zip(mask)
        .find(|(&t, &m)| m && t as usize >= logits.cols)
        .map(|(t, _)| t)
    {
        return Err(Error::Vocab {
            id,
            size: logits.cols,
        });
    }
    Ok(count)
}

/// Mean of `-log softmax(logits[t-1])[targets[t]]` over positions `t` with `mask[t]`.
pub fn ar_loss(logits: &Mat, targets: &[u32], mask: &[bool]) -> Result<f64> {
    let count = check(logits, targets, mask)?;
    let total: f64 = (1..logits.rows)
        .filter(|&t| mask[t])
        .map(|t| -log_softmax(logits.row(t - 1))[targets[t] as usize])
        .sum();
    Ok(total / count as f64)
}

/// Loss together with `dL/dlogits`.
pub fn ar_loss_grad(logits: &Mat, targets: &[u32], mask: &[bool]) -> Result<(f64, Mat)> {
    let count = check(logits, targets, mask)?;
    let inv = 1.0 / count as f64;
    let mut grad = Mat::zeros(logits.rows, logits.cols);
    let mut total = 0.0;
    for t in (1..logits.rows).filter(|&t| mask[t]) {
        let lp = log_softmax(logits.row(t - 1));
        let y = targets[t] as usize;
        total -= lp[y];
        let g = grad.row_mut(t - 1);
        for (gv, l) in g.iter_mut().zip(&lp) {
            *gv += l.exp() * inv;
        }
        g[y] -= inv;
    }
    Ok((total * inv, grad))
}
