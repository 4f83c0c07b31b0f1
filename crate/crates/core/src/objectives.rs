//! Contrastive alignment losses and supervised task losses.

use candle_core::{DType, Tensor, D};

use crate::error::{Error, Result};

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

/// Row-paired contrastive batch: row `i` of `positives` is the positive for
/// row `i` of `anchors`; every other row is a negative.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<'a> {
    pub anchors: &'a Tensor,
    pub positives: &'a Tensor,
    pub temperature: f64,
}

fn l2_normalize(x: &Tensor, what: &str) -> Result<Tensor> {
    let norms = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let host: Vec<f64> = norms.flatten_all()?.to_dtype(DType::F64)?.to_vec1()?;
    if let Some(i) = host.iter().position(|n| !(*n > 0.0)) {
        return Err(Error::InvalidArgument(format!("{what} row {i} has zero (or non-finite) norm")));
    }
    Ok(x.broadcast_div(&norms)?)
}

/// Mean over rows of `-log softmax(logits)[i, i]`.
fn diagonal_nll(logits: &Tensor) -> Result<Tensor> {
    let n = logits.dim(0)?;
    let idx = Tensor::arange(0u32, n as u32, logits.device())?.reshape((n, 1))?;
    let ls = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok(ls.gather(&idx, 1)?.mean_all()?.neg()?)
}

/// Symmetric InfoNCE with cosine similarity: the average of the
/// anchor→positive and positive→anchor directions.
pub fn info_nce(batch: &ContrastiveBatch<'_>) -> Result<Tensor> {
    let (n, d) = batch.anchors.dims2()?;
    let (np, dp) = batch.positives.dims2()?;
    if (n, d) != (np, dp) {
        return Err(Error::DimMismatch {
            expected: n * d,
            actual: np * dp,
        });
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("contrastive loss needs N >= 2 rows, got {n}")));
    }
    if !(batch.temperature > 0.0) {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let a = l2_normalize(batch.anchors, "anchor")?;
    let p = l2_normalize(batch.positives, "positive")?;
    let logits = (a.matmul(&p.t()?)? / batch.temperature)?;
    let forward = diagonal_nll(&logits)?;
    let backward = diagonal_nll(&logits.t()?.contiguous()?)?;
    Ok(((forward + backward)? * 0.5)?)
}

pub fn multimodal_alignment_loss(g_sat: &Tensor, g_cov: &Tensor, temperature: f64) -> Result<Tensor> {
    info_nce(&ContrastiveBatch {
        anchors: g_sat,
        positives: g_cov,
        temperature,
    })
}

/// Anchors on the fused visual embedding.
pub fn geo_alignment_loss(g_fused: &Tensor, g_geo: &Tensor, temperature: f64) -> Result<Tensor> {
    info_nce(&ContrastiveBatch {
        anchors: g_fused,
        positives: g_geo,
        temperature,
    })
}

/// Mean binary cross-entropy on `sigmoid(logit)`, in the overflow-free form
/// `max(x, 0) - x·y + log(1 + exp(-|x|))`.
pub fn nsp_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let n = logits.elem_count();
    if n != labels.len() || n == 0 {
        return Err(Error::DimMismatch {
            expected: labels.len(),
            actual: n,
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Label(format!("binary label {bad} not in {{0,1}}")));
    }
    let x = logits.flatten_all()?;
    let y = Tensor::from_vec(labels.iter().map(|&l| l as f64).collect::<Vec<_>>(), n, x.device())?.to_dtype(x.dtype())?;
    let softplus = ((x.abs()?.neg()?.exp()? + 1.0)?).log()?;
    Ok((x.relu()? - (&x * &y)? + softplus)?.mean_all()?)
}

/// Mean categorical cross-entropy over softmax.
pub fn taxonomy_loss(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let (n, k) = logits.dims2()?;
    if n != labels.len() || n == 0 {
        return Err(Error::DimMismatch {
            expected: labels.len(),
            actual: n,
        });
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label(format!("class label {bad} out of range for {k} classes")));
    }
    let idx = Tensor::from_vec(labels.iter().map(|&l| l as u32).collect::<Vec<_>>(), (n, 1), logits.device())?;
    let ls = candle_nn::ops::log_softmax(logits, D::Minus1)?;
    Ok(ls.gather(&idx, 1)?.mean_all()?.neg()?)
}
