//! Disparity, intra-view focal and cross-view KL / NLL losses.
//!
//! Each loss is a single tape node with a hand-written backward pass.

use serde::{Deserialize, Serialize};

use crate::autograd::Var;
use crate::correspondence::MatchGT;
use crate::decoders::Assignment;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::interest::InterestMap;
use crate::stereonet::DisparityPrediction;
use crate::tensor::Tensor;

pub const FOCAL_GAMMA: f64 = 2.0;
pub const FOCAL_ALPHA: f64 = 0.25;
/// Smoothing inside logarithms and normalizing denominators.
pub const LOG_EPS: f64 = 1e-8;
/// Weight of the auxiliary disparity head.
pub const AUX_WEIGHT: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_intra: f64,
    pub lambda_cross_soft: f64,
    pub lambda_cross_hard: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_intra: 100.0,
            lambda_cross_soft: 0.5,
            lambda_cross_hard: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_intra", self.lambda_intra),
            ("lambda_cross_soft", self.lambda_cross_soft),
            ("lambda_cross_hard", self.lambda_cross_hard),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Argument order of the soft cross-view KL term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlOrder {
    /// `KL(reference || prediction)`.
    #[default]
    ReferenceFirst,
    /// `KL(prediction || reference)`.
    PredictionFirst,
}

/// Scalar values of the four loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub disp: f64,
    pub intra: f64,
    pub cross_soft: f64,
    pub cross_hard: f64,
}

pub fn total_loss(terms: &LossTerms, w: &LossWeights) -> f64 {
    terms.disp + w.lambda_intra * terms.intra + w.lambda_cross_soft * terms.cross_soft + w.lambda_cross_hard * terms.cross_hard
}

/// Tape version of [`total_loss`]; zero-weight terms are left off the tape.
pub fn total_loss_var<'g>(disp: Var<'g>, intra: Var<'g>, soft: Var<'g>, hard: Var<'g>, w: &LossWeights) -> Var<'g> {
    let mut total = disp;
    for (term, weight) in [(intra, w.lambda_intra), (soft, w.lambda_cross_soft), (hard, w.lambda_cross_hard)] {
        if weight != 0.0 {
            total = total.add(term.scale(weight));
        }
    }
    total
}

fn check_map_shape(what: &str, pred: &[usize], h: usize, w: usize) -> Result<()> {
    if pred != [h, w] {
        return Err(Error::Contract(format!("{what}: prediction shape {pred:?} does not match target {h}x{w}")));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Focal loss of one logit and returns `(loss, d loss / d logit)`.
pub(crate) fn focal_pixel(z: f64, positive: bool) -> (f64, f64) {
    let (alpha, sign) = if positive { (FOCAL_ALPHA, 1.0) } else { (1.0 - FOCAL_ALPHA, -1.0) };
    // pt = sigmoid(sign * z), log pt = -softplus(-sign * z)
    let log_pt = -softplus(-sign * z);
    let pt = log_pt.exp();
    let q = 1.0 - pt;
    let loss = -alpha * q.powf(FOCAL_GAMMA) * log_pt;
    let grad = -alpha * sign * (-FOCAL_GAMMA * pt * q.powf(FOCAL_GAMMA) * log_pt + q.powf(FOCAL_GAMMA + 1.0));
    (loss, grad)
}

/// Mean binary focal loss of `(H, W)` logits against `labels`.
pub fn focal_view<'g>(logits: Var<'g>, labels: &Grid<bool>) -> Result<Var<'g>> {
    let (h, w) = labels.dims();
    check_map_shape("focal loss", &logits.shape(), h, w)?;
    let z = logits.value();
    let count = (h * w) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(h * w);
    for (&zi, &yi) in z.data().iter().zip(labels.data()) {
        let (l, g) = focal_pixel(zi, yi);
        loss += l;
        grad.push(g / count);
    }
    Ok(logits.graph().op(
        Tensor::scalar(loss / count),
        &[logits],
        Box::new(move |g, p, _, _| {
            let go = g.item();
            vec![Some(Tensor::new(p[0].shape(), grad.iter().map(|v| v * go).collect()))]
        }),
    ))
}

/// Average of the left and right focal losses.
pub fn focal_intra_loss<'g>(
    logits_l: Var<'g>,
    logits_r: Var<'g>,
    teacher_l: &InterestMap,
    teacher_r: &InterestMap,
) -> Result<Var<'g>> {
    let l = focal_view(logits_l, &teacher_l.labels)?;
    let r = focal_view(logits_r, &teacher_r.labels)?;
    Ok(l.add(r).scale(0.5))
}

/// Rows and columns of the reference left out of the soft loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SoftLossDiagnostics {
    pub skipped_rows: usize,
    pub skipped_cols: usize,
}

/// KL between normalized `r` and `q`, with the gradient w.r.t. the raw `q`.
fn kl_segment(r: &[f64], q: &[f64], order: KlOrder) -> (f64, Vec<f64>) {
    let sr = r.iter().sum::<f64>() + LOG_EPS;
    let sq = q.iter().sum::<f64>() + LOG_EPS;
    let rh: Vec<f64> = r.iter().map(|v| v / sr).collect();
    let qh: Vec<f64> = q.iter().map(|v| v / sq).collect();
    let mut loss = 0.0;
    // gradient w.r.t. the normalized prediction
    let mut gq = vec![0.0; q.len()];
    for k in 0..q.len() {
        let lr = (rh[k] + LOG_EPS).ln();
        let lq = (qh[k] + LOG_EPS).ln();
        match order {
            KlOrder::ReferenceFirst => {
                loss += rh[k] * (lr - lq);
                gq[k] = -rh[k] / (qh[k] + LOG_EPS);
            }
            KlOrder::PredictionFirst => {
                loss += qh[k] * (lq - lr);
                gq[k] = lq - lr + qh[k] / (qh[k] + LOG_EPS);
            }
        }
    }
    let dot: f64 = gq.iter().zip(q).map(|(g, v)| g * v).sum();
    let grad = gq.iter().map(|g| g / sq - dot / (sq * sq)).collect();
    (loss, grad)
}

/// Row- and column-wise KL between a predicted transport matrix and the
/// reference assignment, both `(m+1, n+1)`.
pub fn soft_cross_loss<'g>(
    pred: Var<'g>,
    reference: &Assignment,
    order: KlOrder,
) -> Result<(Var<'g>, SoftLossDiagnostics)> {
    let (m, n) = (reference.m(), reference.n());
    if pred.shape() != [m + 1, n + 1] {
        return Err(Error::Contract(format!(
            "soft loss: prediction shape {:?} differs from reference {}x{}",
            pred.shape(),
            m + 1,
            n + 1
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::Degenerate(format!("soft loss needs m, n >= 1 (m={m}, n={n})")));
    }
    let q = pred.value();
    let r = reference.matrix();
    let c = n + 1;
    let mut diag = SoftLossDiagnostics::default();
    let mut grad = vec![0.0; (m + 1) * c];

    let mut row_loss = 0.0;
    let mut row_grads = Vec::new();
    for i in 0..m {
        let rr = r.row(i);
        if rr.iter().all(|&v| v == 0.0) {
            diag.skipped_rows += 1;
            continue;
        }
        let (l, g) = kl_segment(rr, q.row(i), order);
        row_loss += l;
        row_grads.push((i, g));
    }
    let mut col_loss = 0.0;
    let mut col_grads = Vec::new();
    for j in 0..n {
        let rc: Vec<f64> = (0..=m).map(|i| r.at2(i, j)).collect();
        if rc.iter().all(|&v| v == 0.0) {
            diag.skipped_cols += 1;
            continue;
        }
        let qc: Vec<f64> = (0..=m).map(|i| q.at2(i, j)).collect();
        let (l, g) = kl_segment(&rc, &qc, order);
        col_loss += l;
        col_grads.push((j, g));
    }
    let nr = row_grads.len();
    let nc = col_grads.len();
    let mut loss = 0.0;
    if nr > 0 {
        loss += row_loss / nr as f64;
        for (i, g) in &row_grads {
            for (k, v) in g.iter().enumerate() {
                grad[i * c + k] += v / nr as f64;
            }
        }
    }
    if nc > 0 {
        loss += col_loss / nc as f64;
        for (j, g) in &col_grads {
            for (k, v) in g.iter().enumerate() {
                grad[k * c + j] += v / nc as f64;
            }
        }
    }
    if diag.skipped_rows + diag.skipped_cols > 0 {
        log::debug!(
            "soft loss skipped {} all-zero reference rows and {} columns",
            diag.skipped_rows,
            diag.skipped_cols
        );
    }
    let out = pred.graph().op(
        Tensor::scalar(loss),
        &[pred],
        Box::new(move |g, p, _, _| {
            let go = g.item();
            vec![Some(Tensor::new(p[0].shape(), grad.iter().map(|v| v * go).collect()))]
        }),
    );
    Ok((out, diag))
}

/// Negative log-likelihood of the ground-truth matches and dustbin labels.
pub fn hard_cross_loss<'g>(pred: Var<'g>, gt: &MatchGT) -> Result<Var<'g>> {
    let shape = pred.shape();
    if shape.len() != 2 || shape[0] < 1 || shape[1] < 1 {
        return Err(Error::Contract(format!("hard loss: bad prediction shape {shape:?}")));
    }
    let (m, n) = (shape[0] - 1, shape[1] - 1);
    gt.check_invariants(m, n)?;
    let c = n + 1;
    let q = pred.value();
    let mut loss = 0.0;
    let mut grad = vec![0.0; (m + 1) * c];
    let mut term = |cells: Vec<usize>| {
        if cells.is_empty() {
            return;
        }
        let k = cells.len() as f64;
        for idx in cells {
            let v = q.data()[idx] + LOG_EPS;
            loss -= v.ln() / k;
            grad[idx] -= 1.0 / (v * k);
        }
    };
    term(gt.pairs.iter().map(|&(i, j)| i * c + j).collect());
    term(gt.unmatched_l.iter().map(|&i| i * c + n).collect());
    term(gt.unmatched_r.iter().map(|&j| m * c + j).collect());
    Ok(pred.graph().op(
        Tensor::scalar(loss),
        &[pred],
        Box::new(move |g, p, _, _| {
            let go = g.item();
            vec![Some(Tensor::new(p[0].shape(), grad.iter().map(|v| v * go).collect()))]
        }),
    ))
}

/// Smooth-L1 (beta 1) averaged over `mask`; 0 when the mask is empty.
pub fn smooth_l1_masked<'g>(pred: Var<'g>, target: &Grid<f64>, mask: &Grid<bool>) -> Result<Var<'g>> {
    let (h, w) = target.dims();
    check_map_shape("disparity loss", &pred.shape(), h, w)?;
    if !mask.same_dims(target) {
        return Err(Error::Contract("disparity loss: mask and target sizes differ".into()));
    }
    let x = pred.value();
    let count = mask.count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; h * w];
    if count > 0 {
        let k = count as f64;
        for (idx, ((&p, &t), &m)) in x.data().iter().zip(target.data()).zip(mask.data()).enumerate() {
            if !m {
                continue;
            }
            let d = p - t;
            loss += if d.abs() < 1.0 { 0.5 * d * d } else { d.abs() - 0.5 } / k;
            grad[idx] = d.clamp(-1.0, 1.0) / k;
        }
    }
    Ok(pred.graph().op(
        Tensor::scalar(loss),
        &[pred],
        Box::new(move |g, p, _, _| {
            let go = g.item();
            vec![Some(Tensor::new(p[0].shape(), grad.iter().map(|v| v * go).collect()))]
        }),
    ))
}

/// Main smooth-L1 term plus the weighted auxiliary term.
pub fn disparity_loss<'g>(pred: &DisparityPrediction<'g>, gt: &Grid<f64>, valid: &Grid<bool>) -> Result<Var<'g>> {
    let main = smooth_l1_masked(pred.disp, gt, valid)?;
    let aux = smooth_l1_masked(pred.disp_aux, gt, valid)?;
    Ok(main.add(aux.scale(AUX_WEIGHT)))
}
