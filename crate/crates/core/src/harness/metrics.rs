use std::fmt;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::stereonet::StereoNet;
use crate::synthgen::StereoSample;

use super::checkpoint::Checkpoint;

/// Pixel sums for one or more disparity maps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSums {
    pub abs_err: f64,
    pub n_valid: usize,
    pub n_gt_3px: usize,
    pub n_d1: usize,
    pub abs_err_occ: f64,
    pub n_occ: usize,
    pub abs_err_noc: f64,
    pub n_noc: usize,
}

impl ErrorSums {
    pub fn accumulate(&mut self, pred: &Grid<f64>, gt: &Grid<f64>, valid: &Grid<bool>, occ: &Grid<bool>) -> Result<()> {
        if !(pred.same_dims(gt) && gt.same_dims(valid) && gt.same_dims(occ)) {
            return Err(Error::Contract(format!(
                "metric inputs differ in size: pred {:?}, gt {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        for i in 0..gt.data().len() {
            if !valid.data()[i] {
                continue;
            }
            let g = gt.data()[i];
            let e = (pred.data()[i] - g).abs();
            self.abs_err += e;
            self.n_valid += 1;
            if e > 3.0 {
                self.n_gt_3px += 1;
                if e > 0.05 * g.abs() {
                    self.n_d1 += 1;
                }
            }
            if occ.data()[i] {
                self.abs_err_occ += e;
                self.n_occ += 1;
            } else {
                self.abs_err_noc += e;
                self.n_noc += 1;
            }
        }
        Ok(())
    }

    pub fn add(&mut self, o: &ErrorSums) {
        self.abs_err += o.abs_err;
        self.n_valid += o.n_valid;
        self.n_gt_3px += o.n_gt_3px;
        self.n_d1 += o.n_d1;
        self.abs_err_occ += o.abs_err_occ;
        self.n_occ += o.n_occ;
        self.abs_err_noc += o.abs_err_noc;
        self.n_noc += o.n_noc;
    }

    pub fn summary(&self) -> Summary {
        let ratio = |a: f64, n: usize| if n == 0 { 0.0 } else { a / n as f64 };
        Summary {
            epe: ratio(self.abs_err, self.n_valid),
            err_gt_3px: ratio(self.n_gt_3px as f64, self.n_valid),
            d1: ratio(self.n_d1 as f64, self.n_valid),
            epe_occ: ratio(self.abs_err_occ, self.n_occ),
            epe_noc: ratio(self.abs_err_noc, self.n_noc),
            n_valid: self.n_valid,
            n_occ: self.n_occ,
            n_noc: self.n_noc,
        }
    }
}

/// Pixel-weighted error statistics. Fractions are in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub epe: f64,
    pub err_gt_3px: f64,
    pub d1: f64,
    pub epe_occ: f64,
    pub epe_noc: f64,
    pub n_valid: usize,
    pub n_occ: usize,
    pub n_noc: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub id: String,
    pub summary: Summary,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub overall: Summary,
    pub per_sample: Vec<SampleMetrics>,
}

impl Metrics {
    pub fn per_sample_csv(&self) -> String {
        let mut s = String::from("id,epe,err_gt_3px,d1,epe_occ,epe_noc,n_valid,n_occ,n_noc\n");
        for r in &self.per_sample {
            let m = &r.summary;
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.id, m.epe, m.err_gt_3px, m.d1, m.epe_occ, m.epe_noc, m.n_valid, m.n_occ, m.n_noc
            ));
        }
        s
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "EPE {:.4} px | >3px {:.2}% | D1 {:.2}% | EPE occ {:.4} ({} px) | EPE noc {:.4} ({} px) | {} valid px",
            self.epe,
            100.0 * self.err_gt_3px,
            100.0 * self.d1,
            self.epe_occ,
            self.n_occ,
            self.epe_noc,
            self.n_noc,
            self.n_valid
        )
    }
}

/// Metrics for precomputed predictions aligned with `dataset`.
pub fn metrics_from_predictions(preds: &[Grid<f64>], dataset: &[(String, StereoSample)]) -> Result<Metrics> {
    if preds.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} samples",
            preds.len(),
            dataset.len()
        )));
    }
    let mut total = ErrorSums::default();
    let mut per_sample = Vec::with_capacity(dataset.len());
    for (pred, (id, s)) in preds.iter().zip(dataset) {
        let mut sums = ErrorSums::default();
        sums.accumulate(pred, &s.disparity, &s.valid_mask, &s.occ_mask)?;
        total.add(&sums);
        per_sample.push(SampleMetrics {
            id: id.clone(),
            summary: sums.summary(),
        });
    }
    Ok(Metrics {
        overall: total.summary(),
        per_sample,
    })
}

/// Runs the stereo network of `ckpt` over `dataset`. Only inference weights
/// are read; decoder tensors are never bound.
pub fn evaluate(ckpt: &Checkpoint, dataset: &[(String, StereoSample)]) -> Result<Metrics> {
    let net = StereoNet::new(ckpt.config.backbone.clone())?;
    let params = ckpt.inference_params();
    let preds = dataset
        .iter()
        .map(|(_, s)| net.predict(&params, &s.left, &s.right))
        .collect::<Result<Vec<_>>>()?;
    metrics_from_predictions(&preds, dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prediction_has_zero_error() {
        let gt = Grid::filled(4, 4, 7.0);
        let mut s = ErrorSums::default();
        s.accumulate(&gt, &gt, &Grid::filled(4, 4, true), &Grid::filled(4, 4, false))
            .unwrap();
        let m = s.summary();
        assert_eq!((m.epe, m.err_gt_3px, m.d1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn four_pixels_at_one_hundred_is_not_d1() {
        let gt = Grid::filled(3, 3, 100.0);
        let pred = Grid::filled(3, 3, 104.0);
        let mut s = ErrorSums::default();
        s.accumulate(&pred, &gt, &Grid::filled(3, 3, true), &Grid::filled(3, 3, false))
            .unwrap();
        let m = s.summary();
        assert_eq!(m.err_gt_3px, 1.0);
        assert_eq!(m.d1, 0.0);
        assert_eq!(m.epe, 4.0);
    }
}
