use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Var};
use crate::correspondence::{build_gt_matches, MatchGT};
use crate::decoders::{self, Assignment};
use crate::error::{Error, Result};
use crate::interest::InterestMap;
use crate::losses::{self, LossTerms, LossWeights};
use crate::nn::{Adam, ParamStore};
use crate::stereonet::{sample_descriptors, StereoNet, View};
use crate::synthgen::io::{read_dataset, sample_id};
use crate::synthgen::{generate_dataset, StereoSample};
use crate::teacher::{build_record, load_teacher_records, TeacherRecord};
use crate::tensor::Tensor;

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::metrics::{metrics_from_predictions, Summary};

/// Offset between the weight-init seed and the decoder-init seed, so that
/// the backbone starts identical whether or not decoders are present.
const DECODER_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;
const SHUFFLE_SEED_OFFSET: u64 = 0x5DEE_CE66;

pub const DETERMINISTIC_ENV: &str = "ICG_DETERMINISTIC";

/// True when `ICG_DETERMINISTIC=1`. Every kernel here is single threaded with
/// a fixed reduction order, so results are reproducible either way.
pub fn deterministic_requested() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1")
}

pub type Dataset = Vec<(String, StereoSample)>;

/// Training and validation samples plus teacher records for the training set.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub train: Dataset,
    pub val: Dataset,
    pub teacher: Option<Vec<TeacherRecord>>,
}

fn generated(cfg: &RunConfig, seed_offset: u64, count: usize) -> Result<Dataset> {
    let mut scene = cfg.scene.clone();
    scene.seed = scene.seed.wrapping_add(seed_offset);
    Ok(generate_dataset(&scene, count)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| (sample_id(i), s))
        .collect())
}

impl TrainData {
    /// Reads the configured directories or generates scenes in memory.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let train = match &cfg.data.train_dir {
            Some(dir) => read_dataset(dir)?,
            None => generated(cfg, 0, cfg.data.train_count)?,
        };
        let val = match &cfg.data.val_dir {
            Some(dir) => read_dataset(dir)?,
            None => generated(cfg, cfg.data.val_seed_offset, cfg.data.val_count)?,
        };
        if train.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut data = Self {
            train,
            val,
            teacher: None,
        };
        if let Some(path) = &cfg.data.teacher_file {
            let ids: Vec<String> = data.train.iter().map(|(id, _)| id.clone()).collect();
            data.teacher = Some(load_teacher_records(path, Some(&ids))?);
        }
        Ok(data)
    }

    /// Builds teacher records live when none were loaded.
    pub fn ensure_teacher(&mut self, cfg: &RunConfig) -> Result<()> {
        if self.teacher.is_none() {
            let recs = self
                .train
                .iter()
                .map(|(id, s)| build_record(id, s, &cfg.teacher))
                .collect::<Result<Vec<_>>>()?;
            self.teacher = Some(recs);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub terms: LossTerms,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepLog>,
    /// Validation summaries as `(step, summary)`.
    pub validation: Vec<(usize, Summary)>,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("step,L_disp,L_intra,L_cs,L_ch,total,lr\n");
        for r in &self.log {
            let t = &r.terms;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.step, t.disp, t.intra, t.cross_soft, t.cross_hard, r.total, r.lr
            );
        }
        s
    }
}

/// Which optional terms a run computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Active {
    intra: bool,
    soft: bool,
    hard: bool,
}

impl Active {
    fn from_weights(w: &LossWeights) -> Self {
        Self {
            intra: w.lambda_intra > 0.0,
            soft: w.lambda_cross_soft > 0.0,
            hard: w.lambda_cross_hard > 0.0,
        }
    }

    fn cross(&self) -> bool {
        self.soft || self.hard
    }

    fn any(&self) -> bool {
        self.intra || self.cross()
    }
}

/// Per-sample supervision derived from the teacher record.
struct Targets {
    interest_l: InterestMap,
    interest_r: InterestMap,
    reference: Option<Assignment>,
    hard: Option<MatchGT>,
}

fn targets(cfg: &RunConfig, act: Active, sample: &StereoSample, rec: &TeacherRecord) -> Result<Targets> {
    let (m, n) = (rec.points_l.len(), rec.points_r.len());
    let cross_ok = act.cross() && m > 0 && n > 0;
    let hard = if cross_ok && act.hard {
        Some(build_gt_matches(
            &rec.points_l,
            &rec.points_r,
            &sample.disparity,
            &sample.valid_mask,
            &sample.occ_mask,
            cfg.teacher.eps,
        )?)
    } else {
        None
    };
    Ok(Targets {
        interest_l: rec.interest_map(true),
        interest_r: rec.interest_map(false),
        reference: if cross_ok && act.soft { Some(rec.reference()?) } else { None },
        hard,
    })
}

/// Fresh weights for `cfg`. Decoder weights are drawn only for active terms.
pub fn init_params(cfg: &RunConfig) -> Result<ParamStore> {
    let net = StereoNet::new(cfg.backbone.clone())?;
    let mut params = net.init_params(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let act = Active::from_weights(&cfg.effective_weights());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(DECODER_SEED_OFFSET));
    let c = cfg.backbone.channels;
    if act.intra {
        decoders::init_intra(&mut params, &mut rng, c, cfg.decoders.intra_blocks);
    }
    if act.cross() {
        decoders::init_cross(&mut params, &mut rng, c, &cfg.decoders);
    }
    Ok(params)
}

/// Loss terms and gradients of one sample.
fn sample_step(
    cfg: &RunConfig,
    net: &StereoNet,
    w: &LossWeights,
    params: &ParamStore,
    sample: &StereoSample,
    tg: Option<&Targets>,
    points: Option<&TeacherRecord>,
) -> Result<(LossTerms, f64, BTreeMap<String, Tensor>)> {
    let g = Graph::new();
    let p = params.bind(&g);
    let (fp, pred) = net.forward(&p, &sample.left, &sample.right)?;
    let disp = losses::disparity_loss(&pred, &sample.disparity, &sample.valid_mask)?;
    let zero = g.constant(Tensor::scalar(0.0));
    let (mut intra, mut soft, mut hard): (Var<'_>, Var<'_>, Var<'_>) = (zero, zero, zero);
    let mut w = w.clone();
    if let (Some(tg), Some(rec)) = (tg, points) {
        if w.lambda_intra > 0.0 {
            let (ll, lr) = decoders::intra_decode(&p, &fp, cfg.decoders.intra_blocks);
            intra = losses::focal_intra_loss(ll, lr, &tg.interest_l, &tg.interest_r)?;
        }
        if tg.reference.is_some() || tg.hard.is_some() {
            let d_l = sample_descriptors(&fp, &rec.points_l, View::Left)?;
            let d_r = sample_descriptors(&fp, &rec.points_r, View::Right)?;
            let transport = decoders::cross_decode(
                &p,
                &cfg.decoders,
                (&rec.points_l, &rec.points_r),
                (&d_l, &d_r),
                sample.dims(),
            )?;
            if let Some(reference) = &tg.reference {
                let (l, diag) = losses::soft_cross_loss(transport, reference, cfg.losses.kl_order)?;
                if diag.skipped_rows + diag.skipped_cols > 0 {
                    log::debug!("soft loss skipped {} rows, {} cols", diag.skipped_rows, diag.skipped_cols);
                }
                soft = l;
            }
            if let Some(gt) = &tg.hard {
                hard = losses::hard_cross_loss(transport, gt)?;
            }
        }
    }
    // Terms that could not be formed for this sample contribute nothing.
    if tg.is_none_or(|t| t.reference.is_none()) {
        w.lambda_cross_soft = 0.0;
    }
    if tg.is_none_or(|t| t.hard.is_none()) {
        w.lambda_cross_hard = 0.0;
    }
    if tg.is_none() {
        w.lambda_intra = 0.0;
    }
    let total = losses::total_loss_var(disp, intra, soft, hard, &w);
    let terms = LossTerms {
        disp: disp.value().item(),
        intra: intra.value().item(),
        cross_soft: soft.value().item(),
        cross_hard: hard.value().item(),
    };
    let total_v = total.value().item();
    if !total_v.is_finite() {
        return Ok((terms, total_v, BTreeMap::new()));
    }
    let grads = p.collect_grads(&g.backward(total));
    Ok((terms, total_v, grads))
}

fn lr_at(cfg: &RunConfig, step: usize, total_steps: usize) -> f64 {
    let o = &cfg.optim;
    let frac = step as f64 / total_steps.max(1) as f64;
    let k = o.decay_at.iter().filter(|&&f| frac >= f).count();
    o.lr * o.decay_factor.powi(k as i32)
}

fn clip(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads
        .values()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in grads.values_mut() {
            *t = t.map(|v| v * s);
        }
    }
}

fn validate_params(net: &StereoNet, params: &ParamStore, val: &Dataset) -> Result<Summary> {
    let preds = val
        .iter()
        .map(|(_, s)| net.predict(params, &s.left, &s.right))
        .collect::<Result<Vec<_>>>()?;
    Ok(metrics_from_predictions(&preds, val)?.overall)
}

/// Loads data as configured and trains.
pub fn train(cfg: &RunConfig) -> Result<TrainReport> {
    let mut data = TrainData::load(cfg)?;
    if Active::from_weights(&cfg.effective_weights()).any() {
        data.ensure_teacher(cfg)?;
    }
    train_on(cfg, &data)
}

/// Trains on prepared data. Teacher records must be present when any
/// auxiliary term is active.
pub fn train_on(cfg: &RunConfig, data: &TrainData) -> Result<TrainReport> {
    cfg.validate()?;
    if deterministic_requested() {
        log::info!("{DETERMINISTIC_ENV}=1: deterministic kernels");
    }
    let net = StereoNet::new(cfg.backbone.clone())?;
    let w = cfg.effective_weights();
    let act = Active::from_weights(&w);
    let n = data.train.len();
    if n == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    let teacher = match (&data.teacher, act.any()) {
        (Some(t), true) => {
            let ids: Vec<String> = data.train.iter().map(|(id, _)| id.clone()).collect();
            crate::teacher::check_alignment(t, &ids)?;
            Some(t)
        }
        (None, true) => return Err(Error::Config("auxiliary losses need teacher records".into())),
        (_, false) => None,
    };
    let tgts = match teacher {
        Some(t) => Some(
            data.train
                .iter()
                .zip(t)
                .map(|((_, s), r)| targets(cfg, act, s, r))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let mut params = init_params(cfg)?;
    let mut adam = Adam::default();
    let bs = cfg.optim.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(bs);
    let total_steps = cfg.optim.epochs * steps_per_epoch;
    let out = &cfg.output;
    if out.write_files {
        std::fs::create_dir_all(&out.dir)?;
        std::fs::write(out.dir.join("config.toml"), cfg.to_toml())?;
    }

    let mut log_rows = Vec::with_capacity(total_steps);
    let mut validation = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0;
    for epoch in 0..cfg.optim.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed
                .wrapping_add(SHUFFLE_SEED_OFFSET)
                .wrapping_add(epoch as u64),
        );
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(bs).enumerate() {
            let lr = lr_at(cfg, step, total_steps);
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut terms = LossTerms::default();
            let mut total = 0.0;
            for &i in chunk {
                let tg = tgts.as_ref().map(|t| &t[i]);
                let rec = teacher.map(|t| &t[i]);
                let (t, tot, grads) = sample_step(cfg, &net, &w, &params, &data.train[i].1, tg, rec)?;
                if !tot.is_finite() {
                    return Err(Error::NonFinite {
                        step,
                        batch,
                        detail: format!(
                            "sample {}: L_disp={} L_intra={} L_cs={} L_ch={} total={tot}",
                            data.train[i].0, t.disp, t.intra, t.cross_soft, t.cross_hard
                        ),
                    });
                }
                terms.disp += t.disp;
                terms.intra += t.intra;
                terms.cross_soft += t.cross_soft;
                terms.cross_hard += t.cross_hard;
                total += tot;
                for (k, g) in grads {
                    match acc.get_mut(&k) {
                        Some(a) => a.add_assign(&g),
                        None => {
                            acc.insert(k, g);
                        }
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            for g in acc.values_mut() {
                *g = g.map(|v| v * inv);
            }
            clip(&mut acc, cfg.optim.grad_clip);
            adam.step(&mut params, &acc, lr);
            step += 1;
            let row = StepLog {
                step,
                terms: LossTerms {
                    disp: terms.disp * inv,
                    intra: terms.intra * inv,
                    cross_soft: terms.cross_soft * inv,
                    cross_hard: terms.cross_hard * inv,
                },
                total: total * inv,
                lr,
            };
            log::debug!("step {step} total {:.5} disp {:.5}", row.total, row.terms.disp);
            log_rows.push(row);
            if out.eval_every > 0 && step % out.eval_every == 0 && step < total_steps {
                checkpoint_and_validate(cfg, &net, &params, data, step, &mut validation)?;
            }
        }
        log::info!("epoch {} done, step {step}", epoch + 1);
    }
    checkpoint_and_validate(cfg, &net, &params, data, step, &mut validation)?;
    let report = TrainReport {
        checkpoint: Checkpoint {
            config: cfg.clone(),
            params,
        },
        log: log_rows,
        validation,
    };
    if out.write_files {
        std::fs::write(out.dir.join("train_log.csv"), report.log_csv())?;
    }
    Ok(report)
}

fn checkpoint_and_validate(
    cfg: &RunConfig,
    net: &StereoNet,
    params: &ParamStore,
    data: &TrainData,
    step: usize,
    validation: &mut Vec<(usize, Summary)>,
) -> Result<()> {
    if !data.val.is_empty() {
        let mut infer = params.clone();
        infer.remove_prefix(decoders::INTRA_PREFIX);
        infer.remove_prefix(decoders::CROSS_PREFIX);
        let s = validate_params(net, &infer, &data.val)?;
        log::info!("step {step}: {s}");
        validation.push((step, s));
    }
    if cfg.output.write_files {
        let ck = Checkpoint {
            config: cfg.clone(),
            params: params.clone(),
        };
        ck.save(&checkpoint_path(&cfg.output.dir, step))?;
        ck.save(&cfg.output.dir.join("last.ckpt"))?;
    }
    Ok(())
}

pub fn checkpoint_path(dir: &Path, step: usize) -> std::path::PathBuf {
    dir.join(format!("step_{step:06}.ckpt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::smoke();
        cfg.scene.height = 32;
        cfg.scene.width = 48;
        cfg.scene.d_max = 12.0;
        cfg.backbone.max_disparity = 16;
        cfg.backbone.channels = 8;
        cfg.backbone.groups = 2;
        cfg.decoders.heads = 2;
        cfg.decoders.cross_layers = 2;
        cfg.decoders.sinkhorn_iters = 20;
        cfg.data.train_count = 3;
        cfg.data.val_count = 1;
        cfg.optim.epochs = 1;
        cfg
    }

    #[test]
    fn backbone_init_does_not_depend_on_decoders() {
        let full = init_params(&tiny()).unwrap();
        let mut base_cfg = tiny();
        base_cfg.losses.intra = false;
        base_cfg.losses.cross_soft = false;
        base_cfg.losses.cross_hard = false;
        let base = init_params(&base_cfg).unwrap();
        assert!(base.iter().all(|(k, v)| full.get(k) == Some(v)));
        assert!(full.len() > base.len());
    }

    #[test]
    fn full_run_is_finite_and_reproducible() {
        let cfg = tiny();
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        assert_eq!(a.log.len(), 2);
        assert!(a.log.iter().all(|r| r.total.is_finite()));
        assert!(a.log[0].terms.intra > 0.0);
        assert_eq!(a.checkpoint, b.checkpoint);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn step_decay_schedule() {
        let cfg = RunConfig::default();
        assert_eq!(lr_at(&cfg, 0, 100), 1e-3);
        assert_eq!(lr_at(&cfg, 50, 100), 5e-4);
        assert_eq!(lr_at(&cfg, 95, 100), 1.25e-4);
    }
}
