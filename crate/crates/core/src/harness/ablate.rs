use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::config::RunConfig;
use super::metrics::{evaluate, Summary};
use super::train::{train_on, TrainData};

/// Predefined ablation grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationGrid {
    /// Baseline, then intra, soft and hard terms added one at a time.
    Components,
    /// Intra decoder depth and cross decoder depth.
    Depth,
}

impl FromStr for AblationGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "components" => Ok(Self::Components),
            "depth" => Ok(Self::Depth),
            _ => Err(Error::Config(format!("unknown grid `{s}` (expected components or depth)"))),
        }
    }
}

/// One configuration of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Arm {
    pub name: String,
    pub config: RunConfig,
}

fn with_losses(base: &RunConfig, intra: bool, soft: bool, hard: bool) -> RunConfig {
    let mut c = base.clone();
    c.losses.intra = intra;
    c.losses.cross_soft = soft;
    c.losses.cross_hard = hard;
    c
}

pub fn arms(base: &RunConfig, grid: AblationGrid) -> Vec<Arm> {
    let arm = |name: &str, config: RunConfig| Arm {
        name: name.to_string(),
        config,
    };
    match grid {
        AblationGrid::Components => vec![
            arm("baseline", with_losses(base, false, false, false)),
            arm("+intra", with_losses(base, true, false, false)),
            arm("+intra+soft", with_losses(base, true, true, false)),
            arm("full", with_losses(base, true, true, true)),
        ],
        AblationGrid::Depth => {
            let mut v = Vec::new();
            for b in [1, 2, 4] {
                let mut c = with_losses(base, true, false, false);
                c.decoders.intra_blocks = b;
                v.push(arm(&format!("intra-blocks-{b}"), c));
            }
            for l in [0, 4, 6] {
                let mut c = with_losses(base, true, true, true);
                c.decoders.intra_blocks = 2;
                c.decoders.cross_layers = l;
                v.push(arm(&format!("cross-layers-{l}"), c));
            }
            v
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmResult {
    pub name: String,
    pub per_seed: Vec<(u64, Summary)>,
    pub median: Summary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn median_summary(runs: &[(u64, Summary)]) -> Summary {
    let pick = |f: fn(&Summary) -> f64| median(&mut runs.iter().map(|(_, s)| f(s)).collect::<Vec<_>>());
    let first = runs[0].1;
    Summary {
        epe: pick(|s| s.epe),
        err_gt_3px: pick(|s| s.err_gt_3px),
        d1: pick(|s| s.d1),
        epe_occ: pick(|s| s.epe_occ),
        epe_noc: pick(|s| s.epe_noc),
        ..first
    }
}

/// Trains every arm with seeds `base.seed + k`, `k < seeds`, and evaluates
/// on the validation split. Data and teacher records are shared by all arms.
pub fn run_ablation(base: &RunConfig, grid: AblationGrid, seeds: usize, data: &mut TrainData) -> Result<AblationReport> {
    if seeds == 0 {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    if data.val.is_empty() {
        return Err(Error::Config("ablation needs a validation set".into()));
    }
    let arms = arms(base, grid);
    if arms.iter().any(|a| a.config.losses.intra || a.config.losses.cross_soft || a.config.losses.cross_hard) {
        data.ensure_teacher(base)?;
    }
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        let mut per_seed = Vec::with_capacity(seeds);
        for k in 0..seeds as u64 {
            let mut cfg = arm.config.clone();
            cfg.seed = base.seed.wrapping_add(k);
            if cfg.output.write_files {
                cfg.output.dir = base.output.dir.join(format!("{}-seed{}", arm.name, cfg.seed));
            }
            let report = train_on(&cfg, data)?;
            let m = evaluate(&report.checkpoint, &data.val)?;
            log::info!("{} seed {}: {}", arm.name, cfg.seed, m.overall);
            per_seed.push((cfg.seed, m.overall));
        }
        out.push(ArmResult {
            name: arm.name,
            median: median_summary(&per_seed),
            per_seed,
        });
    }
    Ok(AblationReport { arms: out })
}

impl AblationReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,seed,epe,err_gt_3px,d1,epe_occ,epe_noc\n");
        for a in &self.arms {
            for (seed, m) in &a.per_seed {
                let _ = writeln!(s, "{},{seed},{},{},{},{},{}", a.name, m.epe, m.err_gt_3px, m.d1, m.epe_occ, m.epe_noc);
            }
            let m = &a.median;
            let _ = writeln!(s, "{},median,{},{},{},{},{}", a.name, m.epe, m.err_gt_3px, m.d1, m.epe_occ, m.epe_noc);
        }
        s
    }

    /// Median table in Markdown.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| arm | EPE | >3px (%) | D1 (%) | EPE occ | EPE noc |\n|---|---|---|---|---|---|\n");
        for a in &self.arms {
            let m = &a.median;
            let _ = writeln!(
                s,
                "| {} | {:.4} | {:.2} | {:.2} | {:.4} | {:.4} |",
                a.name,
                m.epe,
                100.0 * m.err_gt_3px,
                100.0 * m.d1,
                m.epe_occ,
                m.epe_noc
            );
        }
        s
    }
}
