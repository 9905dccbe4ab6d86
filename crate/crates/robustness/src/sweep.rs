use std::fmt::Write as _;

use integscan_imaging::{Image, Mask};
use integscan_metrics::{confusion_counts, prf_iou, ssim, ConfusionCounts};
use serde::{Deserialize, Serialize};

use crate::attack::{perturb, perturb_mask, Attack};
use crate::error::{Error, Result};

/// Largest tolerated fraction of unreadable inputs.
pub const SKIP_LIMIT: f64 = 0.10;

#[derive(Clone, Debug)]
pub struct SweepSample {
    pub id: String,
    pub image: Image,
    pub gt: Mask,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub id: String,
    pub reason: String,
}

pub fn exceeds_skip_limit(skipped: usize, total: usize) -> bool {
    total > 0 && skipped as f64 > SKIP_LIMIT * total as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub attack: String,
    pub severity: u8,
    /// Pooled pixel F1 against the (attack-adjusted) ground truth.
    pub f1: f64,
    /// Mean SSIM between each unperturbed image and its perturbed version.
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<CurveRow>,
    pub skipped: Vec<Skip>,
}

impl SweepTable {
    pub const HEADER: &'static str = "attack,severity,f1,ssim";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", r.attack, r.severity, r.f1, r.ssim).expect("writing to a String");
        }
        s
    }

    pub fn row(&self, attack: &str, severity: u8) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.attack == attack && r.severity == severity)
    }
}

fn noise_seed(seed: u64, index: usize, attack: &Attack) -> u64 {
    seed ^ ((index as u64) << 16) ^ ((attack.kind as u64) << 8) ^ attack.severity as u64
}

/// Evaluate `predict` on every sample unperturbed (row `none,0`) and under each
/// attack in order. `predict` receives the sample index and the (possibly
/// perturbed) image and returns row-major per-pixel probabilities.
pub fn robustness_sweep<P>(samples: &[SweepSample], attacks: &[Attack], threshold: f64, seed: u64, mut predict: P) -> Result<SweepTable>
where
    P: FnMut(usize, &Image) -> std::result::Result<Vec<f64>, String>,
{
    if samples.is_empty() {
        return Err(Error::InvalidArgument("robustness sweep needs at least one image".into()));
    }
    let mut score = |index: usize, image: &Image, gt: &Mask| -> Result<ConfusionCounts> {
        let probs = predict(index, image).map_err(|message| Error::Predict { index, message })?;
        let pred = Mask::threshold(gt.height(), gt.width(), &probs, threshold)?;
        Ok(confusion_counts(&pred, gt)?)
    };

    let mut base = ConfusionCounts::default();
    for (i, s) in samples.iter().enumerate() {
        base.merge(&score(i, &s.image, &s.gt)?);
    }
    let mut rows = vec![CurveRow { attack: "none".into(), severity: 0, f1: prf_iou(&base).f1, ssim: 1.0 }];

    for attack in attacks {
        let mut counts = ConfusionCounts::default();
        let mut ssim_sum = 0.0;
        for (i, s) in samples.iter().enumerate() {
            let img = perturb(&s.image, attack, noise_seed(seed, i, attack))?;
            ssim_sum += ssim(&s.image, &img)?;
            counts.merge(&score(i, &img, &perturb_mask(&s.gt, attack)?)?);
        }
        rows.push(CurveRow {
            attack: attack.kind.to_string(),
            severity: attack.severity,
            f1: prf_iou(&counts).f1,
            ssim: ssim_sum / samples.len() as f64,
        });
    }
    Ok(SweepTable { rows, skipped: Vec::new() })
}
