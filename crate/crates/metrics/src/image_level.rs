use serde::{Deserialize, Serialize};

use crate::confusion::{mcc, ConfusionCounts};
use crate::error::{Error, Result};

/// Default fraction of predicted-positive pixels above which an image is called forged.
pub const DEFAULT_TAU: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageLabel {
    Pristine,
    Forged,
}

/// True when at least a `tau` fraction of pixels reach `threshold` (ties count as positive).
pub fn predicted_forged(probabilities: &[f64], threshold: f64, tau: f64) -> bool {
    if probabilities.is_empty() {
        return false;
    }
    let positive = probabilities.iter().filter(|&&p| p >= threshold).count();
    positive as f64 / probabilities.len() as f64 >= tau
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

pub fn image_confusion(predictions: &[&[f64]], labels: &[ImageLabel], threshold: f64, tau: f64) -> Result<ConfusionCounts> {
    check_tau(tau)?;
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no images to score".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    let mut c = ConfusionCounts::default();
    for (p, l) in predictions.iter().zip(labels) {
        c.record(predicted_forged(p, threshold, tau), *l == ImageLabel::Forged);
    }
    Ok(c)
}

/// Image-level MCC over per-pixel probability maps.
pub fn mcc_image_level(predictions: &[&[f64]], labels: &[ImageLabel], threshold: f64, tau: f64) -> Result<f64> {
    Ok(mcc(&image_confusion(predictions, labels, threshold, tau)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_all_positive() {
        let forged = vec![0.0; 100].into_iter().chain(vec![1.0; 5]).collect::<Vec<_>>();
        let clean = vec![0.0; 105];
        let preds: Vec<&[f64]> = vec![&forged, &clean, &forged, &clean];
        let labels = [ImageLabel::Forged, ImageLabel::Pristine, ImageLabel::Forged, ImageLabel::Pristine];
        assert_eq!(mcc_image_level(&preds, &labels, 0.5, DEFAULT_TAU).unwrap(), 1.0);

        let all: Vec<&[f64]> = vec![&forged; 4];
        assert_eq!(mcc_image_level(&all, &labels, 0.5, DEFAULT_TAU).unwrap(), 0.0);
    }

    #[test]
    fn tie_counts_as_positive() {
        let half = vec![0.5; 10];
        assert!(predicted_forged(&half, 0.5, 0.5));
        assert!(!predicted_forged(&half, 0.5000001, 0.5));
    }

    #[test]
    fn empty_and_bad_tau() {
        assert!(mcc_image_level(&[], &[], 0.5, DEFAULT_TAU).is_err());
        let p = vec![0.0; 4];
        assert!(mcc_image_level(&[&p], &[ImageLabel::Forged], 0.5, 0.0).is_err());
    }
}
