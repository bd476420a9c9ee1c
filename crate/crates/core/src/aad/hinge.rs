use crate::error::{Error, Result};
use crate::linear::{score, SparseNodeVector, WeightVector};

/// Analyst answer for one queried instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Anomaly,
    Nominal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Anomaly => "anomaly",
            Label::Nominal => "nominal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "anomaly" => Some(Label::Anomaly),
            "nominal" => Some(Label::Nominal),
            _ => None,
        }
    }

    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }
}

/// Hinge loss of a single score against threshold `q`: anomalies are
/// penalized for scoring below `q`, nominals for scoring at or above it.
#[inline]
pub(crate) fn hinge(q: f64, s: f64, label: Label) -> f64 {
    match label {
        Label::Anomaly if s < q => q - s,
        Label::Nominal if s >= q => s - q,
        _ => 0.0,
    }
}

/// `ℓ(q, w; (z, y))`.
pub fn hinge_loss(q: f64, w: &WeightVector, z: &SparseNodeVector, y: Label) -> Result<f64> {
    if !q.is_finite() {
        return Err(Error::InvalidParameter("threshold must be finite"));
    }
    Ok(hinge(q, score(z, w)?, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn four_cases() {
        assert_eq!(hinge(1.0, 1.5, Label::Anomaly), 0.0);
        assert!((hinge(1.0, 0.2, Label::Anomaly) - 0.8).abs() < 1e-15);
        assert_eq!(hinge(0.0, 0.7, Label::Nominal), 0.7);
        assert_eq!(hinge(1.0, 0.2, Label::Nominal), 0.0);
    }

    #[test]
    fn continuous_at_threshold() {
        assert_eq!(hinge(0.3, 0.3, Label::Anomaly), 0.0);
        assert_eq!(hinge(0.3, 0.3, Label::Nominal), 0.0);
    }

    #[test]
    fn through_vectors() {
        let w = WeightVector::new(vec![0.5, 1.0]).unwrap();
        let z = SparseNodeVector::new(vec![(1, 0.2)], 2).unwrap();
        assert!((hinge_loss(1.0, &w, &z, Label::Anomaly).unwrap() - 0.8).abs() < 1e-15);
        assert!(hinge_loss(f64::NAN, &w, &z, Label::Anomaly).is_err());
        let short = SparseNodeVector::empty(3);
        assert!(hinge_loss(1.0, &w, &short, Label::Anomaly).is_err());
    }

    #[test]
    fn labels_parse() {
        assert_eq!(Label::parse("anomaly"), Some(Label::Anomaly));
        assert_eq!(Label::parse("Anomaly"), None);
        assert_eq!(Label::parse(Label::Nominal.as_str()), Some(Label::Nominal));
    }
}
