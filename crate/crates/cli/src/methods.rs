//! Method names and the loss components each one wires together.

use imbassl::losses::{ConsistencyConfig, ConsistencyKind, SupervisedLoss};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Supervised,
    Uda,
    UdaSampling,
    UdaWeightedCe,
    UdaFocal,
    UdaScl,
    UdaAbcl,
    UdaWeightedCeScl,
    UdaWeightedCeAbcl,
}

/// Supervised loss, consistency loss (if any) and whether the labeled pool
/// is rebalanced before training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wiring {
    pub supervised: SupervisedKind,
    pub consistency: Option<ConsistencyKind>,
    pub resample_labeled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupervisedKind {
    CrossEntropy,
    WeightedCe,
    Focal,
}

const TABLE: &[(Method, &str, Wiring)] = {
    use ConsistencyKind::*;
    use SupervisedKind::*;
    const fn w(supervised: SupervisedKind, consistency: Option<ConsistencyKind>, resample_labeled: bool) -> Wiring {
        Wiring {
            supervised,
            consistency,
            resample_labeled,
        }
    }
    &[
        (Method::Supervised, "supervised", w(CrossEntropy, None, false)),
        (Method::Uda, "uda", w(CrossEntropy, Some(Cl), false)),
        (Method::UdaSampling, "uda-sampling", w(CrossEntropy, Some(Cl), true)),
        (Method::UdaWeightedCe, "uda-weightedce", w(WeightedCe, Some(Cl), false)),
        (Method::UdaFocal, "uda-focal", w(Focal, Some(Cl), false)),
        (Method::UdaScl, "uda-scl", w(CrossEntropy, Some(Scl), false)),
        (Method::UdaAbcl, "uda-abcl", w(CrossEntropy, Some(Abcl), false)),
        (Method::UdaWeightedCeScl, "uda-weightedce-scl", w(WeightedCe, Some(Scl), false)),
        (Method::UdaWeightedCeAbcl, "uda-weightedce-abcl", w(WeightedCe, Some(Abcl), false)),
    ]
};

impl Method {
    pub fn all() -> impl Iterator<Item = Method> {
        TABLE.iter().map(|(m, _, _)| *m)
    }

    pub fn names() -> Vec<&'static str> {
        TABLE.iter().map(|(_, n, _)| *n).collect()
    }

    pub fn from_name(name: &str) -> Option<Method> {
        TABLE.iter().find(|(_, n, _)| *n == name).map(|(m, _, _)| *m)
    }

    fn row(self) -> &'static (Method, &'static str, Wiring) {
        TABLE.iter().find(|(m, _, _)| *m == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        self.row().1
    }

    pub fn wiring(self) -> Wiring {
        self.row().2
    }

    pub fn uses_abcl(self) -> bool {
        self.wiring().consistency == Some(ConsistencyKind::Abcl)
    }

    pub fn supervised_loss(self, focal_gamma: f64) -> SupervisedLoss {
        match self.wiring().supervised {
            SupervisedKind::CrossEntropy => SupervisedLoss::CrossEntropy,
            SupervisedKind::WeightedCe => SupervisedLoss::WeightedCe,
            SupervisedKind::Focal => SupervisedLoss::Focal { gamma: focal_gamma },
        }
    }

    /// The method's consistency loss, taking the shared hyperparameters from
    /// `template`.
    pub fn consistency(self, template: ConsistencyConfig) -> Option<ConsistencyConfig> {
        self.wiring()
            .consistency
            .map(|kind| ConsistencyConfig { kind, ..template })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
