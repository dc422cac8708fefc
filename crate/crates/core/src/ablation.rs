//! Ablation switches shared by the trainers, inference, and the CLI.
//!
//! Each switch removes exactly one ingredient of the full system so its
//! contribution can be measured in isolation. They combine freely; an empty
//! set is the reference configuration. The canonical spelling of each switch
//! (`wo_sem`, `wo_sent`, ...) is what the CLI accepts and what checkpoint
//! headers record, so the names here must stay stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every switch this build understands, sorted.
pub const ABLATION_NAMES: [&str; 6] =
    ["wo_gcn", "wo_glo", "wo_knn", "wo_sem", "wo_sent", "wo_sn"];

/// A set of active ablation switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSet {
    /// Zero the semantic half of the sentence embedding fed to the sampler.
    pub wo_sem: bool,
    /// Zero the sentiment half of the sentence embedding fed to the sampler.
    pub wo_sent: bool,
    /// Drop the sampling network; inference falls back to a nearest-neighbor
    /// latent heuristic over the training bank.
    pub wo_sn: bool,
    /// Skip two-stage latent optimization; decoder and sampler are trained
    /// end-to-end on the reconstruction loss instead.
    pub wo_glo: bool,
    /// Replace the graph-convolutional decoder with a fully connected
    /// baseline of matching input/output sizes.
    pub wo_gcn: bool,
    /// Build the face graph from the base chains alone, without k-NN
    /// augmentation.
    pub wo_knn: bool,
}

impl AblationSet {
    /// Parse a list of switch names. Unknown names are rejected; repeating a
    /// name is allowed and idempotent.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut set = AblationSet::default();
        for name in names {
            set.enable(name.as_ref())?;
        }
        Ok(set)
    }

    /// Turn one switch on by name.
    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "wo_sem" => self.wo_sem = true,
            "wo_sent" => self.wo_sent = true,
            "wo_sn" => self.wo_sn = true,
            "wo_glo" => self.wo_glo = true,
            "wo_gcn" => self.wo_gcn = true,
            "wo_knn" => self.wo_knn = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation '{other}' (expected one of {})",
                    ABLATION_NAMES.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Active switch names, sorted — the canonical form recorded in
    /// checkpoint headers.
    pub fn to_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in ABLATION_NAMES {
            if self.is_enabled(name) {
                out.push(name.to_string());
            }
        }
        out
    }

    pub fn is_enabled(&self, name: &str) -> bool {
        match name {
            "wo_sem" => self.wo_sem,
            "wo_sent" => self.wo_sent,
            "wo_sn" => self.wo_sn,
            "wo_glo" => self.wo_glo,
            "wo_gcn" => self.wo_gcn,
            "wo_knn" => self.wo_knn,
            _ => false,
        }
    }

    /// True when no switch is active.
    pub fn is_reference(&self) -> bool {
        *self == AblationSet::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let set = AblationSet::from_names(&["wo_knn", "wo_sem", "wo_knn"]).unwrap();
        assert!(set.wo_knn && set.wo_sem);
        assert!(!set.wo_gcn && !set.wo_glo && !set.wo_sent && !set.wo_sn);
        assert_eq!(set.to_names(), vec!["wo_knn", "wo_sem"]);
        let round = AblationSet::from_names(&set.to_names()).unwrap();
        assert_eq!(round, set);
    }

    #[test]
    fn unknown_names_are_rejected() {
        let err = AblationSet::from_names(&["wo_everything"]).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn empty_set_is_the_reference_configuration() {
        let set = AblationSet::from_names::<&str>(&[]).unwrap();
        assert!(set.is_reference());
        assert!(set.to_names().is_empty());
    }
}
