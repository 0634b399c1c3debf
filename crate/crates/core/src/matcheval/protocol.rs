//! Genuine / imposter pair generation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::template::CaptureKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImposterRule {
    /// Every contactless impression against every contact impression of every other finger.
    FullCross,
    /// First contactless impression against the first contact impression of every other finger.
    FirstImpression,
}

/// One capture as seen by the protocol generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleInfo {
    pub subject_id: String,
    pub finger_position: String,
    pub impression_index: u32,
    pub capture_kind: CaptureKind,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerGroup {
    pub subject_id: String,
    pub finger_position: String,
    /// Sample ids ordered by impression index.
    pub contactless: Vec<String>,
    pub contact: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairLabel {
    Genuine,
    Imposter,
}

/// A probe (contactless) / gallery (contact) pair by finger and impression position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub probe_finger: usize,
    pub probe_impression: usize,
    pub gallery_finger: usize,
    pub gallery_impression: usize,
    pub label: PairLabel,
}

/// Pair list generated lazily from the finger groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub fingers: Vec<FingerGroup>,
    pub rule: ImposterRule,
    /// Fingers dropped for lacking one of the capture kinds.
    pub excluded: Vec<String>,
}

impl Protocol {
    pub fn genuine_count(&self) -> u64 {
        self.fingers
            .iter()
            .map(|f| f.contactless.len() as u64 * f.contact.len() as u64)
            .sum()
    }

    pub fn imposter_count(&self) -> u64 {
        let f = self.fingers.len() as u64;
        match self.rule {
            ImposterRule::FirstImpression => f * f.saturating_sub(1),
            ImposterRule::FullCross => {
                let total_contact: u64 = self.fingers.iter().map(|g| g.contact.len() as u64).sum();
                self.fingers
                    .iter()
                    .map(|g| g.contactless.len() as u64 * (total_contact - g.contact.len() as u64))
                    .sum()
            }
        }
    }

    pub fn probe_id(&self, p: &Pair) -> &str {
        &self.fingers[p.probe_finger].contactless[p.probe_impression]
    }

    pub fn gallery_id(&self, p: &Pair) -> &str {
        &self.fingers[p.gallery_finger].contact[p.gallery_impression]
    }

    /// Genuine pairs first (finger-major), then imposter pairs.
    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        let genuine = self.fingers.iter().enumerate().flat_map(|(fi, f)| {
            (0..f.contactless.len()).flat_map(move |a| {
                (0..f.contact.len()).map(move |b| Pair {
                    probe_finger: fi,
                    probe_impression: a,
                    gallery_finger: fi,
                    gallery_impression: b,
                    label: PairLabel::Genuine,
                })
            })
        });
        let n = self.fingers.len();
        let rule = self.rule;
        let imposter = self.fingers.iter().enumerate().flat_map(move |(fi, f)| {
            let probes = match rule {
                ImposterRule::FullCross => f.contactless.len(),
                ImposterRule::FirstImpression => 1,
            };
            (0..probes).flat_map(move |a| {
                (0..n).filter(move |&gj| gj != fi).flat_map(move |gj| {
                    let gallery = match rule {
                        ImposterRule::FullCross => self.fingers[gj].contact.len(),
                        ImposterRule::FirstImpression => 1,
                    };
                    (0..gallery).map(move |b| Pair {
                        probe_finger: fi,
                        probe_impression: a,
                        gallery_finger: gj,
                        gallery_impression: b,
                        label: PairLabel::Imposter,
                    })
                })
            })
        });
        genuine.chain(imposter)
    }
}

/// Groups samples by finger (first-appearance order) and builds the protocol.
pub fn gen_protocol(samples: &[SampleInfo], rule: ImposterRule) -> Result<Protocol> {
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut groups: Vec<(String, String, Vec<(u32, String)>, Vec<(u32, String)>)> = Vec::new();
    for s in samples {
        let key = (s.subject_id.clone(), s.finger_position.clone());
        let gi = *index.entry(key).or_insert_with(|| {
            groups.push((s.subject_id.clone(), s.finger_position.clone(), Vec::new(), Vec::new()));
            groups.len() - 1
        });
        let list = match s.capture_kind {
            CaptureKind::Contactless => &mut groups[gi].2,
            CaptureKind::Contact => &mut groups[gi].3,
        };
        if list.iter().any(|(i, _)| *i == s.impression_index) {
            return Err(Error::param(format!(
                "duplicate sample {}/{}/{:?}/{}",
                s.subject_id, s.finger_position, s.capture_kind, s.impression_index
            )));
        }
        list.push((s.impression_index, s.id.clone()));
    }
    let mut fingers = Vec::new();
    let mut excluded = Vec::new();
    for (subject, finger, mut cl, mut c) in groups {
        if cl.is_empty() || c.is_empty() {
            log::warn!("finger {subject}/{finger} lacks contact or contactless impressions; excluded");
            excluded.push(format!("{subject}/{finger}"));
            continue;
        }
        cl.sort_by_key(|(i, _)| *i);
        c.sort_by_key(|(i, _)| *i);
        fingers.push(FingerGroup {
            subject_id: subject,
            finger_position: finger,
            contactless: cl.into_iter().map(|(_, id)| id).collect(),
            contact: c.into_iter().map(|(_, id)| id).collect(),
        });
    }
    Ok(Protocol {
        fingers,
        rule,
        excluded,
    })
}
