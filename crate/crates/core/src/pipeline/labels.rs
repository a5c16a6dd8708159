use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MbwError, Result};
use crate::geometry::Landmarks2D;

/// Where a label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Manual,
    Flow,
    Detector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub points: Landmarks2D,
    pub source: LabelSource,
    pub denoised: bool,
    pub score: Option<f64>,
}

/// The evolving labeled set, keyed by `(frame, view)`.
///
/// Manual entries are write-once: later inserts for a manual key are
/// ignored, and manual entries survive [`LabelSet::retain_manual`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelSet {
    entries: BTreeMap<(usize, usize), LabelEntry>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_manual(&mut self, frame: usize, view: usize, points: Landmarks2D) {
        self.entries.insert(
            (frame, view),
            LabelEntry {
                points,
                source: LabelSource::Manual,
                denoised: false,
                score: None,
            },
        );
    }

    /// Adds or replaces a machine label. Returns `false` (and leaves the set
    /// unchanged) when the key holds a manual label.
    pub fn insert_pseudo(
        &mut self,
        frame: usize,
        view: usize,
        entry: LabelEntry,
    ) -> Result<bool> {
        if entry.source == LabelSource::Manual {
            return Err(MbwError::InvalidConfig(
                "use insert_manual for manual labels".into(),
            ));
        }
        if !entry.points.is_complete() {
            return Err(MbwError::IncompleteInput(format!(
                "pseudo-label ({frame}, {view}) has missing points"
            )));
        }
        if entry.score.is_some_and(|s| !(s >= 0.0)) {
            return Err(MbwError::InvalidConfig("label scores must be non-negative".into()));
        }
        if self.is_manual(frame, view) {
            return Ok(false);
        }
        self.entries.insert((frame, view), entry);
        Ok(true)
    }

    pub fn get(&self, frame: usize, view: usize) -> Option<&LabelEntry> {
        self.entries.get(&(frame, view))
    }

    pub fn contains(&self, frame: usize, view: usize) -> bool {
        self.entries.contains_key(&(frame, view))
    }

    pub fn is_manual(&self, frame: usize, view: usize) -> bool {
        self.get(frame, view)
            .is_some_and(|e| e.source == LabelSource::Manual)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in `(frame, view)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &LabelEntry)> {
        self.entries.iter()
    }

    pub fn count_by_source(&self, source: LabelSource) -> usize {
        self.entries.values().filter(|e| e.source == source).count()
    }

    /// Copy holding only the manual entries.
    pub fn manual_only(&self) -> LabelSet {
        LabelSet {
            entries: self
                .entries
                .iter()
                .filter(|(_, e)| e.source == LabelSource::Manual)
                .map(|(k, e)| (*k, e.clone()))
                .collect(),
        }
    }

    pub fn count_in_view(&self, view: usize) -> usize {
        self.entries.keys().filter(|(_, v)| *v == view).count()
    }

    /// Complete labels grouped per frame, frames ascending, views ascending.
    pub fn training_frames(&self) -> Vec<Vec<Landmarks2D>> {
        let mut frames: BTreeMap<usize, Vec<Landmarks2D>> = BTreeMap::new();
        for ((n, _), e) in &self.entries {
            if e.points.is_complete() {
                frames.entry(*n).or_default().push(e.points.clone());
            }
        }
        frames.into_values().collect()
    }
}
