use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{PromptSegment, SegmentKind, SocialPrompt};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub kind: SegmentKind,
    pub candidates: Vec<Candidate>,
}

/// One candidate pool per prompt segment. Serialized as the pool file
/// `{"segments": [{"kind", "candidates": [{"id", "text"}]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCandidates {
    #[serde(rename = "segments")]
    pub pools: Vec<CandidatePool>,
}

impl SegmentCandidates {
    pub fn new(pools: Vec<CandidatePool>) -> Result<Self> {
        let c = Self { pools };
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pools.is_empty() {
            return Err(Error::Precondition("no candidate pools".into()));
        }
        for pool in &self.pools {
            if pool.candidates.is_empty() {
                return Err(Error::Precondition(format!("{} pool is empty", pool.kind)));
            }
            for (i, c) in pool.candidates.iter().enumerate() {
                if pool.candidates[..i].iter().any(|o| o.id == c.id) {
                    return Err(Error::Precondition(format!(
                        "duplicate candidate id {:?} in {} pool",
                        c.id, pool.kind
                    )));
                }
                if c.text.trim().is_empty() {
                    return Err(Error::Precondition(format!(
                        "candidate {:?} in {} pool is empty",
                        c.id, pool.kind
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pools.iter().map(|p| p.candidates.len()).collect()
    }

    /// Segment texts selected by `sel`, in pool order.
    pub fn texts(&self, sel: &Selection) -> Vec<&str> {
        self.pools
            .iter()
            .zip(&sel.indices)
            .map(|(p, &i)| p.candidates[i].text.as_str())
            .collect()
    }

    /// Materializes a selection as a prompt. Requires the four pools in
    /// System, Expectation, Context, Guidance order.
    pub fn prompt_for(&self, sel: &Selection) -> Result<SocialPrompt> {
        sel.check(&self.sizes())?;
        let kinds: Vec<SegmentKind> = self.pools.iter().map(|p| p.kind).collect();
        if kinds != SegmentKind::ALL {
            return Err(Error::InvalidPrompt(format!(
                "pools are {kinds:?}, expected system, expectation, context, guidance"
            )));
        }
        let seg = |m: usize| {
            let c = &self.pools[m].candidates[sel.indices[m]];
            PromptSegment::new(self.pools[m].kind, c.id.clone(), c.text.clone())
        };
        SocialPrompt::from_segments([seg(0)?, seg(1)?, seg(2)?, seg(3)?])
    }

    /// `kind -> candidate id` for reporting.
    pub fn describe(&self, sel: &Selection) -> Vec<(SegmentKind, String)> {
        self.pools
            .iter()
            .zip(&sel.indices)
            .map(|(p, &i)| (p.kind, p.candidates[i].id.clone()))
            .collect()
    }

    /// Index of the candidate with `id` in pool `m`.
    pub fn position(&self, m: usize, id: &str) -> Option<usize> {
        self.pools.get(m)?.candidates.iter().position(|c| c.id == id)
    }
}

/// One index per segment into its candidate pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Selection {
    pub indices: Vec<usize>,
}

impl Selection {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    /// All-zeros selection for `m` segments.
    pub fn first(m: usize) -> Self {
        Self { indices: vec![0; m] }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with(&self, segment: usize, candidate: usize) -> Self {
        let mut next = self.clone();
        next.indices[segment] = candidate;
        next
    }

    pub fn check(&self, sizes: &[usize]) -> Result<()> {
        if self.indices.len() != sizes.len() {
            return Err(Error::Precondition(format!(
                "selection has {} indices for {} pools",
                self.indices.len(),
                sizes.len()
            )));
        }
        for (m, (&i, &n)) in self.indices.iter().zip(sizes).enumerate() {
            if i >= n {
                return Err(Error::Precondition(format!(
                    "index {i} out of range for pool {m} of size {n}"
                )));
            }
        }
        Ok(())
    }
}
