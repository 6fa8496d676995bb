//! Loss functions over selections.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::candidates::{SegmentCandidates, Selection};
use crate::error::{Error, Result};
use crate::oracles::{target_nll, GradientExample, GradientRequest, LossOracle};
use crate::prompt::{assemble, target_text};

/// Loss added for an example whose assembled prompt exceeds the context
/// limit.
pub const OVERFLOW_PENALTY: f64 = 10.0;

/// A training example: story, question and gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainExample {
    pub story: String,
    pub query: String,
    pub gold_label: String,
}

impl TrainExample {
    /// "The final answer is <gold_label>"; always derived, never stored.
    pub fn target_text(&self) -> String {
        target_text(&self.gold_label)
    }
}

/// Per-example loss of a selection.
pub trait Objective: Sync {
    fn num_examples(&self) -> usize;

    fn pool_sizes(&self) -> Vec<usize>;

    fn example_loss(&self, sel: &Selection, example: usize) -> Result<f64>;

    /// Text form of the problem for remote gradient services.
    fn gradient_request(&self, _sel: &Selection, _batch: &[usize]) -> Option<GradientRequest> {
        None
    }
}

/// Mean example loss over `batch`, summed in ascending example order so the
/// value does not depend on sampling order.
pub fn batch_loss(objective: &dyn Objective, sel: &Selection, batch: &[usize]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut ids = batch.to_vec();
    ids.sort_unstable();
    let mut sum = 0.0;
    for z in &ids {
        sum += objective.example_loss(sel, *z)?;
    }
    Ok(sum / ids.len() as f64)
}

/// Target NLL of the assembled prompt for each training example.
pub struct PromptObjective {
    pub pools: SegmentCandidates,
    pub examples: Vec<TrainExample>,
    pub oracle: LossOracle,
    pub context_limit: usize,
    overflows: AtomicUsize,
}

impl PromptObjective {
    pub fn new(
        pools: SegmentCandidates,
        examples: Vec<TrainExample>,
        oracle: LossOracle,
        context_limit: usize,
    ) -> Result<Self> {
        pools.validate()?;
        if examples.is_empty() {
            return Err(Error::Precondition("no training examples".into()));
        }
        pools.prompt_for(&Selection::first(pools.pools.len()))?;
        Ok(Self {
            pools,
            examples,
            oracle,
            context_limit,
            overflows: AtomicUsize::new(0),
        })
    }

    /// Number of example evaluations that hit the overflow penalty so far.
    pub fn overflow_count(&self) -> usize {
        self.overflows.load(Ordering::Relaxed)
    }
}

impl Objective for PromptObjective {
    fn num_examples(&self) -> usize {
        self.examples.len()
    }

    fn pool_sizes(&self) -> Vec<usize> {
        self.pools.sizes()
    }

    fn example_loss(&self, sel: &Selection, example: usize) -> Result<f64> {
        let ex = &self.examples[example];
        let prompt = self.pools.prompt_for(sel)?;
        let text = match assemble(&prompt, &ex.story, &ex.query, self.context_limit) {
            Ok(t) => t,
            Err(Error::ContextOverflow { estimated, limit, .. }) => {
                log::warn!("example {example} overflows context ({estimated} > {limit}); penalized");
                self.overflows.fetch_add(1, Ordering::Relaxed);
                return Ok(OVERFLOW_PENALTY);
            }
            Err(e) => return Err(e),
        };
        Ok(target_nll(&self.oracle, &text, &ex.target_text())?.nll)
    }

    fn gradient_request(&self, sel: &Selection, batch: &[usize]) -> Option<GradientRequest> {
        let mut ids = batch.to_vec();
        ids.sort_unstable();
        Some(GradientRequest {
            segments: self.pools.texts(sel).into_iter().map(str::to_string).collect(),
            candidates: self
                .pools
                .pools
                .iter()
                .map(|p| p.candidates.iter().map(|c| c.text.clone()).collect())
                .collect(),
            examples: ids
                .iter()
                .map(|&z| {
                    let ex = &self.examples[z];
                    GradientExample {
                        story: ex.story.clone(),
                        query: ex.query.clone(),
                        target: ex.target_text(),
                    }
                })
                .collect(),
        })
    }
}

/// Explicit loss table per example, indexed by selection in mixed radix
/// (first segment most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct TableObjective {
    pub sizes: Vec<usize>,
    pub tables: Vec<Vec<f64>>,
}

impl TableObjective {
    pub fn new(sizes: Vec<usize>, tables: Vec<Vec<f64>>) -> Result<Self> {
        let n: usize = sizes.iter().product();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Precondition("pool sizes must be positive".into()));
        }
        if tables.is_empty() || tables.iter().any(|t| t.len() != n) {
            return Err(Error::Precondition(format!("every table needs {n} entries")));
        }
        Ok(Self { sizes, tables })
    }

    /// `L_z(sel) = sum_m f[z][m][sel_m]`.
    pub fn separable(sizes: Vec<usize>, terms: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n: usize = sizes.iter().product();
        let tables = terms
            .iter()
            .map(|f| {
                (0..n)
                    .map(|flat| {
                        let sel = unflatten(&sizes, flat);
                        sel.indices.iter().enumerate().map(|(m, &j)| f[m][j]).sum()
                    })
                    .collect()
            })
            .collect();
        Self::new(sizes, tables)
    }

    pub fn flat_index(&self, sel: &Selection) -> usize {
        sel.indices
            .iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }
}

/// Selection for a mixed-radix flat index.
pub fn unflatten(sizes: &[usize], mut flat: usize) -> Selection {
    let mut indices = vec![0; sizes.len()];
    for m in (0..sizes.len()).rev() {
        indices[m] = flat % sizes[m];
        flat /= sizes[m];
    }
    Selection::new(indices)
}

impl Objective for TableObjective {
    fn num_examples(&self) -> usize {
        self.tables.len()
    }

    fn pool_sizes(&self) -> Vec<usize> {
        self.sizes.clone()
    }

    fn example_loss(&self, sel: &Selection, example: usize) -> Result<f64> {
        sel.check(&self.sizes)?;
        Ok(self.tables[example][self.flat_index(sel)])
    }
}
