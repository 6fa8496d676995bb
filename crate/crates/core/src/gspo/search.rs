use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::candidates::Selection;
use super::objective::{batch_loss, unflatten, Objective};
use crate::error::{Error, Result};
use crate::hash::json_digest;
use crate::oracles::{segment_gradient_hints, GradientHintProvider};
use crate::parallel::map_bounded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GspoConfig {
    pub k: usize,
    pub n: usize,
    pub batch_size: usize,
    pub probe_size: usize,
    pub seed: u64,
    pub incumbent_guard: bool,
    pub parallelism: usize,
}

impl Default for GspoConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n: 500,
            batch_size: 16,
            probe_size: 4,
            seed: 0,
            incumbent_guard: true,
            parallelism: 1,
        }
    }
}

impl GspoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.batch_size == 0 || self.probe_size == 0 {
            return Err(Error::Precondition(
                "k, n, batch_size and probe_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Indices of the `k` largest scores per segment; ties go to the lower index.
pub fn top_k_substitutions(scores: &[Vec<f64>], k: usize) -> Result<Vec<Vec<usize>>> {
    scores
        .iter()
        .map(|row| {
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::Precondition("hint scores must be finite".into()));
            }
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order.truncate(k);
            Ok(order)
        })
        .collect()
}

/// The `K·M` single-segment replacements of `sel`: replacement `b` sets
/// segment `b mod M` to `u[b mod M][b / M]`. Short lists are padded by
/// repeating their last entry.
pub fn enumerate_replacements(sel: &Selection, u: &[Vec<usize>], k: usize) -> Result<Vec<(Selection, usize)>> {
    let m = sel.len();
    if u.len() != m {
        return Err(Error::Precondition(format!("{} substitution lists for {m} segments", u.len())));
    }
    if u.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("empty substitution list".into()));
    }
    Ok((0..k * m)
        .map(|b| {
            let i = b % m;
            let list = &u[i];
            let j = list[(b / m).min(list.len() - 1)];
            (sel.with(i, j), b)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub batch_ids: Vec<usize>,
    pub hint_scores_digest: String,
    pub top_k: Vec<Vec<usize>>,
    /// Replacement `b` at position `b`, followed by the incumbent when guarded.
    pub evaluated_selections: Vec<Selection>,
    pub batch_losses: Vec<f64>,
    /// `None` when the incumbent was kept.
    pub chosen_b: Option<usize>,
    pub chosen_selection: Selection,
    pub chosen_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GspoTrace {
    pub records: Vec<IterationRecord>,
}

impl GspoTrace {
    pub fn chosen_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.chosen_loss).collect()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("serializable record"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_jsonl().as_bytes())?;
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GspoOutcome {
    pub selection: Selection,
    pub trace: GspoTrace,
}

/// A failed run together with every iteration completed before the failure.
#[derive(Debug)]
pub struct GspoError {
    pub error: Error,
    pub trace: GspoTrace,
}

impl std::fmt::Display for GspoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "search aborted after {} iterations: {}", self.trace.records.len(), self.error)
    }
}

impl std::error::Error for GspoError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Greedy segment search starting from `initial`.
pub fn gspo_run(
    cfg: &GspoConfig,
    initial: Selection,
    objective: &dyn Objective,
    hints: &GradientHintProvider,
) -> std::result::Result<GspoOutcome, GspoError> {
    let mut trace = GspoTrace::default();
    let fail = |error: Error, trace: GspoTrace| GspoError { error, trace };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace));
    }
    let sizes = objective.pool_sizes();
    if let Err(e) = initial.check(&sizes) {
        return Err(fail(e, trace));
    }
    let total = objective.num_examples();
    if total == 0 {
        return Err(fail(Error::Precondition("no training examples".into()), trace));
    }
    let batch_size = cfg.batch_size.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = initial;

    for iteration in 0..cfg.n {
        let mut batch = rand::seq::index::sample(&mut rng, total, batch_size).into_vec();
        batch.sort_unstable();

        match step(cfg, iteration, &current, &batch, objective, hints, &mut rng) {
            Ok(record) => {
                current = record.chosen_selection.clone();
                trace.records.push(record);
            }
            Err(e) => return Err(fail(e, trace)),
        }
    }
    Ok(GspoOutcome { selection: current, trace })
}

fn step(
    cfg: &GspoConfig,
    iteration: usize,
    current: &Selection,
    batch: &[usize],
    objective: &dyn Objective,
    hints: &GradientHintProvider,
    rng: &mut ChaCha8Rng,
) -> Result<IterationRecord> {
    let scores = segment_gradient_hints(hints, current, objective, batch, rng, cfg.parallelism)?;
    let top_k = top_k_substitutions(&scores, cfg.k)?;
    let mut evaluated: Vec<Selection> = enumerate_replacements(current, &top_k, cfg.k)?
        .into_iter()
        .map(|(s, _)| s)
        .collect();
    if cfg.incumbent_guard {
        evaluated.push(current.clone());
    }

    let mut distinct: Vec<&Selection> = Vec::new();
    let mut slot: HashMap<&Selection, usize> = HashMap::new();
    for s in &evaluated {
        slot.entry(s).or_insert_with(|| {
            distinct.push(s);
            distinct.len() - 1
        });
    }
    let losses = map_bounded(&distinct, cfg.parallelism, |s| batch_loss(objective, s, batch));
    let losses = losses.into_iter().collect::<Result<Vec<f64>>>()?;
    let batch_losses: Vec<f64> = evaluated.iter().map(|s| losses[slot[s]]).collect();

    let replacements = cfg.k * current.len();
    let mut best = if cfg.incumbent_guard { replacements } else { 0 };
    for b in 0..replacements {
        if batch_losses[b] < batch_losses[best] {
            best = b;
        }
    }
    Ok(IterationRecord {
        iteration,
        batch_ids: batch.to_vec(),
        hint_scores_digest: json_digest(&scores),
        top_k,
        chosen_b: (best < replacements).then_some(best),
        chosen_selection: evaluated[best].clone(),
        chosen_loss: batch_losses[best],
        evaluated_selections: evaluated,
        batch_losses,
    })
}

/// Default cap on the number of selections `brute_force_optimum` will visit.
pub const BRUTE_FORCE_CAP: u128 = 4096;

/// Exhaustive minimum of full-dataset mean loss; ties go to the
/// lexicographically smallest selection.
pub fn brute_force_optimum(objective: &dyn Objective, cap: u128) -> Result<(Selection, f64)> {
    let sizes = objective.pool_sizes();
    let size = sizes.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128));
    if size > cap {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }
    if size == 0 {
        return Err(Error::Precondition("empty candidate pool".into()));
    }
    let all: Vec<usize> = (0..objective.num_examples()).collect();
    let mut best: Option<(Selection, f64)> = None;
    for flat in 0..size as usize {
        let sel = unflatten(&sizes, flat);
        let loss = batch_loss(objective, &sel, &all)?;
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((sel, loss));
        }
    }
    Ok(best.expect("non-empty search space"))
}
