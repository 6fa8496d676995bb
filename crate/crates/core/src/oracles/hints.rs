//! Per-candidate substitution scores used to prune the search.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::retry::with_retries;
use crate::error::{Error, Result, TransportError};
use crate::gspo::{batch_loss, Objective, Selection};
use crate::parallel::map_bounded;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientExample {
    pub story: String,
    pub query: String,
    pub target: String,
}

/// `POST /v1/segment_gradients` request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientRequest {
    pub segments: Vec<String>,
    pub candidates: Vec<Vec<String>>,
    pub examples: Vec<GradientExample>,
}

/// `POST /v1/segment_gradients` response body. Larger is more promising.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientResponse {
    pub scores: Vec<Vec<f64>>,
}

pub trait GradientService: Send + Sync {
    fn segment_gradients(&self, request: &GradientRequest)
        -> Result<GradientResponse, TransportError>;
}

impl<T: GradientService + ?Sized> GradientService for Arc<T> {
    fn segment_gradients(
        &self,
        request: &GradientRequest,
    ) -> Result<GradientResponse, TransportError> {
        (**self).segment_gradients(request)
    }
}

#[derive(Clone)]
pub enum GradientHintProvider {
    /// Negated mean loss on a random probe subset of the batch.
    ProbeSurrogate { probe_size: usize },
    /// Scores computed by a remote white-box service.
    Remote {
        service: Arc<dyn GradientService>,
        max_retries: u32,
        backoff: Duration,
    },
}

impl Default for GradientHintProvider {
    fn default() -> Self {
        GradientHintProvider::ProbeSurrogate { probe_size: 4 }
    }
}

impl std::fmt::Debug for GradientHintProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradientHintProvider::ProbeSurrogate { probe_size } => {
                write!(f, "ProbeSurrogate {{ probe_size: {probe_size} }}")
            }
            GradientHintProvider::Remote { max_retries, .. } => {
                write!(f, "Remote {{ max_retries: {max_retries} }}")
            }
        }
    }
}

impl GradientHintProvider {
    pub fn remote(service: Arc<dyn GradientService>) -> Self {
        GradientHintProvider::Remote {
            service,
            max_retries: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

/// Probe subset drawn from `batch`, sorted. Consumes randomness only when
/// the probe is strictly smaller than the batch.
pub fn draw_probe<R: Rng + ?Sized>(batch: &[usize], probe_size: usize, rng: &mut R) -> Vec<usize> {
    let mut probe = if probe_size >= batch.len() {
        if probe_size > batch.len() {
            log::warn!("probe size {probe_size} exceeds batch of {}; clamped", batch.len());
        }
        batch.to_vec()
    } else {
        rand::seq::index::sample(rng, batch.len(), probe_size.max(1))
            .into_iter()
            .map(|i| batch[i])
            .collect()
    };
    probe.sort_unstable();
    probe
}

/// Scores of shape `[M][|W_m|]`; larger means a more promising substitution.
pub fn segment_gradient_hints<R: Rng + ?Sized>(
    provider: &GradientHintProvider,
    selection: &Selection,
    objective: &dyn Objective,
    batch: &[usize],
    rng: &mut R,
    parallelism: usize,
) -> Result<Vec<Vec<f64>>> {
    let sizes = objective.pool_sizes();
    selection.check(&sizes)?;
    if sizes.contains(&0) {
        return Err(Error::Precondition("empty candidate pool".into()));
    }
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    match provider {
        GradientHintProvider::ProbeSurrogate { probe_size } => {
            let probe = draw_probe(batch, *probe_size, rng);
            let pairs: Vec<(usize, usize)> = sizes
                .iter()
                .enumerate()
                .flat_map(|(m, &n)| (0..n).map(move |j| (m, j)))
                .collect();
            let losses = map_bounded(&pairs, parallelism, |&(m, j)| {
                batch_loss(objective, &selection.with(m, j), &probe)
            });
            let mut scores: Vec<Vec<f64>> = sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
            for (&(m, _), loss) in pairs.iter().zip(losses) {
                scores[m].push(-loss?);
            }
            Ok(scores)
        }
        GradientHintProvider::Remote {
            service,
            max_retries,
            backoff,
        } => {
            let request = objective.gradient_request(selection, batch).ok_or_else(|| {
                Error::Precondition("objective has no text form for remote hints".into())
            })?;
            let response = with_retries(*max_retries, *backoff, || {
                service
                    .segment_gradients(&request)
                    .map_err(|e| e.with_stage("segment-gradients"))
            })?;
            check_scores(&response.scores, &sizes)?;
            Ok(response.scores)
        }
    }
}

fn check_scores(scores: &[Vec<f64>], sizes: &[usize]) -> Result<()> {
    let shape: Vec<usize> = scores.iter().map(Vec::len).collect();
    if shape != sizes {
        return Err(Error::Protocol(format!(
            "gradient scores have shape {shape:?}, expected {sizes:?}"
        )));
    }
    if scores.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::Protocol("gradient scores contain non-finite values".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gspo::TableObjective;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> TableObjective {
        // separable over 2x3 pools with two examples
        let f = vec![
            vec![vec![0.5, 0.2], vec![0.3, 0.9, 0.1]],
            vec![vec![0.4, 0.6], vec![0.3, 0.3, 0.2]],
        ];
        TableObjective::separable(vec![2, 3], &f).unwrap()
    }

    #[test]
    fn full_probe_ranks_like_exhaustive_replacement() {
        let obj = table();
        let sel = Selection::new(vec![0, 0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores = segment_gradient_hints(
            &GradientHintProvider::ProbeSurrogate { probe_size: 2 },
            &sel,
            &obj,
            &[0, 1],
            &mut rng,
            1,
        )
        .unwrap();
        // identity substitution scores the current loss
        let current = batch_loss(&obj, &sel, &[0, 1]).unwrap();
        assert_eq!(scores[0][0], -current);
        assert_eq!(scores[1][0], -current);
        let argmax = |v: &Vec<f64>| {
            (0..v.len()).fold(0, |b, j| if v[j] > v[b] { j } else { b })
        };
        for (m, row) in scores.iter().enumerate() {
            let best = (0..row.len())
                .map(|j| batch_loss(&obj, &sel.with(m, j), &[0, 1]).unwrap())
                .enumerate()
                .fold((0, f64::INFINITY), |b, (j, l)| if l < b.1 { (j, l) } else { b })
                .0;
            assert_eq!(argmax(row), best);
        }
        assert_eq!(argmax(&scores[0]), 1);
        assert_eq!(argmax(&scores[1]), 2);
    }

    #[test]
    fn probe_is_clamped_and_sampled_without_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(draw_probe(&[4, 1, 9], 10, &mut rng), vec![1, 4, 9]);
        let p = draw_probe(&[0, 1, 2, 3, 4, 5, 6, 7], 4, &mut rng);
        assert_eq!(p.len(), 4);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    struct Fixed(Vec<Vec<f64>>);
    impl GradientService for Fixed {
        fn segment_gradients(&self, _: &GradientRequest) -> Result<GradientResponse, TransportError> {
            Ok(GradientResponse { scores: self.0.clone() })
        }
    }

    #[test]
    fn remote_requires_text_objective() {
        let provider = GradientHintProvider::remote(Arc::new(Fixed(vec![vec![0.0; 2], vec![0.0; 3]])));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = segment_gradient_hints(&provider, &Selection::first(2), &table(), &[0], &mut rng, 1);
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn remote_shape_is_checked() {
        assert!(check_scores(&[vec![0.0; 2]], &[2]).is_ok());
        assert!(check_scores(&[vec![0.0; 2]], &[3]).is_err());
        assert!(check_scores(&[vec![f64::NAN]], &[1]).is_err());
    }
}
