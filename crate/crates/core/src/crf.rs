//! Linear-chain CRF over per-token tag scores: forward-algorithm partition,
//! forward-backward marginals, constrained Viterbi and a differentiable
//! negative log-likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{AutogradError, Graph, ParamId, ParamStore, Tensor, Var};
use crate::encoding::{TagId, TransitionMask};

/// Score added to a disallowed transition during constrained decoding.
pub const MASK_PENALTY: f64 = -1e4;

#[derive(Debug, Error, PartialEq)]
pub enum CrfError {
    #[error("empty sequence")]
    Empty,
    #[error("tag {tag} out of range for {num_tags} tags")]
    TagOutOfRange { tag: TagId, num_tags: usize },
    #[error("emissions have shape {shape:?}, expected T×{num_tags}")]
    EmissionShape { shape: Vec<usize>, num_tags: usize },
    #[error("{gold} gold tags for {len} positions")]
    GoldLength { gold: usize, len: usize },
    #[error("constraint mask is for {mask} tags, model has {num_tags}")]
    MaskSize { mask: usize, num_tags: usize },
    #[error("no path satisfies the transition constraints")]
    Infeasible,
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    /// `transitions[i][j]` scores tag `i` followed by tag `j`.
    pub transitions: Tensor,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        CrfParams {
            transitions: Tensor::zeros(&[num_tags, num_tags]),
            start: vec![0.0; num_tags],
            end: vec![0.0; num_tags],
        }
    }

    /// Uniform scores in `[-scale, scale)`.
    pub fn random<R: Rng>(num_tags: usize, scale: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-scale..scale)).collect() };
        let transitions = Tensor::new(vec![num_tags, num_tags], draw(num_tags * num_tags)).expect("square");
        CrfParams {
            transitions,
            start: draw(num_tags),
            end: draw(num_tags),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    fn trans(&self, i: usize, j: usize) -> f64 {
        self.transitions.get2(i, j)
    }

    fn check(&self, emissions: &Tensor) -> Result<usize, CrfError> {
        let k = self.num_tags();
        if emissions.rank() != 2 || emissions.cols() != k {
            return Err(CrfError::EmissionShape {
                shape: emissions.shape().to_vec(),
                num_tags: k,
            });
        }
        if emissions.rows() == 0 {
            return Err(CrfError::Empty);
        }
        Ok(emissions.rows())
    }

    fn check_tags(&self, tags: &[TagId], len: usize) -> Result<(), CrfError> {
        if tags.len() != len {
            return Err(CrfError::GoldLength {
                gold: tags.len(),
                len,
            });
        }
        let k = self.num_tags();
        match tags.iter().find(|&&t| t >= k) {
            Some(&tag) => Err(CrfError::TagOutOfRange { tag, num_tags: k }),
            None => Ok(()),
        }
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Unnormalized score of one tag path.
pub fn path_score(params: &CrfParams, emissions: &Tensor, tags: &[TagId]) -> Result<f64, CrfError> {
    let t = params.check(emissions)?;
    params.check_tags(tags, t)?;
    let mut s = params.start[tags[0]] + params.end[tags[t - 1]];
    for (pos, &y) in tags.iter().enumerate() {
        s += emissions.get2(pos, y);
        if pos > 0 {
            s += params.trans(tags[pos - 1], y);
        }
    }
    Ok(s)
}

fn forward_table(params: &CrfParams, emissions: &Tensor) -> Vec<Vec<f64>> {
    let (t, k) = (emissions.rows(), params.num_tags());
    let mut alpha = vec![vec![0.0; k]; t];
    for j in 0..k {
        alpha[0][j] = params.start[j] + emissions.get2(0, j);
    }
    let mut terms = vec![0.0; k];
    for pos in 1..t {
        for j in 0..k {
            for i in 0..k {
                terms[i] = alpha[pos - 1][i] + params.trans(i, j);
            }
            alpha[pos][j] = logsumexp(&terms) + emissions.get2(pos, j);
        }
    }
    alpha
}

fn backward_table(params: &CrfParams, emissions: &Tensor) -> Vec<Vec<f64>> {
    let (t, k) = (emissions.rows(), params.num_tags());
    let mut beta = vec![vec![0.0; k]; t];
    beta[t - 1].clone_from(&params.end);
    let mut terms = vec![0.0; k];
    for pos in (0..t - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                terms[j] = params.trans(i, j) + emissions.get2(pos + 1, j) + beta[pos + 1][j];
            }
            beta[pos][i] = logsumexp(&terms);
        }
    }
    beta
}

/// `log Z`, summed over all tag paths (no constraints).
pub fn log_partition(params: &CrfParams, emissions: &Tensor) -> Result<f64, CrfError> {
    let t = params.check(emissions)?;
    let alpha = forward_table(params, emissions);
    let last: Vec<f64> = alpha[t - 1].iter().zip(&params.end).map(|(a, e)| a + e).collect();
    Ok(logsumexp(&last))
}

/// `score(gold) − log Z`.
pub fn log_likelihood(params: &CrfParams, emissions: &Tensor, gold: &[TagId]) -> Result<f64, CrfError> {
    Ok(path_score(params, emissions, gold)? - log_partition(params, emissions)?)
}

/// Per-position tag posteriors from forward-backward, T rows of K values.
pub fn marginals(params: &CrfParams, emissions: &Tensor) -> Result<Vec<Vec<f64>>, CrfError> {
    params.check(emissions)?;
    let log_z = log_partition(params, emissions)?;
    let alpha = forward_table(params, emissions);
    let beta = backward_table(params, emissions);
    Ok(alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - log_z).exp()).collect())
        .collect())
}

/// Highest-scoring path. With `constraints`, disallowed transitions
/// (including from START and into END) carry [`MASK_PENALTY`]; an optimum
/// that still uses one is reported as [`CrfError::Infeasible`]. Among equal
/// scores the lexicographically smallest tag sequence wins.
pub fn viterbi_decode(
    params: &CrfParams,
    emissions: &Tensor,
    constraints: Option<&TransitionMask>,
) -> Result<(Vec<TagId>, f64), CrfError> {
    let t = params.check(emissions)?;
    let k = params.num_tags();
    if let Some(m) = constraints {
        if m.num_tags() != k {
            return Err(CrfError::MaskSize {
                mask: m.num_tags(),
                num_tags: k,
            });
        }
    }
    let penalty = |from: usize, to: usize| match constraints {
        Some(m) if !m.allowed(from, to) => MASK_PENALTY,
        _ => 0.0,
    };
    let (start_state, end_state) = (k, k + 1);
    let start = |j: usize| params.start[j] + penalty(start_state, j);
    let end = |i: usize| params.end[i] + penalty(i, end_state);
    let trans = |i: usize, j: usize| params.trans(i, j) + penalty(i, j);

    // best[pos][i]: best score of positions pos.. given tag i at pos
    let mut best = vec![vec![0.0; k]; t];
    for i in 0..k {
        best[t - 1][i] = emissions.get2(t - 1, i) + end(i);
    }
    for pos in (0..t - 1).rev() {
        for i in 0..k {
            let m = (0..k)
                .map(|j| trans(i, j) + best[pos + 1][j])
                .fold(f64::NEG_INFINITY, f64::max);
            best[pos][i] = emissions.get2(pos, i) + m;
        }
    }

    let argmax = |scores: &mut dyn Iterator<Item = f64>| -> (usize, f64) {
        let mut arg = (0, f64::NEG_INFINITY);
        for (i, s) in scores.enumerate() {
            if s > arg.1 {
                arg = (i, s);
            }
        }
        arg
    };
    let (first, score) = argmax(&mut (0..k).map(|i| start(i) + best[0][i]));
    let mut path = vec![first];
    let mut feasible = penalty(start_state, first) == 0.0;
    for pos in 1..t {
        let prev = path[pos - 1];
        let (next, _) = argmax(&mut (0..k).map(|j| trans(prev, j) + best[pos][j]));
        feasible &= penalty(prev, next) == 0.0;
        path.push(next);
    }
    feasible &= penalty(path[t - 1], end_state) == 0.0;
    if !feasible {
        return Err(CrfError::Infeasible);
    }
    Ok((path, score))
}

/// Handles to the CRF parameters inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfParamIds {
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
}

impl CrfParamIds {
    pub fn register(store: &mut ParamStore, prefix: &str, init: CrfParams) -> Self {
        CrfParamIds {
            transitions: store.add(format!("{prefix}.transitions"), init.transitions),
            start: store.add(format!("{prefix}.start"), Tensor::vector(init.start)),
            end: store.add(format!("{prefix}.end"), Tensor::vector(init.end)),
        }
    }

    /// Copies the current values out of the store.
    pub fn read(&self, store: &ParamStore) -> CrfParams {
        CrfParams {
            transitions: store.get(self.transitions).clone(),
            start: store.get(self.start).data().to_vec(),
            end: store.get(self.end).data().to_vec(),
        }
    }
}

/// `−log p(gold | emissions)` recorded on the tape. Uses the unconstrained
/// partition function.
pub fn negative_log_likelihood(
    g: &mut Graph<'_>,
    crf: &CrfParamIds,
    emissions: Var,
    gold: &[TagId],
) -> Result<Var, CrfError> {
    let shape = g.shape(emissions).to_vec();
    let k = g.params().get(crf.start).len();
    if shape.len() != 2 || shape[1] != k {
        return Err(CrfError::EmissionShape { shape, num_tags: k });
    }
    let t = shape[0];
    if t == 0 {
        return Err(CrfError::Empty);
    }
    if gold.len() != t {
        return Err(CrfError::GoldLength { gold: gold.len(), len: t });
    }
    if let Some(&tag) = gold.iter().find(|&&y| y >= k) {
        return Err(CrfError::TagOutOfRange { tag, num_tags: k });
    }
    let trans = g.param(crf.transitions);
    let start = g.param(crf.start);
    let end = g.param(crf.end);

    let e0 = g.row(emissions, 0)?;
    let mut alpha = g.add(start, e0)?;
    for pos in 1..t {
        let step = g.log_vecmat(alpha, trans)?;
        let e = g.row(emissions, pos)?;
        alpha = g.add(step, e)?;
    }
    let closing = g.add(alpha, end)?;
    let log_z = g.logsumexp(closing)?;

    let emit_idx: Vec<usize> = gold.iter().enumerate().map(|(pos, &y)| pos * k + y).collect();
    let emit = g.select(emissions, &emit_idx)?;
    let mut gold_score = g.sum(emit)?;
    if t > 1 {
        let trans_idx: Vec<usize> = gold.windows(2).map(|w| w[0] * k + w[1]).collect();
        let tr = g.select(trans, &trans_idx)?;
        let tr = g.sum(tr)?;
        gold_score = g.add(gold_score, tr)?;
    }
    let s = g.select(start, &[gold[0]])?;
    let e = g.select(end, &[gold[t - 1]])?;
    let boundary = g.add(s, e)?;
    let boundary = g.sum(boundary)?;
    gold_score = g.add(gold_score, boundary)?;
    Ok(g.sub(log_z, gold_score)?)
}
