//! Plain and lexically constrained beam search over a [`TranslationModel`].
//!
//! Scores are summed log-probabilities with no length normalisation. Ties are
//! broken by parent index, then by token id, so decoding is fully
//! deterministic. Search stops as soon as the best finished hypothesis scores
//! at least as high as every live one; scores never increase, so nothing
//! left on the beam can overtake it.

use std::cmp::Ordering;

use super::TranslationModel;
use crate::error::{Error, Result};

/// A decoded (or partial) output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
    pub coverage: Coverage,
}

/// Per-constraint matching state.
///
/// Each unmet phrase carries a KMP state: the length of the longest suffix of
/// the output that is a prefix of the phrase. When a phrase completes, the
/// lowest-index completing phrase is marked met at that position and every
/// other partial match is reset, so met phrases occupy disjoint spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coverage {
    progress: Vec<usize>,
    /// Exclusive end position of each met phrase.
    met_at: Vec<Option<usize>>,
    consumed: usize,
}

#[derive(Debug)]
pub(crate) struct Automaton<'a> {
    phrases: &'a [Vec<usize>],
    failure: Vec<Vec<usize>>,
}

impl<'a> Automaton<'a> {
    pub(crate) fn new(phrases: &'a [Vec<usize>]) -> Self {
        let failure = phrases.iter().map(|p| failure_table(p)).collect();
        Self { phrases, failure }
    }

    pub(crate) fn start(&self) -> Coverage {
        Coverage {
            progress: vec![0; self.phrases.len()],
            met_at: vec![None; self.phrases.len()],
            consumed: 0,
        }
    }

    pub(crate) fn total_len(&self) -> usize {
        self.phrases.iter().map(Vec::len).sum()
    }

    /// Coverage after appending `token` at output position `pos`.
    pub(crate) fn advance(&self, cov: &Coverage, token: usize, pos: usize) -> Coverage {
        let mut next = cov.clone();
        let mut completed = None;
        for (c, phrase) in self.phrases.iter().enumerate() {
            if next.met_at[c].is_some() {
                continue;
            }
            let mut state = next.progress[c];
            while state > 0 && phrase[state] != token {
                state = self.failure[c][state - 1];
            }
            if phrase[state] == token {
                state += 1;
            }
            next.progress[c] = state;
            if state == phrase.len() && completed.is_none() {
                completed = Some(c);
            }
        }
        if let Some(c) = completed {
            next.met_at[c] = Some(pos + 1);
            next.consumed += self.phrases[c].len();
            next.progress.iter_mut().for_each(|p| *p = 0);
        }
        next
    }

    pub(crate) fn all_met(&self, cov: &Coverage) -> bool {
        cov.met_at.iter().all(Option::is_some)
    }

    /// Constraint tokens accounted for: met phrases plus the longest partial.
    pub(crate) fn bank(&self, cov: &Coverage) -> usize {
        let partial = (0..self.phrases.len())
            .filter(|&c| cov.met_at[c].is_none())
            .map(|c| cov.progress[c])
            .max()
            .unwrap_or(0);
        cov.consumed + partial
    }

    /// Tokens that start or extend an unmet phrase.
    pub(crate) fn forced_tokens(&self, cov: &Coverage) -> Vec<usize> {
        let mut out = Vec::new();
        for (c, phrase) in self.phrases.iter().enumerate() {
            if cov.met_at[c].is_none() {
                out.push(phrase[cov.progress[c]]);
                out.push(phrase[0]);
            }
        }
        out
    }

    /// Scans a finished sequence and returns the span of every phrase.
    pub(crate) fn locate(&self, tokens: &[usize]) -> Option<Vec<std::ops::Range<usize>>> {
        let mut cov = self.start();
        for (pos, &t) in tokens.iter().enumerate() {
            cov = self.advance(&cov, t, pos);
        }
        cov.met_at
            .iter()
            .zip(self.phrases)
            .map(|(end, p)| end.map(|e| e - p.len()..e))
            .collect()
    }
}

fn failure_table(phrase: &[usize]) -> Vec<usize> {
    let mut fail = vec![0; phrase.len()];
    let mut k = 0;
    for i in 1..phrase.len() {
        while k > 0 && phrase[i] != phrase[k] {
            k = fail[k - 1];
        }
        if phrase[i] == phrase[k] {
            k += 1;
        }
        fail[i] = k;
    }
    fail
}

#[derive(Debug, Clone)]
struct Candidate {
    parent: usize,
    token: usize,
    score: f64,
    coverage: Coverage,
    bank: usize,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.parent.cmp(&b.parent))
        .then(a.token.cmp(&b.token))
}

/// The `k` best token ids of `log_probs` among those accepted by `allow`.
fn top_k(log_probs: &[f64], k: usize, allow: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..log_probs.len()).filter(|&t| allow(t)).collect();
    let cmp = |a: &usize, b: &usize| log_probs[*b].total_cmp(&log_probs[*a]).then(a.cmp(b));
    if ids.len() > k && k > 0 {
        ids.select_nth_unstable_by(k - 1, cmp);
        ids.truncate(k);
    }
    ids.sort_by(cmp);
    ids.truncate(k);
    ids
}

/// Keeps at most `beam` candidates, spreading slots evenly across banks from
/// the most-constrained bank down and handing slots a bank cannot use to
/// the others.
fn allocate(mut cands: Vec<Candidate>, beam: usize) -> Vec<Candidate> {
    cands.sort_by(rank);
    if cands.len() <= beam {
        return cands;
    }
    let max_bank = cands.iter().map(|c| c.bank).max().unwrap_or(0);
    let mut banks: Vec<Vec<Candidate>> = vec![Vec::new(); max_bank + 1];
    for c in cands {
        let b = c.bank;
        banks[b].push(c);
    }
    let mut taken = vec![0usize; banks.len()];
    let mut left = beam;
    while left > 0 {
        let mut progressed = false;
        for b in (0..banks.len()).rev() {
            if left == 0 {
                break;
            }
            if taken[b] < banks[b].len() {
                taken[b] += 1;
                left -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let mut kept: Vec<Candidate> = banks
        .into_iter()
        .zip(taken)
        .flat_map(|(bank, n)| bank.into_iter().take(n))
        .collect();
    kept.sort_by(rank);
    kept
}

fn check_log_probs(model: &dyn TranslationModel, lp: &[f64]) -> Result<()> {
    let v = model.vocab().len();
    if lp.len() != v {
        return Err(Error::Translation(format!(
            "model returned {} scores for a vocabulary of {v}",
            lp.len()
        )));
    }
    Ok(())
}

fn sort_finished(finished: &mut [BeamHypothesis]) {
    finished.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
}

fn should_stop(finished: &[BeamHypothesis], live: &[BeamHypothesis]) -> bool {
    let best_live = live.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
    live.is_empty()
        || finished
            .iter()
            .any(|f| f.score >= best_live)
}

/// Unconstrained beam search. Returns the finished hypotheses, best first.
///
/// `max_len` bounds the output length excluding the end-of-sequence token.
pub fn beam_search(
    model: &dyn TranslationModel,
    source: &[String],
    beam: usize,
    max_len: usize,
) -> Result<Vec<BeamHypothesis>> {
    if beam == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let eos = model.vocab().eos();
    let automaton = Automaton::new(&[]);
    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        score: 0.0,
        coverage: automaton.start(),
    }];
    let mut finished = Vec::new();
    for step in 0..=max_len {
        let mut cands = Vec::new();
        for (parent, hyp) in live.iter().enumerate() {
            let lp = model.log_probs(source, &hyp.tokens);
            check_log_probs(model, &lp)?;
            let tokens = if step == max_len { vec![eos] } else { top_k(&lp, beam, |_| true) };
            for token in tokens {
                cands.push(Candidate {
                    parent,
                    token,
                    score: hyp.score + lp[token],
                    coverage: hyp.coverage.clone(),
                    bank: 0,
                });
            }
        }
        cands.sort_by(rank);
        cands.truncate(beam);
        live = extend(&live, cands, eos, &mut finished);
        if should_stop(&finished, &live) {
            break;
        }
    }
    sort_finished(&mut finished);
    Ok(finished)
}

fn extend(
    live: &[BeamHypothesis],
    selected: Vec<Candidate>,
    eos: usize,
    finished: &mut Vec<BeamHypothesis>,
) -> Vec<BeamHypothesis> {
    let mut next = Vec::with_capacity(selected.len());
    for c in selected {
        let mut tokens = live[c.parent].tokens.clone();
        if c.token == eos {
            finished.push(BeamHypothesis {
                tokens,
                score: c.score,
                coverage: c.coverage,
            });
        } else {
            tokens.push(c.token);
            next.push(BeamHypothesis {
                tokens,
                score: c.score,
                coverage: c.coverage,
            });
        }
    }
    next
}

/// Beam search whose output must contain every phrase of `constraints`
/// (token ids of the model's target vocabulary) as disjoint contiguous spans.
///
/// Returns the best constraint-complete hypothesis, or
/// [`Error::Unsatisfiable`] when none is found within `max_len` tokens.
pub fn constrained_beam_search(
    model: &dyn TranslationModel,
    source: &[String],
    constraints: &[Vec<usize>],
    beam: usize,
    max_len: usize,
) -> Result<BeamHypothesis> {
    let eos = model.vocab().eos();
    let automaton = Automaton::new(constraints);
    if constraints.iter().any(Vec::is_empty) {
        return Err(Error::Config("empty constraint phrase".into()));
    }
    if constraints.iter().flatten().any(|&t| t == eos || t >= model.vocab().len()) {
        return Err(Error::Config("constraint token outside the target vocabulary".into()));
    }
    let total = automaton.total_len();
    if beam < total + 1 {
        return Err(Error::Config(format!(
            "beam width {beam} cannot hold {} constraint banks",
            total + 1
        )));
    }
    if max_len < total {
        return Err(Error::Unsatisfiable { max_len });
    }

    let mut live = vec![BeamHypothesis {
        tokens: Vec::new(),
        score: 0.0,
        coverage: automaton.start(),
    }];
    let mut finished = Vec::new();
    for step in 0..=max_len {
        let mut cands = Vec::new();
        for (parent, hyp) in live.iter().enumerate() {
            let met = automaton.all_met(&hyp.coverage);
            if step == max_len && !met {
                continue;
            }
            let lp = model.log_probs(source, &hyp.tokens);
            check_log_probs(model, &lp)?;
            let mut tokens = if step == max_len {
                vec![eos]
            } else {
                let mut t = top_k(&lp, beam, |t| met || t != eos);
                t.extend(automaton.forced_tokens(&hyp.coverage));
                t.sort_unstable();
                t.dedup();
                t
            };
            tokens.retain(|&t| t != eos || met);
            for token in tokens {
                let coverage = if token == eos {
                    hyp.coverage.clone()
                } else {
                    automaton.advance(&hyp.coverage, token, hyp.tokens.len())
                };
                let bank = automaton.bank(&coverage);
                cands.push(Candidate {
                    parent,
                    token,
                    score: hyp.score + lp[token],
                    coverage,
                    bank,
                });
            }
        }
        let selected = allocate(cands, beam);
        live = extend(&live, selected, eos, &mut finished);
        if should_stop(&finished, &live) {
            break;
        }
    }
    sort_finished(&mut finished);
    finished
        .into_iter()
        .next()
        .ok_or(Error::Unsatisfiable { max_len })
}
