use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Result};

const RATIO_TOLERANCE: f64 = 1e-9;

/// Disjoint train / validation / test id sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

impl SplitAssignment {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    /// Check that the three sets partition exactly the corpus ids.
    pub fn check_partition(&self, corpus: &Corpus) -> std::result::Result<(), String> {
        if !self.train.is_disjoint(&self.validation)
            || !self.train.is_disjoint(&self.test)
            || !self.validation.is_disjoint(&self.test)
        {
            return Err("split sets overlap".into());
        }
        let total = self.train.len() + self.validation.len() + self.test.len();
        if total != corpus.len() {
            return Err(format!("split covers {total} ids, corpus has {}", corpus.len()));
        }
        for id in corpus.ids() {
            if !self.train.contains(id) && !self.validation.contains(id) && !self.test.contains(id) {
                return Err(format!("post `{id}` missing from split"));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`.
fn apportion(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    // floor with a small slack so 0.15 * 100 = 15.000000000000002 and
    // 14.999999999999998 both land on 15
    let mut sizes = quotas.map(|q| (q + RATIO_TOLERANCE).floor().max(0.0) as usize);
    let assigned: usize = sizes.iter().sum();
    let mut remaining = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..3).filter(|&i| ratios[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - sizes[a] as f64;
        let rb = quotas[b] - sizes[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut k = 0;
    while remaining > 0 && !order.is_empty() {
        sizes[order[k % order.len()]] += 1;
        remaining -= 1;
        k += 1;
    }
    sizes
}

/// Seeded shuffle of the corpus ids, cut by largest-remainder sizes.
pub fn split_corpus(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(CorpusError::InvalidSplit(format!("ratios must be non-negative: {ratios:?}")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > RATIO_TOLERANCE {
        return Err(CorpusError::InvalidSplit(format!("ratios sum to {sum}, expected 1")));
    }
    if corpus.len() < 3 && ratios.iter().all(|&r| r > 0.0) {
        return Err(CorpusError::InvalidSplit(format!(
            "corpus of {} posts cannot fill three non-empty splits",
            corpus.len()
        )));
    }

    let mut ids: Vec<&str> = corpus.ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let [n_train, n_val, _] = apportion(ids.len(), &ratios);
    let train = ids[..n_train].iter().map(|s| s.to_string()).collect();
    let validation = ids[n_train..n_train + n_val].iter().map(|s| s.to_string()).collect();
    let test = ids[n_train + n_val..].iter().map(|s| s.to_string()).collect();
    Ok(SplitAssignment { train, validation, test, seed })
}
