use std::collections::HashMap;

use super::Prf;

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

fn clipped_overlap(cand: &HashMap<Vec<&str>, usize>, reference: &HashMap<Vec<&str>, usize>) -> usize {
    cand.iter().map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0))).sum()
}

/// ROUGE-N with clipped n-gram counts. Zero when either side has no n-grams.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> Prf {
    assert!(n >= 1, "ROUGE order must be at least 1");
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let (c_total, r_total): (usize, usize) = (c.values().sum(), r.values().sum());
    if c_total == 0 || r_total == 0 {
        return Prf::default();
    }
    let hit = clipped_overlap(&c, &r) as f64;
    Prf::new(hit / c_total as f64, hit / r_total as f64)
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// ROUGE-L: LCS over candidate and reference lengths.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Prf {
    if candidate.is_empty() || reference.is_empty() {
        return Prf::default();
    }
    let c: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let l = lcs_len(&c, &r) as f64;
    Prf::new(l / c.len() as f64, l / r.len() as f64)
}

/// BLEU-1 through BLEU-`max_n`.
///
/// Entry `k − 1` is the geometric mean of modified precisions of orders
/// `1..=k` times the brevity penalty. The reference length is the one
/// closest to the candidate length, preferring the shorter on ties. With
/// `smoothing`, orders of 2 and above use add-one counts.
pub fn bleu<T: AsRef<str>>(candidate: &[T], references: &[Vec<T>], max_n: usize, smoothing: bool) -> Vec<f64> {
    assert!(max_n >= 1, "BLEU order must be at least 1");
    let c_len = candidate.len();
    if c_len == 0 || references.is_empty() {
        return vec![0.0; max_n];
    }
    let r_len = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c_len), r))
        .unwrap_or(0);
    let bp = if c_len < r_len { (1.0 - r_len as f64 / c_len as f64).exp() } else { 1.0 };

    let mut scores = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 1..=max_n {
        let cand = ngram_counts(candidate, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in references {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let total: usize = cand.values().sum();
        let hit = clipped_overlap(&cand, &max_ref);
        let (num, den) = if smoothing && n >= 2 { (hit + 1, total + 1) } else { (hit, total) };
        if num == 0 || den == 0 {
            zero = true;
        } else {
            log_sum += (num as f64 / den as f64).ln();
        }
        scores.push(if zero { 0.0 } else { bp * (log_sum / n as f64).exp() });
    }
    scores
}

/// METEOR over exact unigram matches.
///
/// Candidate tokens are aligned left to right to the first unused equal
/// reference token. `F = 10PR / (R + 9P)`, penalty `0.5 · (chunks/m)³`.
pub fn meteor<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    let mut used = vec![false; reference.len()];
    let mut alignment: Vec<usize> = Vec::new();
    for c in candidate {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && reference[j].as_ref() == c.as_ref()) {
            used[j] = true;
            alignment.push(j);
        }
    }
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let chunks = 1 + alignment.windows(2).filter(|w| w[1] != w[0] + 1).count();
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}
