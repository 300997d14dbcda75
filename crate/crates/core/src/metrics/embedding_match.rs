use std::collections::HashMap;

use super::{Prf, Result};
use crate::grouping::{embed_texts, EmbeddingProvider};

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Greedy max-cosine token matching over provider embeddings.
///
/// Precision averages, over candidate tokens, the best similarity to any
/// reference token; recall does the reverse. Identical tokens score exactly
/// 1 and negative similarities count as 0. Either side empty gives zeros.
pub fn embedding_match_score<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    provider: &dyn EmbeddingProvider,
) -> Result<Prf> {
    if candidate.is_empty() || reference.is_empty() {
        return Ok(Prf::default());
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut vocab: Vec<String> = Vec::new();
    for t in candidate.iter().chain(reference) {
        index.entry(t.as_ref()).or_insert_with(|| {
            vocab.push(t.as_ref().to_string());
            vocab.len() - 1
        });
    }
    let vectors = embed_texts(&vocab, provider)?;
    let c: Vec<usize> = candidate.iter().map(|t| index[t.as_ref()]).collect();
    let r: Vec<usize> = reference.iter().map(|t| index[t.as_ref()]).collect();

    let mut sim = vec![vec![0.0; r.len()]; c.len()];
    for (i, &ci) in c.iter().enumerate() {
        for (j, &rj) in r.iter().enumerate() {
            sim[i][j] = if ci == rj { 1.0 } else { cosine(&vectors[ci].values, &vectors[rj].values) };
        }
    }
    let precision = sim.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).sum::<f64>() / c.len() as f64;
    let recall = (0..r.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(0.0, f64::max))
        .sum::<f64>()
        / r.len() as f64;
    Ok(Prf::new(precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouping::{hashing_embed, GroupingError, HashingProvider};
    use crate::text::tokenize;

    struct Fixed(HashMap<String, Vec<f64>>);

    impl EmbeddingProvider for Fixed {
        fn id(&self) -> &str {
            "fixed"
        }

        fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, GroupingError> {
            Ok(texts.iter().map(|t| self.0[t].clone()).collect())
        }
    }

    #[test]
    fn identical_lists_score_one() {
        let p = HashingProvider::new(64).unwrap();
        let x = tokenize("nausea then more nausea and fatigue");
        assert_eq!(embedding_match_score(&x, &x, &p).unwrap().f1, 1.0);
    }

    #[test]
    fn orthogonal_and_opposite_vectors() {
        let fixed = Fixed(HashMap::from([
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
            ("c".to_string(), vec![-1.0, 0.0]),
        ]));
        assert_eq!(embedding_match_score(&["a"], &["b"], &fixed).unwrap().f1, 0.0);
        assert_eq!(embedding_match_score(&["a"], &["c"], &fixed).unwrap().f1, 0.0);
        let p = embedding_match_score(&["a", "b"], &["a"], &fixed).unwrap();
        assert_eq!((p.precision, p.recall), (0.5, 1.0));
        assert_eq!(embedding_match_score::<&str>(&[], &["a"], &fixed).unwrap(), Prf::default());
    }

    #[test]
    fn matches_brute_force_with_hashing_provider() {
        let cand = tokenize("severe nausea with mild rash");
        let refr = tokenize("nauseous and rashes reported daily");
        let provider = HashingProvider::new(128).unwrap();
        let got = embedding_match_score(&cand, &refr, &provider).unwrap();
        let v = |t: &str| hashing_embed(t, 128).values;
        let best = |xs: &[String], ys: &[String]| {
            xs.iter()
                .map(|x| {
                    ys.iter()
                        .map(|y| if x == y { 1.0 } else { cosine(&v(x), &v(y)) })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        assert!((got.precision - best(&cand, &refr)).abs() < 1e-9);
        assert!((got.recall - best(&refr, &cand)).abs() < 1e-9);
    }
}
