use std::collections::HashSet;
use std::hash::Hash;

/// `|a ∩ b| / |a ∪ b|`; two empty sets score 1.
pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Character mismatches position by position, with every position past the
/// end of the shorter string counted as a mismatch.
pub fn hamming_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let common = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    common + a.len().abs_diff(b.len())
}

/// Leftmost longest common substring of `a` and `b`: `(i, j, len)`.
fn longest_common(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            cur[j + 1] = if a[i] == b[j] { prev[j] + 1 } else { 0 };
            if cur[j + 1] > best.2 {
                best = (i + 1 - cur[j + 1], j + 1 - cur[j + 1], cur[j + 1]);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

fn matched(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let (i, j, k) = longest_common(a, b);
    if k == 0 {
        return 0;
    }
    k + matched(&a[..i], &b[..j]) + matched(&a[i + k..], &b[j + k..])
}

/// Ratcliff-Obershelp (gestalt) similarity `2M / (|a| + |b|)`.
///
/// `M` counts characters matched by taking a longest common substring and
/// recursing on both sides of it. Ties go to the placement found first when
/// scanning the first argument; `M` is the larger of the two argument
/// orders, which makes the score symmetric. Two empty strings score 1.
pub fn ratcliff_obershelp(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let m = matched(&a, &b).max(matched(&b, &a));
    2.0 * m as f64 / total as f64
}
