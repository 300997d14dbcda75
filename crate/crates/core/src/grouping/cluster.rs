use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GroupingError, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.4;

/// Inter-cluster distance used by agglomerative clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    #[default]
    Average,
    Complete,
}

impl Linkage {
    pub fn as_str(self) -> &'static str {
        match self {
            Linkage::Single => "single",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(Linkage::Single),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage `{other}`")),
        }
    }
}

/// `1 − cos(a, b)` clamped to `[0, 2]`; values within 1e-12 of zero snap
/// to exactly zero so identical directions always tie.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d = (1.0 - dot / (na * nb)).clamp(0.0, 2.0);
    if d < 1e-12 {
        0.0
    } else {
        d
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Candidate merge `(distance, lower id, higher id)`; compared lexicographically.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    d: f64,
    lo: usize,
    hi: usize,
}

impl Candidate {
    fn new(d: f64, a: usize, b: usize) -> Self {
        Candidate { d, lo: a.min(b), hi: a.max(b) }
    }

    fn better_than(&self, other: &Candidate) -> bool {
        self.d.total_cmp(&other.d).then(self.lo.cmp(&other.lo)).then(self.hi.cmp(&other.hi)) == Ordering::Less
    }
}

/// Agglomerative clustering on cosine distance.
///
/// Clusters merge while the closest pair is within `threshold`. Inputs are
/// first put in a canonical order by vector content, and equal distances
/// merge the pair with the smallest (min-index, max-index) in that order,
/// so the partition does not depend on input order. Returns member index
/// sets, each sorted, ordered by smallest member.
pub fn hierarchical_cluster<V: AsRef<[f64]>>(
    vectors: &[V],
    linkage: Linkage,
    threshold: f64,
) -> Result<Vec<Vec<usize>>> {
    if !(0.0..=2.0).contains(&threshold) {
        return Err(GroupingError::InvalidThreshold(threshold));
    }
    let n = vectors.len();
    if n == 0 {
        return Err(GroupingError::InvalidInput("no vectors to cluster".into()));
    }
    let dim = vectors[0].as_ref().len();
    for (i, v) in vectors.iter().enumerate() {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(GroupingError::Dimension(format!("vector {i} has dim {}, expected {dim}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GroupingError::InvalidVector { index: i, reason: "non-finite entry".into() });
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(GroupingError::InvalidVector { index: i, reason: "zero vector".into() });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(vectors[a].as_ref(), vectors[b].as_ref()).then(a.cmp(&b)));

    // dist[i][j] between canonical positions; a merged cluster keeps the
    // lower position as its id, which is always its smallest member.
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(vectors[order[i]].as_ref(), vectors[order[j]].as_ref());
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    let nearest = |i: usize, dist: &[Vec<f64>], active: &[bool]| -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for j in (0..n).filter(|&j| j != i && active[j]) {
            let c = Candidate::new(dist[i][j], i, j);
            if best.is_none_or(|b| c.better_than(&b)) {
                best = Some(c);
            }
        }
        best
    };
    let mut nn: Vec<Option<Candidate>> = (0..n).map(|i| nearest(i, &dist, &active)).collect();

    loop {
        let mut best: Option<Candidate> = None;
        for c in nn.iter().enumerate().filter(|(i, _)| active[*i]).filter_map(|(_, c)| *c) {
            if best.is_none_or(|b| c.better_than(&b)) {
                best = Some(c);
            }
        }
        let Some(Candidate { d, lo: a, hi: b }) = best else { break };
        if d > threshold {
            break;
        }

        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let merged = match linkage {
                Linkage::Single => dist[a][k].min(dist[b][k]),
                Linkage::Complete => dist[a][k].max(dist[b][k]),
                Linkage::Average => {
                    (size[a] as f64 * dist[a][k] + size[b] as f64 * dist[b][k]) / (size[a] + size[b]) as f64
                }
            };
            dist[a][k] = merged;
            dist[k][a] = merged;
        }
        active[b] = false;
        size[a] += size[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        nn[b] = None;

        for k in (0..n).filter(|&k| active[k]) {
            let stale = match nn[k] {
                Some(c) => k == a || c.lo == a || c.hi == a || c.lo == b || c.hi == b,
                None => true,
            };
            if stale {
                nn[k] = nearest(k, &dist, &active);
            } else {
                let c = Candidate::new(dist[k][a], k, a);
                if nn[k].is_some_and(|cur| c.better_than(&cur)) {
                    nn[k] = Some(c);
                }
            }
        }
    }

    let mut out: Vec<Vec<usize>> = members
        .into_iter()
        .zip(&active)
        .filter(|(_, &alive)| alive)
        .map(|(m, _)| {
            let mut idx: Vec<usize> = m.into_iter().map(|p| order[p]).collect();
            idx.sort_unstable();
            idx
        })
        .collect();
    out.sort_by_key(|c| c[0]);
    Ok(out)
}
