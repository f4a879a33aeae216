//! Brute-force reference implementations shared by the integration tests.
//! Each one is written from the definitions, without reusing library code.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use lost_core::{FeatureMap, PixelBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dot product in f64, accumulated in feature order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        s += f64::from(a[i]) * f64::from(b[i]);
    }
    s
}

/// Literal adjacency matrix `a_pq = [f_p . f_q >= 0]`.
pub fn adjacency(fm: &FeatureMap) -> Vec<Vec<bool>> {
    let n = fm.n_patches();
    let mut a = vec![vec![false; n]; n];
    for p in 0..n {
        for q in 0..n {
            a[p][q] = dot(fm.patch(p), fm.patch(q)) >= 0.0;
        }
    }
    a
}

/// Symmetrized query/key adjacency `q_p . k_q + k_p . q_q >= 0`.
pub fn sym_qk_adjacency(query: &FeatureMap, key: &FeatureMap) -> Vec<Vec<bool>> {
    let n = query.n_patches();
    let mut a = vec![vec![false; n]; n];
    for p in 0..n {
        for q in 0..n {
            let s = dot(query.patch(p), key.patch(q)) + dot(key.patch(p), query.patch(q));
            a[p][q] = s >= 0.0;
        }
    }
    a
}

/// `d_p = sum_q a_pq`.
pub fn degrees(a: &[Vec<bool>]) -> Vec<u32> {
    let mut d = vec![0u32; a.len()];
    for p in 0..a.len() {
        for q in 0..a.len() {
            if a[p][q] {
                d[p] += 1;
            }
        }
    }
    d
}

/// Union-find labelling of 4-connected set cells; components sorted
/// ascending and ordered by smallest member.
pub fn components(bits: &[bool], h: usize, w: usize) -> Vec<Vec<usize>> {
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut x = x;
        while parent[x] != r {
            let next = parent[x];
            parent[x] = r;
            x = next;
        }
        r
    }
    let n = h * w;
    let mut parent: Vec<usize> = (0..n).collect();
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if !bits[p] {
                continue;
            }
            if c + 1 < w && bits[p + 1] {
                let (a, b) = (find(&mut parent, p), find(&mut parent, p + 1));
                parent[a.max(b)] = a.min(b);
            }
            if r + 1 < h && bits[p + w] {
                let (a, b) = (find(&mut parent, p), find(&mut parent, p + w));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in 0..n {
        if bits[p] {
            let root = find(&mut parent, p);
            groups.entry(root).or_default().push(p);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|c| c[0]);
    out
}

/// Pixel box of a patch set: `(c0 P, r0 P, (c1+1) P, (r1+1) P)` clipped.
pub fn patch_box(patches: &[usize], w: usize, p: f64, image_w: f64, image_h: f64) -> PixelBox {
    let rows: Vec<usize> = patches.iter().map(|&i| i / w).collect();
    let cols: Vec<usize> = patches.iter().map(|&i| i % w).collect();
    let (r0, r1) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
    let (c0, c1) = (*cols.iter().min().unwrap(), *cols.iter().max().unwrap());
    PixelBox::new(
        (c0 as f64 * p).min(image_w),
        (r0 as f64 * p).min(image_h),
        ((c1 + 1) as f64 * p).min(image_w),
        ((r1 + 1) as f64 * p).min(image_h),
    )
}

/// Keeps the `floor(0.6 N)` largest values by fully sorting (value desc,
/// index asc) pairs.
pub fn top_fraction(values: &[f32]) -> Vec<bool> {
    let n = values.len();
    let t = (0.6 * n as f64 + 1e-9).floor() as usize;
    let mut pairs: Vec<(f32, usize)> = values.iter().copied().zip(0..).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut bits = vec![false; n];
    for &(_, i) in &pairs[..t] {
        bits[i] = true;
    }
    bits
}

/// Largest component by size; earliest-starting one on ties.
pub fn largest(components: &[Vec<usize>]) -> Option<Vec<usize>> {
    let best = components.iter().map(Vec::len).max()?;
    components.iter().find(|c| c.len() == best).cloned()
}

/// Every injective map from rows to columns of size `min(n, m)`, as
/// `row_to_col` with `None` for unassigned rows, enumerated in lexicographic
/// order (`None` after every column).
pub fn injective_maps(n: usize, m: usize) -> Vec<Vec<Option<usize>>> {
    fn go(
        row: usize,
        n: usize,
        m: usize,
        used: &mut Vec<bool>,
        nones: usize,
        cur: &mut Vec<Option<usize>>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if row == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..m {
            if !used[c] {
                used[c] = true;
                cur.push(Some(c));
                go(row + 1, n, m, used, nones, cur, out);
                cur.pop();
                used[c] = false;
            }
        }
        // rows beyond the column count must stay unassigned somewhere
        if nones > 0 {
            cur.push(None);
            go(row + 1, n, m, used, nones - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    let nones = n.saturating_sub(m);
    go(0, n, m, &mut vec![false; m], nones, &mut Vec::new(), &mut out);
    out
}

pub fn map_cost(cost: &[Vec<f64>], map: &[Option<usize>]) -> f64 {
    map.iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| cost[r][c]))
        .sum()
}

/// Lexicographically first assignment achieving the minimum cost.
pub fn brute_force_assignment(cost: &[Vec<f64>], tol: f64) -> (Vec<Option<usize>>, f64) {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    let maps = injective_maps(n, m);
    let best = maps
        .iter()
        .map(|map| map_cost(cost, map))
        .fold(f64::INFINITY, f64::min);
    let first = maps
        .into_iter()
        .find(|map| map_cost(cost, map) <= best + tol)
        .unwrap();
    (first, best)
}

/// Minimum within-cluster sum of squares over every partition of `points`
/// into exactly `k` non-empty groups.
pub fn best_partition_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    fn inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
        let dim = points[0].len();
        let mut total = 0.0;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(p, _)| p)
                .collect();
            let mean: Vec<f64> = (0..dim)
                .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
                .collect();
            for p in members {
                total += p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        total
    }
    // restricted growth strings enumerate each set partition once
    fn go(i: usize, max: usize, labels: &mut Vec<usize>, points: &[Vec<f64>], k: usize, best: &mut f64) {
        if i == points.len() {
            if max == k {
                *best = best.min(inertia(points, labels, k));
            }
            return;
        }
        for l in 0..=max.min(k - 1) {
            labels.push(l);
            go(i + 1, max.max(l + 1), labels, points, k, best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    go(0, 0, &mut Vec::new(), points, k, &mut best);
    best
}

/// Exhaustive cosine ranking: all pairs, then sort each row.
pub fn neighbor_oracle(ids: &[String], vectors: &[Vec<f32>], tau: usize) -> BTreeMap<String, Vec<String>> {
    let norm = |v: &[f32]| dot(v, v).sqrt();
    let mut out = BTreeMap::new();
    for i in 0..ids.len() {
        let mut scored: Vec<(f64, bool, &String)> = Vec::new();
        for j in 0..ids.len() {
            if i == j {
                continue;
            }
            let denom = norm(&vectors[i]) * norm(&vectors[j]);
            if denom > 0.0 {
                scored.push((dot(&vectors[i], &vectors[j]) / denom, true, &ids[j]));
            } else {
                scored.push((f64::NEG_INFINITY, false, &ids[j]));
            }
        }
        scored.sort_by(|a, b| {
            b.1.cmp(&a.1)
                .then(b.0.partial_cmp(&a.0).unwrap())
                .then(a.2.cmp(b.2))
        });
        out.insert(
            ids[i].clone(),
            scored.iter().take(tau).map(|s| s.2.clone()).collect(),
        );
    }
    out
}
