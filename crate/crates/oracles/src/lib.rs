//! Reference implementations that share no code with the production crates.
//!
//! Graphs are plain adjacency data: `n` nodes, directed `(from, to)` edges, and a mask of
//! nodes that no path may pass through (fixed intervention halves).

pub mod bounds;

/// d-separation by moralizing the ancestral subgraph of `x ∪ y ∪ z`, deleting `z`, and
/// testing undirected connectivity.
pub fn moral_separated(n: usize, edges: &[(usize, usize)], blocked: &[bool], x: &[usize], y: &[usize], z: &[usize]) -> bool {
    let live: Vec<(usize, usize)> = edges.iter().copied().filter(|&(a, b)| !blocked[a] && !blocked[b]).collect();
    let mut keep = vec![false; n];
    let mut stack: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    while let Some(v) = stack.pop() {
        if keep[v] {
            continue;
        }
        keep[v] = true;
        for &(a, b) in &live {
            if b == v && !keep[a] {
                stack.push(a);
            }
        }
    }
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in &live {
        if keep[a] && keep[b] {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    }
    for c in 0..n {
        if !keep[c] {
            continue;
        }
        let parents: Vec<usize> = live.iter().filter(|&&(a, b)| b == c && keep[a]).map(|&(a, _)| a).collect();
        for &p in &parents {
            for &q in &parents {
                if p != q {
                    adj[p][q] = true;
                }
            }
        }
    }
    let mut removed = vec![false; n];
    for &v in z {
        removed[v] = true;
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = x.to_vec();
    while let Some(v) = stack.pop() {
        if seen[v] || removed[v] {
            continue;
        }
        seen[v] = true;
        if y.contains(&v) {
            return false;
        }
        for u in 0..n {
            if adj[v][u] && !seen[u] && keep[u] {
                stack.push(u);
            }
        }
    }
    true
}

/// d-separation by listing every simple path in the skeleton and checking each triple.
pub fn path_separated(n: usize, edges: &[(usize, usize)], blocked: &[bool], x: &[usize], y: &[usize], z: &[usize]) -> bool {
    let arrow = |a: usize, b: usize| edges.contains(&(a, b));
    let mut desc_in_z = vec![false; n];
    for (v, slot) in desc_in_z.iter_mut().enumerate() {
        let mut seen = vec![false; n];
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if seen[u] {
                continue;
            }
            seen[u] = true;
            if z.contains(&u) {
                *slot = true;
                break;
            }
            for &(a, b) in edges {
                if a == u && !blocked[b] {
                    stack.push(b);
                }
            }
        }
    }
    let active = |path: &[usize]| {
        path.windows(3).all(|w| {
            let (a, b, c) = (w[0], w[1], w[2]);
            if arrow(a, b) && arrow(c, b) {
                desc_in_z[b]
            } else {
                !z.contains(&b)
            }
        })
    };
    fn walk(
        v: usize,
        path: &mut Vec<usize>,
        n: usize,
        edges: &[(usize, usize)],
        blocked: &[bool],
        y: &[usize],
        active: &dyn Fn(&[usize]) -> bool,
    ) -> bool {
        if y.contains(&v) && path.len() > 1 {
            return active(path);
        }
        for u in 0..n {
            if blocked[u] || path.contains(&u) {
                continue;
            }
            if edges.contains(&(v, u)) || edges.contains(&(u, v)) {
                path.push(u);
                if walk(u, path, n, edges, blocked, y, active) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }
    for &s in x {
        let mut path = vec![s];
        if walk(s, &mut path, n, edges, blocked, y, &active) {
            return false;
        }
    }
    true
}

/// Seeded random DAG: edges `i -> j` for `i < j` under a random relabelling, each with
/// probability `p`. Uses a local xorshift so it stays independent of any RNG crate.
pub fn random_dag(seed: u64, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (next() * (i + 1) as f64) as usize;
        perm.swap(i, j.min(i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if next() < p {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collider_and_chain() {
        let collider = [(0, 2), (1, 2)];
        let free = [false; 3];
        assert!(moral_separated(3, &collider, &free, &[0], &[1], &[]));
        assert!(!moral_separated(3, &collider, &free, &[0], &[1], &[2]));
        assert!(path_separated(3, &collider, &free, &[0], &[1], &[]));
        assert!(!path_separated(3, &collider, &free, &[0], &[1], &[2]));
        let chain = [(0, 1), (1, 2)];
        assert!(moral_separated(3, &chain, &free, &[0], &[2], &[1]));
        assert!(path_separated(3, &chain, &free, &[0], &[2], &[1]));
    }

    #[test]
    fn oracles_agree_on_random_graphs() {
        for seed in 0..200 {
            let edges = random_dag(seed, 6, 0.35);
            let free = [false; 6];
            for z in [vec![], vec![2], vec![2, 3]] {
                assert_eq!(
                    moral_separated(6, &edges, &free, &[0], &[1], &z),
                    path_separated(6, &edges, &free, &[0], &[1], &z),
                    "seed {seed} z {z:?}"
                );
            }
        }
    }
}
