//! Transportation simplex on a spanning-tree basis.
//!
//! The basis always holds `n + m - 1` cells (degenerate zero-flow cells
//! included) forming a spanning tree of the bipartite row/column graph.
//! Dantzig pricing is used until a run of degenerate pivots is observed, after
//! which Bland's rule takes over to rule out cycling.

use std::collections::VecDeque;

use crate::error::{Error, Result};

pub(crate) fn solve(supply: &[f64], demand: &[f64], costs: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (supply.len(), demand.len());
    debug_assert_eq!(costs.len(), n * m);

    let mut flow = vec![0.0f64; n * m];
    let mut basic = vec![false; n * m];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);

    // Northwest corner start.
    let mut rem_s = supply.to_vec();
    let mut rem_d = demand.to_vec();
    let (mut i, mut j) = (0usize, 0usize);
    loop {
        let x = rem_s[i].min(rem_d[j]).max(0.0);
        flow[i * m + j] = x;
        basic[i * m + j] = true;
        basis.push((i, j));
        rem_s[i] -= x;
        rem_d[j] -= x;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || rem_s[i] <= rem_d[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);

    let scale = costs.iter().fold(1.0f64, |acc, c| acc.max(c.abs()));
    let tol = 1e-12 * scale;
    let max_pivots = 50 * n * m + 1000;

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; m];
    let mut degenerate_run = 0usize;

    for _ in 0..max_pivots {
        let adj = adjacency(n, m, &basis);
        potentials(n, m, costs, &adj, &basis, &mut u, &mut v);

        let bland = degenerate_run > n + m;
        let mut entering = None;
        let mut best = -tol;
        'scan: for r in 0..n {
            for c in 0..m {
                if basic[r * m + c] {
                    continue;
                }
                let reduced = costs[r * m + c] - u[r] - v[c];
                if reduced < best {
                    entering = Some((r, c));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((r0, c0)) = entering else {
            return Ok(flow);
        };

        // Tree path from row r0 to column c0; together with (r0, c0) it closes the cycle.
        let path = tree_path(&adj, r0, n + c0);
        // path holds basis indices in order starting at row r0; signs alternate -, +, -, ...
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &b) in path.iter().enumerate() {
            if k % 2 == 0 {
                let (r, c) = basis[b];
                let x = flow[r * m + c];
                let better = x < theta || (x == theta && bland && leave != usize::MAX && basis[b] < basis[leave]);
                if better {
                    theta = x;
                    leave = b;
                }
            }
        }
        debug_assert!(leave != usize::MAX);
        theta = theta.max(0.0);
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };

        for (k, &b) in path.iter().enumerate() {
            let (r, c) = basis[b];
            let cell = &mut flow[r * m + c];
            if k % 2 == 0 {
                *cell = (*cell - theta).max(0.0);
            } else {
                *cell += theta;
            }
        }
        flow[r0 * m + c0] = theta;

        let (lr, lc) = basis[leave];
        flow[lr * m + lc] = 0.0;
        basic[lr * m + lc] = false;
        basic[r0 * m + c0] = true;
        basis[leave] = (r0, c0);
    }
    Err(Error::SolverStalled(max_pivots))
}

/// Node ids: rows `0..n`, columns `n..n+m`. Each entry lists (neighbor, basis index).
fn adjacency(n: usize, m: usize, basis: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n + m];
    for (b, &(r, c)) in basis.iter().enumerate() {
        adj[r].push((n + c, b));
        adj[n + c].push((r, b));
    }
    adj
}

fn potentials(
    n: usize,
    m: usize,
    costs: &[f64],
    adj: &[Vec<(usize, usize)>],
    basis: &[(usize, usize)],
    u: &mut [f64],
    v: &mut [f64],
) {
    let mut seen = vec![false; n + m];
    let mut queue = VecDeque::new();
    u[0] = 0.0;
    seen[0] = true;
    queue.push_back(0usize);
    while let Some(node) = queue.pop_front() {
        for &(next, b) in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            let (r, c) = basis[b];
            let cost = costs[r * m + c];
            if next >= n {
                v[next - n] = cost - u[node];
            } else {
                u[next] = cost - v[node - n];
            }
            queue.push_back(next);
        }
    }
    debug_assert!(seen.iter().all(|&s| s), "basis is not spanning");
}

/// Basis indices along the unique tree path from `from` to `to`, in order.
fn tree_path(adj: &[Vec<(usize, usize)>], from: usize, to: usize) -> Vec<usize> {
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::new();
    seen[from] = true;
    queue.push_back(from);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &(next, b) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, b));
                queue.push_back(next);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = to;
    while let Some((prev, b)) = parent[node] {
        path.push(b);
        node = prev;
    }
    path.reverse();
    path
}
