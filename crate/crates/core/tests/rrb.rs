//! Reachable reliable broadcast against a disjoint-path oracle.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use proptest::prelude::*;
use sitan_core::comm::{CommConfig, CommLayer, Via};
use sitan_core::{KeyDirectory, NodeId, Verifier};

/// Broadcasts one message from node 0 and reports which nodes deliver.
fn broadcast(adj: &[Vec<bool>], silent: &BTreeSet<usize>, f: usize) -> Vec<bool> {
    let n = adj.len();
    let (keys, dir) = KeyDirectory::simulated(n, 11);
    let dir: Arc<dyn Verifier> = Arc::new(dir);
    let mut layers: Vec<CommLayer> = keys
        .into_iter()
        .map(|k| CommLayer::new(k, dir.clone(), CommConfig { f, ..CommConfig::default() }))
        .collect();
    let all: BTreeSet<NodeId> = (0..n as u32).map(NodeId).collect();
    layers[0].rrb_broadcast(0, b"payload", &[], &all);
    let mut delivered = vec![false; n];
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    let mut now = 0;
    let mut pending = vec![0usize];
    loop {
        for i in pending.drain(..) {
            for t in layers[i].drain_outbox() {
                for j in (0..n).filter(|j| adj[i][*j]) {
                    seq += 1;
                    queue.push(Reverse((now + 1, seq, j, t.bytes.clone())));
                }
            }
        }
        let tick = (0..n)
            .filter(|i| !silent.contains(i))
            .filter_map(|i| layers[i].next_wakeup(now))
            .min();
        let next = match (queue.peek().map(|Reverse(e)| e.0), tick) {
            (Some(a), Some(b)) => a.min(b),
            (a, b) => match a.or(b) {
                Some(t) => t,
                None => break,
            },
        };
        if next > 300 {
            break;
        }
        now = next;
        while queue.peek().is_some_and(|Reverse(e)| e.0 == now) {
            let Reverse((_, _, j, bytes)) = queue.pop().unwrap();
            if silent.contains(&j) {
                continue;
            }
            if let Some(d) = layers[j].on_receive(now, &bytes) {
                assert_eq!(d.payload, b"payload");
                if d.via == Via::Rrb {
                    delivered[j] = true;
                }
            }
            pending.push(j);
        }
        for i in 0..n {
            if !silent.contains(&i) && layers[i].next_wakeup(now).is_some_and(|w| w <= now) {
                layers[i].on_tick(now);
                pending.push(i);
            }
        }
    }
    delivered
}

/// Maximum number of node-disjoint paths 0 -> v avoiding `silent` relays,
/// by enumerating simple paths and searching for the largest disjoint set.
fn disjoint_paths(adj: &[Vec<bool>], silent: &BTreeSet<usize>, v: usize) -> usize {
    fn walk(adj: &[Vec<bool>], silent: &BTreeSet<usize>, at: usize, v: usize, used: u64, out: &mut Vec<u64>) {
        for w in 0..adj.len() {
            if !adj[at][w] || w == 0 || used & (1 << w) != 0 {
                continue;
            }
            if w == v {
                out.push(used);
            } else if !silent.contains(&w) {
                walk(adj, silent, w, v, used | (1 << w), out);
            }
        }
    }
    fn best(paths: &[u64], i: usize, taken: u64, direct: bool) -> usize {
        if i == paths.len() {
            return 0;
        }
        let skip = best(paths, i + 1, taken, direct);
        let p = paths[i];
        let fits = if p == 0 { !direct } else { p & taken == 0 };
        if fits {
            skip.max(1 + best(paths, i + 1, taken | p, direct || p == 0))
        } else {
            skip
        }
    }
    let mut paths = Vec::new();
    walk(adj, silent, 0, v, 0, &mut paths);
    best(&paths, 0, 0, false)
}

fn graph(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in edges {
        adj[*a][*b] = true;
        adj[*b][*a] = true;
    }
    adj
}

#[test]
fn complete_graph_delivers_everywhere() {
    let adj = graph(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    let got = broadcast(&adj, &BTreeSet::new(), 1);
    assert_eq!(got, vec![false, true, true, true]);
}

#[test]
fn line_does_not_deliver() {
    let adj = graph(3, &[(0, 1), (1, 2)]);
    let got = broadcast(&adj, &BTreeSet::new(), 1);
    assert_eq!(got, vec![false, false, false]);
}

#[test]
fn relay_choice_does_not_block_disjoint_paths() {
    // 0-3-2 and 0-5-1-4-2 are disjoint; 1 also hears 0 through 3.
    let adj = graph(6, &[(0, 3), (0, 5), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4)]);
    let got = broadcast(&adj, &BTreeSet::new(), 1);
    assert!(got[2]);
}

fn connected(adj: &[Vec<bool>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(x) = stack.pop() {
        for y in 0..adj.len() {
            if adj[x][y] && !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen.iter().all(|s| *s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn delivery_matches_oracle(n in 3usize..=7, mask in any::<u32>(), silent in 0usize..8) {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let edges: Vec<_> = pairs.iter().enumerate().filter(|(k, _)| mask >> (k % 32) & 1 == 1).map(|(_, e)| *e).collect();
        let adj = graph(n, &edges);
        prop_assume!(connected(&adj));
        let silent: BTreeSet<usize> = (silent >= 1 && silent < n).then_some(silent).into_iter().collect();
        let got = broadcast(&adj, &silent, 1);
        for v in 1..n {
            if silent.contains(&v) {
                continue;
            }
            prop_assert_eq!(got[v], disjoint_paths(&adj, &silent, v) >= 2, "node {}", v);
        }
    }
}
