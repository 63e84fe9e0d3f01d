mod common;

use std::collections::BTreeSet;

use common::Mesh;
use sitan_core::{NodeEvent, NodeId};

fn sinks(mesh: &Mesh) -> Vec<(NodeId, u64, Vec<NodeId>)> {
    mesh.events
        .iter()
        .filter_map(|(n, t, e)| match e {
            NodeEvent::SinkFormed(s) => Some((*n, *t, s.members.clone())),
            _ => None,
        })
        .collect()
}

fn start(mesh: &mut Mesh) {
    for i in 0..mesh.nodes.len() {
        mesh.call(i, |node, now| ((), node.start_membership(now)));
    }
}

#[test]
fn clique_forms_one_sink() {
    let mut mesh = Mesh::with_adjacency(
        (0..5).map(|i| (0..5).map(|j| i != j).collect()).collect(),
        1,
        3,
        false,
    );
    start(&mut mesh);
    assert!(mesh.run(10_000, |m| sinks(m).len() == 5));
    let views: BTreeSet<_> = sinks(&mesh).into_iter().map(|s| s.2).collect();
    assert_eq!(views.len(), 1);
    assert_eq!(views.into_iter().next().unwrap().len(), 5);
    for node in &mesh.nodes {
        assert_eq!(node.group().unwrap().n(), 5);
    }
}

#[test]
fn sink_excludes_poorly_connected_node() {
    // 0..4 form a clique; 4 only hears 0.
    let mut adj = vec![vec![false; 5]; 5];
    for i in 0..4 {
        for j in 0..4 {
            adj[i][j] = i != j;
        }
    }
    adj[0][4] = true;
    adj[4][0] = true;
    let mut mesh = Mesh::with_adjacency(adj, 1, 4, false);
    start(&mut mesh);
    assert!(mesh.run(10_000, |m| sinks(m).iter().filter(|s| s.0 .0 < 4).count() == 4));
    for (_, _, members) in sinks(&mesh) {
        assert_eq!(members, (0..4).map(NodeId).collect::<Vec<_>>());
    }
}

#[test]
fn crashed_member_expires_after_five_intervals() {
    let n = 6;
    let mut mesh = Mesh::with_adjacency(
        (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect(),
        1,
        5,
        false,
    );
    start(&mut mesh);
    assert!(mesh.run(10_000, |m| sinks(m).len() == n));
    let crash_at = mesh.now();
    mesh.down.insert(5);
    let interval = mesh.nodes[0].config().membership.heartbeat_interval;
    mesh.run(crash_at + 20 * interval, |_| false);
    let removed: Vec<u64> = mesh
        .events
        .iter()
        .filter(|(_, _, e)| *e == NodeEvent::NeighborRemoved(NodeId(5)))
        .map(|(_, t, _)| *t)
        .collect();
    assert_eq!(removed.len(), n - 1);
    assert!(removed.iter().all(|t| *t >= crash_at + 4 * interval && *t <= crash_at + 7 * interval));
    let later: Vec<_> = sinks(&mesh).into_iter().filter(|s| s.1 > crash_at).collect();
    assert!(later.len() >= n - 1);
    for (_, _, members) in later {
        assert!(!members.contains(&NodeId(5)));
        assert_eq!(members.len(), 5);
    }
}
