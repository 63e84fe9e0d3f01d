mod common;

use std::collections::BTreeSet;

use common::Mesh;
use proptest::prelude::*;
use sitan_core::consensus::vector::{check_entry, decode_row, filled};
use sitan_core::consensus::decode_mv_outcome;
use sitan_core::{Error, InstanceId, KeyDirectory, NodeId, Proposal, ProtocolTag};

fn propose_all(mesh: &mut Mesh, label: &str, props: &[Proposal], skip: &BTreeSet<usize>) {
    for (i, p) in props.iter().enumerate() {
        if skip.contains(&i) {
            continue;
        }
        let p = p.clone();
        mesh.call(i, |node, now| {
            let (_, out) = node.propose(now, label, p).unwrap();
            ((), out)
        });
    }
}

fn run_to_decision(mesh: &mut Mesh, label: &str, expect: usize) {
    let label = label.to_string();
    let done = mesh.run(20_000, |m| m.decisions(&label).len() >= expect);
    assert!(done, "only {} of {expect} decided", mesh.decisions(&label).len());
}

#[test]
fn unanimous_binary_decides_in_first_round() {
    for n in 4..=7 {
        let f = (n - 1) / 3;
        let mut mesh = Mesh::complete(n, f, 1);
        let props = vec![Proposal::Binary(true); n];
        propose_all(&mut mesh, "b", &props, &BTreeSet::new());
        run_to_decision(&mut mesh, "b", n);
        for (_, v, round) in mesh.decisions("b") {
            assert_eq!(v, vec![1]);
            assert_eq!(round, 1);
        }
    }
}

#[test]
fn silent_member_does_not_block_the_quorum() {
    let mut mesh = Mesh::complete(4, 1, 2);
    mesh.down.insert(3);
    let props: Vec<_> = (0..4).map(|i| Proposal::Binary(i % 2 == 1)).collect();
    propose_all(&mut mesh, "b", &props, &BTreeSet::from([3]));
    run_to_decision(&mut mesh, "b", 3);
    let values: BTreeSet<_> = mesh.decisions("b").into_iter().map(|d| d.1).collect();
    assert_eq!(values.len(), 1);
}

#[test]
fn multivalued_divergent_decides_a_proposal_or_bottom() {
    let proposals: Vec<Vec<u8>> = ["a", "b", "c", "d"].iter().map(|s| s.as_bytes().to_vec()).collect();
    let mut mesh = Mesh::complete(4, 1, 3);
    let props: Vec<_> = proposals.iter().cloned().map(Proposal::Multivalued).collect();
    propose_all(&mut mesh, "m", &props, &BTreeSet::new());
    run_to_decision(&mut mesh, "m", 4);
    let values: BTreeSet<_> = mesh.decisions("m").into_iter().map(|d| d.1).collect();
    assert_eq!(values.len(), 1);
    let v = decode_mv_outcome(values.iter().next().unwrap()).unwrap();
    if let Some(v) = v {
        assert!(proposals.contains(&v));
    }
}

#[test]
fn multivalued_unanimous_decides_the_value() {
    let mut mesh = Mesh::complete(7, 2, 4);
    let props = vec![Proposal::Multivalued(b"same".to_vec()); 7];
    propose_all(&mut mesh, "m", &props, &BTreeSet::new());
    run_to_decision(&mut mesh, "m", 7);
    for (_, v, _) in mesh.decisions("m") {
        assert_eq!(decode_mv_outcome(&v).unwrap(), Some(b"same".to_vec()));
    }
}

#[test]
fn vector_row_has_quorum_of_signed_entries() {
    let (_, dir) = KeyDirectory::simulated(4, 5);
    let mut mesh = Mesh::complete(4, 1, 5);
    let proposals: Vec<Vec<u8>> = ["a", "b", "c", "d"].iter().map(|s| s.as_bytes().to_vec()).collect();
    let props: Vec<_> = proposals.iter().cloned().map(Proposal::Vector).collect();
    propose_all(&mut mesh, "v", &props, &BTreeSet::new());
    run_to_decision(&mut mesh, "v", 4);
    let values: BTreeSet<_> = mesh.decisions("v").into_iter().map(|d| d.1).collect();
    assert_eq!(values.len(), 1);
    let row = decode_row(values.iter().next().unwrap()).unwrap();
    assert_eq!(row.len(), 4);
    assert_eq!(filled(&row), 3);
    let vid = InstanceId::new("v", ProtocolTag::Vector);
    for (k, e) in row.iter().enumerate() {
        if let Some((v, sig)) = e {
            assert_eq!(v, &proposals[k]);
            assert!(check_entry(&dir, &vid, NodeId(k as u32), v, sig));
        }
    }
}

#[test]
fn instances_run_side_by_side() {
    let mut mesh = Mesh::complete(4, 1, 6);
    propose_all(&mut mesh, "x", &vec![Proposal::Binary(false); 4], &BTreeSet::new());
    propose_all(&mut mesh, "y", &vec![Proposal::Multivalued(b"q".to_vec()); 4], &BTreeSet::new());
    let done = mesh.run(20_000, |m| m.decisions("x").len() == 4 && m.decisions("y").len() == 4);
    assert!(done);
    assert!(mesh.decisions("x").iter().all(|d| d.1 == vec![0]));
    let id = InstanceId::new("y", ProtocolTag::Multivalued);
    for node in &mesh.nodes {
        assert!(node.decision(&id).is_some());
    }
}

#[test]
fn propose_errors() {
    let mut mesh = Mesh::complete(4, 1, 7);
    let node = &mut mesh.nodes[0];
    node.propose(0, "a", Proposal::Binary(true)).unwrap();
    assert!(matches!(
        node.propose(0, "a", Proposal::Binary(true)),
        Err(Error::DuplicateInstance(_))
    ));
    let big = vec![0u8; sitan_core::consensus::MAX_PROPOSAL + 1];
    assert!(matches!(
        node.propose(0, "b", Proposal::Multivalued(big)),
        Err(Error::ProposalTooLarge { .. })
    ));
    let mut lone = Mesh::with_adjacency(vec![vec![false]], 0, 1, false);
    assert!(matches!(
        lone.nodes[0].propose(0, "c", Proposal::Binary(true)),
        Err(Error::NoGroup)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_agreement_and_validity(n in 4usize..=7, seed in any::<u64>(), bits in prop::collection::vec(any::<bool>(), 7)) {
        let f = (n - 1) / 3;
        let mut mesh = Mesh::complete(n, f, seed);
        let props: Vec<_> = bits[..n].iter().map(|b| Proposal::Binary(*b)).collect();
        propose_all(&mut mesh, "b", &props, &BTreeSet::new());
        run_to_decision(&mut mesh, "b", n);
        let values: BTreeSet<_> = mesh.decisions("b").into_iter().map(|d| d.1).collect();
        prop_assert_eq!(values.len(), 1);
        let v = values.into_iter().next().unwrap();
        let proposed: BTreeSet<u8> = bits[..n].iter().map(|b| *b as u8).collect();
        prop_assert!(proposed.contains(&v[0]));
    }

    #[test]
    fn multivalued_never_invents(n in 4usize..=7, seed in any::<u64>(), picks in prop::collection::vec(0u8..3, 7)) {
        let f = (n - 1) / 3;
        let mut mesh = Mesh::complete(n, f, seed);
        let props: Vec<_> = picks[..n].iter().map(|p| Proposal::Multivalued(vec![*p])).collect();
        propose_all(&mut mesh, "m", &props, &BTreeSet::new());
        run_to_decision(&mut mesh, "m", n);
        let values: BTreeSet<_> = mesh.decisions("m").into_iter().map(|d| d.1).collect();
        prop_assert_eq!(values.len(), 1);
        if let Some(v) = decode_mv_outcome(values.iter().next().unwrap()).unwrap() {
            prop_assert!(picks[..n].contains(&v[0]));
        }
    }
}
