//! Experiment runner: builds a simulated network from a scenario, runs
//! seeded trials and turns their traces into metrics and verdicts.

pub mod config;
pub mod emit;
pub mod stats;
pub mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use sitan_core::{
    InstanceId, KeyDirectory, Node, NodeConfig, NodeId, Proposal, ProtocolTag, SimTime, Verifier,
};

use crate::adversary::{perturb_network, Byzantine, Peer};
use crate::audit::{audit, AuditContext, Report};
use crate::netsim::{SimConfig, SimStats, Simulator, TraceLevel};
use crate::trace::{Entry, Record};
pub use config::{ConfigError, Proposals, Protocol, ScenarioConfig, SinkMode, TraceMode};

/// Upper-layer messages that belong to membership rather than consensus.
pub const MEMBERSHIP_MSGS: [&str; 4] = ["HEARTBEAT", "GET_NEIGHBORS", "SET_NEIGHBORS", "KNOWN_SET"];

/// Simulated time allowed for discovery and sink formation.
pub const MEMBERSHIP_BUDGET: SimTime = 10_000;

/// The seed of trial `trial`.
pub fn trial_seed(cfg: &ScenarioConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

/// What node `id` proposes.
pub fn proposal_for(protocol: ProtocolTag, mode: Proposals, id: NodeId) -> Proposal {
    let odd = id.0 % 2 == 1;
    match (protocol, mode) {
        (ProtocolTag::Binary, Proposals::Unanimous) => Proposal::Binary(true),
        (ProtocolTag::Binary, Proposals::Divergent) => Proposal::Binary(odd),
        (ProtocolTag::Multivalued, Proposals::Unanimous) => Proposal::Multivalued(b"v".to_vec()),
        (ProtocolTag::Multivalued, Proposals::Divergent) => {
            Proposal::Multivalued(format!("v{}", id.0).into_bytes())
        }
        (_, Proposals::Unanimous) => Proposal::Vector(b"v".to_vec()),
        (_, Proposals::Divergent) => Proposal::Vector(format!("v{}", id.0).into_bytes()),
    }
}

fn instances_for(protocol: Protocol) -> Vec<ProtocolTag> {
    match protocol {
        Protocol::Binary => vec![ProtocolTag::Binary],
        Protocol::Multivalued => vec![ProtocolTag::Multivalued],
        Protocol::Vector => vec![ProtocolTag::Vector],
        Protocol::FullStackBootstrap => vec![
            ProtocolTag::Binary,
            ProtocolTag::Multivalued,
            ProtocolTag::Vector,
        ],
    }
}

fn label_for(tag: ProtocolTag) -> &'static str {
    match tag {
        ProtocolTag::Binary => "bin",
        ProtocolTag::Multivalued => "mv",
        _ => "vec",
    }
}

/// A network ready to run: the simulator, the key directory and which
/// nodes are Byzantine.
pub struct Network {
    pub sim: Simulator<Peer>,
    pub keys: KeyDirectory,
    pub byzantine: BTreeSet<NodeId>,
    pub seed: u64,
}

impl Network {
    pub fn correct(&self) -> BTreeSet<NodeId> {
        (0..self.sim.len() as u32)
            .map(NodeId)
            .filter(|n| !self.byzantine.contains(n))
            .collect()
    }
}

/// Builds the nodes and simulator of one trial.
pub fn build_network(cfg: &ScenarioConfig, seed: u64) -> Network {
    let n = cfg.n;
    let f = cfg.f();
    let (keys, dir) = KeyDirectory::simulated(n, seed);
    let verifier: Arc<dyn Verifier> = Arc::new(dir.clone());
    let all: Vec<NodeId> = (0..n as u32).map(NodeId).collect();
    let byzantine: BTreeSet<NodeId> = cfg
        .adversary
        .as_ref()
        .map(|a| a.byzantine(&all, f).into_iter().collect())
        .unwrap_or_default();
    let peers: Vec<Peer> = keys
        .into_iter()
        .map(|k| {
            let mut nc = NodeConfig::default().with_f(f);
            nc.seed = seed ^ (u64::from(k.node().0) << 40) ^ 0x5eed;
            nc.membership.sink_cap = cfg.sink_cap;
            nc.comm.max_forwards = cfg.rrb_forwards;
            let id = k.node();
            let mut node = Node::new(k.clone(), verifier.clone(), nc);
            if cfg.sink_mode == SinkMode::AllNodes {
                node.set_static_group(all.clone(), f).expect("validated budget");
            }
            match &cfg.adversary {
                Some(spec) if byzantine.contains(&id) => Peer::Byzantine(Box::new(Byzantine::new(
                    node,
                    k,
                    verifier.clone(),
                    spec,
                    n as u32,
                    seed,
                ))),
                _ => Peer::Correct(node),
            }
        })
        .collect();
    let sim_cfg = SimConfig {
        seed,
        layout: cfg.topology.layout.clone(),
        range: cfg.topology.range,
        link: cfg.link.clone(),
        mobility: cfg.topology.mobility.clone(),
        trace: match cfg.trace {
            TraceMode::Events => TraceLevel::Events,
            TraceMode::Full => TraceLevel::Full,
        },
    };
    let mut sim = Simulator::new(sim_cfg, peers);
    if let Some(a) = &cfg.adversary {
        for ((x, y), m) in perturb_network(&a.network, n as u32) {
            sim.set_link(NodeId(x), NodeId(y), m);
        }
    }
    Network {
        sim,
        keys: dir,
        byzantine,
        seed,
    }
}

/// Starts membership everywhere and runs until every correct node has a
/// sink outcome. Returns the time that happened, if it did.
pub fn form_sink(net: &mut Network, deadline: SimTime) -> Option<SimTime> {
    for i in 0..net.sim.len() {
        net.sim.call(i, |p, now| ((), p.with_node(|n| n.start_membership(now))));
    }
    let correct = net.correct();
    let mut pending = correct.clone();
    let done = net.sim.run_until(deadline, |r| {
        if matches!(r.entry, Entry::Sink { .. } | Entry::SinkNone { .. }) {
            pending.remove(&r.node);
        }
        pending.is_empty()
    });
    done.then(|| net.sim.now())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeResult {
    pub node: NodeId,
    pub correct: bool,
    pub member: bool,
    /// Time from proposal to the node's last top-level decision.
    pub latency: Option<SimTime>,
    /// Largest round reported by the node's top-level decisions.
    pub round: Option<u32>,
    /// Result accepted as an outsider.
    pub accepted: bool,
    pub sends: u64,
    pub rejected: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub f: usize,
    pub group: Vec<NodeId>,
    pub sink_time: Option<SimTime>,
    pub proposal_time: Option<SimTime>,
    /// Every correct group member decided every instance within budget.
    pub decided: bool,
    /// Every correct outsider accepted every result.
    pub disseminated: bool,
    /// Time from proposal until the last correct member decided.
    pub decide_time: Option<SimTime>,
    pub latency_mean: Option<f64>,
    /// Largest round among correct members' decisions.
    pub rounds: Option<u32>,
    pub sends_total: u64,
    /// Consensus-layer sends (acknowledgements included) from proposal
    /// until the last correct decision.
    pub sends_consensus: u64,
    pub sends_by_msg: BTreeMap<&'static str, u64>,
    pub rejected: u64,
    pub violations: Vec<String>,
    pub audit: crate::audit::AuditStats,
    pub nodes: Vec<NodeResult>,
}

impl TrialMetrics {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// One finished trial: metrics, the trace and its header.
pub struct Trial {
    pub metrics: TrialMetrics,
    pub header: String,
    pub records: Vec<Record>,
    pub report: Report,
}

impl Trial {
    pub fn trace_text(&self) -> String {
        crate::trace::render(&self.header, &self.records)
    }
}

fn consensus_sends(a: &SimStats, b: &SimStats) -> u64 {
    b.sends_by_msg
        .iter()
        .filter(|(k, _)| !MEMBERSHIP_MSGS.contains(k))
        .map(|(k, v)| v - a.sends_by_msg.get(k).copied().unwrap_or(0))
        .sum()
}

fn nodes_csv(v: &[NodeId]) -> String {
    v.iter().map(|n| n.0.to_string()).collect::<Vec<_>>().join(",")
}

/// Header line of a trial trace. It carries what the auditor needs.
pub fn trace_header(cfg: &ScenarioConfig, trial: usize, seed: u64, net: &Network, group: Option<&[NodeId]>) -> String {
    let correct: Vec<NodeId> = net.correct().into_iter().collect();
    format!(
        "sitan-trace v1 protocol={} proposals={} sink_mode={} n={} f={} trial={} seed={} correct={} group={}",
        cfg.protocol.name(),
        cfg.proposals.name(),
        cfg.sink_mode.name(),
        cfg.n,
        cfg.f(),
        trial,
        seed,
        nodes_csv(&correct),
        group.map_or("-".to_string(), nodes_csv),
    )
}

/// Rebuilds the audit context from a trace header.
pub fn context_from_header(header: &str) -> Result<AuditContext, String> {
    let fields: BTreeMap<&str, &str> = header
        .split(' ')
        .filter_map(|kv| kv.split_once('='))
        .collect();
    let get = |k: &str| fields.get(k).copied().ok_or(format!("header lacks {k}"));
    let num = |k: &str| -> Result<u64, String> { get(k)?.parse().map_err(|_| format!("bad {k}")) };
    let list = |s: &str| -> Result<Vec<NodeId>, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|x| x.parse().map(NodeId).map_err(|_| "bad node list".to_string()))
            .collect()
    };
    let n = num("n")? as usize;
    let group = match get("group")? {
        "-" => None,
        g => Some(list(g)?),
    };
    Ok(AuditContext {
        f: num("f")? as usize,
        correct: list(get("correct")?)?.into_iter().collect(),
        group,
        keys: KeyDirectory::simulated(n, num("seed")?).1,
    })
}

/// Runs trial `trial` of a scenario.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Trial {
    let seed = trial_seed(cfg, trial);
    let mut net = build_network(cfg, seed);
    let n = cfg.n;
    let correct = net.correct();

    let needs_sink = cfg.sink_mode == SinkMode::SinkOnly || cfg.protocol == Protocol::FullStackBootstrap;
    let sink_time = if needs_sink {
        form_sink(&mut net, MEMBERSHIP_BUDGET)
    } else {
        None
    };

    // the group as seen by the correct nodes
    let views: BTreeSet<Vec<NodeId>> = correct
        .iter()
        .filter_map(|c| net.sim.host(c.0 as usize).node().group())
        .map(|g| g.members().to_vec())
        .collect();
    let group: Vec<NodeId> = views.iter().next().cloned().unwrap_or_default();
    let before = net.sim.stats.clone();
    let tags = instances_for(cfg.protocol);
    let ids: Vec<InstanceId> = tags.iter().map(|t| InstanceId::new(label_for(*t), *t)).collect();

    let proposal_time = (!group.is_empty()).then(|| net.sim.now());
    let mut proposers = BTreeSet::new();
    if proposal_time.is_some() {
        for i in 0..n {
            let id = NodeId(i as u32);
            let member = net
                .sim
                .host(i)
                .node()
                .group()
                .is_some_and(|g| g.contains(id));
            if !member {
                continue;
            }
            proposers.insert(id);
            for (tag, iid) in tags.iter().zip(&ids) {
                let p = proposal_for(*tag, cfg.proposals, id);
                net.sim.call(i, |peer, now| {
                    let outs = peer.with_node(|nd| match nd.propose(now, &iid.label, p) {
                        Ok((_, o)) => o,
                        Err(_) => Vec::new(),
                    });
                    ((), outs)
                });
            }
        }
    }

    let start = proposal_time.unwrap_or(net.sim.now());
    let deadline = start + cfg.time_budget;
    let members: BTreeSet<NodeId> = proposers.intersection(&correct).copied().collect();
    let outsiders: BTreeSet<NodeId> = correct.difference(&proposers).copied().collect();
    let mut waiting: BTreeSet<(NodeId, InstanceId)> = members
        .iter()
        .flat_map(|m| ids.iter().map(move |i| (*m, i.clone())))
        .collect();
    let mut decided_at = None;
    if proposal_time.is_some() && !waiting.is_empty() {
        let done = net.sim.run_until(deadline, |r| {
            if let Entry::Decide { instance, nested: false, .. } = &r.entry {
                waiting.remove(&(r.node, instance.clone()));
            }
            waiting.is_empty()
        });
        if done {
            decided_at = Some(net.sim.now());
        }
    }
    let after_decide = net.sim.stats.clone();

    // let results reach the outsiders
    let mut unaccepted: BTreeSet<(NodeId, InstanceId)> = outsiders
        .iter()
        .flat_map(|m| ids.iter().map(move |i| (*m, i.clone())))
        .collect();
    for r in net.sim.trace() {
        if let Entry::Accept { instance, .. } = &r.entry {
            unaccepted.remove(&(r.node, instance.clone()));
        }
    }
    let mut disseminated = unaccepted.is_empty();
    if decided_at.is_some() && !disseminated {
        disseminated = net.sim.run_until(deadline, |r| {
            if let Entry::Accept { instance, .. } = &r.entry {
                unaccepted.remove(&(r.node, instance.clone()));
            }
            unaccepted.is_empty()
        });
    }

    let header = trace_header(
        cfg,
        trial,
        seed,
        &net,
        (cfg.sink_mode == SinkMode::AllNodes && cfg.protocol != Protocol::FullStackBootstrap)
            .then_some(group.as_slice()),
    );
    let records = net.sim.take_trace();
    let ctx = context_from_header(&header).expect("own header parses");
    let report = audit(&records, &ctx);

    let mut nodes: Vec<NodeResult> = (0..n as u32)
        .map(|i| {
            let id = NodeId(i);
            let node = net.sim.host(i as usize).node();
            NodeResult {
                node: id,
                correct: correct.contains(&id),
                member: proposers.contains(&id),
                latency: None,
                round: None,
                accepted: false,
                sends: net.sim.stats.sends_by_node[i as usize],
                rejected: node.metrics.rejected + node.comm().metrics.rejected,
            }
        })
        .collect();
    let mut decisions: BTreeMap<NodeId, BTreeSet<InstanceId>> = BTreeMap::new();
    for r in &records {
        let nr = &mut nodes[r.node.0 as usize];
        match &r.entry {
            Entry::Decide {
                instance,
                round,
                nested: false,
                ..
            } if ids.contains(instance) => {
                decisions.entry(r.node).or_default().insert(instance.clone());
                nr.round = Some(nr.round.map_or(*round, |x| x.max(*round)));
                if decisions[&r.node].len() == ids.len() {
                    nr.latency = Some(r.time - start);
                }
            }
            Entry::Accept { .. } => nr.accepted = true,
            _ => {}
        }
    }
    let member_results: Vec<&NodeResult> = nodes.iter().filter(|r| r.correct && r.member).collect();
    let lat: Vec<f64> = member_results
        .iter()
        .filter_map(|r| r.latency.map(|l| l as f64))
        .collect();
    let latency_mean = (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);
    let rounds = member_results.iter().filter_map(|r| r.round).max();

    let mut violations: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
    if !views.is_empty() && views.len() > 1 {
        violations.push(format!("GROUP: correct nodes hold {} different groups", views.len()));
    }
    let metrics = TrialMetrics {
        trial,
        seed,
        n,
        f: cfg.f(),
        group,
        sink_time,
        proposal_time,
        decided: decided_at.is_some(),
        disseminated,
        decide_time: decided_at.map(|t| t - start),
        latency_mean,
        rounds,
        sends_total: net.sim.stats.sends,
        sends_consensus: consensus_sends(&before, &after_decide),
        sends_by_msg: after_decide
            .sends_by_msg
            .iter()
            .map(|(k, v)| (*k, v - before.sends_by_msg.get(k).copied().unwrap_or(0)))
            .collect(),
        rejected: nodes.iter().filter(|r| r.correct).map(|r| r.rejected).sum(),
        violations,
        audit: report.stats.clone(),
        nodes,
    };
    Trial {
        metrics,
        header,
        records,
        report,
    }
}

/// Runs every trial of a scenario in order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Vec<TrialMetrics> {
    (0..cfg.trials).map(|t| run_trial(cfg, t).metrics).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergent_binary_follows_parity() {
        assert_eq!(
            proposal_for(ProtocolTag::Binary, Proposals::Divergent, NodeId(3)),
            Proposal::Binary(true)
        );
        assert_eq!(
            proposal_for(ProtocolTag::Binary, Proposals::Divergent, NodeId(4)),
            Proposal::Binary(false)
        );
    }

    #[test]
    fn header_round_trip() {
        let cfg = ScenarioConfig::new(4);
        let net = build_network(&cfg, 9);
        let h = trace_header(&cfg, 0, 9, &net, Some(&[NodeId(0), NodeId(1)]));
        let ctx = context_from_header(&h).unwrap();
        assert_eq!(ctx.f, 1);
        assert_eq!(ctx.correct.len(), 4);
        assert_eq!(ctx.group.unwrap().len(), 2);
    }

    #[test]
    fn small_trial_decides_cleanly() {
        for protocol in [Protocol::Binary, Protocol::Multivalued, Protocol::Vector] {
            let mut cfg = ScenarioConfig::new(4);
            cfg.protocol = protocol;
            let t = run_trial(&cfg, 0);
            assert!(t.metrics.decided, "{protocol:?}");
            assert!(t.metrics.ok(), "{:?}", t.metrics.violations);
            assert_eq!(t.metrics.nodes.len(), 4);
        }
    }
}
