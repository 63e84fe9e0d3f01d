//! Offline trace auditor.
//!
//! Checks agreement, validity and structure properties from trace records
//! alone. It shares wire codecs and signature checks with the protocol crate
//! but none of the protocol state machines, so a bug in a state machine
//! cannot hide itself here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sitan_core::consensus::multivalued::{validate, MvMsg, Predicate};
use sitan_core::consensus::vector::{check_entry, decode_row, filled};
use sitan_core::consensus::{decode_mv_outcome, Group};
use sitan_core::{InstanceId, KeyDirectory, NodeId, ProtocolTag, SimTime};

use crate::trace::{Entry, Record};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub property: &'static str,
    pub instance: Option<String>,
    pub node: Option<NodeId>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.property)?;
        if let Some(i) = &self.instance {
            write!(f, " {i}")?;
        }
        if let Some(n) = self.node {
            write!(f, " node {}", n.0)?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditStats {
    /// Top-level instances with at least one correct decision.
    pub instances: usize,
    pub decisions: usize,
    pub accepts: usize,
    /// Multivalued messages accepted by correct nodes and re-validated.
    pub mv_checked: usize,
    pub mv_invalid_accepted: usize,
    pub injected: usize,
    pub injected_unjustified: usize,
    /// Correct-node acceptances of unjustified injected messages.
    pub injected_unjustified_accepted: usize,
    pub sinks_checked: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<Violation>,
    pub stats: AuditStats,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, property: &str) -> usize {
        self.violations
            .iter()
            .filter(|v| v.property == property)
            .count()
    }
}

pub struct AuditContext {
    pub f: usize,
    /// Nodes that follow the protocol (they may still crash).
    pub correct: BTreeSet<NodeId>,
    /// The consensus group if fixed in advance; otherwise each instance is
    /// checked against the sink reported by its first correct proposer.
    pub group: Option<Vec<NodeId>>,
    pub keys: KeyDirectory,
}

#[derive(Default)]
struct InstanceLog {
    /// Proposals of correct nodes, in order.
    correct_proposals: BTreeMap<NodeId, Vec<u8>>,
    all_proposals: BTreeSet<Vec<u8>>,
    decisions: BTreeMap<NodeId, Vec<u8>>,
    accepts: Vec<(NodeId, Vec<u8>)>,
    first_proposal: Option<SimTime>,
    nested: bool,
}

pub fn audit(records: &[Record], ctx: &AuditContext) -> Report {
    let mut report = Report::default();
    let mut instances: BTreeMap<InstanceId, InstanceLog> = BTreeMap::new();
    let mut injected_phase0: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut unjustified: BTreeSet<Vec<u8>> = BTreeSet::new();
    let mut sinks: Vec<(SimTime, NodeId, u32, Vec<NodeId>)> = Vec::new();
    let mut ever_neighbors: BTreeMap<NodeId, BTreeMap<NodeId, SimTime>> = BTreeMap::new();
    let mut crashed_at: BTreeMap<NodeId, SimTime> = BTreeMap::new();
    let mut mv_accepted: Vec<(NodeId, Vec<u8>)> = Vec::new();

    for r in records {
        let correct = ctx.correct.contains(&r.node);
        match &r.entry {
            Entry::Propose { instance, value } => {
                let log = instances.entry(instance.clone()).or_default();
                log.all_proposals.insert(value.clone());
                if correct {
                    log.correct_proposals.entry(r.node).or_insert_with(|| value.clone());
                    log.first_proposal.get_or_insert(r.time);
                }
            }
            Entry::Decide {
                instance,
                value,
                nested,
                ..
            } if correct => {
                let log = instances.entry(instance.clone()).or_default();
                log.nested = *nested;
                report.stats.decisions += 1;
                if let Some(prev) = log.decisions.insert(r.node, value.clone()) {
                    if prev != *value {
                        report.violations.push(Violation {
                            property: "DECIDE_ONCE",
                            instance: Some(instance.to_string()),
                            node: Some(r.node),
                            detail: "decided twice with different values".into(),
                        });
                    }
                }
            }
            Entry::Accept { instance, value } if correct => {
                report.stats.accepts += 1;
                instances
                    .entry(instance.clone())
                    .or_default()
                    .accepts
                    .push((r.node, value.clone()));
            }
            Entry::Inject { payload, justified } => {
                report.stats.injected += 1;
                if let Ok(m) = MvMsg::decode(payload) {
                    if m.phase == 0 {
                        if let Some(v) = m.value {
                            injected_phase0.insert(v);
                        }
                    }
                }
                if !justified {
                    report.stats.injected_unjustified += 1;
                    unjustified.insert(payload.clone());
                }
            }
            Entry::MvOk { payload, .. } if correct => {
                mv_accepted.push((r.node, payload.clone()));
            }
            Entry::Sink { epoch, members } if correct => {
                sinks.push((r.time, r.node, *epoch, members.clone()));
            }
            Entry::NeighborAdded(p) => {
                ever_neighbors
                    .entry(r.node)
                    .or_default()
                    .entry(*p)
                    .or_insert(r.time);
            }
            Entry::Crash => {
                crashed_at.entry(r.node).or_insert(r.time);
            }
            _ => {}
        }
    }

    // the group each instance ran in
    let group_at = |t: Option<SimTime>| -> Option<Vec<NodeId>> {
        if let Some(g) = &ctx.group {
            return Some(g.clone());
        }
        let t = t?;
        sinks
            .iter()
            .rev()
            .find(|(at, ..)| *at <= t)
            .map(|(_, _, _, m)| m.clone())
    };

    for (id, log) in &instances {
        if log.decisions.is_empty() && log.accepts.is_empty() {
            continue;
        }
        let name = id.to_string();
        let mut push = |property: &'static str, node: Option<NodeId>, detail: String| {
            report.violations.push(Violation {
                property,
                instance: Some(name.clone()),
                node,
                detail,
            })
        };
        let values: BTreeSet<&Vec<u8>> = log.decisions.values().collect();
        let agreement = match id.tag {
            ProtocolTag::Binary => "BC2",
            ProtocolTag::Multivalued => "MVC4",
            ProtocolTag::Vector => "VC2",
            _ => "AGREE",
        };
        if values.len() > 1 {
            push(agreement, None, format!("{} distinct decisions", values.len()));
        }
        for (n, v) in &log.accepts {
            if let Some(d) = log.decisions.values().next() {
                if d != v {
                    push("ACCEPT", Some(*n), "accepted a value no correct node decided".into());
                }
            }
        }
        if log.nested || log.correct_proposals.is_empty() {
            continue;
        }
        if !log.decisions.is_empty() {
            report.stats.instances += 1;
        }
        let unanimous = {
            let props: BTreeSet<&Vec<u8>> = log.correct_proposals.values().collect();
            (props.len() == 1).then(|| props.into_iter().next().cloned().expect("one"))
        };
        match id.tag {
            ProtocolTag::Binary => {
                for (n, v) in &log.decisions {
                    if v.len() != 1 || v[0] > 1 {
                        push("BC1", Some(*n), format!("decision {v:?} is not a bit"));
                    } else if let Some(u) = &unanimous {
                        if u != v {
                            push("BC1", Some(*n), "unanimous proposal not decided".into());
                        }
                    }
                }
            }
            ProtocolTag::Multivalued => {
                let correct_vals: BTreeSet<&Vec<u8>> = log.correct_proposals.values().collect();
                for (n, v) in &log.decisions {
                    let Ok(out) = decode_mv_outcome(v) else {
                        push("MVC2", Some(*n), "undecodable decision".into());
                        continue;
                    };
                    if let Some(u) = &unanimous {
                        if out.as_ref() != Some(u) {
                            push("MVC1", Some(*n), "unanimous proposal not decided".into());
                        }
                    }
                    if let Some(x) = &out {
                        if !log.all_proposals.contains(x) && !injected_phase0.contains(x) {
                            push("MVC2", Some(*n), "decided a value nobody proposed".into());
                        } else if !correct_vals.contains(x) {
                            push("MVC3", Some(*n), "decided a value only faulty nodes proposed".into());
                        }
                    }
                }
            }
            ProtocolTag::Vector => {
                let Some(group) = group_at(log.first_proposal) else {
                    push("VC1", None, "no group known for instance".into());
                    continue;
                };
                for (n, v) in &log.decisions {
                    if let Err(e) = check_vector(id, v, &group, ctx, &log.correct_proposals) {
                        push("VC1", Some(*n), e);
                    }
                }
            }
            _ => {}
        }
    }

    // justification re-validation of everything correct nodes counted
    let mut groups: BTreeMap<InstanceId, Option<Group>> = BTreeMap::new();
    for (node, payload) in &mv_accepted {
        report.stats.mv_checked += 1;
        let bad = |d: String| Violation {
            property: "JUSTIFICATION",
            instance: None,
            node: Some(*node),
            detail: d,
        };
        let msg = match MvMsg::decode(payload) {
            Ok(m) => m,
            Err(e) => {
                report.stats.mv_invalid_accepted += 1;
                report.violations.push(bad(format!("undecodable message: {e}")));
                continue;
            }
        };
        let group = groups
            .entry(msg.instance.clone())
            .or_insert_with(|| {
                let top = top_level(&msg.instance);
                let t = instances.get(&top).and_then(|l| l.first_proposal);
                group_at(t).and_then(|m| Group::new(m, ctx.f).ok())
            })
            .clone();
        let Some(group) = group else {
            report.stats.mv_invalid_accepted += 1;
            report.violations.push(bad(format!("no group for {}", msg.instance)));
            continue;
        };
        let predicate = match vector_parent(&msg.instance) {
            Some(vid) => Predicate::VectorRow {
                vid,
                group: group.clone(),
            },
            None => Predicate::Any,
        };
        if let Err(e) = validate(&msg, &group, &predicate, &ctx.keys, &|_| false) {
            report.stats.mv_invalid_accepted += 1;
            report
                .violations
                .push(bad(format!("{} accepted an invalid message: {e:?}", msg.instance)));
        }
        if unjustified.contains(payload) {
            report.stats.injected_unjustified_accepted += 1;
            report.violations.push(Violation {
                property: "INJECTION",
                instance: Some(msg.instance.to_string()),
                node: Some(*node),
                detail: "accepted an unjustified injected message".into(),
            });
        }
    }

    check_sinks(&sinks, &ever_neighbors, &crashed_at, ctx, &mut report);
    report.violations.sort();
    report
}

/// The top-level instance a nested one belongs to.
fn top_level(id: &InstanceId) -> InstanceId {
    let mut label = id.label.as_str();
    let mut tag = id.tag;
    while let Some((head, tail)) = label.rsplit_once('/') {
        let name = tail.trim_end_matches(|c: char| c.is_ascii_digit());
        tag = match name {
            "BIN" => ProtocolTag::Binary,
            "MV" => ProtocolTag::Multivalued,
            "VEC" => ProtocolTag::Vector,
            _ => break,
        };
        label = head;
    }
    InstanceId::new(label, tag)
}

/// The vector instance whose rows a multivalued instance decides, if any.
fn vector_parent(id: &InstanceId) -> Option<InstanceId> {
    if id.tag != ProtocolTag::Multivalued {
        return None;
    }
    let head = id.label.strip_suffix("/VEC")?;
    Some(InstanceId::new(head, ProtocolTag::Vector))
}

fn check_vector(
    id: &InstanceId,
    value: &[u8],
    group: &[NodeId],
    ctx: &AuditContext,
    proposals: &BTreeMap<NodeId, Vec<u8>>,
) -> Result<(), String> {
    let row = decode_row(value).map_err(|e| format!("undecodable vector: {e}"))?;
    if row.len() != group.len() {
        return Err(format!("vector has {} columns for {} members", row.len(), group.len()));
    }
    let want = 2 * ctx.f + 1;
    if filled(&row) != want {
        return Err(format!("{} entries instead of {want}", filled(&row)));
    }
    let mut from_correct = 0;
    for (col, e) in group.iter().zip(&row) {
        let Some((v, sig)) = e else { continue };
        if !check_entry(&ctx.keys, id, *col, v, sig) {
            return Err(format!("bad signature at column {}", col.0));
        }
        if ctx.correct.contains(col) {
            from_correct += 1;
            if proposals.get(col).is_some_and(|p| p != v) {
                return Err(format!("column {} differs from its proposal", col.0));
            }
        }
    }
    if from_correct < ctx.f + 1 {
        return Err(format!("only {from_correct} entries from correct nodes"));
    }
    Ok(())
}

fn check_sinks(
    sinks: &[(SimTime, NodeId, u32, Vec<NodeId>)],
    ever: &BTreeMap<NodeId, BTreeMap<NodeId, SimTime>>,
    crashed: &BTreeMap<NodeId, SimTime>,
    ctx: &AuditContext,
    report: &mut Report,
) {
    let knew = |a: NodeId, b: NodeId, t: SimTime| {
        ever.get(&a)
            .and_then(|m| m.get(&b))
            .is_some_and(|at| *at <= t)
    };
    let alive = |n: NodeId, t: SimTime| crashed.get(&n).is_none_or(|c| *c > t);
    let mut by_epoch: BTreeMap<u32, Vec<&Vec<NodeId>>> = BTreeMap::new();
    let mut last: BTreeMap<NodeId, &Vec<NodeId>> = BTreeMap::new();
    for (t, node, epoch, members) in sinks {
        report.stats.sinks_checked += 1;
        let mut push = |property: &'static str, detail: String| {
            report.violations.push(Violation {
                property,
                instance: None,
                node: Some(*node),
                detail,
            })
        };
        if members.len() < 3 * ctx.f + 1 {
            push("SINK_SIZE", format!("{} members, need {}", members.len(), 3 * ctx.f + 1));
        }
        let checked: Vec<NodeId> = members
            .iter()
            .copied()
            .filter(|m| ctx.correct.contains(m) && alive(*m, *t))
            .collect();
        'pairs: for (i, a) in checked.iter().enumerate() {
            for b in &checked[i + 1..] {
                if !knew(*a, *b, *t) || !knew(*b, *a, *t) {
                    push(
                        "SINK_CLIQUE",
                        format!("members {} and {} are not mutual neighbors", a.0, b.0),
                    );
                    break 'pairs;
                }
            }
        }
        by_epoch.entry(*epoch).or_default().push(members);
        last.insert(*node, members);
    }
    for (epoch, views) in &by_epoch {
        if views.windows(2).any(|w| w[0] != w[1]) {
            report.violations.push(Violation {
                property: "SINK_AGREE",
                instance: None,
                node: None,
                detail: format!("different sinks at epoch {epoch}"),
            });
        }
    }
    let finals: BTreeSet<&Vec<NodeId>> = last
        .iter()
        .filter(|(n, _)| !crashed.contains_key(n))
        .map(|(_, v)| *v)
        .collect();
    if finals.len() > 1 {
        report.violations.push(Violation {
            property: "SINK_AGREE",
            instance: None,
            node: None,
            detail: format!("{} different final sinks", finals.len()),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitan_core::consensus::encode_mv_outcome;

    fn rec(time: SimTime, node: u32, entry: Entry) -> Record {
        Record {
            time,
            node: NodeId(node),
            digest: None,
            entry,
        }
    }

    fn ctx(n: u32, f: usize, correct: &[u32]) -> AuditContext {
        AuditContext {
            f,
            correct: correct.iter().map(|i| NodeId(*i)).collect(),
            group: Some((0..n).map(NodeId).collect()),
            keys: KeyDirectory::simulated(n as usize, 0).1,
        }
    }

    fn propose(node: u32, id: &InstanceId, v: &[u8]) -> Record {
        rec(0, node, Entry::Propose {
            instance: id.clone(),
            value: v.to_vec(),
        })
    }

    fn decide(node: u32, id: &InstanceId, v: &[u8]) -> Record {
        rec(5, node, Entry::Decide {
            instance: id.clone(),
            value: v.to_vec(),
            round: 1,
            nested: false,
        })
    }

    #[test]
    fn binary_agreement_and_validity() {
        let id = InstanceId::new("b", ProtocolTag::Binary);
        let mut t: Vec<Record> = (0..4).map(|i| propose(i, &id, &[1])).collect();
        t.extend([decide(0, &id, &[1]), decide(1, &id, &[1])]);
        assert!(audit(&t, &ctx(4, 1, &[0, 1, 2, 3])).ok());
        t.push(decide(2, &id, &[0]));
        let r = audit(&t, &ctx(4, 1, &[0, 1, 2, 3]));
        assert_eq!(r.count("BC2"), 1);
        assert_eq!(r.count("BC1"), 1);
        // faulty deciders are ignored
        assert!(audit(&t, &ctx(4, 1, &[0, 1, 3])).ok());
    }

    #[test]
    fn mv_validity() {
        let id = InstanceId::new("m", ProtocolTag::Multivalued);
        let mut t = vec![
            propose(0, &id, b"a"),
            propose(1, &id, b"b"),
            propose(2, &id, b"c"),
            propose(3, &id, b"z"),
        ];
        t.push(decide(0, &id, &encode_mv_outcome(&Some(b"z".to_vec()))));
        let r = audit(&t, &ctx(4, 1, &[0, 1, 2]));
        assert_eq!(r.count("MVC3"), 1);
        let mut t2 = t.clone();
        t2.pop();
        t2.push(decide(0, &id, &encode_mv_outcome(&Some(b"q".to_vec()))));
        assert_eq!(audit(&t2, &ctx(4, 1, &[0, 1, 2])).count("MVC2"), 1);
        t2.pop();
        t2.push(decide(0, &id, &encode_mv_outcome(&None)));
        assert!(audit(&t2, &ctx(4, 1, &[0, 1, 2])).ok());
    }

    #[test]
    fn nested_ids_map_to_their_root() {
        let v = InstanceId::new("x", ProtocolTag::Vector);
        let mv = v.child(ProtocolTag::Multivalued, Some(3));
        let bin = mv.child(ProtocolTag::Binary, None);
        assert_eq!(top_level(&mv), v);
        assert_eq!(top_level(&bin), v);
        assert_eq!(vector_parent(&mv), Some(v.clone()));
        assert_eq!(vector_parent(&v), None);
        let plain = InstanceId::new("p", ProtocolTag::Multivalued);
        assert_eq!(top_level(&plain.child(ProtocolTag::Binary, None)), plain);
    }

    #[test]
    fn sink_checks() {
        let members: Vec<NodeId> = (0..4).map(NodeId).collect();
        let mut t = Vec::new();
        for a in 0..4 {
            for b in 0..4 {
                if a != b && !(a == 0 && b == 3) {
                    t.push(rec(1, a, Entry::NeighborAdded(NodeId(b))));
                }
            }
        }
        for a in 0..4 {
            t.push(rec(9, a, Entry::Sink {
                epoch: 0,
                members: members.clone(),
            }));
        }
        let mut c = ctx(4, 1, &[0, 1, 2, 3]);
        c.group = None;
        let r = audit(&t, &c);
        assert_eq!(r.count("SINK_CLIQUE"), 4);
        c.correct.remove(&NodeId(3));
        assert!(audit(&t, &c).ok());
        t.push(rec(9, 1, Entry::Sink {
            epoch: 0,
            members: members[..3].to_vec(),
        }));
        let r = audit(&t, &c);
        assert!(r.count("SINK_AGREE") >= 1);
        assert_eq!(r.count("SINK_SIZE"), 1);
    }
}
