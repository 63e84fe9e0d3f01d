//! Byzantine node behaviours.
//!
//! A [`Byzantine`] host runs an honest [`Node`] and rewrites what it
//! transmits. Rewritten messages are re-signed with the node's own key, so
//! they look authentic; identity forgeries are signed with the wrong key and
//! receivers drop them. Only messages the node originates are altered:
//! relayed copies of other nodes' broadcasts carry the origin's signature.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use sitan_core::auth::short_digest;
use sitan_core::comm::rrb::{encode_rrb, RrbView};
use sitan_core::comm::{SendKind, Transmission};
use sitan_core::consensus::binary::BinMsg;
use sitan_core::consensus::decision::DecisionMsg;
use sitan_core::consensus::multivalued::{validate_justification, MvMsg};
use sitan_core::consensus::vector::{sign_entry, VecRowMsg};
use sitan_core::wire::{seal_envelope_as, EnvelopeView, MsgType, WireTag};
use sitan_core::{KeyPair, Node, NodeId, Output, SimTime, TimerKey, Verifier};

use crate::netsim::{Host, LinkModel};
use crate::trace::Entry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Sends nothing at all.
    Silent,
    /// Replaces values in its consensus messages with random ones and
    /// sometimes sends copies under another node's identity.
    RandomValues,
    /// Shifts the phase of its consensus messages.
    WrongPhase,
    /// Sends one version of each consensus message to receivers with even
    /// ids and a conflicting one to receivers with odd ids.
    Equivocate,
    /// Behaves correctly except that it never relays reliable broadcasts.
    DropForwarding,
    /// Picks one of the behaviours above per message.
    Mixed,
}

impl Behavior {
    pub const ALL: [Behavior; 6] = [
        Behavior::Silent,
        Behavior::RandomValues,
        Behavior::WrongPhase,
        Behavior::Equivocate,
        Behavior::DropForwarding,
        Behavior::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Silent => "silent",
            Behavior::RandomValues => "random_values",
            Behavior::WrongPhase => "wrong_phase",
            Behavior::Equivocate => "equivocate",
            Behavior::DropForwarding => "drop_forwarding",
            Behavior::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Behavior::ALL.into_iter().find(|b| {
            b.name() == norm || b.name().replace('_', "") == norm.replace('_', "")
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub behavior: Behavior,
    /// Byzantine node ids. Defaults to the `f` highest ids of the group.
    #[serde(default)]
    pub nodes: Option<Vec<u32>>,
    /// Chance that a rewritten message is also sent under a forged identity.
    #[serde(default = "default_forge_rate")]
    pub forge_rate: f64,
    /// Link faults layered over the scenario's link model.
    #[serde(default)]
    pub network: Vec<LinkOverride>,
}

/// A link model for the copies sent from `from` to `to`; a missing end
/// matches every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkOverride {
    #[serde(default)]
    pub from: Option<u32>,
    #[serde(default)]
    pub to: Option<u32>,
    #[serde(flatten)]
    pub model: LinkModel,
}

/// Expands overrides into per-pair link models for `n` nodes. Later
/// entries win.
pub fn perturb_network(overrides: &[LinkOverride], n: u32) -> BTreeMap<(u32, u32), LinkModel> {
    let mut out = BTreeMap::new();
    for o in overrides {
        for a in 0..n {
            for b in 0..n {
                if a != b && o.from.is_none_or(|x| x == a) && o.to.is_none_or(|x| x == b) {
                    out.insert((a, b), o.model.clone());
                }
            }
        }
    }
    out
}

fn default_forge_rate() -> f64 {
    0.2
}

impl AdversarySpec {
    pub fn new(behavior: Behavior) -> Self {
        AdversarySpec {
            behavior,
            nodes: None,
            forge_rate: default_forge_rate(),
            network: Vec::new(),
        }
    }

    /// The Byzantine ids among `group`, given the fault budget `f`.
    pub fn byzantine(&self, group: &[NodeId], f: usize) -> Vec<NodeId> {
        match &self.nodes {
            Some(ids) => ids.iter().map(|i| NodeId(*i)).collect(),
            None => group.iter().rev().take(f).rev().copied().collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversaryStats {
    pub rewritten: u64,
    pub forged: u64,
    pub dropped: u64,
    pub equivocated: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Action {
    Drop,
    Pass,
    Random,
    Phase,
    Split,
}

pub struct Byzantine {
    node: Node,
    key: KeyPair,
    verifier: Arc<dyn Verifier>,
    behavior: Behavior,
    forge_rate: f64,
    population: u32,
    rng: ChaCha8Rng,
    /// Rewrites of originated upper-layer payloads, so retransmissions
    /// repeat the same lie.
    rewrites: HashMap<u64, (Action, Vec<u8>, Option<Vec<u8>>)>,
    alternates: HashMap<u64, Arc<[u8]>>,
    notes: Vec<Entry>,
    pub stats: AdversaryStats,
}

impl Byzantine {
    /// `population` is the number of node ids in the run, used to pick
    /// forged identities.
    pub fn new(
        node: Node,
        key: KeyPair,
        verifier: Arc<dyn Verifier>,
        spec: &AdversarySpec,
        population: u32,
        seed: u64,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb7a5_0000 ^ u64::from(key.node().0) << 32);
        Byzantine {
            node,
            key,
            verifier,
            behavior: spec.behavior,
            forge_rate: spec.forge_rate,
            population,
            rng,
            rewrites: HashMap::new(),
            alternates: HashMap::new(),
            notes: Vec::new(),
            stats: AdversaryStats::default(),
        }
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    /// Runs `f` on the inner node and corrupts what it outputs.
    pub fn with_node(&mut self, f: impl FnOnce(&mut Node) -> Vec<Output>) -> Vec<Output> {
        let outs = f(&mut self.node);
        self.corrupt(outs)
    }

    fn corrupt(&mut self, outputs: Vec<Output>) -> Vec<Output> {
        let mut res = Vec::with_capacity(outputs.len());
        for o in outputs {
            match o {
                Output::Transmit(t) => {
                    for t in self.corrupt_outgoing(t) {
                        res.push(Output::Transmit(t));
                    }
                }
                other => res.push(other),
            }
        }
        res
    }

    /// Zero or more transmissions replacing `t`.
    pub fn corrupt_outgoing(&mut self, t: Transmission) -> Vec<Transmission> {
        match self.behavior {
            Behavior::Silent => {
                self.stats.dropped += 1;
                return vec![];
            }
            Behavior::DropForwarding => {
                if t.kind == SendKind::RrbForward {
                    self.stats.dropped += 1;
                    return vec![];
                }
                return vec![t];
            }
            Behavior::Mixed if t.kind == SendKind::RrbForward && self.rng.random_bool(0.5) => {
                self.stats.dropped += 1;
                return vec![];
            }
            _ => {}
        }
        let Ok(env) = EnvelopeView::decode(&t.bytes) else {
            return vec![t];
        };
        // locate the upper payload this node originated
        let (upper, rrb) = match env.tag {
            WireTag::Beb => (env.payload, None),
            WireTag::Rrb => match RrbView::decode(env.payload) {
                Ok(b) if b.origin == self.key.node() => (b.payload, Some(b)),
                _ => return vec![t],
            },
            WireTag::Flood => return vec![t],
        };
        let Some(kind) = MsgType::of(upper) else {
            return vec![t];
        };
        if !matches!(
            kind,
            MsgType::BinPhase | MsgType::MvMsg | MsgType::VecRow | MsgType::Decision
        ) {
            return vec![t];
        }
        let h = short_digest(upper);
        let (action, main, alt) = match self.rewrites.get(&h) {
            Some(r) => r.clone(),
            None => {
                let r = self.rewrite(kind, upper);
                self.rewrites.insert(h, r.clone());
                r
            }
        };
        if action == Action::Drop {
            self.stats.dropped += 1;
            return vec![];
        }
        let wrap = |key: &KeyPair, sender: NodeId, payload: &[u8]| -> Vec<u8> {
            let body = match &rrb {
                Some(b) => encode_rrb(key, b.origin_seq, &b.scope, payload),
                None => payload.to_vec(),
            };
            seal_envelope_as(key, sender, env.tag, env.seq, &env.visited, &body)
        };
        let me = self.key.node();
        let bytes = if action == Action::Pass {
            t.bytes.clone()
        } else {
            self.stats.rewritten += 1;
            wrap(&self.key, me, &main)
        };
        let mut out = Vec::with_capacity(2);
        if let Some(alt) = alt {
            self.stats.equivocated += 1;
            let alt_env = wrap(&self.key, me, &alt);
            self.alternates.insert(short_digest(&bytes), alt_env.into());
        }
        let forge = matches!(self.behavior, Behavior::RandomValues | Behavior::Mixed)
            && self.population > 1
            && self.forge_rate > 0.0
            && self.rng.random_bool(self.forge_rate);
        if forge {
            let mut victim = NodeId(self.rng.random_range(0..self.population - 1));
            if victim.0 >= me.0 {
                victim.0 += 1;
            }
            self.stats.forged += 1;
            out.push(Transmission {
                bytes: seal_envelope_as(&self.key, victim, env.tag, env.seq, &env.visited, env.payload),
                kind: t.kind,
                msg: t.msg,
            });
        }
        out.insert(
            0,
            Transmission {
                bytes,
                kind: t.kind,
                msg: t.msg,
            },
        );
        out
    }

    fn pick_action(&mut self) -> Action {
        match self.behavior {
            Behavior::RandomValues => Action::Random,
            Behavior::WrongPhase => Action::Phase,
            Behavior::Equivocate => Action::Split,
            Behavior::Mixed => match self.rng.random_range(0..5) {
                0 => Action::Drop,
                1 => Action::Pass,
                2 => Action::Random,
                3 => Action::Phase,
                _ => Action::Split,
            },
            Behavior::Silent => Action::Drop,
            Behavior::DropForwarding => Action::Pass,
        }
    }

    fn random_bytes(&mut self) -> Vec<u8> {
        let len = self.rng.random_range(1..=8);
        (0..len).map(|_| self.rng.random()).collect()
    }

    /// Builds the replacement payload(s) for an originated message. The
    /// second payload, if any, goes to odd receivers.
    fn rewrite(&mut self, kind: MsgType, upper: &[u8]) -> (Action, Vec<u8>, Option<Vec<u8>>) {
        let action = self.pick_action();
        if matches!(action, Action::Drop | Action::Pass) {
            return (action, upper.to_vec(), None);
        }
        let r = match kind {
            MsgType::BinPhase => self.rewrite_bin(action, upper),
            MsgType::MvMsg => self.rewrite_mv(action, upper),
            MsgType::VecRow => self.rewrite_vec(action, upper),
            MsgType::Decision => self.rewrite_decision(action, upper),
            _ => None,
        };
        match r {
            Some((main, alt)) => (action, main, alt),
            None => (Action::Pass, upper.to_vec(), None),
        }
    }

    fn shift_phase(&mut self, phase: u32, max: u32) -> u32 {
        loop {
            let p = self.rng.random_range(0..=max.max(phase + 4));
            if p != phase {
                return p;
            }
        }
    }

    fn rewrite_bin(&mut self, action: Action, upper: &[u8]) -> Option<(Vec<u8>, Option<Vec<u8>>)> {
        let m = BinMsg::decode(upper).ok()?;
        let re = |key: &KeyPair, phase: u32, value: u8, decided: bool| {
            BinMsg::signed(key, m.instance.clone(), phase, value, decided, m.justification.clone()).encode()
        };
        Some(match action {
            Action::Random => {
                let v = self.rng.random_range(0..=2);
                let d = self.rng.random_bool(0.2);
                (re(&self.key, m.phase, v, d), None)
            }
            Action::Phase => {
                let p = self.shift_phase(m.phase, 0);
                (re(&self.key, p, m.value, m.decided), None)
            }
            _ => (
                re(&self.key, m.phase, 0, m.decided),
                Some(re(&self.key, m.phase, 1, m.decided)),
            ),
        })
    }

    fn rewrite_mv(&mut self, action: Action, upper: &[u8]) -> Option<(Vec<u8>, Option<Vec<u8>>)> {
        let m = MvMsg::decode(upper).ok()?;
        let value = |s: &mut Self| -> Option<Vec<u8>> {
            if m.phase == 2 && s.rng.random_bool(0.3) {
                None
            } else {
                Some(s.random_bytes())
            }
        };
        let (main, alt) = match action {
            Action::Random => {
                let v = value(self);
                (MvMsg::signed(&self.key, m.instance.clone(), m.phase, v, m.justification.clone()), None)
            }
            Action::Phase => {
                let p = self.shift_phase(m.phase, 2);
                (
                    MvMsg::signed(&self.key, m.instance.clone(), p, m.value.clone(), m.justification.clone()),
                    None,
                )
            }
            _ => {
                let v = value(self);
                let alt = MvMsg::signed(&self.key, m.instance.clone(), m.phase, v, m.justification.clone());
                (m.clone(), Some(alt))
            }
        };
        self.note_mv(&main);
        if let Some(a) = &alt {
            self.note_mv(a);
        }
        Some((main.encode(), alt.map(|a| a.encode())))
    }

    fn note_mv(&mut self, msg: &MvMsg) {
        let justified = match self.node.group() {
            Some(g) => validate_justification(msg, &g, &*self.verifier, &|_| false).is_ok(),
            None => false,
        };
        self.notes.push(Entry::Inject {
            payload: msg.encode(),
            justified,
        });
    }

    fn rewrite_vec(&mut self, action: Action, upper: &[u8]) -> Option<(Vec<u8>, Option<Vec<u8>>)> {
        let m = VecRowMsg::decode(upper).ok()?;
        let me = self.key.node();
        let relabel = |s: &mut Self, m: &VecRowMsg| -> VecRowMsg {
            let mut m = m.clone();
            for (col, v, sig) in m.entries.iter_mut() {
                if *col == me {
                    *v = s.random_bytes();
                    *sig = sign_entry(&s.key, &m.instance, v);
                } else if action == Action::Random && s.rng.random_bool(0.5) {
                    // a foreign value it cannot sign for
                    *v = s.random_bytes();
                }
            }
            m
        };
        Some(match action {
            Action::Random => (relabel(self, &m).encode(), None),
            Action::Phase => {
                // rows have no phase; claim a wrong column instead
                let mut m = m.clone();
                if let Some(e) = m.entries.first_mut() {
                    e.0 = NodeId(self.rng.random_range(0..self.population.max(1)));
                }
                (m.encode(), None)
            }
            _ => (relabel(self, &m).encode(), Some(relabel(self, &m).encode())),
        })
    }

    fn rewrite_decision(&mut self, action: Action, upper: &[u8]) -> Option<(Vec<u8>, Option<Vec<u8>>)> {
        let m = DecisionMsg::decode(upper).ok()?;
        let mk = |s: &mut Self| {
            let v = s.random_bytes();
            DecisionMsg::new(&s.key, m.instance.clone(), v, m.group.clone(), m.f as usize).encode()
        };
        Some(match action {
            Action::Split => (upper.to_vec(), Some(mk(self))),
            _ => (mk(self), None),
        })
    }
}

impl Host for Byzantine {
    fn id(&self) -> NodeId {
        self.key.node()
    }

    fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output> {
        self.with_node(|n| n.handle_receive(now, bytes))
    }

    fn handle_timer(&mut self, now: SimTime, key: TimerKey) -> Vec<Output> {
        self.with_node(|n| n.handle_timer(now, key))
    }

    fn drain_notes(&mut self) -> Vec<Entry> {
        std::mem::take(&mut self.notes)
    }

    fn is_correct(&self) -> bool {
        false
    }

    fn alternate(&mut self, bytes: &[u8]) -> Option<Arc<[u8]>> {
        if self.alternates.is_empty() {
            return None;
        }
        self.alternates.get(&short_digest(bytes)).cloned()
    }
}

/// A simulated participant, correct or not.
pub enum Peer {
    Correct(Node),
    Byzantine(Box<Byzantine>),
}

impl Peer {
    pub fn node(&self) -> &Node {
        match self {
            Peer::Correct(n) => n,
            Peer::Byzantine(b) => b.node(),
        }
    }

    /// Runs `f` on the node; a Byzantine peer corrupts the outputs.
    pub fn with_node(&mut self, f: impl FnOnce(&mut Node) -> Vec<Output>) -> Vec<Output> {
        match self {
            Peer::Correct(n) => f(n),
            Peer::Byzantine(b) => b.with_node(f),
        }
    }

    pub fn adversary_stats(&self) -> Option<&AdversaryStats> {
        match self {
            Peer::Correct(_) => None,
            Peer::Byzantine(b) => Some(&b.stats),
        }
    }
}

impl Host for Peer {
    fn id(&self) -> NodeId {
        match self {
            Peer::Correct(n) => n.id(),
            Peer::Byzantine(b) => b.id(),
        }
    }

    fn handle_receive(&mut self, now: SimTime, bytes: &[u8]) -> Vec<Output> {
        match self {
            Peer::Correct(n) => n.handle_receive(now, bytes),
            Peer::Byzantine(b) => b.handle_receive(now, bytes),
        }
    }

    fn handle_timer(&mut self, now: SimTime, key: TimerKey) -> Vec<Output> {
        match self {
            Peer::Correct(n) => n.handle_timer(now, key),
            Peer::Byzantine(b) => b.handle_timer(now, key),
        }
    }

    fn drain_notes(&mut self) -> Vec<Entry> {
        match self {
            Peer::Correct(_) => Vec::new(),
            Peer::Byzantine(b) => b.drain_notes(),
        }
    }

    fn is_correct(&self) -> bool {
        matches!(self, Peer::Correct(_))
    }

    fn alternate(&mut self, bytes: &[u8]) -> Option<Arc<[u8]>> {
        match self {
            Peer::Correct(_) => None,
            Peer::Byzantine(b) => b.alternate(bytes),
        }
    }
}

/// Count of Byzantine behaviours by name, for reports.
pub fn behavior_counts(peers: &[Peer]) -> BTreeMap<&'static str, usize> {
    let mut m = BTreeMap::new();
    for p in peers {
        if let Peer::Byzantine(b) = p {
            *m.entry(b.behavior().name()).or_default() += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use sitan_core::{KeyDirectory, NodeConfig, Proposal};

    fn byz(behavior: Behavior) -> (Byzantine, KeyDirectory) {
        let (keys, dir) = KeyDirectory::simulated(4, 3);
        let dir2 = dir.clone();
        let v: Arc<dyn Verifier> = Arc::new(dir);
        let mut node = Node::new(keys[3].clone(), v.clone(), NodeConfig::default().with_f(1));
        node.set_static_group((0..4).map(NodeId).collect(), 1).unwrap();
        (
            Byzantine::new(node, keys[3].clone(), v, &AdversarySpec::new(behavior), 4, 7),
            dir2,
        )
    }

    fn transmits(outs: &[Output]) -> Vec<&Transmission> {
        outs.iter()
            .filter_map(|o| match o {
                Output::Transmit(t) => Some(t),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn overrides_expand_per_pair() {
        let o = vec![
            LinkOverride {
                from: None,
                to: None,
                model: LinkModel::lossy(0.1),
            },
            LinkOverride {
                from: Some(2),
                to: None,
                model: LinkModel::lossy(1.0),
            },
        ];
        let m = perturb_network(&o, 3);
        assert_eq!(m.len(), 6);
        assert_eq!(m[&(2, 0)].loss, 1.0);
        assert_eq!(m[&(0, 2)].loss, 0.1);
        let spec: AdversarySpec = toml::from_str(
            "behavior = \"silent\"\n[[network]]\nto = 1\nloss = 0.5\nduplicate = 0.5\n",
        )
        .unwrap();
        assert_eq!(spec.network[0].to, Some(1));
        assert_eq!(spec.network[0].model.duplicate, 0.5);
    }

    #[test]
    fn parse_names() {
        for b in Behavior::ALL {
            assert_eq!(Behavior::parse(b.name()), Some(b));
        }
        assert_eq!(Behavior::parse("RandomValues"), Some(Behavior::RandomValues));
        assert_eq!(Behavior::parse("nope"), None);
    }

    #[test]
    fn silent_sends_nothing() {
        let (mut b, _) = byz(Behavior::Silent);
        let outs = b.with_node(|n| n.propose(0, "a", Proposal::Binary(true)).unwrap().1);
        assert!(transmits(&outs).is_empty());
    }

    #[test]
    fn random_values_are_self_signed() {
        let (mut b, dir) = byz(Behavior::RandomValues);
        let outs = b.with_node(|n| n.propose(0, "a", Proposal::Binary(true)).unwrap().1);
        let ts = transmits(&outs);
        assert!(!ts.is_empty());
        let env = EnvelopeView::decode(&ts[0].bytes).unwrap();
        assert!(env.verify(&dir));
        assert_eq!(b.stats.rewritten, 1);
        // a forged copy, if any, fails verification
        for t in &ts[1..] {
            let e = EnvelopeView::decode(&t.bytes).unwrap();
            assert_ne!(e.sender, NodeId(3));
            assert!(!e.verify(&dir));
        }
    }

    #[test]
    fn equivocation_registers_alternate() {
        let (mut b, dir) = byz(Behavior::Equivocate);
        let outs = b.with_node(|n| n.propose(0, "a", Proposal::Binary(true)).unwrap().1);
        let t = transmits(&outs)[0].bytes.clone();
        let alt = b.alternate(&t).expect("alternate");
        let (x, y) = (EnvelopeView::decode(&t).unwrap(), EnvelopeView::decode(&alt).unwrap());
        assert!(x.verify(&dir) && y.verify(&dir));
        let (mx, my) = (BinMsg::decode(x.payload).unwrap(), BinMsg::decode(y.payload).unwrap());
        assert_ne!(mx.value, my.value);
    }

    #[test]
    fn mv_injections_are_noted() {
        let (mut b, _) = byz(Behavior::RandomValues);
        b.with_node(|n| n.propose(0, "a", Proposal::Multivalued(b"v".to_vec())).unwrap().1);
        let notes = b.drain_notes();
        assert_eq!(notes.len(), 1);
        // phase 0 messages need no justification
        assert!(matches!(notes[0], Entry::Inject { justified: true, .. }));
    }

    #[test]
    fn retransmissions_repeat_the_same_lie() {
        let (mut b, _) = byz(Behavior::RandomValues);
        let t = Transmission {
            bytes: {
                let outs = b.node.propose(0, "a", Proposal::Binary(false)).unwrap().1;
                transmits(&outs)[0].bytes.clone()
            },
            kind: SendKind::Beb,
            msg: Some(MsgType::BinPhase),
        };
        let a = b.corrupt_outgoing(t.clone());
        let c = b.corrupt_outgoing(t);
        assert_eq!(a[0].bytes, c[0].bytes);
    }
}
