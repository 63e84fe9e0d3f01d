use proptest::prelude::*;

use sitan::trace::{parse, render, Entry, Record};
use sitan_core::{InstanceId, NodeId, ProtocolTag};

fn node() -> impl Strategy<Value = NodeId> {
    (0u32..200).prop_map(NodeId)
}

fn instance() -> impl Strategy<Value = InstanceId> {
    let tag = prop_oneof![
        Just(ProtocolTag::Beb),
        Just(ProtocolTag::Rrb),
        Just(ProtocolTag::Binary),
        Just(ProtocolTag::Multivalued),
        Just(ProtocolTag::Vector),
    ];
    ("[a-z0-9_]{1,8}", tag, proptest::option::of(0u32..50)).prop_map(|(label, tag, sub_round)| {
        InstanceId {
            label,
            tag,
            sub_round,
        }
    })
}

fn bytes() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(any::<u8>(), 0..24)
}

fn entry() -> impl Strategy<Value = Entry> {
    let nodes = || proptest::collection::vec(node(), 0..6);
    prop_oneof![
        ("[A-Z]{1,6}", "[A-Z_]{1,10}", 0usize..4096).prop_map(|(via, msg, len)| Entry::Send { via, msg, len }),
        (node(), 0usize..4096).prop_map(|(from, len)| Entry::Recv { from, len }),
        node().prop_map(Entry::NeighborAdded),
        node().prop_map(Entry::NeighborRemoved),
        (nodes(), any::<bool>()).prop_map(|(known, partial)| Entry::Discovered { known, partial }),
        (any::<u32>(), nodes()).prop_map(|(epoch, members)| Entry::Sink { epoch, members }),
        any::<u32>().prop_map(|epoch| Entry::SinkNone { epoch }),
        (instance(), bytes()).prop_map(|(instance, value)| Entry::Propose { instance, value }),
        (instance(), bytes(), any::<u32>(), any::<bool>()).prop_map(|(instance, value, round, nested)| {
            Entry::Decide {
                instance,
                value,
                round,
                nested,
            }
        }),
        (instance(), bytes()).prop_map(|(instance, value)| Entry::Accept { instance, value }),
        (node(), bytes()).prop_map(|(from, payload)| Entry::MvOk { from, payload }),
        (instance(), node(), "[a-z_]{1,12}").prop_map(|(instance, from, reason)| Entry::Reject {
            instance,
            from,
            reason,
        }),
        (bytes(), any::<bool>()).prop_map(|(payload, justified)| Entry::Inject { payload, justified }),
        Just(Entry::Crash),
    ]
}

fn record() -> impl Strategy<Value = Record> {
    (0u64..1_000_000, node(), any::<u64>(), entry()).prop_map(|(time, node, d, entry)| {
        // only transmissions carry an independent digest
        let digest = match entry {
            Entry::Send { .. } | Entry::Recv { .. } => Some(d),
            _ => None,
        };
        Record {
            time,
            node,
            digest,
            entry,
        }
    })
}

proptest! {
    #[test]
    fn rendered_traces_parse_back(
        header in "[a-z0-9 =,]{0,40}",
        records in proptest::collection::vec(record(), 0..30),
    ) {
        let text = render(&header, &records);
        let (h, parsed) = parse(&text).unwrap();
        prop_assert_eq!(&h, &header);
        prop_assert_eq!(&parsed, &records);
        prop_assert_eq!(render(&h, &parsed), text);
    }
}

#[test]
fn garbage_lines_are_rejected() {
    assert!(parse("# h\n12 x SEND 00\n").is_err());
    assert!(parse("# h\n12 3 NOPE 0000000000000000\n").is_err());
    assert!(parse("# h\n12 3 DECIDE 0000000000000000 instance=a:BIN value=zz round=1 nested=0\n").is_err());
}
