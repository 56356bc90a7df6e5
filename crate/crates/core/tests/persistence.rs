use proptest::prelude::*;

use tasim_core::{
    load_bank, save_bank, CandidateResponse, Condition, EgoState, MemoryBank, MemoryItem, RetrievalResult, Transcript,
    Turn,
};

fn text() -> impl Strategy<Value = String> {
    // mixes quotes, escapes, newlines and non-ascii
    "[a-zA-Z0-9 ,.!?'\"\\\\\n\té日-]{1,40}"
}

fn state() -> impl Strategy<Value = EgoState> {
    prop_oneof![Just(EgoState::Parent), Just(EgoState::Adult), Just(EgoState::Child)]
}

fn item(id: usize) -> impl Strategy<Value = MemoryItem> {
    (text().prop_filter("context", |s| !s.trim().is_empty()), text(), proptest::collection::vec(text(), 0..4), text())
        .prop_map(move |(context, reaction, emotions, tone)| MemoryItem { id: format!("m-{id}"), context, reaction, emotions, tone })
}

fn bank() -> impl Strategy<Value = MemoryBank> {
    (state(), 0usize..12).prop_flat_map(|(s, n)| {
        (0..n).map(item).collect::<Vec<_>>().prop_map(move |items| MemoryBank::from_items(s, items).unwrap())
    })
}

fn candidate() -> impl Strategy<Value = CandidateResponse> {
    (state(), text(), proptest::option::of(text()), proptest::collection::vec((item(0), -1.0f64..=1.0), 0..3), proptest::option::of(text()))
        .prop_map(|(source_state, text, query_used, hits, tone_hint)| CandidateResponse {
            source_state,
            text,
            query_used,
            retrieved: hits.into_iter().map(|(item, score)| RetrievalResult { item, score }).collect(),
            tone_hint,
        })
}

fn transcript() -> impl Strategy<Value = Transcript> {
    let turn = (text(), text(), state(), state(), proptest::collection::vec(candidate(), 0..4), any::<bool>());
    (text(), any::<bool>(), any::<u64>(), proptest::collection::vec(turn, 0..6)).prop_map(|(id, on, seed, turns)| Transcript {
        scenario_id: id,
        condition: if on { Condition::MemoryOn } else { Condition::MemoryOff },
        seed,
        turns: turns
            .into_iter()
            .enumerate()
            .map(|(index, (speaker, text, selected_state, addressed_state, candidates, fallback_used))| Turn {
                index,
                speaker,
                text,
                selected_state,
                addressed_state,
                candidates,
                fallback_used,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn banks_round_trip(b in bank()) {
        prop_assert_eq!(&MemoryBank::from_json(&b.to_json()).unwrap(), &b);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        save_bank(&b, &path).unwrap();
        let back = load_bank(&path, &|t: &str| tasim_core::gateway::scripted::hash_bag_embedding(t, 16)).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(back.is_indexed(), true);
    }

    #[test]
    fn transcripts_round_trip(t in transcript()) {
        let json = t.to_json();
        let back = Transcript::from_json(&json).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_json(), json);
    }
}
