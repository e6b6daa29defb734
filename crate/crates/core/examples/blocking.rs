//! What a live promotable fork blocks, and what unblocks it.

use bolt::{Assigned, Command, ForestState, ObjectId, Position, RecordMeta};

fn rec(log: bolt::LogId, tag: u8) -> Command {
    Command::SequenceBatch { object_id: ObjectId([tag; 16]), records: vec![RecordMeta { log, byte_offset: 12, byte_length: 1 }] }
}

fn main() {
    let mut st = ForestState::new();
    let g = st.create_root();
    for t in 0..3 {
        st.apply(&rec(g, t)).unwrap();
    }
    let sib = st.create_cfork(g, false).unwrap();
    let p = st.create_cfork(g, true).unwrap();

    let out = st.apply(&rec(g, 9)).unwrap();
    println!("parent append -> {out:?}");
    assert_eq!(st.get_tail(g).unwrap(), Assigned::Withheld);
    println!("parent read [0,4): {}", st.read_meta(g, Position(0), Position(4)).unwrap_err());
    println!("sibling append:   {}", st.apply(&rec(sib, 7)).unwrap_err());
    println!("fork append:      {:?}", st.apply(&rec(p, 8)).unwrap());

    st.squash(p).unwrap();
    println!("after squash: parent tail {}, sibling append {:?}", st.get_tail(g).unwrap(), st.apply(&rec(sib, 7)).unwrap());
}
