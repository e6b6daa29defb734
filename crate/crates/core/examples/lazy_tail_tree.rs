//! The tail store on its own: subtree adds and point queries over a forest,
//! with the work each one costs.

use bolt::harness::eager::EagerTails;
use bolt::ltt::{LazyTailTree, TailForest};
use bolt::{LogId, Position};

fn build<T: TailForest>(t: &mut T, forks: u64) {
    t.insert_root(LogId(1), Position(0));
    for i in 0..forks {
        t.insert_child(LogId(1), LogId(i + 2), Position(0)).unwrap();
    }
}

fn main() {
    let forks = 1000;
    let mut lazy = LazyTailTree::new();
    let mut eager = EagerTails::new();
    build(&mut lazy, forks);
    build(&mut eager, forks);

    let (l0, e0) = (lazy.touched(), eager.touched());
    lazy.subtree_add(LogId(1), 1).unwrap();
    eager.subtree_add(LogId(1), 1).unwrap();
    println!("one root append with {forks} forks: lazy touched {}, eager touched {}", lazy.touched() - l0, eager.touched() - e0);

    let probe = LogId(forks / 2);
    assert_eq!(lazy.tail_query(probe).unwrap(), eager.tail_query(probe).unwrap());
    println!("tail of {probe}: {}", lazy.tail_query(probe).unwrap());
    println!("tree height {}", lazy.depth());
}
