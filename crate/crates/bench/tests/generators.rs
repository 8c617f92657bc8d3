use tgc_bench::{document, document_graph, random_tensor, rng};

#[test]
fn generators_are_seeded() {
    assert_eq!(document(&mut rng(4), 30, 10), document(&mut rng(4), 30, 10));
    assert_eq!(random_tensor(&mut rng(4), 3, 2), random_tensor(&mut rng(4), 3, 2));
    let g = document_graph(&mut rng(4), 200, 100);
    assert!(g.node_count() <= 100);
    assert!(g.adjacency.is_symmetric(0.0));
}
