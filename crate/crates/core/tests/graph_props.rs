use std::collections::HashSet;

use proptest::prelude::*;
use simweave::graph::{
    apply_widget, diff_graphs, parse_graph, parse_graph_bytes, serialize_graph, Direction, Graph,
    WidgetAction,
};

fn arb_graph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = Graph> {
    let ids = prop::collection::btree_set("[A-Za-z][A-Za-z0-9_.-]{0,8}", 0..=max_nodes);
    (any::<bool>(), ids).prop_flat_map(move |(lr, ids)| {
        let ids: Vec<String> = ids.into_iter().collect();
        let n = ids.len();
        let labels = prop::collection::vec("[A-Za-z0-9][A-Za-z0-9 ,.()'%-]{0,15}", n);
        let edges = if n == 0 {
            Just(Vec::new()).boxed()
        } else {
            prop::collection::vec((0..n, 0..n, "[a-z][a-z0-9 ]{0,12}"), 0..=max_edges).boxed()
        };
        (Just(lr), Just(ids), labels, edges).prop_map(|(lr, ids, labels, edges)| {
            let mut g = Graph::new(if lr { Direction::LR } else { Direction::TD });
            for (id, label) in ids.iter().zip(labels) {
                g.add_node(id.clone(), label).unwrap();
            }
            for (s, t, label) in edges {
                // Duplicate triples are skipped by construction.
                let _ = g.add_edge(ids[s].clone(), ids[t].clone(), label);
            }
            g
        })
    })
}

/// Independent invariant check: brute-force scan, no use of Graph helpers.
fn structurally_sound(g: &Graph) -> bool {
    let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
    let unique: HashSet<&str> = ids.iter().copied().collect();
    if unique.len() != ids.len() {
        return false;
    }
    let mut triples = HashSet::new();
    for e in g.edges() {
        if !ids.contains(&e.source.as_str()) || !ids.contains(&e.target.as_str()) {
            return false;
        }
        if !triples.insert((&e.source, &e.target, &e.label)) {
            return false;
        }
    }
    true
}

fn arb_action(g: &Graph) -> BoxedStrategy<WidgetAction> {
    let ids: Vec<String> = g.nodes().iter().map(|n| n.id.clone()).collect();
    let edges: Vec<(String, String, String)> = g
        .edges()
        .iter()
        .map(|e| (e.source.clone(), e.target.clone(), e.label.clone()))
        .collect();
    let mut pool = ids.clone();
    pool.push("Ghost".to_string());
    let pick = prop::sample::select(pool);
    let label = "[A-Za-z][a-z ]{0,10}";
    let mut options: Vec<BoxedStrategy<WidgetAction>> = vec![
        label.prop_map(WidgetAction::add_node).boxed(),
        (pick.clone(), pick.clone(), label)
            .prop_map(|(s, t, l)| WidgetAction::add_link(s, t, l))
            .boxed(),
        pick.clone().prop_map(WidgetAction::remove_node).boxed(),
        (pick.clone(), label)
            .prop_map(|(id, l)| WidgetAction::edit_node_label(id, l))
            .boxed(),
    ];
    if !edges.is_empty() {
        let edge = prop::sample::select(edges);
        options.push(
            edge.clone()
                .prop_map(|(s, t, l)| WidgetAction::remove_link(s, t, l))
                .boxed(),
        );
        options.push(
            (edge, label)
                .prop_map(|((s, t, old), new)| WidgetAction::edit_link_label(s, t, old, new))
                .boxed(),
        );
    }
    prop::strategy::Union::new(options).boxed()
}

fn arb_graph_and_edits(len: usize) -> impl Strategy<Value = (Graph, Vec<WidgetAction>, Graph)> {
    let mut strat: BoxedStrategy<(Graph, Vec<WidgetAction>, Graph)> = arb_graph(8, 12)
        .prop_map(|g| (g.clone(), Vec::new(), g))
        .boxed();
    for _ in 0..len {
        strat = strat
            .prop_flat_map(|(start, actions, current)| {
                let next = arb_action(&current);
                (Just(start), Just(actions), Just(current), next)
            })
            .prop_map(|(start, mut actions, current, action)| {
                let next = apply_widget(&current, &action).unwrap_or(current);
                actions.push(action);
                (start, actions, next)
            })
            .boxed();
    }
    strat
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn parse_serialize_roundtrip(g in arb_graph(30, 60)) {
        let text = serialize_graph(&g);
        let parsed = parse_graph(&text).unwrap();
        prop_assert_eq!(&parsed, &g);
        prop_assert_eq!(serialize_graph(&parsed), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn widget_edits_preserve_invariants((start, actions, _end) in arb_graph_and_edits(20)) {
        let mut g = start;
        for a in &actions {
            let before = g.clone();
            match apply_widget(&g, a) {
                Ok(next) => {
                    prop_assert!(structurally_sound(&next), "{:?} broke {:?}", a, before);
                    g = next;
                }
                Err(_) => prop_assert_eq!(&g, &before),
            }
        }
    }

    #[test]
    fn diff_replay_closure((start, _actions, end) in arb_graph_and_edits(20)) {
        let script = diff_graphs(&start, &end);
        let mut g = start.clone();
        for a in &script {
            g = apply_widget(&g, a).unwrap();
        }
        prop_assert_eq!(g, end);
    }

    #[test]
    fn parse_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..4096)) {
        let _ = parse_graph_bytes(&bytes);
    }

    #[test]
    fn parse_never_panics_on_graphish_text(text in "(graph (LR|TD)\n)?([ \t]{0,6}[A-Za-z\\[\\]|>\\- ]{0,30}\n){0,20}") {
        if let Ok(g) = parse_graph(&text) {
            prop_assert!(structurally_sound(&g));
        }
    }
}

#[test]
fn parse_handles_64k_of_noise() {
    let mut rng_state = 0x2545_f491_4f6c_dd1du64;
    let mut bytes = Vec::with_capacity(64 * 1024);
    while bytes.len() < 64 * 1024 {
        rng_state ^= rng_state << 13;
        rng_state ^= rng_state >> 7;
        rng_state ^= rng_state << 17;
        bytes.push(rng_state as u8);
    }
    assert!(parse_graph_bytes(&bytes).is_err());
    let mut text = String::from("graph LR\n");
    for i in 0..2000 {
        text.push_str(&format!("    N{i}[Node {i}]\n"));
    }
    assert_eq!(parse_graph(&text).unwrap().nodes().len(), 2000);
}
