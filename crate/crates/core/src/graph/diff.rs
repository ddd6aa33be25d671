use std::collections::HashSet;

use super::widget::{apply_widget, mint_node_id, slug, WidgetAction};
use super::{Edge, Graph};

/// Computes a widget-action script that turns `before` into `after`.
///
/// Nodes are matched by id first: the longest order-preserving prefix of
/// `after` whose ids exist in `before` is kept, everything else in `before`
/// is removed, and the rest of `after` is appended. Surviving nodes and
/// edges are then matched by label. For graphs reachable from `before`
/// through widget edits, replaying the script reproduces `after` exactly,
/// including declaration order and minted ids.
pub fn diff_graphs(before: &Graph, after: &Graph) -> Vec<WidgetAction> {
    let primary = build_script(before, after, false);
    if replays_to(before, &primary, after) {
        return primary;
    }
    let fallback = build_script(before, after, true);
    if replays_to(before, &fallback, after) {
        fallback
    } else {
        primary
    }
}

fn replays_to(before: &Graph, script: &[WidgetAction], after: &Graph) -> bool {
    let mut g = before.clone();
    for a in script {
        match apply_widget(&g, a) {
            Ok(next) => g = next,
            Err(_) => return false,
        }
    }
    &g == after
}

fn apply(work: &mut Graph, actions: &mut Vec<WidgetAction>, action: WidgetAction) {
    if let Ok(next) = apply_widget(work, &action) {
        *work = next;
    }
    actions.push(action);
}

fn build_script(before: &Graph, after: &Graph, rebuild_edges: bool) -> Vec<WidgetAction> {
    let mut actions = Vec::new();
    let mut work = before.clone();

    // Nodes: longest prefix of `after` that appears in `before` in order.
    let mut kept: HashSet<&str> = HashSet::new();
    let mut last = None;
    let mut node_split = 0;
    for (i, n) in after.nodes().iter().enumerate() {
        match before.nodes().iter().position(|b| b.id == n.id) {
            Some(p) if last.is_none_or(|l| p > l) => {
                kept.insert(n.id.as_str());
                last = Some(p);
                node_split = i + 1;
            }
            _ => break,
        }
    }
    for b in before.nodes() {
        if !kept.contains(b.id.as_str()) {
            apply(
                &mut work,
                &mut actions,
                WidgetAction::remove_node(b.id.clone()),
            );
        }
    }

    // Edges among surviving nodes.
    let working_edges: Vec<Edge> = work.edges().to_vec();
    let wanted: HashSet<&Edge> = after.edges().iter().collect();
    let mut matched = vec![false; working_edges.len()];
    let mut edits = Vec::new();
    let mut edge_split = 0;
    if !rebuild_edges {
        let mut p = 0;
        for e in after.edges() {
            if !kept.contains(e.source.as_str()) || !kept.contains(e.target.as_str()) {
                break;
            }
            let exact = (p..working_edges.len()).find(|&q| working_edges[q] == *e);
            let relabel = || {
                (p..working_edges.len()).find(|&q| {
                    let w = &working_edges[q];
                    w.source == e.source && w.target == e.target && !wanted.contains(w)
                })
            };
            match exact.or_else(relabel) {
                Some(q) => {
                    matched[q] = true;
                    if working_edges[q].label != e.label {
                        edits.push(WidgetAction::edit_link_label(
                            e.source.clone(),
                            e.target.clone(),
                            working_edges[q].label.clone(),
                            e.label.clone(),
                        ));
                    }
                    p = q + 1;
                    edge_split += 1;
                }
                None => break,
            }
        }
    }
    for (w, _) in working_edges.iter().zip(&matched).filter(|(_, m)| !**m) {
        apply(
            &mut work,
            &mut actions,
            WidgetAction::remove_link(w.source.clone(), w.target.clone(), w.label.clone()),
        );
    }

    for n in &after.nodes()[..node_split] {
        if work.node(&n.id).is_some_and(|w| w.label != n.label) {
            apply(
                &mut work,
                &mut actions,
                WidgetAction::edit_node_label(n.id.clone(), n.label.clone()),
            );
        }
    }
    for edit in edits {
        apply(&mut work, &mut actions, edit);
    }

    for n in &after.nodes()[node_split..] {
        add_node_as(&mut work, &mut actions, &n.id, &n.label);
    }
    for e in &after.edges()[edge_split..] {
        apply(
            &mut work,
            &mut actions,
            WidgetAction::add_link(e.source.clone(), e.target.clone(), e.label.clone()),
        );
    }
    actions
}

/// `Foo_3` → (`Foo`, 3); anything else → (id, 1).
fn split_suffix(id: &str) -> (&str, u64) {
    if let Some((base, digits)) = id.rsplit_once('_') {
        if !base.is_empty()
            && !digits.starts_with('0')
            && digits.bytes().all(|b| b.is_ascii_digit())
        {
            if let Ok(k) = digits.parse::<u64>() {
                if k >= 2 {
                    return (base, k);
                }
            }
        }
    }
    (id, 1)
}

/// Emits the AddNode sequence that mints exactly `id`, padding any
/// lower-numbered collision slots with temporary nodes.
fn add_node_as(work: &mut Graph, actions: &mut Vec<WidgetAction>, id: &str, label: &str) {
    if mint_node_id(work, label) == id {
        apply(work, actions, WidgetAction::add_node(label));
        return;
    }
    let (base, _) = split_suffix(id);
    if slug(base) != base || work.contains_node(id) {
        apply(work, actions, WidgetAction::add_node(label));
        return;
    }
    let mint_label = if slug(label) == base { label } else { base };
    let mut placeholders = Vec::new();
    loop {
        let next = mint_node_id(work, base);
        if next == id {
            break;
        }
        placeholders.push(next);
        apply(work, actions, WidgetAction::add_node(base));
    }
    apply(work, actions, WidgetAction::add_node(mint_label));
    if mint_label != label {
        apply(work, actions, WidgetAction::edit_node_label(id, label));
    }
    for p in placeholders {
        apply(work, actions, WidgetAction::remove_node(p));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;

    fn base() -> Graph {
        parse_graph(
            "graph LR\n    Balloon[Balloon]\n    Air[Hot air]\n    Burner[Burner]\n    Burner -->|heats| Air\n    Air -->|lifts| Balloon",
        )
        .unwrap()
    }

    #[test]
    fn identical_graphs_have_empty_diff() {
        assert!(diff_graphs(&base(), &base()).is_empty());
    }

    #[test]
    fn single_add_link() {
        let action = WidgetAction::add_link("Burner", "Balloon", "propels");
        let after = apply_widget(&base(), &action).unwrap();
        assert_eq!(diff_graphs(&base(), &after), vec![action]);
    }

    #[test]
    fn remove_node_is_one_action() {
        let action = WidgetAction::remove_node("Air");
        let after = apply_widget(&base(), &action).unwrap();
        assert_eq!(diff_graphs(&base(), &after), vec![action]);
    }

    #[test]
    fn suffix_ids_are_reproduced() {
        let script = [
            WidgetAction::add_node("Sand bag"),
            WidgetAction::add_node("Sand bag"),
            WidgetAction::remove_node("SandBag"),
            WidgetAction::edit_node_label("SandBag_2", "Ballast"),
            WidgetAction::add_link("SandBag_2", "Balloon", "weighs down"),
        ];
        let mut after = base();
        for a in &script {
            after = apply_widget(&after, a).unwrap();
        }
        let diff = diff_graphs(&base(), &after);
        assert!(replays_to(&base(), &diff, &after), "{diff:?}");
    }

    #[test]
    fn relabelled_edge_is_an_edit() {
        let action = WidgetAction::edit_link_label("Air", "Balloon", "lifts", "raises");
        let after = apply_widget(&base(), &action).unwrap();
        assert_eq!(diff_graphs(&base(), &after), vec![action]);
    }
}
