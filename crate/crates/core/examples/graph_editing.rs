//! Parse a graph, edit it through widget actions, then diff and slice it.

use simweave::graph::{apply_widget, diff_graphs, parse_graph, WidgetAction};

const CONCEPT: &str = "graph TD
    Obj[Object]
    Fluid[Fluid]
    Buoy[Buoyant force]
    Weight[Weight]
    Obj -->|displaces| Fluid
    Fluid -->|pushes up| Buoy
    Weight -->|pulls down| Obj
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let before = parse_graph(CONCEPT)?;
    println!(
        "parsed {} nodes, {} edges",
        before.nodes().len(),
        before.edges().len()
    );

    let actions = [
        WidgetAction::add_node("Density"),
        WidgetAction::add_link("Density", "Buoy", "scales"),
        WidgetAction::edit_node_label("Fluid", "Surrounding fluid"),
        WidgetAction::remove_link("Weight", "Obj", "pulls down"),
    ];
    let mut after = before.clone();
    for a in &actions {
        after = apply_widget(&after, a)?;
    }
    println!("{}", after.serialize());

    println!("\ndiff back as widget actions:");
    for a in diff_graphs(&before, &after) {
        println!("  {}", serde_json::to_string(&a)?);
    }

    let core = after.extract_subgraph(["Obj", "Fluid", "Buoy"])?;
    println!("\nsubgraph:\n{}", core.serialize());
    assert_eq!(parse_graph(&after.serialize())?, after);
    Ok(())
}
