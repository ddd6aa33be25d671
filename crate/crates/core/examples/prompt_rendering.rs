//! List the bundled prompt templates and render one of them.

use simweave::prompts::{parse_options, OptionKind, Registry, TemplateId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = Registry::builtin()?;
    for t in registry.iter() {
        let vars: Vec<&str> = t.required_vars.iter().map(String::as_str).collect();
        println!(
            "{:<28} {}  [{}]",
            t.id.as_str(),
            &t.checksum()[..12],
            vars.join(", ")
        );
    }

    let prompt = registry.render(
        TemplateId::ConceptGraph,
        &[(
            "learningContent",
            "Light bends when it passes from air into water.",
        )],
    )?;
    println!("\n--- concept_graph prompt ({} chars) ---", prompt.len());
    println!("{}", prompt.lines().take(6).collect::<Vec<_>>().join("\n"));

    let reply = "Here are some ideas: {{Straw in a Glass}} A straw looks broken at the waterline. | \
{{Spear Fishing}} The fish is not where it appears. | {{Pool Depth}} The pool looks shallower than it is.";
    for (i, o) in parse_options(reply, OptionKind::Scenario)?
        .iter()
        .enumerate()
    {
        println!("option {i}: {} / {}", o.title, o.description);
    }
    Ok(())
}
