//! Route an author complaint to a change type, fill in the matching
//! suggestion and turn graph suggestions into widget actions.

use std::sync::Arc;

use simweave::graph::parse_graph;
use simweave::llm::{Gateway, ScriptedProvider};
use simweave::prompts::Registry;
use simweave::resolution::{graph_action, Complaint, Resolver};

const UI: &str = "graph LR
    WeightSlider[Weight Slider]
    Sky[Sky Canvas]
    AltitudeReadout[Altitude Readout]
    WeightSlider -->|sets weight in| Sky
    Sky -->|reports| AltitudeReadout
";

const DOC: &str =
    "<html><body><input id=\"weight\" type=\"range\"><canvas id=\"sky\"></canvas></body></html>";

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ui = parse_graph(UI)?;
    // the classifier first answers in prose, then a repair request gets a number
    let provider = ScriptedProvider::new()
        .reply("suggest_change", "This is about adding something new.")
        .reply("reply_repair", "1")
        .reply(
            "populate_add_node",
            r#"{"type": 1, "message": "Add a readout for the weight.", "label": "Weight Readout"}"#,
        )
        .into_arc();
    let resolver = Resolver::new(
        Arc::new(Registry::builtin()?),
        Arc::new(Gateway::live(provider.clone())),
    );

    let mut complaint = Complaint::new("There is no readout for the @weight slider");
    complaint.mention_refs.push("WeightSlider".into());

    let (code, warnings) = resolver.classify_change(&complaint, DOC, &ui).await?;
    println!("change type {code} ({} warnings)", warnings.len());
    let (populated, _) = resolver
        .populate_suggestion(code, &complaint, DOC, &ui)
        .await?;
    println!("suggestion valid: {}", populated.valid);
    println!("{}", serde_json::to_string_pretty(&populated.suggestion)?);
    if let Some(action) = graph_action(&populated.suggestion.payload) {
        println!("as widget action: {}", serde_json::to_string(&action)?);
    }

    let unknown = {
        let mut c = Complaint::new("Fix @ghost");
        c.mention_refs.push("Ghost".into());
        c
    };
    println!(
        "unknown mention: {}",
        resolver
            .classify_change(&unknown, DOC, &ui)
            .await
            .unwrap_err()
    );
    println!("model calls: {}", provider.calls());
    Ok(())
}
