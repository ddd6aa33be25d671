//! Walk a session from learning content to a shared simulation, offline,
//! using the recorded balloon cassette and the scripted page behaviour.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use simweave::harness::{Behavior, FakeDriverFactory};
use simweave::llm::Gateway;
use simweave::pipeline::{replay_journal, Command, Engine, GoalPick, ScenarioPick, StageId};
use simweave::prompts::Registry;
use simweave::resolution::Complaint;

const CONTENT: &str = "Buoyancy: an object in a fluid is pushed up by a force equal to the weight \
of the fluid it displaces. Denser fluids and larger displaced volumes give a larger buoyant force. \
An object rises when the buoyant force exceeds its weight and sinks when it does not.";

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/balloon");
    let engine = Engine::new(
        Arc::new(Registry::builtin()?),
        Arc::new(Gateway::replay_file(&dir.join("cassette.ndjson"))?),
        Arc::new(FakeDriverFactory::new(Behavior::load(
            &dir.join("behavior.json"),
        )?)),
    )
    .with_settle(Duration::ZERO);

    let commit = |stage| Command::Commit { stage };
    let script = vec![
        Command::SubmitContent {
            text: CONTENT.into(),
        },
        commit(StageId::Concept),
        Command::ListScenarios,
        Command::SelectScenario {
            choice: ScenarioPick::Index(0),
        },
        commit(StageId::Scenario),
        Command::ListGoals,
        Command::SelectGoal {
            choice: GoalPick::Index(1),
        },
        commit(StageId::LearningGoal),
        Command::Generate,
        commit(StageId::UiGraph),
        commit(StageId::Code),
        Command::RunTests,
        Command::Play { case: 0 },
        Command::Verdict {
            case: 0,
            pass: false,
            note: "There is no readout for the weight".into(),
        },
        Command::Reject { index: 0 },
        Command::Chat {
            complaint: Complaint::new("Make the weight slider range from 5 to 105kg"),
            type_code: None,
        },
        Command::Accept {
            index: 1,
            edited: None,
            screenshot: None,
        },
        commit(StageId::Code),
    ];

    let mut session = Engine::session_with_id("example");
    for cmd in script {
        let label = serde_json::to_value(&cmd)?["command"]
            .as_str()
            .unwrap_or("?")
            .to_string();
        let done = engine.execute(&mut session, cmd).await?;
        println!(
            "{label:<16} -> journal #{:<3} warnings: {}",
            done.journal_ref,
            done.warnings.len()
        );
    }

    println!("\nstages:");
    for (stage, status) in session.statuses() {
        println!("  {stage:<14} {status:?}");
    }
    println!(
        "\nUI graph:\n{}",
        session
            .graph(StageId::UiGraph)
            .map(|g| g.serialize())
            .unwrap_or_default()
    );
    println!("document: {} bytes", session.document().map_or(0, str::len));

    let rebuilt = replay_journal(&engine, &session.journal).await?;
    println!(
        "journal replay matches: {}",
        rebuilt.without_timestamps() == session.without_timestamps()
    );
    Ok(())
}
