#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use simweave::harness::{Behavior, FakeDriverFactory};
use simweave::llm::{Gateway, ScriptedProvider};
use simweave::pipeline::{Command, Engine, GoalPick, ScenarioPick, StageId};
use simweave::prompts::{BoundingBox, Registry};
use simweave::resolution::Complaint;

pub const BALLOON_CONTENT: &str =
    "Buoyancy: an object in a fluid is pushed up by a force equal to the weight \
of the fluid it displaces. Denser fluids and larger displaced volumes give a larger buoyant force. \
An object rises when the buoyant force exceeds its weight and sinks when it does not.";

/// Also used by the server crate's tests, hence the fallback.
pub fn fixture(name: &str) -> PathBuf {
    let here = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = if here.join("fixtures").is_dir() {
        here.join("fixtures")
    } else {
        here.join("../core/fixtures")
    };
    dir.join(name)
}

pub fn scripted(name: &str) -> ScriptedProvider {
    let text = std::fs::read_to_string(fixture(name).join("replies.toml")).expect("reply script");
    ScriptedProvider::from_toml(&text).expect("valid reply script")
}

/// The reply script of `name` with the first reply of each listed tag
/// replaced.
pub fn scripted_with(name: &str, overrides: &[(&str, &str)]) -> ScriptedProvider {
    let text = std::fs::read_to_string(fixture(name).join("replies.toml")).expect("reply script");
    let mut script: toml::Table = toml::from_str(&text).expect("valid reply script");
    let replies = script
        .get_mut("reply")
        .and_then(|v| v.as_array_mut())
        .expect("reply list");
    for (tag, new) in overrides {
        let slot = replies
            .iter_mut()
            .find(|r| r["tag"].as_str() == Some(tag))
            .unwrap_or_else(|| panic!("no `{tag}` reply in {name}"));
        slot["text"] = toml::Value::String(new.to_string());
    }
    ScriptedProvider::from_toml(&toml::to_string(&script).unwrap()).unwrap()
}

/// Reply text of the first `tag` reply in a script.
pub fn reply_text(name: &str, tag: &str) -> String {
    let text = std::fs::read_to_string(fixture(name).join("replies.toml")).expect("reply script");
    let script: toml::Table = toml::from_str(&text).expect("valid reply script");
    script["reply"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["tag"].as_str() == Some(tag))
        .and_then(|r| r["text"].as_str())
        .unwrap_or_else(|| panic!("no `{tag}` reply in {name}"))
        .to_string()
}

pub fn behavior(name: &str) -> Behavior {
    Behavior::load(&fixture(name).join("behavior.json")).expect("behavior file")
}

pub fn engine_over(gateway: Gateway, behavior: Behavior) -> Engine {
    Engine::new(
        Arc::new(Registry::builtin().expect("builtin prompts")),
        Arc::new(gateway.with_retry_delay(Duration::ZERO)),
        Arc::new(FakeDriverFactory::new(behavior)),
    )
    .with_settle(Duration::ZERO)
}

/// Engine answering from `provider`, which the caller keeps to inspect.
pub fn engine_with(provider: Arc<ScriptedProvider>, behavior: Behavior) -> Engine {
    engine_over(Gateway::live(provider), behavior)
}

pub fn balloon_engine() -> (Engine, Arc<ScriptedProvider>) {
    let p = scripted("balloon").into_arc();
    (engine_with(p.clone(), behavior("balloon")), p)
}

pub fn commit(stage: StageId) -> Command {
    Command::Commit { stage }
}

pub const STATES_CONTENT: &str =
    "Matter exists as a solid, a liquid or a gas. Heating speeds up particle \
motion until a solid melts into a liquid and a liquid boils into a gas.";

pub const PLANT_CONTENT: &str =
    "Plants use sunlight and water for photosynthesis, which produces the sugars \
they need to grow. Less light means less photosynthesis and slower growth.";

/// Fixture chains with their learning content and the goal each picks.
pub const CHAINS: [(&str, &str, usize); 3] = [
    ("balloon", BALLOON_CONTENT, 1),
    ("states-of-matter", STATES_CONTENT, 2),
    ("plant", PLANT_CONTENT, 0),
];

/// Content to committed learning goal.
pub fn to_goal(content: &str, goal: usize) -> Vec<Command> {
    vec![
        Command::SubmitContent {
            text: content.into(),
        },
        commit(StageId::Concept),
        Command::ListScenarios,
        Command::SelectScenario {
            choice: ScenarioPick::Index(0),
        },
        commit(StageId::Scenario),
        Command::ListGoals,
        Command::SelectGoal {
            choice: GoalPick::Index(goal),
        },
        commit(StageId::LearningGoal),
    ]
}

/// Content to committed code.
pub fn chain_script(content: &str, goal: usize) -> Vec<Command> {
    let mut cmds = to_goal(content, goal);
    cmds.extend([
        Command::Generate,
        commit(StageId::UiGraph),
        commit(StageId::Code),
    ]);
    cmds
}

pub fn balloon_to_goal() -> Vec<Command> {
    to_goal(BALLOON_CONTENT, 1)
}

/// The full balloon walkthrough after session creation: authoring, a
/// test cycle, guided testing, three suggestions, annotation tools and a
/// share. Consumes every reply in the balloon script.
pub fn balloon_walkthrough() -> Vec<Command> {
    let mut cmds = balloon_to_goal();
    cmds.extend([
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
        Command::Annotate {
            bbox: BoundingBox::from([180.0, 120.0, 140.0, 180.0]),
        },
        Command::SelectSubgraph { screenshot: None },
        Command::GetAssumptions,
        Command::Chat {
            complaint: Complaint::new("Show the burner flame when it fires"),
            type_code: Some(1),
        },
        Command::Accept {
            index: 2,
            edited: None,
            screenshot: None,
        },
        Command::Share {
            simulation_id: "balloon-share".into(),
        },
    ]);
    cmds
}
