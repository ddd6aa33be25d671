//! Runs every primary acceptance criterion and prints one line per
//! criterion. Exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::collections::{BTreeSet, HashSet};
use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::http::Method;
use futures::FutureExt;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use simweave::graph::{
    apply_widget, diff_graphs, parse_graph, parse_graph_bytes, Direction, Graph, WidgetAction,
};
use simweave::harness::contract::{reference_behavior, BROKEN_DOCUMENT, REFERENCE_DOCUMENT};
use simweave::harness::{
    missing_markers, parse_test_cases, ActionType, FakeDriverFactory, Harness, HarnessError,
    TestCase,
};
use simweave::llm::{Cassette, Gateway, ScriptedProvider};
use simweave::pipeline::{
    parse_journal, replay_journal, Command, Engine, Outcome, Session, StageId, StageStatus,
};
use simweave::prompts::{
    extract_graph, parse_widget_json, payload_fields, ExtractError, Registry, TemplateId,
};
use simweave::resolution::{graph_action, Complaint, ResolutionError, Resolver};
use simweave::WarningCode;
use simweave_server::{MemoryStore, Store};

type Check = Pin<Box<dyn Future<Output = String>>>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap();
    let criteria: Vec<Criterion> = vec![
        (
            "graph round-trip",
            || Box::pin(graph_round_trip()),
            Duration::from_secs(5),
        ),
        (
            "widget-op safety",
            || Box::pin(widget_fuzz()),
            Duration::from_secs(10),
        ),
        (
            "parser robustness",
            || Box::pin(parser_fuzz()),
            Duration::MAX,
        ),
        (
            "end-to-end replay walkthrough",
            || Box::pin(replay_walkthrough()),
            Duration::from_secs(30),
        ),
        (
            "structural invariants on fixtures",
            || Box::pin(structural_invariants()),
            Duration::MAX,
        ),
        (
            "resolution routing",
            || Box::pin(resolution_routing()),
            Duration::MAX,
        ),
        (
            "harness termination and partition",
            || Box::pin(harness_checks()),
            Duration::MAX,
        ),
        (
            "API/journal consistency",
            || Box::pin(api_journal()),
            Duration::MAX,
        ),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = rt.block_on(AssertUnwindSafe(check()).catch_unwind());
        let took = start.elapsed();
        let line = match result {
            Ok(detail) if took <= budget => format!("PASS {name}: {detail} ({took:.2?})"),
            Ok(detail) => format!("FAIL {name}: {detail}, over the {budget:?} budget ({took:.2?})"),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL {name}: {msg} ({took:.2?})")
            }
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("{line}");
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---- graph generation ----

const WORDS: &[&str] = &[
    "heat", "Air", "lift", "Mass", "ice", "water", "Sun", "plant", "x2", "Big Bear", "v1.0",
];

fn word(rng: &mut StdRng) -> String {
    WORDS.choose(rng).unwrap().to_string()
}

fn random_id(rng: &mut StdRng) -> String {
    let len = rng.random_range(1..=8);
    let mut id = String::new();
    id.push(rng.random_range(b'A'..=b'Z') as char);
    for _ in 1..len {
        let c = *b"abcdefghijklmnopqrstuvwxyz0123456789_"
            .choose(rng)
            .unwrap();
        id.push(c as char);
    }
    id
}

fn random_label(rng: &mut StdRng) -> String {
    (0..rng.random_range(1..=3))
        .map(|_| word(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_graph(rng: &mut StdRng, max_nodes: usize, max_edges: usize) -> Graph {
    let dir = if rng.random_bool(0.5) {
        Direction::LR
    } else {
        Direction::TD
    };
    let mut g = Graph::new(dir);
    let mut ids = Vec::new();
    for _ in 0..rng.random_range(0..=max_nodes) {
        let id = random_id(rng);
        if !ids.contains(&id) {
            g.add_node(id.clone(), random_label(rng)).unwrap();
            ids.push(id);
        }
    }
    if !ids.is_empty() {
        for _ in 0..rng.random_range(0..=max_edges) {
            let s = ids.choose(rng).unwrap().clone();
            let t = ids.choose(rng).unwrap().clone();
            // repeated triples are refused; skipping them keeps the graph valid
            let _ = g.add_edge(s, t, word(rng).to_lowercase());
        }
    }
    g
}

/// Brute-force structural check that uses no graph helpers.
fn sound(g: &Graph) -> Result<(), String> {
    let ids: Vec<&str> = g.nodes().iter().map(|n| n.id.as_str()).collect();
    if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
        return Err("duplicate node id".into());
    }
    let mut triples = HashSet::new();
    for e in g.edges() {
        if !ids.contains(&e.source.as_str()) || !ids.contains(&e.target.as_str()) {
            return Err(format!("dangling edge {e}"));
        }
        if !triples.insert((&e.source, &e.target, &e.label)) {
            return Err(format!("repeated edge {e}"));
        }
    }
    Ok(())
}

// ---- criteria ----

async fn graph_round_trip() -> String {
    let mut rng = StdRng::seed_from_u64(1);
    for i in 0..1000 {
        let g = random_graph(&mut rng, 30, 60);
        let text = g.serialize();
        let back = parse_graph(&text).unwrap_or_else(|e| panic!("graph {i}: {e:?}\n{text}"));
        assert_eq!(back, g, "graph {i}: parse after serialize");
        assert_eq!(back.serialize(), text, "graph {i}: serialize after parse");
    }
    "1000 graphs, 0 failures".into()
}

const BAD_NODE_LABELS: &[&str] = &["", "   ", "a[b", "c]", "p\nq", "a-->b"];
const BAD_EDGE_LABELS: &[&str] = &["", " ", "x|y", "p\nq"];

fn pick_id(rng: &mut StdRng, g: &Graph) -> String {
    if g.nodes().is_empty() || rng.random_bool(0.15) {
        "Ghost".into()
    } else {
        g.nodes().choose(rng).unwrap().id.clone()
    }
}

/// A random action and whether it should succeed, judged from the rules
/// alone: referents must exist, labels must be usable, triples unique.
fn random_action(rng: &mut StdRng, g: &Graph) -> (WidgetAction, bool) {
    let node_label = |rng: &mut StdRng| {
        if rng.random_bool(0.1) {
            (BAD_NODE_LABELS.choose(rng).unwrap().to_string(), false)
        } else {
            (random_label(rng), true)
        }
    };
    let edge_label = |rng: &mut StdRng| {
        if rng.random_bool(0.1) {
            (BAD_EDGE_LABELS.choose(rng).unwrap().to_string(), false)
        } else {
            (word(rng).to_lowercase(), true)
        }
    };
    let has = |id: &str| g.nodes().iter().any(|n| n.id == id);
    let has_edge = |s: &str, t: &str, l: &str| {
        g.edges()
            .iter()
            .any(|e| e.source == s && e.target == t && e.label == l)
    };
    let existing_edge = |rng: &mut StdRng| match g.edges().choose(rng) {
        Some(e) if rng.random_bool(0.85) => (e.source.clone(), e.target.clone(), e.label.clone()),
        _ => (pick_id(rng, g), pick_id(rng, g), "nowhere".to_string()),
    };
    match rng.random_range(0..6) {
        0 => {
            let (l, ok) = node_label(rng);
            (WidgetAction::add_node(l), ok)
        }
        1 => {
            let (s, t) = (pick_id(rng, g), pick_id(rng, g));
            let (l, ok) = edge_label(rng);
            let legal = has(&s) && has(&t) && ok && !has_edge(&s, &t, &l);
            (WidgetAction::add_link(s, t, l), legal)
        }
        2 => {
            let id = pick_id(rng, g);
            let legal = has(&id);
            (WidgetAction::remove_node(id), legal)
        }
        3 => {
            let (s, t, l) = existing_edge(rng);
            let legal = has_edge(&s, &t, &l);
            (WidgetAction::remove_link(s, t, l), legal)
        }
        4 => {
            let id = pick_id(rng, g);
            let (l, ok) = node_label(rng);
            let legal = has(&id) && ok;
            (WidgetAction::edit_node_label(id, l), legal)
        }
        _ => {
            let (s, t, old) = existing_edge(rng);
            let (new, ok) = edge_label(rng);
            let legal = has_edge(&s, &t, &old) && (new == old || (ok && !has_edge(&s, &t, &new)));
            (WidgetAction::edit_link_label(s, t, old, new), legal)
        }
    }
}

async fn widget_fuzz() -> String {
    let mut rng = StdRng::seed_from_u64(2);
    let mut g = random_graph(&mut rng, 8, 12);
    let (mut applied, mut refused) = (0, 0);
    for step in 0..10_000 {
        if step % 500 == 0 {
            g = random_graph(&mut rng, 8, 12);
        }
        let (action, legal) = random_action(&mut rng, &g);
        let snapshot = g.clone();
        match apply_widget(&g, &action) {
            Ok(next) => {
                assert!(legal, "step {step}: {action:?} should have been refused");
                sound(&next).unwrap_or_else(|e| panic!("step {step}: {action:?} left {e}"));
                g = next;
                applied += 1;
            }
            Err(_) => {
                assert!(!legal, "step {step}: {action:?} was refused");
                assert_eq!(g, snapshot, "step {step}: refused action changed the graph");
                refused += 1;
            }
        }
    }
    format!("10000 actions, {applied} applied, {refused} refused, 0 violations")
}

fn mutate(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    const TOKENS: &[&[u8]] = &[
        b"-->", b"|", b"[", b"]", b"\n", b"graph ", b"%%", b"```", b"\"", b"{", b"((",
    ];
    let mut out = seed.to_vec();
    for _ in 0..rng.random_range(1..=4) {
        let at = if out.is_empty() {
            0
        } else {
            rng.random_range(0..out.len())
        };
        match rng.random_range(0..5) {
            0 if !out.is_empty() => out[at] = rng.random(),
            1 if !out.is_empty() => {
                let end = (at + rng.random_range(1..8)).min(out.len());
                out.drain(at..end);
            }
            2 => {
                let tok = TOKENS.choose(rng).unwrap();
                out.splice(at..at, tok.iter().copied());
            }
            3 if !out.is_empty() => {
                let end = (at + rng.random_range(1..16)).min(out.len());
                let chunk = out[at..end].to_vec();
                let to = rng.random_range(0..=out.len());
                out.splice(to..to, chunk);
            }
            _ => out.truncate(at),
        }
    }
    out
}

async fn parser_fuzz() -> String {
    let mut rng = StdRng::seed_from_u64(3);
    let mut seeds: Vec<Vec<u8>> = (0..20)
        .map(|_| random_graph(&mut rng, 6, 8).serialize().into_bytes())
        .collect();
    for (name, _, _) in common::CHAINS {
        for tag in ["concept_graph", "ui_graph"] {
            seeds.push(common::reply_text(name, tag).into_bytes());
        }
    }
    let (mut graphs, mut errors) = (0, 0);
    for i in 0..100_000 {
        let seed = seeds.choose(&mut rng).unwrap().clone();
        let input = mutate(&mut rng, &seed);
        match std::panic::catch_unwind(|| parse_graph_bytes(&input)) {
            Ok(Ok(g)) => {
                sound(&g).unwrap_or_else(|e| panic!("input {i} parsed to an unsound graph: {e}"));
                graphs += 1;
            }
            Ok(Err(_)) => errors += 1,
            Err(_) => panic!(
                "input {i} crashed the parser: {:?}",
                String::from_utf8_lossy(&input)
            ),
        }
    }
    format!("100000 inputs, {graphs} graphs, {errors} structured errors, 0 crashes")
}

fn replay_engine(name: &str) -> Engine {
    let cassette = Cassette::load(&common::fixture(name).join("cassette.ndjson")).unwrap();
    common::engine_over(Gateway::replay(cassette), common::behavior(name))
}

async fn run(engine: &Engine, s: &mut Session, cmds: Vec<Command>) -> Vec<WarningCode> {
    let mut codes = Vec::new();
    for cmd in cmds {
        let name = cmd.name();
        let done = engine
            .execute(s, cmd)
            .await
            .unwrap_or_else(|e| panic!("{name}: {e:?}"));
        codes.extend(done.warnings.iter().map(|w| w.code));
    }
    codes
}

async fn replay_walkthrough() -> String {
    let mut runs = Vec::new();
    for _ in 0..3 {
        let engine = replay_engine("balloon");
        let mut s = Engine::session_with_id("balloon");
        run(
            &engine,
            &mut s,
            common::chain_script(common::BALLOON_CONTENT, 1),
        )
        .await;
        let outputs: Vec<String> = StageId::ALL
            .iter()
            .map(|st| s.slot(*st).content.as_ref().expect("stage output").text())
            .collect();
        runs.push(outputs);
    }
    assert!(
        runs.windows(2).all(|w| w[0] == w[1]),
        "stage outputs differ between runs"
    );
    let doc = runs[0].last().unwrap();
    assert!(doc.contains("window.LOG_DEBUG"), "no debug flag");
    assert!(doc.contains("function logDebug"), "no logDebug definition");
    assert!(doc.contains("<canvas"), "no canvas element");
    assert!(missing_markers(doc).is_empty());
    "5 stages byte-identical over 3 runs, document markers present".into()
}

fn ids(g: &Graph) -> BTreeSet<String> {
    g.nodes().iter().map(|n| n.id.clone()).collect()
}

async fn structural_invariants() -> String {
    for (name, content, goal) in common::CHAINS {
        let engine = replay_engine(name);
        let mut s = Engine::session_with_id(name);
        run(&engine, &mut s, common::chain_script(content, goal)).await;
        assert!(
            StageId::ALL
                .iter()
                .all(|st| s.status(*st) == StageStatus::Committed),
            "{name}"
        );
        let [concept, scenario, goal, ui] = [
            StageId::Concept,
            StageId::Scenario,
            StageId::LearningGoal,
            StageId::UiGraph,
        ]
        .map(|st| s.committed_graph(st).unwrap());
        assert_eq!(ids(concept), ids(scenario), "{name}: scenario ids");
        assert!(
            goal.is_subgraph_of(scenario),
            "{name}: goal outside scenario"
        );
        assert!(
            ids(goal).is_subset(&ids(ui)),
            "{name}: goal ids missing from UI graph"
        );
    }

    // a renamed scenario node is put back under its concept id
    let renamed = common::reply_text("balloon", "scenario_graph")
        .replace("Object[Balloon]", "Envelope[Balloon]")
        .replace("Object -->", "Envelope -->")
        .replace("--> Object", "--> Envelope")
        .replace("| Object", "| Envelope");
    let engine = common::engine_with(
        common::scripted_with("balloon", &[("scenario_graph", &renamed)]).into_arc(),
        common::behavior("balloon"),
    );
    let mut s = Engine::session_with_id("m1");
    let codes = run(&engine, &mut s, common::balloon_to_goal()[..4].to_vec()).await;
    assert_eq!(
        ids(s.graph(StageId::Scenario).unwrap()),
        ids(s.graph(StageId::Concept).unwrap())
    );
    assert!(
        codes.contains(&WarningCode::ModelRepair),
        "no repair warning: {codes:?}"
    );

    // a goal node absent from the scenario is dropped
    let invented = common::reply_text("balloon", "learning_goal_graph").replace(
        "    Density -->|increases| Buoyant",
        "    Pilot[Pilot]\n    Pilot -->|steers| Object\n    Density -->|increases| Buoyant",
    );
    let engine = common::engine_with(
        common::scripted_with("balloon", &[("learning_goal_graph", &invented)]).into_arc(),
        common::behavior("balloon"),
    );
    let mut s = Engine::session_with_id("m2");
    let codes = run(&engine, &mut s, common::balloon_to_goal()[..7].to_vec()).await;
    assert!(!s
        .graph(StageId::LearningGoal)
        .unwrap()
        .contains_node("Pilot"));
    assert!(
        codes.contains(&WarningCode::DroppedElements),
        "no drop warning: {codes:?}"
    );

    // a UI graph without any controls is kept and flagged
    let plain = "graph LR\n    Object[Balloon]\n    Sky[Sky Canvas]\n    Object -->|drawn on| Sky";
    let engine = common::engine_with(
        common::scripted_with("balloon", &[("ui_graph", plain)]).into_arc(),
        common::behavior("balloon"),
    );
    let mut s = Engine::session_with_id("m3");
    let mut cmds = common::balloon_to_goal();
    cmds.push(Command::Generate);
    let codes = run(&engine, &mut s, cmds).await;
    assert!(
        codes.contains(&WarningCode::NoControls),
        "no controls warning: {codes:?}"
    );
    "3 chains hold, 3 mutated variants repaired or flagged".into()
}

const DOC: &str = "<html><body><canvas id=\"sky\"></canvas><script>window.LOG_DEBUG = false; function logDebug(m) {}</script></body></html>";

fn golden() -> Vec<Value> {
    vec![
        json!({"type": 1, "message": "Add a burner flame.", "label": "Burner Flame"}),
        json!({"type": 2, "message": "Link the burner to the readout.",
               "source": "HeatButton", "target": "AltitudeReadout", "label": "refreshes"}),
        json!({"type": 3, "message": "Widen the slider.", "node": "Weight Slider",
               "assumptions": ["The slider ranges from 5 to 105 kg"]}),
        json!({"type": 4, "message": "Draw my sketch.", "box": [180, 120, 140, 180],
               "svg": "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 10 10\"><circle cx=\"5\" cy=\"5\" r=\"4\"/></svg>"}),
        json!({"type": 5, "message": "Rename the button.", "node": "HeatButton",
               "oldLabel": "Burner Button", "newLabel": "Heat Button"}),
        json!({"type": 6, "message": "Relabel the slider link.", "source": "WeightSlider",
               "target": "Weight", "oldLabel": "sets", "newLabel": "adjusts"}),
        json!({"type": 7, "message": "Remove the readout.", "node": "AltitudeReadout"}),
        json!({"type": 8, "message": "Drop the report link.", "source": "Object",
               "target": "AltitudeReadout", "label": "reports to"}),
    ]
}

async fn populate(
    code: u8,
    reply: &str,
) -> Result<simweave::resolution::PopulatedSuggestion, ResolutionError> {
    let template = TemplateId::populate_for(code).unwrap();
    let p = ScriptedProvider::new()
        .always(template.as_str(), reply)
        .always("reply_repair", reply);
    let r = Resolver::new(
        Arc::new(Registry::builtin().unwrap()),
        Arc::new(Gateway::live(Arc::new(p)).with_retry_delay(Duration::ZERO)),
    );
    let ui =
        parse_graph(&extract_graph(&common::reply_text("balloon", "ui_graph")).unwrap()).unwrap();
    r.populate_suggestion(code, &Complaint::new("fix it"), DOC, &ui)
        .await
        .map(|(s, _)| s)
}

async fn resolution_routing() -> String {
    let golden = golden();
    for (i, reply) in golden.iter().enumerate() {
        let code = i as u8 + 1;
        let s = populate(code, &reply.to_string()).await.unwrap();
        assert!(
            s.valid && s.suggestion.type_code() == code,
            "golden type {code}: {:?}",
            s.problems
        );
        let wire = s.suggestion.to_json();
        let keys: BTreeSet<&str> = wire
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        let mut expected: BTreeSet<&str> = payload_fields(code).unwrap().iter().copied().collect();
        expected.extend(["type", "message"]);
        assert_eq!(keys, expected, "golden type {code} shape");
    }
    for i in 0..8 {
        let code = i as u8 + 1;
        let mut mutated = golden[(i + 1) % 8].clone();
        mutated["type"] = json!(code);
        match populate(code, &mutated.to_string()).await {
            Err(ResolutionError::Extract(ExtractError::SchemaMismatch { .. })) => {}
            Ok(s) => assert!(!s.valid, "cross-paired type {code} was accepted"),
            Err(e) => panic!("cross-paired type {code}: {e:?}"),
        }
    }
    let mut graph_types = 0;
    for reply in &golden {
        let suggestion = parse_widget_json(&reply.to_string()).unwrap();
        let Some(action) = graph_action(&suggestion.payload) else {
            continue;
        };
        let plain = extract_graph(&common::reply_text("balloon", "ui_graph")).unwrap();
        let engine = common::engine_with(
            common::scripted_with("balloon", &[("auto_add_edges", &plain)]).into_arc(),
            common::behavior("balloon"),
        );
        let mut s = Engine::session_with_id("r");
        run(
            &engine,
            &mut s,
            common::chain_script(common::BALLOON_CONTENT, 1),
        )
        .await;
        let before = s.graph(StageId::UiGraph).unwrap().clone();
        let done = engine
            .execute(&mut s, Command::Propose { suggestion })
            .await
            .unwrap();
        let Outcome::Suggestion { entry } = done.outcome else {
            panic!("no suggestion")
        };
        let accept = Command::Accept {
            index: entry.index,
            edited: None,
            screenshot: None,
        };
        engine.execute(&mut s, accept).await.unwrap();
        let diff = diff_graphs(&before, s.graph(StageId::UiGraph).unwrap());
        assert_eq!(
            diff,
            [action],
            "accepted type {}",
            entry.populated.suggestion.type_code()
        );
        graph_types += 1;
    }
    format!("8 golden valid, 8 cross-paired refused, {graph_types} graph suggestions diff to their payload")
}

fn case(id: &str, action: ActionType, ui: bool) -> TestCase {
    TestCase {
        ui_element_id: id.into(),
        action_type: action,
        action_value: (action == ActionType::SetValue).then(|| json!(70)),
        description: format!("{action:?} {id}"),
        expected_outcome: "output changes".into(),
        is_ui_verification: ui,
    }
}

async fn harness_checks() -> String {
    let ui =
        parse_graph("graph LR\n    Go[Go button]\n    Out[Output text]\n    Go -->|updates| Out\n")
            .unwrap();
    let harness = |p: Arc<ScriptedProvider>| {
        Harness::new(
            Arc::new(Registry::builtin().unwrap()),
            Arc::new(Gateway::live(p).with_retry_delay(Duration::ZERO)),
            Arc::new(FakeDriverFactory::new(reference_behavior())),
        )
        .with_settle(Duration::ZERO)
    };

    let fixes = ScriptedProvider::new()
        .reply("js_fix", format!("<START>{REFERENCE_DOCUMENT}<STOP>"))
        .into_arc();
    let report = harness(fixes)
        .resolve_js_errors(BROKEN_DOCUMENT, &ui)
        .await
        .unwrap();
    assert_eq!(report.iterations.len(), 1, "broken document");

    let never = ScriptedProvider::new()
        .always("js_fix", format!("<START>{BROKEN_DOCUMENT}<STOP>"))
        .into_arc();
    match harness(never.clone())
        .resolve_js_errors(BROKEN_DOCUMENT, &ui)
        .await
    {
        Err(HarnessError::Unresolved { iterations, .. }) => assert_eq!(iterations.len(), 3),
        other => panic!("never-fixed document: {other:?}"),
    }
    assert_eq!(never.calls(), 3);

    let actions = [
        ActionType::Click,
        ActionType::SetValue,
        ActionType::VerifyContent,
        ActionType::Toggle,
    ];
    let targets = ["go", "amount", "out", "flag"];
    let cases: Vec<TestCase> = (0..10)
        .map(|i| case(targets[i % 4], actions[i % 4], i % 3 == 0))
        .collect();
    let run = harness(ScriptedProvider::new().into_arc())
        .execute_tests(REFERENCE_DOCUMENT, &cases)
        .await
        .unwrap();
    let auto: Vec<usize> = run.records.iter().map(|r| r.case_index).collect();
    let guided: Vec<usize> = run.guided.iter().map(|(i, _)| *i).collect();
    let expect_auto: Vec<usize> = (0..10).filter(|i| !cases[*i].is_ui_verification).collect();
    let expect_guided: Vec<usize> = (0..10).filter(|i| cases[*i].is_ui_verification).collect();
    assert_eq!((auto, guided), (expect_auto, expect_guided), "partition");

    let listing = include_str!("../../core/tests/fixtures/listing_test_case.txt");
    let (parsed, errors) = parse_test_cases(listing).unwrap();
    assert!(
        errors.is_empty() && parsed.len() == 1,
        "listing: {errors:?}"
    );
    assert_eq!(parsed[0].ui_element_id, "slider-weight");
    assert!(parsed[0].is_ui_verification);
    "fix loop 1 and 3 iterations, 6/4 partition exact, listing accepted".into()
}

async fn api_journal() -> String {
    let store = Arc::new(MemoryStore::new());
    let app = support::app_with(store.clone(), support::replay_engine());
    let walked = support::run_walkthrough(&app).await;
    assert_eq!(walked.requests, 25);
    let id = &walked.id;

    let journal = support::call(&app, Method::GET, &format!("/sessions/{id}/journal"), None)
        .await
        .text;
    let events = parse_journal(&journal).unwrap();
    let rebuilt = replay_journal(&support::replay_engine(), &events)
        .await
        .unwrap();
    let live = store.load(id).unwrap().unwrap();
    assert_eq!(
        rebuilt.without_timestamps(),
        live.without_timestamps(),
        "replayed state differs"
    );

    let uri = format!("/simulations/{}", walked.share);
    assert_eq!(
        support::call(&app, Method::GET, &uri, None).await.text,
        walked.document
    );
    support::call(
        &app,
        Method::POST,
        &format!("/sessions/{id}/stages/code/discard"),
        None,
    )
    .await;
    assert_eq!(
        support::call(&app, Method::GET, &uri, None).await.text,
        walked.document,
        "share changed"
    );
    format!(
        "25 requests, {} events replayed to an equal state, share unchanged",
        events.len()
    )
}
