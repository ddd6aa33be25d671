mod common;

use std::sync::Arc;
use std::time::Duration;

use common::*;
use serde_json::{json, Value};
use simweave::graph::{apply_widget, diff_graphs, extract_subgraph, parse_graph, Graph};
use simweave::llm::{Gateway, ScriptedProvider};
use simweave::pipeline::{Command, Engine, Outcome, StageId};
use simweave::prompts::{
    extract_graph, parse_widget_json, payload_fields, ExtractError, Registry, TemplateId,
};
use simweave::resolution::{graph_action, Complaint, ResolutionError, Resolver};
use simweave::WarningCode;

const DOC: &str = "<html><body><canvas id=\"sky\"></canvas><script>window.LOG_DEBUG = false; function logDebug(m) {}</script></body></html>";

fn ui() -> Graph {
    parse_graph(&extract_graph(&reply_text("balloon", "ui_graph")).unwrap()).unwrap()
}

fn resolver(p: ScriptedProvider) -> Resolver {
    let gateway = Gateway::live(Arc::new(p)).with_retry_delay(Duration::ZERO);
    Resolver::new(Arc::new(Registry::builtin().unwrap()), Arc::new(gateway))
}

/// One well-formed reply per type code, all referring to the balloon UI
/// graph.
fn golden() -> Vec<Value> {
    vec![
        json!({"type": 1, "message": "I want a burner flame under the balloon.", "label": "Burner Flame"}),
        json!({"type": 2, "message": "I want the burner to refresh the altitude readout.",
               "source": "HeatButton", "target": "AltitudeReadout", "label": "refreshes"}),
        json!({"type": 3, "message": "I want the slider to go from 5 to 105 kg.", "node": "Weight Slider",
               "assumptions": ["The slider ranges from 5 to 105 kg"]}),
        json!({"type": 4, "message": "I want the balloon drawn as my sketch.", "box": [180, 120, 140, 180],
               "svg": "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 10 10\"><circle cx=\"5\" cy=\"5\" r=\"4\"/></svg>"}),
        json!({"type": 5, "message": "I want the button called Heat Button.", "node": "HeatButton",
               "oldLabel": "Burner Button", "newLabel": "Heat Button"}),
        json!({"type": 6, "message": "I want the slider link to say adjusts.", "source": "WeightSlider",
               "target": "Weight", "oldLabel": "sets", "newLabel": "adjusts"}),
        json!({"type": 7, "message": "I want the altitude readout gone.", "node": "AltitudeReadout"}),
        json!({"type": 8, "message": "I want the balloon to stop reporting altitude.", "source": "Object",
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
    resolver(p)
        .populate_suggestion(code, &Complaint::new("fix it"), DOC, &ui())
        .await
        .map(|(s, _)| s)
}

#[tokio::test]
async fn golden_replies_populate_valid_suggestions_of_their_type() {
    for (i, reply) in golden().into_iter().enumerate() {
        let code = i as u8 + 1;
        let s = populate(code, &reply.to_string()).await.unwrap();
        assert!(s.valid, "type {code}: {:?}", s.problems);
        assert_eq!(s.suggestion.type_code(), code);
        // the strict JSON form carries exactly the type's fields
        let wire = s.suggestion.to_json();
        let mut keys: Vec<&str> = wire
            .as_object()
            .unwrap()
            .keys()
            .map(String::as_str)
            .collect();
        keys.sort();
        let mut expected = vec!["message", "type"];
        expected.extend(payload_fields(code).unwrap());
        expected.sort();
        assert_eq!(keys, expected, "type {code}");
    }
}

#[tokio::test]
async fn cross_paired_replies_are_rejected_or_flagged() {
    let golden = golden();
    for i in 0..8 {
        let code = i as u8 + 1;
        // the fields of the next type under this type's code
        let mut mutated = golden[(i + 1) % 8].clone();
        mutated["type"] = json!(code);
        match populate(code, &mutated.to_string()).await {
            Err(ResolutionError::Extract(ExtractError::SchemaMismatch { type_code, .. })) => {
                assert_eq!(type_code, Some(code))
            }
            Ok(s) => assert!(!s.valid, "type {code} accepted {mutated}"),
            Err(e) => panic!("type {code}: unexpected {e:?}"),
        }
    }
}

#[tokio::test]
async fn reply_of_the_wrong_type_is_a_schema_mismatch() {
    let reply = golden()[0].to_string();
    let err = populate(2, &reply).await.unwrap_err();
    assert!(
        matches!(
            err,
            ResolutionError::Extract(ExtractError::SchemaMismatch { .. })
        ),
        "{err:?}"
    );
}

#[tokio::test]
async fn stale_referents_are_flagged_not_dropped() {
    let reply = json!({"type": 7, "message": "Remove the pilot.", "node": "Pilot"}).to_string();
    let s = populate(7, &reply).await.unwrap();
    assert!(!s.valid);
    assert_eq!(s.problems, ["node `Pilot` is not in the UI graph"]);
}

#[tokio::test]
async fn classification_reads_the_leading_number() {
    let p = ScriptedProvider::new().reply("suggest_change", "8.");
    let (code, warnings) = resolver(p)
        .classify_change(&Complaint::new("the link is wrong"), DOC, &ui())
        .await
        .unwrap();
    assert_eq!(code, 8);
    assert!(warnings.is_empty());
}

#[tokio::test]
async fn unreadable_classification_fails_after_one_repair() {
    let p = ScriptedProvider::new()
        .always("suggest_change", "nine")
        .always("reply_repair", "nine")
        .into_arc();
    let gateway = Gateway::live(p.clone()).with_retry_delay(Duration::ZERO);
    let r = Resolver::new(Arc::new(Registry::builtin().unwrap()), Arc::new(gateway));
    let err = r
        .classify_change(&Complaint::new("the link is wrong"), DOC, &ui())
        .await
        .unwrap_err();
    assert!(
        matches!(err, ResolutionError::Extract(ExtractError::BadTypeCode(_))),
        "{err:?}"
    );
    let tags: Vec<String> = p.requests().into_iter().map(|r| r.tag).collect();
    assert_eq!(tags, ["suggest_change", "reply_repair"]);
}

#[tokio::test]
async fn repaired_classification_is_reported() {
    let p = ScriptedProvider::new()
        .reply("suggest_change", "nine")
        .reply("reply_repair", "Type 2");
    let (code, warnings) = resolver(p)
        .classify_change(&Complaint::new("connect these"), DOC, &ui())
        .await
        .unwrap();
    assert_eq!(code, 2);
    assert_eq!(warnings[0].code, WarningCode::ModelRepair);
}

#[tokio::test]
async fn unknown_mentions_are_refused_before_any_request() {
    let p = ScriptedProvider::new().into_arc();
    let gateway = Gateway::live(p.clone());
    let r = Resolver::new(Arc::new(Registry::builtin().unwrap()), Arc::new(gateway));
    let mut c = Complaint::new("this one");
    c.mention_refs = vec!["Nope".into()];
    let err = r.classify_change(&c, DOC, &ui()).await.unwrap_err();
    assert!(matches!(err, ResolutionError::UnknownMention(_)));
    assert_eq!(p.calls(), 0);
}

#[test]
fn graph_suggestion_actions_diff_back_to_themselves() {
    let ui = ui();
    for reply in golden() {
        let s = parse_widget_json(&reply.to_string()).unwrap();
        let Some(action) = graph_action(&s.payload) else {
            continue;
        };
        let after = apply_widget(&ui, &action).unwrap();
        let diff = diff_graphs(&ui, &after);
        let mut replayed = ui.clone();
        for a in &diff {
            replayed = apply_widget(&replayed, a).unwrap();
        }
        assert_eq!(replayed, after);
        if !matches!(action, simweave::graph::WidgetAction::RemoveNode { .. }) {
            assert_eq!(diff, [action], "type {}", s.type_code());
        }
    }
}

/// Accepts each graph-type golden suggestion through the engine and checks
/// that the UI graph changed by exactly the suggested edit.
#[tokio::test]
async fn accepted_graph_suggestions_change_the_ui_graph_by_their_payload() {
    for reply in golden() {
        let suggestion = parse_widget_json(&reply.to_string()).unwrap();
        let code = suggestion.type_code();
        if matches!(code, 3 | 4) {
            continue;
        }
        // the auto-edge reply adds nothing, so an added node stays unlinked
        let plain = extract_graph(&reply_text("balloon", "ui_graph")).unwrap();
        let p = scripted_with("balloon", &[("auto_add_edges", &plain)]).into_arc();
        let engine = engine_with(p, behavior("balloon"));
        let mut s = Engine::session_with_id("a");
        for cmd in chain_script(BALLOON_CONTENT, 1) {
            engine.execute(&mut s, cmd).await.unwrap();
        }
        let before = s.graph(StageId::UiGraph).unwrap().clone();
        let done = engine
            .execute(
                &mut s,
                Command::Propose {
                    suggestion: suggestion.clone(),
                },
            )
            .await
            .unwrap();
        let Outcome::Suggestion { entry } = done.outcome else {
            panic!()
        };
        assert!(
            entry.populated.valid,
            "type {code}: {:?}",
            entry.populated.problems
        );
        engine
            .execute(
                &mut s,
                Command::Accept {
                    index: entry.index,
                    edited: None,
                    screenshot: None,
                },
            )
            .await
            .unwrap_or_else(|e| panic!("type {code}: {e:?}"));
        let after = s.graph(StageId::UiGraph).unwrap();
        let expected = apply_widget(&before, &graph_action(&suggestion.payload).unwrap()).unwrap();
        assert_eq!(after, &expected, "type {code}");
    }
}

#[tokio::test]
async fn auto_edges_only_add_links_to_the_new_node() {
    let ui = ui();
    let with_node = apply_widget(
        &ui,
        &simweave::graph::WidgetAction::add_node("Burner Flame"),
    )
    .unwrap();
    // the model relabels an old node and drops a link besides adding its own
    let reply = extract_graph(&reply_text("balloon", "auto_add_edges"))
        .unwrap()
        .replace("Sky[Sky Canvas]", "Sky[Night Sky]")
        .replace("    WeightSlider -->|sets| Weight\n", "");
    let p = ScriptedProvider::new().reply("auto_add_edges", reply);
    let (linked, _) = resolver(p)
        .auto_add_edges(&ui, &with_node, "BurnerFlame", "Burner Flame")
        .await
        .unwrap();
    assert!(with_node.is_subgraph_of(&linked));
    assert_eq!(linked.nodes(), with_node.nodes());
    for e in linked
        .edges()
        .iter()
        .filter(|e| !with_node.edges().contains(e))
    {
        assert!(
            e.source == "BurnerFlame" || e.target == "BurnerFlame",
            "{e:?}"
        );
    }
    assert_eq!(linked.edges().len(), with_node.edges().len() + 2);
}

#[tokio::test]
async fn selection_is_restricted_to_the_ui_graph() {
    let ui = ui();
    let p = ScriptedProvider::new().reply(
        "subgraph_selection",
        reply_text("balloon", "subgraph_selection"),
    );
    let (sub, warnings) = resolver(p)
        .select_subgraph(&[1, 2, 3], DOC, &ui)
        .await
        .unwrap();
    assert!(sub.is_subgraph_of(&ui));
    assert!(!sub.contains_node("Basket"));
    for id in ["Object", "Buoyant", "Weight"] {
        assert!(sub.contains_node(id), "{id}");
    }
    assert_eq!(warnings[0].code, WarningCode::DroppedElements);
    // an induced subgraph keeps every UI link among the chosen nodes
    let ids: Vec<&str> = sub.nodes().iter().map(|n| n.id.as_str()).collect();
    let induced = extract_subgraph(&ui, ids).unwrap();
    assert!(sub.is_subgraph_of(&induced));
}

#[tokio::test]
async fn selection_outside_the_ui_graph_is_empty() {
    let p = ScriptedProvider::new().reply("subgraph_selection", "graph LR\n    Q[Quark]");
    let err = resolver(p)
        .select_subgraph(&[1], DOC, &ui())
        .await
        .unwrap_err();
    assert!(matches!(err, ResolutionError::EmptySelection));
}

#[tokio::test]
async fn balloon_assumption_sheet_names_the_slider_range() {
    let p = ScriptedProvider::new().reply(
        "code_assumptions",
        reply_text("balloon", "code_assumptions"),
    );
    let (sheet, warnings) = resolver(p).get_assumptions(DOC, &ui()).await.unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    assert_eq!(sheet.entries.len(), ui().nodes().len());
    let slider = sheet.entries["Weight Slider"].join(" ");
    assert!(regex_lite_range(&slider), "{slider}");
}

fn regex_lite_range(text: &str) -> bool {
    let words: Vec<&str> = text.split_whitespace().collect();
    words
        .windows(3)
        .any(|w| w[0].parse::<f64>().is_ok() && w[1] == "to" && w[2].parse::<f64>().is_ok())
}

#[tokio::test]
async fn sheet_keyed_by_id_is_matched_with_a_warning() {
    let reply = json!({"WeightSlider": ["0 to 100 kg"], "Object": ["red envelope"]}).to_string();
    let p = ScriptedProvider::new().reply("code_assumptions", reply);
    let (sheet, warnings) = resolver(p).get_assumptions(DOC, &ui()).await.unwrap();
    assert_eq!(sheet.entries["Weight Slider"], ["0 to 100 kg"]);
    assert_eq!(sheet.entries["Balloon"], ["red envelope"]);
    assert!(warnings.iter().all(|w| w.code == WarningCode::MissingNodes));
    assert_eq!(warnings.len(), 2);
}

#[tokio::test]
async fn empty_assumption_list_is_a_schema_mismatch() {
    let reply = json!({"Weight Slider": []}).to_string();
    let p = ScriptedProvider::new().reply("code_assumptions", reply);
    let err = resolver(p).get_assumptions(DOC, &ui()).await.unwrap_err();
    assert!(matches!(
        err,
        ResolutionError::Extract(ExtractError::SchemaMismatch { .. })
    ));
}

#[tokio::test]
async fn applying_assumptions_needs_a_known_node() {
    let p = ScriptedProvider::new();
    let err = resolver(p)
        .apply_assumptions(DOC, &ui(), "Pilot", &["x".into()])
        .await
        .unwrap_err();
    assert!(matches!(err, ResolutionError::UnknownAssumptionNode(_)));
}

#[tokio::test]
async fn unusable_patch_falls_back_to_regeneration() {
    let ui = ui();
    let after = apply_widget(
        &ui,
        &simweave::graph::WidgetAction::remove_node("AltitudeReadout"),
    )
    .unwrap();
    let p = ScriptedProvider::new()
        .reply(
            "graph_code_patch",
            "```html\n<html><body>no markers</body></html>\n```",
        )
        .reply("simulation_code", format!("```html\n{DOC}\n```"));
    let (doc, warnings) = resolver(p)
        .patch_code(&ui, &after, DOC, "goal")
        .await
        .unwrap();
    assert_eq!(doc, DOC);
    assert_eq!(warnings[0].code, WarningCode::ModelRepair);
}

#[tokio::test]
async fn degenerate_boxes_are_refused() {
    let err = resolver(ScriptedProvider::new())
        .substitute_svg(DOC, &[1], &[0.0, 0.0, 0.0, 5.0].into(), "<svg></svg>")
        .await
        .unwrap_err();
    assert!(matches!(err, ResolutionError::DegenerateBox));
}
