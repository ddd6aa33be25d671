//! Run generated test cases against a page through the scripted driver
//! and show which cases are left for a human.

use std::sync::Arc;
use std::time::Duration;

use simweave::harness::contract::{reference_behavior, REFERENCE_DOCUMENT};
use simweave::harness::{parse_test_cases, FakeDriverFactory, Harness};
use simweave::llm::{Cassette, Gateway};
use simweave::prompts::Registry;

// a test-generation reply with the key aliases models tend to use; the
// last case has no description and is rejected
const CASES: &str = r#"<START>[
  {"uiElementId": "go", "actionType": "click", "description": "Press go",
   "expectedOutcome": "The output changes", "isUIVerification": false},
  {"ID": "go", "action": "click", "description": "Look at the button",
   "expected": "The button is visible and labelled", "isUiVerification": true},
  {"id": "amount", "action": "set_value", "value": 70, "expected": "Nothing", "isUIVerification": false}
]<STOP>"#;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (cases, problems) = parse_test_cases(CASES)?;
    for p in &problems {
        println!("rejected #{}: {}", p.index, p.error);
    }
    println!("{} cases parsed, {} rejected", cases.len(), problems.len());

    // no model calls are needed for running cases, so an empty cassette does
    let harness = Harness::new(
        Arc::new(Registry::builtin()?),
        Arc::new(Gateway::replay(Cassette::default())),
        Arc::new(FakeDriverFactory::new(reference_behavior())),
    )
    .with_settle(Duration::ZERO);

    let run = harness.execute_tests(REFERENCE_DOCUMENT, &cases).await?;
    for r in &run.records {
        println!(
            "ran {:<4} logs: {:?}",
            r.case.ui_element_id,
            r.logs_delta.iter().map(|l| &l.message).collect::<Vec<_>>()
        );
    }
    for (i, c) in &run.guided {
        println!("guided #{i}: {}", c.expected_outcome);
    }
    Ok(())
}
