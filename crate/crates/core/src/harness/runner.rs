use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::driver::{BrowserDriver, DriverError, DriverFactory};
use super::logline::LogLine;
use super::testcase::{parse_test_cases, ActionType, CaseError, TestCase};
use crate::graph::Graph;
use crate::llm::{de_b64, ser_b64, Gateway, ImageInput, LlmError, LlmRequest};
use crate::prompts::{
    extract_tagged_html, sha256_hex, ExtractError, Registry, TaggedPayload, TemplateError,
    TemplateId,
};

pub const MAX_FIX_ITERATIONS: usize = 3;
pub const MAX_VERIFY_CYCLES: usize = 2;
pub const DEFAULT_SETTLE: Duration = Duration::from_millis(300);
/// Screenshots attached to one verification request.
const MAX_VERIFY_IMAGES: usize = 20;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty document")]
    EmptyDocument,
    #[error("no test records to verify")]
    NoRecords,
    #[error("test case for `{0}` is not a UI verification case")]
    NotGuided(String),
    #[error("script errors remain after {} fix attempts: {}", iterations.len(), errors.join("; "))]
    Unresolved {
        errors: Vec<String>,
        iterations: Vec<FixIteration>,
    },
    #[error("browser crashed after {} executed cases: {message}", partial.records.len())]
    DriverCrash {
        message: String,
        partial: Box<TestRun>,
    },
    #[error("verification still requested changes after {cycles} cycles")]
    VerifyLoopExceeded {
        cycles: usize,
        last_document: String,
    },
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// One pass of the error-fix loop: the errors that prompted a fix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FixIteration {
    pub iteration: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorFixReport {
    pub document: String,
    pub iterations: Vec<FixIteration>,
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Png(#[serde(serialize_with = "ser_b64", deserialize_with = "de_b64")] pub Vec<u8>);

impl Png {
    pub fn sha256(&self) -> String {
        hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestRunRecord {
    pub case_index: usize,
    pub case: TestCase,
    pub pre_screenshot: Png,
    pub post_screenshot: Png,
    pub logs_delta: Vec<LogLine>,
    pub errors_delta: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver_result: Option<String>,
    /// Set when the action itself could not be performed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestRun {
    pub run_id: String,
    pub initial_screenshot: Option<Png>,
    pub final_screenshot: Option<Png>,
    pub records: Vec<TestRunRecord>,
    /// UI cases left for the human, with their index in the input list.
    pub guided: Vec<(usize, TestCase)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "verdict", content = "document")]
pub enum Verification {
    Pass,
    Repaired(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CycleReport {
    pub fixes: ErrorFixReport,
    pub cases: Vec<TestCase>,
    #[serde(skip)]
    pub case_errors: Vec<CaseError>,
    pub run: TestRun,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TestCycleOutcome {
    /// The document that passed verification.
    pub document: String,
    pub cycles: Vec<CycleReport>,
}

impl TestCycleOutcome {
    pub fn last(&self) -> &CycleReport {
        self.cycles.last().expect("at least one cycle")
    }
}

static LOG_DEBUG_DEF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"function\s+logDebug\s*\(|\blogDebug\s*=\s*(?:async\s+)?(?:function\b|\([^)]*\)\s*=>|[A-Za-z_$][\w$]*\s*=>)")
        .unwrap()
});

/// Instrumentation every generated document must carry: a canvas, the
/// `window.LOG_DEBUG` flag and a `logDebug` definition. Returns the
/// names of the missing ones.
pub fn missing_markers(document: &str) -> Vec<String> {
    let mut missing = Vec::new();
    if !document.to_ascii_lowercase().contains("<canvas") {
        missing.push("canvas".to_string());
    }
    if !document.contains("window.LOG_DEBUG") {
        missing.push("window.LOG_DEBUG".to_string());
    }
    if !LOG_DEBUG_DEF.is_match(document) {
        missing.push("logDebug".to_string());
    }
    missing
}

static DEBUG_ON: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"window\.LOG_DEBUG\s*=\s*true\b").unwrap());

/// Turns a hard-coded `window.LOG_DEBUG = true` off. Returns whether the
/// document changed.
pub fn disable_debug_flag(document: &str) -> (String, bool) {
    let out = DEBUG_ON.replace_all(document, "window.LOG_DEBUG = false");
    let changed = out != document;
    (out.into_owned(), changed)
}

fn html_payload(reply: &str) -> Result<String, ExtractError> {
    match extract_tagged_html(reply)? {
        TaggedPayload::Html(html) => Ok(disable_debug_flag(html.trim()).0),
        TaggedPayload::Pass => Err(ExtractError::NoPayload),
    }
}

/// Drives generated documents through the browser and the model.
#[derive(Clone)]
pub struct Harness {
    registry: Arc<Registry>,
    gateway: Arc<Gateway>,
    drivers: Arc<dyn DriverFactory>,
    settle: Duration,
}

impl Harness {
    pub fn new(
        registry: Arc<Registry>,
        gateway: Arc<Gateway>,
        drivers: Arc<dyn DriverFactory>,
    ) -> Self {
        Self {
            registry,
            gateway,
            drivers,
            settle: DEFAULT_SETTLE,
        }
    }

    /// Wait between an action and its post screenshot.
    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    async fn probe(
        &self,
        driver: &mut dyn BrowserDriver,
        document: &str,
    ) -> Result<Vec<String>, DriverError> {
        driver.load(document).await?;
        driver.click_buttons().await?;
        driver.console_errors().await
    }

    /// Loads the document, clicks every button and asks the model to fix
    /// whatever errors show up. Gives up after three fix attempts.
    pub async fn resolve_js_errors(
        &self,
        document: &str,
        ui_graph: &Graph,
    ) -> Result<ErrorFixReport, HarnessError> {
        if document.trim().is_empty() {
            return Err(HarnessError::EmptyDocument);
        }
        let mut driver = self.drivers.open().await?;
        let mut current = document.to_string();
        let mut iterations = Vec::new();
        let mut probes = 0;
        loop {
            let errors = self.probe(driver.as_mut(), &current).await?;
            probes += 1;
            if errors.is_empty() {
                return Ok(ErrorFixReport {
                    document: current,
                    iterations,
                    probes,
                });
            }
            if iterations.len() == MAX_FIX_ITERATIONS {
                return Err(HarnessError::Unresolved { errors, iterations });
            }
            tracing::info!(
                iteration = iterations.len() + 1,
                errors = errors.len(),
                "fixing script errors"
            );
            let prompt = self.registry.render(
                TemplateId::JsFix,
                &[
                    ("htmlCode", current.as_str()),
                    ("UIMap", &ui_graph.serialize()),
                    ("errorMessages", &errors.join("; ")),
                ],
            )?;
            let reply = self
                .gateway
                .complete(&LlmRequest::user("js_fix", prompt))
                .await?;
            current = html_payload(&reply)?;
            iterations.push(FixIteration {
                iteration: iterations.len() + 1,
                errors,
            });
        }
    }

    pub async fn generate_test_cases(
        &self,
        document: &str,
        ui_graph: &Graph,
        goal: &str,
    ) -> Result<(Vec<TestCase>, Vec<CaseError>), HarnessError> {
        let prompt = self.registry.render(
            TemplateId::TestGeneration,
            &[
                ("htmlCode", document),
                ("selectedHypothesis", goal),
                ("UIMap", &ui_graph.serialize()),
            ],
        )?;
        let reply = self
            .gateway
            .complete(&LlmRequest::user("test_generation", prompt))
            .await?;
        Ok(parse_test_cases(&reply)?)
    }

    async fn run_case(
        &self,
        driver: &mut dyn BrowserDriver,
        case_index: usize,
        case: &TestCase,
    ) -> Result<TestRunRecord, DriverError> {
        let pre = driver.screenshot().await?;
        let logs_before = driver.debug_logs().await?.len();
        let errors_before = driver.console_errors().await?.len();
        let id = case.ui_element_id.as_str();
        let outcome = match case.action_type {
            ActionType::Click => driver.click(id).await.map(|_| None),
            ActionType::SetValue => {
                let value = case.value_text().unwrap_or_default();
                driver.set_value(id, &value).await.map(|_| None)
            }
            ActionType::Toggle => driver.toggle(id).await.map(|_| None),
            ActionType::VerifyContent => driver.read_content(id).await.map(Some),
        };
        let (driver_result, failure) = match outcome {
            Ok(text) => (text, None),
            Err(e @ DriverError::ElementNotFound(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        if !self.settle.is_zero() {
            tokio::time::sleep(self.settle).await;
        }
        let post = driver.screenshot().await?;
        let logs = driver.debug_logs().await?;
        let errors = driver.console_errors().await?;
        Ok(TestRunRecord {
            case_index,
            case: case.clone(),
            pre_screenshot: Png(pre),
            post_screenshot: Png(post),
            logs_delta: logs.get(logs_before..).unwrap_or_default().to_vec(),
            errors_delta: errors.get(errors_before..).unwrap_or_default().to_vec(),
            driver_result,
            failure,
        })
    }

    /// Runs every non-UI case with debug logging on. UI cases are handed
    /// back unexecuted for guided testing.
    pub async fn execute_tests(
        &self,
        document: &str,
        cases: &[TestCase],
    ) -> Result<TestRun, HarnessError> {
        let run_id = sha256_hex(&format!(
            "{document}\u{0}{}",
            serde_json::to_string(cases).expect("cases serialize")
        ))[..16]
            .to_string();
        let mut run = TestRun {
            run_id,
            initial_screenshot: None,
            final_screenshot: None,
            records: Vec::new(),
            guided: cases
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_ui_verification)
                .map(|(i, c)| (i, c.clone()))
                .collect(),
        };
        let mut driver = self.drivers.open().await?;
        let crash = |e: DriverError, run: TestRun| match e {
            DriverError::Crash(message) => HarnessError::DriverCrash {
                message,
                partial: Box::new(run),
            },
            other => HarnessError::Driver(other),
        };
        if let Err(e) = driver.set_debug_flag(true).await {
            return Err(crash(e, run));
        }
        if let Err(e) = driver.load(document).await {
            return Err(crash(e, run));
        }
        match driver.screenshot().await {
            Ok(png) => run.initial_screenshot = Some(Png(png)),
            Err(e) => return Err(crash(e, run)),
        }
        for (index, case) in cases
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_ui_verification)
        {
            match self.run_case(driver.as_mut(), index, case).await {
                Ok(record) => run.records.push(record),
                Err(e) => return Err(crash(e, run)),
            }
        }
        match driver.screenshot().await {
            Ok(png) => run.final_screenshot = Some(Png(png)),
            Err(e) => return Err(crash(e, run)),
        }
        Ok(run)
    }

    /// Asks the model to check the run against the goal. `PASS` keeps the
    /// document; anything else must be a tagged replacement.
    pub async fn verify_and_repair(
        &self,
        document: &str,
        run: &TestRun,
        goal: &str,
        ui_graph: &Graph,
    ) -> Result<Verification, HarnessError> {
        if run.records.is_empty() && run.initial_screenshot.is_none() {
            return Err(HarnessError::NoRecords);
        }
        let errors: Vec<&str> = run
            .records
            .iter()
            .flat_map(|r| r.errors_delta.iter().map(String::as_str))
            .collect();
        let logs: Vec<String> = run
            .records
            .iter()
            .flat_map(|r| r.logs_delta.iter().map(LogLine::render))
            .collect();
        let logs_text = if logs.is_empty() {
            "Debug logs: none captured.".to_string()
        } else {
            format!("Debug logs:\n{}", logs.join("\n"))
        };
        let results: Vec<serde_json::Value> = run
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "caseIndex": r.case_index,
                    "testCase": r.case,
                    "actualResult": r.driver_result,
                    "actionFailure": r.failure,
                    "errors": r.errors_delta,
                    "logs": r.logs_delta.iter().map(LogLine::render).collect::<Vec<_>>(),
                })
            })
            .collect();
        let results_text = serde_json::to_string_pretty(&results).expect("json");
        let prompt = self.registry.render_with_context(
            TemplateId::Verification,
            &[
                ("htmlCode", document),
                ("UIMap", &ui_graph.serialize()),
                ("selectedHypothesis", goal),
                ("jsErrors", &errors.join("; ")),
                ("debugLogsText", &logs_text),
                (
                    "initialScreenshotNote",
                    "Screenshots are attached in order: initial state, the state after each executed test case, final state.",
                ),
            ],
            &[("Test case results", &results_text)],
        )?;
        let mut req = LlmRequest::user("verification", prompt);
        let shots = run
            .initial_screenshot
            .iter()
            .chain(run.records.iter().map(|r| &r.post_screenshot))
            .chain(run.final_screenshot.iter())
            .take(MAX_VERIFY_IMAGES);
        for shot in shots {
            req = req.with_image(ImageInput::png(shot.0.clone()));
        }
        let reply = self.gateway.complete(&req).await?;
        match extract_tagged_html(&reply)? {
            TaggedPayload::Pass => Ok(Verification::Pass),
            TaggedPayload::Html(html) => {
                Ok(Verification::Repaired(disable_debug_flag(html.trim()).0))
            }
        }
    }

    /// Error fixing, test generation, execution and verification. A
    /// repaired document goes through the whole cycle once more.
    pub async fn run_test_cycle(
        &self,
        document: &str,
        ui_graph: &Graph,
        goal: &str,
    ) -> Result<TestCycleOutcome, HarnessError> {
        let mut current = document.to_string();
        let mut cycles = Vec::new();
        while cycles.len() < MAX_VERIFY_CYCLES {
            let fixes = self.resolve_js_errors(&current, ui_graph).await?;
            let fixed = fixes.document.clone();
            let (cases, case_errors) = self.generate_test_cases(&fixed, ui_graph, goal).await?;
            let run = self.execute_tests(&fixed, &cases).await?;
            let verification = self.verify_and_repair(&fixed, &run, goal, ui_graph).await?;
            let next = match &verification {
                Verification::Pass => None,
                Verification::Repaired(doc) => Some(doc.clone()),
            };
            cycles.push(CycleReport {
                fixes,
                cases,
                case_errors,
                run,
                verification,
            });
            match next {
                None => {
                    return Ok(TestCycleOutcome {
                        document: fixed,
                        cycles,
                    })
                }
                Some(doc) => current = doc,
            }
        }
        Err(HarnessError::VerifyLoopExceeded {
            cycles: cycles.len(),
            last_document: current,
        })
    }

    /// Plays one UI case so a person can judge it.
    pub async fn run_guided_case(
        &self,
        document: &str,
        case_index: usize,
        case: &TestCase,
    ) -> Result<TestRunRecord, HarnessError> {
        if !case.is_ui_verification {
            return Err(HarnessError::NotGuided(case.ui_element_id.clone()));
        }
        let mut driver = self.drivers.open().await?;
        driver.set_debug_flag(true).await?;
        driver.load(document).await?;
        Ok(self.run_case(driver.as_mut(), case_index, case).await?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_are_scanned() {
        let doc = "<canvas id=c></canvas><script>window.LOG_DEBUG = false;\nconst logDebug = (m) => console.log(m);</script>";
        assert!(missing_markers(doc).is_empty());
        assert!(
            missing_markers("<CANVAS></CANVAS> window.LOG_DEBUG function logDebug (m) {}")
                .is_empty()
        );
        assert_eq!(
            missing_markers("<canvas> window.LOG_DEBUG logDebug('x')"),
            ["logDebug"]
        );
        assert_eq!(
            missing_markers(""),
            ["canvas", "window.LOG_DEBUG", "logDebug"]
        );
    }

    #[test]
    fn debug_flag_is_switched_off() {
        let (out, changed) =
            disable_debug_flag("<script>window.LOG_DEBUG = true;\nwindow.LOG_DEBUG=true</script>");
        assert!(changed);
        assert_eq!(
            out,
            "<script>window.LOG_DEBUG = false;\nwindow.LOG_DEBUG = false</script>"
        );
        let (same, changed) =
            disable_debug_flag("window.LOG_DEBUG = false; window.LOG_DEBUG = trueish");
        assert!(!changed);
        assert_eq!(same, "window.LOG_DEBUG = false; window.LOG_DEBUG = trueish");
    }
}
