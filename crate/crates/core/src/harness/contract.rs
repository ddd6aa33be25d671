//! Contract checks every [`BrowserDriver`] must pass, run against a small
//! reference document. The fake driver needs [`reference_behavior`] to
//! stand in for the document's script.

use super::driver::{BrowserDriver, DriverError, DriverFactory};
use super::fake::{Behavior, FakeAction, Rule};
use super::picture::is_png;

pub const REFERENCE_DOCUMENT: &str = r#"<!DOCTYPE html>
<html>
<head><title>Reference</title></head>
<body>
<h1 id="title">Reference</h1>
<button id="go">Go</button>
<p id="out">idle</p>
<input type="range" id="amount" min="0" max="100" value="50">
<input type="checkbox" id="flag">
<div role="button" id="tile">Tile</div>
<canvas id="view" width="40" height="20"></canvas>
<script>
window.LOG_DEBUG = false;
function logDebug(message) {
  if (window.LOG_DEBUG) console.log(`DEBUG [${new Date().toISOString()}]: ${message}`);
}
document.getElementById('go').addEventListener('click', () => {
  document.getElementById('out').textContent = 'clicked';
  logDebug('Button go clicked');
});
document.getElementById('amount').addEventListener('input', (e) => {
  document.getElementById('out').textContent = e.target.value;
  logDebug('Input amount changed to ' + e.target.value);
});
logDebug('Simulation initialized');
</script>
</body>
</html>
"#;

pub const BROKEN_DOCUMENT: &str = r#"<!DOCTYPE html>
<html><body><p id="out">idle</p>
<script>undefinedSetup();</script>
</body></html>
"#;

/// Fake-driver script mirroring what the reference document does.
pub fn reference_behavior() -> Behavior {
    let content = |text: &str| {
        [("out".to_string(), text.to_string())]
            .into_iter()
            .collect()
    };
    Behavior::default()
        .with_rule(Rule {
            element: Some("go".into()),
            action: Some(FakeAction::Click),
            content: content("clicked"),
            ..Rule::default()
        })
        .with_rule(Rule {
            element: Some("amount".into()),
            action: Some(FakeAction::SetValue),
            content: content("{value}"),
            ..Rule::default()
        })
        .with_rule(Rule {
            document_contains: Some("undefinedSetup".into()),
            action: Some(FakeAction::Load),
            errors: vec!["ReferenceError: undefinedSetup is not defined".into()],
            ..Rule::default()
        })
}

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn drv(e: DriverError) -> String {
    e.to_string()
}

async fn not_loaded(d: &mut dyn BrowserDriver) -> Result<(), String> {
    check(
        d.click("go").await == Err(DriverError::NotLoaded),
        "click before load",
    )?;
    check(
        d.screenshot().await == Err(DriverError::NotLoaded),
        "screenshot before load",
    )
}

async fn read_after_load(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    let title = d.read_content("title").await.map_err(drv)?;
    check(title == "Reference", format!("title read as {title:?}"))?;
    let out = d.read_content("out").await.map_err(drv)?;
    check(out == "idle", format!("out read as {out:?}"))?;
    let amount = d.read_content("amount").await.map_err(drv)?;
    check(amount == "50", format!("amount read as {amount:?}"))
}

async fn click_updates(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    d.click("go").await.map_err(drv)?;
    let out = d.read_content("out").await.map_err(drv)?;
    check(out == "clicked", format!("out read as {out:?}"))
}

async fn set_value_updates(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    d.set_value("amount", "70").await.map_err(drv)?;
    let amount = d.read_content("amount").await.map_err(drv)?;
    check(amount == "70", format!("amount read as {amount:?}"))?;
    let out = d.read_content("out").await.map_err(drv)?;
    check(out == "70", format!("out read as {out:?}"))?;
    d.toggle("flag").await.map_err(drv)
}

async fn missing_elements(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    let nf = Err(DriverError::ElementNotFound("ghost".into()));
    check(d.click("ghost").await == nf, "click on missing id")?;
    check(
        d.set_value("ghost", "1").await == nf,
        "set_value on missing id",
    )?;
    check(
        d.read_content("ghost").await.map(|_| ()) == nf,
        "read_content on missing id",
    )
}

async fn debug_flag_gates_logs(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.set_debug_flag(false).await.map_err(drv)?;
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    d.click("go").await.map_err(drv)?;
    check(
        d.debug_logs().await.map_err(drv)?.is_empty(),
        "logs captured with the flag off",
    )?;
    d.set_debug_flag(true).await.map_err(drv)?;
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    d.set_value("amount", "70").await.map_err(drv)?;
    let logs: Vec<String> = d
        .debug_logs()
        .await
        .map_err(drv)?
        .into_iter()
        .map(|l| l.message)
        .collect();
    check(
        logs == ["Simulation initialized", "Input amount changed to 70"],
        format!("logs were {logs:?}"),
    )?;
    d.set_debug_flag(false).await.map_err(drv)
}

async fn buttons_and_errors(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    let n = d.click_buttons().await.map_err(drv)?;
    check(n == 2, format!("clicked {n} buttons"))?;
    check(
        d.console_errors().await.map_err(drv)?.is_empty(),
        "clean document reported errors",
    )?;
    d.load(BROKEN_DOCUMENT).await.map_err(drv)?;
    let errors = d.console_errors().await.map_err(drv)?;
    check(
        errors.iter().any(|e| e.contains("undefinedSetup")),
        format!("errors were {errors:?}"),
    )
}

async fn screenshot_is_png(d: &mut dyn BrowserDriver) -> Result<(), String> {
    d.load(REFERENCE_DOCUMENT).await.map_err(drv)?;
    check(
        is_png(&d.screenshot().await.map_err(drv)?),
        "screenshot is not a PNG",
    )
}

/// Runs every check on a fresh driver and reports each by name.
pub async fn run_contract(factory: &dyn DriverFactory) -> Vec<(&'static str, Result<(), String>)> {
    let mut results = Vec::new();
    macro_rules! run {
        ($($name:ident),*) => {$(
            let outcome = match factory.open().await {
                Ok(mut d) => $name(d.as_mut()).await,
                Err(e) => Err(format!("open failed: {e}")),
            };
            results.push((stringify!($name), outcome));
        )*};
    }
    run!(
        not_loaded,
        read_after_load,
        click_updates,
        set_value_updates,
        missing_elements,
        debug_flag_gates_logs,
        buttons_and_errors,
        screenshot_is_png
    );
    results
}
