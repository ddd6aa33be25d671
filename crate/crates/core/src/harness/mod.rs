//! Runs generated simulations in a browser: error probing, structured
//! test cases, screenshots and debug-log capture.

mod cdp;
pub mod contract;
mod driver;
mod fake;
mod logline;
pub mod picture;
mod runner;
mod testcase;

pub use cdp::{CdpDriver, CdpDriverFactory};
pub use driver::{BrowserDriver, DriverError, DriverFactory};
pub use fake::{Behavior, FakeAction, FakeDriver, FakeDriverFactory, Rule};
pub use logline::LogLine;
pub use runner::*;
pub use testcase::{parse_test_case, parse_test_cases, ActionType, CaseError, TestCase};
