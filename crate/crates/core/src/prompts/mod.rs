//! Prompt templates and the parsers that read model replies back.

mod extract;
mod registry;
mod suggestion;
pub mod tolerant;

pub use extract::{
    extract_document, extract_graph, extract_svg, extract_tagged_html, parse_options, strip_fences,
    ExtractError, GoalCategory, OptionItem, OptionKind, TaggedPayload, START_TAG, STOP_TAG,
};
pub use registry::*;
pub use suggestion::{
    parse_widget_json, payload_fields, BoundingBox, SuggestionPayload, WidgetSuggestion,
};
