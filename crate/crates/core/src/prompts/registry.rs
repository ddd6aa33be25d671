use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template {template}: missing variables {names:?}")]
    MissingVar {
        template: String,
        names: Vec<String>,
    },
    #[error("template {template}: unknown variables {names:?}")]
    UnknownVar {
        template: String,
        names: Vec<String>,
    },
    #[error("template {template}: checksum {actual} does not match manifest {expected}")]
    ChecksumMismatch {
        template: String,
        expected: String,
        actual: String,
    },
    #[error("template {template}: manifest lists {manifest:?} but body uses {body:?}")]
    VarsMismatch {
        template: String,
        manifest: Vec<String>,
        body: Vec<String>,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

macro_rules! templates {
    ($($variant:ident => $name:literal),+ $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum TemplateId {
            $($variant),+
        }

        impl TemplateId {
            pub const ALL: &'static [TemplateId] = &[$(TemplateId::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(TemplateId::$variant => $name),+
                }
            }

            fn builtin_body(self) -> &'static str {
                match self {
                    $(TemplateId::$variant => include_str!(concat!("../../assets/prompts/", $name, ".txt"))),+
                }
            }
        }

        impl FromStr for TemplateId {
            type Err = TemplateError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(TemplateId::$variant),)+
                    other => Err(TemplateError::UnknownTemplate(other.to_string())),
                }
            }
        }
    };
}

templates! {
    MermaidDirections => "mermaid_directions",
    RoughDirections => "rough_directions",
    ConceptGraph => "concept_graph",
    ScenarioOptions => "scenario_options",
    ScenarioGraph => "scenario_graph",
    GoalOptions => "goal_options",
    LearningGoalGraph => "learning_goal_graph",
    IndependentVariable => "independent_variable",
    DependentVariable => "dependent_variable",
    ExperimentalObject => "experimental_object",
    DescriptiveProcedure => "descriptive_procedure",
    ExplanatoryProcess => "explanatory_process",
    ExplanatoryProcedure => "explanatory_procedure",
    ProceduralProcess => "procedural_process",
    ProceduralProcedure => "procedural_procedure",
    UiGraph => "ui_graph",
    SimulationCode => "simulation_code",
    SuggestChange => "suggest_change",
    PopulateAddNode => "populate_add_node",
    PopulateAddEdge => "populate_add_edge",
    PopulateEditAssumptions => "populate_edit_assumptions",
    PopulateRedraw => "populate_redraw",
    PopulateEditNode => "populate_edit_node",
    PopulateEditEdge => "populate_edit_edge",
    PopulateRemoveNode => "populate_remove_node",
    PopulateRemoveEdge => "populate_remove_edge",
    CodeAssumptions => "code_assumptions",
    UpdateAssumptions => "update_assumptions",
    SketchToSvg => "sketch_to_svg",
    SubstituteSvg => "substitute_svg",
    AutoAddEdges => "auto_add_edges",
    SubgraphSelection => "subgraph_selection",
    TestGeneration => "test_generation",
    Verification => "verification",
    JsFix => "js_fix",
    GraphCodePatch => "graph_code_patch",
    ReplyRepair => "reply_repair",
}

impl TemplateId {
    /// Populate template for a suggestion type code (1–8).
    pub fn populate_for(type_code: u8) -> Option<TemplateId> {
        Some(match type_code {
            1 => TemplateId::PopulateAddNode,
            2 => TemplateId::PopulateAddEdge,
            3 => TemplateId::PopulateEditAssumptions,
            4 => TemplateId::PopulateRedraw,
            5 => TemplateId::PopulateEditNode,
            6 => TemplateId::PopulateEditEdge,
            7 => TemplateId::PopulateRemoveNode,
            8 => TemplateId::PopulateRemoveEdge,
            _ => return None,
        })
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Shipped byte-for-byte from the published prompt set.
    Appendix,
    /// Written for this engine to fill a step the published set leaves open.
    Derived,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub id: TemplateId,
    pub file: String,
    pub required_vars: Vec<String>,
    pub expects_images: bool,
    pub origin: Origin,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub templates: Vec<ManifestEntry>,
}

const BUILTIN_MANIFEST: &str = include_str!("../../assets/prompts/manifest.json");

/// Template variables that are filled from other templates rather than by
/// the caller.
const FRAGMENTS: [(&str, TemplateId); 2] = [
    ("mermaidDirections", TemplateId::MermaidDirections),
    ("roughDirections", TemplateId::RoughDirections),
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Var(String),
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: String,
    pub required_vars: BTreeSet<String>,
    pub expects_images: bool,
    pub origin: Origin,
    pieces: Vec<Piece>,
}

impl PromptTemplate {
    pub fn checksum(&self) -> String {
        sha256_hex(&self.body)
    }

    /// Count of escaped `\${` literals, which render as a plain `${`.
    pub fn escaped_literals(&self) -> usize {
        self.body.matches("\\${").count()
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Maps a placeholder expression to its variable name. The published
/// prompts were JavaScript template literals, so a few placeholders are
/// expressions (`errorMessages.join('; ')`); callers pass the already
/// formatted value under the bare name.
fn var_name(expr: &str) -> String {
    if let Some(inner) = expr
        .strip_prefix("JSON.stringify(")
        .and_then(|s| s.strip_suffix(')'))
    {
        return inner.to_string();
    }
    if let Some((head, _)) = expr.split_once(".join(") {
        return if head.is_empty() {
            "jsErrors".into()
        } else {
            head.into()
        };
    }
    expr.to_string()
}

/// Splits a body into literal text and placeholders, resolving the
/// template-literal escapes `\${` and `` \` ``.
fn tokenize(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix("\\${") {
            text.push_str("${");
            rest = after;
        } else if let Some(after) = rest.strip_prefix("\\`") {
            text.push('`');
            rest = after;
        } else if let Some(after) = rest.strip_prefix("${") {
            match after.find('}') {
                Some(close) => {
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Var(var_name(&after[..close])));
                    rest = &after[close + 1..];
                }
                None => {
                    text.push_str("${");
                    rest = after;
                }
            }
        } else {
            let ch = rest.chars().next().expect("non-empty");
            text.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    pieces
}

/// Read-only store of prompt templates, verified against the manifest.
#[derive(Debug, Clone)]
pub struct Registry {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Registry {
    /// The templates compiled into the crate.
    pub fn builtin() -> Result<Self, TemplateError> {
        let manifest: Manifest = serde_json::from_str(BUILTIN_MANIFEST)
            .map_err(|e| TemplateError::Manifest(e.to_string()))?;
        Self::from_parts(manifest, |entry| Ok(entry.id.builtin_body().to_string()))
    }

    /// Loads `manifest.json` and the template files from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let raw = std::fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| TemplateError::Manifest(e.to_string()))?;
        let manifest: Manifest =
            serde_json::from_str(&raw).map_err(|e| TemplateError::Manifest(e.to_string()))?;
        Self::from_parts(manifest, |entry| {
            std::fs::read_to_string(dir.join(&entry.file))
                .map_err(|e| TemplateError::Manifest(format!("{}: {e}", entry.file)))
        })
    }

    fn from_parts(
        manifest: Manifest,
        mut load: impl FnMut(&ManifestEntry) -> Result<String, TemplateError>,
    ) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for entry in &manifest.templates {
            let body = load(entry)?;
            let actual = sha256_hex(&body);
            if actual != entry.sha256 {
                return Err(TemplateError::ChecksumMismatch {
                    template: entry.id.to_string(),
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
            let pieces = tokenize(&body);
            let body_vars: BTreeSet<String> = pieces
                .iter()
                .filter_map(|p| match p {
                    Piece::Var(v) if !FRAGMENTS.iter().any(|(f, _)| f == v) => Some(v.clone()),
                    _ => None,
                })
                .collect();
            let listed: BTreeSet<String> = entry.required_vars.iter().cloned().collect();
            if listed != body_vars {
                return Err(TemplateError::VarsMismatch {
                    template: entry.id.to_string(),
                    manifest: listed.into_iter().collect(),
                    body: body_vars.into_iter().collect(),
                });
            }
            templates.insert(
                entry.id,
                PromptTemplate {
                    id: entry.id,
                    body,
                    required_vars: listed,
                    expects_images: entry.expects_images,
                    origin: entry.origin,
                    pieces,
                },
            );
        }
        if let Some(missing) = TemplateId::ALL
            .iter()
            .find(|id| !templates.contains_key(id))
        {
            return Err(TemplateError::Manifest(format!("no entry for {missing}")));
        }
        Ok(Self { templates })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    /// Substitutes `vars` into the template. The variable set must match
    /// the template's required variables exactly; fragment placeholders
    /// (the graph-format and sketch-style directions) are filled in here.
    pub fn render<K, V>(&self, id: TemplateId, vars: &[(K, V)]) -> Result<String, TemplateError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let template = self.get(id);
        let given: BTreeMap<&str, &str> =
            vars.iter().map(|(k, v)| (k.as_ref(), v.as_ref())).collect();
        let missing: Vec<String> = template
            .required_vars
            .iter()
            .filter(|v| !given.contains_key(v.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(TemplateError::MissingVar {
                template: id.to_string(),
                names: missing,
            });
        }
        let unknown: Vec<String> = given
            .keys()
            .filter(|k| !template.required_vars.contains(**k))
            .map(|k| k.to_string())
            .collect();
        if !unknown.is_empty() {
            return Err(TemplateError::UnknownVar {
                template: id.to_string(),
                names: unknown,
            });
        }

        let mut out = String::with_capacity(template.body.len());
        for piece in &template.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Var(name) => match FRAGMENTS.iter().find(|(f, _)| f == name) {
                    Some((_, fragment)) => {
                        out.push_str(&self.render::<&str, &str>(*fragment, &[])?)
                    }
                    None => out.push_str(given[name.as_str()]),
                },
            }
        }
        Ok(out)
    }

    /// Renders `id` and appends one labelled block per context entry.
    /// Several published prompts name their inputs without a placeholder
    /// for them; this is how those inputs reach the model.
    pub fn render_with_context<K, V>(
        &self,
        id: TemplateId,
        vars: &[(K, V)],
        context: &[(&str, &str)],
    ) -> Result<String, TemplateError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut out = self.render(id, vars)?;
        for (label, value) in context {
            out.push_str("\n\n");
            out.push_str(label);
            out.push_str(":\n");
            out.push_str(value);
        }
        Ok(out)
    }
}
