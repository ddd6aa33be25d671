use super::{
    is_valid_edge_label, is_valid_id, is_valid_node_label, Direction, Edge, Graph, GraphError, Node,
};

const MAX_FRAGMENT: usize = 80;

fn fragment(line: &str) -> String {
    let trimmed = line.trim();
    match trimmed.char_indices().nth(MAX_FRAGMENT) {
        Some((cut, _)) => format!("{}…", &trimmed[..cut]),
        None => trimmed.to_string(),
    }
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Parses the mermaid-subset graph text.
///
/// Body lines may be indented by one to four spaces; blank lines and
/// Markdown fence lines are skipped. Edges may precede the nodes they
/// reference, but every endpoint must be declared somewhere.
pub fn parse_graph(text: &str) -> Result<Graph, GraphError> {
    if text.trim().is_empty() {
        return Err(GraphError::Empty);
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !is_fence(l));

    let (header_no, header) = lines.next().ok_or(GraphError::Empty)?;
    let direction = match header.trim() {
        "graph LR" => Direction::LR,
        "graph TD" => Direction::TD,
        _ => {
            return Err(GraphError::Syntax {
                line: header_no,
                fragment: fragment(header),
            })
        }
    };

    let mut graph = Graph::new(direction);
    let mut edges = Vec::new();
    for (no, raw) in lines {
        let syntax = || GraphError::Syntax {
            line: no,
            fragment: fragment(raw),
        };
        let indent = raw.len() - raw.trim_start_matches(' ').len();
        if !(1..=4).contains(&indent) {
            return Err(syntax());
        }
        let body = raw[indent..].trim_end();
        if body.contains("-->") {
            edges.push(parse_edge(body).ok_or_else(syntax)?);
        } else {
            let node = parse_node(body).ok_or_else(syntax)?;
            if graph.contains_node(&node.id) {
                return Err(GraphError::DuplicateNode(node.id));
            }
            graph.nodes.push(node);
        }
    }

    for edge in edges {
        for end in [&edge.source, &edge.target] {
            if !graph.contains_node(end) {
                return Err(GraphError::DanglingEdge(end.clone()));
            }
        }
        if graph.contains_edge(&edge.source, &edge.target, &edge.label) {
            return Err(GraphError::DuplicateLink {
                from: edge.source,
                to: edge.target,
                label: edge.label,
            });
        }
        graph.edges.push(edge);
    }
    Ok(graph)
}

/// Byte-level entry point for untrusted input.
pub fn parse_graph_bytes(bytes: &[u8]) -> Result<Graph, GraphError> {
    let text = std::str::from_utf8(bytes).map_err(|_| GraphError::InvalidUtf8)?;
    parse_graph(text)
}

fn parse_node(body: &str) -> Option<Node> {
    let open = body.find('[')?;
    let id = &body[..open];
    let label = body[open + 1..].strip_suffix(']')?;
    (is_valid_id(id) && is_valid_node_label(label)).then(|| Node {
        id: id.to_string(),
        label: label.to_string(),
    })
}

fn parse_edge(body: &str) -> Option<Edge> {
    let arrow = body.find("-->")?;
    let source = body[..arrow].trim_end();
    let rest = body[arrow + 3..].strip_prefix('|')?;
    let close = rest.find('|')?;
    let label = &rest[..close];
    let target = rest[close + 1..].trim_start();
    (is_valid_id(source) && is_valid_id(target) && is_valid_edge_label(label))
        .then(|| Edge::new(source, target, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::serialize_graph;

    const SOLID_LIQUID: &str =
        "graph LR\n    Solid[Solid]\n    Liquid[Liquid]\n    Solid -->|melting| Liquid";

    #[test]
    fn parses_states_of_matter() {
        let g = parse_graph(SOLID_LIQUID).unwrap();
        assert_eq!(g.direction(), Direction::LR);
        let ids: Vec<_> = g.nodes().iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["Solid", "Liquid"]);
        assert_eq!(g.edges(), &[Edge::new("Solid", "Liquid", "melting")]);
        assert_eq!(serialize_graph(&g), SOLID_LIQUID);
    }

    #[test]
    fn header_only_is_empty_graph() {
        let g = parse_graph("graph TD").unwrap();
        assert_eq!(g, Graph::new(Direction::TD));
    }

    #[test]
    fn undeclared_target_is_dangling() {
        let mut text = String::from("graph LR\n    A[a]\n    A -->|x| B");
        assert_eq!(
            parse_graph(&text),
            Err(GraphError::DanglingEdge("B".into()))
        );
        text = "graph LR\n    A -->|x| B".into();
        assert_eq!(
            parse_graph(&text),
            Err(GraphError::DanglingEdge("A".into()))
        );
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(parse_graph(""), Err(GraphError::Empty));
        assert_eq!(parse_graph(" \n\n"), Err(GraphError::Empty));
    }

    #[test]
    fn strips_fences_and_language_tags() {
        let fenced = format!("```mermaid\n{SOLID_LIQUID}\n```\n");
        assert_eq!(
            parse_graph(&fenced).unwrap(),
            parse_graph(SOLID_LIQUID).unwrap()
        );
    }

    #[test]
    fn single_space_indent_is_accepted() {
        let g = parse_graph("graph LR\n A[a]\n B[b]\n A -->|x| B").unwrap();
        assert_eq!(
            serialize_graph(&g),
            "graph LR\n    A[a]\n    B[b]\n    A -->|x| B"
        );
    }

    #[test]
    fn syntax_error_carries_line_and_fragment() {
        let err = parse_graph("graph LR\n    A[a]\n    A --> B").unwrap_err();
        assert_eq!(
            err,
            GraphError::Syntax {
                line: 3,
                fragment: "A --> B".into()
            }
        );
    }

    /// Hand-enumerated acceptance over a mutation corpus of the canonical
    /// text. Each entry is (input, accepted?).
    #[test]
    fn mutation_corpus() {
        let corpus: [(&str, Result<(), GraphError>); 20] = [
            (SOLID_LIQUID, Ok(())),
            ("graph TD\n    Solid[Solid]", Ok(())),
            (
                "graph LR\n  Solid[Solid]\n  Liquid[Liquid]\n  Solid -->|melting| Liquid",
                Ok(()),
            ),
            ("graph LR\n    Solid[Solid]\n\n    Liquid[Liquid]", Ok(())),
            ("graph LR\n    Solid[Solid]   \n    Liquid[Liquid]", Ok(())),
            (
                "graph LR\n    Solid[Solid]\n    Liquid[Liquid]\n    Solid-->|melting| Liquid",
                Ok(()),
            ),
            (
                "graph LR\n    Solid -->|melting| Liquid\n    Solid[Solid]\n    Liquid[Liquid]",
                Ok(()),
            ),
            (
                "graph LR\n    A[Multi word label]\n    B[b]\n    A -->|multi word link| B",
                Ok(()),
            ),
            (
                "graph RL\n    Solid[Solid]",
                Err(GraphError::Syntax {
                    line: 1,
                    fragment: "graph RL".into(),
                }),
            ),
            (
                "flowchart LR\n    A[a]",
                Err(GraphError::Syntax {
                    line: 1,
                    fragment: "flowchart LR".into(),
                }),
            ),
            (
                "graph LR\nSolid[Solid]",
                Err(GraphError::Syntax {
                    line: 2,
                    fragment: "Solid[Solid]".into(),
                }),
            ),
            (
                "graph LR\n      Solid[Solid]",
                Err(GraphError::Syntax {
                    line: 2,
                    fragment: "Solid[Solid]".into(),
                }),
            ),
            (
                "graph LR\n\tSolid[Solid]",
                Err(GraphError::Syntax {
                    line: 2,
                    fragment: "Solid[Solid]".into(),
                }),
            ),
            (
                "graph LR\n    Solid[Solid",
                Err(GraphError::Syntax {
                    line: 2,
                    fragment: "Solid[Solid".into(),
                }),
            ),
            (
                "graph LR\n    Solid Thing[Solid]",
                Err(GraphError::Syntax {
                    line: 2,
                    fragment: "Solid Thing[Solid]".into(),
                }),
            ),
            (
                "graph LR\n    A[a]\n    B[b]\n    A --> |x| B",
                Err(GraphError::Syntax {
                    line: 4,
                    fragment: "A --> |x| B".into(),
                }),
            ),
            (
                "graph LR\n    A[a]\n    B[b]\n    A -->|| B",
                Err(GraphError::Syntax {
                    line: 4,
                    fragment: "A -->|| B".into(),
                }),
            ),
            (
                "graph LR\n    A[a]\n    A[again]",
                Err(GraphError::DuplicateNode("A".into())),
            ),
            (
                "graph LR\n    A[a]\n    A -->|x| Ghost",
                Err(GraphError::DanglingEdge("Ghost".into())),
            ),
            (
                "graph LR\n    A[a]\n    B[b]\n    A -->|x| B\n    A -->|x| B",
                Err(GraphError::DuplicateLink {
                    from: "A".into(),
                    to: "B".into(),
                    label: "x".into(),
                }),
            ),
        ];
        for (input, expected) in corpus {
            assert_eq!(parse_graph(input).map(|_| ()), expected, "input: {input:?}");
        }
    }

    #[test]
    fn invalid_utf8_is_structured() {
        assert_eq!(
            parse_graph_bytes(&[0x67, 0xff, 0xfe]),
            Err(GraphError::InvalidUtf8)
        );
    }
}
