//! Instance file I/O: a JSON reader for both markets and grid recipes, a
//! plain-text instance reader, and canonical serialization for round-trips.
//!
//! Text grammar (`#` starts a comment, blank lines are skipped):
//!
//! ```text
//! N G k          # agents, goods, bundle-size cap
//! s_1 ... s_G    # integer supply per good
//! i b v          # one line per (agent, bundle-index, value) triple
//! ```
//!
//! Bundle indices follow the canonical bundle order (ascending total size,
//! lexicographic within a size); unlisted pairs value to zero.

use std::path::Path;
use std::str::FromStr;

use crate::auction::{bundle_space_size, AuctionInstance, DEFAULT_BUNDLE_CAP};
use crate::spectrum::GridSpec;
use crate::{Error, Result};

/// Supported input encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputFormat {
    Json,
    Text,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(InputFormat::Json),
            "text" | "txt" => Ok(InputFormat::Text),
            other => Err(Error::InvalidConfig(format!(
                "unknown input format {other:?} (expected \"json\" or \"text\")"
            ))),
        }
    }
}

/// What an input file turned out to hold.
#[derive(Clone, Debug, PartialEq)]
pub enum ParsedInput {
    /// A fully specified market.
    Instance(AuctionInstance),
    /// A recipe for generating grid markets.
    Grid(GridSpec),
}

impl ParsedInput {
    /// Canonical JSON form (pretty-printed, trailing newline).
    pub fn canonical_json(&self) -> String {
        let body = match self {
            ParsedInput::Instance(instance) => serde_json::to_string_pretty(instance),
            ParsedInput::Grid(grid) => serde_json::to_string_pretty(grid),
        }
        .expect("serialization of plain data cannot fail");
        format!("{body}\n")
    }
}

/// Read and parse one input file.
pub fn parse_input(path: &Path, format: InputFormat) -> Result<ParsedInput> {
    let label = path.display().to_string();
    let text = std::fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{label}: {e}")))?;
    match format {
        InputFormat::Json => parse_json_str(&label, &text),
        InputFormat::Text => Ok(ParsedInput::Instance(parse_instance_text(&label, &text)?)),
    }
}

/// Parse a JSON document holding either a market or a grid recipe; grid
/// recipes are recognized by their `m_g` field.
pub fn parse_json_str(label: &str, text: &str) -> Result<ParsedInput> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| schema(label, e.to_string()))?;
    if value.get("m_g").is_some() {
        let grid: GridSpec =
            serde_json::from_value(value).map_err(|e| schema(label, e.to_string()))?;
        grid.validate().map_err(|e| schema(label, e.to_string()))?;
        Ok(ParsedInput::Grid(grid))
    } else {
        let instance: AuctionInstance =
            serde_json::from_value(value).map_err(|e| schema(label, e.to_string()))?;
        instance.validate().map_err(|e| schema(label, e.to_string()))?;
        Ok(ParsedInput::Instance(instance))
    }
}

/// Parse the plain-text instance grammar; `label` names the source in
/// diagnostics.
pub fn parse_instance_text(label: &str, src: &str) -> Result<AuctionInstance> {
    let mut lines = src.lines().enumerate().filter_map(|(idx, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            None
        } else {
            Some((idx + 1, body))
        }
    });

    let (line_no, header) = lines
        .next()
        .ok_or_else(|| schema(label, "empty input: expected a `N G k` header".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(schema(
            label,
            format!("line {line_no}: header needs exactly `N G k`, got {fields:?}"),
        ));
    }
    let n_agents: usize = parse_field(label, line_no, "N", fields[0])?;
    let n_goods: usize = parse_field(label, line_no, "G", fields[1])?;
    let k: u32 = parse_field(label, line_no, "k", fields[2])?;

    let count = bundle_space_size(n_goods, k);
    if count > DEFAULT_BUNDLE_CAP as u128 {
        return Err(schema(
            label,
            format!("line {line_no}: {count} bundles for G={n_goods}, k={k} is beyond support"),
        ));
    }
    let n_bundles = count as usize;

    let (line_no, supply_line) =
        lines.next().ok_or_else(|| schema(label, "missing supply line".into()))?;
    let fields: Vec<&str> = supply_line.split_whitespace().collect();
    if fields.len() != n_goods {
        return Err(schema(
            label,
            format!("line {line_no}: expected {n_goods} supplies, got {}", fields.len()),
        ));
    }
    let mut supplies = Vec::with_capacity(n_goods);
    for (j, field) in fields.iter().enumerate() {
        supplies.push(parse_field(label, line_no, &format!("s_{j}"), field)?);
    }

    let mut valuations = vec![vec![0.0f64; n_bundles]; n_agents];
    let mut seen = vec![vec![false; n_bundles]; n_agents];
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(schema(
                label,
                format!("line {line_no}: expected `agent bundle value`, got {fields:?}"),
            ));
        }
        let agent: usize = parse_field(label, line_no, "agent", fields[0])?;
        let bundle: usize = parse_field(label, line_no, "bundle", fields[1])?;
        let value: f64 = parse_field(label, line_no, "value", fields[2])?;
        if agent >= n_agents {
            return Err(schema(
                label,
                format!("line {line_no}: agent {agent} out of range (N = {n_agents})"),
            ));
        }
        if bundle >= n_bundles {
            return Err(schema(
                label,
                format!("line {line_no}: bundle {bundle} out of range ({n_bundles} bundles)"),
            ));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(schema(
                label,
                format!("line {line_no}: value must be finite and nonnegative, got {value}"),
            ));
        }
        if seen[agent][bundle] {
            return Err(schema(
                label,
                format!("line {line_no}: duplicate entry for agent {agent}, bundle {bundle}"),
            ));
        }
        seen[agent][bundle] = true;
        valuations[agent][bundle] = value;
    }

    let instance = AuctionInstance { n_agents, n_goods, supplies, k, valuations };
    instance.validate().map_err(|e| schema(label, e.to_string()))?;
    Ok(instance)
}

/// Render a market in the plain-text grammar (zero values are omitted).
pub fn instance_to_text(instance: &AuctionInstance) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", instance.n_agents, instance.n_goods, instance.k);
    let supplies: Vec<String> = instance.supplies.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "{}", supplies.join(" "));
    for (i, row) in instance.valuations.iter().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            if v != 0.0 {
                let _ = writeln!(out, "{i} {b} {v}");
            }
        }
    }
    out
}

fn schema(label: &str, message: String) -> Error {
    Error::Schema { path: label.to_string(), message }
}

fn parse_field<T: FromStr>(label: &str, line_no: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        schema(
            label,
            format!(
                "line {line_no}: field `{name}` cannot be parsed from {raw:?} as {}",
                std::any::type_name::<T>()
            ),
        )
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY_TEXT: &str = "\
# two agents, two goods, singletons only
2 2 1
1 1
0 0 4.5   # agent 0 wants good 0
0 1 1.0
1 1 3.0
";

    fn tiny_instance() -> AuctionInstance {
        AuctionInstance {
            n_agents: 2,
            n_goods: 2,
            supplies: vec![1, 1],
            k: 1,
            valuations: vec![vec![4.5, 1.0], vec![0.0, 3.0]],
        }
    }

    #[test]
    fn text_reader_handles_comments_and_defaults() {
        let parsed = parse_instance_text("<test>", TINY_TEXT).unwrap();
        assert_eq!(parsed, tiny_instance());
    }

    #[test]
    fn text_and_json_twins_parse_equal() {
        let from_text = parse_instance_text("<text>", TINY_TEXT).unwrap();
        let json = ParsedInput::Instance(tiny_instance()).canonical_json();
        let from_json = parse_json_str("<json>", &json).unwrap();
        assert_eq!(ParsedInput::Instance(from_text), from_json);
    }

    #[test]
    fn text_render_round_trips() {
        let instance = tiny_instance();
        let rendered = instance_to_text(&instance);
        let reparsed = parse_instance_text("<render>", &rendered).unwrap();
        assert_eq!(reparsed, instance);
    }

    #[test]
    fn grid_recipes_are_recognized_by_their_rows_field() {
        let json = r#"{
            "m_g": 3, "n_g": 3, "s_g": 10, "n_agents": 30, "k_a": 4,
            "mu": 20.0, "lambda": 0.1, "rng_seed": 7
        }"#;
        match parse_json_str("<grid>", json).unwrap() {
            ParsedInput::Grid(grid) => {
                assert_eq!(grid.n_cells(), 9);
                assert_eq!(grid.k_a, 4);
            }
            other => panic!("expected a grid recipe, got {other:?}"),
        }
    }

    #[test]
    fn unknown_json_fields_are_named_in_the_error() {
        let json = r#"{
            "n_agents": 1, "n_goods": 1, "supplies": [1], "k": 1,
            "valuations": [[1.0]], "surprise": true
        }"#;
        match parse_json_str("<bad>", json) {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("surprise"), "message was {message:?}");
            }
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_references_carry_line_numbers() {
        let bad_agent = "2 2 1\n1 1\n5 1 2.0\n";
        match parse_instance_text("<bad>", bad_agent) {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("line 3") && message.contains("agent 5"));
            }
            other => panic!("expected a schema error, got {other:?}"),
        }
        let bad_bundle = "2 2 1\n1 1\n0 9 2.0\n";
        match parse_instance_text("<bad>", bad_bundle) {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("line 3") && message.contains("bundle 9"));
            }
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_triples_are_rejected() {
        let dup = "1 1 1\n1\n0 0 2.0\n0 0 3.0\n";
        match parse_instance_text("<dup>", dup) {
            Err(Error::Schema { message, .. }) => {
                assert!(message.contains("line 4") && message.contains("duplicate"));
            }
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_header_is_rejected_with_line_context() {
        match parse_instance_text("<bad>", "2 2\n1 1\n") {
            Err(Error::Schema { message, .. }) => assert!(message.contains("line 1")),
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn format_names_parse_case_insensitively() {
        assert_eq!("JSON".parse::<InputFormat>().unwrap(), InputFormat::Json);
        assert_eq!("text".parse::<InputFormat>().unwrap(), InputFormat::Text);
        assert!("yaml".parse::<InputFormat>().is_err());
    }
}
