//! The `.crn` reaction-network format.
//!
//! ```text
//! # decaying dimerization
//! species X, Y, Z
//! X <-> 2Y : 9, 1
//! X -> Z   : 2
//! Y -> 0   : 1
//! init X = 900, Y = 90, Z = 100
//! ```
//!
//! Statements are separated by newlines or `;`, and `#` starts a comment. A
//! complex is a `+`-separated list of `coeff species` terms (`coeff` defaults
//! to 1); the empty complex is written `0`. `->` takes one rate, `<->` takes
//! a forward and a reverse rate and expands to two reactions. Species order
//! is declaration order.

use std::fmt;

use serde::Serialize;

use crate::network::{Complex, NetworkError, Reaction, ReactionNetwork};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSource {
    pub text: String,
    pub origin: String,
}

impl NetworkSource {
    pub fn new(text: impl Into<String>, origin: impl Into<String>) -> Self {
        NetworkSource {
            text: text.into(),
            origin: origin.into(),
        }
    }

    pub fn stdin(text: &str) -> Self {
        NetworkSource::new(text, "<stdin>")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub line: usize,
    pub message: String,
}

impl ParseDiagnostic {
    fn error(line: usize, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            severity: Severity::Error,
            line,
            message: message.into(),
        }
    }

    fn warning(line: usize, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            severity: Severity::Warning,
            line,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "line {}: {}: {}", self.line, tag, self.message)
    }
}

/// Strictly positive Poisson means, one per species in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialCondition {
    pub values: Vec<f64>,
}

/// A parsed file whose `init` block may be absent.
#[derive(Debug, Clone)]
pub struct Document {
    pub network: ReactionNetwork,
    pub initial: Option<InitialCondition>,
    pub warnings: Vec<ParseDiagnostic>,
}

#[derive(Debug, Clone)]
pub struct ParsedNetwork {
    pub network: ReactionNetwork,
    pub initial: InitialCondition,
    pub warnings: Vec<ParseDiagnostic>,
}

/// Parses a network together with its mandatory `init` block.
pub fn parse_network(src: &NetworkSource) -> Result<ParsedNetwork, Vec<ParseDiagnostic>> {
    let doc = parse_document(src)?;
    match doc.initial {
        Some(initial) => Ok(ParsedNetwork {
            network: doc.network,
            initial,
            warnings: doc.warnings,
        }),
        None => Err(vec![ParseDiagnostic::error(
            last_line(&src.text),
            "missing init block",
        )]),
    }
}

/// Parses a network; the `init` block is optional.
pub fn parse_document(src: &NetworkSource) -> Result<Document, Vec<ParseDiagnostic>> {
    let statements = split_statements(&src.text);
    let mut diags = Vec::new();

    // Species first, so declarations may follow their use.
    let mut species: Vec<String> = Vec::new();
    let mut species_line = None;
    for st in &statements {
        let Some(rest) = keyword(st.text, "species") else {
            continue;
        };
        species_line.get_or_insert(st.line);
        for name in rest.split(',').map(str::trim) {
            if !is_identifier(name) {
                diags.push(ParseDiagnostic::error(
                    st.line,
                    format!("invalid species name `{name}`"),
                ));
            } else if species.iter().any(|s| s == name) {
                diags.push(ParseDiagnostic::error(
                    st.line,
                    format!("duplicate species declaration `{name}`"),
                ));
            } else {
                species.push(name.to_string());
            }
        }
    }
    let Some(species_line) = species_line else {
        diags.push(ParseDiagnostic::error(1, "missing species declaration"));
        return Err(diags);
    };

    let d = species.len();
    let mut reactions = Vec::new();
    let mut reaction_lines = Vec::new();
    let mut init: Option<Vec<Option<f64>>> = None;
    for st in &statements {
        if keyword(st.text, "species").is_some() {
            continue;
        }
        if let Some(rest) = keyword(st.text, "init") {
            let values = init.get_or_insert_with(|| vec![None; d]);
            parse_init(rest, st.line, &species, values, &mut diags);
            continue;
        }
        match parse_reaction(st.text, &species) {
            Ok(parsed) => {
                for r in parsed {
                    reactions.push(r);
                    reaction_lines.push(st.line);
                }
            }
            Err(msg) => diags.push(ParseDiagnostic::error(st.line, msg)),
        }
    }

    let initial = init.and_then(|values| {
        let mut out = Vec::with_capacity(d);
        for (name, v) in species.iter().zip(&values) {
            match v {
                Some(v) => out.push(*v),
                None => diags.push(ParseDiagnostic::error(
                    last_line(&src.text),
                    format!("no initial value for species `{name}`"),
                )),
            }
        }
        (out.len() == d).then_some(InitialCondition { values: out })
    });

    if diags.iter().any(ParseDiagnostic::is_error) {
        return Err(diags);
    }
    let network = match ReactionNetwork::new(species, reactions) {
        Ok(net) => net,
        Err(e) => {
            let line = match &e {
                NetworkError::DimensionMismatch { index, .. }
                | NetworkError::SourceEqualsProduct { index }
                | NetworkError::InvalidRate { index, .. } => reaction_lines[*index],
                NetworkError::NoSpecies | NetworkError::DuplicateSpecies(_) => species_line,
            };
            diags.push(ParseDiagnostic::error(line, e.to_string()));
            return Err(diags);
        }
    };
    diags.extend(validate_lines(&network, species_line, &reaction_lines));
    if diags.iter().any(ParseDiagnostic::is_error) {
        return Err(diags);
    }
    Ok(Document {
        network,
        initial,
        warnings: diags,
    })
}

/// Structural checks on a network. Line numbers refer to the canonical
/// rendering produced by [`to_dsl`]: species on line 1, reaction `k` on
/// line `k + 2`.
pub fn validate_network(net: &ReactionNetwork) -> Vec<ParseDiagnostic> {
    let lines: Vec<usize> = (0..net.reactions().len()).map(|k| k + 2).collect();
    validate_lines(net, 1, &lines)
}

fn validate_lines(
    net: &ReactionNetwork,
    species_line: usize,
    reaction_lines: &[usize],
) -> Vec<ParseDiagnostic> {
    let mut diags = Vec::new();
    for (i, name) in net.species().iter().enumerate() {
        if !net.complexes().iter().any(|z| z.counts()[i] > 0) {
            diags.push(ParseDiagnostic::error(
                species_line,
                format!("species `{name}` appears in no complex"),
            ));
        }
    }
    for (ci, z) in net.complexes().iter().enumerate() {
        if !net.edges().iter().any(|&(s, p)| s == ci || p == ci) {
            diags.push(ParseDiagnostic::error(
                species_line,
                format!("complex `{}` appears in no reaction", net.format_complex(z)),
            ));
        }
    }
    for (k, r) in net.reactions().iter().enumerate() {
        if r.rate == 0.0 {
            diags.push(ParseDiagnostic::warning(
                reaction_lines[k],
                format!(
                    "reaction {} -> {} has rate constant 0",
                    net.format_complex(&r.source),
                    net.format_complex(&r.product)
                ),
            ));
        }
    }
    diags
}

/// Canonical text form; reparses to an equal network.
pub fn to_dsl(net: &ReactionNetwork, initial: Option<&InitialCondition>) -> String {
    let mut out = format!("species {}\n", net.species().join(", "));
    for r in net.reactions() {
        out.push_str(&format!(
            "{} -> {} : {}\n",
            net.format_complex(&r.source),
            net.format_complex(&r.product),
            r.rate
        ));
    }
    if let Some(init) = initial {
        let parts: Vec<String> = net
            .species()
            .iter()
            .zip(&init.values)
            .map(|(s, v)| format!("{s} = {v}"))
            .collect();
        out.push_str(&format!("init {}\n", parts.join(", ")));
    }
    out
}

struct Statement<'a> {
    line: usize,
    text: &'a str,
}

fn split_statements(text: &str) -> Vec<Statement<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let code = raw.split('#').next().unwrap_or("");
        for part in code.split(';') {
            let part = part.trim();
            if !part.is_empty() {
                out.push(Statement {
                    line: i + 1,
                    text: part,
                });
            }
        }
    }
    out
}

fn last_line(text: &str) -> usize {
    text.lines().count().max(1)
}

fn keyword<'a>(stmt: &'a str, kw: &str) -> Option<&'a str> {
    let rest = stmt.strip_prefix(kw)?;
    if rest.is_empty() || rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_init(
    rest: &str,
    line: usize,
    species: &[String],
    values: &mut [Option<f64>],
    diags: &mut Vec<ParseDiagnostic>,
) {
    for assignment in rest.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        let Some((name, value)) = assignment.split_once('=') else {
            diags.push(ParseDiagnostic::error(
                line,
                format!("expected `NAME = value`, found `{assignment}`"),
            ));
            continue;
        };
        let name = name.trim();
        let Some(i) = species.iter().position(|s| s == name) else {
            diags.push(ParseDiagnostic::error(line, format!("unknown species `{name}`")));
            continue;
        };
        match value.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => {
                if values[i].replace(v).is_some() {
                    diags.push(ParseDiagnostic::error(
                        line,
                        format!("duplicate initial value for `{name}`"),
                    ));
                }
            }
            Ok(v) => {
                values[i] = Some(v);
                diags.push(ParseDiagnostic::error(
                    line,
                    format!("initial value for `{name}` must be a finite positive number"),
                ));
            }
            Err(_) => {
                values[i] = Some(f64::NAN);
                diags.push(ParseDiagnostic::error(
                    line,
                    format!("non-numeric initial value `{}`", value.trim()),
                ));
            }
        }
    }
}

fn parse_reaction(stmt: &str, species: &[String]) -> Result<Vec<Reaction>, String> {
    let (reversible, lhs, rest) = if let Some((l, r)) = stmt.split_once("<->") {
        (true, l, r)
    } else if let Some((l, r)) = stmt.split_once("->") {
        (false, l, r)
    } else {
        return Err(format!("expected a reaction, found `{stmt}`"));
    };
    let Some((rhs, rates)) = rest.split_once(':') else {
        return Err("missing `: rate` after reaction".to_string());
    };
    let source = parse_complex(lhs, species)?;
    let product = parse_complex(rhs, species)?;
    if source == product {
        return Err("source equals product".to_string());
    }
    let rates: Vec<&str> = rates.split(',').map(str::trim).collect();
    let expected = if reversible { 2 } else { 1 };
    if rates.len() != expected {
        return Err(format!(
            "expected {expected} rate constant(s), found {}",
            rates.len()
        ));
    }
    let rates = rates
        .into_iter()
        .map(parse_rate)
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = vec![Reaction::new(source.clone(), product.clone(), rates[0])];
    if reversible {
        out.push(Reaction::new(product, source, rates[1]));
    }
    Ok(out)
}

fn parse_rate(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_nan() || v.is_infinite() => Err(format!("rate `{s}` is not finite")),
        Ok(v) if v < 0.0 => Err(format!("negative rate `{s}`")),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("non-numeric rate `{s}`")),
    }
}

fn parse_complex(s: &str, species: &[String]) -> Result<Complex, String> {
    let s = s.trim();
    let mut counts = vec![0u32; species.len()];
    if s == "0" || s == "∅" {
        return Ok(Complex::new(counts));
    }
    if s.is_empty() {
        return Err("empty complex (write `0` for the empty complex)".to_string());
    }
    for term in s.split('+').map(str::trim) {
        let digits: String = term.chars().take_while(char::is_ascii_digit).collect();
        let name = term[digits.len()..].trim();
        let coeff = if digits.is_empty() {
            1
        } else {
            digits
                .parse::<u32>()
                .map_err(|_| format!("coefficient `{digits}` out of range"))?
        };
        if coeff == 0 {
            return Err(format!("zero coefficient in term `{term}`"));
        }
        if !is_identifier(name) {
            return Err(format!("malformed term `{term}`"));
        }
        let i = species
            .iter()
            .position(|sp| sp == name)
            .ok_or_else(|| format!("unknown species `{name}`"))?;
        counts[i] = counts[i]
            .checked_add(coeff)
            .ok_or_else(|| format!("coefficient overflow in `{s}`"))?;
    }
    Ok(Complex::new(counts))
}
