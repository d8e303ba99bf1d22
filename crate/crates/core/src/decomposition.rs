//! Splitting a complex claim into atomic claims joined by a logical formula.
//!
//! Model output is validated before use; any failure (gateway error,
//! malformed output, invariant violation) yields the single-atom identity
//! decomposition, so [`decompose`] is total.

use crate::llm::{Gateway, LlmRequest, RoleTag};
use crate::logic;
use crate::prompts::Template;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicClaim {
    pub atom_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub atomic_claims: Vec<AtomicClaim>,
    /// Canonical form (keyword operators, minimal parentheses).
    pub formula: String,
    pub causal_edges: Vec<(String, String)>,
    pub complexity: f64,
    pub fallback_used: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallback_reasons: Vec<String>,
}

impl Decomposition {
    /// The whole claim as one atom.
    pub fn identity(claim: &str) -> Self {
        Self {
            atomic_claims: vec![AtomicClaim { atom_id: "C1".into(), text: claim.to_string() }],
            formula: "C1".into(),
            causal_edges: Vec::new(),
            complexity: 0.0,
            fallback_used: true,
            fallback_reasons: Vec::new(),
        }
    }
}

/// Decomposer output as received, before validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDecomposition {
    pub atomic_claims: Vec<AtomicClaim>,
    pub formula: Option<String>,
    pub causal_edges: Vec<(String, String)>,
    pub complexity: Option<f64>,
}

impl RawDecomposition {
    /// Lenient read: atoms may be `{id, text}` objects or bare strings (which
    /// are numbered in order); ids are trimmed and upper-cased.
    pub fn from_value(v: &Value) -> Self {
        let atomic_claims = v
            .get("atomic_claims")
            .and_then(Value::as_array)
            .map(|items| {
                items
                    .iter()
                    .enumerate()
                    .map(|(i, item)| match item {
                        Value::String(text) => AtomicClaim { atom_id: format!("C{}", i + 1), text: text.clone() },
                        other => AtomicClaim {
                            atom_id: other
                                .get("id")
                                .or_else(|| other.get("atom_id"))
                                .and_then(Value::as_str)
                                .unwrap_or("")
                                .trim()
                                .to_ascii_uppercase(),
                            text: other.get("text").and_then(Value::as_str).unwrap_or("").to_string(),
                        },
                    })
                    .collect()
            })
            .unwrap_or_default();
        let causal_edges = v
            .get("causal_edges")
            .and_then(Value::as_array)
            .map(|edges| {
                edges
                    .iter()
                    .filter_map(|e| {
                        let pair = e.as_array()?;
                        let id = |k: usize| pair.get(k)?.as_str().map(|s| s.trim().to_ascii_uppercase());
                        Some((id(0)?, id(1)?))
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            atomic_claims,
            formula: v.get("formula").and_then(Value::as_str).map(str::to_string),
            causal_edges,
            complexity: v.get("complexity").and_then(Value::as_f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoAtoms,
    NonConsecutiveId { expected: String, found: String },
    EmptyAtomText(String),
    MissingFormula,
    FormulaSyntax(String),
    UndeclaredAtom(String),
    UndeclaredEdgeAtom(String),
    MissingComplexity,
    ComplexityOutOfRange(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoAtoms => f.write_str("no atomic claims"),
            Violation::NonConsecutiveId { expected, found } => {
                write!(f, "atom ids must be consecutive: expected {expected}, found `{found}`")
            }
            Violation::EmptyAtomText(id) => write!(f, "atom {id} has empty text"),
            Violation::MissingFormula => f.write_str("missing formula"),
            Violation::FormulaSyntax(e) => write!(f, "formula does not parse: {e}"),
            Violation::UndeclaredAtom(id) => write!(f, "formula references undeclared atom {id}"),
            Violation::UndeclaredEdgeAtom(id) => write!(f, "causal edge references undeclared atom {id}"),
            Violation::MissingComplexity => f.write_str("missing complexity"),
            Violation::ComplexityOutOfRange(x) => write!(f, "complexity {x} is outside [0, 1]"),
        }
    }
}

/// Checks every invariant and returns the validated decomposition, or all
/// violations found.
pub fn validate(raw: &RawDecomposition) -> Result<Decomposition, Vec<Violation>> {
    let mut violations = Vec::new();
    if raw.atomic_claims.is_empty() {
        violations.push(Violation::NoAtoms);
    }
    let declared: Vec<&str> = raw.atomic_claims.iter().map(|a| a.atom_id.as_str()).collect();
    for (i, atom) in raw.atomic_claims.iter().enumerate() {
        let expected = format!("C{}", i + 1);
        if atom.atom_id != expected {
            violations.push(Violation::NonConsecutiveId { expected, found: atom.atom_id.clone() });
        }
        if atom.text.trim().is_empty() {
            violations.push(Violation::EmptyAtomText(atom.atom_id.clone()));
        }
    }
    let mut canonical = String::new();
    match &raw.formula {
        None => violations.push(Violation::MissingFormula),
        Some(text) => match logic::parse(text) {
            Ok(f) => {
                for atom in f.atoms() {
                    if !declared.contains(&atom.as_str()) {
                        violations.push(Violation::UndeclaredAtom(atom));
                    }
                }
                canonical = f.to_string();
            }
            Err(e) => violations.push(Violation::FormulaSyntax(e.to_string())),
        },
    }
    for (a, b) in &raw.causal_edges {
        for id in [a, b] {
            if !declared.contains(&id.as_str()) {
                violations.push(Violation::UndeclaredEdgeAtom(id.clone()));
            }
        }
    }
    match raw.complexity {
        None => violations.push(Violation::MissingComplexity),
        Some(x) if !(0.0..=1.0).contains(&x) => violations.push(Violation::ComplexityOutOfRange(x)),
        Some(_) => {}
    }
    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(Decomposition {
        atomic_claims: raw
            .atomic_claims
            .iter()
            .map(|a| AtomicClaim { atom_id: a.atom_id.clone(), text: a.text.trim().to_string() })
            .collect(),
        formula: canonical,
        causal_edges: raw.causal_edges.clone(),
        complexity: raw.complexity.unwrap_or(0.0),
        fallback_used: false,
        fallback_reasons: Vec::new(),
    })
}

/// Asks the decomposer and validates its answer; never fails.
pub fn decompose(gateway: &Gateway, claim: &str) -> Decomposition {
    let (system, user) = Template::Decomposer.render(&[("claim", claim)]);
    let reasons = match gateway.complete(&LlmRequest::new(RoleTag::Decomposer, system, user).json()) {
        Ok(resp) => {
            let raw = RawDecomposition::from_value(resp.parsed.as_ref().unwrap_or(&Value::Null));
            match validate(&raw) {
                Ok(d) => return d,
                Err(v) => v.iter().map(ToString::to_string).collect(),
            }
        }
        Err(e) => vec![e.to_string()],
    };
    Decomposition { fallback_reasons: reasons, ..Decomposition::identity(claim) }
}
