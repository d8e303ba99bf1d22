//! Logical formulas over atomic claims and their strong Kleene evaluation.
//!
//! Surface grammar (keywords case-insensitive, aliases in parentheses):
//!
//! ```text
//! formula := or ( "->" formula )?            right-associative (=>, →, IMPLIES)
//! or      := and ( OR and )*                 (||, |, ∨)
//! and     := unary ( AND unary )*            (&&, &, ∧)
//! unary   := NOT unary | primary             (!, ~, ¬)
//! primary := C<digits> | "(" formula ")"
//! ```

use crate::types::Verdict;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

const MAX_NESTING: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("syntax error at token {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("atom `{0}` has no truth value")]
    UnboundAtom(String),
    #[error("majority vote over zero labels")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TruthValue {
    T,
    F,
    U,
}

impl TruthValue {
    pub const ALL: [TruthValue; 3] = [TruthValue::T, TruthValue::F, TruthValue::U];

    pub fn and(self, other: Self) -> Self {
        use TruthValue::*;
        match (self, other) {
            (F, _) | (_, F) => F,
            (T, T) => T,
            _ => U,
        }
    }

    pub fn or(self, other: Self) -> Self {
        use TruthValue::*;
        match (self, other) {
            (T, _) | (_, T) => T,
            (F, F) => F,
            _ => U,
        }
    }

    pub fn implies(self, other: Self) -> Self {
        (!self).or(other)
    }
}

impl std::ops::Not for TruthValue {
    type Output = Self;

    fn not(self) -> Self {
        match self {
            TruthValue::T => TruthValue::F,
            TruthValue::F => TruthValue::T,
            TruthValue::U => TruthValue::U,
        }
    }
}

impl From<Verdict> for TruthValue {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::True => TruthValue::T,
            Verdict::False => TruthValue::F,
            Verdict::Uncertain => TruthValue::U,
        }
    }
}

impl From<TruthValue> for Verdict {
    fn from(t: TruthValue) -> Self {
        match t {
            TruthValue::T => Verdict::True,
            TruthValue::F => Verdict::False,
            TruthValue::U => Verdict::Uncertain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(id: impl Into<String>) -> Self {
        Formula::Atom(id.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    /// Distinct atom ids in order of first appearance.
    pub fn atoms(&self) -> Vec<String> {
        fn walk(f: &Formula, out: &mut Vec<String>) {
            match f {
                Formula::Atom(id) => {
                    if !out.contains(id) {
                        out.push(id.clone());
                    }
                }
                Formula::Not(a) => walk(a, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Atom(_) => 0,
            Formula::Not(a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::Not(_) => 4,
            Formula::Atom(_) => 5,
        }
    }
}

/// Canonical form: keyword operators, minimal parentheses.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, node: &Formula, parens: bool) -> fmt::Result {
            if parens {
                write!(f, "({node})")
            } else {
                write!(f, "{node}")
            }
        }
        let p = self.precedence();
        match self {
            Formula::Atom(id) => f.write_str(id),
            Formula::Not(a) => {
                f.write_str("NOT ")?;
                child(f, a, a.precedence() < p)
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                let op = if matches!(self, Formula::And(..)) { "AND" } else { "OR" };
                child(f, a, a.precedence() < p)?;
                write!(f, " {op} ")?;
                child(f, b, b.precedence() <= p)
            }
            Formula::Implies(a, b) => {
                child(f, a, a.precedence() <= p)?;
                f.write_str(" -> ")?;
                child(f, b, b.precedence() < p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Atom(String),
    Not,
    And,
    Or,
    Implies,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Atom(id) => f.write_str(id),
            Token::Not => f.write_str("NOT"),
            Token::And => f.write_str("AND"),
            Token::Or => f.write_str("OR"),
            Token::Implies => f.write_str("->"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<Token>, LogicError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let err = |tokens: &Vec<Token>, message: String| LogicError::Syntax {
        position: tokens.len() + 1,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let (token, width) = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => (Token::LParen, 1),
            ')' => (Token::RParen, 1),
            '-' | '=' if next == Some('>') => (Token::Implies, 2),
            '→' | '⇒' => (Token::Implies, 1),
            '&' if next == Some('&') => (Token::And, 2),
            '&' | '∧' => (Token::And, 1),
            '|' if next == Some('|') => (Token::Or, 2),
            '|' | '∨' => (Token::Or, 1),
            '!' | '~' | '¬' => (Token::Not, 1),
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect::<String>().to_ascii_uppercase();
                let token = match word.as_str() {
                    "AND" => Token::And,
                    "OR" => Token::Or,
                    "NOT" => Token::Not,
                    "IMPLIES" => Token::Implies,
                    w if w.len() > 1
                        && w.starts_with('C')
                        && w[1..].chars().all(|d| d.is_ascii_digit()) =>
                    {
                        Token::Atom(word)
                    }
                    _ => return Err(err(&tokens, format!("unrecognized word `{word}`"))),
                };
                tokens.push(token);
                continue;
            }
            other => return Err(err(&tokens, format!("unexpected character `{other}`"))),
        };
        tokens.push(token);
        i += width;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn error(&self, message: impl Into<String>) -> LogicError {
        LogicError::Syntax { position: self.pos + 1, message: message.into() }
    }

    fn unexpected(&self) -> LogicError {
        match self.peek() {
            Some(t) => self.error(format!("unexpected `{t}`")),
            None => self.error("unexpected end of input"),
        }
    }

    fn enter(&mut self) -> Result<(), LogicError> {
        self.nesting += 1;
        if self.nesting > MAX_NESTING {
            return Err(self.error("formula nests too deeply"));
        }
        Ok(())
    }

    fn implication(&mut self) -> Result<Formula, LogicError> {
        self.enter()?;
        let lhs = self.disjunction()?;
        let result = if self.peek() == Some(&Token::Implies) {
            self.pos += 1;
            let rhs = self.implication()?;
            Formula::implies(lhs, rhs)
        } else {
            lhs
        };
        self.nesting -= 1;
        Ok(result)
    }

    fn disjunction(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        if self.peek() == Some(&Token::Not) {
            self.pos += 1;
            self.enter()?;
            let inner = self.unary()?;
            self.nesting -= 1;
            return Ok(Formula::not(inner));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Formula, LogicError> {
        match self.peek().cloned() {
            Some(Token::Atom(id)) => {
                self.pos += 1;
                Ok(Formula::Atom(id))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.implication()?;
                if self.peek() != Some(&Token::RParen) {
                    return Err(match self.peek() {
                        Some(t) => self.error(format!("expected `)`, found `{t}`")),
                        None => self.error("expected `)`, found end of input"),
                    });
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parses a formula. Error positions are 1-based token indices.
pub fn parse(text: &str) -> Result<Formula, LogicError> {
    let tokens = lex(text)?;
    let mut parser = Parser { tokens, pos: 0, nesting: 0 };
    let formula = parser.implication()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.unexpected());
    }
    Ok(formula)
}

/// Anything that can resolve an atom id to a truth value.
pub trait Env {
    fn lookup(&self, atom: &str) -> Option<TruthValue>;
}

impl Env for HashMap<String, TruthValue> {
    fn lookup(&self, atom: &str) -> Option<TruthValue> {
        self.get(atom).copied()
    }
}

impl Env for [(String, TruthValue)] {
    fn lookup(&self, atom: &str) -> Option<TruthValue> {
        self.iter().find(|(id, _)| id == atom).map(|(_, v)| *v)
    }
}

impl Env for Vec<(String, TruthValue)> {
    fn lookup(&self, atom: &str) -> Option<TruthValue> {
        self.as_slice().lookup(atom)
    }
}

/// Strong Kleene evaluation; implication is evaluated as `NOT a OR b`.
pub fn eval<E: Env + ?Sized>(formula: &Formula, env: &E) -> Result<TruthValue, LogicError> {
    Ok(match formula {
        Formula::Atom(id) => env.lookup(id).ok_or_else(|| LogicError::UnboundAtom(id.clone()))?,
        Formula::Not(a) => !eval(a, env)?,
        Formula::And(a, b) => eval(a, env)?.and(eval(b, env)?),
        Formula::Or(a, b) => eval(a, env)?.or(eval(b, env)?),
        Formula::Implies(a, b) => eval(a, env)?.implies(eval(b, env)?),
    })
}

/// Most frequent label; any tie for first place yields `Uncertain`.
pub fn majority_fallback(labels: &[Verdict]) -> Result<Verdict, LogicError> {
    if labels.is_empty() {
        return Err(LogicError::Empty);
    }
    let count = |v: Verdict| labels.iter().filter(|&&l| l == v).count();
    let mut counts: Vec<(Verdict, usize)> = Verdict::ALL.iter().map(|&v| (v, count(v))).collect();
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    if counts[0].1 == counts[1].1 {
        return Ok(Verdict::Uncertain);
    }
    Ok(counts[0].0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicOutcome {
    pub label: Verdict,
    pub used_fallback: bool,
    pub formula_value: Option<TruthValue>,
    /// Canonical form of the parsed formula, when it parsed.
    pub canonical_formula: Option<String>,
    pub fallback_reason: Option<String>,
}

/// Evaluates `formula` over per-atom verdicts, falling back to a majority
/// vote when the formula does not parse or references an atom without a
/// verdict.
pub fn aggregate_logic(formula: &str, atoms: &[(String, Verdict)]) -> LogicOutcome {
    let env: Vec<(String, TruthValue)> =
        atoms.iter().map(|(id, v)| (id.clone(), TruthValue::from(*v))).collect();
    let labels: Vec<Verdict> = atoms.iter().map(|(_, v)| *v).collect();
    let fallback = |reason: String, canonical: Option<String>| LogicOutcome {
        label: majority_fallback(&labels).unwrap_or(Verdict::Uncertain),
        used_fallback: true,
        formula_value: None,
        canonical_formula: canonical,
        fallback_reason: Some(reason),
    };
    match parse(formula) {
        Ok(parsed) => match eval(&parsed, &env) {
            Ok(value) => LogicOutcome {
                label: value.into(),
                used_fallback: false,
                formula_value: Some(value),
                canonical_formula: Some(parsed.to_string()),
                fallback_reason: None,
            },
            Err(e) => fallback(e.to_string(), Some(parsed.to_string())),
        },
        Err(e) => fallback(e.to_string(), None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TruthValue::*;

    fn a(id: &str) -> Formula {
        Formula::atom(id)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(
            parse("C1 AND C2 OR C3").unwrap(),
            Formula::or(Formula::and(a("C1"), a("C2")), a("C3"))
        );
        assert_eq!(
            parse("NOT C1 -> C2 -> C3").unwrap(),
            Formula::implies(Formula::not(a("C1")), Formula::implies(a("C2"), a("C3")))
        );
        assert_eq!(
            parse("C1 OR C2 OR C3").unwrap(),
            Formula::or(Formula::or(a("C1"), a("C2")), a("C3"))
        );
        assert_eq!(
            parse("c1 and (c2 or not c3)").unwrap(),
            Formula::and(a("C1"), Formula::or(a("C2"), Formula::not(a("C3"))))
        );
    }

    #[test]
    fn aliases() {
        let canonical = parse("(C1 AND NOT C2) -> C3").unwrap();
        for text in ["(C1 && !C2) => C3", "(C1 ∧ ¬C2) → C3", "(C1 & ~C2) -> C3", "(C1 and not C2) implies C3"] {
            assert_eq!(parse(text).unwrap(), canonical, "{text}");
        }
        assert_eq!(parse("C1 || C2").unwrap(), parse("C1 ∨ C2").unwrap());
    }

    #[test]
    fn syntax_errors_carry_token_position() {
        assert_eq!(
            parse("C1 AND AND"),
            Err(LogicError::Syntax { position: 3, message: "unexpected `AND`".into() })
        );
        assert!(matches!(parse(""), Err(LogicError::Syntax { position: 1, .. })));
        assert!(matches!(parse("(C1 AND C2"), Err(LogicError::Syntax { position: 5, .. })));
        assert!(matches!(parse("C1 C2"), Err(LogicError::Syntax { position: 2, .. })));
        assert!(matches!(parse("C1 AND X"), Err(LogicError::Syntax { position: 3, .. })));
        assert!(matches!(parse("C1 <-> C2"), Err(LogicError::Syntax { .. })));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let deep = format!("{}C1", "NOT ".repeat(10_000));
        assert!(matches!(parse(&deep), Err(LogicError::Syntax { .. })));
        let parens = format!("{}C1{}", "(".repeat(5_000), ")".repeat(5_000));
        assert!(parse(&parens).is_err());
    }

    #[test]
    fn kleene_tables() {
        assert_eq!(T.and(U), U);
        assert_eq!(F.and(U), F);
        assert_eq!(T.or(U), T);
        assert_eq!(!U, U);
        assert_eq!(U.implies(T), T);
        assert_eq!(T.implies(F), F);
        assert_eq!(U.implies(U), U);
    }

    #[test]
    fn eval_implication_matches_table() {
        let f = parse("C1 -> C2").unwrap();
        for a in TruthValue::ALL {
            for b in TruthValue::ALL {
                let env = vec![("C1".to_string(), a), ("C2".to_string(), b)];
                assert_eq!(eval(&f, &env), Ok(a.implies(b)), "{a:?} -> {b:?}");
            }
        }
        let env = vec![("C1".to_string(), T), ("C2".to_string(), F)];
        assert_eq!(eval(&parse("C1 -> C1").unwrap(), &env), Ok(T));
    }

    #[test]
    fn eval_requires_bound_atoms() {
        let env = vec![("C1".to_string(), T)];
        assert_eq!(eval(&parse("C1 OR NOT C1").unwrap(), &env), Ok(T));
        // Short-circuit values do not excuse a missing atom.
        assert!(eval(&parse("C1 OR C2").unwrap(), &env).is_err());
        assert_eq!(
            eval(&parse("C1 AND C2").unwrap(), &env),
            Err(LogicError::UnboundAtom("C2".into()))
        );
    }

    #[test]
    fn majority_examples() {
        use Verdict::*;
        assert_eq!(majority_fallback(&[True, True, False]), Ok(True));
        assert_eq!(majority_fallback(&[True, False]), Ok(Uncertain));
        assert_eq!(majority_fallback(&[Uncertain]), Ok(Uncertain));
        assert_eq!(majority_fallback(&[False, False, Uncertain, True]), Ok(False));
        assert_eq!(majority_fallback(&[]), Err(LogicError::Empty));
    }

    #[test]
    fn aggregate_examples() {
        use Verdict::*;
        let atoms = |vs: &[Verdict]| -> Vec<(String, Verdict)> {
            vs.iter().enumerate().map(|(i, v)| (format!("C{}", i + 1), *v)).collect()
        };
        let out = aggregate_logic("C1 AND C2", &atoms(&[True, Uncertain]));
        assert_eq!((out.label, out.used_fallback, out.formula_value), (Uncertain, false, Some(U)));
        let out = aggregate_logic("C1 OR C2", &atoms(&[True, Uncertain]));
        assert_eq!(out.label, True);
        let out = aggregate_logic("C1 AND (", &atoms(&[True, True, False]));
        assert_eq!((out.label, out.used_fallback), (True, true));
        assert!(out.fallback_reason.unwrap().contains("syntax"));
        let out = aggregate_logic("C1 AND C4", &atoms(&[True, True, False]));
        assert!(out.used_fallback);
    }

    #[test]
    fn atoms_and_depth() {
        let f = parse("C2 AND (C1 OR NOT C2)").unwrap();
        assert_eq!(f.atoms(), vec!["C2", "C1"]);
        assert_eq!(f.depth(), 3);
    }

    fn arb_formula() -> impl Strategy<Value = Formula> {
        let leaf = (1u8..=4).prop_map(|n| Formula::Atom(format!("C{n}")));
        leaf.prop_recursive(5, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::not),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| Formula::implies(a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(f in arb_formula()) {
            prop_assert_eq!(parse(&f.to_string()).unwrap(), f);
        }
    }
}
