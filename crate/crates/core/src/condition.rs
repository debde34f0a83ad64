//! Boolean condition expressions attached to control edges.
//!
//! Grammar (recursive descent, lowest precedence first):
//!
//! ```text
//! expr := or
//! or   := and ("||" and)*
//! and  := not ("&&" not)*
//! not  := "!" not | cmp
//! cmp  := term (("=="|"!="|"<"|"<="|">"|">=") term)?
//! term := number | quoted-string | "true" | "false" | "$" identifier | "(" expr ")"
//! ```
//!
//! Strings are single-quoted. Numbers without a decimal point are integers
//! and compare exactly; decimals compare as their parsed values, no epsilon.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

pub type VarValue = serde_json::Value;
pub type VarSet = BTreeMap<String, VarValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionExpr {
    Literal(Literal),
    Var(String),
    Not(Box<ConditionExpr>),
    And(Box<ConditionExpr>, Box<ConditionExpr>),
    Or(Box<ConditionExpr>, Box<ConditionExpr>),
    Compare(CompareOp, Box<ConditionExpr>, Box<ConditionExpr>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

impl ConditionExpr {
    /// The literal `true`, the default condition on edges.
    pub fn always() -> Self {
        ConditionExpr::Literal(Literal::Bool(true))
    }

    /// All variable names referenced anywhere in the expression.
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            ConditionExpr::Literal(_) => {}
            ConditionExpr::Var(name) => out.push(name.clone()),
            ConditionExpr::Not(inner) => inner.collect_vars(out),
            ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            ConditionExpr::Compare(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::Literal(Literal::Bool(b)) => write!(f, "{b}"),
            ConditionExpr::Literal(Literal::Int(n)) => write!(f, "{n}"),
            ConditionExpr::Literal(Literal::Float(x)) => write!(f, "{x:?}"),
            ConditionExpr::Literal(Literal::Str(s)) => write!(f, "'{s}'"),
            ConditionExpr::Var(name) => write!(f, "${name}"),
            ConditionExpr::Not(inner) => write!(f, "!({inner})"),
            ConditionExpr::And(a, b) => write!(f, "({a} && {b})"),
            ConditionExpr::Or(a, b) => write!(f, "({a} || {b})"),
            ConditionExpr::Compare(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable ${0}")]
    UnboundVariable(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

/// Parse a condition string into its expression tree.
pub fn parse_condition(text: &str) -> Result<ConditionExpr, ParseError> {
    let mut parser = Parser {
        input: text.as_bytes(),
        pos: 0,
    };
    parser.skip_ws();
    let expr = parser.parse_or()?;
    parser.skip_ws();
    if parser.pos != parser.input.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

/// Evaluate a condition against a variable set. Errors name the first
/// unbound variable or describe the operand type conflict.
pub fn eval_condition(expr: &ConditionExpr, vars: &VarSet) -> Result<bool, EvalError> {
    match eval(expr, vars)? {
        EvalValue::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch(format!(
            "condition must evaluate to a boolean, got {}",
            other.kind()
        ))),
    }
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.input.len() && self.input[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.input[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<ConditionExpr, ParseError> {
        let mut left = self.parse_and()?;
        loop {
            self.skip_ws();
            if self.eat("||") {
                self.skip_ws();
                let right = self.parse_and()?;
                left = ConditionExpr::Or(Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_and(&mut self) -> Result<ConditionExpr, ParseError> {
        let mut left = self.parse_not()?;
        loop {
            self.skip_ws();
            if self.eat("&&") {
                self.skip_ws();
                let right = self.parse_not()?;
                left = ConditionExpr::And(Box::new(left), Box::new(right));
            } else {
                return Ok(left);
            }
        }
    }

    fn parse_not(&mut self) -> Result<ConditionExpr, ParseError> {
        self.skip_ws();
        // "!=" must stay with the comparison level
        if self.peek() == Some(b'!') && self.input.get(self.pos + 1) != Some(&b'=') {
            self.pos += 1;
            let inner = self.parse_not()?;
            return Ok(ConditionExpr::Not(Box::new(inner)));
        }
        self.parse_cmp()
    }

    fn parse_cmp(&mut self) -> Result<ConditionExpr, ParseError> {
        let left = self.parse_term()?;
        self.skip_ws();
        let op = if self.eat("==") {
            CompareOp::Eq
        } else if self.eat("!=") {
            CompareOp::Ne
        } else if self.eat("<=") {
            CompareOp::Le
        } else if self.eat(">=") {
            CompareOp::Ge
        } else if self.peek() == Some(b'<') {
            self.pos += 1;
            CompareOp::Lt
        } else if self.peek() == Some(b'>') {
            self.pos += 1;
            CompareOp::Gt
        } else {
            return Ok(left);
        };
        self.skip_ws();
        let right = self.parse_term()?;
        Ok(ConditionExpr::Compare(op, Box::new(left), Box::new(right)))
    }

    fn parse_term(&mut self) -> Result<ConditionExpr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("expected a term, found end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_or()?;
                self.skip_ws();
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    Err(self.error("expected ')'"))
                }
            }
            Some(b'$') => {
                self.pos += 1;
                let start = self.pos;
                while self
                    .peek()
                    .map(|c| c.is_ascii_alphanumeric() || c == b'_')
                    .unwrap_or(false)
                {
                    self.pos += 1;
                }
                if self.pos == start {
                    return Err(self.error("expected identifier after '$'"));
                }
                let name = std::str::from_utf8(&self.input[start..self.pos])
                    .expect("identifier bytes are ascii")
                    .to_string();
                Ok(ConditionExpr::Var(name))
            }
            Some(b'\'') => {
                self.pos += 1;
                let start = self.pos;
                while self.peek().map(|c| c != b'\'').unwrap_or(false) {
                    self.pos += 1;
                }
                if self.peek() != Some(b'\'') {
                    return Err(self.error("unterminated string literal"));
                }
                let text = std::str::from_utf8(&self.input[start..self.pos])
                    .map_err(|_| self.error("string literal is not valid UTF-8"))?
                    .to_string();
                self.pos += 1;
                Ok(ConditionExpr::Literal(Literal::Str(text)))
            }
            Some(c) if c.is_ascii_digit() || c == b'-' => self.parse_number(),
            Some(_) => {
                if self.eat("true") {
                    Ok(ConditionExpr::Literal(Literal::Bool(true)))
                } else if self.eat("false") {
                    Ok(ConditionExpr::Literal(Literal::Bool(false)))
                } else {
                    Err(self.error("expected a term"))
                }
            }
        }
    }

    fn parse_number(&mut self) -> Result<ConditionExpr, ParseError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.error("expected digits"));
        }
        let mut is_float = false;
        if self.peek() == Some(b'.') {
            is_float = true;
            self.pos += 1;
            let frac_start = self.pos;
            while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return Err(self.error("expected digits after decimal point"));
            }
        }
        let text = std::str::from_utf8(&self.input[start..self.pos]).expect("ascii digits");
        if is_float {
            let value: f64 = text
                .parse()
                .map_err(|_| self.error("invalid decimal literal"))?;
            Ok(ConditionExpr::Literal(Literal::Float(value)))
        } else {
            let value: i64 = text
                .parse()
                .map_err(|_| self.error("integer literal out of range"))?;
            Ok(ConditionExpr::Literal(Literal::Int(value)))
        }
    }
}

enum EvalValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl EvalValue {
    fn kind(&self) -> &'static str {
        match self {
            EvalValue::Bool(_) => "boolean",
            EvalValue::Int(_) | EvalValue::Float(_) => "number",
            EvalValue::Str(_) => "string",
        }
    }
}

fn eval(expr: &ConditionExpr, vars: &VarSet) -> Result<EvalValue, EvalError> {
    match expr {
        ConditionExpr::Literal(Literal::Bool(b)) => Ok(EvalValue::Bool(*b)),
        ConditionExpr::Literal(Literal::Int(n)) => Ok(EvalValue::Int(*n)),
        ConditionExpr::Literal(Literal::Float(x)) => Ok(EvalValue::Float(*x)),
        ConditionExpr::Literal(Literal::Str(s)) => Ok(EvalValue::Str(s.clone())),
        ConditionExpr::Var(name) => {
            let value = vars
                .get(name)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
            match value {
                serde_json::Value::Bool(b) => Ok(EvalValue::Bool(*b)),
                serde_json::Value::Number(n) => {
                    if let Some(i) = n.as_i64() {
                        Ok(EvalValue::Int(i))
                    } else if let Some(f) = n.as_f64() {
                        Ok(EvalValue::Float(f))
                    } else {
                        Err(EvalError::TypeMismatch(format!(
                            "variable ${name} holds an unrepresentable number"
                        )))
                    }
                }
                serde_json::Value::String(s) => Ok(EvalValue::Str(s.clone())),
                other => Err(EvalError::TypeMismatch(format!(
                    "variable ${name} holds {other}, which cannot appear in a condition"
                ))),
            }
        }
        ConditionExpr::Not(inner) => match eval(inner, vars)? {
            EvalValue::Bool(b) => Ok(EvalValue::Bool(!b)),
            other => Err(EvalError::TypeMismatch(format!(
                "'!' needs a boolean operand, got {}",
                other.kind()
            ))),
        },
        ConditionExpr::And(a, b) => {
            let left = expect_bool(eval(a, vars)?, "&&")?;
            // operands are side-effect free; evaluate both so type errors never
            // depend on short-circuit order
            let right = expect_bool(eval(b, vars)?, "&&")?;
            Ok(EvalValue::Bool(left && right))
        }
        ConditionExpr::Or(a, b) => {
            let left = expect_bool(eval(a, vars)?, "||")?;
            let right = expect_bool(eval(b, vars)?, "||")?;
            Ok(EvalValue::Bool(left || right))
        }
        ConditionExpr::Compare(op, a, b) => {
            let left = eval(a, vars)?;
            let right = eval(b, vars)?;
            compare(*op, left, right).map(EvalValue::Bool)
        }
    }
}

fn expect_bool(value: EvalValue, op: &str) -> Result<bool, EvalError> {
    match value {
        EvalValue::Bool(b) => Ok(b),
        other => Err(EvalError::TypeMismatch(format!(
            "'{op}' needs boolean operands, got {}",
            other.kind()
        ))),
    }
}

fn compare(op: CompareOp, left: EvalValue, right: EvalValue) -> Result<bool, EvalError> {
    use std::cmp::Ordering;
    let ordering = match (&left, &right) {
        (EvalValue::Int(a), EvalValue::Int(b)) => a.cmp(b),
        (EvalValue::Int(a), EvalValue::Float(b)) => float_cmp(*a as f64, *b)?,
        (EvalValue::Float(a), EvalValue::Int(b)) => float_cmp(*a, *b as f64)?,
        (EvalValue::Float(a), EvalValue::Float(b)) => float_cmp(*a, *b)?,
        (EvalValue::Str(a), EvalValue::Str(b)) => a.cmp(b),
        (EvalValue::Bool(a), EvalValue::Bool(b)) => match op {
            CompareOp::Eq => return Ok(a == b),
            CompareOp::Ne => return Ok(a != b),
            _ => {
                return Err(EvalError::TypeMismatch(
                    "booleans only support == and !=".to_string(),
                ))
            }
        },
        _ => {
            return Err(EvalError::TypeMismatch(format!(
                "cannot compare {} {} {}",
                left.kind(),
                op.symbol(),
                right.kind()
            )))
        }
    };
    Ok(match op {
        CompareOp::Eq => ordering == Ordering::Equal,
        CompareOp::Ne => ordering != Ordering::Equal,
        CompareOp::Lt => ordering == Ordering::Less,
        CompareOp::Le => ordering != Ordering::Greater,
        CompareOp::Gt => ordering == Ordering::Greater,
        CompareOp::Ge => ordering != Ordering::Less,
    })
}

fn float_cmp(a: f64, b: f64) -> Result<std::cmp::Ordering, EvalError> {
    a.partial_cmp(&b)
        .ok_or_else(|| EvalError::TypeMismatch("NaN is not comparable".to_string()))
}
