//! Arithmetic-expression generator and an independent validator.
//!
//! ```text
//! expression := operand operator operand
//! operand    := number | '(' expression ')'
//! operator   := '+' | '-' | '*' | '/'
//! number     := ['-'] digit {digit}
//! ```

use crate::engine::{Abort, ChoiceKind, ChoiceSite, Derivation, GeneratorProgram, ResourceLimits};
use crate::feature::{FeatureReachability, ReachableSet};

pub const OPERAND_KIND: u16 = 0;
pub const OPERATOR: u16 = 1;
pub const SIGN: u16 = 2;
pub const DIGIT_CONTINUE: u16 = 3;
pub const DIGIT: u16 = 4;

/// Alternatives of [`OPERAND_KIND`].
pub const OPERAND_NUMBER: usize = 0;
pub const OPERAND_SUBEXPRESSION: usize = 1;

pub const OPERATORS: [char; 4] = ['+', '-', '*', '/'];

static SCHEMA: [ChoiceSite; 5] = [
    ChoiceSite {
        id: OPERAND_KIND,
        name: "operand-kind",
        kind: ChoiceKind::RuleSelection,
        alternatives: 2,
        depth_contextual: true,
        parameterized: true,
    },
    ChoiceSite {
        id: OPERATOR,
        name: "operator",
        kind: ChoiceKind::RuleSelection,
        alternatives: 4,
        depth_contextual: false,
        parameterized: true,
    },
    ChoiceSite {
        id: SIGN,
        name: "sign-present",
        kind: ChoiceKind::Boolean,
        alternatives: 2,
        depth_contextual: false,
        parameterized: true,
    },
    ChoiceSite {
        id: DIGIT_CONTINUE,
        name: "digit-continue",
        kind: ChoiceKind::RepetitionContinue,
        alternatives: 2,
        depth_contextual: false,
        parameterized: true,
    },
    ChoiceSite {
        id: DIGIT,
        name: "digit",
        kind: ChoiceKind::RuleSelection,
        alternatives: 10,
        depth_contextual: false,
        parameterized: false,
    },
];

#[derive(Clone, Copy, Debug, Default)]
pub struct ExprGenerator;

pub fn build_generator() -> ExprGenerator {
    ExprGenerator
}

impl ExprGenerator {
    fn expression(&self, d: &mut Derivation<'_>) -> Result<(), Abort> {
        self.operand(d)?;
        let op = d.choose(OPERATOR)?;
        d.emit_char(OPERATORS[op])?;
        self.operand(d)
    }

    fn operand(&self, d: &mut Derivation<'_>) -> Result<(), Abort> {
        if d.choose(OPERAND_KIND)? == OPERAND_SUBEXPRESSION {
            d.emit_char('(')?;
            d.enter()?;
            self.expression(d)?;
            d.leave();
            d.emit_char(')')
        } else {
            self.number(d)
        }
    }

    fn number(&self, d: &mut Derivation<'_>) -> Result<(), Abort> {
        if d.choose(SIGN)? == 1 {
            d.emit_char('-')?;
        }
        self.digit(d)?;
        while d.choose(DIGIT_CONTINUE)? == 1 {
            self.digit(d)?;
        }
        Ok(())
    }

    fn digit(&self, d: &mut Derivation<'_>) -> Result<(), Abort> {
        let v = d.choose(DIGIT)?;
        d.emit_char(char::from(b'0' + v as u8))
    }
}

impl GeneratorProgram for ExprGenerator {
    fn schema(&self) -> &[ChoiceSite] {
        &SCHEMA
    }

    fn derive(&self, d: &mut Derivation<'_>) -> Result<(), Abort> {
        self.expression(d)
    }
}

impl FeatureReachability for ExprGenerator {
    fn reachable(&self, max_length: usize, limits: &ResourceLimits) -> ReachableSet {
        let max_length = max_length.min(limits.max_output_length);
        let mut numbers = ReachableSet::empty(max_length);
        for len in 1..=max_length {
            numbers.insert(len, len);
            if len >= 2 {
                numbers.insert(len, len - 1);
            }
        }
        // expressions whose operands nest at most `h` further levels
        let mut expressions = numbers.concat(&numbers, 1);
        for _ in 0..limits.max_nesting_depth {
            let mut operands = numbers.clone();
            operands.union_with(&expressions.shifted(2));
            let next = operands.concat(&operands, 1);
            if next == expressions {
                break;
            }
            expressions = next;
        }
        expressions
    }
}

/// Recursive-descent recognizer for the expression language.
pub fn validate_expression(s: &str) -> bool {
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
    };
    p.expression() && p.pos == p.src.len()
}

struct Parser<'s> {
    src: &'s [u8],
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> bool {
        if !self.operand() {
            return false;
        }
        match self.peek() {
            Some(b'+' | b'-' | b'*' | b'/') => self.pos += 1,
            _ => return false,
        }
        self.operand()
    }

    fn operand(&mut self) -> bool {
        if self.eat(b'(') {
            self.expression() && self.eat(b')')
        } else {
            self.number()
        }
    }

    fn number(&mut self) -> bool {
        self.eat(b'-');
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.pos > start
    }
}
