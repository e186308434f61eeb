//! Recursive-descent parser.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' factor)?
//! base   := number | var | func '(' expr ')' | '(' expr ')' | '-' factor
//! ```

use super::{BinaryOp, ExprKind, ParseError, ParseErrorKind, PhiExpr, UnaryOp};
use crate::model::SubsetId;

pub const MAX_SOURCE_LEN: usize = 64 * 1024;
pub const MAX_DEPTH: usize = 64;
// Parenthesised groups recurse without deepening the tree.
const MAX_RECURSION: usize = 4 * MAX_DEPTH;

pub fn parse(text: &str) -> Result<PhiExpr, ParseError> {
    if text.len() > MAX_SOURCE_LEN {
        return Err(ParseError {
            pos: MAX_SOURCE_LEN,
            kind: ParseErrorKind::TooLong,
        });
    }
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        depth: 0,
    };
    let expr = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.unexpected());
    }
    if expr.depth() > MAX_DEPTH {
        return Err(ParseError {
            pos: 0,
            kind: ParseErrorKind::TooDeep,
        });
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn error(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            pos: self.pos,
            kind,
        }
    }

    fn unexpected(&self) -> ParseError {
        match std::str::from_utf8(&self.src[self.pos..])
            .ok()
            .and_then(|s| s.chars().next())
        {
            Some(c) => self.error(ParseErrorKind::UnexpectedChar(c)),
            None => self.error(ParseErrorKind::UnexpectedEnd),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_RECURSION {
            return Err(self.error(ParseErrorKind::TooDeep));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<PhiExpr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinaryOp::Add,
                Some(b'-') => BinaryOp::Sub,
                _ => break,
            };
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = PhiExpr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<PhiExpr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinaryOp::Mul,
                Some(b'/') => BinaryOp::Div,
                _ => break,
            };
            let pos = self.pos;
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = PhiExpr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<PhiExpr, ParseError> {
        self.enter()?;
        let base = self.base()?;
        let out = if self.peek() == Some(b'^') {
            let pos = self.pos;
            self.pos += 1;
            let exponent = self.factor()?;
            PhiExpr {
                kind: ExprKind::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)),
                pos,
            }
        } else {
            base
        };
        self.depth -= 1;
        Ok(out)
    }

    fn base(&mut self) -> Result<PhiExpr, ParseError> {
        let Some(c) = self.peek() else {
            return Err(self.error(ParseErrorKind::UnexpectedEnd));
        };
        let pos = self.pos;
        match c {
            b'-' => {
                self.pos += 1;
                let arg = self.factor()?;
                Ok(PhiExpr {
                    kind: ExprKind::Unary(UnaryOp::Neg, Box::new(arg)),
                    pos,
                })
            }
            b'(' => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_close()?;
                Ok(inner)
            }
            b'0'..=b'9' | b'.' => self.number(),
            b'x' if self.src.get(self.pos + 1).is_some_and(u8::is_ascii_digit) => self.variable(),
            c if c.is_ascii_alphabetic() => {
                let name = self.identifier();
                let Some(op) = UnaryOp::from_name(&name) else {
                    return Err(ParseError {
                        pos,
                        kind: ParseErrorKind::UnknownFunction(name),
                    });
                };
                if self.peek() != Some(b'(') {
                    return Err(self.error(ParseErrorKind::Expected("'(' after function name")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                self.expect_close()?;
                Ok(PhiExpr {
                    kind: ExprKind::Unary(op, Box::new(arg)),
                    pos,
                })
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect_close(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(b')') => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error(ParseErrorKind::Expected("')'"))),
            None => Err(self.error(ParseErrorKind::UnexpectedEnd)),
        }
    }

    fn identifier(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn variable(&mut self) -> Result<PhiExpr, ParseError> {
        let pos = self.pos;
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let digits = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        let malformed = || ParseError {
            pos,
            kind: ParseErrorKind::MalformedVariable(digits.clone()),
        };
        let subset = SubsetId::parse_label(&digits, 9).map_err(|_| malformed())?;
        Ok(PhiExpr {
            kind: ExprKind::Var(subset),
            pos,
        })
    }

    fn number(&mut self) -> Result<PhiExpr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
                digits(self);
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(PhiExpr {
                kind: ExprKind::Num(v),
                pos: start,
            }),
            _ => Err(ParseError {
                pos: start,
                kind: ParseErrorKind::InvalidNumber(text.to_string()),
            }),
        }
    }
}
