use std::collections::BTreeMap;

use super::{BinOp, ExprError, Func, Node, Var};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

pub(super) struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    n: usize,
    m: usize,
    constants: &'a BTreeMap<String, f64>,
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                pos: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ExprError::Syntax {
                        pos: start,
                        message: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((tok, start));
            i += c.len_utf8();
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

fn parse_variable(name: &str) -> Option<Var> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let idx: usize = digits.parse().ok()?;
    match head {
        "x" => Some(Var::X(idx)),
        "u" => Some(Var::U(idx)),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    pub(super) fn new(
        src: &str,
        n: usize,
        m: usize,
        constants: &'a BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        Ok(Self {
            toks: lex(src)?,
            pos: 0,
            n,
            m,
            constants,
        })
    }

    pub(super) fn parse(mut self) -> Result<Node, ExprError> {
        if self.toks.len() == 1 {
            return Err(ExprError::Syntax {
                pos: 0,
                message: "empty expression".into(),
            });
        }
        let node = self.expr()?;
        match self.peek() {
            (Tok::End, _) => Ok(node),
            (tok, pos) => Err(ExprError::Syntax {
                pos,
                message: format!("unexpected {}", describe(&tok)),
            }),
        }
    }

    fn peek(&self) -> (Tok, usize) {
        self.toks[self.pos].clone()
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().0 {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek().0 == Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Num(v) => Node::Num(-v),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.peek().0 != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let exp_pos = self.peek().1;
        let exponent = self.unary()?;
        let value = exponent
            .const_value()
            .ok_or(ExprError::NonConstantExponent { pos: exp_pos })?;
        Ok(Node::Pow(Box::new(base), value))
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.bump() {
            (Tok::Num(v), _) => Ok(Node::Num(v)),
            (Tok::LParen, _) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            (Tok::Ident(name), pos) => self.identifier(name, pos),
            (tok, pos) => Err(ExprError::Syntax {
                pos,
                message: format!("expected operand, found {}", describe(&tok)),
            }),
        }
    }

    fn identifier(&mut self, name: String, pos: usize) -> Result<Node, ExprError> {
        if let Some(func) = Func::from_name(&name) {
            match self.bump() {
                (Tok::LParen, _) => {}
                (tok, p) => {
                    return Err(ExprError::Syntax {
                        pos: p,
                        message: format!("expected `(` after `{name}`, found {}", describe(&tok)),
                    })
                }
            }
            let arg = self.expr()?;
            self.expect_rparen()?;
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if let Some(v) = self.constants.get(&name) {
            return Ok(Node::Num(*v));
        }
        if let Some(var) = parse_variable(&name) {
            let in_range = match var {
                Var::X(i) => i < self.n,
                Var::U(i) => i < self.m,
            };
            if !in_range {
                return Err(ExprError::VariableOutOfRange {
                    name,
                    pos,
                    n: self.n,
                    m: self.m,
                });
            }
            return Ok(Node::Var(var));
        }
        Err(ExprError::UnknownIdentifier { name, pos })
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.bump() {
            (Tok::RParen, _) => Ok(()),
            (tok, pos) => Err(ExprError::Syntax {
                pos,
                message: format!("expected `)`, found {}", describe(&tok)),
            }),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number `{v}`"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("operator `{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}
