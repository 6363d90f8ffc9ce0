//! Concrete syntax for formulas.
//!
//! ```text
//! formula  := or ( "->" formula )?                  right-associative
//! or       := and ( "|" and )*
//! and      := unary ( "&" unary )*
//! unary    := "!" unary
//!           | "G" unary
//!           | "X" "^" INT unary
//!           | "K_"AGENT unary
//!           | "B" "[" "H" "]" "_"AGENT unary
//!           | "E" "[" "H" ( ";" "acc" )? "]" unary
//!           | "C" "[" "H" ";" yop ( ";" "acc" )? "]" unary
//!           | "init" ">=" RATIONAL unary
//!           | atom
//! atom     := "honest" "(" AGENT ")" | "Honest"
//!           | "tprefix" "(" "[" idlist "]" "," ( "L" | "L_"AGENT ) ")"
//!           | "acc" | "prop" "(" WORD ")" | "(" formula ")"
//! yop      := "none" | "X" "^" INT ( "G" )?
//! RATIONAL := INT | INT "/" INT | INT "." INT
//! ```
//!
//! Words are runs of `[A-Za-z0-9_]`; agent names and transaction ids are
//! words. `G`, `X`, `B`, `E`, `C`, `H`, `L`, `honest`, `Honest`, `tprefix`,
//! `acc`, `prop`, `init`, `none`, and words starting with `K_`, `L_`, or `_`
//! are reserved in operator positions.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use thiserror::Error;

use crate::model::{AgentId, IndexicalSet};

use super::ast::{Formula, YOp};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {pos}: found {found}, expected one of {expected:?}")]
pub struct ParseError {
    pub pos: usize,
    pub found: String,
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Bang,
    Amp,
    Pipe,
    Arrow,
    Caret,
    GeEq,
    Slash,
    Dot,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "{w:?}"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::LBracket => f.write_str("'['"),
            Tok::RBracket => f.write_str("']'"),
            Tok::Comma => f.write_str("','"),
            Tok::Semi => f.write_str("';'"),
            Tok::Bang => f.write_str("'!'"),
            Tok::Amp => f.write_str("'&'"),
            Tok::Pipe => f.write_str("'|'"),
            Tok::Arrow => f.write_str("'->'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::GeEq => f.write_str("'>='"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Dot => f.write_str("'.'"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        let tok = match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'[' => Tok::LBracket,
            b']' => Tok::RBracket,
            b',' => Tok::Comma,
            b';' => Tok::Semi,
            b'!' => Tok::Bang,
            b'&' => Tok::Amp,
            b'|' => Tok::Pipe,
            b'^' => Tok::Caret,
            b'/' => Tok::Slash,
            b'.' => Tok::Dot,
            b'-' if bytes.get(i + 1) == Some(&b'>') => {
                i += 1;
                Tok::Arrow
            }
            b'>' if bytes.get(i + 1) == Some(&b'=') => {
                i += 1;
                Tok::GeEq
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = text[i..j].to_string();
                i = j;
                toks.push((Tok::Word(word), start));
                continue;
            }
            other => {
                return Err(ParseError {
                    pos: i,
                    found: format!("{:?}", other as char),
                    expected: vec!["a token".into()],
                })
            }
        };
        i += 1;
        toks.push((tok, start));
    }
    toks.push((Tok::Eof, bytes.len()));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_pos(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.peek_pos(),
            found: self.peek().to_string(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == &tok {
            self.bump();
            Ok(())
        } else {
            self.err(&[what])
        }
    }

    fn word(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Word(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.err(&[what]),
        }
    }

    fn integer(&mut self, what: &str) -> Result<usize, ParseError> {
        let pos = self.peek_pos();
        let w = self.word(what)?;
        w.parse().map_err(|_| ParseError {
            pos,
            found: format!("{w:?}"),
            expected: vec![what.to_string()],
        })
    }

    fn rational(&mut self) -> Result<BigRational, ParseError> {
        let whole = self.integer("a number")?;
        match self.peek() {
            Tok::Slash => {
                self.bump();
                let pos = self.peek_pos();
                let den = self.integer("a denominator")?;
                if den == 0 {
                    return Err(ParseError {
                        pos,
                        found: "0".into(),
                        expected: vec!["a nonzero denominator".into()],
                    });
                }
                Ok(BigRational::new(whole.into(), den.into()))
            }
            Tok::Dot => {
                self.bump();
                let frac = self.word("decimal digits")?;
                let scale = BigInt::from(10u32).pow(frac.len() as u32);
                let frac: BigInt = frac.parse().map_err(|_| ParseError {
                    pos: self.peek_pos(),
                    found: "non-digits".into(),
                    expected: vec!["decimal digits".into()],
                })?;
                Ok(BigRational::new(BigInt::from(whole) * &scale + frac, scale))
            }
            _ => Ok(BigRational::from_integer(whole.into())),
        }
    }

    fn indexical_set(&mut self) -> Result<IndexicalSet, ParseError> {
        let pos = self.peek_pos();
        let w = self.word("an indexical set (H)")?;
        match w.as_str() {
            "H" => Ok(IndexicalSet::Honest),
            "A" => Ok(IndexicalSet::All),
            _ => Err(ParseError {
                pos,
                found: format!("{w:?}"),
                expected: vec!["\"H\"".into(), "\"A\"".into()],
            }),
        }
    }

    fn yop(&mut self) -> Result<YOp, ParseError> {
        match self.peek().clone() {
            Tok::Word(w) if w == "none" => {
                self.bump();
                Ok(YOp::Id)
            }
            Tok::Word(w) if w == "X" => {
                self.bump();
                self.expect(Tok::Caret, "'^'")?;
                let k = self.integer("a step count")?;
                if matches!(self.peek(), Tok::Word(w) if w == "G") {
                    self.bump();
                    Ok(YOp::NextAlways(k))
                } else {
                    Ok(YOp::Next(k))
                }
            }
            _ => self.err(&["\"none\"", "\"X\""]),
        }
    }

    fn id_list(&mut self) -> Result<Vec<String>, ParseError> {
        self.expect(Tok::LBracket, "'['")?;
        let mut ids = Vec::new();
        if self.peek() == &Tok::RBracket {
            self.bump();
            return Ok(ids);
        }
        loop {
            ids.push(self.word("a transaction id")?);
            match self.bump() {
                Tok::Comma => continue,
                Tok::RBracket => return Ok(ids),
                _ => {
                    self.pos -= 1;
                    return self.err(&["','", "']'"]);
                }
            }
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let left = self.or()?;
        if self.peek() == &Tok::Arrow {
            self.bump();
            let right = self.formula()?;
            Ok(Formula::Implies(Arc::new(left), Arc::new(right)))
        } else {
            Ok(left)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.and()?;
        while self.peek() == &Tok::Pipe {
            self.bump();
            let rhs = self.and()?;
            acc = Formula::Or(Arc::new(acc), Arc::new(rhs));
        }
        Ok(acc)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.unary()?;
        while self.peek() == &Tok::Amp {
            self.bump();
            let rhs = self.unary()?;
            acc = Formula::And(Arc::new(acc), Arc::new(rhs));
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::Bang => {
                self.bump();
                Ok(Formula::Not(Arc::new(self.unary()?)))
            }
            Tok::Word(w) => match w.as_str() {
                "G" => {
                    self.bump();
                    Ok(Formula::Always(Arc::new(self.unary()?)))
                }
                "X" => {
                    self.bump();
                    self.expect(Tok::Caret, "'^'")?;
                    let k = self.integer("a step count")?;
                    Ok(Formula::Next(k, Arc::new(self.unary()?)))
                }
                "B" => {
                    self.bump();
                    self.expect(Tok::LBracket, "'['")?;
                    let set = self.indexical_set()?;
                    self.expect(Tok::RBracket, "']'")?;
                    let pos = self.peek_pos();
                    let tag = self.word("'_' followed by an agent name")?;
                    let agent = tag.strip_prefix('_').filter(|a| !a.is_empty()).ok_or_else(
                        || ParseError {
                            pos,
                            found: format!("{tag:?}"),
                            expected: vec!["'_' followed by an agent name".into()],
                        },
                    )?;
                    let agent = AgentId::new(agent);
                    Ok(Formula::Believes(agent, set, Arc::new(self.unary()?)))
                }
                "E" => {
                    self.bump();
                    self.expect(Tok::LBracket, "'['")?;
                    let set = self.indexical_set()?;
                    let acc = self.opt_acc_suffix()?;
                    Ok(Formula::Everyone(set, acc, Arc::new(self.unary()?)))
                }
                "C" => {
                    self.bump();
                    self.expect(Tok::LBracket, "'['")?;
                    let set = self.indexical_set()?;
                    self.expect(Tok::Semi, "';'")?;
                    let y = self.yop()?;
                    let acc = self.opt_acc_suffix()?;
                    Ok(Formula::Common(set, y, acc, Arc::new(self.unary()?)))
                }
                "init" => {
                    self.bump();
                    self.expect(Tok::GeEq, "'>='")?;
                    let alpha = self.rational()?;
                    Ok(Formula::InitGeq(alpha, Arc::new(self.unary()?)))
                }
                _ if w.starts_with("K_") && w.len() > 2 => {
                    self.bump();
                    let agent = AgentId::new(&w[2..]);
                    Ok(Formula::Knows(agent, Arc::new(self.unary()?)))
                }
                _ => self.atom(),
            },
            _ => self.atom(),
        }
    }

    /// After a set name inside brackets: `]` or `; acc ]`.
    fn opt_acc_suffix(&mut self) -> Result<bool, ParseError> {
        match self.bump() {
            Tok::RBracket => Ok(false),
            Tok::Semi => {
                let pos = self.peek_pos();
                let w = self.word("\"acc\"")?;
                if w != "acc" {
                    return Err(ParseError {
                        pos,
                        found: format!("{w:?}"),
                        expected: vec!["\"acc\"".into()],
                    });
                }
                self.expect(Tok::RBracket, "']'")?;
                Ok(true)
            }
            _ => {
                self.pos -= 1;
                self.err(&["']'", "';'"])
            }
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Tok::Word(w) => match w.as_str() {
                "honest" => {
                    self.bump();
                    self.expect(Tok::LParen, "'('")?;
                    let agent = AgentId::new(self.word("an agent name")?);
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Formula::Honest(agent))
                }
                "Honest" => {
                    self.bump();
                    Ok(Formula::HonestSelf)
                }
                "acc" => {
                    self.bump();
                    Ok(Formula::Acc)
                }
                "prop" => {
                    self.bump();
                    self.expect(Tok::LParen, "'('")?;
                    let name = self.word("a proposition name")?;
                    self.expect(Tok::RParen, "')'")?;
                    Ok(Formula::Prop(name))
                }
                "tprefix" => {
                    self.bump();
                    self.expect(Tok::LParen, "'('")?;
                    let ids = self.id_list()?;
                    self.expect(Tok::Comma, "','")?;
                    let pos = self.peek_pos();
                    let ledger = self.word("\"L\" or \"L_<agent>\"")?;
                    self.expect(Tok::RParen, "')'")?;
                    if ledger == "L" {
                        Ok(Formula::TPrefixSelf(ids))
                    } else if let Some(agent) =
                        ledger.strip_prefix("L_").filter(|a| !a.is_empty())
                    {
                        Ok(Formula::TPrefix(ids, AgentId::new(agent)))
                    } else {
                        Err(ParseError {
                            pos,
                            found: format!("{ledger:?}"),
                            expected: vec!["\"L\"".into(), "\"L_<agent>\"".into()],
                        })
                    }
                }
                _ => self.err(&[
                    "\"honest\"",
                    "\"Honest\"",
                    "\"tprefix\"",
                    "\"acc\"",
                    "\"prop\"",
                    "'('",
                ]),
            },
            _ => self.err(&["a formula"]),
        }
    }
}

/// Parse a formula from its concrete syntax.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let f = parser.formula()?;
    if parser.peek() != &Tok::Eof {
        return parser.err(&["end of input"]);
    }
    Ok(f)
}
