//! The fixed 53-entry token table, longest-match tokenizer and id mapping.

use std::fmt;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{EdgeTag, InstrumentFunction, UnitKind};

pub const VOCAB_SIZE: usize = 53;
pub const PAD_ID: u32 = 0;
pub const SOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

/// One vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Sos,
    Eos,
    Unk,
    Unit(UnitKind),
    /// Heat-exchanger pass marker `{1}`..`{3}`.
    Pass(u8),
    /// Column outlet side, `{tout}` or `{bout}`. Only `Tout`/`Bout` are valid.
    Side(EdgeTag),
    Func(InstrumentFunction),
    Open,
    Close,
    ConnOut(u8),
    ConnIn(u8),
    SigOut(u8),
    SigIn(u8),
}

impl Token {
    pub fn id(self) -> u32 {
        match self {
            Token::Pad => 0,
            Token::Sos => 1,
            Token::Eos => 2,
            Token::Unk => 3,
            Token::Unit(k) => 4 + UnitKind::ALL.iter().position(|&x| x == k).unwrap() as u32,
            Token::Pass(n) => 15 + n as u32,
            Token::Side(EdgeTag::Tout) => 19,
            Token::Side(EdgeTag::Bout) => 20,
            Token::Side(t) => panic!("{t} is not a column side"),
            Token::Func(f) => 21 + InstrumentFunction::ALL.iter().position(|&x| x == f).unwrap() as u32,
            Token::Open => 25,
            Token::Close => 26,
            Token::ConnOut(n) => 26 + n as u32,
            Token::ConnIn(n) => 35 + n as u32,
            Token::SigOut(n) => 44 + n as u32,
            Token::SigIn(n) => 48 + n as u32,
        }
    }

    pub fn from_id(id: u32) -> Option<Token> {
        vocabulary().get(id as usize).map(|e| e.token)
    }

    pub fn is_special(self) -> bool {
        matches!(self, Token::Pad | Token::Sos | Token::Eos | Token::Unk)
    }

    pub fn surface(self) -> String {
        match self {
            Token::Pad => "<pad>".into(),
            Token::Sos => "<sos>".into(),
            Token::Eos => "<eos>".into(),
            Token::Unk => "<unk>".into(),
            Token::Unit(k) => format!("({})", k.mnemonic()),
            Token::Pass(n) => format!("{{{n}}}"),
            Token::Side(t) => format!("{{{}}}", t.as_str()),
            Token::Func(f) => format!("{{{}}}", f.as_str()),
            Token::Open => "[".into(),
            Token::Close => "]".into(),
            Token::ConnOut(n) => format!("{n}"),
            Token::ConnIn(n) => format!("<{n}"),
            Token::SigOut(n) => format!("_{n}"),
            Token::SigIn(n) => format!("<_{n}"),
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VocabEntry {
    pub id: u32,
    pub form: String,
    #[serde(skip)]
    pub token: Token,
}

/// The full table in id order.
pub fn vocabulary() -> &'static [VocabEntry] {
    static TABLE: OnceLock<Vec<VocabEntry>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut tokens = vec![Token::Pad, Token::Sos, Token::Eos, Token::Unk];
        tokens.extend(UnitKind::ALL.iter().map(|&k| Token::Unit(k)));
        tokens.extend((1..=3).map(Token::Pass));
        tokens.push(Token::Side(EdgeTag::Tout));
        tokens.push(Token::Side(EdgeTag::Bout));
        tokens.extend(InstrumentFunction::ALL.iter().map(|&f| Token::Func(f)));
        tokens.push(Token::Open);
        tokens.push(Token::Close);
        tokens.extend((1..=9).map(Token::ConnOut));
        tokens.extend((1..=9).map(Token::ConnIn));
        tokens.extend((1..=4).map(Token::SigOut));
        tokens.extend((1..=4).map(Token::SigIn));
        tokens
            .into_iter()
            .enumerate()
            .map(|(i, token)| {
                debug_assert_eq!(token.id(), i as u32);
                VocabEntry { id: i as u32, form: token.surface(), token }
            })
            .collect()
    })
}

/// Surface forms that may appear inside a flowsheet string, longest first.
fn scan_table() -> &'static [(&'static str, Token)] {
    static TABLE: OnceLock<Vec<(&'static str, Token)>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut v: Vec<(&'static str, Token)> = vocabulary()
            .iter()
            .filter(|e| !e.token.is_special())
            .map(|e| (e.form.as_str(), e.token))
            .collect();
        v.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));
        v
    })
}

/// Longest token whose surface form starts at `pos`.
pub(crate) fn match_at(s: &str, pos: usize) -> Option<(Token, usize)> {
    let rest = &s.as_bytes()[pos..];
    scan_table()
        .iter()
        .find(|(form, _)| rest.starts_with(form.as_bytes()))
        .map(|&(form, tok)| (tok, form.len()))
}

/// Splits a string into tokens with byte offsets; the first unmatched byte
/// offset is returned as the error.
pub fn lex(s: &str) -> Result<Vec<(Token, usize)>, usize> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < s.len() {
        match match_at(s, pos) {
            Some((tok, len)) => {
                out.push((tok, pos));
                pos += len;
            }
            None => return Err(pos),
        }
    }
    Ok(out)
}

/// Longest-match scan wrapped in SOS/EOS. Each maximal run of unmatched
/// characters becomes a single UNK.
pub fn tokenize(s: &str) -> Vec<Token> {
    let mut out = vec![Token::Sos];
    let mut pos = 0;
    let mut in_garbage = false;
    while pos < s.len() {
        match match_at(s, pos) {
            Some((tok, len)) => {
                out.push(tok);
                pos += len;
                in_garbage = false;
            }
            None => {
                if !in_garbage {
                    out.push(Token::Unk);
                    in_garbage = true;
                }
                pos += s[pos..].chars().next().map_or(1, char::len_utf8);
            }
        }
    }
    out.push(Token::Eos);
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("token id {0} is outside the vocabulary")]
    OutOfRange(u32),
    #[error("cannot detokenize {0} at position {1}")]
    NotPrintable(Token, usize),
}

/// Concatenates surface forms, dropping a leading SOS and trailing EOS.
pub fn detokenize(tokens: &[Token]) -> Result<String, VocabError> {
    let mut body = tokens;
    if body.first() == Some(&Token::Sos) {
        body = &body[1..];
    }
    if body.last() == Some(&Token::Eos) {
        body = &body[..body.len() - 1];
    }
    let mut s = String::new();
    for (i, t) in body.iter().enumerate() {
        if t.is_special() {
            return Err(VocabError::NotPrintable(*t, i));
        }
        s.push_str(&t.surface());
    }
    Ok(s)
}

pub fn encode(tokens: &[Token]) -> Vec<u32> {
    tokens.iter().map(|t| t.id()).collect()
}

pub fn decode(ids: &[u32]) -> Result<Vec<Token>, VocabError> {
    ids.iter().map(|&i| Token::from_id(i).ok_or(VocabError::OutOfRange(i))).collect()
}

/// Tokenize and encode in one step, SOS/EOS included.
pub fn string_to_ids(s: &str) -> Vec<u32> {
    encode(&tokenize(s))
}
