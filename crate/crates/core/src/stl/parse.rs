use super::{Bound, Formula, Interval, Predicate, Relation, StlError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Rel(Relation),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Plus,
    Minus,
    Star,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn syntax(text: &str, offset: usize, message: impl Into<String>) -> StlError {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.chars().count(), |p| {
        before[p + 1..].chars().count()
    }) + 1;
    StlError::Syntax {
        offset,
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>, StlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            ',' => Some(Tok::Comma),
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, offset: start });
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '>' || c == '<' {
            let eq = bytes.get(i + 1) == Some(&b'=');
            let rel = match (c, eq) {
                ('>', true) => Relation::Ge,
                ('>', false) => Relation::Gt,
                ('<', true) => Relation::Le,
                _ => Relation::Lt,
            };
            i += if eq { 2 } else { 1 };
            out.push(Token {
                tok: Tok::Rel(rel),
                offset: start,
            });
            continue;
        }
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
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &text[start..i];
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(text, start, format!("malformed number `{s}`")))?;
            out.push(Token {
                tok: Tok::Number(v),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let ch = text[i..].chars().next().unwrap_or('?');
        return Err(syntax(text, start, format!("unexpected character `{ch}`")));
    }
    Ok(out)
}

const KEYWORDS: [&str; 7] = ["and", "or", "not", "alw_", "ev_", "until_", "end"];

struct Parser<'a> {
    text: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.toks
            .get(self.pos)
            .map_or(self.text.len(), |t| t.offset)
    }

    fn err(&self, message: impl Into<String>) -> StlError {
        syntax(self.text, self.offset(), message)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), StlError> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn formula(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.conj()?;
        while self.is_keyword("or") {
            self.pos += 1;
            lhs = Formula::or(lhs, self.conj()?);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.until()?;
        while self.is_keyword("and") {
            self.pos += 1;
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.unary()?;
        while self.is_keyword("until_") {
            self.pos += 1;
            let i = self.interval()?;
            lhs = Formula::until(i, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, StlError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "alw_" => {
                self.pos += 1;
                let i = self.interval()?;
                Ok(Formula::always(i, self.unary()?))
            }
            Some(Tok::Ident(s)) if s == "ev_" => {
                self.pos += 1;
                let i = self.interval()?;
                Ok(Formula::eventually(i, self.unary()?))
            }
            Some(Tok::Ident(s)) if s == "not" => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(_) => self.atom(),
            None => Err(self.err("unexpected end of formula")),
        }
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        let at = self.offset();
        self.expect(Tok::LBracket, "`[` after temporal operator")?;
        let a = self.signed_number("interval start")?;
        self.expect(Tok::Comma, "`,` in interval")?;
        let b = if self.is_keyword("end") {
            self.pos += 1;
            Bound::End
        } else {
            Bound::Time(self.signed_number("interval end or `end`")?)
        };
        self.expect(Tok::RBracket, "`]`")?;
        let i = Interval::new(a, b);
        i.validate()
            .map_err(|e| syntax(self.text, at, e.to_string()))?;
        Ok(i)
    }

    fn signed_number(&mut self, what: &str) -> Result<f64, StlError> {
        let neg = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            true
        } else {
            false
        };
        match self.bump() {
            Some(Tok::Number(v)) => Ok(if neg { -v } else { v }),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected {what}")))
            }
        }
    }

    fn atom(&mut self) -> Result<Formula, StlError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            sign = -1.0;
        }
        loop {
            let mut coef = sign;
            if let Some(Tok::Number(v)) = self.peek().cloned() {
                self.pos += 1;
                self.expect(Tok::Star, "`*` between coefficient and channel")?;
                coef *= v;
            }
            match self.peek().cloned() {
                Some(Tok::Ident(name)) if !KEYWORDS.contains(&name.as_str()) => {
                    self.pos += 1;
                    terms.push((coef, name));
                }
                _ => return Err(self.err("expected a channel name")),
            }
            match self.peek() {
                Some(Tok::Plus) => sign = 1.0,
                Some(Tok::Minus) => sign = -1.0,
                _ => break,
            }
            self.pos += 1;
        }
        let relation = match self.bump() {
            Some(Tok::Rel(r)) => r,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected one of >=, <=, >, <"));
            }
        };
        let threshold = self.signed_number("a numeric threshold")?;
        Ok(Formula::Pred(Predicate {
            terms,
            relation,
            threshold,
        }))
    }
}

pub fn parse(text: &str) -> Result<Formula, StlError> {
    let toks = tokenize(text)?;
    let mut p = Parser { text, toks, pos: 0 };
    let f = p.formula()?;
    if p.pos < p.toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

/// One formula per non-empty line; `#` starts a comment.
pub fn parse_spec_file(text: &str) -> Result<Vec<Formula>, StlError> {
    let mut out = Vec::new();
    let mut line_start = 0;
    for (lineno, line) in text.split('\n').enumerate() {
        let body = line.split('#').next().unwrap_or("");
        if !body.trim().is_empty() {
            let f = parse(body).map_err(|e| match e {
                StlError::Syntax {
                    offset,
                    column,
                    message,
                    ..
                } => StlError::Syntax {
                    offset: line_start + offset,
                    line: lineno + 1,
                    column,
                    message,
                },
                other => other,
            })?;
            out.push(f);
        }
        line_start += line.len() + 1;
    }
    Ok(out)
}
