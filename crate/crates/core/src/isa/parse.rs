use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    validate_structure, ChipHeader, DetectorDecl, Instruction, Loc, MixerType, Program,
    ReservoirDecl, ReservoirKind, SemanticError, TimedLine,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{} semantic error(s); first: {}", .0.len(), .0[0])]
    Semantic(Vec<SemanticError>),
}

/// Parses and validates a `.dmf` program.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let program = parse_unvalidated(text)?;
    let errors = validate_structure(&program);
    if errors.is_empty() {
        Ok(program)
    } else {
        Err(ParseError::Semantic(errors))
    }
}

/// Byte-level entry point; invalid UTF-8 is reported as a syntax error.
pub fn parse_program_bytes(bytes: &[u8]) -> Result<Program, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_program(text),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let line = valid.iter().filter(|&&b| b == b'\n').count() + 1;
            let col = valid.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
            Err(SyntaxError {
                line,
                col,
                expected: "UTF-8 text".into(),
                found: "invalid byte sequence".into(),
            }
            .into())
        }
    }
}

/// Parses the grammar only. Structural invariants are left to
/// [`validate_structure`].
pub fn parse_unvalidated(text: &str) -> Result<Program, SyntaxError> {
    let mut head = HeaderItems::default();
    let mut main = Vec::new();
    let mut recoveries: BTreeMap<String, Vec<TimedLine>> = BTreeMap::new();
    let mut open_block: Option<(String, Vec<TimedLine>, usize)> = None;
    let mut body_started = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let content = raw.split('#').next().unwrap_or("");
        let mut cur = Cursor::new(content, line_no);
        cur.skip_ws();
        if cur.at_end() {
            continue;
        }

        if cur.peek().is_some_and(|c| c.is_ascii_digit()) {
            let timed = cur.timed_line()?;
            body_started = true;
            match &mut open_block {
                Some((_, lines, _)) => lines.push(timed),
                None => main.push(timed),
            }
            continue;
        }

        let start = cur.pos;
        let word = cur.ident().ok_or_else(|| cur.error("header item or timed line"))?;
        match word.as_str() {
            "recovery" => {
                if open_block.is_some() {
                    cur.pos = start;
                    return Err(cur.error("`endrecovery` before a new recovery block"));
                }
                cur.skip_ws();
                let id = cur.ident().ok_or_else(|| cur.error("recovery identifier"))?;
                cur.skip_ws();
                cur.expect(':', "`:`")?;
                cur.finish()?;
                body_started = true;
                open_block = Some((id, Vec::new(), line_no));
            }
            "endrecovery" => {
                cur.finish()?;
                let Some((id, lines, opened)) = open_block.take() else {
                    cur.pos = start;
                    return Err(cur.error("timed line (no open recovery block)"));
                };
                if recoveries.contains_key(&id) {
                    return Err(SyntaxError {
                        line: opened,
                        col: 1,
                        expected: "unique recovery identifier".into(),
                        found: format!("duplicate `{id}`"),
                    });
                }
                recoveries.insert(id, lines);
            }
            _ if body_started => {
                cur.pos = start;
                return Err(cur.error("timed line"));
            }
            _ => {
                cur.pos = start;
                loop {
                    cur.skip_ws();
                    if cur.at_end() {
                        break;
                    }
                    cur.header_item(&mut head)?;
                }
            }
        }
    }

    if let Some((_, _, opened)) = open_block {
        return Err(SyntaxError {
            line: last_line + 1,
            col: 1,
            expected: format!("`endrecovery` closing the block opened on line {opened}"),
            found: "end of input".into(),
        });
    }
    let (rows, cols) = head.dims.ok_or_else(|| missing("`dim(r,c)` header", last_line))?;
    let accuracy = head.accuracy.ok_or_else(|| missing("`accuracy n` header", last_line))?;

    Ok(Program {
        header: ChipHeader { rows, cols, accuracy, reservoirs: head.reservoirs },
        main,
        detectors: head.detectors,
        recoveries,
        t_max: head.t_max,
    })
}

fn missing(what: &str, last_line: usize) -> SyntaxError {
    SyntaxError {
        line: last_line + 1,
        col: 1,
        expected: what.into(),
        found: "end of input".into(),
    }
}

#[derive(Default)]
struct HeaderItems {
    dims: Option<(u32, u32)>,
    accuracy: Option<u32>,
    t_max: Option<u32>,
    reservoirs: Vec<ReservoirDecl>,
    detectors: Vec<DetectorDecl>,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(text: &str, line: usize) -> Self {
        Cursor { chars: text.chars().collect(), pos: 0, line }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn error(&self, expected: &str) -> SyntaxError {
        let found = match self.peek() {
            None => "end of line".to_string(),
            Some(_) => {
                let tail: String = self.chars[self.pos..].iter().take(12).collect();
                format!("`{}`", tail.split_whitespace().next().unwrap_or(&tail))
            }
        };
        SyntaxError { line: self.line, col: self.pos + 1, expected: expected.into(), found }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_str(&mut self, s: &str) -> bool {
        let n = s.chars().count();
        if self.chars.len() >= self.pos + n && self.chars[self.pos..self.pos + n].iter().copied().eq(s.chars()) {
            self.pos += n;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char, what: &str) -> Result<(), SyntaxError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn comma(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        self.expect(',', "`,`")
    }

    fn finish(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("end of line"))
        }
    }

    fn ident(&mut self) -> Option<String> {
        let start = self.pos;
        if !self.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
            return None;
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Some(self.chars[start..self.pos].iter().collect())
    }

    /// Identifier or bare number (detector and recovery ids may be numeric).
    fn label(&mut self, what: &str) -> Result<String, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if self.pos == start {
            Err(self.error(what))
        } else {
            Ok(self.chars[start..self.pos].iter().collect())
        }
    }

    fn number(&mut self) -> Result<u32, SyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            value = match value.checked_mul(10).and_then(|v| v.checked_add(d)) {
                Some(v) => v,
                None => {
                    self.pos = start;
                    return Err(self.error("integer that fits in 32 bits"));
                }
            };
            self.pos += 1;
        }
        if self.pos == start {
            Err(self.error("integer"))
        } else {
            Ok(value)
        }
    }

    fn pair(&mut self) -> Result<Loc, SyntaxError> {
        let r = self.number()?;
        self.comma()?;
        let c = self.number()?;
        Ok(Loc::new(r, c))
    }

    fn bracketed(&mut self) -> Result<Loc, SyntaxError> {
        self.skip_ws();
        self.expect('[', "`[`")?;
        let loc = self.pair()?;
        self.skip_ws();
        self.expect(']', "`]`")?;
        Ok(loc)
    }

    fn open(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        self.expect('(', "`(`")
    }

    fn close(&mut self) -> Result<(), SyntaxError> {
        self.skip_ws();
        self.expect(')', "`)`")
    }

    fn loc_args(&mut self) -> Result<Loc, SyntaxError> {
        self.open()?;
        let loc = self.pair()?;
        self.close()?;
        Ok(loc)
    }

    fn timed_line(&mut self) -> Result<TimedLine, SyntaxError> {
        let t = self.number()?;
        let mut instrs = Vec::new();
        loop {
            self.skip_ws();
            if self.at_end() {
                break;
            }
            instrs.push(self.instruction()?);
        }
        if instrs.is_empty() {
            return Err(self.error("at least one instruction"));
        }
        Ok(TimedLine { t, instrs, line: self.line })
    }

    fn instruction(&mut self) -> Result<Instruction, SyntaxError> {
        let start = self.pos;
        let name = self.ident().ok_or_else(|| self.error("instruction"))?;
        let instr = match name.as_str() {
            "d" => Instruction::Dispense(self.loc_args()?),
            "waste" => Instruction::Waste(self.loc_args()?),
            "output" => Instruction::Output(self.loc_args()?),
            "end" => Instruction::End,
            "m" => {
                self.open()?;
                self.skip_ws();
                let (src, dst) = if self.peek() == Some('[') {
                    let src = self.bracketed()?;
                    self.skip_ws();
                    if !(self.eat_str("->") || self.eat('→')) {
                        return Err(self.error("`->`"));
                    }
                    (src, self.bracketed()?)
                } else {
                    let src = self.pair()?;
                    self.comma()?;
                    (src, self.pair()?)
                };
                self.close()?;
                Instruction::Move { src, dst }
            }
            "mix" => {
                self.open()?;
                self.skip_ws();
                let (a, b) = if self.peek() == Some('[') {
                    let a = self.bracketed()?;
                    self.skip_ws();
                    if !(self.eat_str("<->") || self.eat('↔')) {
                        return Err(self.error("`<->`"));
                    }
                    (a, self.bracketed()?)
                } else {
                    let a = self.pair()?;
                    self.comma()?;
                    (a, self.pair()?)
                };
                self.comma()?;
                let t_mix = self.number()?;
                self.comma()?;
                let before = self.pos;
                let code = self.number()?;
                let mtype = MixerType::from_code(code).ok_or_else(|| {
                    self.pos = before;
                    self.skip_ws();
                    self.error("mixer type 14 or 41")
                })?;
                self.close()?;
                Instruction::MixStart { a, b, t_mix, mtype }
            }
            "detect" => {
                self.open()?;
                let id = self.label("detector identifier")?;
                self.close()?;
                Instruction::DetectStart(id)
            }
            "if" => {
                self.open()?;
                let detector = self.label("detector identifier")?;
                self.close()?;
                self.skip_ws();
                if !self.eat_str("call") {
                    return Err(self.error("`call`"));
                }
                self.skip_ws();
                let recovery = if self.eat('(') {
                    let id = self.label("recovery identifier")?;
                    self.close()?;
                    id
                } else {
                    self.label("recovery identifier")?
                };
                Instruction::CondCall { detector, recovery }
            }
            _ => {
                self.pos = start;
                return Err(self.error("instruction (d, m, mix, waste, output, detect, if, end)"));
            }
        };
        // Instructions are separated by whitespace or end the line.
        if !self.at_end() && !self.peek().is_some_and(char::is_whitespace) {
            return Err(self.error("whitespace between instructions"));
        }
        Ok(instr)
    }

    /// One header item: `dim`, `accuracy`, `tmax` or a reservoir/detector
    /// declaration. Several may share a line.
    fn header_item(&mut self, head: &mut HeaderItems) -> Result<(), SyntaxError> {
        let start = self.pos;
        let kind = self.ident().ok_or_else(|| self.error("header item or timed line"))?;
        match kind.as_str() {
            "dim" => {
                if head.dims.is_some() {
                    self.pos = start;
                    return Err(self.error("a single `dim` item"));
                }
                self.skip_ws();
                head.dims = Some(if self.eat('(') {
                    let r = self.number()?;
                    self.comma()?;
                    let c = self.number()?;
                    self.close()?;
                    (r, c)
                } else {
                    (self.number()?, self.number()?)
                });
            }
            "accuracy" => {
                if head.accuracy.is_some() {
                    self.pos = start;
                    return Err(self.error("a single `accuracy` item"));
                }
                head.accuracy = Some(self.number()?);
            }
            "tmax" => {
                if head.t_max.is_some() {
                    self.pos = start;
                    return Err(self.error("a single `tmax` item"));
                }
                head.t_max = Some(self.number()?);
            }
            "R" => {
                self.open()?;
                let loc = self.pair()?;
                self.comma()?;
                let name = self.label("reagent name")?;
                self.close()?;
                head.reservoirs.push(ReservoirDecl { loc, kind: ReservoirKind::Reagent(name) });
            }
            "O" | "W" => {
                let loc = self.loc_args()?;
                let kind = if kind == "O" { ReservoirKind::Output } else { ReservoirKind::Waste };
                head.reservoirs.push(ReservoirDecl { loc, kind });
            }
            "D" => {
                self.open()?;
                let id = self.label("detector identifier")?;
                self.comma()?;
                let loc = self.pair()?;
                self.comma()?;
                let duration = self.number()?;
                self.close()?;
                head.detectors.push(DetectorDecl { id, loc, duration });
            }
            _ => {
                self.pos = start;
                return Err(self.error("dim, accuracy, tmax, R(r,c,Name), O(r,c), W(r,c) or D(id,r,c,t)"));
            }
        }
        if !self.at_end() && !self.peek().is_some_and(char::is_whitespace) {
            return Err(self.error("whitespace between header items"));
        }
        Ok(())
    }
}
