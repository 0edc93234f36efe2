//! CPLEX LP text format: writer and a reader for the subset it emits.
//!
//! `Bounds` lists every variable in declaration order (binaries as
//! `0 <= x <= 1`), so reading a written file reproduces the model exactly,
//! including variable order. Coefficients use shortest round-trip decimal
//! formatting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::model::{MilpModel, Sense, VarKind};
use crate::error::{read_to_string, write_string, Error, Result};

const TERMS_PER_LINE: usize = 6;

fn write_expr(out: &mut String, terms: &[(usize, f64)], constant: f64, model: &MilpModel) {
    let mut first = true;
    let mut count = 0;
    let mut push = |out: &mut String, coef: f64, name: Option<&str>| {
        if count > 0 && count % TERMS_PER_LINE == 0 {
            out.push_str("\n  ");
        }
        let sign = if coef.is_sign_negative() { '-' } else { '+' };
        if first {
            if sign == '-' {
                out.push_str(" -");
            }
        } else {
            write!(out, " {sign}").unwrap();
        }
        write!(out, " {}", coef.abs()).unwrap();
        if let Some(name) = name {
            write!(out, " {name}").unwrap();
        }
        first = false;
        count += 1;
    };
    for &(v, c) in terms {
        push(out, c, Some(&model.variables()[v].name));
    }
    if constant != 0.0 || terms.is_empty() {
        push(out, constant, None);
    }
}

/// Renders `model` in LP format.
pub fn write_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    writeln!(out, "\\ Model: {}", model.name()).unwrap();
    writeln!(out, "Minimize").unwrap();
    out.push_str(" obj:");
    write_expr(&mut out, model.objective(), model.objective_constant(), model);
    out.push('\n');
    writeln!(out, "Subject To").unwrap();
    for c in model.constraints() {
        write!(out, " {}:", c.name).unwrap();
        write_expr(&mut out, &c.terms, 0.0, model);
        writeln!(out, " {} {}", c.sense.symbol(), c.rhs).unwrap();
    }
    writeln!(out, "Bounds").unwrap();
    for v in model.variables() {
        let lo = v.lower;
        let hi = v.upper;
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => writeln!(out, " {lo} <= {} <= {hi}", v.name),
            (true, false) => writeln!(out, " {} >= {lo}", v.name),
            (false, true) => writeln!(out, " -inf <= {} <= {hi}", v.name),
            (false, false) => writeln!(out, " {} free", v.name),
        }
        .unwrap();
    }
    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries").unwrap();
        for chunk in binaries.chunks(8) {
            writeln!(out, " {}", chunk.join(" ")).unwrap();
        }
    }
    writeln!(out, "End").unwrap();
    out
}

pub fn export_lp(model: &MilpModel, path: impl AsRef<Path>) -> Result<()> {
    model.validate()?;
    write_string(path.as_ref(), &write_lp(model))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Plus,
    Minus,
    Colon,
    Sense(Sense),
}

fn tokenize(text: &str, line_no: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |msg: String| Error::Parse(format!("LP line {line_no}: {msg}"));
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            out.push(Token::Plus);
            i += 1;
        } else if c == '-' {
            out.push(Token::Minus);
            i += 1;
        } else if c == ':' {
            out.push(Token::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let next = chars.get(i + 1).copied();
            let sense = match (c, next) {
                ('<', Some('=')) | ('=', Some('<')) => {
                    i += 2;
                    Sense::Le
                }
                ('>', Some('=')) | ('=', Some('>')) => {
                    i += 2;
                    Sense::Ge
                }
                ('<', _) => {
                    i += 1;
                    Sense::Le
                }
                ('>', _) => {
                    i += 1;
                    Sense::Ge
                }
                _ => {
                    i += 1;
                    Sense::Eq
                }
            };
            out.push(Token::Sense(sense));
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || ((chars[i] == '-' || chars[i] == '+') && matches!(chars[i - 1], 'e' | 'E'))) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token::Number(s.parse().map_err(|_| err(format!("bad number `{s}`")))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || "_.[]#$%&!\"',;?@^`{}|~".contains(chars[i])) {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => out.push(Token::Number(f64::INFINITY)),
                _ => out.push(Token::Ident(s)),
            }
        } else {
            return Err(err(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

fn section_header(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "binaries" | "binary" | "bin" => Some(Section::Binaries),
        "generals" | "general" | "gen" => Some(Section::Generals),
        "end" => Some(Section::End),
        _ => None,
    }
}

struct Builder {
    model: MilpModel,
    index: HashMap<String, usize>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&v) = self.index.get(name) {
            return v;
        }
        let v = self.model.add_continuous(name, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), v);
        v
    }
}

/// Parses `(terms, constant)` from a token stream of `[sign] [coef] [name]` items.
fn parse_expr(tokens: &[Token], b: &mut Builder, line: usize) -> Result<(Vec<(usize, f64)>, f64)> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut i = 0;
    let err = |m: &str| Error::Parse(format!("LP line {line}: {m}"));
    while i < tokens.len() {
        let mut sign = 1.0;
        while let Some(t @ (Token::Plus | Token::Minus)) = tokens.get(i) {
            if *t == Token::Minus {
                sign = -sign;
            }
            i += 1;
        }
        match (tokens.get(i), tokens.get(i + 1)) {
            (Some(Token::Number(c)), Some(Token::Ident(name))) => {
                terms.push((b.var(name), sign * c));
                i += 2;
            }
            (Some(Token::Number(c)), _) => {
                constant += sign * c;
                i += 1;
            }
            (Some(Token::Ident(name)), _) => {
                terms.push((b.var(name), sign));
                i += 1;
            }
            _ => return Err(err("malformed linear expression")),
        }
    }
    Ok((terms, constant))
}

fn signed_number(tokens: &[Token], line: usize) -> Result<f64> {
    match tokens {
        [Token::Number(v)] => Ok(*v),
        [Token::Minus, Token::Number(v)] => Ok(-v),
        [Token::Plus, Token::Number(v)] => Ok(*v),
        _ => Err(Error::Parse(format!("LP line {line}: expected a number"))),
    }
}

fn parse_bound(tokens: &[Token], b: &mut Builder, line: usize) -> Result<()> {
    let err = || Error::Parse(format!("LP line {line}: unsupported bound"));
    let name_pos = tokens
        .iter()
        .position(|t| matches!(t, Token::Ident(_)))
        .ok_or_else(err)?;
    let Token::Ident(name) = &tokens[name_pos] else { unreachable!() };
    let v = b.var(name);
    let before = &tokens[..name_pos];
    let after = &tokens[name_pos + 1..];
    let mut lower = b.model.variables()[v].lower;
    let mut upper = b.model.variables()[v].upper;
    if let [Token::Ident(word)] = after {
        if word.eq_ignore_ascii_case("free") && before.is_empty() {
            set_bounds(&mut b.model, v, f64::NEG_INFINITY, f64::INFINITY);
            return Ok(());
        }
        return Err(err());
    }
    if let Some((Token::Sense(s), num)) = before.split_last() {
        let value = signed_number(num, line)?;
        match s {
            Sense::Le => lower = value,
            Sense::Ge => upper = value,
            Sense::Eq => {
                lower = value;
                upper = value;
            }
        }
    } else if !before.is_empty() {
        return Err(err());
    }
    if let Some((Token::Sense(s), num)) = after.split_first() {
        let value = signed_number(num, line)?;
        match s {
            Sense::Le => upper = value,
            Sense::Ge => lower = value,
            Sense::Eq => {
                lower = value;
                upper = value;
            }
        }
    } else if !after.is_empty() {
        return Err(err());
    }
    set_bounds(&mut b.model, v, lower, upper);
    Ok(())
}

fn set_bounds(model: &mut MilpModel, v: usize, lower: f64, upper: f64) {
    let vars = model.variables_mut();
    vars[v].lower = lower;
    vars[v].upper = upper;
}

/// Parses an LP file produced by [`write_lp`] (and most hand-written minimization files).
pub fn read_lp(text: &str) -> Result<MilpModel> {
    let mut b = Builder {
        model: MilpModel::new(""),
        index: HashMap::new(),
    };
    let mut section = Section::Preamble;
    let mut objective_tokens: Vec<Token> = Vec::new();
    let mut row_tokens: Vec<(Token, usize)> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut bound_lines: Vec<(Vec<Token>, usize)> = Vec::new();
    let mut name = String::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        if let Some(rest) = raw.trim_start().strip_prefix("\\ Model:") {
            name = rest.trim().to_string();
            continue;
        }
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(s) = section_header(line) {
            if matches!(s, Section::Objective) && section != Section::Preamble {
                return Err(Error::Parse(format!("LP line {line_no}: objective section out of order")));
            }
            section = s;
            continue;
        }
        if line.trim().eq_ignore_ascii_case("maximize") || line.trim().eq_ignore_ascii_case("max") {
            return Err(Error::Parse("maximization models are not supported".into()));
        }
        match section {
            Section::Preamble => return Err(Error::Parse(format!("LP line {line_no}: content before `Minimize`"))),
            Section::Objective => objective_tokens.extend(tokenize(line, line_no)?),
            Section::Constraints => row_tokens.extend(tokenize(line, line_no)?.into_iter().map(|t| (t, line_no))),
            Section::Bounds => bound_lines.push((tokenize(line, line_no)?, line_no)),
            Section::Binaries | Section::Generals => {
                if section == Section::Generals {
                    return Err(Error::Parse("general integers are not supported".into()));
                }
                binaries.extend(line.split_whitespace().map(str::to_string));
            }
            Section::End => return Err(Error::Parse(format!("LP line {line_no}: content after `End`"))),
        }
    }
    if section != Section::End {
        return Err(Error::Parse("missing `End`".into()));
    }
    // Declaration order comes from the Bounds section.
    for (tokens, line) in &bound_lines {
        parse_bound(tokens, &mut b, *line)?;
    }
    for bin in &binaries {
        let v = b.var(bin);
        let vars = b.model.variables_mut();
        vars[v].kind = VarKind::Binary;
        vars[v].lower = 0.0;
        vars[v].upper = 1.0;
    }
    let body = match objective_tokens.as_slice() {
        [Token::Ident(_), Token::Colon, rest @ ..] => rest,
        rest => rest,
    };
    let (terms, constant) = parse_expr(body, &mut b, 0)?;
    for (v, c) in terms {
        b.model.add_objective_term(v, c);
    }
    b.model.set_objective_constant(constant);

    let mut i = 0;
    let mut auto = 0;
    while i < row_tokens.len() {
        let line = row_tokens[i].1;
        let row_name = match (&row_tokens[i].0, row_tokens.get(i + 1).map(|t| &t.0)) {
            (Token::Ident(n), Some(Token::Colon)) => {
                i += 2;
                n.clone()
            }
            _ => {
                auto += 1;
                format!("R{auto}")
            }
        };
        let sense_at = row_tokens[i..]
            .iter()
            .position(|t| matches!(t.0, Token::Sense(_)))
            .map(|p| p + i)
            .ok_or_else(|| Error::Parse(format!("LP line {line}: row `{row_name}` has no sense")))?;
        let Token::Sense(sense) = row_tokens[sense_at].0 else { unreachable!() };
        let lhs: Vec<Token> = row_tokens[i..sense_at].iter().map(|t| t.0.clone()).collect();
        let mut j = sense_at + 1;
        let mut rhs_tokens = Vec::new();
        while let Some((t, _)) = row_tokens.get(j) {
            rhs_tokens.push(t.clone());
            j += 1;
            if matches!(t, Token::Number(_)) {
                break;
            }
        }
        let rhs = signed_number(&rhs_tokens, line)?;
        let (terms, constant) = parse_expr(&lhs, &mut b, line)?;
        b.model.add_constraint(row_name, terms, sense, rhs - constant);
        i = j;
    }
    let mut model = b.model;
    model.set_name(name);
    model.validate()?;
    Ok(model)
}

pub fn read_lp_file(path: impl AsRef<Path>) -> Result<MilpModel> {
    read_lp(&read_to_string(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MilpModel {
        let mut m = MilpModel::new("toy");
        let x = m.add_binary("x");
        let y = m.add_continuous("y", 0.0, 2.5);
        let w = m.add_continuous("w", f64::NEG_INFINITY, f64::INFINITY);
        m.add_constraint("c1", vec![(x, 1.0), (y, -2.0)], Sense::Le, 4.0);
        m.add_constraint("c2", vec![(y, 0.1), (w, 1.0)], Sense::Eq, -1.0);
        m.add_objective_term(x, 3.0);
        m.add_objective_term(y, -0.5);
        m
    }

    #[test]
    fn toy_golden() {
        let expected = "\\ Model: toy\nMinimize\n obj: 3 x - 0.5 y\nSubject To\n c1: 1 x - 2 y <= 4\n c2: 0.1 y + 1 w = -1\nBounds\n 0 <= x <= 1\n 0 <= y <= 2.5\n w free\nBinaries\n x\nEnd\n";
        assert_eq!(write_lp(&toy()), expected);
    }

    #[test]
    fn roundtrip() {
        let m = toy();
        let text = write_lp(&m);
        let back = read_lp(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_lp(&back), text);
    }

    #[test]
    fn reads_hand_written_file() {
        let text = "Minimize\n obj: 2 a + b\n  + 1.5\nSubject To\n r: a + b >= 1\n a - b <= 0.5\nBounds\n a <= 3\nEnd\n";
        let m = read_lp(text).unwrap();
        assert_eq!(m.variables().len(), 2);
        assert_eq!(m.objective_constant(), 1.5);
        assert_eq!(m.constraints()[1].name, "R1");
        assert_eq!(m.variables()[0].upper, 3.0);
    }

    #[test]
    fn rejects_missing_end() {
        assert!(read_lp("Minimize\n obj: x\n").is_err());
    }
}
