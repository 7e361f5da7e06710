//! LP text format writer and a small reader for the subset it emits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::ip::{IpModel, Sense, VarKind};
use crate::error::{Error, Result};

const TERMS_PER_LINE: usize = 8;

fn push_term(out: &mut String, first: bool, coef: f64, name: &str) {
    let (sign, mag) = if coef < 0.0 { ("-", -coef) } else { ("+", coef.abs()) };
    if first && sign == "+" {
        if mag == 1.0 {
            let _ = write!(out, "{name}");
        } else {
            let _ = write!(out, "{mag} {name}");
        }
    } else if mag == 1.0 {
        let _ = write!(out, "{sign} {name}");
    } else {
        let _ = write!(out, "{sign} {mag} {name}");
    }
}

fn push_expr(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    for (k, &(v, c)) in terms.iter().enumerate() {
        if k > 0 {
            if k % TERMS_PER_LINE == 0 {
                out.push_str("\n   ");
            }
            out.push(' ');
        }
        push_term(out, k == 0, c, &names[v]);
    }
}

/// Renders the model in LP text format.
pub fn write_lp(m: &IpModel) -> String {
    let names: Vec<String> = m.variables.iter().map(VarKind::name).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "\\ coverage program: {} candidates, {} points, K = {}, phi = {}",
        m.n_candidates, m.n_points, m.budget, m.phi
    );
    let _ = writeln!(
        out,
        "\\ radius rows presolved: {} z_i_j fixed at 0 (point j outside ball i)",
        m.presolved_out
    );
    let mut present = vec![false; m.n_candidates * m.n_points];
    for v in &m.variables {
        if let VarKind::Z(i, j) = v {
            present[i * m.n_points + j] = true;
        }
    }
    for i in 0..m.n_candidates {
        let fixed: Vec<String> = (0..m.n_points)
            .filter(|&j| !present[i * m.n_points + j])
            .map(|j| format!("z_{i}_{j}"))
            .collect();
        for chunk in fixed.chunks(TERMS_PER_LINE * 2) {
            let _ = writeln!(out, "\\   fixed 0: {}", chunk.join(" "));
        }
    }
    out.push_str("Maximize\n obj: ");
    push_expr(&mut out, &m.objective, &names);
    out.push_str("\nSubject To\n");
    for c in &m.constraints {
        let _ = write!(out, " {}: ", c.name);
        if c.terms.is_empty() {
            out.push_str("0 w_0");
        } else {
            push_expr(&mut out, &c.terms, &names);
        }
        let _ = writeln!(out, " {} {}", c.sense.symbol(), c.rhs);
    }
    out.push_str("Binary\n");
    for chunk in names.chunks(TERMS_PER_LINE * 2) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
    out.push_str("End\n");
    out
}

pub fn export_lp(m: &IpModel, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), write_lp(m).as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub name: Option<String>,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLp {
    pub maximize: bool,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<ParsedRow>,
    pub binaries: Vec<String>,
}

impl ParsedLp {
    /// Distinct variable names appearing anywhere in the file.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut s: BTreeSet<&str> = self.binaries.iter().map(String::as_str).collect();
        s.extend(self.objective.iter().map(|t| t.0.as_str()));
        for r in &self.constraints {
            s.extend(r.terms.iter().map(|t| t.0.as_str()));
        }
        s
    }

    pub fn n_variables(&self) -> usize {
        self.variables().len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn row(&self, name: &str) -> Option<&ParsedRow> {
        self.constraints.iter().find(|r| r.name.as_deref() == Some(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(Sense),
    Eq,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let err = |message: String| Error::LpFormat { line: lineno, message };
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let c = chars[k];
        match c {
            c if c.is_whitespace() => k += 1,
            '+' => {
                out.push(Tok::Plus);
                k += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                k += 1;
            }
            ':' => {
                out.push(Tok::Colon);
                k += 1;
            }
            '<' | '>' | '=' => {
                let mut end = k + 1;
                if end < chars.len() && matches!(chars[end], '=' | '<' | '>') {
                    end += 1;
                }
                let op: String = chars[k..end].iter().collect();
                out.push(match op.as_str() {
                    "<=" | "=<" | "<" => Tok::Cmp(Sense::Le),
                    ">=" | "=>" | ">" => Tok::Cmp(Sense::Ge),
                    "=" => Tok::Eq,
                    _ => return Err(err(format!("unknown operator `{op}`"))),
                });
                k = end;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                    k += 1;
                }
                if k < chars.len() && matches!(chars[k], 'e' | 'E') {
                    let mut e = k + 1;
                    if e < chars.len() && matches!(chars[e], '+' | '-') {
                        e += 1;
                    }
                    if e < chars.len() && chars[e].is_ascii_digit() {
                        k = e;
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                    }
                }
                let s: String = chars[start..k].iter().collect();
                out.push(Tok::Num(s.parse().map_err(|_| err(format!("bad number `{s}`")))?));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = k;
                while k < chars.len() && (chars[k].is_alphanumeric() || "_.[]{}#$%&~@!'".contains(chars[k])) {
                    k += 1;
                }
                out.push(Tok::Name(chars[start..k].iter().collect()));
            }
            _ => return Err(err(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

/// Linear expression from tokens; returns terms and the index of the first
/// unconsumed token.
fn parse_expr(toks: &[Tok], lineno: usize) -> Result<(Vec<(String, f64)>, usize)> {
    let err = |message: &str| Error::LpFormat {
        line: lineno,
        message: message.into(),
    };
    let mut terms = Vec::new();
    let mut k = 0;
    while k < toks.len() {
        let mut sign = 1.0;
        let mut signed = false;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(k) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            signed = true;
            k += 1;
        }
        if !terms.is_empty() && !signed {
            break;
        }
        let mut coef = 1.0;
        if let Some(Tok::Num(v)) = toks.get(k) {
            coef = *v;
            k += 1;
        }
        match toks.get(k) {
            Some(Tok::Name(n)) => {
                terms.push((n.clone(), sign * coef));
                k += 1;
            }
            _ if signed || coef != 1.0 => return Err(err("coefficient without a variable")),
            _ => break,
        }
    }
    Ok((terms, k))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binary,
    General,
    Done,
}

fn section_keyword(line: &str) -> Option<Section> {
    let l = line.trim().to_ascii_lowercase();
    match l.as_str() {
        "maximize" | "maximise" | "maximum" | "max" => Some(Section::Objective),
        "minimize" | "minimise" | "minimum" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." | "st." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "binary" | "binaries" | "bin" => Some(Section::Binary),
        "general" | "generals" | "gen" => Some(Section::General),
        "end" => Some(Section::Done),
        _ => None,
    }
}

/// Parses LP text: objective, constraint rows (possibly spanning several
/// lines), and the Binary section. Bounds and General sections are skipped.
pub fn parse_lp(text: &str) -> Result<ParsedLp> {
    let mut lp = ParsedLp::default();
    let mut section = Section::Preamble;
    let mut pending: Vec<Tok> = Vec::new();
    let mut pending_line = 0;
    let mut objective_seen = false;

    let flush_row = |toks: &mut Vec<Tok>, lineno: usize, lp: &mut ParsedLp| -> Result<()> {
        if toks.is_empty() {
            return Ok(());
        }
        let err = |m: &str| Error::LpFormat {
            line: lineno,
            message: m.into(),
        };
        let (name, body) = match (toks.first(), toks.get(1)) {
            (Some(Tok::Name(n)), Some(Tok::Colon)) => (Some(n.clone()), &toks[2..]),
            _ => (None, &toks[..]),
        };
        let (terms, k) = parse_expr(body, lineno)?;
        let sense = match body.get(k) {
            Some(Tok::Cmp(s)) => *s,
            Some(Tok::Eq) => return Err(err("equality rows are not supported")),
            _ => return Err(err("row without a comparison")),
        };
        let (neg, at) = match body.get(k + 1) {
            Some(Tok::Minus) => (true, k + 2),
            Some(Tok::Plus) => (false, k + 2),
            _ => (false, k + 1),
        };
        let rhs = match body.get(at) {
            Some(Tok::Num(v)) if at + 1 == body.len() => {
                if neg {
                    -v
                } else {
                    *v
                }
            }
            _ => return Err(err("row must end in a numeric right-hand side")),
        };
        lp.constraints.push(ParsedRow {
            name,
            terms,
            sense,
            rhs,
        });
        toks.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(next) = section_keyword(line) {
            if section == Section::Constraints {
                flush_row(&mut pending, pending_line, &mut lp)?;
            }
            if next == Section::Objective {
                lp.maximize = line.trim().to_ascii_lowercase().starts_with("max");
            }
            section = next;
            continue;
        }
        let toks = tokenize(line, lineno)?;
        match section {
            Section::Preamble | Section::Done => {
                return Err(Error::LpFormat {
                    line: lineno,
                    message: "content outside any section".into(),
                })
            }
            Section::Objective => {
                let body = match (toks.first(), toks.get(1)) {
                    (Some(Tok::Name(_)), Some(Tok::Colon)) if !objective_seen => &toks[2..],
                    _ => &toks[..],
                };
                objective_seen = true;
                let (terms, k) = parse_expr(body, lineno)?;
                if k != body.len() {
                    return Err(Error::LpFormat {
                        line: lineno,
                        message: "unexpected token in objective".into(),
                    });
                }
                lp.objective.extend(terms);
            }
            Section::Constraints => {
                let starts_row = matches!((toks.first(), toks.get(1)), (Some(Tok::Name(_)), Some(Tok::Colon)));
                let has_rhs = pending.iter().any(|t| matches!(t, Tok::Cmp(_) | Tok::Eq));
                if starts_row && has_rhs {
                    flush_row(&mut pending, pending_line, &mut lp)?;
                }
                if pending.is_empty() {
                    pending_line = lineno;
                }
                pending.extend(toks);
            }
            Section::Binary => {
                for t in toks {
                    match t {
                        Tok::Name(n) => lp.binaries.push(n),
                        _ => {
                            return Err(Error::LpFormat {
                                line: lineno,
                                message: "non-name in Binary section".into(),
                            })
                        }
                    }
                }
            }
            Section::Bounds | Section::General => {}
        }
    }
    if section == Section::Constraints {
        flush_row(&mut pending, pending_line, &mut lp)?;
    }
    if section != Section::Done {
        return Err(Error::LpFormat {
            line: text.lines().count(),
            message: "missing End".into(),
        });
    }
    Ok(lp)
}
