//! Line-oriented text syntax.
//!
//! ```text
//! reg N = classical 4
//! hole R : N*D -> N*N*D causal
//! (uniform N 2 * id D) ; (id N * R)
//! ```
//! Declaration lines start with `reg`, `box` or `hole`; all remaining lines form one
//! expression. `;` composes sequentially and binds looser than `*`. Atoms are
//! `id T`, `swap T T`, `spider T k_in k_out`, `uniform T k`, `discard T`, `scalar x`,
//! a declared generator name, or a parenthesized expression. Types are register names,
//! `I`, or parenthesized products; `C<n>` and `Q<n>` need no declaration.

use std::collections::BTreeMap;

use super::{implicit_register, Diagram, DiagramError, GenKind, Generator};
use crate::regcalc::Register;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    Semi,
    Star,
    LParen,
    RParen,
    Colon,
    Arrow,
    Eq,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &["reg", "box", "hole", "id", "swap", "spider", "uniform", "discard", "scalar", "classical", "quantum", "causal", "I"];

fn lex_line(text: &str, line: usize, errs: &mut Vec<ParseError>) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        let col = i + 1;
        let single = match ch {
            '#' => break,
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            ';' => Some(Tok::Semi),
            '*' => Some(Tok::Star),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, line, col });
            i += 1;
        } else if ch == '-' && chars.get(i + 1) == Some(&'>') {
            out.push(Token { tok: Tok::Arrow, line, col });
            i += 2;
        } else if ch.is_ascii_alphabetic() || ch == '_' || ch == '?' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '?' | '\'')) {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '.' | '/' | '-' | '+')) {
                if matches!(chars[i], '-' | '+') && !matches!(chars[i - 1], 'e' | 'E') {
                    break;
                }
                i += 1;
            }
            out.push(Token { tok: Tok::Num(chars[start..i].iter().collect()), line, col });
        } else {
            errs.push(ParseError { line, col, message: format!("unexpected character `{ch}`") });
            i += 1;
        }
    }
    out
}

#[derive(Clone, Debug)]
enum Ast {
    Seq(Box<Ast>, Box<Ast>, (usize, usize)),
    Par(Box<Ast>, Box<Ast>),
    Id(Vec<String>),
    Swap(Vec<String>, Vec<String>),
    Spider(String, usize, usize),
    Uniform(String, usize),
    Discard(Vec<String>),
    Scalar(f64),
    Named(String, (usize, usize)),
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    end: (usize, usize),
    registers: &'a BTreeMap<String, Register>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map_or(self.end, |t| (t.line, t.col))
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message: message.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> PResult<()> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn count(&mut self, what: &str) -> PResult<usize> {
        match self.peek() {
            Some(Tok::Num(s)) => match s.parse::<usize>() {
                Ok(n) => {
                    self.pos += 1;
                    Ok(n)
                }
                Err(_) => self.err(format!("expected a whole number for {what}")),
            },
            _ => self.err(format!("missing {what}")),
        }
    }

    fn reg_name(&mut self) -> PResult<String> {
        let (line, col) = self.here();
        let name = self.ident("a register name")?;
        if name == "I" {
            return Ok(name);
        }
        if !self.registers.contains_key(&name) && implicit_register(&name).is_none() {
            return Err(ParseError { line, col, message: format!("unknown register `{name}`") });
        }
        Ok(name)
    }

    /// `NAME | I | ( type )`
    fn type_atom(&mut self) -> PResult<Vec<String>> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let t = self.type_product()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(t);
        }
        let n = self.reg_name()?;
        Ok(if n == "I" { vec![] } else { vec![n] })
    }

    fn type_product(&mut self) -> PResult<Vec<String>> {
        let mut t = self.type_atom()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            t.extend(self.type_atom()?);
        }
        Ok(t)
    }

    fn single_reg(&mut self, what: &str) -> PResult<String> {
        let here = self.here();
        let t = self.type_atom()?;
        if t.len() != 1 {
            return Err(ParseError { line: here.0, col: here.1, message: format!("{what} needs exactly one register") });
        }
        Ok(t.into_iter().next().expect("one"))
    }

    fn expr(&mut self) -> PResult<Ast> {
        let mut lhs = self.par()?;
        while self.peek() == Some(&Tok::Semi) {
            let at = self.here();
            self.pos += 1;
            let rhs = self.par()?;
            lhs = Ast::Seq(Box::new(lhs), Box::new(rhs), at);
        }
        Ok(lhs)
    }

    fn par(&mut self) -> PResult<Ast> {
        let mut lhs = self.atom()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            let rhs = self.atom()?;
            lhs = Ast::Par(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> PResult<Ast> {
        let at = self.here();
        match self.bump() {
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(w)) => match w.as_str() {
                "id" => Ok(Ast::Id(self.type_atom()?)),
                "swap" => {
                    let a = self.type_atom()?;
                    let b = self.type_atom()?;
                    Ok(Ast::Swap(a, b))
                }
                "spider" => {
                    let r = self.single_reg("spider")?;
                    let kin = self.count("spider input count")?;
                    let kout = self.count("spider output count")?;
                    if kin + kout == 0 {
                        return Err(ParseError { line: at.0, col: at.1, message: "spider needs at least one leg".into() });
                    }
                    Ok(Ast::Spider(r, kin, kout))
                }
                "uniform" => {
                    let r = self.single_reg("uniform")?;
                    let k = self.count("uniform leg count")?;
                    if k == 0 {
                        return Err(ParseError { line: at.0, col: at.1, message: "uniform needs at least one leg".into() });
                    }
                    Ok(Ast::Uniform(r, k))
                }
                "discard" => Ok(Ast::Discard(self.type_atom()?)),
                "scalar" => {
                    let here = self.here();
                    let Some(Tok::Num(s)) = self.bump() else {
                        return Err(ParseError { line: here.0, col: here.1, message: "missing scalar value".into() });
                    };
                    let x = parse_number(&s).ok_or(ParseError { line: here.0, col: here.1, message: format!("bad number `{s}`") })?;
                    if !(0.0..=1.0).contains(&x) {
                        return Err(ParseError { line: here.0, col: here.1, message: format!("scalar {x} outside [0,1]") });
                    }
                    Ok(Ast::Scalar(x))
                }
                k if KEYWORDS.contains(&k) => Err(ParseError { line: at.0, col: at.1, message: format!("`{k}` cannot start an expression") }),
                _ => Ok(Ast::Named(w, at)),
            },
            Some(_) => Err(ParseError { line: at.0, col: at.1, message: "expected an expression".into() }),
            None => Err(ParseError { line: at.0, col: at.1, message: "unexpected end of input".into() }),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.parse().ok()?, b.parse().ok()?);
        return (b != 0.0).then(|| a / b);
    }
    s.parse().ok()
}

struct Decl {
    kind: GenKind,
    ins: Vec<String>,
    outs: Vec<String>,
    causal: bool,
}

/// Parse DSL text into a diagram, collecting positioned errors.
pub fn parse(text: &str) -> Result<Diagram, DiagramError> {
    let mut errs = Vec::new();
    let mut registers: BTreeMap<String, Register> = BTreeMap::new();
    let mut decls: BTreeMap<String, Decl> = BTreeMap::new();
    let mut expr_toks = Vec::new();
    let mut last = (1, 1);
    let mut lines = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let toks = lex_line(raw, ln + 1, &mut errs);
        last = (ln + 1, raw.chars().count() + 1);
        lines.push(toks);
    }
    // Register declarations first so that later lines may use them regardless of order.
    for toks in &lines {
        if let Some(Token { tok: Tok::Ident(w), .. }) = toks.first() {
            if w == "reg" {
                if let Err(e) = parse_reg(toks, &mut registers) {
                    errs.push(e);
                }
            }
        }
    }
    for toks in &lines {
        match toks.first() {
            None => {}
            Some(Token { tok: Tok::Ident(w), .. }) if w == "reg" => {}
            Some(Token { tok: Tok::Ident(w), .. }) if w == "box" || w == "hole" => {
                if let Err(e) = parse_decl(toks, &registers, &mut decls) {
                    errs.push(e);
                }
            }
            Some(_) => expr_toks.extend(toks.iter().cloned()),
        }
    }
    if !errs.is_empty() {
        return Err(DiagramError::Parse(errs));
    }
    if expr_toks.is_empty() {
        return Err(DiagramError::Parse(vec![ParseError { line: last.0, col: last.1, message: "no diagram expression".into() }]));
    }
    let mut p = Parser { toks: &expr_toks, pos: 0, end: last, registers: &registers };
    let ast = p.expr().map_err(|e| DiagramError::Parse(vec![e]))?;
    if p.pos < expr_toks.len() {
        return Err(DiagramError::Parse(vec![p.err::<()>("unexpected token after expression").unwrap_err()]));
    }
    let mut used = registers.clone();
    collect_implicit(&ast, &decls, &mut used);
    compile(&ast, &used, &decls).map_err(|e| DiagramError::Parse(vec![e]))
}

fn parse_reg(toks: &[Token], registers: &mut BTreeMap<String, Register>) -> PResult<()> {
    let empty = BTreeMap::new();
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 1, end, registers: &empty };
    let at = p.here();
    let name = p.ident("a register name")?;
    if KEYWORDS.contains(&name.as_str()) {
        return Err(ParseError { line: at.0, col: at.1, message: format!("`{name}` is reserved") });
    }
    p.expect(Tok::Eq, "`=`")?;
    let kind = p.ident("`classical` or `quantum`")?;
    let n = p.count("register dimension")?;
    if n == 0 {
        return Err(ParseError { line: at.0, col: at.1, message: "register dimension must be positive".into() });
    }
    let reg = match kind.as_str() {
        "classical" => Register::classical(n),
        "quantum" => Register::quantum(n),
        _ => return Err(ParseError { line: at.0, col: at.1, message: format!("unknown register kind `{kind}`") }),
    };
    if p.pos < toks.len() {
        return p.err("unexpected token after register declaration");
    }
    if let Some(imp) = implicit_register(&name) {
        if imp != reg {
            return Err(ParseError { line: at.0, col: at.1, message: format!("`{name}` is reserved for {imp}") });
        }
    }
    match registers.get(&name) {
        Some(r) if *r != reg => Err(ParseError { line: at.0, col: at.1, message: format!("register `{name}` redeclared") }),
        _ => {
            registers.insert(name, reg);
            Ok(())
        }
    }
}

fn parse_decl(toks: &[Token], registers: &BTreeMap<String, Register>, decls: &mut BTreeMap<String, Decl>) -> PResult<()> {
    let end = toks.last().map_or((1, 1), |t| (t.line, t.col + 1));
    let mut p = Parser { toks, pos: 0, end, registers };
    let kind = if p.ident("declaration")? == "box" { GenKind::Box } else { GenKind::Hole };
    let at = p.here();
    let name = p.ident("a generator name")?;
    if KEYWORDS.contains(&name.as_str()) {
        return Err(ParseError { line: at.0, col: at.1, message: format!("`{name}` is reserved") });
    }
    p.expect(Tok::Colon, "`:`")?;
    let ins = p.type_product()?;
    p.expect(Tok::Arrow, "`->`")?;
    let outs = p.type_product()?;
    let mut causal = false;
    if let Some(Tok::Ident(w)) = p.peek() {
        if w == "causal" {
            causal = true;
            p.pos += 1;
        }
    }
    if p.pos < toks.len() {
        return p.err("unexpected token after declaration");
    }
    if decls.contains_key(&name) {
        return Err(ParseError { line: at.0, col: at.1, message: format!("`{name}` declared twice") });
    }
    decls.insert(name, Decl { kind, ins, outs, causal });
    Ok(())
}

fn collect_implicit(ast: &Ast, decls: &BTreeMap<String, Decl>, regs: &mut BTreeMap<String, Register>) {
    let mut add = |names: &[String]| {
        for n in names {
            if let Some(r) = implicit_register(n) {
                regs.entry(n.clone()).or_insert(r);
            }
        }
    };
    match ast {
        Ast::Seq(a, b, _) | Ast::Par(a, b) => {
            collect_implicit(a, decls, regs);
            collect_implicit(b, decls, regs);
        }
        Ast::Id(t) | Ast::Discard(t) => add(t),
        Ast::Swap(a, b) => {
            add(a);
            add(b);
        }
        Ast::Spider(r, ..) | Ast::Uniform(r, _) => add(std::slice::from_ref(r)),
        Ast::Scalar(_) => {}
        Ast::Named(n, _) => {
            if let Some(d) = decls.get(n) {
                add(&d.ins);
                add(&d.outs);
            }
        }
    }
}

fn compile(ast: &Ast, regs: &BTreeMap<String, Register>, decls: &BTreeMap<String, Decl>) -> PResult<Diagram> {
    let r = || regs.clone();
    Ok(match ast {
        Ast::Seq(a, b, (line, col)) => {
            let (da, db) = (compile(a, regs, decls)?, compile(b, regs, decls)?);
            da.then(&db).map_err(|e| ParseError {
                line: *line,
                col: *col,
                message: match e {
                    DiagramError::Type(v) => v.join("; "),
                    other => other.to_string(),
                },
            })?
        }
        Ast::Par(a, b) => {
            let (da, db) = (compile(a, regs, decls)?, compile(b, regs, decls)?);
            da.beside(&db).expect("registers come from one table")
        }
        Ast::Id(t) => Diagram::identity(r(), t.clone()),
        Ast::Swap(a, b) => {
            let types: Vec<String> = a.iter().chain(b).cloned().collect();
            let perm: Vec<usize> = (a.len()..types.len()).chain(0..a.len()).collect();
            Diagram::permutation(r(), types, &perm)
        }
        Ast::Spider(reg, kin, kout) => Diagram::single(r(), Generator::spider(reg, *kin, *kout)),
        Ast::Uniform(reg, k) => Diagram::single(r(), Generator::uniform(reg, *k)),
        Ast::Discard(t) => t.iter().fold(Diagram::identity(r(), vec![]), |acc, reg| {
            acc.beside(&Diagram::single(r(), Generator::discard(reg))).expect("same table")
        }),
        Ast::Scalar(x) => Diagram::single(r(), Generator::scalar(*x)),
        Ast::Named(n, (line, col)) => {
            let d = decls.get(n).ok_or(ParseError { line: *line, col: *col, message: format!("unknown generator `{n}`") })?;
            let g = if d.kind == GenKind::Box {
                Generator::boxed(n, d.ins.clone(), d.outs.clone(), d.causal)
            } else {
                Generator::hole(n, d.ins.clone(), d.outs.clone(), d.causal)
            };
            Diagram::single(r(), g)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{Source, Target};

    #[test]
    fn parses_uniform_with_discard() {
        let d = parse("uniform C2 2 ; (discard C2 * id C2)").unwrap();
        assert_eq!(d.nodes.len(), 2);
        assert_eq!(d.inputs.len(), 0);
        assert_eq!(d.outputs, vec!["C2".to_string()]);
        assert_eq!(d.source_of(Target::Port(1, 0)), Some(Source::Port(0, 0)));
        assert_eq!(d.source_of(Target::Output(0)), Some(Source::Port(0, 1)));
    }

    #[test]
    fn positioned_type_error() {
        let err = parse("uniform C2 1 ;\n  discard C3").unwrap_err();
        let DiagramError::Parse(v) = err else { panic!() };
        assert_eq!((v[0].line, v[0].col), (1, 14));
        assert!(v[0].message.contains("C2"));
    }

    #[test]
    fn missing_arity_is_an_error() {
        let DiagramError::Parse(v) = parse("spider C2 1").unwrap_err() else { panic!() };
        assert!(v[0].message.contains("spider output count"), "{:?}", v);
    }

    #[test]
    fn declarations_and_comments() {
        let text = "# device\nreg D = quantum 2\nhole R : C2*D -> C4*D causal\n(uniform C2 1 * id D) ; R # run";
        let d = parse(text).unwrap();
        assert_eq!(d.registers["D"], Register::quantum(2));
        let g = &d.nodes[&1];
        assert!(g.kind == GenKind::Hole && g.causal);
        assert_eq!(d.outputs, vec!["C4".to_string(), "D".to_string()]);
    }

    #[test]
    fn several_declaration_errors_are_collected() {
        let DiagramError::Parse(v) = parse("reg A = classic 2\nbox f : Z -> A\nid I").unwrap_err() else { panic!() };
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn swap_and_identity_are_wiring() {
        let d = parse("swap C2 C3 ; (id C3 * discard C2)").unwrap();
        assert_eq!(d.nodes.len(), 1);
        assert_eq!(d.source_of(Target::Port(0, 0)), Some(Source::Input(0)));
        assert_eq!(d.source_of(Target::Output(0)), Some(Source::Input(1)));
    }

    #[test]
    fn scalar_fraction_and_range() {
        let d = parse("scalar 1/4").unwrap();
        assert_eq!(d.nodes[&0].scalar, Some(0.25));
        assert!(parse("scalar 1.5").is_err());
    }
}
