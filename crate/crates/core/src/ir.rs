//! A small textual intermediate representation for decompiled Android apps.
//!
//! ```text
//! app elite
//!
//! component com.elite.SMSReceiver kind=receiver {
//!   lifecycle onReceive
//! }
//!
//! method com.elite.SMSReceiver.onReceive(context, intent) {
//!   body = call android.telephony.SmsMessage.getMessageBody(intent)
//!   call android.util.Log.i(body)
//! }
//! ```
//!
//! Statements are one per line: `x = y`, `x = y.f`, `x.f = y`,
//! `x = call SIG(a, ...)`, `call SIG(a, ...)` and `return [x]`. Every method
//! has an implicit `this` local. A callee naming a method declared in the
//! same file is a local call; anything else is an opaque API signature.
//! `#` starts a comment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The implicit receiver local available in every method.
pub const THIS: &str = "this";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
}

impl ComponentKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "activity" => Some(Self::Activity),
            "service" => Some(Self::Service),
            "receiver" => Some(Self::Receiver),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Activity => "activity",
            Self::Service => "service",
            Self::Receiver => "receiver",
        }
    }
}

/// Lifecycle entry points in the order the framework invokes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Lifecycle {
    #[serde(rename = "onCreate")]
    OnCreate,
    #[serde(rename = "onStart")]
    OnStart,
    #[serde(rename = "onResume")]
    OnResume,
    #[serde(rename = "onPause")]
    OnPause,
    #[serde(rename = "onStop")]
    OnStop,
    #[serde(rename = "onDestroy")]
    OnDestroy,
    #[serde(rename = "onReceive")]
    OnReceive,
}

impl Lifecycle {
    pub const ALL: [Lifecycle; 7] = [
        Lifecycle::OnCreate,
        Lifecycle::OnStart,
        Lifecycle::OnResume,
        Lifecycle::OnPause,
        Lifecycle::OnStop,
        Lifecycle::OnDestroy,
        Lifecycle::OnReceive,
    ];

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }

    pub fn name(self) -> &'static str {
        match self {
            Lifecycle::OnCreate => "onCreate",
            Lifecycle::OnStart => "onStart",
            Lifecycle::OnResume => "onResume",
            Lifecycle::OnPause => "onPause",
            Lifecycle::OnStop => "onStop",
            Lifecycle::OnDestroy => "onDestroy",
            Lifecycle::OnReceive => "onReceive",
        }
    }

    /// Whether the method runs before the callback loop.
    pub fn is_prefix(self) -> bool {
        matches!(
            self,
            Lifecycle::OnCreate | Lifecycle::OnStart | Lifecycle::OnResume
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    /// Present lifecycle methods, kept in framework order.
    pub lifecycle: Vec<Lifecycle>,
    pub callbacks: BTreeSet<String>,
}

impl Component {
    pub fn method_name(&self, simple: &str) -> String {
        format!("{}.{}", self.name, simple)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Copy {
        dst: String,
        src: String,
    },
    LoadField {
        dst: String,
        base: String,
        field: String,
    },
    StoreField {
        base: String,
        field: String,
        src: String,
    },
    Invoke {
        dst: Option<String>,
        callee: String,
        args: Vec<String>,
    },
    Return(Option<String>),
}

impl Statement {
    /// The local written by this statement, if any.
    pub fn defined_local(&self) -> Option<&str> {
        match self {
            Statement::Copy { dst, .. } | Statement::LoadField { dst, .. } => Some(dst),
            Statement::Invoke { dst, .. } => dst.as_deref(),
            _ => None,
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Copy { dst, src } => write!(f, "{dst} = {src}"),
            Statement::LoadField { dst, base, field } => write!(f, "{dst} = {base}.{field}"),
            Statement::StoreField { base, field, src } => write!(f, "{base}.{field} = {src}"),
            Statement::Invoke { dst, callee, args } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                write!(f, "call {callee}({})", args.join(", "))
            }
            Statement::Return(None) => f.write_str("return"),
            Statement::Return(Some(x)) => write!(f, "return {x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodBody {
    pub params: Vec<String>,
    pub statements: Vec<Statement>,
}

/// Identifies one statement: the qualified method name plus its index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StmtId {
    pub method: String,
    pub index: usize,
}

impl StmtId {
    pub fn new(method: impl Into<String>, index: usize) -> Self {
        Self {
            method: method.into(),
            index,
        }
    }
}

impl fmt::Display for StmtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.method, self.index)
    }
}

impl std::str::FromStr for StmtId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, i) = s
            .rsplit_once('@')
            .ok_or_else(|| format!("statement id `{s}` lacks `@index`"))?;
        let index = i
            .parse()
            .map_err(|_| format!("statement id `{s}` has a bad index"))?;
        Ok(StmtId::new(m, index))
    }
}

impl Serialize for StmtId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StmtId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Class part of a qualified method name (`a.b.C.m` gives `a.b.C`).
pub fn declaring_class(method: &str) -> &str {
    method.rsplit_once('.').map_or(method, |(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppModel {
    pub app_name: String,
    pub components: Vec<Component>,
    pub methods: BTreeMap<String, MethodBody>,
}

impl AppModel {
    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name == name)
    }

    pub fn statement(&self, id: &StmtId) -> Option<&Statement> {
        self.methods.get(&id.method)?.statements.get(id.index)
    }

    pub fn is_local_method(&self, callee: &str) -> bool {
        self.methods.contains_key(callee)
    }

    /// Canonical text form; parsing it yields an equal model.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "app {}", self.app_name);
        for c in &self.components {
            out.push('\n');
            let _ = writeln!(out, "component {} kind={} {{", c.name, c.kind.as_str());
            for l in &c.lifecycle {
                let _ = writeln!(out, "  lifecycle {}", l.name());
            }
            for cb in &c.callbacks {
                let _ = writeln!(out, "  callback {cb}");
            }
            out.push_str("}\n");
        }
        for (name, body) in &self.methods {
            out.push('\n');
            let _ = writeln!(out, "method {name}({}) {{", body.params.join(", "));
            for s in &body.statements {
                let _ = writeln!(out, "  {s}");
            }
            out.push_str("}\n");
        }
        out
    }
}

impl fmt::Display for AppModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.emit())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: duplicate component `{name}`")]
    DuplicateComponent { line: usize, col: usize, name: String },
    #[error("{line}:{col}: duplicate method `{name}`")]
    DuplicateMethod { line: usize, col: usize, name: String },
    #[error("{line}:{col}: component references undefined method `{name}`")]
    UndefinedMethodReference { line: usize, col: usize, name: String },
    #[error("{line}:{col}: local `{name}` used before it is assigned")]
    UndeclaredLocal { line: usize, col: usize, name: String },
    #[error("{line}:{col}: `{callee}` takes {expected} argument(s), {found} given")]
    ArityMismatch {
        line: usize,
        col: usize,
        callee: String,
        expected: usize,
        found: usize,
    },
}

impl IrError {
    fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        IrError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    pub fn position(&self) -> (usize, usize) {
        match *self {
            IrError::Syntax { line, col, .. }
            | IrError::DuplicateComponent { line, col, .. }
            | IrError::DuplicateMethod { line, col, .. }
            | IrError::UndefinedMethodReference { line, col, .. }
            | IrError::UndeclaredLocal { line, col, .. }
            | IrError::ArityMismatch { line, col, .. } => (line, col),
        }
    }
}

/// Parses raw bytes, rejecting invalid UTF-8 as a syntax error.
pub fn parse_app_bytes(bytes: &[u8]) -> Result<AppModel, IrError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_app(text),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = 1 + prefix.iter().filter(|b| **b == b'\n').count();
            let col = 1 + prefix.iter().rev().take_while(|b| **b != b'\n').count();
            Err(IrError::syntax(line, col, "invalid UTF-8"))
        }
    }
}

pub fn parse_app(text: &str) -> Result<AppModel, IrError> {
    Parser::new(text).parse()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'a> {
    Word(&'a str),
    Punct(char),
}

#[derive(Debug, Clone)]
struct Token<'a> {
    tok: Tok<'a>,
    col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '$' | '.')
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token<'_>>, IrError> {
    let mut out = Vec::new();
    let mut chars = line.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        let col = line[..start].chars().count() + 1;
        if c == '#' {
            break;
        } else if c.is_whitespace() {
            chars.next();
        } else if matches!(c, '=' | '(' | ')' | ',' | '{' | '}') {
            chars.next();
            out.push(Token {
                tok: Tok::Punct(c),
                col,
            });
        } else if is_word_char(c) {
            let mut end = start;
            while let Some(&(i, c)) = chars.peek() {
                if !is_word_char(c) {
                    break;
                }
                end = i + c.len_utf8();
                chars.next();
            }
            out.push(Token {
                tok: Tok::Word(&line[start..end]),
                col,
            });
        } else {
            return Err(IrError::syntax(
                line_no,
                col,
                format!("unexpected character `{c}`"),
            ));
        }
    }
    Ok(out)
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "call" | "return" | "app" | "method" | "component")
}

fn is_qualified(s: &str) -> bool {
    !s.starts_with('.')
        && !s.ends_with('.')
        && !s.contains("..")
        && s.split('.').all(|seg| {
            !seg.is_empty()
                && seg
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
        })
}

struct Line<'a> {
    no: usize,
    toks: Vec<Token<'a>>,
}

struct PendingRef {
    line: usize,
    col: usize,
    method: String,
}

struct Parser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect(),
            pos: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<Line<'a>>, IrError> {
        while self.pos < self.lines.len() {
            let (no, text) = self.lines[self.pos];
            self.pos += 1;
            let toks = tokenize(text, no)?;
            if !toks.is_empty() {
                return Ok(Some(Line { no, toks }));
            }
        }
        Ok(None)
    }

    fn eof_pos(&self) -> (usize, usize) {
        (self.lines.len().max(1), 1)
    }

    fn parse(mut self) -> Result<AppModel, IrError> {
        let header = self.next_line()?.ok_or_else(|| {
            let (l, c) = self.eof_pos();
            IrError::syntax(l, c, "missing `app NAME` header")
        })?;
        let app_name = match header.toks.as_slice() {
            [Token {
                tok: Tok::Word("app"),
                ..
            }, Token {
                tok: Tok::Word(name),
                ..
            }] if is_qualified(name) => name.to_string(),
            [first, ..] => {
                return Err(IrError::syntax(
                    header.no,
                    first.col,
                    "expected `app NAME` header",
                ))
            }
            [] => unreachable!(),
        };

        let mut components: Vec<Component> = Vec::new();
        let mut refs: Vec<PendingRef> = Vec::new();
        // (line, col, body) per method, kept for the second validation pass.
        let mut raw_methods: BTreeMap<String, (usize, usize, RawMethod)> = BTreeMap::new();

        while let Some(line) = self.next_line()? {
            match line.toks.first().map(|t| &t.tok) {
                Some(Tok::Word("component")) => {
                    let (comp, mut r) = self.parse_component(&line)?;
                    if components.iter().any(|c| c.name == comp.name) {
                        return Err(IrError::DuplicateComponent {
                            line: line.no,
                            col: line.toks[1].col,
                            name: comp.name,
                        });
                    }
                    components.push(comp);
                    refs.append(&mut r);
                }
                Some(Tok::Word("method")) => {
                    let (name, raw) = self.parse_method(&line)?;
                    let col = line.toks[1].col;
                    if raw_methods.contains_key(&name) {
                        return Err(IrError::DuplicateMethod {
                            line: line.no,
                            col,
                            name,
                        });
                    }
                    raw_methods.insert(name, (line.no, col, raw));
                }
                _ => {
                    return Err(IrError::syntax(
                        line.no,
                        line.toks[0].col,
                        "expected `component` or `method`",
                    ))
                }
            }
        }

        for r in &refs {
            if !raw_methods.contains_key(&r.method) {
                return Err(IrError::UndefinedMethodReference {
                    line: r.line,
                    col: r.col,
                    name: r.method.clone(),
                });
            }
        }

        let arity: BTreeMap<&str, usize> = raw_methods
            .iter()
            .map(|(n, (_, _, m))| (n.as_str(), m.params.len()))
            .collect();
        let mut methods = BTreeMap::new();
        for (name, (_, _, raw)) in &raw_methods {
            let mut defined: BTreeSet<&str> = raw.params.iter().map(String::as_str).collect();
            defined.insert(THIS);
            for (stmt, pos) in raw.statements.iter().zip(&raw.positions) {
                check_uses(pos, &defined)?;
                if let Statement::Invoke { callee, args, .. } = stmt {
                    if let Some(&expected) = arity.get(callee.as_str()) {
                        if expected != args.len() {
                            return Err(IrError::ArityMismatch {
                                line: pos.line,
                                col: pos.col,
                                callee: callee.clone(),
                                expected,
                                found: args.len(),
                            });
                        }
                    }
                }
                if let Some(d) = stmt.defined_local() {
                    defined.insert(d);
                }
            }
            methods.insert(
                name.clone(),
                MethodBody {
                    params: raw.params.clone(),
                    statements: raw.statements.clone(),
                },
            );
        }

        Ok(AppModel {
            app_name,
            components,
            methods,
        })
    }

    fn parse_component(&mut self, line: &Line<'a>) -> Result<(Component, Vec<PendingRef>), IrError> {
        let t = &line.toks;
        let err = |col: usize, msg: &str| IrError::syntax(line.no, col, msg);
        let name = match t.get(1) {
            Some(Token {
                tok: Tok::Word(n), ..
            }) if is_qualified(n) => n.to_string(),
            Some(tok) => return Err(err(tok.col, "expected component class name")),
            None => return Err(err(t[0].col, "expected component class name")),
        };
        let kind = match (t.get(2), t.get(3), t.get(4)) {
            (
                Some(Token {
                    tok: Tok::Word("kind"),
                    ..
                }),
                Some(Token {
                    tok: Tok::Punct('='),
                    ..
                }),
                Some(Token {
                    tok: Tok::Word(k),
                    col,
                }),
            ) => ComponentKind::parse(k)
                .ok_or_else(|| err(*col, "kind must be activity, service or receiver"))?,
            _ => {
                let col = t.get(2).map_or(t[1].col, |t| t.col);
                return Err(err(col, "expected `kind=KIND`"));
            }
        };
        let has_block = match t.get(5) {
            None => false,
            Some(Token {
                tok: Tok::Punct('{'),
                ..
            }) if t.len() == 6 => true,
            Some(tok) => return Err(err(tok.col, "expected `{` or end of line")),
        };

        let mut comp = Component {
            name,
            kind,
            lifecycle: Vec::new(),
            callbacks: BTreeSet::new(),
        };
        let mut refs = Vec::new();
        if !has_block {
            return Ok((comp, refs));
        }
        loop {
            let Some(l) = self.next_line()? else {
                let (ln, c) = self.eof_pos();
                return Err(IrError::syntax(ln, c, "unterminated component block"));
            };
            match l.toks.as_slice() {
                [Token {
                    tok: Tok::Punct('}'),
                    ..
                }] => break,
                [Token {
                    tok: Tok::Word(what @ ("lifecycle" | "callback")),
                    ..
                }, Token {
                    tok: Tok::Word(m),
                    col,
                }] => {
                    let col = *col;
                    if *what == "lifecycle" {
                        let lc = Lifecycle::from_name(m).ok_or_else(|| {
                            IrError::syntax(l.no, col, format!("`{m}` is not a lifecycle method"))
                        })?;
                        let allowed = match comp.kind {
                            ComponentKind::Receiver => lc == Lifecycle::OnReceive,
                            _ => lc != Lifecycle::OnReceive,
                        };
                        if !allowed {
                            return Err(IrError::syntax(
                                l.no,
                                col,
                                format!("`{m}` is not valid for a {}", comp.kind.as_str()),
                            ));
                        }
                        if comp.lifecycle.contains(&lc) {
                            return Err(IrError::syntax(l.no, col, format!("duplicate `{m}`")));
                        }
                        comp.lifecycle.push(lc);
                    } else {
                        if !is_ident(m) || Lifecycle::from_name(m).is_some() {
                            return Err(IrError::syntax(l.no, col, "bad callback name"));
                        }
                        if !comp.callbacks.insert(m.to_string()) {
                            return Err(IrError::syntax(l.no, col, format!("duplicate `{m}`")));
                        }
                    }
                    refs.push(PendingRef {
                        line: l.no,
                        col,
                        method: comp.method_name(m),
                    });
                }
                toks => {
                    return Err(IrError::syntax(
                        l.no,
                        toks[0].col,
                        "expected `lifecycle NAME`, `callback NAME` or `}`",
                    ))
                }
            }
        }
        comp.lifecycle.sort();
        Ok((comp, refs))
    }

    fn parse_method(&mut self, line: &Line<'a>) -> Result<(String, RawMethod), IrError> {
        let t = &line.toks;
        let err = |col: usize, msg: &str| IrError::syntax(line.no, col, msg);
        let name = match t.get(1) {
            Some(Token {
                tok: Tok::Word(n), ..
            }) if is_qualified(n) && n.contains('.') => n.to_string(),
            Some(tok) => return Err(err(tok.col, "expected qualified method name")),
            None => return Err(err(t[0].col, "expected qualified method name")),
        };
        let (params, rest) = parse_arg_list(&t[2..], line.no, t[1].col)?;
        match rest {
            [Token {
                tok: Tok::Punct('{'),
                ..
            }] => {}
            [tok, ..] => return Err(err(tok.col, "expected `{`")),
            [] => return Err(err(t[t.len() - 1].col, "expected `{`")),
        }
        let mut seen = BTreeSet::new();
        for p in &params {
            if p == THIS || !seen.insert(p.as_str()) {
                return Err(err(t[1].col, &format!("bad parameter `{p}`")));
            }
        }

        let mut raw = RawMethod {
            params,
            statements: Vec::new(),
            positions: Vec::new(),
        };
        loop {
            let Some(l) = self.next_line()? else {
                let (ln, c) = self.eof_pos();
                return Err(IrError::syntax(ln, c, "unterminated method body"));
            };
            if let [Token {
                tok: Tok::Punct('}'),
                ..
            }] = l.toks.as_slice()
            {
                break;
            }
            let (stmt, pos) = parse_statement(&l)?;
            raw.statements.push(stmt);
            raw.positions.push(pos);
        }
        Ok((name, raw))
    }
}

struct RawMethod {
    params: Vec<String>,
    statements: Vec<Statement>,
    positions: Vec<StmtPos>,
}

/// Source positions of each local read by a statement.
struct StmtPos {
    line: usize,
    col: usize,
    uses: Vec<(String, usize)>,
}

fn check_uses(pos: &StmtPos, defined: &BTreeSet<&str>) -> Result<(), IrError> {
    for (name, col) in &pos.uses {
        if !defined.contains(name.as_str()) {
            return Err(IrError::UndeclaredLocal {
                line: pos.line,
                col: *col,
                name: name.clone(),
            });
        }
    }
    Ok(())
}

/// Parses `( a, b, ... )` and returns the names plus the remaining tokens.
fn parse_arg_list<'t, 'a>(
    toks: &'t [Token<'a>],
    line: usize,
    fallback_col: usize,
) -> Result<(Vec<String>, &'t [Token<'a>]), IrError> {
    let (names, rest) = parse_arg_list_with_cols(toks, line, fallback_col)?;
    Ok((names.into_iter().map(|(n, _)| n).collect(), rest))
}

type ParsedArgs<'t, 'a> = Result<(Vec<(String, usize)>, &'t [Token<'a>]), IrError>;

fn parse_arg_list_with_cols<'t, 'a>(
    toks: &'t [Token<'a>],
    line: usize,
    fallback_col: usize,
) -> ParsedArgs<'t, 'a> {
    let mut it = toks.iter().enumerate();
    match it.next() {
        Some((
            _,
            Token {
                tok: Tok::Punct('('),
                ..
            },
        )) => {}
        Some((_, tok)) => return Err(IrError::syntax(line, tok.col, "expected `(`")),
        None => return Err(IrError::syntax(line, fallback_col, "expected `(`")),
    }
    let mut names = Vec::new();
    let mut expect_name = true;
    for (i, tok) in it {
        match (&tok.tok, expect_name) {
            (Tok::Punct(')'), _) if names.is_empty() || !expect_name => {
                return Ok((names, &toks[i + 1..]));
            }
            (Tok::Word(w), true) if is_ident(w) => {
                names.push((w.to_string(), tok.col));
                expect_name = false;
            }
            (Tok::Punct(','), false) => expect_name = true,
            _ => return Err(IrError::syntax(line, tok.col, "malformed argument list")),
        }
    }
    let col = toks.last().map_or(fallback_col, |t| t.col);
    Err(IrError::syntax(line, col, "unclosed `(`"))
}

fn split_field(w: &str) -> Option<(&str, &str)> {
    let (base, field) = w.split_once('.')?;
    (is_ident(base) && is_ident(field)).then_some((base, field))
}

fn parse_call<'a>(
    toks: &[Token<'a>],
    line: usize,
    dst: Option<String>,
) -> Result<(Statement, Vec<(String, usize)>), IrError> {
    // toks[0] is `call`.
    let callee = match toks.get(1) {
        Some(Token {
            tok: Tok::Word(w), ..
        }) if is_qualified(w) => w.to_string(),
        Some(t) => return Err(IrError::syntax(line, t.col, "expected callee signature")),
        None => return Err(IrError::syntax(line, toks[0].col, "expected callee signature")),
    };
    let (args, rest) = parse_arg_list_with_cols(&toks[2..], line, toks[1].col)?;
    if let Some(t) = rest.first() {
        return Err(IrError::syntax(line, t.col, "trailing tokens after call"));
    }
    let uses = args.clone();
    Ok((
        Statement::Invoke {
            dst,
            callee,
            args: args.into_iter().map(|(a, _)| a).collect(),
        },
        uses,
    ))
}

fn parse_statement(l: &Line<'_>) -> Result<(Statement, StmtPos), IrError> {
    let t = l.toks.as_slice();
    let line = l.no;
    let col = t[0].col;
    let bad = |c: usize, m: &str| IrError::syntax(line, c, m);
    let (stmt, uses) = match t {
        [Token {
            tok: Tok::Word("return"),
            ..
        }] => (Statement::Return(None), vec![]),
        [Token {
            tok: Tok::Word("return"),
            ..
        }, Token {
            tok: Tok::Word(x),
            col: c,
        }] if is_ident(x) => (Statement::Return(Some(x.to_string())), vec![(x.to_string(), *c)]),
        [Token {
            tok: Tok::Word("call"),
            ..
        }, ..] => parse_call(t, line, None)?,
        [Token {
            tok: Tok::Word(lhs),
            col: lc,
        }, Token {
            tok: Tok::Punct('='),
            ..
        }, rest @ ..] => {
            if let Some((base, field)) = split_field(lhs) {
                match rest {
                    [Token {
                        tok: Tok::Word(src),
                        col: sc,
                    }] if is_ident(src) => (
                        Statement::StoreField {
                            base: base.to_string(),
                            field: field.to_string(),
                            src: src.to_string(),
                        },
                        vec![(base.to_string(), *lc), (src.to_string(), *sc)],
                    ),
                    _ => return Err(bad(*lc, "field store needs a plain local on the right")),
                }
            } else if is_ident(lhs) && *lhs != THIS {
                let dst = lhs.to_string();
                match rest {
                    [Token {
                        tok: Tok::Word("call"),
                        ..
                    }, ..] => parse_call(rest, line, Some(dst))?,
                    [Token {
                        tok: Tok::Word(rhs),
                        col: rc,
                    }] => {
                        if let Some((base, field)) = split_field(rhs) {
                            (
                                Statement::LoadField {
                                    dst,
                                    base: base.to_string(),
                                    field: field.to_string(),
                                },
                                vec![(base.to_string(), *rc)],
                            )
                        } else if is_ident(rhs) {
                            (
                                Statement::Copy {
                                    dst,
                                    src: rhs.to_string(),
                                },
                                vec![(rhs.to_string(), *rc)],
                            )
                        } else {
                            return Err(bad(*rc, "expected `local` or `local.field`"));
                        }
                    }
                    [t, ..] => return Err(bad(t.col, "expected expression after `=`")),
                    [] => return Err(bad(*lc, "expected expression after `=`")),
                }
            } else {
                return Err(bad(*lc, "invalid assignment target"));
            }
        }
        _ => return Err(bad(col, "unrecognized statement")),
    };
    Ok((stmt, StmtPos { line, col, uses }))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "app elite\ncomponent com.elite.SMSReceiver kind=receiver {\n  lifecycle onReceive\n}\nmethod com.elite.SMSReceiver.onReceive() {\n}\n";

    #[test]
    fn empty_file_is_syntax_error() {
        let err = parse_app("").unwrap_err();
        assert!(matches!(err, IrError::Syntax { line: 1, col: 1, .. }), "{err:?}");
        assert!(matches!(
            parse_app("  # nothing\n\n").unwrap_err(),
            IrError::Syntax { .. }
        ));
    }

    #[test]
    fn minimal_program() {
        let app = parse_app(MINIMAL).unwrap();
        assert_eq!(app.app_name, "elite");
        assert_eq!(app.components.len(), 1);
        assert_eq!(app.methods.len(), 1);
        assert_eq!(app.components[0].kind, ComponentKind::Receiver);
        assert_eq!(app.components[0].lifecycle, vec![Lifecycle::OnReceive]);
    }

    #[test]
    fn statements_parse() {
        let src = "app t\nmethod a.B.m(p) {\n  x = call src.Api.get()\n  y = x\n  z = y.f\n  p.g = z  # trailing comment\n  call a.B.n(y, z)\n  return x\n}\nmethod a.B.n(u, v) {\n  return\n}\n";
        let app = parse_app(src).unwrap();
        let m = &app.methods["a.B.m"];
        assert_eq!(m.statements.len(), 6);
        assert_eq!(
            m.statements[2],
            Statement::LoadField {
                dst: "z".into(),
                base: "y".into(),
                field: "f".into()
            }
        );
        assert_eq!(m.statements[4].to_string(), "call a.B.n(y, z)");
    }

    #[test]
    fn undeclared_local_reports_position() {
        let err = parse_app("app t\nmethod a.B.m() {\n  x = y\n}\n").unwrap_err();
        assert_eq!(
            err,
            IrError::UndeclaredLocal {
                line: 3,
                col: 7,
                name: "y".into()
            }
        );
        // a local defined later does not count
        assert!(parse_app("app t\nmethod a.B.m() {\n  call x.Y.z(q)\n  q = this\n}\n").is_err());
        // `this` and params are always in scope
        assert!(parse_app("app t\nmethod a.B.m(p) {\n  this.f = p\n}\n").is_ok());
    }

    #[test]
    fn duplicate_component() {
        let src = "app t\ncomponent a.A kind=activity\ncomponent a.A kind=service\n";
        assert!(matches!(
            parse_app(src).unwrap_err(),
            IrError::DuplicateComponent { line: 3, .. }
        ));
    }

    #[test]
    fn undefined_method_reference() {
        let src = "app t\ncomponent a.A kind=activity {\n  lifecycle onCreate\n  callback onClick\n}\nmethod a.A.onCreate() {\n}\n";
        assert_eq!(
            parse_app(src).unwrap_err(),
            IrError::UndefinedMethodReference {
                line: 4,
                col: 12,
                name: "a.A.onClick".into()
            }
        );
    }

    #[test]
    fn receivers_only_have_on_receive() {
        let src = "app t\ncomponent a.R kind=receiver {\n  lifecycle onCreate\n}\n";
        assert!(matches!(parse_app(src).unwrap_err(), IrError::Syntax { line: 3, .. }));
        let src = "app t\ncomponent a.A kind=activity {\n  lifecycle onReceive\n}\n";
        assert!(matches!(parse_app(src).unwrap_err(), IrError::Syntax { line: 3, .. }));
    }

    #[test]
    fn lifecycle_is_kept_in_framework_order() {
        let src = "app t\ncomponent a.A kind=activity {\n  lifecycle onStop\n  lifecycle onCreate\n}\nmethod a.A.onCreate() {\n}\nmethod a.A.onStop() {\n}\n";
        let app = parse_app(src).unwrap();
        assert_eq!(
            app.components[0].lifecycle,
            vec![Lifecycle::OnCreate, Lifecycle::OnStop]
        );
    }

    #[test]
    fn local_call_arity_checked() {
        let src = "app t\nmethod a.B.m() {\n  call a.B.n(this)\n}\nmethod a.B.n() {\n}\n";
        assert!(matches!(
            parse_app(src).unwrap_err(),
            IrError::ArityMismatch {
                expected: 0,
                found: 1,
                ..
            }
        ));
    }

    #[test]
    fn bad_characters_and_utf8() {
        assert!(matches!(
            parse_app("app t\nmethod a.B.m() {\n  x = \"s\"\n}\n").unwrap_err(),
            IrError::Syntax { line: 3, col: 7, .. }
        ));
        assert!(matches!(
            parse_app_bytes(b"app t\n\xff").unwrap_err(),
            IrError::Syntax { line: 2, col: 1, .. }
        ));
    }

    #[test]
    fn emit_is_canonical() {
        let app = parse_app(MINIMAL).unwrap();
        let text = app.emit();
        assert_eq!(parse_app(&text).unwrap(), app);
        assert_eq!(parse_app(&text).unwrap().emit(), text);
    }

    #[test]
    fn stmt_id_round_trip() {
        let id = StmtId::new("com.elite.SMSReceiver.onReceive", 3);
        assert_eq!(id.to_string(), "com.elite.SMSReceiver.onReceive@3");
        assert_eq!(id.to_string().parse::<StmtId>().unwrap(), id);
        assert_eq!(declaring_class(&id.method), "com.elite.SMSReceiver");
    }
}
