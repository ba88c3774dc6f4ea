//! Structural model of a Verilog design.
//!
//! Only what the closure loop needs is recovered: module regions, top-level
//! port declarations, the instantiation hierarchy and line counts. The
//! accepted subset is Verilog-2005 module headers (ANSI and non-ANSI),
//! constant packed ranges and plain module instantiation.

mod expr;
mod lexer;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use expr::Env;
use lexer::{TokKind, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HdlError {
    #[error("no source files given")]
    NoFiles,
    #[error("no `module ... endmodule` region found")]
    NoModulesFound,
    #[error("module `{name}` is defined twice ({first} and {second})")]
    DuplicateModuleName {
        name: String,
        first: String,
        second: String,
    },
    #[error("{file}:{line}: unbalanced module delimiters: {detail}")]
    UnbalancedModuleDelimiters {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("{file}:{line}: {detail}")]
    Syntax {
        file: String,
        line: usize,
        detail: String,
    },
    #[error("module `{module}`: unsupported port syntax: {detail}")]
    UnsupportedPortSyntax { module: String, detail: String },
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("instantiation cycle: {}", .0.join(" -> "))]
    InstantiationCycle(Vec<String>),
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortRole {
    Clock,
    Reset,
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortDecl {
    pub name: String,
    pub direction: Direction,
    pub width_bits: u32,
    pub packed_range: Option<(i64, i64)>,
    pub role_hint: PortRole,
}

impl PortDecl {
    /// Builds a port, deriving the width from the range and the role from the name.
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        packed_range: Option<(i64, i64)>,
    ) -> Self {
        let name = name.into();
        let width_bits = packed_range.map_or(1, |(msb, lsb)| (msb - lsb).unsigned_abs() as u32 + 1);
        let role_hint = role_for_name(&name);
        PortDecl {
            name,
            direction,
            width_bits,
            packed_range,
            role_hint,
        }
    }

    /// Range text as written in a declaration, e.g. `[7:0] `; empty for scalars.
    pub fn range_text(&self) -> String {
        match self.packed_range {
            Some((msb, lsb)) => format!("[{msb}:{lsb}] "),
            None => String::new(),
        }
    }
}

/// clk/clock → clock; rst/reset (incl. `_n`/`n` active-low forms) → reset.
pub fn role_for_name(name: &str) -> PortRole {
    let lower = name.to_ascii_lowercase();
    let segments: Vec<&str> = lower.split('_').filter(|s| !s.is_empty()).collect();
    let any = |set: &[&str]| segments.iter().any(|s| set.contains(s));
    if any(&["clk", "clock", "clk0", "clki", "clkin"]) {
        PortRole::Clock
    } else if any(&["rst", "reset", "rstn", "resetn", "rstb", "nrst", "nreset"]) {
        PortRole::Reset
    } else {
        PortRole::Data
    }
}

/// Whether a reset-role port name denotes an active-low reset.
pub fn is_active_low(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    lower.ends_with("_n")
        || lower.ends_with("_ni")
        || lower.ends_with("_b")
        || lower.ends_with("rstn")
        || lower.ends_with("resetn")
        || lower.starts_with("nrst")
        || lower.starts_with("nreset")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub file: PathBuf,
    pub start_line: usize,
    pub end_line: usize,
    #[serde(skip)]
    file_index: usize,
    #[serde(skip)]
    byte_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleInfo {
    pub name: String,
    pub ports: Vec<PortDecl>,
    /// Set when the header uses syntax outside the supported subset.
    pub port_error: Option<String>,
    pub line_count: usize,
    pub instantiated_modules: Vec<String>,
    pub source_span: SourceSpan,
}

impl ModuleInfo {
    /// Exact text from the `module` keyword through `endmodule`.
    pub fn text<'m>(&self, model: &'m DesignModel) -> &'m str {
        let (a, b) = self.source_span.byte_range;
        &model.files[self.source_span.file_index].text[a..b]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: PathBuf,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignModel {
    pub modules: BTreeMap<String, ModuleInfo>,
    pub top: String,
    pub hierarchy_depth: usize,
    pub total_lines: usize,
    pub spec_text: String,
    files: Vec<SourceFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DifficultyLabel {
    Easy,
    Medium,
    Hard,
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DifficultyLabel::Easy => "Easy",
            DifficultyLabel::Medium => "Medium",
            DifficultyLabel::Hard => "Hard",
        })
    }
}

/// Hard if lines ≥ 450 or depth ≥ 3; Medium if 150 ≤ lines < 450 or depth = 2; else Easy.
pub fn classify_difficulty(total_lines: usize, hierarchy_depth: usize) -> DifficultyLabel {
    if total_lines >= 450 || hierarchy_depth >= 3 {
        DifficultyLabel::Hard
    } else if (150..450).contains(&total_lines) || hierarchy_depth == 2 {
        DifficultyLabel::Medium
    } else {
        DifficultyLabel::Easy
    }
}

/// A contiguous run of whole source lines carrying their absolute numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberedSource {
    pub file: PathBuf,
    pub first_line: usize,
    pub text: String,
}

impl NumberedSource {
    pub fn new(file: impl Into<PathBuf>, first_line: usize, text: impl Into<String>) -> Self {
        NumberedSource {
            file: file.into(),
            first_line,
            text: text.into(),
        }
    }

    pub fn last_line(&self) -> usize {
        self.first_line + self.text.lines().count().max(1) - 1
    }

    /// `(absolute line number, line text)` pairs.
    pub fn numbered_lines(&self) -> impl Iterator<Item = (usize, &str)> {
        self.text
            .lines()
            .enumerate()
            .map(move |(i, l)| (self.first_line + i, l))
    }
}

impl fmt::Display for NumberedSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, line) in self.numbered_lines() {
            writeln!(f, "{n:>5} | {line}")?;
        }
        Ok(())
    }
}

/// Reads and parses the given files from disk.
pub fn load_sources<P: AsRef<Path>>(paths: &[P]) -> Result<DesignModel, HdlError> {
    let files = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            std::fs::read_to_string(p)
                .map(|text| (p.to_path_buf(), text))
                .map_err(|e| HdlError::Io {
                    path: p.display().to_string(),
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    parse_sources(files)
}

/// Parses every `module ... endmodule` region. The top is inferred as the
/// uninstantiated module with the deepest hierarchy; override with
/// [`DesignModel::with_top`].
pub fn parse_sources(files: Vec<(PathBuf, String)>) -> Result<DesignModel, HdlError> {
    if files.is_empty() {
        return Err(HdlError::NoFiles);
    }
    let files: Vec<SourceFile> = files
        .into_iter()
        .map(|(path, text)| SourceFile { path, text })
        .collect();
    let mut modules: BTreeMap<String, ModuleInfo> = BTreeMap::new();
    let mut order = Vec::new();

    for (idx, file) in files.iter().enumerate() {
        for info in parse_file(idx, file)? {
            if let Some(prev) = modules.get(&info.name) {
                return Err(HdlError::DuplicateModuleName {
                    name: info.name.clone(),
                    first: format!(
                        "{}:{}",
                        prev.source_span.file.display(),
                        prev.source_span.start_line
                    ),
                    second: format!(
                        "{}:{}",
                        info.source_span.file.display(),
                        info.source_span.start_line
                    ),
                });
            }
            order.push(info.name.clone());
            modules.insert(info.name.clone(), info);
        }
    }
    if modules.is_empty() {
        return Err(HdlError::NoModulesFound);
    }

    let instantiated: HashSet<&str> = modules
        .values()
        .flat_map(|m| m.instantiated_modules.iter().map(String::as_str))
        .filter(|n| modules.contains_key(*n))
        .collect();
    let roots: Vec<&String> = order
        .iter()
        .filter(|n| !instantiated.contains(n.as_str()))
        .collect();
    if roots.is_empty() {
        return Err(HdlError::InstantiationCycle(order));
    }
    let mut best: Option<(&String, usize)> = None;
    for root in roots {
        let depth = hierarchy_depth(&modules, root)?;
        if best.is_none_or(|(_, d)| depth > d) {
            best = Some((root, depth));
        }
    }
    let (top, hierarchy_depth) = best
        .map(|(t, d)| (t.clone(), d))
        .expect("at least one root");
    let total_lines = modules.values().map(|m| m.line_count).sum();
    Ok(DesignModel {
        modules,
        top,
        hierarchy_depth,
        total_lines,
        spec_text: String::new(),
        files,
    })
}

impl DesignModel {
    pub fn with_top(mut self, top: &str) -> Result<Self, HdlError> {
        if !self.modules.contains_key(top) {
            return Err(HdlError::UnknownModule(top.to_owned()));
        }
        self.hierarchy_depth = hierarchy_depth(&self.modules, top)?;
        self.top = top.to_owned();
        Ok(self)
    }

    pub fn with_spec(mut self, spec_text: impl Into<String>) -> Self {
        self.spec_text = spec_text.into();
        self
    }

    pub fn files(&self) -> &[SourceFile] {
        &self.files
    }

    pub fn top_module(&self) -> &ModuleInfo {
        &self.modules[&self.top]
    }

    pub fn difficulty(&self) -> DifficultyLabel {
        classify_difficulty(self.total_lines, self.hierarchy_depth)
    }

    /// The module whose span contains `line` of `file`.
    pub fn module_at(&self, file: &Path, line: usize) -> Option<&ModuleInfo> {
        let idx = self.file_index(file)?;
        self.modules.values().find(|m| {
            m.source_span.file_index == idx
                && (m.source_span.start_line..=m.source_span.end_line).contains(&line)
        })
    }

    /// Index of a source file, matching on the exact path first and the file name second.
    pub fn file_index(&self, file: &Path) -> Option<usize> {
        self.files.iter().position(|f| f.path == file).or_else(|| {
            let canon = file.canonicalize().ok();
            self.files
                .iter()
                .position(|f| canon.is_some() && f.path.canonicalize().ok() == canon)
        })
    }

    /// All design sources concatenated, each preceded by a file banner.
    pub fn design_code(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let name = f.path.file_name().map_or_else(
                || f.path.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            out.push_str(&format!("// ===== {name} =====\n"));
            out.push_str(&f.text);
            if !f.text.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

pub fn extract_top_ports(model: &DesignModel) -> Result<Vec<PortDecl>, HdlError> {
    let top = model
        .modules
        .get(&model.top)
        .ok_or_else(|| HdlError::UnknownModule(model.top.clone()))?;
    match &top.port_error {
        Some(detail) => Err(HdlError::UnsupportedPortSyntax {
            module: top.name.clone(),
            detail: detail.clone(),
        }),
        None => Ok(top.ports.clone()),
    }
}

/// Whole source lines of a module's definition, numbered as in its file.
pub fn module_source(model: &DesignModel, name: &str) -> Result<NumberedSource, HdlError> {
    let m = model
        .modules
        .get(name)
        .ok_or_else(|| HdlError::UnknownModule(name.to_owned()))?;
    let span = &m.source_span;
    let file = &model.files[span.file_index];
    let text: String = file
        .text
        .split_inclusive('\n')
        .skip(span.start_line - 1)
        .take(span.end_line - span.start_line + 1)
        .collect();
    Ok(NumberedSource {
        file: span.file.clone(),
        first_line: span.start_line,
        text,
    })
}

fn hierarchy_depth(modules: &BTreeMap<String, ModuleInfo>, top: &str) -> Result<usize, HdlError> {
    fn visit(
        modules: &BTreeMap<String, ModuleInfo>,
        name: &str,
        stack: &mut Vec<String>,
        memo: &mut HashMap<String, usize>,
    ) -> Result<usize, HdlError> {
        if let Some(d) = memo.get(name) {
            return Ok(*d);
        }
        if let Some(pos) = stack.iter().position(|s| s == name) {
            let mut cycle = stack[pos..].to_vec();
            cycle.push(name.to_owned());
            return Err(HdlError::InstantiationCycle(cycle));
        }
        stack.push(name.to_owned());
        let mut deepest = 0;
        for child in &modules[name].instantiated_modules {
            if modules.contains_key(child) {
                deepest = deepest.max(visit(modules, child, stack, memo)?);
            }
        }
        stack.pop();
        memo.insert(name.to_owned(), deepest + 1);
        Ok(deepest + 1)
    }
    visit(modules, top, &mut Vec::new(), &mut HashMap::new())
}

fn parse_file(file_index: usize, file: &SourceFile) -> Result<Vec<ModuleInfo>, HdlError> {
    let toks = lexer::tokenize(&file.text);
    let fname = file.path.display().to_string();
    let unbalanced = |line: usize, detail: &str| HdlError::UnbalancedModuleDelimiters {
        file: fname.clone(),
        line,
        detail: detail.to_owned(),
    };

    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut in_primitive = false;
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokKind::Ident {
            continue;
        }
        match t.text {
            "primitive" if open.is_none() => in_primitive = true,
            "endprimitive" => in_primitive = false,
            _ if in_primitive => {}
            "module" | "macromodule" => {
                if open.is_some() {
                    return Err(unbalanced(
                        t.line,
                        "`module` before the previous module's `endmodule`",
                    ));
                }
                open = Some(i);
            }
            "endmodule" => {
                let start = open
                    .take()
                    .ok_or_else(|| unbalanced(t.line, "`endmodule` without `module`"))?;
                out.push(parse_module(file_index, file, &toks[start..=i])?);
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        return Err(unbalanced(toks[start].line, "missing `endmodule`"));
    }
    Ok(out)
}

/// `toks` runs from the `module` keyword through `endmodule`.
fn parse_module(
    file_index: usize,
    file: &SourceFile,
    toks: &[Token<'_>],
) -> Result<ModuleInfo, HdlError> {
    let first = toks[0];
    let last = toks[toks.len() - 1];
    let syntax = |line: usize, detail: String| HdlError::Syntax {
        file: file.path.display().to_string(),
        line,
        detail,
    };

    let name_tok = toks
        .get(1)
        .filter(|t| t.kind == TokKind::Ident && !lexer::is_keyword(t.text));
    let name = name_tok
        .ok_or_else(|| syntax(first.line, "expected a module name".into()))?
        .text
        .to_owned();

    let mut i = 2;
    // SV package imports in the header
    while toks.get(i).is_some_and(|t| t.is("import")) {
        i = skip_past(toks, i, ";")
            .ok_or_else(|| syntax(first.line, "unterminated import".into()))?;
    }
    let mut param_toks: &[Token<'_>] = &[];
    if toks.get(i).is_some_and(|t| t.is("#")) {
        let open = i + 1;
        if !toks.get(open).is_some_and(|t| t.is("(")) {
            return Err(syntax(toks[i].line, "expected `(` after `#`".into()));
        }
        let close = matching(toks, open)
            .ok_or_else(|| syntax(toks[open].line, "unbalanced parameter list".into()))?;
        param_toks = &toks[open + 1..close];
        i = close + 1;
    }
    let mut port_toks: Option<&[Token<'_>]> = None;
    if toks.get(i).is_some_and(|t| t.is("(")) {
        let close =
            matching(toks, i).ok_or_else(|| syntax(toks[i].line, "unbalanced port list".into()))?;
        port_toks = Some(&toks[i + 1..close]);
        i = close + 1;
    }
    if !toks.get(i).is_some_and(|t| t.is(";")) {
        return Err(syntax(
            toks.get(i).map_or(last.line, |t| t.line),
            format!("expected `;` after header of `{name}`"),
        ));
    }
    let body = &toks[i + 1..toks.len() - 1];

    let mut env = Env::new();
    collect_params(param_toks, true, &mut env);
    collect_body_params(body, &mut env);

    let (ports, port_error) = match port_toks.map_or(Ok(Vec::new()), |p| parse_ports(p, body, &env))
    {
        Ok(p) => (p, None),
        Err(e) => (Vec::new(), Some(e)),
    };

    let start_line = first.line;
    let end_line = last.line;
    let line_count = file
        .text
        .lines()
        .skip(start_line - 1)
        .take(end_line - start_line + 1)
        .filter(|l| !l.trim().is_empty())
        .count();

    Ok(ModuleInfo {
        name,
        ports,
        port_error,
        line_count,
        instantiated_modules: find_instantiations(body),
        source_span: SourceSpan {
            file: file.path.clone(),
            start_line,
            end_line,
            file_index,
            byte_range: (first.offset, last.end()),
        },
    })
}

/// Index of the bracket closing the one at `open`.
fn matching(toks: &[Token<'_>], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokKind::Sym {
            continue;
        }
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth == 0 {
                    return Some(k);
                }
            }
            _ => {}
        }
    }
    None
}

fn skip_past(toks: &[Token<'_>], from: usize, sym: &str) -> Option<usize> {
    toks[from..]
        .iter()
        .position(|t| t.is(sym))
        .map(|p| from + p + 1)
}

/// Splits on commas that are not nested inside brackets.
fn split_top_level<'t, 'a>(toks: &'t [Token<'a>]) -> Vec<&'t [Token<'a>]> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (k, t) in toks.iter().enumerate() {
        if t.kind != TokKind::Sym {
            continue;
        }
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "," if depth == 0 => {
                out.push(&toks[start..k]);
                start = k + 1;
            }
            _ => {}
        }
    }
    if start < toks.len() {
        out.push(&toks[start..]);
    }
    out
}

const DATA_TYPES: &[&str] = &[
    "wire", "reg", "logic", "var", "tri", "tri0", "tri1", "wand", "wor", "triand", "trior",
    "supply0", "supply1", "signed", "unsigned", "bit", "integer", "int",
];

/// Parameter items `[parameter|localparam] [type] [range] NAME = expr`.
fn collect_params(toks: &[Token<'_>], header: bool, env: &mut Env) {
    for item in split_top_level(toks) {
        let mut j = 0;
        while j < item.len()
            && (item[j].is("parameter")
                || item[j].is("localparam")
                || DATA_TYPES.contains(&item[j].text))
        {
            j += 1;
        }
        if item.get(j).is_some_and(|t| t.is("[")) {
            match matching(item, j) {
                Some(close) => j = close + 1,
                None => continue,
            }
        }
        let (Some(name), Some(eq)) = (item.get(j), item.get(j + 1)) else {
            continue;
        };
        if name.kind != TokKind::Ident || !eq.is("=") {
            continue;
        }
        if let Ok(v) = expr::eval(&item[j + 2..], env) {
            env.insert(name.text.to_owned(), v);
        } else if header {
            log::debug!("parameter `{}` is not a foldable constant", name.text);
        }
    }
}

fn collect_body_params(body: &[Token<'_>], env: &mut Env) {
    let mut i = 0;
    while i < body.len() {
        if body[i].is("parameter") || body[i].is("localparam") {
            let end = skip_past(body, i, ";").unwrap_or(body.len());
            let stmt_end = if end > i && body.get(end - 1).is_some_and(|t| t.is(";")) {
                end - 1
            } else {
                end
            };
            collect_params(&body[i..stmt_end], false, env);
            i = end;
        } else {
            i += 1;
        }
    }
}

fn direction_of(t: &Token<'_>) -> Option<Direction> {
    match t.text {
        "input" => Some(Direction::Input),
        "output" => Some(Direction::Output),
        "inout" => Some(Direction::Inout),
        _ => None,
    }
}

/// Parses `[types] [range]` starting at `j`; returns the range and the next index.
fn parse_type_and_range(
    item: &[Token<'_>],
    mut j: usize,
    env: &Env,
) -> Result<(Option<(i64, i64)>, usize), String> {
    let mut range = None;
    while j < item.len() && DATA_TYPES.contains(&item[j].text) {
        if item[j].is("integer") || item[j].is("int") {
            range = Some((31, 0));
        }
        j += 1;
    }
    if item.get(j).is_some_and(|t| t.is("[")) {
        let close = matching(item, j).ok_or("unbalanced packed range")?;
        range = Some(eval_range(&item[j + 1..close], env)?);
        j = close + 1;
        if item.get(j).is_some_and(|t| t.is("[")) {
            return Err("multi-dimensional packed ports are not supported".into());
        }
    }
    Ok((range, j))
}

fn eval_range(inner: &[Token<'_>], env: &Env) -> Result<(i64, i64), String> {
    let mut depth = 0i32;
    let mut colon = None;
    for (k, t) in inner.iter().enumerate() {
        match t.text {
            "(" | "[" | "{" if t.kind == TokKind::Sym => depth += 1,
            ")" | "]" | "}" if t.kind == TokKind::Sym => depth -= 1,
            ":" if depth == 0 && t.kind == TokKind::Sym => {
                colon = Some(k);
                break;
            }
            _ => {}
        }
    }
    let colon = colon.ok_or("packed range without `:`")?;
    let msb =
        expr::eval(&inner[..colon], env).map_err(|e| format!("cannot resolve range bound: {e}"))?;
    let lsb = expr::eval(&inner[colon + 1..], env)
        .map_err(|e| format!("cannot resolve range bound: {e}"))?;
    Ok((msb, lsb))
}

fn parse_ports(
    header: &[Token<'_>],
    body: &[Token<'_>],
    env: &Env,
) -> Result<Vec<PortDecl>, String> {
    let items = split_top_level(header);
    if items.iter().all(|i| i.is_empty()) {
        return Ok(Vec::new());
    }
    if items
        .iter()
        .any(|it| it.first().and_then(direction_of).is_some())
    {
        parse_ansi_ports(&items, env)
    } else {
        parse_non_ansi_ports(&items, body, env)
    }
}

fn parse_ansi_ports(items: &[&[Token<'_>]], env: &Env) -> Result<Vec<PortDecl>, String> {
    let mut ports = Vec::new();
    let mut current: Option<(Direction, Option<(i64, i64)>)> = None;
    for item in items {
        let Some(head) = item.first() else {
            return Err("empty port list item".into());
        };
        let mut j = 0;
        if let Some(dir) = direction_of(head) {
            let (range, next) = parse_type_and_range(item, 1, env)?;
            current = Some((dir, range));
            j = next;
        } else if item.len() > 1 {
            return Err(format!(
                "port item starting with `{}` (interface or user type)",
                head.text
            ));
        }
        let (dir, range) =
            current.ok_or_else(|| format!("port `{}` has no direction", head.text))?;
        let name = item.get(j).filter(|t| t.is_ident()).ok_or_else(|| {
            format!(
                "expected a port name, found `{}`",
                item.get(j).map_or("end of item", |t| t.text)
            )
        })?;
        match item.get(j + 1) {
            None => {}
            Some(t) if t.is("=") => {}
            Some(t) if t.is("[") => return Err(format!("unpacked array port `{}`", name.text)),
            Some(t) => {
                return Err(format!(
                    "unexpected `{}` after port `{}`",
                    t.text, name.text
                ))
            }
        }
        ports.push(PortDecl::new(name.text, dir, range));
    }
    Ok(ports)
}

type PackedRange = Option<(i64, i64)>;

fn parse_non_ansi_ports(
    items: &[&[Token<'_>]],
    body: &[Token<'_>],
    env: &Env,
) -> Result<Vec<PortDecl>, String> {
    let mut names = Vec::new();
    for item in items {
        match item {
            [t] if t.is_ident() => names.push(t.text),
            _ => {
                let text: Vec<&str> = item.iter().map(|t| t.text).collect();
                return Err(format!("port expression `{}`", text.join(" ")));
            }
        }
    }

    let mut decls: HashMap<&str, (Direction, PackedRange)> = HashMap::new();
    let mut i = 0;
    let mut nested: Option<&str> = None;
    while i < body.len() {
        let t = body[i];
        match (nested, t.text) {
            (None, "function") => nested = Some("endfunction"),
            (None, "task") => nested = Some("endtask"),
            (Some(end), text) if text == end => nested = None,
            (None, _) if direction_of(&t).is_some() && t.kind == TokKind::Ident => {
                let end = skip_past(body, i, ";").ok_or("unterminated port declaration")?;
                let stmt = &body[i..end - 1];
                let dir = direction_of(&t).expect("checked");
                let (range, j) = parse_type_and_range(stmt, 1, env)?;
                for part in split_top_level(&stmt[j..]) {
                    match part {
                        [n] if n.is_ident() => {
                            decls.insert(n.text, (dir, range));
                        }
                        [n, eq, ..] if n.is_ident() && eq.is("=") => {
                            decls.insert(n.text, (dir, range));
                        }
                        _ => return Err("unsupported port declaration".into()),
                    }
                }
                i = end;
                continue;
            }
            _ => {}
        }
        i += 1;
    }

    names
        .into_iter()
        .map(|n| {
            decls
                .get(n)
                .map(|(dir, range)| PortDecl::new(n, *dir, *range))
                .ok_or_else(|| format!("port `{n}` has no direction declaration"))
        })
        .collect()
}

fn find_instantiations(body: &[Token<'_>]) -> Vec<String> {
    let mut found: Vec<String> = Vec::new();
    for k in 0..body.len() {
        let t = &body[k];
        if !t.is_ident() || (k > 0 && (body[k - 1].is(".") || body[k - 1].is("::"))) {
            continue;
        }
        let next = body.get(k + 1);
        let is_inst = match next {
            Some(n) if n.is("#") => true,
            Some(n) if n.is_ident() => body.get(k + 2).is_some_and(|a| a.is("(") || a.is("[")),
            _ => false,
        };
        if is_inst && !found.iter().any(|f| f == t.text) {
            found.push(t.text.to_owned());
        }
    }
    found
}
