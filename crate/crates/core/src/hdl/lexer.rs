//! Tokenizer for the supported Verilog subset.
//!
//! Comments and compiler directives never reach the token stream; every
//! token remembers its 1-based line and byte offset into the original text.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Ident,
    /// `$clog2`, `$display`, ...
    SysIdent,
    /// Macro usage such as `` `WIDTH ``; never resolvable to a constant.
    Macro,
    Number,
    Str,
    Sym,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Token<'a> {
    pub kind: TokKind,
    pub text: &'a str,
    pub line: usize,
    pub offset: usize,
}

impl Token<'_> {
    pub fn is(&self, s: &str) -> bool {
        self.text == s && self.kind != TokKind::Str
    }

    pub fn is_ident(&self) -> bool {
        self.kind == TokKind::Ident && !is_keyword(self.text)
    }

    pub fn end(&self) -> usize {
        self.offset + self.text.len()
    }
}

const DIRECTIVES_TO_EOL: &[&str] = &[
    "timescale",
    "define",
    "include",
    "ifdef",
    "ifndef",
    "elsif",
    "else",
    "endif",
    "undef",
    "undefineall",
    "default_nettype",
    "resetall",
    "celldefine",
    "endcelldefine",
    "unconnected_drive",
    "nounconnected_drive",
    "pragma",
    "line",
];

const MULTI_SYMS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "**", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+:", "-:",
    "::", "->",
];

pub(crate) fn tokenize(src: &str) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b'\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    if bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                i = (i + 2).min(bytes.len());
            }
            b'`' => {
                let start = i;
                i += 1;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                let name = &src[start + 1..i];
                if DIRECTIVES_TO_EOL.contains(&name) {
                    // honour line continuations in `define bodies
                    while i < bytes.len() && bytes[i] != b'\n' {
                        if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
                            line += 1;
                            i += 1;
                        }
                        i += 1;
                    }
                } else {
                    out.push(Token {
                        kind: TokKind::Macro,
                        text: &src[start..i],
                        line,
                        offset: start,
                    });
                }
            }
            b'"' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' {
                    if bytes[i] == b'\\' {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i] == b'\n' {
                        line += 1;
                    }
                    i += 1;
                }
                i = (i + 1).min(bytes.len());
                out.push(Token {
                    kind: TokKind::Str,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
            b'\\' => {
                // escaped identifier runs to the next whitespace
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
            b'$' => {
                let start = i;
                i += 1;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::SysIdent,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                out.push(Token {
                    kind: TokKind::Ident,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
            c if c.is_ascii_digit() || (c == b'\'' && is_base_start(bytes, i + 1)) => {
                let start = i;
                i = scan_number(bytes, i);
                out.push(Token {
                    kind: TokKind::Number,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
            _ => {
                let start = i;
                let rest = &src[i..];
                let len = MULTI_SYMS
                    .iter()
                    .find(|s| rest.starts_with(*s))
                    .map(|s| s.len())
                    .unwrap_or_else(|| rest.chars().next().map_or(1, char::len_utf8));
                i += len;
                out.push(Token {
                    kind: TokKind::Sym,
                    text: &src[start..i],
                    line,
                    offset: start,
                });
            }
        }
    }
    out
}

fn is_ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn is_base_start(bytes: &[u8], i: usize) -> bool {
    match bytes.get(i) {
        Some(b's' | b'S') => matches!(
            bytes.get(i + 1),
            Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
        ),
        Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H') => true,
        Some(b'0' | b'1' | b'x' | b'X' | b'z' | b'Z') => true,
        _ => false,
    }
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
        i += 1;
    }
    // real literal
    if bytes.get(i) == Some(&b'.') && bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
        i += 1;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'_') {
            i += 1;
        }
        return i;
    }
    if bytes.get(i) == Some(&b'\'') && is_base_start(bytes, i + 1) {
        i += 1;
        if matches!(bytes.get(i), Some(b's' | b'S')) {
            i += 1;
        }
        if matches!(
            bytes.get(i),
            Some(b'b' | b'B' | b'o' | b'O' | b'd' | b'D' | b'h' | b'H')
        ) {
            i += 1;
        }
        while i < bytes.len() && bytes[i].is_ascii_whitespace() && bytes[i] != b'\n' {
            i += 1;
        }
        while i < bytes.len()
            && (bytes[i].is_ascii_hexdigit()
                || matches!(bytes[i], b'_' | b'x' | b'X' | b'z' | b'Z' | b'?'))
        {
            i += 1;
        }
    }
    i
}

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.binary_search(&s).is_ok()
}

// sorted for binary search
const KEYWORDS: &[&str] = &[
    "always",
    "always_comb",
    "always_ff",
    "always_latch",
    "and",
    "assign",
    "automatic",
    "begin",
    "bit",
    "buf",
    "byte",
    "case",
    "casex",
    "casez",
    "cmos",
    "deassign",
    "default",
    "defparam",
    "disable",
    "do",
    "edge",
    "else",
    "end",
    "endcase",
    "endfunction",
    "endgenerate",
    "endmodule",
    "endprimitive",
    "endspecify",
    "endtable",
    "endtask",
    "enum",
    "event",
    "for",
    "force",
    "forever",
    "fork",
    "function",
    "generate",
    "genvar",
    "highz0",
    "highz1",
    "if",
    "initial",
    "inout",
    "input",
    "int",
    "integer",
    "interface",
    "join",
    "localparam",
    "logic",
    "longint",
    "macromodule",
    "module",
    "nand",
    "negedge",
    "nmos",
    "nor",
    "not",
    "or",
    "output",
    "parameter",
    "pmos",
    "posedge",
    "primitive",
    "pull0",
    "pull1",
    "pulldown",
    "pullup",
    "rcmos",
    "real",
    "realtime",
    "reg",
    "release",
    "repeat",
    "return",
    "rnmos",
    "rpmos",
    "rtran",
    "rtranif0",
    "rtranif1",
    "scalared",
    "shortint",
    "signed",
    "specify",
    "specparam",
    "strong0",
    "strong1",
    "struct",
    "supply0",
    "supply1",
    "table",
    "task",
    "time",
    "tran",
    "tranif0",
    "tranif1",
    "tri",
    "tri0",
    "tri1",
    "triand",
    "trior",
    "trireg",
    "typedef",
    "unsigned",
    "var",
    "vectored",
    "wait",
    "wand",
    "weak0",
    "weak1",
    "while",
    "wire",
    "wor",
    "xnor",
    "xor",
];
