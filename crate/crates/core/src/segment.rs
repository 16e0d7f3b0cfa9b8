//! Statement segmentation over a token stream.
//!
//! Splits a script into top-level units that tile the source text exactly:
//! every byte belongs to exactly one unit and units never start or end inside
//! a literal or a comment. A unit is a plain statement (ends at `;`, a
//! SQL*Plus `/` line or end of input), a procedural block (PL/SQL block or a
//! statement that carries a PostgreSQL dollar-quoted body), or a client line
//! command (SQL*Plus `SET`, `SPOOL`, ... or psql `\set`) that ends at the end
//! of its line.

use crate::lexer::{Dialect, Lexed, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    Statement,
    Block,
    LineCommand,
    /// Whitespace and comments only.
    Trivia,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub kind: UnitKind,
    pub start: usize,
    pub end: usize,
    /// Token index range `[first, last]`; empty for trivia.
    pub tokens: std::ops::Range<usize>,
    /// Cut positions strictly inside the unit after inner statement
    /// terminators of a block.
    pub inner: Vec<usize>,
}

/// SQL*Plus commands that are terminated by the end of their line.
const SQLPLUS_LINE_COMMANDS: &[&str] = &[
    "ACCEPT", "APPEND", "ARCHIVE", "ATTRIBUTE", "BREAK", "BTITLE", "CLEAR", "COL", "COLUMN",
    "COMPUTE", "CONN", "CONNECT", "COPY", "DEF", "DEFINE", "DESC", "DESCRIBE", "DISC",
    "DISCONNECT", "EXEC", "EXECUTE", "EXIT", "HOST", "PASSWORD", "PAUSE", "PRINT", "PRO", "PROMPT",
    "QUIT", "RECOVER", "REPFOOTER", "REPHEADER", "SET", "SHO", "SHOW", "SHUTDOWN", "SPO", "SPOOL",
    "STARTUP", "STORE", "TIMING", "TTITLE", "UNDEF", "UNDEFINE", "VAR", "VARIABLE", "WHENEVER",
];

const ORACLE_BLOCK_OBJECTS: &[&str] = &["PROCEDURE", "FUNCTION", "PACKAGE", "TRIGGER", "TYPE"];

pub fn segment(text: &str, lexed: &Lexed<'_>, dialect: Dialect) -> Vec<Unit> {
    let toks = &lexed.tokens;
    let mut units: Vec<Unit> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let (kind, last, inner_toks) = scan_unit(toks, i, dialect);
        let mut last = last;
        // a SQL*Plus `/` right after a complete statement re-runs it; keep it attached
        if kind != UnitKind::LineCommand
            && !toks[last].is_slash_terminator()
            && toks.get(last + 1).is_some_and(|t| t.is_slash_terminator())
        {
            last += 1;
        }
        let inner = inner_toks
            .into_iter()
            .filter(|&t| t < last)
            .map(|t| cut_after(text, lexed, t))
            .collect();
        units.push(Unit {
            kind,
            start: 0,
            end: 0,
            tokens: i..last + 1,
            inner,
        });
        i = last + 1;
    }

    // assign byte ranges: each unit ends at the cut after its last token; the
    // first unit absorbs leading trivia and the last absorbs trailing trivia
    if units.is_empty() {
        if text.is_empty() {
            return units;
        }
        return vec![Unit {
            kind: UnitKind::Trivia,
            start: 0,
            end: text.len(),
            tokens: 0..0,
            inner: Vec::new(),
        }];
    }
    let n = units.len();
    let mut start = 0;
    for (idx, unit) in units.iter_mut().enumerate() {
        unit.start = start;
        unit.end = if idx + 1 == n {
            text.len()
        } else {
            let next_first = toks[unit.tokens.end].start;
            cut_after(text, lexed, unit.tokens.end - 1).min(next_first)
        };
        unit.inner.retain(|&p| p > unit.start && p < unit.end);
        start = unit.end;
    }
    units
}

/// Position right after token `t`, extended over trailing blanks and, when the
/// rest of the line is blank or a line comment, through the newline. Never
/// lands inside a comment or past the next token.
pub fn cut_after(text: &str, lexed: &Lexed<'_>, t: usize) -> usize {
    let bytes = text.as_bytes();
    let limit = lexed.tokens.get(t + 1).map_or(text.len(), |n| n.start);
    let mut pos = lexed.tokens[t].end;
    while pos < limit && matches!(bytes[pos], b' ' | b'\t' | b'\r') {
        pos += 1;
    }
    if pos < limit && bytes[pos] == b'\n' {
        return pos + 1;
    }
    if pos + 1 < limit && bytes[pos] == b'-' && bytes[pos + 1] == b'-' {
        let eol = text[pos..limit].find('\n').map_or(limit, |i| pos + i + 1);
        return eol.min(limit);
    }
    match lexed.comment_containing(pos) {
        Some((s, _)) => s,
        None => pos,
    }
}

/// Returns the unit kind, the index of its last token, and token indices of
/// inner statement terminators.
fn scan_unit(toks: &[Token<'_>], first: usize, dialect: Dialect) -> (UnitKind, usize, Vec<usize>) {
    let head = &toks[first];
    if head.is_slash_terminator() {
        return (UnitKind::Statement, first, Vec::new());
    }
    if head.is_meta_command()
        || (dialect == Dialect::Oracle && is_sqlplus_line_command(toks, first))
    {
        let line = head.line;
        let mut last = first;
        while toks.get(last + 1).is_some_and(|t| t.line == line) {
            last += 1;
        }
        return (UnitKind::LineCommand, last, Vec::new());
    }
    if dialect == Dialect::Oracle {
        if head.is_keyword("RUN") && toks.get(first + 1).is_some_and(|t| t.is_punct("{")) {
            return scan_braces(toks, first);
        }
        if let Some(opens_on_as) = oracle_block_start(toks, first) {
            return scan_oracle_block(toks, first, opens_on_as);
        }
    }
    scan_statement(toks, first)
}

fn is_sqlplus_line_command(toks: &[Token<'_>], i: usize) -> bool {
    let t = &toks[i];
    if t.text == "@" {
        return true;
    }
    if !t.is_word() {
        return false;
    }
    let upper = t.text.to_ascii_uppercase();
    if !SQLPLUS_LINE_COMMANDS.contains(&upper.as_str()) {
        return false;
    }
    // `SET TRANSACTION` / `SET ROLE` are SQL; `EXECUTE IMMEDIATE` only occurs in PL/SQL
    let next = toks.get(i + 1);
    match upper.as_str() {
        "SET" => !next.is_some_and(|n| n.is_keyword("TRANSACTION") || n.is_keyword("ROLE") || n.is_keyword("CONSTRAINT") || n.is_keyword("CONSTRAINTS")),
        "EXECUTE" => !next.is_some_and(|n| n.is_keyword("IMMEDIATE")),
        _ => true,
    }
}

/// `Some(true)` when the block is a package/type specification or body whose
/// `AS`/`IS` opens the outermost scope; `Some(false)` for other blocks.
fn oracle_block_start(toks: &[Token<'_>], first: usize) -> Option<bool> {
    let mut i = first;
    // <<label>>
    if toks[i].text == "<<" {
        i += 3;
    }
    let t = toks.get(i)?;
    if t.is_keyword("DECLARE") || t.is_keyword("BEGIN") {
        return Some(false);
    }
    if !t.is_keyword("CREATE") {
        return None;
    }
    i += 1;
    if toks.get(i).is_some_and(|t| t.is_keyword("OR")) && toks.get(i + 1).is_some_and(|t| t.is_keyword("REPLACE")) {
        i += 2;
    }
    while toks.get(i).is_some_and(|t| t.is_keyword("EDITIONABLE") || t.is_keyword("NONEDITIONABLE")) {
        i += 1;
    }
    let obj = toks.get(i)?;
    if !ORACLE_BLOCK_OBJECTS.iter().any(|o| obj.is_keyword(o)) {
        return None;
    }
    if obj.is_keyword("TYPE") {
        let body = toks.get(i + 1).is_some_and(|t| t.is_keyword("BODY"));
        if body {
            return Some(true);
        }
        // object/collection type specs are single statements
        let plain = toks[i..]
            .iter()
            .take_while(|t| !t.is_punct(";"))
            .collect::<Vec<_>>()
            .windows(2)
            .any(|w| {
                (w[0].is_keyword("AS") || w[0].is_keyword("IS"))
                    && ["OBJECT", "TABLE", "VARRAY", "VARYING", "REF"].iter().any(|k| w[1].is_keyword(k))
            });
        return if plain { None } else { Some(true) };
    }
    Some(obj.is_keyword("PACKAGE"))
}

fn scan_braces(toks: &[Token<'_>], first: usize) -> (UnitKind, usize, Vec<usize>) {
    let mut depth = 0i32;
    let mut inner = Vec::new();
    for (j, t) in toks.iter().enumerate().skip(first) {
        if t.is_punct("{") {
            depth += 1;
        } else if t.is_punct("}") {
            depth -= 1;
            if depth <= 0 {
                let last = if toks.get(j + 1).is_some_and(|n| n.is_punct(";")) { j + 1 } else { j };
                return (UnitKind::Block, last, inner);
            }
        } else if t.is_punct(";") {
            inner.push(j);
        }
    }
    (UnitKind::Block, toks.len() - 1, inner)
}

/// Tracks PL/SQL nesting: BEGIN, CASE, IF and LOOP open a scope; END closes
/// one (END IF / END LOOP / END CASE consume their qualifier).
#[derive(Debug, Default)]
pub struct BlockDepth {
    pub depth: i32,
    pub max_depth: i32,
    skip_next: bool,
}

impl BlockDepth {
    /// Feeds token `i`. Returns true when the token closed a scope.
    pub fn feed(&mut self, toks: &[Token<'_>], i: usize) -> bool {
        if self.skip_next {
            self.skip_next = false;
            return false;
        }
        let t = &toks[i];
        if !t.is_word() {
            return false;
        }
        let prev = i.checked_sub(1).map(|p| &toks[p]);
        if t.is_keyword("END") {
            if toks
                .get(i + 1)
                .is_some_and(|n| n.is_keyword("IF") || n.is_keyword("LOOP") || n.is_keyword("CASE"))
            {
                self.skip_next = true;
            }
            self.depth -= 1;
            return true;
        }
        let opens = t.is_keyword("BEGIN")
            || t.is_keyword("CASE")
            || t.is_keyword("LOOP")
            || (t.is_keyword("IF") && prev.is_none_or(|p| starts_statement(p)));
        if opens {
            self.depth += 1;
            self.max_depth = self.max_depth.max(self.depth);
        }
        false
    }

    pub fn open_scope(&mut self) {
        self.depth += 1;
        self.max_depth = self.max_depth.max(self.depth);
    }
}

fn starts_statement(prev: &Token<'_>) -> bool {
    prev.is_punct(";")
        || prev.text == ">>"
        || ["BEGIN", "THEN", "ELSE", "LOOP", "DECLARE", "IS", "AS"]
            .iter()
            .any(|k| prev.is_keyword(k))
}

fn scan_oracle_block(toks: &[Token<'_>], first: usize, opens_on_as: bool) -> (UnitKind, usize, Vec<usize>) {
    let mut depth = BlockDepth::default();
    let mut inner = Vec::new();
    let mut as_seen = false;
    let mut paren = 0i32;
    let mut j = first;
    while j < toks.len() {
        let t = &toks[j];
        if t.is_slash_terminator() {
            // SQL*Plus terminator always ends the block
            return (UnitKind::Block, j, inner);
        }
        if t.is_punct("(") {
            paren += 1;
        } else if t.is_punct(")") {
            paren -= 1;
        }
        if opens_on_as && !as_seen && paren == 0 && depth.depth == 0 && (t.is_keyword("AS") || t.is_keyword("IS")) {
            as_seen = true;
            depth.open_scope();
        } else {
            depth.feed(toks, j);
        }
        if t.is_punct(";") {
            if depth.max_depth > 0 && depth.depth <= 0 {
                return (UnitKind::Block, j, inner);
            }
            inner.push(j);
        }
        j += 1;
    }
    (UnitKind::Block, toks.len() - 1, inner)
}

fn scan_statement(toks: &[Token<'_>], first: usize) -> (UnitKind, usize, Vec<usize>) {
    let mut bodies: Vec<&str> = Vec::new();
    let mut saw_body = false;
    let mut inner = Vec::new();
    for (j, t) in toks.iter().enumerate().skip(first) {
        if t.is_dollar_delimiter() {
            if bodies.last() == Some(&t.text) {
                bodies.pop();
            } else {
                bodies.push(t.text);
                saw_body = true;
            }
            continue;
        }
        if t.is_punct(";") {
            if bodies.is_empty() {
                let kind = if saw_body { UnitKind::Block } else { UnitKind::Statement };
                return (kind, j, inner);
            }
            inner.push(j);
        } else if t.is_slash_terminator() && bodies.is_empty() && j > first {
            return (UnitKind::Statement, j, inner);
        } else if t.kind == TokenKind::Keyword && t.is_meta_command() && bodies.is_empty() && j > first {
            // an unterminated statement followed by a psql command
            if toks[j - 1].line < t.line {
                return (UnitKind::Statement, j - 1, inner);
            }
        }
    }
    let kind = if saw_body { UnitKind::Block } else { UnitKind::Statement };
    (kind, toks.len() - 1, inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::tokenize;

    fn units(text: &str, dialect: Dialect) -> Vec<(UnitKind, &str)> {
        let lexed = tokenize(text, dialect);
        segment(text, &lexed, dialect)
            .into_iter()
            .map(|u| (u.kind, &text[u.start..u.end]))
            .collect()
    }

    #[test]
    fn units_tile_the_text() {
        let text = "-- header\nSELECT 1; SELECT 2;\n/* c */ INSERT INTO t VALUES (1);\n-- tail\n";
        let got = units(text, Dialect::Oracle);
        let joined: String = got.iter().map(|(_, s)| *s).collect();
        assert_eq!(joined, text);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0].1, "-- header\nSELECT 1; ");
        assert_eq!(got[1].1, "SELECT 2;\n");
    }

    #[test]
    fn trailing_line_comment_stays_with_statement() {
        let got = units("SELECT 1; -- one\nSELECT 2;", Dialect::Oracle);
        assert_eq!(got[0].1, "SELECT 1; -- one\n");
    }

    #[test]
    fn oracle_anonymous_block_with_nesting() {
        let text = "BEGIN\n  IF x THEN\n    BEGIN y; END;\n  END IF;\n  z;\nEND;\nSELECT 1 FROM dual;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, UnitKind::Block);
        assert!(got[0].1.ends_with("END;\n"));
        assert_eq!(got[1].1, "SELECT 1 FROM dual;\n");
    }

    #[test]
    fn procedure_declarations_do_not_end_block() {
        let text = "CREATE OR REPLACE PROCEDURE p IS\n  v NUMBER;\nBEGIN\n  v := 1;\nEND p;\n/\nSELECT 1 FROM dual;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 2);
        assert!(got[0].1.ends_with("END p;\n/\n"));
    }

    #[test]
    fn package_spec_closes_on_end() {
        let text = "CREATE PACKAGE pk AS\n  PROCEDURE a;\n  FUNCTION b RETURN NUMBER;\nEND pk;\nSELECT 1 FROM dual;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, UnitKind::Block);
    }

    #[test]
    fn object_type_is_plain_statement() {
        let text = "CREATE TYPE pt AS OBJECT (x NUMBER);\n/\nSELECT 1 FROM dual;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0], (UnitKind::Statement, "CREATE TYPE pt AS OBJECT (x NUMBER);\n/\n"));
    }

    #[test]
    fn sqlplus_commands_end_at_line_end() {
        let text = "SET SERVEROUTPUT ON\nSPOOL out.log\nSELECT 1 FROM dual;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0], (UnitKind::LineCommand, "SET SERVEROUTPUT ON\n"));
        assert_eq!(got[1], (UnitKind::LineCommand, "SPOOL out.log\n"));
    }

    #[test]
    fn rman_run_block() {
        let text = "RUN {\n  ALLOCATE CHANNEL c1 DEVICE TYPE DISK;\n  BACKUP DATABASE;\n}\nLIST BACKUP;\n";
        let got = units(text, Dialect::Oracle);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].0, UnitKind::Block);
    }

    #[test]
    fn postgres_function_body_is_one_block() {
        let text = "CREATE FUNCTION f() RETURNS int AS $$\nBEGIN\n  RETURN 1;\nEND;\n$$ LANGUAGE plpgsql;\nSELECT f();\n";
        let lexed = tokenize(text, Dialect::PostgreSql);
        let got = segment(text, &lexed, Dialect::PostgreSql);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].kind, UnitKind::Block);
        assert_eq!(got[0].inner.len(), 2);
        assert!(text[got[0].start..got[0].end].ends_with("plpgsql;\n"));
    }

    #[test]
    fn psql_meta_command_line() {
        let text = "\\set ON_ERROR_STOP on\nSELECT 1;\n";
        let got = units(text, Dialect::PostgreSql);
        assert_eq!(got[0], (UnitKind::LineCommand, "\\set ON_ERROR_STOP on\n"));
    }

    #[test]
    fn comment_only_text_is_trivia() {
        assert_eq!(units("-- nothing\n", Dialect::Oracle), vec![(UnitKind::Trivia, "-- nothing\n")]);
        assert!(units("", Dialect::Oracle).is_empty());
    }
}
