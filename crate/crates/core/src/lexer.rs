//! SQL-aware tokenizer shared by the profiler, chunker, validator and metrics.
//!
//! The lexer is deliberately shallow: it knows about comments, every quoting
//! form used by Oracle and PostgreSQL, and enough operator syntax to keep
//! punctuation apart from words. It never builds a syntax tree.
//!
//! Two dialect-specific rules matter downstream:
//!
//! * PostgreSQL dollar-quoted strings that directly follow `AS` or `DO` are
//!   function or anonymous-block bodies. Their delimiters are emitted as
//!   punctuation and the body is lexed as code, so PL/pgSQL keywords inside a
//!   function are visible to the profiler and the validator. Any other
//!   dollar-quoted string is an ordinary literal.
//! * A `/` alone on its line is the SQL*Plus block terminator and is emitted
//!   as punctuation; elsewhere `/` is the division operator.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dialect {
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "postgresql")]
    PostgreSql,
}

impl Dialect {
    pub fn as_str(self) -> &'static str {
        match self {
            Dialect::Oracle => "oracle",
            Dialect::PostgreSql => "postgresql",
        }
    }
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dialect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" | "ora" | "plsql" => Ok(Dialect::Oracle),
            "postgresql" | "postgres" | "pg" | "plpgsql" => Ok(Dialect::PostgreSql),
            other => Err(format!("unknown dialect `{other}` (expected oracle or postgresql)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Literal,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    /// 1-based line of the first byte.
    pub line: usize,
}

impl<'a> Token<'a> {
    pub fn is_quoted_identifier(&self) -> bool {
        self.kind == TokenKind::Identifier && self.text.starts_with('"')
    }

    /// Keywords and unquoted identifiers.
    pub fn is_word(&self) -> bool {
        match self.kind {
            TokenKind::Keyword => true,
            TokenKind::Identifier => !self.text.starts_with('"'),
            _ => false,
        }
    }

    pub fn is_keyword(&self, upper: &str) -> bool {
        self.is_word() && self.text.eq_ignore_ascii_case(upper)
    }

    pub fn is_punct(&self, p: &str) -> bool {
        self.kind == TokenKind::Punctuation && self.text == p
    }

    /// `/` alone on its own line.
    pub fn is_slash_terminator(&self) -> bool {
        self.is_punct("/")
    }

    /// Opening or closing delimiter of a dollar-quoted code body.
    pub fn is_dollar_delimiter(&self) -> bool {
        self.kind == TokenKind::Punctuation && self.text.starts_with('$')
    }

    /// psql backslash meta-command such as `\set` or `\copy`.
    pub fn is_meta_command(&self) -> bool {
        self.kind == TokenKind::Keyword && self.text.starts_with('\\')
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexErrorKind {
    UnterminatedLiteral,
    UnterminatedIdentifier,
    UnterminatedComment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexDiagnostic {
    pub kind: LexErrorKind,
    pub line: usize,
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct Lexed<'a> {
    pub tokens: Vec<Token<'a>>,
    /// Byte ranges of every comment, in source order.
    pub comments: Vec<(usize, usize)>,
    pub diagnostics: Vec<LexDiagnostic>,
}

impl Lexed<'_> {
    /// Returns the comment containing `pos` strictly inside it, if any.
    pub fn comment_containing(&self, pos: usize) -> Option<(usize, usize)> {
        let idx = self.comments.partition_point(|&(s, _)| s < pos);
        if idx == 0 {
            return None;
        }
        let (s, e) = self.comments[idx - 1];
        (pos > s && pos < e).then_some((s, e))
    }
}

/// Maps byte offsets to 1-based line numbers.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    pub fn line_of(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }

    pub fn line_start(&self, line: usize) -> usize {
        self.starts[line.saturating_sub(1).min(self.starts.len() - 1)]
    }
}

/// Number of lines as an editor would show them; a trailing newline does not
/// open a new line and the empty text has zero lines.
pub fn line_count(text: &str) -> usize {
    text.lines().count()
}

pub fn tokenize(text: &str, dialect: Dialect) -> Lexed<'_> {
    Lexer::new(text, dialect).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    dialect: Dialect,
    lines: LineIndex,
    tokens: Vec<Token<'a>>,
    comments: Vec<(usize, usize)>,
    diagnostics: Vec<LexDiagnostic>,
    // open dollar-quoted code bodies, innermost last
    bodies: Vec<&'a str>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, dialect: Dialect) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            dialect,
            lines: LineIndex::new(src),
            tokens: Vec::new(),
            comments: Vec::new(),
            diagnostics: Vec::new(),
            bodies: Vec::new(),
        }
    }

    fn run(mut self) -> Lexed<'a> {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0c => self.pos += 1,
                b'-' if self.peek(1) == Some(b'-') => self.line_comment(),
                b'/' if self.peek(1) == Some(b'*') => self.block_comment(),
                b'\'' => self.quoted_literal(self.pos, self.pos),
                b'"' => self.quoted_identifier(),
                b'$' => self.dollar(),
                b'0'..=b'9' => self.number(),
                b'.' if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => self.number(),
                b'\\' if self.dialect == Dialect::PostgreSql
                    && self.peek(1).is_some_and(|d| d.is_ascii_alphabetic()) =>
                {
                    self.meta_command()
                }
                b'/' if self.slash_alone_on_line() => {
                    self.push(TokenKind::Punctuation, self.pos, self.pos + 1)
                }
                _ if is_word_start(c) => self.word(),
                _ => self.symbol(),
            }
        }
        Lexed {
            tokens: self.tokens,
            comments: self.comments,
            diagnostics: self.diagnostics,
        }
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize) {
        self.tokens.push(Token {
            kind,
            text: &self.src[start..end],
            start,
            end,
            line: self.lines.line_of(start),
        });
        self.pos = end;
    }

    fn diag(&mut self, kind: LexErrorKind, offset: usize) {
        self.diagnostics.push(LexDiagnostic {
            kind,
            line: self.lines.line_of(offset),
            offset,
        });
    }

    fn end_of_line(&self, from: usize) -> usize {
        self.src[from..].find('\n').map_or(self.src.len(), |i| from + i)
    }

    fn line_comment(&mut self) {
        let start = self.pos;
        let end = self.end_of_line(start);
        self.comments.push((start, end));
        self.pos = end;
    }

    fn block_comment(&mut self) {
        let start = self.pos;
        match self.src[start + 2..].find("*/") {
            Some(i) => {
                let end = start + 2 + i + 2;
                self.comments.push((start, end));
                self.pos = end;
            }
            None => {
                self.diag(LexErrorKind::UnterminatedComment, start);
                self.comments.push((start, self.src.len()));
                self.pos = self.src.len();
            }
        }
    }

    /// `token_start` includes any prefix letters (N, E, X, ...); `quote` is the
    /// offset of the opening `'`.
    fn quoted_literal(&mut self, token_start: usize, quote: usize) {
        let backslash_escapes = self.dialect == Dialect::PostgreSql
            && self.src[token_start..quote].eq_ignore_ascii_case("e");
        let mut i = quote + 1;
        while i < self.bytes.len() {
            match self.bytes[i] {
                b'\\' if backslash_escapes => i += 2,
                b'\'' if self.bytes.get(i + 1) == Some(&b'\'') => i += 2,
                b'\'' => {
                    self.push(TokenKind::Literal, token_start, i + 1);
                    return;
                }
                _ => i += 1,
            }
        }
        self.unterminated(TokenKind::Literal, LexErrorKind::UnterminatedLiteral, token_start);
    }

    /// Recovery: the broken token runs to the end of its line and lexing
    /// resumes on the next line.
    fn unterminated(&mut self, kind: TokenKind, err: LexErrorKind, start: usize) {
        self.diag(err, start);
        let end = self.end_of_line(start);
        self.push(kind, start, end);
    }

    /// Oracle alternative quoting: q'[...]', q'{...}', q'!...!'.
    fn q_quote(&mut self, token_start: usize, quote: usize) {
        let Some(open) = self.src[quote + 1..].chars().next() else {
            self.unterminated(TokenKind::Literal, LexErrorKind::UnterminatedLiteral, token_start);
            return;
        };
        let close = match open {
            '[' => ']',
            '{' => '}',
            '(' => ')',
            '<' => '>',
            c => c,
        };
        let body = quote + 1 + open.len_utf8();
        let mut search = body;
        while let Some(i) = self.src[search..].find(close) {
            let at = search + i + close.len_utf8();
            if self.bytes.get(at) == Some(&b'\'') {
                self.push(TokenKind::Literal, token_start, at + 1);
                return;
            }
            search = at;
        }
        self.unterminated(TokenKind::Literal, LexErrorKind::UnterminatedLiteral, token_start);
    }

    fn quoted_identifier(&mut self) {
        let start = self.pos;
        let mut i = start + 1;
        while i < self.bytes.len() {
            if self.bytes[i] == b'"' {
                if self.bytes.get(i + 1) == Some(&b'"') {
                    i += 2;
                    continue;
                }
                self.push(TokenKind::Identifier, start, i + 1);
                return;
            }
            i += 1;
        }
        self.unterminated(
            TokenKind::Identifier,
            LexErrorKind::UnterminatedIdentifier,
            start,
        );
    }

    fn dollar(&mut self) {
        let start = self.pos;
        if self.dialect == Dialect::PostgreSql {
            if let Some(tag_end) = self.dollar_tag_end(start) {
                let tag = &self.src[start..tag_end];
                if self.bodies.last() == Some(&tag) {
                    self.bodies.pop();
                    self.push(TokenKind::Punctuation, start, tag_end);
                    return;
                }
                if self.previous_is_body_introducer() {
                    self.bodies.push(tag);
                    self.push(TokenKind::Punctuation, start, tag_end);
                    return;
                }
                match self.src[tag_end..].find(tag) {
                    Some(i) => self.push(TokenKind::Literal, start, tag_end + i + tag.len()),
                    None => self.unterminated(
                        TokenKind::Literal,
                        LexErrorKind::UnterminatedLiteral,
                        start,
                    ),
                }
                return;
            }
        }
        // positional parameter ($1) or a stray dollar
        let mut end = start + 1;
        while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
            end += 1;
        }
        let kind = if end > start + 1 {
            TokenKind::Identifier
        } else {
            TokenKind::Operator
        };
        self.push(kind, start, end);
    }

    /// End offset of a `$tag$` or `$$` delimiter starting at `start`.
    fn dollar_tag_end(&self, start: usize) -> Option<usize> {
        let mut i = start + 1;
        if self.bytes.get(i) == Some(&b'$') {
            return Some(i + 1);
        }
        let first = *self.bytes.get(i)?;
        if !(first.is_ascii_alphabetic() || first == b'_') {
            return None;
        }
        while i < self.bytes.len() && (self.bytes[i].is_ascii_alphanumeric() || self.bytes[i] == b'_') {
            i += 1;
        }
        (self.bytes.get(i) == Some(&b'$')).then_some(i + 1)
    }

    fn previous_is_body_introducer(&self) -> bool {
        self.tokens
            .last()
            .is_some_and(|t| t.is_keyword("AS") || t.is_keyword("DO"))
    }

    fn number(&mut self) {
        let start = self.pos;
        let mut i = start;
        let digits = |i: &mut usize, b: &[u8]| {
            while *i < b.len() && b[*i].is_ascii_digit() {
                *i += 1;
            }
        };
        digits(&mut i, self.bytes);
        // `1..10` is a range in PL/SQL loops, not a decimal point
        if self.bytes.get(i) == Some(&b'.') && self.bytes.get(i + 1) != Some(&b'.') {
            i += 1;
            digits(&mut i, self.bytes);
        }
        if matches!(self.bytes.get(i), Some(b'e' | b'E')) {
            let mut j = i + 1;
            if matches!(self.bytes.get(j), Some(b'+' | b'-')) {
                j += 1;
            }
            if self.bytes.get(j).is_some_and(|d| d.is_ascii_digit()) {
                i = j;
                digits(&mut i, self.bytes);
            }
        }
        self.push(TokenKind::Literal, start, i);
    }

    fn meta_command(&mut self) {
        let start = self.pos;
        let mut i = start + 1;
        while i < self.bytes.len() && (self.bytes[i].is_ascii_alphanumeric() || matches!(self.bytes[i], b'+' | b'!' | b'?')) {
            i += 1;
        }
        self.push(TokenKind::Keyword, start, i);
    }

    fn slash_alone_on_line(&self) -> bool {
        let line_start = self.src[..self.pos].rfind('\n').map_or(0, |i| i + 1);
        let line_end = self.end_of_line(self.pos);
        self.src[line_start..self.pos].trim().is_empty()
            && self.src[self.pos + 1..line_end].trim().is_empty()
    }

    fn word(&mut self) {
        let start = self.pos;
        let mut i = start;
        while i < self.bytes.len() && is_word_continue(self.bytes[i], self.dialect) {
            i += 1;
        }
        let word = &self.src[start..i];
        if self.bytes.get(i) == Some(&b'\'') {
            let prefix = word.to_ascii_uppercase();
            match (self.dialect, prefix.as_str()) {
                (Dialect::Oracle, "Q" | "NQ") => return self.q_quote(start, i),
                (Dialect::Oracle, "N") | (Dialect::PostgreSql, "E" | "B" | "X" | "N") => {
                    return self.quoted_literal(start, i)
                }
                _ => {}
            }
        }
        if self.dialect == Dialect::Oracle && self.is_remark(start, word) {
            self.line_comment();
            return;
        }
        let kind = if is_keyword(word) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.push(kind, start, i);
    }

    /// SQL*Plus `REM` / `REMARK` lines are comments.
    fn is_remark(&self, start: usize, word: &str) -> bool {
        if !(word.eq_ignore_ascii_case("REM") || word.eq_ignore_ascii_case("REMARK")) {
            return false;
        }
        let line_start = self.src[..start].rfind('\n').map_or(0, |i| i + 1);
        if !self.src[line_start..start].trim().is_empty() {
            return false;
        }
        matches!(self.bytes.get(start + word.len()), None | Some(b' ' | b'\t' | b'\r' | b'\n'))
    }

    fn symbol(&mut self) {
        const MULTI: [&str; 23] = [
            "->>", "#>>", "!~*", "||", ":=", "::", "<=", ">=", "<>", "!=", "=>", "..", "**", "->",
            "#>", "<<", ">>", "@>", "<@", "~*", "!~", "^=", "~=",
        ];
        let start = self.pos;
        let rest = &self.src[start..];
        if let Some(op) = MULTI.iter().find(|op| rest.starts_with(*op)) {
            self.push(TokenKind::Operator, start, start + op.len());
            return;
        }
        let c = rest.chars().next().expect("symbol called at end of input");
        let kind = match c {
            ';' | ',' | '(' | ')' | '.' | '[' | ']' | '{' | '}' | ':' => TokenKind::Punctuation,
            _ => TokenKind::Operator,
        };
        self.push(kind, start, start + c.len_utf8());
    }
}

fn is_word_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c >= 0x80
}

fn is_word_continue(c: u8, dialect: Dialect) -> bool {
    c.is_ascii_alphanumeric()
        || c == b'_'
        || c >= 0x80
        || c == b'$'
        || (dialect == Dialect::Oracle && c == b'#')
}

/// Reserved and non-reserved words recognised as keywords in both dialects.
/// Words outside this list lex as identifiers; the profiler still matches
/// taxonomy patterns against unquoted identifiers.
const KEYWORDS: &[&str] = &[
    "ACCESS", "ADD", "AFTER", "AGGREGATE", "ALL", "ALTER", "ANALYZE", "AND", "ANY", "ARRAY", "AS",
    "ASC", "AUDIT", "AUTHID", "AUTONOMOUS_TRANSACTION", "BEFORE", "BEGIN", "BETWEEN", "BIGINT",
    "BINARY_INTEGER", "BLOB", "BODY", "BOOLEAN", "BOTH", "BULK", "BY", "CALL", "CASCADE", "CASE",
    "CAST", "CHAR", "CHARACTER", "CHECK", "CHECKPOINT", "CLOB", "CLOSE", "CLUSTER", "COLLATE",
    "COLLECT", "COLUMN", "COMMENT", "COMMIT", "CONNECT", "CONSTANT", "CONSTRAINT", "CONTINUE",
    "COPY", "CREATE", "CROSS", "CUBE", "CURRENT", "CURRENT_DATE", "CURRENT_TIMESTAMP", "CURSOR",
    "CYCLE", "DATABASE", "DATE", "DEALLOCATE", "DEC", "DECIMAL", "DECLARE", "DEFAULT", "DEFERRABLE",
    "DELETE", "DESC", "DETERMINISTIC", "DIAGNOSTICS", "DISTINCT", "DO", "DOUBLE", "DROP", "EACH",
    "ELSE", "ELSIF", "END", "ESCAPE", "EXCEPT", "EXCEPTION", "EXCLUSIVE", "EXECUTE", "EXISTS",
    "EXIT", "EXPLAIN", "EXTENSION", "FALSE", "FETCH", "FLOAT", "FOR", "FORALL", "FOREACH",
    "FOREIGN", "FOUND", "FROM", "FULL", "FUNCTION", "GET", "GOTO", "GRANT", "GROUP", "HAVING",
    "IDENTIFIED", "IF", "ILIKE", "IMMEDIATE", "IN", "INDEX", "INNER", "INOUT", "INSERT", "INT",
    "INTEGER", "INTERSECT", "INTERVAL", "INTO", "IS", "JOIN", "KEY", "LANGUAGE", "LATERAL",
    "LEADING", "LEFT", "LEVEL", "LIKE", "LIMIT", "LOCK", "LONG", "LOOP", "MATERIALIZED", "MERGE",
    "MINUS", "MODE", "NATURAL", "NCHAR", "NEXT", "NO", "NOCOPY", "NOT", "NOTFOUND", "NOTHING",
    "NOWAIT", "NULL", "NUMBER", "NUMERIC", "NVARCHAR2", "OF", "OFFSET", "ON", "ONLY", "OPEN",
    "OPTION", "OR", "ORDER", "OTHERS", "OUT", "OUTER", "OVER", "PACKAGE", "PARTITION", "PERFORM",
    "PIPELINED", "PLS_INTEGER", "PRAGMA", "PRIMARY", "PRIOR", "PROCEDURE", "PUBLIC", "RAISE",
    "RANGE", "RAW", "REAL", "RECORD", "RECURSIVE", "REF", "REFERENCES", "RELEASE", "RENAME",
    "REPLACE", "RESET", "RESTRICT", "RETURN", "RETURNING", "RETURNS", "REVERSE", "REVOKE",
    "RIGHT", "ROLE", "ROLLBACK", "ROLLUP", "ROW", "ROWCOUNT", "ROWNUM", "ROWS", "ROWTYPE",
    "SAVEPOINT", "SCHEMA", "SELECT", "SEQUENCE", "SERIAL", "SESSION", "SET", "SETOF", "SHARE",
    "SHOW", "SMALLINT", "SOME", "SQL", "SQLERRM", "SQLCODE", "SQLSTATE", "START", "STRICT",
    "SYNONYM", "SYSDATE", "SYSTEM", "TABLE", "TABLESPACE", "TEMP", "TEMPORARY", "TEXT", "THEN",
    "TIME", "TIMESTAMP", "TO", "TRAILING", "TRANSACTION", "TRIGGER", "TRUE", "TRUNCATE", "TYPE",
    "UNION", "UNIQUE", "UNLOGGED", "UPDATE", "USER", "USING", "VACUUM", "VALUES", "VARCHAR",
    "VARCHAR2", "VARIADIC", "VARYING", "VIEW", "VOLATILE", "WHEN", "WHERE", "WHILE", "WINDOW",
    "WITH", "WITHOUT", "WORK", "ZONE",
];

pub fn is_keyword(word: &str) -> bool {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    let set = SET.get_or_init(|| KEYWORDS.iter().copied().collect());
    if word.len() > 32 || !word.is_ascii() {
        return false;
    }
    set.contains(word.to_ascii_uppercase().as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds<'a>(lexed: &Lexed<'a>) -> Vec<(TokenKind, &'a str)> {
        lexed.tokens.iter().map(|t| (t.kind, t.text)).collect()
    }

    #[test]
    fn minimal_statement() {
        let lexed = tokenize("SELECT 1;", Dialect::Oracle);
        assert_eq!(
            kinds(&lexed),
            vec![
                (TokenKind::Keyword, "SELECT"),
                (TokenKind::Literal, "1"),
                (TokenKind::Punctuation, ";"),
            ]
        );
        assert!(lexed.diagnostics.is_empty());
    }

    #[test]
    fn comment_is_skipped() {
        let lexed = tokenize("-- SELECT\nBEGIN", Dialect::Oracle);
        assert_eq!(kinds(&lexed), vec![(TokenKind::Keyword, "BEGIN")]);
        assert_eq!(lexed.tokens[0].line, 2);
        assert_eq!(lexed.comments, vec![(0, 9)]);
    }

    #[test]
    fn string_content_is_one_literal() {
        let lexed = tokenize("INSERT INTO t VALUES ('BEGIN');", Dialect::Oracle);
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text).collect();
        assert_eq!(texts, ["INSERT", "INTO", "t", "VALUES", "(", "'BEGIN'", ")", ";"]);
        assert_eq!(lexed.tokens[5].kind, TokenKind::Literal);
        assert!(!lexed.tokens.iter().any(|t| t.is_keyword("BEGIN")));
    }

    #[test]
    fn spans_cover_token_text() {
        let src = "select a.b, 'x''y' from \"T\" where c >= 10.5e3";
        let lexed = tokenize(src, Dialect::PostgreSql);
        for t in &lexed.tokens {
            assert_eq!(&src[t.start..t.end], t.text);
        }
        assert!(lexed.tokens.iter().any(|t| t.text == "'x''y'" && t.kind == TokenKind::Literal));
        assert!(lexed.tokens.iter().any(|t| t.text == "\"T\"" && t.is_quoted_identifier()));
        assert!(lexed.tokens.iter().any(|t| t.text == ">=" && t.kind == TokenKind::Operator));
        assert!(lexed.tokens.iter().any(|t| t.text == "10.5e3" && t.kind == TokenKind::Literal));
    }

    #[test]
    fn unterminated_literal_recovers_on_next_line() {
        let lexed = tokenize("SELECT 'oops\nSELECT 2;", Dialect::Oracle);
        assert_eq!(lexed.diagnostics.len(), 1);
        assert_eq!(lexed.diagnostics[0].kind, LexErrorKind::UnterminatedLiteral);
        assert_eq!(lexed.diagnostics[0].line, 1);
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text).collect();
        assert_eq!(texts, ["SELECT", "'oops", "SELECT", "2", ";"]);
    }

    #[test]
    fn unterminated_block_comment_is_reported() {
        let lexed = tokenize("SELECT 1; /* never closed\nBEGIN", Dialect::Oracle);
        assert_eq!(lexed.diagnostics[0].kind, LexErrorKind::UnterminatedComment);
        assert_eq!(lexed.tokens.len(), 3);
    }

    #[test]
    fn oracle_q_quote_and_remark() {
        let src = "REM BEGIN here\nv := q'[it's BEGIN]';";
        let lexed = tokenize(src, Dialect::Oracle);
        let texts: Vec<_> = lexed.tokens.iter().map(|t| t.text).collect();
        assert_eq!(texts, ["v", ":=", "q'[it's BEGIN]'", ";"]);
    }

    #[test]
    fn dollar_body_after_as_is_code() {
        let src = "CREATE FUNCTION f() RETURNS int AS $$\nBEGIN RETURN 1; END;\n$$ LANGUAGE plpgsql;";
        let lexed = tokenize(src, Dialect::PostgreSql);
        let delims: Vec<_> = lexed.tokens.iter().filter(|t| t.is_dollar_delimiter()).collect();
        assert_eq!(delims.len(), 2);
        assert!(lexed.tokens.iter().any(|t| t.is_keyword("BEGIN")));
    }

    #[test]
    fn dollar_string_elsewhere_is_literal() {
        let lexed = tokenize("SELECT $tag$BEGIN$tag$, $1;", Dialect::PostgreSql);
        assert_eq!(lexed.tokens[1].kind, TokenKind::Literal);
        assert_eq!(lexed.tokens[1].text, "$tag$BEGIN$tag$");
        assert_eq!(lexed.tokens[3].kind, TokenKind::Identifier);
        assert!(!lexed.tokens.iter().any(|t| t.is_keyword("BEGIN")));
    }

    #[test]
    fn slash_terminator_versus_division() {
        let lexed = tokenize("BEGIN x := 4 / 2; END;\n/\n", Dialect::Oracle);
        let slashes: Vec<_> = lexed.tokens.iter().filter(|t| t.text == "/").collect();
        assert_eq!(slashes[0].kind, TokenKind::Operator);
        assert_eq!(slashes[1].kind, TokenKind::Punctuation);
        assert!(slashes[1].is_slash_terminator());
    }

    #[test]
    fn psql_meta_command_is_keyword() {
        let lexed = tokenize("\\set ON_ERROR_STOP on\nSELECT 1;", Dialect::PostgreSql);
        assert!(lexed.tokens[0].is_meta_command());
        assert_eq!(lexed.tokens[0].text, "\\set");
    }

    #[test]
    fn quoted_identifier_is_never_keyword() {
        let lexed = tokenize("SELECT \"BEGIN\" FROM t", Dialect::Oracle);
        assert!(lexed.tokens[1].is_quoted_identifier());
        assert!(!lexed.tokens[1].is_word());
    }

    #[test]
    fn line_index() {
        let idx = LineIndex::new("a\nbb\n\nc");
        assert_eq!(idx.line_of(0), 1);
        assert_eq!(idx.line_of(2), 2);
        assert_eq!(idx.line_of(5), 3);
        assert_eq!(idx.line_of(6), 4);
        assert_eq!(line_count("a\nb\n"), 2);
        assert_eq!(line_count(""), 0);
    }
}
