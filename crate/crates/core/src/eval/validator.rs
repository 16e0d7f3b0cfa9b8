//! PostgreSQL-dialect syntax findings.
//!
//! The built-in validator checks a statement-level subset:
//!
//! * the statement starts with a known PostgreSQL command;
//! * `INSERT INTO`, `DELETE FROM`, `UPDATE ... SET`;
//! * `CREATE` names an object kind PostgreSQL has (no `PACKAGE`, `SYNONYM`);
//! * functions and procedures carry a quoted body;
//! * a top-level `BEGIN` is a transaction start, not an anonymous block;
//! * parentheses balance, literals and comments terminate;
//! * `BEGIN`/`END`, `IF`/`END IF`, `LOOP`/`END LOOP` and `CASE`/`END`
//!   balance inside dollar-quoted bodies;
//! * Oracle-only syntax (`(+)`, `MINUS`, a `/` line) is rejected.
//!
//! At most one error is reported per statement. Oracle built-ins that still
//! parse (`NVL`, `SYSDATE`, `VARCHAR2`, ...) give one warning per statement.
//!
//! An external command can replace it. The command gets the path of a file
//! holding the script and prints `severity<TAB>line<TAB>message` per finding;
//! its exit status is ignored.

use std::io::Write as _;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::{line_count, tokenize, Dialect, LineIndex, Token, TokenKind};
use crate::segment::{segment, BlockDepth, UnitKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxFinding {
    pub file: String,
    /// 1-based.
    pub line: usize,
    pub severity: Severity,
    pub message: String,
    pub statement_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Validator {
    #[default]
    Builtin,
    External { command: Vec<String> },
}

impl Validator {
    /// `builtin`, or a whitespace-separated command line.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.is_empty() || spec == "builtin" {
            return Ok(Validator::Builtin);
        }
        Ok(Validator::External {
            command: spec.split_whitespace().map(str::to_string).collect(),
        })
    }

    pub fn id(&self) -> String {
        match self {
            Validator::Builtin => "builtin".into(),
            Validator::External { command } => command.join(" "),
        }
    }
}

/// Byte span and first line of each non-trivia statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatementSpan {
    pub start: usize,
    pub end: usize,
    pub first_line: usize,
    pub last_line: usize,
}

pub fn statement_spans(text: &str) -> Vec<StatementSpan> {
    let lexed = tokenize(text, Dialect::PostgreSql);
    let lines = LineIndex::new(text);
    segment(text, &lexed, Dialect::PostgreSql)
        .into_iter()
        .filter(|u| u.kind != UnitKind::Trivia)
        .map(|u| {
            let first = &lexed.tokens[u.tokens.start];
            let last = &lexed.tokens[u.tokens.end - 1];
            StatementSpan {
                start: u.start,
                end: u.end,
                first_line: first.line,
                last_line: lines.line_of(last.end.saturating_sub(1)),
            }
        })
        .collect()
}

pub fn validate_syntax(file: &str, text: &str, validator: &Validator) -> Result<Vec<SyntaxFinding>> {
    match validator {
        Validator::Builtin => Ok(builtin(file, text)),
        Validator::External { command } => external(file, text, command),
    }
}

const STARTERS: &[&str] = &[
    "ABORT", "ALTER", "ANALYZE", "BEGIN", "CALL", "CHECKPOINT", "CLOSE", "CLUSTER", "COMMENT",
    "COMMIT", "COPY", "CREATE", "DEALLOCATE", "DECLARE", "DELETE", "DISCARD", "DO", "DROP", "END",
    "EXECUTE", "EXPLAIN", "FETCH", "GRANT", "IMPORT", "INSERT", "LISTEN", "LOAD", "LOCK", "MERGE",
    "MOVE", "NOTIFY", "PREPARE", "REASSIGN", "REFRESH", "REINDEX", "RELEASE", "RESET", "REVOKE",
    "ROLLBACK", "SAVEPOINT", "SECURITY", "SELECT", "SET", "SHOW", "START", "TABLE", "TRUNCATE",
    "UNLISTEN", "UPDATE", "VACUUM", "VALUES", "WITH",
];

const CREATE_MODIFIERS: &[&str] = &[
    "OR", "REPLACE", "TEMP", "TEMPORARY", "GLOBAL", "LOCAL", "UNLOGGED", "UNIQUE", "MATERIALIZED",
    "RECURSIVE", "CONSTRAINT", "TRUSTED", "PROCEDURAL", "DEFAULT", "EDITIONABLE", "NONEDITIONABLE",
];

const CREATE_OBJECTS: &[&str] = &[
    "ACCESS", "AGGREGATE", "CAST", "COLLATION", "CONVERSION", "DATABASE", "DOMAIN", "EVENT",
    "EXTENSION", "FOREIGN", "FUNCTION", "GROUP", "INDEX", "LANGUAGE", "OPERATOR", "POLICY",
    "PROCEDURE", "PUBLICATION", "ROLE", "RULE", "SCHEMA", "SEQUENCE", "SERVER", "STATISTICS",
    "SUBSCRIPTION", "TABLE", "TABLESPACE", "TEXT", "TRANSFORM", "TRIGGER", "TYPE", "USER", "VIEW",
];

const TRANSACTION_WORDS: &[&str] = &["TRANSACTION", "WORK", "ISOLATION", "READ", "DEFERRABLE", "NOT"];

const ORACLE_WORDS: &[&str] = &[
    "NVL", "NVL2", "DECODE", "SYSDATE", "SYSTIMESTAMP", "VARCHAR2", "NVARCHAR2", "NUMBER", "DUAL",
    "ROWNUM", "CLOB", "BLOB",
];

fn builtin(file: &str, text: &str) -> Vec<SyntaxFinding> {
    let lexed = tokenize(text, Dialect::PostgreSql);
    let toks = &lexed.tokens;
    let mut out = Vec::new();
    let units: Vec<_> = segment(text, &lexed, Dialect::PostgreSql)
        .into_iter()
        .filter(|u| u.kind != UnitKind::Trivia)
        .collect();
    for (idx, u) in units.iter().enumerate() {
        let st = &toks[u.tokens.clone()];
        let diag = lexed.diagnostics.iter().find(|d| d.offset >= u.start && d.offset < u.end);
        let error = match diag {
            Some(d) => Some((d.line, format!("{:?}", d.kind).to_lowercase())),
            None if u.kind == UnitKind::LineCommand => None,
            None => check_statement(st),
        };
        if let Some((line, message)) = error {
            out.push(SyntaxFinding {
                file: file.to_string(),
                line,
                severity: Severity::Error,
                message,
                statement_index: idx,
            });
        }
        let oracle = oracle_words(st);
        if !oracle.is_empty() {
            out.push(SyntaxFinding {
                file: file.to_string(),
                line: st[0].line,
                severity: Severity::Warning,
                message: format!("Oracle constructs: {}", oracle.join(", ")),
                statement_index: idx,
            });
        }
    }
    out
}

/// First error in one statement as `(line, message)`.
fn check_statement(st: &[Token<'_>]) -> Option<(usize, String)> {
    let first = &st[0];
    let err = |t: &Token<'_>, m: String| Some((t.line, m));

    if first.is_slash_terminator() {
        return err(first, "SQL*Plus `/` terminator".into());
    }
    if let Some(t) = st.iter().find(|t| t.is_slash_terminator()) {
        return err(t, "SQL*Plus `/` terminator".into());
    }
    if let Some(w) = st.windows(3).find(|w| w[0].is_punct("(") && w[1].text == "+" && w[2].is_punct(")")) {
        return err(&w[0], "Oracle outer join operator (+)".into());
    }
    if let Some(t) = st.iter().find(|t| t.is_keyword("MINUS")) {
        return err(t, "MINUS is not a PostgreSQL set operator".into());
    }
    if let Some(e) = paren_balance(st) {
        return Some(e);
    }

    if first.is_punct("(") {
        return None;
    }
    if !first.is_word() || !STARTERS.iter().any(|k| first.is_keyword(k)) {
        return err(first, format!("syntax error at or near \"{}\"", first.text));
    }
    let next = st.get(1);
    let upper = first.text.to_ascii_uppercase();
    match upper.as_str() {
        "INSERT" if !next.is_some_and(|n| n.is_keyword("INTO")) => err(first, "INSERT without INTO".into()),
        "DELETE" if !next.is_some_and(|n| n.is_keyword("FROM")) => err(first, "DELETE without FROM".into()),
        "UPDATE" if !st.iter().any(|t| t.is_keyword("SET")) => err(first, "UPDATE without SET".into()),
        "BEGIN" => match next {
            None => None,
            Some(n) if n.is_punct(";") || TRANSACTION_WORDS.iter().any(|k| n.is_keyword(k)) => None,
            Some(n) => err(n, "anonymous block outside a DO body".into()),
        },
        "DECLARE" if !st.iter().any(|t| t.is_keyword("CURSOR")) => {
            err(first, "DECLARE outside a function body".into())
        }
        "CREATE" => check_create(st),
        "DO" => check_bodies(st),
        _ => check_bodies(st),
    }
}

fn paren_balance(st: &[Token<'_>]) -> Option<(usize, String)> {
    let mut depth = 0i32;
    for t in st {
        if t.is_punct("(") {
            depth += 1;
        } else if t.is_punct(")") {
            depth -= 1;
            if depth < 0 {
                return Some((t.line, "unmatched `)`".into()));
            }
        }
    }
    (depth > 0).then(|| (st[0].line, "unclosed `(`".into()))
}

fn check_create(st: &[Token<'_>]) -> Option<(usize, String)> {
    let Some(kind) = st[1..]
        .iter()
        .find(|t| !(t.is_word() && CREATE_MODIFIERS.iter().any(|m| t.is_keyword(m))))
    else {
        return Some((st[0].line, "incomplete CREATE".into()));
    };
    if kind.is_keyword("PACKAGE") || kind.is_keyword("SYNONYM") {
        return Some((kind.line, format!("CREATE {} is not supported", kind.text.to_ascii_uppercase())));
    }
    if !kind.is_word() || !CREATE_OBJECTS.iter().any(|k| kind.is_keyword(k)) {
        return Some((kind.line, format!("syntax error at or near \"{}\"", kind.text)));
    }
    if kind.is_keyword("FUNCTION") || kind.is_keyword("PROCEDURE") {
        let quoted = st.iter().any(|t| t.is_dollar_delimiter())
            || st.windows(2).any(|w| w[0].is_keyword("AS") && w[1].kind == TokenKind::Literal)
            || st.windows(2).any(|w| w[0].is_keyword("BEGIN") && w[1].is_keyword("ATOMIC"))
            || st.windows(2).any(|w| w[0].is_keyword("RETURNS"))
                && st.iter().skip_while(|t| !t.is_punct(")")).any(|t| t.is_keyword("RETURN"));
        if !quoted {
            return Some((kind.line, "function body is not quoted".into()));
        }
    }
    check_bodies(st)
}

/// Block balance inside each dollar-quoted body.
fn check_bodies(st: &[Token<'_>]) -> Option<(usize, String)> {
    let mut i = 0;
    while i < st.len() {
        if !st[i].is_dollar_delimiter() {
            i += 1;
            continue;
        }
        let tag = st[i].text;
        let Some(close) = st[i + 1..].iter().position(|t| t.is_dollar_delimiter() && t.text == tag) else {
            return Some((st[i].line, format!("unterminated {tag} body")));
        };
        let body = &st[i + 1..i + 1 + close];
        let mut depth = BlockDepth::default();
        for j in 0..body.len() {
            depth.feed(body, j);
            if depth.depth < 0 {
                return Some((body[j].line, "END without matching block".into()));
            }
        }
        if depth.depth > 0 {
            return Some((st[i + 1 + close].line, "block not closed before end of body".into()));
        }
        i += close + 2;
    }
    None
}

fn oracle_words(st: &[Token<'_>]) -> Vec<String> {
    let mut found: Vec<String> = Vec::new();
    let mut push = |s: String| {
        if !found.contains(&s) {
            found.push(s);
        }
    };
    for (i, t) in st.iter().enumerate() {
        if !t.is_word() {
            continue;
        }
        let up = t.text.to_ascii_uppercase();
        if ORACLE_WORDS.contains(&up.as_str()) || up.starts_with("DBMS_") || up.starts_with("UTL_") {
            push(up);
        } else if up == "CONNECT" && st.get(i + 1).is_some_and(|n| n.is_keyword("BY")) {
            push("CONNECT BY".into());
        } else if (up == "NEXTVAL" || up == "CURRVAL") && i > 0 && st[i - 1].text == "." {
            push(format!(".{up}"));
        }
    }
    found
}

fn external(file: &str, text: &str, command: &[String]) -> Result<Vec<SyntaxFinding>> {
    let Some((program, args)) = command.split_first() else {
        return Err(Error::ValidatorUnavailable("empty validator command".into()));
    };
    let mut tmp = tempfile::Builder::new()
        .suffix(".sql")
        .tempfile()
        .map_err(|e| Error::ValidatorUnavailable(e.to_string()))?;
    tmp.write_all(text.as_bytes())
        .and_then(|_| tmp.flush())
        .map_err(|e| Error::ValidatorUnavailable(e.to_string()))?;
    let output = Command::new(program)
        .args(args)
        .arg(tmp.path())
        .output()
        .map_err(|e| Error::ValidatorUnavailable(format!("{program}: {e}")))?;
    let stdout = String::from_utf8_lossy(&output.stdout);
    let spans = statement_spans(text);
    let max_line = line_count(text).max(1);
    let mut out = Vec::new();
    for l in stdout.lines() {
        let mut parts = l.splitn(3, '\t');
        let (Some(sev), Some(line), Some(msg)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let severity = match sev.trim().to_ascii_lowercase().as_str() {
            "error" => Severity::Error,
            "warning" => Severity::Warning,
            _ => continue,
        };
        let Ok(line) = line.trim().parse::<usize>() else {
            continue;
        };
        let line = line.clamp(1, max_line);
        let statement_index = spans
            .iter()
            .position(|s| line <= s.last_line)
            .unwrap_or(spans.len().saturating_sub(1));
        out.push(SyntaxFinding {
            file: file.to_string(),
            line,
            severity,
            message: msg.to_string(),
            statement_index,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SerMetrics {
    pub statements: usize,
    pub error_statements: usize,
    pub errors: usize,
    pub warning_statements: usize,
    pub warnings: usize,
    pub lines: usize,
    /// Share of statements with at least one error.
    pub ser: f64,
    /// Errors per line.
    pub sepl: f64,
    /// Share of statements with at least one warning.
    pub warnings_norm: f64,
    pub valid: bool,
}

pub fn ser_metrics(findings: &[SyntaxFinding], text: &str) -> SerMetrics {
    let statements = statement_spans(text).len();
    let lines = line_count(text);
    let distinct = |sev: Severity| {
        let mut v: Vec<usize> = findings
            .iter()
            .filter(|f| f.severity == sev)
            .map(|f| f.statement_index)
            .collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    };
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    let warnings = findings.iter().filter(|f| f.severity == Severity::Warning).count();
    let error_statements = distinct(Severity::Error).min(statements.max(usize::from(errors > 0)));
    let warning_statements = distinct(Severity::Warning).min(statements.max(usize::from(warnings > 0)));
    let rate = |n: usize| if statements == 0 { 0.0 } else { (n as f64 / statements as f64).min(1.0) };
    SerMetrics {
        statements,
        error_statements,
        errors,
        warning_statements,
        warnings,
        lines,
        ser: rate(error_statements),
        sepl: if lines == 0 { 0.0 } else { errors as f64 / lines as f64 },
        warnings_norm: rate(warning_statements),
        valid: errors == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<SyntaxFinding> {
        builtin("f.sql", text)
            .into_iter()
            .filter(|f| f.severity == Severity::Error)
            .collect()
    }

    #[test]
    fn clean_and_malformed() {
        assert!(builtin("f", "SELECT 1;").is_empty());
        let e = errors("SELEC 1;");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 1);
    }

    #[test]
    fn middle_statement_is_indexed() {
        let e = errors("SELECT 1;\nINSERT t VALUES (1);\nSELECT 2;\n");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].statement_index, 1);
        assert_eq!(e[0].line, 2);
    }

    #[test]
    fn one_error_per_statement() {
        let e = errors("SELEC a (+ FROM t MINUS SELECT b FROM u;");
        assert_eq!(e.len(), 1);
    }

    #[test]
    fn accepted_postgres() {
        for ok in [
            "CREATE OR REPLACE FUNCTION f(a integer) RETURNS integer AS $$\nBEGIN\n  IF a > 0 THEN\n    RETURN a;\n  END IF;\n  RETURN 0;\nEND;\n$$ LANGUAGE plpgsql;",
            "DO $$ BEGIN FOR r IN SELECT 1 LOOP NULL; END LOOP; END $$;",
            "CREATE TABLE t (a numeric(10,2), b varchar(20));",
            "BEGIN;\nUPDATE t SET a = 1;\nCOMMIT;",
            "BEGIN TRANSACTION ISOLATION LEVEL SERIALIZABLE;",
            "WITH x AS (SELECT 1) SELECT * FROM x;",
            "(SELECT 1) UNION (SELECT 2);",
            "CREATE FUNCTION g() RETURNS int LANGUAGE sql AS 'SELECT 1';",
            "DECLARE c CURSOR FOR SELECT 1;",
            "\\set ON_ERROR_STOP on\nSELECT 1;",
            "SELECT CASE WHEN a THEN 1 ELSE 2 END FROM t;",
        ] {
            assert!(errors(ok).is_empty(), "{ok}: {:?}", errors(ok));
        }
    }

    #[test]
    fn rejected_oracle() {
        for bad in [
            "SELECT a FROM t, u WHERE t.id = u.id(+);",
            "SELECT a FROM t MINUS SELECT a FROM u;",
            "CREATE OR REPLACE PACKAGE p AS PROCEDURE x; END p;",
            "CREATE SYNONYM s FOR t;",
            "CREATE OR REPLACE PROCEDURE p IS BEGIN NULL; END;",
            "BEGIN\n  NULL;\nEND;",
            "DECLARE x NUMBER; BEGIN NULL; END;",
            "DO $$ BEGIN IF a THEN NULL; END; $$;",
            "SELECT (1;",
            "SELECT 1);",
            "SELECT 'open;",
            "DELETE t WHERE a = 1;",
            "UPDATE t WHERE a = 1;",
            "CREATE BOGUS x;",
            "PROMPT hello",
        ] {
            let e = errors(bad);
            assert!(!e.is_empty(), "{bad}");
            let mut idx: Vec<_> = e.iter().map(|f| f.statement_index).collect();
            idx.dedup();
            assert_eq!(idx.len(), e.len(), "{bad}: {e:?}");
        }
    }

    #[test]
    fn oracle_builtins_warn() {
        let f = builtin("f", "SELECT NVL(a, 0), SYSDATE FROM dual;\nSELECT s.NEXTVAL;\nSELECT 1;");
        let w: Vec<_> = f.iter().filter(|f| f.severity == Severity::Warning).collect();
        assert_eq!(w.len(), 2);
        assert!(w[0].message.contains("NVL") && w[0].message.contains("DUAL"));
        assert!(w[1].message.contains(".NEXTVAL"));
    }

    #[test]
    fn ser_counts() {
        let clean = "SELECT 1;";
        let m = ser_metrics(&builtin("f", clean), clean);
        assert_eq!((m.ser, m.valid), (0.0, true));

        let all_bad = "SELEC 1;\nSELEC 2;";
        let m = ser_metrics(&builtin("f", all_bad), all_bad);
        assert_eq!(m.ser, 1.0);
        assert!(!m.valid);

        let one_of_four = "SELECT 1;\nSELECT 2;\nSELEC 3;\nSELECT 4;\n";
        let m = ser_metrics(&builtin("f", one_of_four), one_of_four);
        assert_eq!(m.statements, 4);
        assert_eq!(m.ser, 0.25);
        assert_eq!(m.sepl, 0.25);

        let m = ser_metrics(&[], "");
        assert_eq!((m.ser, m.sepl, m.valid), (0.0, 0.0, true));
    }

    #[test]
    fn missing_external_tool_fails_loudly() {
        let v = Validator::parse("/nonexistent/validator --strict").unwrap();
        assert!(matches!(validate_syntax("f", "SELECT 1;", &v), Err(Error::ValidatorUnavailable(_))));
    }

    #[cfg(unix)]
    #[test]
    fn external_findings_are_parsed_and_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("v.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\nprintf 'error\\t2\\tbad thing\\nwarning\\t99\\tlate\\nnoise\\n'\nexit 3\n",
        )
        .unwrap();
        let v = Validator::External {
            command: vec!["sh".into(), script.display().to_string()],
        };
        let f = validate_syntax("f", "SELECT 1;\nSELECT 2;\nSELECT 3;", &v).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].line, f[0].statement_index, f[0].severity), (2, 1, Severity::Error));
        assert_eq!((f[1].line, f[1].statement_index), (3, 2));
    }
}
