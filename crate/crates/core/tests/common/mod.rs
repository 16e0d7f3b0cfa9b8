//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqlmig::lexer::Dialect;
use sqlmig::profile::SourceScript;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const TABLES: &[&str] = &["emp", "dept", "orders", "items", "audit_log", "stock"];
const COLUMNS: &[&str] = &["id", "name", "amount", "created", "status", "qty"];

/// One Oracle statement, block or client command, always ending in a newline.
pub fn oracle_piece(r: &mut impl Rng) -> String {
    let t = *TABLES.choose(r).unwrap();
    let c = *COLUMNS.choose(r).unwrap();
    let c2 = *COLUMNS.choose(r).unwrap();
    let n: u32 = r.random_range(1..1000);
    match r.random_range(0..16) {
        0 => format!("SELECT {c} FROM {t} WHERE {c2} = {n};\n"),
        1 => format!("SELECT NVL({c}, 0) FROM {t} WHERE ROWNUM < {n};\n"),
        2 => format!("INSERT INTO {t} ({c}) VALUES ({n});\n"),
        3 => format!("UPDATE {t} SET {c} = SYSDATE WHERE {c2} IS NULL;\n"),
        4 => format!("DELETE FROM {t} WHERE {c} > {n};\n"),
        5 => format!("CREATE TABLE {t}_{n} ({c} NUMBER, {c2}_x VARCHAR2(20));\n"),
        6 => format!("BEGIN\n  UPDATE {t} SET {c} = {n};\n  DBMS_OUTPUT.PUT_LINE('done {n}');\nEND;\n/\n"),
        7 => format!(
            "CREATE OR REPLACE PROCEDURE p_{n} IS\n  v NUMBER;\nBEGIN\n  SELECT COUNT(*) INTO v FROM {t};\n\
             EXCEPTION\n  WHEN NO_DATA_FOUND THEN NULL;\nEND;\n/\n"
        ),
        8 => "SET SERVEROUTPUT ON\n".to_string(),
        9 => format!("SPOOL out_{n}.log\n"),
        10 => format!("-- SELECT {c} FROM {t} is only a comment\n"),
        11 => "/* BEGIN NULL; END; CONNECT BY */\n".to_string(),
        12 => format!("SELECT 'BEGIN; END; DBMS_OUTPUT' AS txt FROM dual;\n"),
        13 => format!("ALTER SYSTEM SET processes = {n};\n"),
        14 => format!("GRANT SELECT ON {t} TO app_role;\n"),
        _ => format!(
            "SELECT {c} FROM {t}\n  START WITH {c2} IS NULL\n  CONNECT BY PRIOR id = {c2};\n"
        ),
    }
}

pub fn oracle_script(r: &mut impl Rng, pieces: usize) -> String {
    (0..pieces).map(|_| oracle_piece(r)).collect()
}

/// `files` Oracle scripts named `f000.sql`, `f001.sql`, ...
pub fn oracle_corpus(seed: u64, files: usize) -> Vec<SourceScript> {
    let mut r = rng(seed);
    (0..files)
        .map(|i| {
            let pieces = r.random_range(1..30);
            SourceScript::new(format!("f{i:03}.sql"), Dialect::Oracle, oracle_script(&mut r, pieces))
        })
        .collect()
}

/// Space-separated lowercase words over `alphabet`.
pub fn words(r: &mut impl Rng, alphabet: &[u8], count: usize) -> String {
    (0..count)
        .map(|_| {
            let len = r.random_range(2..7);
            (0..len).map(|_| *alphabet.choose(r).unwrap() as char).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}
