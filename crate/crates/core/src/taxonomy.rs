//! Feature taxonomies: keyword-level definitions of the feature classes for
//! each dialect, loaded from a versioned TOML file.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::Dialect;

pub const TAXONOMY_FORMAT_VERSION: u32 = 1;

const ORACLE_DEFAULT: &str = include_str!("../assets/oracle.taxonomy.toml");
const POSTGRES_DEFAULT: &str = include_str!("../assets/postgresql.taxonomy.toml");

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pattern {
    /// Only matches as the first token of a statement.
    pub anchored: bool,
    pub words: Vec<PatternWord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatternWord {
    /// Upper-cased text (without the `*` for prefix words).
    pub text: String,
    pub prefix: bool,
}

impl PatternWord {
    pub fn matches(&self, token_text: &str) -> bool {
        if self.prefix {
            token_text.len() >= self.text.len()
                && token_text.is_char_boundary(self.text.len())
                && token_text[..self.text.len()].eq_ignore_ascii_case(&self.text)
        } else {
            token_text.eq_ignore_ascii_case(&self.text)
        }
    }
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Self> {
        let trimmed = raw.trim();
        let (anchored, body) = match trimmed.strip_prefix('^') {
            Some(rest) => (true, rest),
            None => (false, trimmed),
        };
        let words: Vec<PatternWord> = body
            .split_whitespace()
            .map(|w| match w.strip_suffix('*') {
                Some(stem) if !stem.is_empty() => PatternWord {
                    text: stem.to_uppercase(),
                    prefix: true,
                },
                _ => PatternWord {
                    text: w.to_uppercase(),
                    prefix: false,
                },
            })
            .collect();
        if words.is_empty() {
            return Err(Error::Taxonomy(format!("empty keyword pattern `{raw}`")));
        }
        Ok(Pattern { anchored, words })
    }

    /// Canonical form used for the disjointness check; the anchor is ignored
    /// so `^SET` and `SET` collide.
    fn key(&self) -> String {
        self.words
            .iter()
            .map(|w| if w.prefix { format!("{}*", w.text) } else { w.text.clone() })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureClass {
    pub name: String,
    pub target_quality: f64,
    pub keyword_patterns: Vec<Pattern>,
    /// Script mode this class is restricted to (e.g. `rman`).
    pub mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTaxonomy {
    pub dialect: Dialect,
    pub classes: Vec<FeatureClass>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    version: u32,
    dialect: Dialect,
    #[serde(rename = "class")]
    classes: Vec<ClassFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassFile {
    name: String,
    target_quality: f64,
    keywords: Vec<String>,
    #[serde(default)]
    mode: Option<String>,
}

impl FeatureTaxonomy {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: TaxonomyFile =
            toml::from_str(text).map_err(|e| Error::Taxonomy(e.to_string()))?;
        if file.version != TAXONOMY_FORMAT_VERSION {
            return Err(Error::Taxonomy(format!(
                "unsupported taxonomy version {} (expected {TAXONOMY_FORMAT_VERSION})",
                file.version
            )));
        }
        let classes = file
            .classes
            .into_iter()
            .map(|c| {
                Ok(FeatureClass {
                    keyword_patterns: c
                        .keywords
                        .iter()
                        .map(|k| Pattern::parse(k))
                        .collect::<Result<_>>()?,
                    name: c.name,
                    target_quality: c.target_quality,
                    mode: c.mode.map(|m| m.to_ascii_lowercase()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let taxonomy = FeatureTaxonomy {
            dialect: file.dialect,
            classes,
        };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// The shipped taxonomy for a dialect.
    pub fn default_for(dialect: Dialect) -> Self {
        let text = match dialect {
            Dialect::Oracle => ORACLE_DEFAULT,
            Dialect::PostgreSql => POSTGRES_DEFAULT,
        };
        Self::from_toml(text).expect("bundled taxonomy is valid")
    }

    pub fn default_source(dialect: Dialect) -> &'static str {
        match dialect {
            Dialect::Oracle => ORACLE_DEFAULT,
            Dialect::PostgreSql => POSTGRES_DEFAULT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Taxonomy("taxonomy has no classes".into()));
        }
        let mut owners: HashMap<String, &str> = HashMap::new();
        let mut names = std::collections::HashSet::new();
        for class in &self.classes {
            if !names.insert(class.name.as_str()) {
                return Err(Error::Taxonomy(format!("duplicate class {}", class.name)));
            }
            if class.keyword_patterns.is_empty() {
                return Err(Error::Taxonomy(format!("class {} has no keywords", class.name)));
            }
            if !(0.0..=1.0).contains(&class.target_quality) {
                return Err(Error::Taxonomy(format!(
                    "class {} target_quality {} is outside [0, 1]",
                    class.name, class.target_quality
                )));
            }
            for pattern in &class.keyword_patterns {
                let key = pattern.key();
                if let Some(other) = owners.insert(key.clone(), &class.name) {
                    return Err(Error::Taxonomy(format!(
                        "keyword pattern `{key}` appears in both {other} and {}",
                        class.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }
}

/// Redistribution table from Oracle feature classes to PostgreSQL ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapping {
    /// source class -> [(target class, weight)]; weights of a row sum to 1.
    pub rows: BTreeMap<String, Vec<(String, f64)>>,
    /// Every class of the target taxonomy, in taxonomy order.
    pub target_classes: Vec<String>,
}

impl FeatureMapping {
    pub fn default_oracle_to_postgres() -> Self {
        let rows = [
            ("CORE_SQL", "CORE_SQL"),
            ("PL_SQL", "PL_PG_SQL"),
            ("SQL_PLUS", "PSQL"),
            ("DATABASE_MANAGEMENT", "DATABASE_MANAGEMENT"),
            ("RMAN", "DATABASE_MANAGEMENT"),
        ]
        .into_iter()
        .map(|(s, t)| (s.to_string(), vec![(t.to_string(), 1.0)]))
        .collect();
        let target_classes = FeatureTaxonomy::default_for(Dialect::PostgreSql)
            .class_names()
            .into_iter()
            .map(str::to_string)
            .collect();
        FeatureMapping {
            rows,
            target_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (source, targets) in &self.rows {
            let sum: f64 = targets.iter().map(|(_, w)| *w).sum();
            if targets.iter().any(|(_, w)| *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Mapping(format!(
                    "weights of row {source} must be non-negative and sum to 1 (got {sum})"
                )));
            }
            if let Some((t, _)) = targets
                .iter()
                .find(|(t, _)| !self.target_classes.iter().any(|c| c == t))
            {
                return Err(Error::Mapping(format!(
                    "row {source} targets unknown class {t}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_oracle_classes() {
        let t = FeatureTaxonomy::default_for(Dialect::Oracle);
        assert_eq!(
            t.class_names(),
            ["CORE_SQL", "PL_SQL", "SQL_PLUS", "DATABASE_MANAGEMENT", "RMAN"]
        );
        assert_eq!(t.classes[4].mode.as_deref(), Some("rman"));
    }

    #[test]
    fn default_postgres_classes() {
        let t = FeatureTaxonomy::default_for(Dialect::PostgreSql);
        assert_eq!(
            t.class_names(),
            ["CORE_SQL", "PL_PG_SQL", "DATABASE_MANAGEMENT", "PSQL"]
        );
    }

    #[test]
    fn duplicated_keyword_fails_validation() {
        let text = r#"
version = 1
dialect = "oracle"
[[class]]
name = "A"
target_quality = 0.5
keywords = ["SELECT", "begin"]
[[class]]
name = "B"
target_quality = 0.5
keywords = ["BEGIN"]
"#;
        let err = FeatureTaxonomy::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("`BEGIN` appears in both A and B"), "{err}");
    }

    #[test]
    fn anchor_does_not_make_a_pattern_distinct() {
        let text = r#"
version = 1
dialect = "oracle"
[[class]]
name = "A"
target_quality = 0.5
keywords = ["SET"]
[[class]]
name = "B"
target_quality = 0.5
keywords = ["^set"]
"#;
        assert!(FeatureTaxonomy::from_toml(text).is_err());
    }

    #[test]
    fn rejects_bad_fields() {
        let base = |tq: &str, kw: &str| {
            format!("version = 1\ndialect = \"oracle\"\n[[class]]\nname = \"A\"\ntarget_quality = {tq}\nkeywords = {kw}\n")
        };
        assert!(FeatureTaxonomy::from_toml(&base("1.5", "[\"X\"]")).is_err());
        assert!(FeatureTaxonomy::from_toml(&base("0.5", "[]")).is_err());
        assert!(FeatureTaxonomy::from_toml(&base("0.5", "[\"X\"]")).is_ok());
        assert!(FeatureTaxonomy::from_toml(&base("0.5", "[\"X\"]").replace("version = 1", "version = 2")).is_err());
    }

    #[test]
    fn pattern_parsing() {
        let p = Pattern::parse("^alter  system").unwrap();
        assert!(p.anchored);
        assert_eq!(p.words.len(), 2);
        let v = Pattern::parse("V$*").unwrap();
        assert!(v.words[0].prefix);
        assert!(v.words[0].matches("v$session"));
        assert!(!v.words[0].matches("V"));
        let meta = Pattern::parse("\\*").unwrap();
        assert!(meta.words[0].matches("\\copy"));
    }

    #[test]
    fn default_mapping_is_valid() {
        let m = FeatureMapping::default_oracle_to_postgres();
        m.validate().unwrap();
        assert_eq!(m.rows.len(), 5);
    }
}
