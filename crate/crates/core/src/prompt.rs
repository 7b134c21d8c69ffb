//! Prompt templates and deterministic prompt compilation.
//!
//! Grammar (flat, no conditionals):
//!
//! ```text
//! template    := (literal | placeholder)*
//! placeholder := '{' name '}'        optional slot
//!              | '{' name '!}'       required slot
//! literal     := any text, with '{{' and '}}' standing for '{' and '}'
//! ```
//!
//! Placeholder names are the [`AttrField`] names. Parsing is lossless:
//! [`PromptTemplate::to_source`] reproduces the parsed text byte for byte.

use std::fmt;
use std::fs;
use std::io;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::SiteRecord;

pub const DEFAULT_TEMPLATE_ID: &str = "isometric";

/// Shipped isometric-render template.
pub const DEFAULT_TEMPLATE_SOURCE: &str =
    include_str!("../templates/isometric.prompt").trim_ascii_end();

const LIST_SEPARATOR: &str = ", ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unterminated placeholder starting at byte {offset}")]
    Unterminated { offset: usize },
    #[error("unmatched '}}' at byte {offset} (write '}}}}' for a literal brace)")]
    UnmatchedClose { offset: usize },
    #[error("empty placeholder name at byte {offset}")]
    EmptyName { offset: usize },
    #[error("unknown field {name:?} at byte {offset}")]
    UnknownField { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompileError {
    #[error("required attribute {0} is missing or empty")]
    MissingRequired(AttrField),
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateStoreError {
    #[error("template {0:?} not found")]
    NotFound(String),
    #[error("invalid template id {0:?}")]
    BadId(String),
    #[error("template {id}: {source}")]
    Parse {
        id: String,
        source: TemplateError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrField {
    SiteName,
    StructuralType,
    PrimaryMaterial,
    ScaleElements,
    DecorativeFeatures,
    Illumination,
    /// Decorative features followed by scale elements, as one list.
    FeaturesJoined,
}

impl AttrField {
    pub const ALL: [AttrField; 7] = [
        AttrField::SiteName,
        AttrField::StructuralType,
        AttrField::PrimaryMaterial,
        AttrField::ScaleElements,
        AttrField::DecorativeFeatures,
        AttrField::Illumination,
        AttrField::FeaturesJoined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttrField::SiteName => "site_name",
            AttrField::StructuralType => "structural_type",
            AttrField::PrimaryMaterial => "primary_material",
            AttrField::ScaleElements => "scale_elements",
            AttrField::DecorativeFeatures => "decorative_features",
            AttrField::Illumination => "illumination",
            AttrField::FeaturesJoined => "features_joined",
        }
    }

    /// Attribute fields this slot reads from.
    fn sources(self) -> &'static [AttrField] {
        match self {
            AttrField::FeaturesJoined => &[AttrField::DecorativeFeatures, AttrField::ScaleElements],
            AttrField::SiteName => &[AttrField::SiteName],
            AttrField::StructuralType => &[AttrField::StructuralType],
            AttrField::PrimaryMaterial => &[AttrField::PrimaryMaterial],
            AttrField::ScaleElements => &[AttrField::ScaleElements],
            AttrField::DecorativeFeatures => &[AttrField::DecorativeFeatures],
            AttrField::Illumination => &[AttrField::Illumination],
        }
    }
}

impl fmt::Display for AttrField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttrField {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttrField::ALL.into_iter().find(|f| f.name() == s).ok_or(())
    }
}

/// Architectural attributes a prompt is compiled from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttributeSet {
    pub site_name: String,
    pub structural_type: String,
    pub primary_material: String,
    pub scale_elements: Vec<String>,
    pub decorative_features: Vec<String>,
    pub illumination: String,
}

impl AttributeSet {
    pub fn from_site(site: &SiteRecord) -> Self {
        Self {
            site_name: site.name.clone(),
            structural_type: site.site_type.clone(),
            primary_material: site.material.clone(),
            scale_elements: site.scale_elements.clone(),
            decorative_features: site.features.clone(),
            illumination: site.illumination.clone(),
        }
    }

    /// Rendered slot value; list fields are joined with ", ".
    pub fn value(&self, field: AttrField) -> String {
        match field {
            AttrField::SiteName => self.site_name.clone(),
            AttrField::StructuralType => self.structural_type.clone(),
            AttrField::PrimaryMaterial => self.primary_material.clone(),
            AttrField::ScaleElements => join_list(&self.scale_elements),
            AttrField::DecorativeFeatures => join_list(&self.decorative_features),
            AttrField::Illumination => self.illumination.clone(),
            AttrField::FeaturesJoined => join_list(
                self.decorative_features
                    .iter()
                    .chain(&self.scale_elements)
                    .map(String::as_str),
            ),
        }
    }

    fn is_blank(&self, field: AttrField) -> bool {
        self.value(field).trim().is_empty()
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("attribute set serializes");
        hex::encode(Sha256::digest(json))
    }
}

fn join_list<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items
        .into_iter()
        .map(|s| s.as_ref().trim().to_string())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(LIST_SEPARATOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Token {
    Literal { text: String },
    Placeholder { field: AttrField, required: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    source: String,
    tokens: Vec<Token>,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        Ok(Self {
            source: source.to_string(),
            tokens: tokenize(source)?,
        })
    }

    pub fn default_isometric() -> Self {
        Self::parse(DEFAULT_TEMPLATE_SOURCE).expect("shipped template parses")
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Re-serializes the token stream.
    pub fn to_source(&self) -> String {
        serialize_tokens(&self.tokens)
    }

    pub fn placeholders(&self) -> impl Iterator<Item = (AttrField, bool)> + '_ {
        self.tokens.iter().filter_map(|t| match t {
            Token::Placeholder { field, required } => Some((*field, *required)),
            Token::Literal { .. } => None,
        })
    }
}

fn tokenize(source: &str) -> Result<Vec<Token>, TemplateError> {
    let mut tokens = Vec::new();
    let mut literal = String::new();
    let bytes = source.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                literal.push('{');
                i += 2;
            }
            b'{' => {
                let start = i;
                let close = source[start + 1..]
                    .find(['{', '}'])
                    .map(|rel| start + 1 + rel)
                    .filter(|&at| bytes[at] == b'}')
                    .ok_or(TemplateError::Unterminated { offset: start })?;
                let inner = &source[start + 1..close];
                let (name, required) = match inner.strip_suffix('!') {
                    Some(name) => (name, true),
                    None => (inner, false),
                };
                if name.is_empty() {
                    return Err(TemplateError::EmptyName { offset: start });
                }
                let field = name.parse().map_err(|()| TemplateError::UnknownField {
                    name: name.to_string(),
                    offset: start,
                })?;
                if !literal.is_empty() {
                    tokens.push(Token::Literal {
                        text: std::mem::take(&mut literal),
                    });
                }
                tokens.push(Token::Placeholder { field, required });
                i = close + 1;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                literal.push('}');
                i += 2;
            }
            b'}' => return Err(TemplateError::UnmatchedClose { offset: i }),
            _ => {
                // advance one whole UTF-8 scalar
                let ch = source[i..].chars().next().expect("in bounds");
                literal.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    if !literal.is_empty() {
        tokens.push(Token::Literal { text: literal });
    }
    Ok(tokens)
}

pub fn serialize_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for token in tokens {
        match token {
            Token::Literal { text } => {
                for ch in text.chars() {
                    match ch {
                        '{' => out.push_str("{{"),
                        '}' => out.push_str("}}"),
                        c => out.push(c),
                    }
                }
            }
            Token::Placeholder { field, required } => {
                out.push('{');
                out.push_str(field.name());
                if *required {
                    out.push('!');
                }
                out.push('}');
            }
        }
    }
    out
}

/// A compiled prompt and the provenance needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub template_id: String,
    pub attr_digest: String,
}

pub fn compile_prompt(
    template_id: &str,
    template: &PromptTemplate,
    attrs: &AttributeSet,
) -> Result<PromptText, CompileError> {
    let mut text = String::new();
    for token in template.tokens() {
        match token {
            Token::Literal { text: lit } => text.push_str(lit),
            Token::Placeholder { field, required } => {
                let value = attrs.value(*field);
                if *required && value.trim().is_empty() {
                    return Err(CompileError::MissingRequired(*field));
                }
                text.push_str(&value);
            }
        }
    }
    Ok(PromptText {
        text,
        template_id: template_id.to_string(),
        attr_digest: attrs.digest(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "issue", content = "field", rename_all = "snake_case")]
pub enum LintIssue {
    MissingRequired(AttrField),
    EmptyOptional(AttrField),
    Unused(AttrField),
}

/// Checks an attribute set against a template. An empty list means clean.
pub fn lint_attributes(attrs: &AttributeSet, template: &PromptTemplate) -> Vec<LintIssue> {
    let mut issues = Vec::new();
    let mut used = Vec::new();
    for (field, required) in template.placeholders() {
        used.extend_from_slice(field.sources());
        let issue = if !attrs.is_blank(field) {
            continue;
        } else if required {
            LintIssue::MissingRequired(field)
        } else {
            LintIssue::EmptyOptional(field)
        };
        if !issues.contains(&issue) {
            issues.push(issue);
        }
    }
    for field in AttrField::ALL {
        if field != AttrField::FeaturesJoined && !used.contains(&field) && !attrs.is_blank(field) {
            issues.push(LintIssue::Unused(field));
        }
    }
    issues
}

/// Template files under `templates/<id>.prompt`.
///
/// A single trailing newline in the file is not part of the template. The
/// default template is served from the binary when no file overrides it.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    dir: PathBuf,
}

impl TemplateStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TemplateStoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn load(&self, id: &str) -> Result<PromptTemplate, TemplateStoreError> {
        check_template_id(id)?;
        let path = self.dir.join(format!("{id}.prompt"));
        let source = match fs::read_to_string(&path) {
            Ok(text) => strip_one_newline(&text).to_string(),
            Err(e) if e.kind() == io::ErrorKind::NotFound && id == DEFAULT_TEMPLATE_ID => {
                DEFAULT_TEMPLATE_SOURCE.to_string()
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(TemplateStoreError::NotFound(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        PromptTemplate::parse(&source).map_err(|source| TemplateStoreError::Parse {
            id: id.to_string(),
            source,
        })
    }

    pub fn save(&self, id: &str, source: &str) -> Result<PromptTemplate, TemplateStoreError> {
        check_template_id(id)?;
        let template = PromptTemplate::parse(source).map_err(|e| TemplateStoreError::Parse {
            id: id.to_string(),
            source: e,
        })?;
        crate::assets::write_atomic(
            &self.dir.join(format!("{id}.prompt")),
            format!("{source}\n").as_bytes(),
        )?;
        Ok(template)
    }
}

fn check_template_id(id: &str) -> Result<(), TemplateStoreError> {
    let ok = !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(TemplateStoreError::BadId(id.to_string()))
    }
}

fn strip_one_newline(text: &str) -> &str {
    text.strip_suffix("\r\n")
        .or_else(|| text.strip_suffix('\n'))
        .unwrap_or(text)
}
