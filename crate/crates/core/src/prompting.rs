//! Prompt templates with `{placeholder}` substitution and single-line
//! conditional sections written as `{flag}: [ ... ]`.
//!
//! A language pack is a directory laid out as
//! `<pack>/<game_kind>/<language_tag>.txt`. Each file starts with a TOML
//! header holding the localized strategy labels and history format,
//! followed by a line containing only `---` and then the template body.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::game::{normalize_label, StrategyId, Transcript};

pub const FLAG_INTRO: &str = "intro";
pub const FLAG_GAME_LENGTH: &str = "gameLength";
pub const FLAG_OPPONENT_INTRO: &str = "opponentIntro";

pub const KNOWN_FLAGS: &[&str] = &[FLAG_INTRO, FLAG_GAME_LENGTH, FLAG_OPPONENT_INTRO];

pub const KNOWN_PLACEHOLDERS: &[&str] = &[
    "currentPlayerName",
    "opponent1",
    "personality",
    "opponentPersonality",
    "strategy1",
    "strategy2",
    "weight1",
    "weight2",
    "weight3",
    "weight4",
    "nRounds",
    "currentRound",
    "history",
];

/// Placeholders a template for `game_kind` must mention.
pub fn required_placeholders(game_kind: &str) -> &'static [&'static str] {
    match game_kind {
        "zero_sum" => &["currentPlayerName", "opponent1", "strategy1", "strategy2", "weight1", "weight2"],
        "prisoners_dilemma" => &[
            "currentPlayerName",
            "opponent1",
            "strategy1",
            "strategy2",
            "weight1",
            "weight2",
            "weight3",
            "weight4",
            "currentRound",
            "history",
        ],
        _ => &["strategy1", "strategy2"],
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("missing placeholder: {0}")]
    MissingPlaceholder(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown placeholder: {0}")]
    UnknownPlaceholder(String),
    #[error("unknown conditional flag: {0}")]
    UnknownFlag(String),
    #[error("missing required placeholder {{{placeholder}}} for game kind {kind}")]
    MissingRequired { kind: String, placeholder: String },
    #[error("strategy labels must be present and distinct")]
    Labels,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Piece(Piece),
    Section { flag: String, inner: Vec<Piece> },
}

#[derive(Debug, Clone, PartialEq)]
struct Line {
    segments: Vec<Segment>,
}

fn parse_name(s: &str) -> Option<(&str, &str)> {
    let end = s.find('}')?;
    let name = &s[..end];
    let valid = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    valid.then(|| (name, &s[end + 1..]))
}

fn parse_pieces(mut s: &str, line: usize) -> Result<Vec<Piece>, TemplateError> {
    let mut out = Vec::new();
    while let Some(pos) = s.find('{') {
        if pos > 0 {
            out.push(Piece::Text(s[..pos].to_string()));
        }
        let (name, rest) = parse_name(&s[pos + 1..]).ok_or_else(|| TemplateError::Syntax {
            line,
            msg: "unterminated or malformed placeholder".into(),
        })?;
        out.push(Piece::Placeholder(name.to_string()));
        s = rest;
    }
    if !s.is_empty() {
        out.push(Piece::Text(s.to_string()));
    }
    Ok(out)
}

fn parse_line(mut s: &str, line: usize) -> Result<Line, TemplateError> {
    let mut segments = Vec::new();
    let mut text = String::new();
    while let Some(pos) = s.find('{') {
        text.push_str(&s[..pos]);
        let after = &s[pos + 1..];
        let Some((name, rest)) = parse_name(after) else {
            return Err(TemplateError::Syntax { line, msg: "unterminated or malformed placeholder".into() });
        };
        if let Some(body) = rest.strip_prefix(": [") {
            let close = body.find(']').ok_or_else(|| TemplateError::Syntax {
                line,
                msg: format!("conditional section {{{name}}} is not closed on the same line"),
            })?;
            let inner = &body[..close];
            if inner.contains('[') || inner.contains("}: [") {
                return Err(TemplateError::Syntax { line, msg: "nested conditional sections".into() });
            }
            if !text.is_empty() {
                segments.push(Segment::Piece(Piece::Text(std::mem::take(&mut text))));
            }
            segments.push(Segment::Section { flag: name.to_string(), inner: parse_pieces(inner, line)? });
            s = &body[close + 1..];
        } else {
            if !text.is_empty() {
                segments.push(Segment::Piece(Piece::Text(std::mem::take(&mut text))));
            }
            segments.push(Segment::Piece(Piece::Placeholder(name.to_string())));
            s = rest;
        }
    }
    text.push_str(s);
    if !text.is_empty() {
        segments.push(Segment::Piece(Piece::Text(text)));
    }
    Ok(Line { segments })
}

/// A parsed template for one language and game kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub language_tag: String,
    pub game_kind: String,
    pub strategy_labels: [String; 2],
    /// Uses `{round}`, `{own}`, `{other}` and `{opponent1}`.
    pub history_item_format: String,
    pub history_separator: String,
    pub empty_history_marker: String,
    body: String,
    lines: Vec<Line>,
}

pub const DEFAULT_HISTORY_ITEM: &str = "Round {round}: you chose {own}, {opponent1} chose {other}.";

impl PromptTemplate {
    pub fn parse(
        language_tag: &str,
        game_kind: &str,
        strategy_labels: [String; 2],
        body: &str,
    ) -> Result<Self, TemplateError> {
        let lines = body
            .split_inclusive('\n')
            .enumerate()
            .map(|(i, l)| parse_line(l, i + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let t = PromptTemplate {
            language_tag: language_tag.to_string(),
            game_kind: game_kind.to_string(),
            strategy_labels,
            history_item_format: DEFAULT_HISTORY_ITEM.to_string(),
            history_separator: "\n".to_string(),
            empty_history_marker: "none".to_string(),
            body: body.to_string(),
            lines,
        };
        t.check()?;
        Ok(t)
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    fn check(&self) -> Result<(), TemplateError> {
        let [a, b] = &self.strategy_labels;
        if normalize_label(a).is_empty() || normalize_label(b).is_empty() || normalize_label(a) == normalize_label(b) {
            return Err(TemplateError::Labels);
        }
        for flag in self.flags() {
            if !KNOWN_FLAGS.contains(&flag.as_str()) {
                return Err(TemplateError::UnknownFlag(flag));
            }
        }
        let used = self.placeholders();
        for p in &used {
            if !KNOWN_PLACEHOLDERS.contains(&p.as_str()) {
                return Err(TemplateError::UnknownPlaceholder(p.clone()));
            }
        }
        for req in required_placeholders(&self.game_kind) {
            if !used.contains(*req) {
                return Err(TemplateError::MissingRequired {
                    kind: self.game_kind.clone(),
                    placeholder: req.to_string(),
                });
            }
        }
        for token in ["{round}", "{own}", "{other}"] {
            if !self.history_item_format.contains(token) && self.game_kind == "prisoners_dilemma" {
                return Err(TemplateError::Syntax {
                    line: 0,
                    msg: format!("history item format lacks {token}"),
                });
            }
        }
        Ok(())
    }

    /// Every placeholder mentioned anywhere, including inside sections.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |p: &Piece| {
            if let Piece::Placeholder(n) = p {
                out.insert(n.clone());
            }
        };
        for line in &self.lines {
            for seg in &line.segments {
                match seg {
                    Segment::Piece(p) => add(p),
                    Segment::Section { inner, .. } => inner.iter().for_each(&mut add),
                }
            }
        }
        out
    }

    pub fn flags(&self) -> BTreeSet<String> {
        self.lines
            .iter()
            .flat_map(|l| l.segments.iter())
            .filter_map(|s| match s {
                Segment::Section { flag, .. } => Some(flag.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn label(&self, s: StrategyId) -> &str {
        &self.strategy_labels[s.index()]
    }
}

/// Rendered placeholder values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlaceholderMap(BTreeMap<String, String>);

impl PlaceholderMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> &mut Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn with(mut self, key: &str, value: impl Into<String>) -> Self {
        self.set(key, value);
        self
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Sets `weight1..weightN` from configuration values.
    pub fn set_weights(&mut self, weights: &[f64]) -> &mut Self {
        for (i, w) in weights.iter().enumerate() {
            self.set(&format!("weight{}", i + 1), format_number(*w));
        }
        self
    }
}

/// Shortest decimal rendering, no trailing zeros ("6", "0.5", "-2").
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

/// Set of enabled conditional sections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Flags(BTreeSet<String>);

impl Flags {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, flag: &str) -> Self {
        self.0.insert(flag.to_string());
        self
    }

    pub fn set(&mut self, flag: &str, on: bool) {
        if on {
            self.0.insert(flag.to_string());
        } else {
            self.0.remove(flag);
        }
    }

    pub fn contains(&self, flag: &str) -> bool {
        self.0.contains(flag)
    }
}

fn render_pieces(pieces: &[Piece], values: &PlaceholderMap, out: &mut String) -> Result<(), RenderError> {
    for p in pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Placeholder(name) => {
                out.push_str(values.get(name).ok_or_else(|| RenderError::MissingPlaceholder(name.clone()))?)
            }
        }
    }
    Ok(())
}

/// Substitutes placeholders and resolves conditional sections. A disabled
/// section that is alone on its line removes the whole line.
pub fn render(template: &PromptTemplate, values: &PlaceholderMap, flags: &Flags) -> Result<String, RenderError> {
    let mut out = String::with_capacity(template.body.len() + 256);
    for line in &template.lines {
        let mut had_disabled = false;
        let mut rendered = String::new();
        for seg in &line.segments {
            match seg {
                Segment::Piece(p) => render_pieces(std::slice::from_ref(p), values, &mut rendered)?,
                Segment::Section { flag, inner } => {
                    if flags.contains(flag) {
                        render_pieces(inner, values, &mut rendered)?;
                    } else {
                        had_disabled = true;
                    }
                }
            }
        }
        if had_disabled && rendered.trim().is_empty() {
            continue;
        }
        out.push_str(&rendered);
    }
    Ok(out)
}

/// Lists past rounds from the perspective of agent `perspective` (1 or 2).
pub fn format_history(t: &Transcript, template: &PromptTemplate, perspective: u8, opponent_name: &str) -> String {
    if t.is_empty() {
        return template.empty_history_marker.clone();
    }
    t.rounds()
        .iter()
        .map(|r| {
            let (own, other) = if perspective == 2 { (r.choice_p2, r.choice_p1) } else { (r.choice_p1, r.choice_p2) };
            template
                .history_item_format
                .replace("{round}", &r.round_index.to_string())
                .replace("{own}", template.label(own))
                .replace("{other}", template.label(other))
                .replace("{opponent1}", opponent_name)
        })
        .collect::<Vec<_>>()
        .join(&template.history_separator)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(default)]
    language: Option<String>,
    strategy1: String,
    strategy2: String,
    #[serde(default)]
    history_item: Option<String>,
    #[serde(default)]
    history_separator: Option<String>,
    #[serde(default)]
    empty_history: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PackProblem {
    Io { path: PathBuf, msg: String },
    Parse { path: PathBuf, msg: String },
    DuplicateLanguage { kind: String, language: String },
    Template { path: PathBuf, error: TemplateError },
    Empty(PathBuf),
}

impl fmt::Display for PackProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PackProblem::Io { path, msg } => write!(f, "{}: {msg}", path.display()),
            PackProblem::Parse { path, msg } => write!(f, "{}: unparseable: {msg}", path.display()),
            PackProblem::DuplicateLanguage { kind, language } => {
                write!(f, "duplicate language {language:?} for game kind {kind}")
            }
            PackProblem::Template { path, error } => write!(f, "{}: {error}", path.display()),
            PackProblem::Empty(path) => write!(f, "{}: no templates found", path.display()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("language pack invalid: {}", .problems.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("; "))]
pub struct PackError {
    pub problems: Vec<PackProblem>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateFileError {
    #[error("{0}")]
    Header(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Parses one template file's text.
pub fn parse_template_file(
    text: &str,
    game_kind: &str,
    default_tag: &str,
) -> Result<PromptTemplate, TemplateFileError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut split = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_end_matches(['\n', '\r']) == "---" {
            split = Some((offset, offset + line.len()));
            break;
        }
        offset += line.len();
    }
    let (header_end, body_start) =
        split.ok_or_else(|| TemplateFileError::Header("missing '---' separator after header".into()))?;
    let header: Header =
        toml::from_str(&text[..header_end]).map_err(|e| TemplateFileError::Header(e.to_string()))?;
    let body = &text[body_start..];
    let body = body.strip_suffix('\n').unwrap_or(body);
    let tag = header.language.unwrap_or_else(|| default_tag.to_string()).to_lowercase();
    let mut t = PromptTemplate::parse(&tag, game_kind, [header.strategy1, header.strategy2], body)?;
    if let Some(h) = header.history_item {
        t.history_item_format = h;
    }
    if let Some(s) = header.history_separator {
        t.history_separator = s;
    }
    if let Some(e) = header.empty_history {
        t.empty_history_marker = e;
    }
    t.check()?;
    Ok(t)
}

/// Validated templates keyed by game kind, then language tag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LanguagePack {
    templates: BTreeMap<String, BTreeMap<String, PromptTemplate>>,
}

impl LanguagePack {
    pub fn insert(&mut self, template: PromptTemplate) -> Option<PromptTemplate> {
        self.templates
            .entry(template.game_kind.clone())
            .or_default()
            .insert(template.language_tag.clone(), template)
    }

    pub fn get(&self, game_kind: &str, language: &str) -> Option<&PromptTemplate> {
        self.templates.get(game_kind)?.get(language)
    }

    pub fn game_kinds(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn languages(&self, game_kind: &str) -> Vec<&str> {
        self.templates.get(game_kind).map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default()
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, PackProblem> {
    let rd = fs::read_dir(dir).map_err(|e| PackProblem::Io { path: dir.to_path_buf(), msg: e.to_string() })?;
    let mut v: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    v.sort();
    Ok(v)
}

pub fn load_language_pack(path: impl AsRef<Path>) -> Result<LanguagePack, PackError> {
    let root = path.as_ref();
    let mut pack = LanguagePack::default();
    let mut problems = Vec::new();
    let kinds = match sorted_entries(root) {
        Ok(v) => v,
        Err(p) => return Err(PackError { problems: vec![p] }),
    };
    for kind_dir in kinds.into_iter().filter(|p| p.is_dir()) {
        let kind = kind_dir.file_name().unwrap_or_default().to_string_lossy().to_string();
        let files = match sorted_entries(&kind_dir) {
            Ok(v) => v,
            Err(p) => {
                problems.push(p);
                continue;
            }
        };
        for file in files.into_iter().filter(|p| p.extension().is_some_and(|e| e == "txt")) {
            let stem = file.file_stem().unwrap_or_default().to_string_lossy().to_string();
            let text = match fs::read_to_string(&file) {
                Ok(t) => t,
                Err(e) => {
                    problems.push(PackProblem::Io { path: file.clone(), msg: e.to_string() });
                    continue;
                }
            };
            match parse_template_file(&text, &kind, &stem) {
                Ok(t) => {
                    let language = t.language_tag.clone();
                    if pack.insert(t).is_some() {
                        problems.push(PackProblem::DuplicateLanguage { kind: kind.clone(), language });
                    }
                }
                Err(TemplateFileError::Header(msg)) => problems.push(PackProblem::Parse { path: file, msg }),
                Err(TemplateFileError::Template(error)) => problems.push(PackProblem::Template { path: file, error }),
            }
        }
    }
    if pack.templates.is_empty() && problems.is_empty() {
        problems.push(PackProblem::Empty(root.to_path_buf()));
    }
    if problems.is_empty() {
        Ok(pack)
    } else {
        Err(PackError { problems })
    }
}
