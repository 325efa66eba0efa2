//! Sectioned `key = value` text used for run configs and model files.
//!
//! ```text
//! # comment
//! [train]
//! batch_size = 50
//! learning_rate = 1e-3
//! [sweep]
//! seeds = [1, 2, 3]
//! grid = [[8, 8], [12, 10]]
//! ```

use std::fmt::{self, Write as _};

use crate::error::{DpdError, Result};
use crate::exec::Mode;
use crate::ila::{Family, SweepConfig, WaveformSpec};
use crate::pa_sim::{preset, CoeffRule, DistortionLevel, PaConfig};
use crate::signal::{TapWindow, STANDARD_BANDWIDTH, STANDARD_SAMPLES};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::List(_) => "list",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:.16e}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\"")),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: Value,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Empty for keys before the first header.
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

/// A parsed file: sections in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Document {
    pub sections: Vec<Section>,
}

fn syntax(line: usize, message: impl Into<String>) -> DpdError {
    DpdError::Config { line, message: message.into() }
}

fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in line.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn bracket_depth(s: &str) -> i64 {
    let mut depth = 0;
    let mut in_str = false;
    let mut escaped = false;
    for ch in s.chars() {
        match ch {
            _ if escaped => escaped = false,
            '\\' if in_str => escaped = true,
            '"' => in_str = !in_str,
            '[' if !in_str => depth += 1,
            ']' if !in_str => depth -= 1,
            _ => {}
        }
    }
    depth
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

struct ValueParser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl ValueParser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn value(&mut self) -> Result<Value> {
        self.skip_ws();
        let rest = self.rest();
        if rest.starts_with('[') {
            self.pos += 1;
            let mut items = Vec::new();
            loop {
                self.skip_ws();
                if self.rest().starts_with(']') {
                    self.pos += 1;
                    return Ok(Value::List(items));
                }
                items.push(self.value()?);
                self.skip_ws();
                if self.rest().starts_with(',') {
                    self.pos += 1;
                } else if !self.rest().starts_with(']') {
                    return Err(syntax(self.line, "expected `,` or `]` in list"));
                }
            }
        }
        if rest.starts_with('"') {
            let mut out = String::new();
            let mut chars = rest.char_indices().skip(1);
            while let Some((i, ch)) = chars.next() {
                match ch {
                    '"' => {
                        self.pos += i + 1;
                        return Ok(Value::Str(out));
                    }
                    '\\' => match chars.next() {
                        Some((_, c @ ('"' | '\\'))) => out.push(c),
                        Some((_, 'n')) => out.push('\n'),
                        _ => return Err(syntax(self.line, "bad escape in string")),
                    },
                    c => out.push(c),
                }
            }
            return Err(syntax(self.line, "unterminated string"));
        }
        let end = rest.find([',', ']']).unwrap_or(rest.len());
        let token = rest[..end].trim_end().to_string();
        if token.is_empty() {
            return Err(syntax(self.line, "missing value"));
        }
        self.pos += token.len();
        scalar(&token).ok_or_else(|| syntax(self.line, format!("cannot parse value `{token}`")))
    }
}

fn scalar(token: &str) -> Option<Value> {
    match token {
        "true" => return Some(Value::Bool(true)),
        "false" => return Some(Value::Bool(false)),
        _ => {}
    }
    if let Ok(i) = token.parse::<i64>() {
        return Some(Value::Int(i));
    }
    let numeric = token.starts_with(|c: char| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'));
    if numeric {
        return token.parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Float);
    }
    is_ident(token).then(|| Value::Str(token.to_string()))
}

pub fn parse_document(text: &str) -> Result<Document> {
    let mut doc = Document::default();
    let mut current = Section { name: String::new(), line: 0, entries: Vec::new() };
    let mut lines = text.lines().enumerate();
    while let Some((idx, raw)) = lines.next() {
        let line = idx + 1;
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        if let Some(header) = body.strip_prefix('[') {
            let name = header
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| is_ident(n))
                .ok_or_else(|| syntax(line, format!("malformed section header `{body}`")))?;
            if name == current.name || doc.sections.iter().any(|s| s.name == name) {
                return Err(syntax(line, format!("section `{name}` appears twice")));
            }
            let done = std::mem::replace(&mut current, Section { name: name.to_string(), line, entries: Vec::new() });
            if !done.name.is_empty() || !done.entries.is_empty() {
                doc.sections.push(done);
            }
            continue;
        }
        let (key, rhs) = body.split_once('=').ok_or_else(|| syntax(line, format!("expected `key = value`, got `{body}`")))?;
        let key = key.trim();
        if !is_ident(key) {
            return Err(syntax(line, format!("invalid key `{key}`")));
        }
        if current.entries.iter().any(|e| e.key == key) {
            return Err(syntax(line, format!("key `{key}` set twice")));
        }
        // a list may continue over following lines until its brackets close
        let mut rhs = rhs.to_string();
        while bracket_depth(&rhs) > 0 {
            let Some((_, more)) = lines.next() else { break };
            rhs.push(' ');
            rhs.push_str(strip_comment(more));
        }
        let mut p = ValueParser { src: &rhs, pos: 0, line };
        let value = p.value()?;
        p.skip_ws();
        if !p.rest().is_empty() {
            return Err(syntax(line, format!("trailing text `{}`", p.rest())));
        }
        current.entries.push(Entry { key: key.to_string(), value, line });
    }
    if !current.name.is_empty() || !current.entries.is_empty() {
        doc.sections.push(current);
    }
    Ok(doc)
}

impl Document {
    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Typed view of a section; an absent section reads as empty.
    pub fn reader(&self, name: &str) -> SectionReader<'_> {
        SectionReader { section: self.section(name), name: name.to_string(), used: Vec::new() }
    }

    /// Reject sections other than `known`.
    pub fn check_sections(&self, known: &[&str]) -> Result<()> {
        for s in &self.sections {
            if !known.contains(&s.name.as_str()) {
                let what = if s.name.is_empty() { "keys outside any section".to_string() } else { format!("unknown section `{}`", s.name) };
                let line = if s.name.is_empty() { s.entries[0].line } else { s.line };
                return Err(syntax(line, what));
            }
        }
        Ok(())
    }
}

/// Pulls typed values out of one section and remembers which keys were read.
pub struct SectionReader<'a> {
    section: Option<&'a Section>,
    name: String,
    used: Vec<&'a str>,
}

fn type_err(e: &Entry, want: &str) -> DpdError {
    syntax(e.line, format!("key `{}` expects {want}, got {} `{}`", e.key, e.value.type_name(), e.value))
}

fn as_f64(e: &Entry, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Int(i) => Ok(*i as f64),
        _ => Err(type_err(e, "a number")),
    }
}

fn as_usize(e: &Entry, v: &Value) -> Result<usize> {
    match v {
        Value::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(type_err(e, "a non-negative integer")),
    }
}

fn as_list<'v>(e: &Entry, v: &'v Value) -> Result<&'v [Value]> {
    match v {
        Value::List(items) => Ok(items),
        _ => Err(type_err(e, "a list")),
    }
}

impl<'a> SectionReader<'a> {
    fn entry(&mut self, key: &str) -> Option<&'a Entry> {
        let e = self.section?.entries.iter().find(|e| e.key == key)?;
        self.used.push(e.key.as_str());
        Some(e)
    }

    pub fn has(&self, key: &str) -> bool {
        self.section.is_some_and(|s| s.entries.iter().any(|e| e.key == key))
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.entry(key).map(|e| as_f64(e, &e.value)).transpose()
    }

    pub fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        self.entry(key).map(|e| as_usize(e, &e.value)).transpose()
    }

    pub fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.usize(key).map(|v| v.map(|x| x as u64))
    }

    pub fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.entry(key)
            .map(|e| match e.value {
                Value::Bool(b) => Ok(b),
                _ => Err(type_err(e, "true or false")),
            })
            .transpose()
    }

    pub fn string(&mut self, key: &str) -> Result<Option<String>> {
        self.entry(key)
            .map(|e| match &e.value {
                Value::Str(s) => Ok(s.clone()),
                _ => Err(type_err(e, "a string")),
            })
            .transpose()
    }

    /// A number, or the bare word `none`.
    pub fn optional_f64(&mut self, key: &str) -> Result<Option<Option<f64>>> {
        self.entry(key)
            .map(|e| match &e.value {
                Value::Str(s) if s == "none" => Ok(None),
                v => as_f64(e, v).map(Some).map_err(|_| type_err(e, "a number or `none`")),
            })
            .transpose()
    }

    /// A value parsed from a string, with the type error naming the key.
    pub fn parsed<T: std::str::FromStr>(&mut self, key: &str, want: &str) -> Result<Option<T>> {
        self.entry(key)
            .map(|e| match &e.value {
                Value::Str(s) => s.parse::<T>().map_err(|_| type_err(e, want)),
                _ => Err(type_err(e, want)),
            })
            .transpose()
    }

    pub fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.entry(key).map(|e| as_list(e, &e.value)?.iter().map(|v| as_f64(e, v)).collect()).transpose()
    }

    pub fn usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        self.entry(key).map(|e| as_list(e, &e.value)?.iter().map(|v| as_usize(e, v)).collect()).transpose()
    }

    pub fn parsed_list<T: std::str::FromStr>(&mut self, key: &str, want: &str) -> Result<Option<Vec<T>>> {
        self.entry(key)
            .map(|e| {
                as_list(e, &e.value)?
                    .iter()
                    .map(|v| match v {
                        Value::Str(s) => s.parse::<T>().map_err(|_| type_err(e, want)),
                        _ => Err(type_err(e, want)),
                    })
                    .collect()
            })
            .transpose()
    }

    /// Rows of a nested list, each of length `width`.
    pub fn rows(&mut self, key: &str, width: usize) -> Result<Option<Vec<&'a [Value]>>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        let want = format!("a list of {width}-element lists");
        let rows = as_list(e, &e.value).map_err(|_| type_err(e, &want))?;
        rows.iter()
            .map(|r| match r {
                Value::List(items) if items.len() == width => Ok(items.as_slice()),
                _ => Err(type_err(e, &want)),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Line of `key`, else of the section header, for messages about values
    /// that parse but are invalid.
    pub fn line_of(&self, key: &str) -> usize {
        let Some(s) = self.section else { return 0 };
        s.entries.iter().find(|e| e.key == key).map_or(s.line, |e| e.line)
    }

    /// Error on any key that was never read.
    pub fn finish(self) -> Result<()> {
        if let Some(s) = self.section {
            if let Some(e) = s.entries.iter().find(|e| !self.used.contains(&e.key.as_str())) {
                return Err(syntax(e.line, format!("unknown key `{}` in section [{}]", e.key, self.name)));
            }
        }
        Ok(())
    }
}

/// Number cells of a row parsed by [`SectionReader::rows`].
pub fn row_f64(row: &[Value], i: usize) -> Option<f64> {
    match row.get(i)? {
        Value::Float(x) => Some(*x),
        Value::Int(v) => Some(*v as f64),
        _ => None,
    }
}

pub fn row_usize(row: &[Value], i: usize) -> Option<usize> {
    match row.get(i)? {
        Value::Int(v) if *v >= 0 => Some(*v as usize),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub bandwidth_fraction: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self { seed: 1, n_samples: STANDARD_SAMPLES, bandwidth_fraction: STANDARD_BANDWIDTH }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: Family,
    pub taps: usize,
    pub k_orders: usize,
    pub n_experts: usize,
    pub n1: usize,
    pub n2: usize,
    pub warm_start: bool,
    /// Architecture-search the RVFTDNN instead of using `(n1, n2)`.
    pub search: bool,
    /// `None` selects the automatic ridge.
    pub ridge: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: Family::Agmpnn, taps: 7, k_orders: 3, n_experts: 3, n1: 12, n2: 12, warm_start: true, search: false, ridge: None }
    }
}

impl ModelConfig {
    pub fn window(&self) -> TapWindow {
        TapWindow::causal_taps(self.taps)
    }
}

/// Everything a CLI run can be configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pa: PaConfig,
    pub signal: SignalConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    /// Sweeps refuse to run without explicit seeds.
    pub sweep_seeds_given: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pa: preset(DistortionLevel::High),
            signal: SignalConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            sweep_seeds_given: false,
        }
    }
}

fn invalid(r: &SectionReader<'_>, key: &str, e: DpdError) -> DpdError {
    let message = match e {
        DpdError::Argument(m) => m,
        other => other.to_string(),
    };
    syntax(r.line_of(key), format!("key `{key}`: {message}"))
}

/// Read a `[pa]` section. `preset` picks the starting point; the rule
/// fields and levels override it.
pub fn read_pa(doc: &Document) -> Result<PaConfig> {
    let mut r = doc.reader("pa");
    let level = r.parsed::<DistortionLevel>("preset", "`low` or `high`")?.unwrap_or(DistortionLevel::High);
    let base = preset(level);
    let mut rule = base.rule.expect("presets carry a rule");
    if let Some(v) = r.f64("rho")? {
        rule.rho = v;
    }
    if let Some(v) = r.f64("sigma")? {
        rule.sigma = v;
    }
    if let Some(v) = r.usize("l_pa")? {
        rule.l_pa = v;
    }
    if let Some(v) = r.usize("k_pa")? {
        rule.k_pa = v;
    }
    let drive_db = r.f64("drive_db")?.unwrap_or(base.drive_db);
    let a_sat = r.optional_f64("a_sat")?.unwrap_or(base.smooth_limit);
    let snr = r.optional_f64("feedback_snr_db")?.unwrap_or(base.feedback_snr_db);
    let pa = PaConfig::from_rule(rule, drive_db, a_sat, snr).map_err(|e| invalid(&r, "pa", e))?;
    r.finish()?;
    Ok(pa)
}

/// `[pa]` section text for a rule-based PA.
pub fn write_pa(pa: &PaConfig) -> Result<String> {
    let rule: CoeffRule = pa.rule.ok_or_else(|| DpdError::arg("only rule-based PA configs can be written"))?;
    let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| Value::Float(x).to_string());
    let mut s = String::from("[pa]\n");
    let _ = writeln!(s, "rho = {}", Value::Float(rule.rho));
    let _ = writeln!(s, "sigma = {}", Value::Float(rule.sigma));
    let _ = writeln!(s, "l_pa = {}", rule.l_pa);
    let _ = writeln!(s, "k_pa = {}", rule.k_pa);
    let _ = writeln!(s, "drive_db = {}", Value::Float(pa.drive_db));
    let _ = writeln!(s, "a_sat = {}", opt(pa.smooth_limit));
    let _ = writeln!(s, "feedback_snr_db = {}", opt(pa.feedback_snr_db));
    Ok(s)
}

fn read_train(doc: &Document) -> Result<TrainConfig> {
    let mut r = doc.reader("train");
    let mut t = TrainConfig::default();
    macro_rules! take {
        ($field:ident, $getter:ident) => {
            if let Some(v) = r.$getter(stringify!($field))? {
                t.$field = v;
            }
        };
    }
    take!(learning_rate, f64);
    take!(beta1, f64);
    take!(beta2, f64);
    take!(epsilon, f64);
    take!(batch_size, usize);
    take!(segment_len, usize);
    take!(max_epochs, usize);
    take!(patience, usize);
    take!(seed, u64);
    take!(train_fraction, f64);
    if let Some(p) = r.bool("parallel")? {
        t.exec = if p { Mode::Parallel } else { Mode::Sequential };
    }
    t.validate().map_err(|e| invalid(&r, "train", e))?;
    r.finish()?;
    Ok(t)
}

fn read_signal(doc: &Document) -> Result<SignalConfig> {
    let mut r = doc.reader("signal");
    let d = SignalConfig::default();
    let s = SignalConfig {
        seed: r.u64("seed")?.unwrap_or(d.seed),
        n_samples: r.usize("n_samples")?.unwrap_or(d.n_samples),
        bandwidth_fraction: r.f64("bandwidth_fraction")?.unwrap_or(d.bandwidth_fraction),
    };
    if s.n_samples < 64 {
        return Err(syntax(r.line_of("n_samples"), "key `n_samples` must be at least 64"));
    }
    if !(s.bandwidth_fraction > 0.0 && s.bandwidth_fraction <= 1.0) {
        return Err(syntax(r.line_of("bandwidth_fraction"), "key `bandwidth_fraction` must lie in (0, 1]"));
    }
    r.finish()?;
    Ok(s)
}

fn read_model(doc: &Document) -> Result<ModelConfig> {
    let mut r = doc.reader("model");
    let d = ModelConfig::default();
    let m = ModelConfig {
        kind: r.parsed("kind", "`mpm`, `agmpnn` or `rvftdnn`")?.unwrap_or(d.kind),
        taps: r.usize("taps")?.unwrap_or(d.taps),
        k_orders: r.usize("k_orders")?.unwrap_or(d.k_orders),
        n_experts: r.usize("n_experts")?.unwrap_or(d.n_experts),
        n1: r.usize("n1")?.unwrap_or(d.n1),
        n2: r.usize("n2")?.unwrap_or(d.n2),
        warm_start: r.bool("warm_start")?.unwrap_or(d.warm_start),
        search: r.bool("search")?.unwrap_or(d.search),
        ridge: r.optional_f64("ridge")?.unwrap_or(d.ridge),
    };
    for (key, v) in [("taps", m.taps), ("k_orders", m.k_orders), ("n_experts", m.n_experts), ("n1", m.n1), ("n2", m.n2)] {
        if v == 0 {
            return Err(syntax(r.line_of(key), format!("key `{key}` must be positive")));
        }
    }
    r.finish()?;
    Ok(m)
}

fn read_sweep(doc: &Document, signal: &SignalConfig, train: &TrainConfig) -> Result<(SweepConfig, bool)> {
    let mut r = doc.reader("sweep");
    let mut s = SweepConfig { waveform: WaveformSpec { n_samples: signal.n_samples, bandwidth_fraction: signal.bandwidth_fraction }, train: train.clone(), ..SweepConfig::default() };
    if let Some(v) = r.parsed_list::<Family>("families", "a list of model families")? {
        s.families = v;
    }
    if let Some(v) = r.parsed_list::<DistortionLevel>("presets", "a list of `low`/`high`")? {
        s.presets = v;
    }
    if let Some(v) = r.usize_list("taps_list")? {
        s.taps_list = v;
    }
    if let Some(v) = r.usize_list("param_targets")? {
        s.param_targets = v;
    }
    if let Some(v) = r.usize_list("budget")? {
        match v[..] {
            [lo, hi] if lo <= hi => s.budget = (lo, hi),
            _ => return Err(syntax(r.line_of("budget"), "key `budget` must be [lo, hi] with lo <= hi")),
        }
    }
    let seeds_given = r.has("seeds");
    if let Some(v) = r.usize_list("seeds")? {
        s.seeds = v.into_iter().map(|x| x as u64).collect();
    }
    if let Some(rows) = r.rows("grid", 2)? {
        let line = r.line_of("grid");
        s.grid = rows
            .iter()
            .map(|row| match (row_usize(row, 0), row_usize(row, 1)) {
                (Some(a), Some(b)) if a > 0 && b > 0 => Ok((a, b)),
                _ => Err(syntax(line, "key `grid` expects positive [n1, n2] pairs")),
            })
            .collect::<Result<_>>()?;
    }
    macro_rules! take {
        ($field:ident) => {
            if let Some(v) = r.usize(stringify!($field))? {
                if v == 0 {
                    return Err(syntax(r.line_of(stringify!($field)), concat!("key `", stringify!($field), "` must be positive")));
                }
                s.$field = v;
            }
        };
    }
    take!(agmpnn_k);
    take!(agmpnn_m);
    take!(mpm_k_max);
    take!(agmpnn_shape_max);
    take!(complexity_taps);
    if let Some(p) = r.bool("parallel")? {
        s.exec = if p { Mode::Parallel } else { Mode::Sequential };
    }
    r.finish()?;
    Ok((s, seeds_given))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc = parse_document(text)?;
    doc.check_sections(&["pa", "signal", "model", "train", "sweep"])?;
    let pa = read_pa(&doc)?;
    let signal = read_signal(&doc)?;
    let model = read_model(&doc)?;
    let train = read_train(&doc)?;
    let (sweep, sweep_seeds_given) = read_sweep(&doc, &signal, &train)?;
    Ok(RunConfig { pa, signal, model, train, sweep, sweep_seeds_given })
}
