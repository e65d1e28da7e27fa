//! Corpus augmentation: token-wise translation and corpus combination.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::{ColumnConfig, LabeledCorpus, Sentence, TagSet};
use crate::error::{read_to_string, write_file, Error, Result};

/// Surface used for tokens without a translation under [`TranslateFallback::MarkUnknown`].
pub const UNKNOWN_MARKER: &str = "<unk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TranslateFallback {
    #[default]
    Keep,
    MarkUnknown,
}

impl std::fmt::Display for TranslateFallback {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TranslateFallback::Keep => "keep",
            TranslateFallback::MarkUnknown => "mark-unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub name: String,
    pub source_lang: String,
    pub target_lang: String,
    entries: BTreeMap<String, String>,
}

fn check_token(kind: &str, token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "lexicon {kind} `{token}` must be non-empty and free of whitespace"
        )));
    }
    Ok(())
}

impl Lexicon {
    pub fn new(name: impl Into<String>, source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, source: impl Into<String>, target: impl Into<String>) -> Result<()> {
        let (source, target) = (source.into(), target.into());
        check_token("key", &source)?;
        check_token("value", &target)?;
        self.entries.insert(source, target);
        Ok(())
    }

    /// Parses `source<TAB>target` lines. Blank lines are skipped; a repeated
    /// key keeps its last value.
    pub fn parse(text: &str, name: &str, source_lang: &str, target_lang: &str) -> Result<Self> {
        let mut lexicon = Self::new(name, source_lang, target_lang);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: name.to_string(),
                line: i + 1,
                message,
            };
            let (s, t) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `source<TAB>target`".into()))?;
            lexicon.insert(s, t).map_err(|e| err(e.to_string()))?;
        }
        Ok(lexicon)
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.entries.get(token).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    OfflineLexicon,
    ExternalService,
}

/// Translates single tokens. `Ok(None)` means the backend has no translation
/// and the caller's fallback policy applies.
pub trait TranslatorBackend {
    fn kind(&self) -> BackendKind;
    fn describe(&self) -> String;
    fn translate_token(&mut self, token: &str, source_lang: &str, target_lang: &str) -> Result<Option<String>>;
}

#[derive(Debug, Clone)]
pub struct LexiconBackend {
    lexicon: Lexicon,
}

impl LexiconBackend {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }
}

impl TranslatorBackend for LexiconBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::OfflineLexicon
    }

    fn describe(&self) -> String {
        format!("lexicon:{}", self.lexicon.name)
    }

    fn translate_token(&mut self, token: &str, source_lang: &str, target_lang: &str) -> Result<Option<String>> {
        if source_lang != self.lexicon.source_lang || target_lang != self.lexicon.target_lang {
            return Err(Error::Translation(format!(
                "lexicon `{}` translates {}->{}, not {source_lang}->{target_lang}",
                self.lexicon.name, self.lexicon.source_lang, self.lexicon.target_lang
            )));
        }
        Ok(self.lexicon.get(token).map(str::to_string))
    }
}

/// A remote translation service. `Err` means the service could not be reached.
pub trait TranslationService {
    fn translate(&mut self, token: &str, source_lang: &str, target_lang: &str) -> std::result::Result<Option<String>, String>;
}

/// Wraps a [`TranslationService`] with an on-disk cache keyed by token and
/// language pair, plus a minimum interval between service calls.
///
/// Cache file lines are `source_lang<TAB>target_lang<TAB>token<TAB>translation`;
/// an empty translation records that the service had none.
pub struct CachedServiceBackend<S> {
    service: Option<S>,
    cache_path: PathBuf,
    cache: BTreeMap<(String, String, String), Option<String>>,
    min_interval: Duration,
    last_call: Option<Instant>,
}

impl<S: TranslationService> CachedServiceBackend<S> {
    /// Opens (or starts) the cache at `cache_path`. With `service = None`
    /// only cached entries can be served.
    pub fn open(service: Option<S>, cache_path: impl Into<PathBuf>, min_interval: Duration) -> Result<Self> {
        let cache_path = cache_path.into();
        let mut cache = BTreeMap::new();
        if cache_path.exists() {
            let text = read_to_string(&cache_path)?;
            for (i, line) in text.lines().enumerate() {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 4 {
                    return Err(Error::Parse {
                        source_name: cache_path.display().to_string(),
                        line: i + 1,
                        message: "expected 4 tab-separated fields".into(),
                    });
                }
                let value = (!fields[3].is_empty()).then(|| fields[3].to_string());
                cache.insert((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()), value);
            }
        }
        Ok(Self {
            service,
            cache_path,
            cache,
            min_interval,
            last_call: None,
        })
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.len()
    }

    fn persist(&self) -> Result<()> {
        let mut out = String::new();
        for ((s, t, tok), v) in &self.cache {
            writeln!(out, "{s}\t{t}\t{tok}\t{}", v.as_deref().unwrap_or("")).unwrap();
        }
        let mut tmp = self.cache_path.clone().into_os_string();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        write_file(&tmp, out)?;
        std::fs::rename(&tmp, &self.cache_path).map_err(|e| Error::io(&self.cache_path, e))
    }
}

impl<S: TranslationService> TranslatorBackend for CachedServiceBackend<S> {
    fn kind(&self) -> BackendKind {
        BackendKind::ExternalService
    }

    fn describe(&self) -> String {
        format!("service-cache:{}", self.cache_path.display())
    }

    fn translate_token(&mut self, token: &str, source_lang: &str, target_lang: &str) -> Result<Option<String>> {
        let key = (source_lang.to_string(), target_lang.to_string(), token.to_string());
        if let Some(v) = self.cache.get(&key) {
            return Ok(v.clone());
        }
        let service = self.service.as_mut().ok_or_else(|| {
            Error::Translation(format!(
                "service unavailable and `{token}` ({source_lang}->{target_lang}) is not cached"
            ))
        })?;
        if let Some(last) = self.last_call {
            let elapsed = last.elapsed();
            if elapsed < self.min_interval {
                thread::sleep(self.min_interval - elapsed);
            }
        }
        self.last_call = Some(Instant::now());
        let value = service
            .translate(token, source_lang, target_lang)
            .map_err(|e| Error::Translation(format!("service unreachable for `{token}`: {e}")))?;
        if let Some(v) = &value {
            check_token("value", v).map_err(|e| Error::Translation(e.to_string()))?;
        }
        self.cache.insert(key, value.clone());
        self.persist()?;
        Ok(value)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TranslationSummary {
    pub translated: usize,
    pub untranslated: usize,
}

/// Replaces every token surface by its translation. Tags, POS, columns and
/// sentence structure are untouched.
pub fn token_translate(
    corpus: &LabeledCorpus,
    backend: &mut dyn TranslatorBackend,
    source_lang: &str,
    target_lang: &str,
    fallback: TranslateFallback,
) -> Result<(LabeledCorpus, TranslationSummary)> {
    let mut summary = TranslationSummary::default();
    let mut out = corpus.clone();
    for sentence in &mut out.sentences {
        for token in &mut sentence.tokens {
            match backend.translate_token(&token.surface, source_lang, target_lang)? {
                Some(t) => {
                    token.surface = t;
                    summary.translated += 1;
                }
                None => {
                    if fallback == TranslateFallback::MarkUnknown {
                        token.surface = UNKNOWN_MARKER.to_string();
                    }
                    summary.untranslated += 1;
                }
            }
        }
    }
    out.provenance.push(format!(
        "translate:{}({source_lang}->{target_lang},fallback={fallback})",
        backend.describe()
    ));
    Ok((out, summary))
}

/// Concatenates corpora in order. With more than one input, sentence ids
/// become `<corpus name>:<id>`; the tagset is the union of all inputs.
pub fn combine(corpora: &[LabeledCorpus], output_name: &str) -> Result<LabeledCorpus> {
    let first = corpora
        .first()
        .ok_or_else(|| Error::InvalidArgument("combine needs at least one corpus".into()))?;
    for c in &corpora[1..] {
        if c.labeled != first.labeled || c.has_pos() != first.has_pos() {
            return Err(Error::InvalidArgument(format!(
                "corpus `{}` uses different columns than `{}`",
                c.name, first.name
            )));
        }
    }
    let namespaced = corpora.len() > 1;
    let mut sentences: Vec<Sentence> = Vec::with_capacity(corpora.iter().map(LabeledCorpus::len).sum());
    let mut seen = HashSet::new();
    let mut tagset = TagSet::new(Vec::<String>::new());
    let mut provenance = vec![format!("combine:{output_name}")];
    for c in corpora {
        let start = sentences.len();
        for s in &c.sentences {
            let id = if namespaced {
                format!("{}:{}", c.name, s.id)
            } else {
                s.id.clone()
            };
            if !seen.insert(id.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sentence id `{id}` after combining"
                )));
            }
            sentences.push(Sentence::new(id, s.tokens.clone()));
        }
        tagset = tagset.union(&c.tagset);
        provenance.push(format!(
            "part:{}[{start}..{}) <- {}",
            c.name,
            sentences.len(),
            c.provenance.join(" | ")
        ));
    }
    Ok(LabeledCorpus {
        name: output_name.to_string(),
        sentences,
        tagset,
        provenance,
        labeled: first.labeled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateStep {
    pub lexicon: PathBuf,
    pub source_lang: String,
    pub target_lang: String,
    #[serde(default)]
    pub fallback: TranslateFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSource {
    pub path: PathBuf,
    /// Corpus name used for id namespacing; defaults to the file stem.
    pub name: Option<String>,
    pub pos_column: Option<usize>,
    /// Keep only the first `max_sentences` sentences.
    pub max_sentences: Option<usize>,
    pub translate: Option<TranslateStep>,
}

impl PlanSource {
    pub fn corpus_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into())
        })
    }
}

/// A TOML augmentation recipe:
///
/// ```toml
/// output = "d5"
/// output_path = "d5.conll"
///
/// [[source]]
/// path = "bn.conll"
///
/// [[source]]
/// path = "hi.conll"
/// max_sentences = 1000
/// translate = { lexicon = "hi-bn.tsv", source_lang = "hi", target_lang = "bn" }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPlan {
    pub output: String,
    pub output_path: Option<PathBuf>,
    #[serde(rename = "source")]
    pub sources: Vec<PlanSource>,
}

impl AugmentPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("augment plan: {e}")))?;
        if plan.sources.is_empty() {
            return Err(Error::InvalidArgument("augment plan lists no sources".into()));
        }
        Ok(plan)
    }

    /// Reads a plan file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan = Self::parse(&read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut plan.sources {
            resolve(&mut s.path);
            if let Some(t) = &mut s.translate {
                resolve(&mut t.lexicon);
            }
        }
        if let Some(p) = &mut plan.output_path {
            resolve(p);
        }
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestStep {
    pub description: String,
    pub input_sentences: usize,
    pub output_sentences: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub steps: Vec<ManifestStep>,
}

impl Manifest {
    fn push(&mut self, description: String, input_sentences: usize, output_sentences: usize) {
        self.steps.push(ManifestStep {
            description,
            input_sentences,
            output_sentences,
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                out,
                "step {}: {} (in={} out={})",
                i + 1,
                s.description,
                s.input_sentences,
                s.output_sentences
            )
            .unwrap();
        }
        out
    }
}

/// Applies each source's cap and translation step, then combines.
/// `sources[i]` is the parsed corpus for `plan.sources[i]`; `backend_for`
/// supplies the translator for a step.
pub fn run_plan<F>(plan: &AugmentPlan, sources: Vec<LabeledCorpus>, mut backend_for: F) -> Result<(LabeledCorpus, Manifest)>
where
    F: FnMut(&TranslateStep) -> Result<Box<dyn TranslatorBackend>>,
{
    if sources.len() != plan.sources.len() || sources.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "plan lists {} sources but {} corpora were supplied",
            plan.sources.len(),
            sources.len()
        )));
    }
    let mut manifest = Manifest::default();
    let mut prepared = Vec::with_capacity(sources.len());
    for (src, mut corpus) in plan.sources.iter().zip(sources) {
        manifest.push(format!("load {} as `{}`", src.path.display(), corpus.name), corpus.len(), corpus.len());
        if let Some(cap) = src.max_sentences {
            let before = corpus.len();
            if cap == 0 {
                return Err(Error::InvalidArgument(format!("`{}`: max_sentences must be positive", corpus.name)));
            }
            corpus.sentences.truncate(cap);
            corpus.provenance.push(format!("cap:{cap}"));
            manifest.push(format!("cap `{}` to {cap} sentences", corpus.name), before, corpus.len());
        }
        if let Some(step) = &src.translate {
            let mut backend = backend_for(step)?;
            let (translated, summary) =
                token_translate(&corpus, backend.as_mut(), &step.source_lang, &step.target_lang, step.fallback)?;
            manifest.push(
                format!(
                    "translate `{}` {}->{} via {} (fallback={}, translated={}, untranslated={})",
                    corpus.name,
                    step.source_lang,
                    step.target_lang,
                    backend.describe(),
                    step.fallback,
                    summary.translated,
                    summary.untranslated
                ),
                corpus.len(),
                translated.len(),
            );
            corpus = translated;
        }
        prepared.push(corpus);
    }
    let total = prepared.iter().map(LabeledCorpus::len).sum();
    let combined = combine(&prepared, &plan.output)?;
    manifest.push(format!("combine {} sources into `{}`", prepared.len(), plan.output), total, combined.len());
    Ok((combined, manifest))
}

/// Loads every source and lexicon from disk and runs the plan with offline
/// lexicon backends.
pub fn run_plan_files(plan: &AugmentPlan) -> Result<(LabeledCorpus, Manifest)> {
    let mut sources = Vec::with_capacity(plan.sources.len());
    for s in &plan.sources {
        let columns = match s.pos_column {
            Some(c) => ColumnConfig::default().with_pos(c),
            None => ColumnConfig::default(),
        };
        let mut corpus = crate::corpus::parse_conll(&read_to_string(&s.path)?, columns, &s.path.display().to_string())?;
        let name = s.corpus_name();
        corpus.provenance = vec![format!("source:{}", s.path.display())];
        corpus.name = name;
        sources.push(corpus);
    }
    run_plan(plan, sources, |step| {
        let name = step.lexicon.display().to_string();
        let lexicon = Lexicon::parse(&read_to_string(&step.lexicon)?, &name, &step.source_lang, &step.target_lang)?;
        Ok(Box::new(LexiconBackend::new(lexicon)))
    })
}
