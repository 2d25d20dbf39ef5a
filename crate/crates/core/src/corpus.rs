//! Problem sets, ground-truth extraction and prompt rendering.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::answer::{normalize_answer, AnswerValue};
use crate::error::CorpusError;

pub const TASK_SCHEMA_VERSION: u32 = 1;

/// The twenty Rosetta-style tasks, in canonical order.
pub const ROSETTA_TASKS: [&str; 20] = [
    "Fibonacci sequence",
    "Sieve of Eratosthenes",
    "Quicksort",
    "Binary search",
    "Greatest common divisor",
    "Factorial",
    "Towers of Hanoi",
    "Palindrome detection",
    "Prime decomposition",
    "Dijkstra's Algorithm",
    "Levenshtein distance",
    "N-queens problem",
    "Ackermann function",
    "Balanced brackets",
    "Knight's tour",
    "Merge sort",
    "Roman numerals decode",
    "Longest common subsequence",
    "Huffman coding",
    "24 game",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Gsm8k,
    GsmSymbolicBase,
    GsmSymbolicP1,
    GsmSymbolicP2,
    Rosetta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolicVariant {
    Base,
    P1,
    P2,
}

impl SymbolicVariant {
    pub fn source(self) -> Source {
        match self {
            SymbolicVariant::Base => Source::GsmSymbolicBase,
            SymbolicVariant::P1 => Source::GsmSymbolicP1,
            SymbolicVariant::P2 => Source::GsmSymbolicP2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub query: String,
    pub expected: AnswerValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub question: String,
    pub ground_truth: AnswerValue,
    pub source: Source,
    pub split: Split,
    /// Only set for task-pack problems; each case is run separately.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_cases: Vec<TestCase>,
}

impl Problem {
    pub fn new(id: impl Into<String>, question: impl Into<String>, ground_truth: AnswerValue) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            ground_truth,
            source: Source::Gsm8k,
            split: Split::Test,
            test_cases: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosettaTask {
    pub name: String,
    pub prompt: String,
    pub test_cases: Vec<TestCase>,
    /// Reference solution known to pass every test case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl RosettaTask {
    pub fn slug(&self) -> String {
        slug(&self.name)
    }

    pub fn to_problem(&self) -> Problem {
        Problem {
            id: self.slug(),
            question: self.prompt.clone(),
            ground_truth: self.test_cases[0].expected.clone(),
            source: Source::Rosetta,
            split: Split::Test,
            test_cases: self.test_cases.clone(),
        }
    }
}

pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if (c == ' ' || c == '-') && !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Canonical spelling of a task name, matched case-insensitively.
pub fn canonical_task_name(name: &str) -> Option<&'static str> {
    ROSETTA_TASKS
        .iter()
        .copied()
        .find(|t| t.eq_ignore_ascii_case(name.trim()))
}

const CURRENCY: [char; 6] = ['$', '€', '£', '¥', '₹', '¢'];

/// Ground truth from a worked answer: text after the last `####`, or the
/// last token when there is no marker.
pub fn extract_final_answer(answer_text: &str) -> AnswerValue {
    let tail = match answer_text.rfind("####") {
        Some(at) => &answer_text[at + 4..],
        None => answer_text.split_whitespace().last().unwrap_or(""),
    };
    let cleaned: String = tail
        .chars()
        .filter(|c| *c != ',' && !c.is_whitespace() && !CURRENCY.contains(c))
        .collect();
    normalize_answer(&cleaned)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Split to assign; inferred from the file name when absent.
    pub split: Option<Split>,
    /// Skip malformed lines instead of failing the load.
    pub skip_malformed: bool,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    question: Option<String>,
    answer: Option<serde_json::Value>,
    #[serde(default)]
    id: Option<serde_json::Value>,
}

fn split_from_path(path: &Path) -> Split {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    if name.contains("train") {
        Split::Train
    } else {
        Split::Test
    }
}

fn source_prefix(source: Source) -> &'static str {
    match source {
        Source::Gsm8k => "gsm8k",
        Source::GsmSymbolicBase => "gsm-symbolic-base",
        Source::GsmSymbolicP1 => "gsm-symbolic-p1",
        Source::GsmSymbolicP2 => "gsm-symbolic-p2",
        Source::Rosetta => "rosetta",
    }
}

fn load_records(
    path: &Path,
    source: Source,
    options: LoadOptions,
) -> Result<Vec<Problem>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let split = options.split.unwrap_or_else(|| split_from_path(path));
    let mut problems = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedRecord {
            path: path.to_path_buf(),
            line_no,
            reason,
        };
        let parsed = serde_json::from_str::<RawRecord>(line)
            .map_err(|e| malformed(e.to_string()))
            .and_then(|raw| {
                let question = raw.question.ok_or_else(|| malformed("missing question".into()))?;
                let answer = match raw.answer {
                    Some(serde_json::Value::String(s)) => extract_final_answer(&s),
                    Some(serde_json::Value::Number(n)) => normalize_answer(&n.to_string()),
                    Some(_) => return Err(malformed("answer must be a string or number".into())),
                    None => return Err(malformed("missing answer".into())),
                };
                let id = match raw.id {
                    Some(serde_json::Value::String(s)) => s,
                    Some(serde_json::Value::Number(n)) => format!("{}-{}", source_prefix(source), n),
                    _ => format!(
                        "{}-{}-{:05}",
                        source_prefix(source),
                        if split == Split::Train { "train" } else { "test" },
                        line_no
                    ),
                };
                Ok(Problem {
                    id,
                    question,
                    ground_truth: answer,
                    source,
                    split,
                    test_cases: Vec::new(),
                })
            });
        match parsed {
            Ok(p) => problems.push(p),
            Err(_) if options.skip_malformed => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(problems)
}

/// One problem per JSON line with `question` and `answer` fields.
pub fn load_gsm8k(path: impl AsRef<Path>) -> Result<Vec<Problem>, CorpusError> {
    load_gsm8k_with(path, LoadOptions::default())
}

pub fn load_gsm8k_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<Vec<Problem>, CorpusError> {
    load_records(path.as_ref(), Source::Gsm8k, options)
}

/// Same record shape as GSM8K, tagged with the variant.
pub fn load_gsm_symbolic(path: impl AsRef<Path>, variant: SymbolicVariant) -> Result<Vec<Problem>, CorpusError> {
    load_records(
        path.as_ref(),
        variant.source(),
        LoadOptions {
            split: Some(Split::Test),
            skip_malformed: false,
        },
    )
}

/// Writes problems back as line-delimited records that the loaders accept,
/// with the ground truth after a `####` marker.
pub fn write_records(path: impl AsRef<Path>, problems: &[Problem]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in problems {
        let record = serde_json::json!({
            "id": p.id,
            "question": p.question,
            "answer": format!("#### {}", p.ground_truth),
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Fails if any id or question text is shared between the two splits.
pub fn check_split_hygiene(problems: &[Problem]) -> Result<(), CorpusError> {
    let mut seen: HashMap<&str, Split> = HashMap::new();
    let mut questions: HashMap<&str, Split> = HashMap::new();
    for p in problems {
        if let Some(other) = seen.insert(&p.id, p.split) {
            if other != p.split {
                return Err(CorpusError::SplitLeak(p.id.clone()));
            }
        }
        if let Some(other) = questions.insert(p.question.trim(), p.split) {
            if other != p.split {
                return Err(CorpusError::SplitLeak(p.id.clone()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct TaskFile {
    #[serde(default = "default_schema")]
    schema_version: u32,
    name: String,
    prompt: String,
    test_cases: Vec<TestCase>,
    #[serde(default)]
    reference: Option<String>,
}

fn default_schema() -> u32 {
    TASK_SCHEMA_VERSION
}

/// Reads one task file.
pub fn load_task_file(path: &Path) -> Result<RosettaTask, CorpusError> {
    let malformed = |reason: String| CorpusError::MalformedRecord {
        path: path.to_path_buf(),
        line_no: 0,
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: TaskFile = serde_json::from_str(&text).map_err(|e| malformed(e.to_string()))?;
    if file.schema_version != TASK_SCHEMA_VERSION {
        return Err(malformed(format!("unsupported schema_version {}", file.schema_version)));
    }
    let name = canonical_task_name(&file.name).ok_or_else(|| CorpusError::UnknownTaskName(file.name.clone()))?;
    if file.test_cases.is_empty() {
        return Err(malformed("task has no test cases".into()));
    }
    Ok(RosettaTask {
        name: name.to_string(),
        prompt: file.prompt,
        test_cases: file.test_cases,
        reference: file.reference,
    })
}

/// Every `*.json` task file in `dir`, in canonical task order.
pub fn load_rosetta(dir: impl AsRef<Path>) -> Result<Vec<RosettaTask>, CorpusError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut tasks = Vec::new();
    let mut names = HashSet::new();
    for path in paths {
        let task = load_task_file(&path)?;
        if !names.insert(task.name.clone()) {
            return Err(CorpusError::MalformedRecord {
                path,
                line_no: 0,
                reason: format!("duplicate task {:?}", task.name),
            });
        }
        tasks.push(task);
    }
    tasks.sort_by_key(|t| ROSETTA_TASKS.iter().position(|n| *n == t.name));
    Ok(tasks)
}

/// The task pack shipped with this crate.
pub fn bundled_rosetta_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("rosetta")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "gsm8k-test")]
    Gsm8kTest,
    #[serde(rename = "gsm-symbolic-base")]
    GsmSymbolicBase,
    #[serde(rename = "gsm-symbolic-p1")]
    GsmSymbolicP1,
    #[serde(rename = "gsm-symbolic-p2")]
    GsmSymbolicP2,
    #[serde(rename = "rosetta20")]
    Rosetta20,
}

impl DatasetId {
    pub const ALL: [DatasetId; 5] = [
        DatasetId::Gsm8kTest,
        DatasetId::GsmSymbolicBase,
        DatasetId::GsmSymbolicP1,
        DatasetId::GsmSymbolicP2,
        DatasetId::Rosetta20,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Gsm8kTest => "gsm8k-test",
            DatasetId::GsmSymbolicBase => "gsm-symbolic-base",
            DatasetId::GsmSymbolicP1 => "gsm-symbolic-p1",
            DatasetId::GsmSymbolicP2 => "gsm-symbolic-p2",
            DatasetId::Rosetta20 => "rosetta20",
        }
    }

    /// Loads the dataset from `path` (a JSONL file, or the task-pack
    /// directory for `rosetta20`).
    pub fn load(self, path: &Path) -> Result<Vec<Problem>, CorpusError> {
        match self {
            DatasetId::Gsm8kTest => load_gsm8k_with(
                path,
                LoadOptions {
                    split: Some(Split::Test),
                    skip_malformed: false,
                },
            ),
            DatasetId::GsmSymbolicBase => load_gsm_symbolic(path, SymbolicVariant::Base),
            DatasetId::GsmSymbolicP1 => load_gsm_symbolic(path, SymbolicVariant::P1),
            DatasetId::GsmSymbolicP2 => load_gsm_symbolic(path, SymbolicVariant::P2),
            DatasetId::Rosetta20 => Ok(load_rosetta(path)?.iter().map(RosettaTask::to_problem).collect()),
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| CorpusError::UnknownDataset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    ZeroShot,
    OneShot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero-shot",
            PromptMode::OneShot => "one-shot",
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-shot" => Ok(PromptMode::ZeroShot),
            "one-shot" => Ok(PromptMode::OneShot),
            other => Err(format!("unknown prompt mode {:?}", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub question: String,
    pub completion: String,
}

pub const SYSTEM_TEMPLATE: &str = include_str!("../assets/prompts/system.txt");
pub const DEMONSTRATION: &str = include_str!("../assets/prompts/demonstration.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub system_template: String,
    pub demonstration: Option<Demonstration>,
}

impl PromptSpec {
    /// Shipped template with `{language}` filled in.
    pub fn zero_shot(language: &str) -> Self {
        Self {
            mode: PromptMode::ZeroShot,
            system_template: SYSTEM_TEMPLATE.replace("{language}", language),
            demonstration: None,
        }
    }

    pub fn one_shot(language: &str, demonstration: Demonstration) -> Self {
        Self {
            mode: PromptMode::OneShot,
            demonstration: Some(demonstration),
            ..Self::zero_shot(language)
        }
    }

    /// Spec for `mode` using the shipped demonstration asset.
    pub fn bundled(mode: PromptMode, language: &str) -> Self {
        match mode {
            PromptMode::ZeroShot => Self::zero_shot(language),
            PromptMode::OneShot => Self::one_shot(
                language,
                serde_json::from_str(DEMONSTRATION).expect("shipped demonstration is valid JSON"),
            ),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.mode, &self.demonstration) {
            (PromptMode::OneShot, None) => Err("one-shot prompts need a demonstration".into()),
            (PromptMode::ZeroShot, Some(_)) => Err("zero-shot prompts take no demonstration".into()),
            _ => Ok(()),
        }
    }
}

pub fn render_prompt(problem: &Problem, spec: &PromptSpec) -> String {
    let mut out = String::new();
    out.push_str(spec.system_template.trim_end());
    out.push_str("\n\n");
    if let Some(demo) = &spec.demonstration {
        out.push_str("Example problem:\n");
        out.push_str(demo.question.trim());
        out.push_str("\n\nExample answer:\n");
        out.push_str(demo.completion.trim());
        out.push_str("\n\n");
    }
    out.push_str("Problem:\n");
    out.push_str(problem.question.trim());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_answer_examples() {
        assert_eq!(extract_final_answer("so 3x6=18.\n#### 18"), 18.into());
        assert_eq!(extract_final_answer("#### 1,200"), 1200.into());
        assert_eq!(extract_final_answer("#### 2.5"), AnswerValue::Decimal(2.5));
        assert_eq!(extract_final_answer("#### $1,000.00"), 1000.into());
        assert_eq!(extract_final_answer("The answer is 42"), 42.into());
        assert_eq!(extract_final_answer("#### 1 #### 7"), 7.into());
    }

    #[test]
    fn task_names() {
        assert_eq!(canonical_task_name("quicksort"), Some("Quicksort"));
        assert_eq!(canonical_task_name("bubble sort"), None);
        assert_eq!(slug("Dijkstra's Algorithm"), "dijkstras-algorithm");
        assert_eq!(slug("24 game"), "24-game");
    }

    #[test]
    fn dataset_ids_round_trip() {
        for id in DatasetId::ALL {
            assert_eq!(id.as_str().parse::<DatasetId>().unwrap(), id);
        }
        assert!("gsm-hard".parse::<DatasetId>().is_err());
    }
}
