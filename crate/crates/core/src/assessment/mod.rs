//! Personality assessment: direct template scoring (DA) and per-item
//! questionnaire peer rating (QA), over any condition and channel bundle.

pub mod bfi;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bfi::{reverse_key, score_items, BfiItem, ItemBank, LikertOption, RangeError, ScoringError};

use crate::llm::{ChatRequest, GatewayError, LlmClient, PurposeTag};
use crate::parsing::{ask, extract_slots, AskError};
use crate::perception::{assemble_channels, AssessmentInput, BundleError, ChannelBundle, EncounterRecord};
use crate::personas::TraitId;
use crate::prompts::PromptCatalog;
use crate::template::{vars, TemplateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitScores {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
    /// Per-trait reasons for DA; empty for QA, whose reasons live per item.
    #[serde(default)]
    pub reasons: BTreeMap<TraitId, String>,
}

impl TraitScores {
    /// Scores in `TraitId::ALL` order.
    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            openness: v[0],
            conscientiousness: v[1],
            extraversion: v[2],
            agreeableness: v[3],
            neuroticism: v[4],
            reasons: BTreeMap::new(),
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }

    pub fn get(&self, t: TraitId) -> f64 {
        match t {
            TraitId::Openness => self.openness,
            TraitId::Conscientiousness => self.conscientiousness,
            TraitId::Extraversion => self.extraversion,
            TraitId::Agreeableness => self.agreeableness,
            TraitId::Neuroticism => self.neuroticism,
        }
    }

    pub fn in_range(&self) -> bool {
        self.as_array().iter().all(|v| (1.0..=5.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Single(TraitId),
    All,
}

impl Condition {
    /// Report order: O, C, E, A, N, ALL.
    pub const EVERY: [Condition; 6] = [
        Condition::Single(TraitId::Openness),
        Condition::Single(TraitId::Conscientiousness),
        Condition::Single(TraitId::Extraversion),
        Condition::Single(TraitId::Agreeableness),
        Condition::Single(TraitId::Neuroticism),
        Condition::All,
    ];

    /// The encounters this condition may read, in play order.
    pub fn select<'a>(&self, records: &'a [EncounterRecord]) -> Vec<&'a EncounterRecord> {
        records
            .iter()
            .filter(|r| match self {
                Condition::Single(t) => r.agent() == *t,
                Condition::All => true,
            })
            .collect()
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Single(t) => f.write_str(t.code()),
            Condition::All => f.write_str("ALL"),
        }
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Condition::All);
        }
        TraitId::from_code(&s.to_ascii_uppercase())
            .map(Condition::Single)
            .ok_or_else(|| format!("unknown condition {s:?}; expected O, C, E, A, N or ALL"))
    }
}

impl Serialize for Condition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Condition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AssessmentMethod {
    #[serde(rename = "DA")]
    Direct,
    #[serde(rename = "QA")]
    Questionnaire,
}

impl AssessmentMethod {
    pub const BOTH: [AssessmentMethod; 2] = [AssessmentMethod::Direct, AssessmentMethod::Questionnaire];

    pub fn code(self) -> &'static str {
        match self {
            AssessmentMethod::Direct => "DA",
            AssessmentMethod::Questionnaire => "QA",
        }
    }
}

impl fmt::Display for AssessmentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for AssessmentMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DA" => Ok(AssessmentMethod::Direct),
            "QA" => Ok(AssessmentMethod::Questionnaire),
            _ => Err(format!("unknown method {s:?}; expected DA or QA")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAnswer {
    pub number: u32,
    pub option: LikertOption,
    /// Value after reverse-keying.
    pub keyed_value: i64,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RawOutput {
    Direct(String),
    Items(Vec<ItemAnswer>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentResult {
    pub player_id: String,
    pub session_id: String,
    pub method: AssessmentMethod,
    pub condition: Condition,
    pub bundle: ChannelBundle,
    pub model_id: String,
    pub scores: TraitScores,
    pub raw_output: RawOutput,
    pub prompt_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_bank_version: Option<String>,
}

impl AssessmentResult {
    /// Recomputes the scores from the stored raw output.
    pub fn rescore(&self, bank: &ItemBank) -> Result<TraitScores, AssessError> {
        match &self.raw_output {
            RawOutput::Direct(text) => {
                let r = parse_direct_response(text).map_err(|e| match e {
                    DirectParseError::Range(r) => AssessError::Range(r),
                    other => AssessError::TemplateParse {
                        detail: other.to_string(),
                        attempts: 1,
                    },
                })?;
                Ok(r.scores())
            }
            RawOutput::Items(items) => {
                let values = items.iter().map(|a| (a.number, a.option.value())).collect();
                Ok(TraitScores::from_array(score_items(bank, &values)?))
            }
        }
    }
}

fn item_failure_summary(items: &[(u32, String)]) -> String {
    let numbers: Vec<String> = items.iter().map(|(n, _)| n.to_string()).collect();
    let first = items.first().map(|(_, e)| e.as_str()).unwrap_or("");
    format!("questionnaire failed on {} item(s) [{}]; first error: {first}", items.len(), numbers.join(", "))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssessError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("assessment response did not match its template after {attempts} attempt(s): {detail}")]
    TemplateParse { detail: String, attempts: u32 },
    #[error("score out of range: {0}")]
    Range(#[from] RangeError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("item {item}: answer {detail:?} is not one of A-E")]
    AnswerParse { item: u32, detail: String },
    #[error("{}", item_failure_summary(.0))]
    ItemFailure(Vec<(u32, String)>),
    #[error("the player has not consented to assessment")]
    NoConsent,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

// ---- response templates -------------------------------------------------

const DA_THOUGHT: &str = "My step by step thought process";
const DA_RATING: &str = "Player's Personality Traits Rating";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectRating {
    pub score: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectResponse {
    pub thought_process: String,
    /// In `TraitId::ALL` order.
    pub ratings: [DirectRating; 5],
}

impl DirectResponse {
    pub fn scores(&self) -> TraitScores {
        let mut s = TraitScores::from_array(self.ratings.clone().map(|r| r.score as f64));
        s.reasons = TraitId::ALL
            .iter()
            .zip(&self.ratings)
            .map(|(t, r)| (*t, r.reason.clone()))
            .collect();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectParseError {
    #[error("missing rating for {0}")]
    MissingTrait(&'static str),
    #[error("rating for {trait_name} is not an integer score with a reason: {text:?}")]
    BadRating { trait_name: &'static str, text: String },
    #[error("{0}")]
    Range(RangeError),
}

fn rating_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)^\{*\s*(-?\d+(?:\.\d+)?)\s*\}*\s*(?:/\s*5)?\s*[,;.\-]?\s*(?:\(?\s*reason\s*\)?\s*[:\-]\s*)?(.*)$")
            .unwrap()
    })
}

pub fn parse_direct_response(text: &str) -> Result<DirectResponse, DirectParseError> {
    let mut labels = vec![DA_THOUGHT, DA_RATING];
    labels.extend(TraitId::ALL.iter().map(|t| t.name()));
    let slots = extract_slots(text, &labels);
    let mut ratings = Vec::with_capacity(5);
    for (i, t) in TraitId::ALL.iter().enumerate() {
        let name = t.name();
        let raw = slots[i + 2].as_deref().ok_or(DirectParseError::MissingTrait(name))?;
        let bad = || DirectParseError::BadRating {
            trait_name: name,
            text: raw.to_string(),
        };
        let caps = rating_re().captures(raw).ok_or_else(bad)?;
        let number = &caps[1];
        let score: i64 = number.parse().map_err(|_| bad())?;
        if !(1..=5).contains(&score) {
            return Err(DirectParseError::Range(RangeError(score)));
        }
        let reason = caps[2].trim().trim_start_matches('{').trim_end_matches('}').trim().to_string();
        if reason.is_empty() {
            return Err(bad());
        }
        ratings.push(DirectRating { score, reason });
    }
    let ratings: [DirectRating; 5] = ratings.try_into().expect("five ratings");
    Ok(DirectResponse {
        thought_process: slots[0].clone().unwrap_or_default(),
        ratings,
    })
}

pub fn render_direct_response(r: &DirectResponse) -> String {
    let mut out = format!("### {DA_THOUGHT}:\n{}\n### {DA_RATING}:\n", r.thought_process);
    for (t, rating) in TraitId::ALL.iter().zip(&r.ratings) {
        out.push_str(&format!("- {}: {}, reason: {}\n", t.name(), rating.score, rating.reason));
    }
    out
}

const QA_PROCESS: &str = "Rating Process";
const QA_REASON: &str = "Reason";
const QA_ANSWER: &str = "Answer";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionResponse {
    pub rating_process: String,
    pub reason: String,
    pub answer: LikertOption,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuestionParseError {
    #[error("missing Answer slot")]
    MissingAnswer,
    #[error("answer {0:?} is not one of A/B/C/D/E")]
    BadAnswer(String),
}

pub fn parse_question_response(text: &str) -> Result<QuestionResponse, QuestionParseError> {
    let slots = extract_slots(text, &[QA_PROCESS, QA_REASON, QA_ANSWER]);
    let answer_raw = slots[2]
        .as_deref()
        .filter(|s| !s.is_empty())
        .ok_or(QuestionParseError::MissingAnswer)?;
    let first = answer_raw.lines().next().unwrap_or("");
    let answer = first.parse().map_err(QuestionParseError::BadAnswer)?;
    Ok(QuestionResponse {
        rating_process: slots[0].clone().unwrap_or_default(),
        reason: slots[1].clone().unwrap_or_default(),
        answer,
    })
}

pub fn render_question_response(r: &QuestionResponse) -> String {
    format!(
        "- {QA_PROCESS}: {}\n- {QA_REASON}: {}\n- {QA_ANSWER}: {}",
        r.rating_process,
        r.reason,
        r.answer.letter()
    )
}

// ---- operations -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssessConfig {
    pub model: String,
    pub parse_retries: u32,
    /// Concurrent questionnaire item calls; 1 runs them in order.
    pub item_parallelism: usize,
    /// Presents questionnaire items in a seeded random order.
    pub shuffle_seed: Option<u64>,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-0806".into(),
            parse_retries: 3,
            item_parallelism: 1,
            shuffle_seed: None,
        }
    }
}

/// Shared read-only context for the assessment prompts.
#[derive(Debug, Clone, Copy)]
pub struct AssessContext<'a> {
    pub catalog: &'a PromptCatalog,
    pub rules: &'a str,
    pub knowledge: &'a str,
    pub bank: &'a ItemBank,
}

fn context_slots<'a>(ctx: &'a AssessContext<'_>, input: &'a AssessmentInput, fine: &'a str) -> BTreeMap<&'a str, &'a str> {
    vars([
        ("game_rules", ctx.rules),
        ("chat_memory", input.memory.as_str()),
        ("game_memory", input.behavior.as_str()),
        ("dialogue", input.dialogue.as_str()),
        ("fine_grained_traits", fine),
        ("knowledge", ctx.knowledge),
    ])
}

pub fn direct_assess(
    client: &LlmClient,
    cfg: &AssessConfig,
    ctx: &AssessContext<'_>,
    input: &AssessmentInput,
) -> Result<(TraitScores, String), AssessError> {
    let fine = input.fine_grained();
    let body = ctx.catalog.direct_assess.body.render(&context_slots(ctx, input, &fine))?;
    let req = ChatRequest::new(cfg.model.clone(), PurposeTag::DirectAssess, 0.0)
        .system(ctx.catalog.direct_assess.system.clone())
        .user(body);
    let (resp, raw) = ask(client, &req, cfg.parse_retries, parse_direct_response).map_err(|e| match e {
        AskError::Gateway(g) => AssessError::Gateway(g),
        AskError::Parse {
            error: DirectParseError::Range(r),
            ..
        } => AssessError::Range(r),
        AskError::Parse { error, attempts } => AssessError::TemplateParse {
            detail: error.to_string(),
            attempts,
        },
    })?;
    Ok((resp.scores(), raw))
}

fn ask_item(
    client: &LlmClient,
    cfg: &AssessConfig,
    ctx: &AssessContext<'_>,
    input: &AssessmentInput,
    fine: &str,
    item: &BfiItem,
) -> Result<ItemAnswer, AssessError> {
    let mut slots = context_slots(ctx, input, fine);
    slots.insert("statement", item.third_person.trim_end_matches('.'));
    let body = ctx.catalog.que_assess.body.render(&slots)?;
    let req = ChatRequest::new(cfg.model.clone(), PurposeTag::QueAssess, 0.0)
        .system(ctx.catalog.que_assess.system.clone())
        .user(body);
    let (resp, raw) = ask(client, &req, cfg.parse_retries, parse_question_response).map_err(|e| match e {
        AskError::Gateway(g) => AssessError::Gateway(g),
        AskError::Parse { error, .. } => AssessError::AnswerParse {
            item: item.number,
            detail: match error {
                QuestionParseError::BadAnswer(a) => a,
                other => other.to_string(),
            },
        },
    })?;
    let value = resp.answer.value();
    Ok(ItemAnswer {
        number: item.number,
        option: resp.answer,
        keyed_value: if item.reverse { reverse_key(value)? } else { value },
        reason: resp.reason,
        raw,
    })
}

/// One call per item, then key scoring. Answers are returned in item-number
/// order whatever the presentation order was.
pub fn que_assess(
    client: &LlmClient,
    cfg: &AssessConfig,
    ctx: &AssessContext<'_>,
    input: &AssessmentInput,
) -> Result<(TraitScores, Vec<ItemAnswer>), AssessError> {
    let fine = input.fine_grained();
    let mut order: Vec<&BfiItem> = ctx.bank.items.iter().collect();
    if let Some(seed) = cfg.shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let outcomes: Vec<Result<ItemAnswer, AssessError>> = if cfg.item_parallelism <= 1 {
        order.iter().map(|item| ask_item(client, cfg, ctx, input, &fine, item)).collect()
    } else {
        let mut all = Vec::with_capacity(order.len());
        for chunk in order.chunks(cfg.item_parallelism) {
            let forks: Vec<LlmClient> = chunk.iter().map(|_| client.fork()).collect();
            let results: Vec<_> = std::thread::scope(|s| {
                let handles: Vec<_> = chunk
                    .iter()
                    .zip(&forks)
                    .map(|(item, fork)| {
                        let fine = fine.as_str();
                        s.spawn(move || ask_item(fork, cfg, ctx, input, fine, item))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("item worker panicked")).collect()
            });
            for fork in &forks {
                client.absorb(fork);
            }
            all.extend(results);
        }
        all
    };

    let mut answers = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    for (item, outcome) in order.iter().zip(outcomes) {
        match outcome {
            Ok(a) => answers.push(a),
            Err(e) => failed.push((item.number, e.to_string())),
        }
    }
    if !failed.is_empty() {
        failed.sort_by_key(|f| f.0);
        return Err(AssessError::ItemFailure(failed));
    }
    answers.sort_by_key(|a| a.number);
    let values = answers.iter().map(|a| (a.number, a.option.value())).collect();
    let scores = TraitScores::from_array(score_items(ctx.bank, &values)?);
    Ok((scores, answers))
}

/// Frozen session data an assessment runs over.
#[derive(Debug, Clone, Copy)]
pub struct Subject<'a> {
    pub player_id: &'a str,
    pub session_id: &'a str,
    pub consent: bool,
    /// Encounter records in play order.
    pub records: &'a [EncounterRecord],
    pub allow_partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub method: AssessmentMethod,
    pub condition: Condition,
    pub bundle: ChannelBundle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: MatrixCell,
    pub result: Result<AssessmentResult, AssessError>,
}

pub fn assess_cell(
    client: &LlmClient,
    cfg: &AssessConfig,
    ctx: &AssessContext<'_>,
    subject: &Subject<'_>,
    cell: &MatrixCell,
) -> Result<AssessmentResult, AssessError> {
    if !subject.consent {
        return Err(AssessError::NoConsent);
    }
    let selected = cell.condition.select(subject.records);
    if selected.is_empty() {
        return Err(AssessError::Precondition(format!("no encounter data for condition {}", cell.condition)));
    }
    let input = assemble_channels(&selected, cell.bundle, subject.allow_partial)?;
    let (scores, raw_output, bank_version) = match cell.method {
        AssessmentMethod::Direct => {
            let (scores, raw) = direct_assess(client, cfg, ctx, &input)?;
            (scores, RawOutput::Direct(raw), None)
        }
        AssessmentMethod::Questionnaire => {
            let (scores, answers) = que_assess(client, cfg, ctx, &input)?;
            (scores, RawOutput::Items(answers), Some(ctx.bank.version.clone()))
        }
    };
    Ok(AssessmentResult {
        player_id: subject.player_id.to_string(),
        session_id: subject.session_id.to_string(),
        method: cell.method,
        condition: cell.condition,
        bundle: cell.bundle,
        model_id: cfg.model.clone(),
        scores,
        raw_output,
        prompt_version: ctx.catalog.version.clone(),
        item_bank_version: bank_version,
    })
}

/// Runs the requested cross product. Cells fail independently; the order is
/// method, then condition, then bundle, as given.
pub fn assess_matrix(
    client: &LlmClient,
    cfg: &AssessConfig,
    ctx: &AssessContext<'_>,
    subject: &Subject<'_>,
    methods: &[AssessmentMethod],
    conditions: &[Condition],
    bundles: &[ChannelBundle],
) -> Vec<CellOutcome> {
    let mut out = Vec::with_capacity(methods.len() * conditions.len() * bundles.len());
    for &method in methods {
        for &condition in conditions {
            for &bundle in bundles {
                let cell = MatrixCell {
                    method,
                    condition,
                    bundle,
                };
                let result = assess_cell(client, cfg, ctx, subject, &cell);
                if let Err(e) = &result {
                    tracing::warn!(%method, %condition, %bundle, error = %e, "assessment cell failed");
                }
                out.push(CellOutcome { cell, result });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data;
    use crate::game::{Decision, GameConfig, GameSession, Speaker};
    use crate::llm::MockBackend;

    #[test]
    fn direct_parse_contract() {
        let ok = "### My step by step thought process:\nthink\n### Player's Personality Traits Rating:\n- Openness: 4, reason: curious\n- Conscientiousness: {2}, reason: sloppy\n- Extraversion: 5, reason: chatty\n- Agreeableness: 3 - reason: mixed\n- Neuroticism: 1, reason: calm\n";
        let r = parse_direct_response(ok).unwrap();
        assert_eq!(r.ratings.clone().map(|x| x.score), [4, 2, 5, 3, 1]);
        assert_eq!(r.ratings[0].reason, "curious");
        assert_eq!(r.ratings[3].reason, "mixed");

        let bad = ok.replace("Openness: 4", "Openness: 7");
        assert_eq!(parse_direct_response(&bad), Err(DirectParseError::Range(RangeError(7))));
        let half = ok.replace("Openness: 4", "Openness: 3.5");
        assert!(matches!(parse_direct_response(&half), Err(DirectParseError::BadRating { .. })));
        let missing = ok.replace("- Neuroticism: 1, reason: calm\n", "");
        assert_eq!(parse_direct_response(&missing), Err(DirectParseError::MissingTrait("Neuroticism")));
    }

    #[test]
    fn question_parse_contract() {
        let r = parse_question_response("- Rating Process: x\n- Reason: y\n- Answer: (B). Moderately Accurate").unwrap();
        assert_eq!(r.answer, LikertOption::B);
        assert_eq!(
            parse_question_response("- Answer: maybe"),
            Err(QuestionParseError::BadAnswer("maybe".into()))
        );
    }

    #[test]
    fn conditions_parse_and_print() {
        for c in Condition::EVERY {
            assert_eq!(c.to_string().parse::<Condition>().unwrap(), c);
        }
        assert!("X".parse::<Condition>().is_err());
    }

    fn records() -> Vec<EncounterRecord> {
        let cfg = GameConfig {
            rounds_per_encounter: 1,
            ..Default::default()
        };
        let mut s = GameSession::new("s", "p", TraitId::ALL.to_vec(), cfg, 0).unwrap();
        for (i, t) in TraitId::ALL.iter().enumerate() {
            s.append_utterance(i, Speaker::Player, &format!("line for {}", t.name()), 0).unwrap();
            s.end_dialogue(i, 0).unwrap();
            s.commit_agent_decision(i, Decision::Cooperate, 0).unwrap();
            s.submit_player_decision(i, Decision::Defect, 0).unwrap();
        }
        s.encounters.into_iter().map(EncounterRecord::new).collect()
    }

    fn subject(records: &[EncounterRecord], consent: bool) -> Subject<'_> {
        Subject {
            player_id: "p",
            session_id: "s",
            consent,
            records,
            allow_partial: false,
        }
    }

    #[test]
    fn all_c_answers_give_midpoint() {
        let catalog = PromptCatalog::bundled();
        let bank = ItemBank::placeholder();
        let ctx = AssessContext {
            catalog: &catalog,
            rules: data::RULES,
            knowledge: data::KNOWLEDGE,
            bank: &bank,
        };
        let recs = records();
        let input = assemble_channels(&[&recs[0]], ChannelBundle::TB, false).unwrap();
        let client = LlmClient::from_backend(MockBackend::new(|_| Ok("- Answer: C".to_string())));
        let (scores, answers) = que_assess(&client, &AssessConfig::default(), &ctx, &input).unwrap();
        assert_eq!(scores.as_array(), [3.0; 5]);
        assert_eq!(answers.len(), 44);
        assert_eq!(client.record_count(), 44);
        let first = &client.records()[0].request;
        assert_eq!(first.temperature, 0.0);
        assert!(first.messages[1].content.contains(&format!(
            "Given a statement of the player: \"{}.\"",
            bank.items[0].third_person
        )));
    }

    #[test]
    fn shuffled_or_parallel_order_gives_same_scores() {
        let catalog = PromptCatalog::bundled();
        let bank = ItemBank::placeholder();
        let ctx = AssessContext {
            catalog: &catalog,
            rules: data::RULES,
            knowledge: data::KNOWLEDGE,
            bank: &bank,
        };
        let recs = records();
        let input = assemble_channels(&[&recs[0]], ChannelBundle::TB, false).unwrap();
        let answer_by_item = || {
            let items = bank.items.clone();
            move |req: &ChatRequest| {
                let text = &req.messages[1].content;
                let item = items.iter().find(|i| text.contains(&i.third_person)).unwrap();
                let letter = ["A", "B", "C", "D", "E"][(item.number as usize * 7) % 5];
                Ok(format!("- Answer: {letter}"))
            }
        };
        let client = LlmClient::from_backend(MockBackend::new(answer_by_item()));
        let base = que_assess(&client, &AssessConfig::default(), &ctx, &input).unwrap();
        let shuffled_cfg = AssessConfig {
            shuffle_seed: Some(9),
            item_parallelism: 6,
            ..Default::default()
        };
        let client = LlmClient::from_backend(MockBackend::new(answer_by_item()));
        let shuffled = que_assess(&client, &shuffled_cfg, &ctx, &input).unwrap();
        assert_eq!(base.0, shuffled.0);
        assert_eq!(base.1, shuffled.1);
        assert_eq!(client.record_count(), 44);
    }

    #[test]
    fn unparseable_items_are_listed() {
        let catalog = PromptCatalog::bundled();
        let bank = ItemBank::placeholder();
        let ctx = AssessContext {
            catalog: &catalog,
            rules: data::RULES,
            knowledge: data::KNOWLEDGE,
            bank: &bank,
        };
        let recs = records();
        let input = assemble_channels(&[&recs[0]], ChannelBundle::TB, false).unwrap();
        let target = bank.items[4].third_person.clone();
        let client = LlmClient::from_backend(MockBackend::new(move |req: &ChatRequest| {
            Ok(if req.messages[1].content.contains(&target) { "- Answer: Z" } else { "- Answer: A" }.to_string())
        }));
        match que_assess(&client, &AssessConfig::default(), &ctx, &input) {
            Err(AssessError::ItemFailure(items)) => assert_eq!(items.iter().map(|i| i.0).collect::<Vec<_>>(), vec![5]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_condition_sees_only_its_encounter() {
        let catalog = PromptCatalog::bundled();
        let bank = ItemBank::placeholder();
        let ctx = AssessContext {
            catalog: &catalog,
            rules: data::RULES,
            knowledge: data::KNOWLEDGE,
            bank: &bank,
        };
        let recs = records();
        let client = LlmClient::from_backend(crate::llm::synthetic::synthetic_backend(1));
        let cell = MatrixCell {
            method: AssessmentMethod::Direct,
            condition: Condition::Single(TraitId::Agreeableness),
            bundle: ChannelBundle::TBPE,
        };
        let r = assess_cell(&client, &AssessConfig::default(), &ctx, &subject(&recs, true), &cell).unwrap();
        assert!(r.scores.in_range());
        let prompt = &client.records()[0].request.messages[1].content;
        assert!(prompt.contains("line for Agreeableness"));
        for t in TraitId::ALL.iter().filter(|t| **t != TraitId::Agreeableness) {
            assert!(!prompt.contains(&format!("line for {}", t.name())));
        }
        assert_eq!(r.rescore(&bank).unwrap(), r.scores);
    }

    #[test]
    fn matrix_cardinality_and_consent() {
        let catalog = PromptCatalog::bundled();
        let bank = ItemBank::placeholder();
        let ctx = AssessContext {
            catalog: &catalog,
            rules: data::RULES,
            knowledge: data::KNOWLEDGE,
            bank: &bank,
        };
        let recs = records();
        let client = LlmClient::from_backend(crate::llm::synthetic::synthetic_backend(1));
        let out = assess_matrix(
            &client,
            &AssessConfig::default(),
            &ctx,
            &subject(&recs, true),
            &AssessmentMethod::BOTH,
            &[Condition::All],
            &[ChannelBundle::TBPE],
        );
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|c| c.result.is_ok()));

        let out = assess_matrix(
            &client,
            &AssessConfig::default(),
            &ctx,
            &subject(&recs, false),
            &[AssessmentMethod::Direct],
            &Condition::EVERY,
            &[ChannelBundle::TB],
        );
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|c| c.result == Err(AssessError::NoConsent)));
    }
}
