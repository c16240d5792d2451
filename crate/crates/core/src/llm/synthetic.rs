//! Offline stand-in model.
//!
//! Produces well-formed responses for every prompt the engine sends, chosen
//! deterministically from the request hash and a seed. Used for fuzzing,
//! fixture generation and offline smoke runs; the content carries no
//! meaning beyond being parseable.

use sha2::{Digest, Sha256};

use super::{ChatRequest, GatewayError, MockBackend, PurposeTag};

struct Pick {
    bytes: [u8; 32],
    pos: usize,
}

impl Pick {
    fn new(seed: u64, req: &ChatRequest) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(req.canonical_json().as_bytes());
        Self {
            bytes: h.finalize().into(),
            pos: 0,
        }
    }

    fn below(&mut self, n: usize) -> usize {
        let b = self.bytes[self.pos % 32] as usize;
        self.pos += 1;
        b % n
    }

    fn one<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items[self.below(items.len())]
    }
}

const AGENT_LINES: &[&str] = &[
    "Shall we build some trust this round?",
    "I have been thinking about what you said earlier. What is your plan now?",
    "I am curious how you see this game going.",
    "Let's keep things fair between us.",
    "You seem confident. Should I be worried?",
    "I will be honest with you: I want us both to do well.",
];

const PLAYER_LINES: &[&str] = &[
    "I think cooperating makes sense for both of us.",
    "I'm not sure I can trust you yet.",
    "Let's see what happens this time.",
    "I promise I'll cooperate if you do.",
    "Honestly, I'm a bit nervous about this round.",
    "What would you do in my place?",
];

const EMOTIONS: &[&str] = &["Happy", "Sad", "Neutral", "Angry", "Excited", "Frustrated"];

const TRAIT_WORDS: &[&str] = &[
    "Trust",
    "Caution",
    "Openness",
    "Hesitancy",
    "Assertiveness",
    "Friendliness",
    "Competitiveness",
];

fn user_text(req: &ChatRequest) -> &str {
    req.messages.last().map(|m| m.content.as_str()).unwrap_or("")
}

fn decision_word(p: &mut Pick) -> &'static str {
    if p.below(3) == 0 {
        "defect"
    } else {
        "cooperate"
    }
}

pub fn respond(seed: u64, req: &ChatRequest) -> String {
    let mut p = Pick::new(seed, req);
    match req.purpose {
        PurposeTag::AgentChat => p.one(AGENT_LINES).to_string(),
        PurposeTag::Memory => {
            let cooperated = user_text(req).contains("player chose Cooperate");
            format!(
                "The player chose to {} this round. Their messages were consistent with that choice and the dialogue stayed focused on the next move.",
                if cooperated { "cooperate" } else { "defect" }
            )
        }
        PurposeTag::Reflection => format!(
            "As an agent, I observe that the player {}. I believe that {}. Based on what I have observed and reflected upon, I {}.",
            p.one(&["responds to friendly talk", "keeps their intentions vague", "tests my reactions"]),
            p.one(&["trust can still grow", "caution is warranted", "consistency matters to them"]),
            p.one(&["will keep offering cooperation", "will watch their next move closely", "will mirror their last decision"]),
        ),
        PurposeTag::Decide => format!(
            "#### Decision Making Process:\nI reviewed the earlier rounds and the current dialogue.\n#### Final Decision:\n{}\n#### Long-Term Plan:\n{}",
            decision_word(&mut p),
            p.one(&["Reward cooperation and respond carefully to defection.", "Build trust gradually over the remaining rounds."]),
        ),
        PurposeTag::Emotion => format!(
            "- Emotion Analysis Process: The sentence is read in the context of this round.\n- Sentence: [Sentence]\n- Emotion Label: {}",
            p.one(EMOTIONS)
        ),
        PurposeTag::Traits => {
            let a = p.one(TRAIT_WORDS);
            let b = p.one(TRAIT_WORDS);
            let traits = if a == b { a.to_string() } else { format!("{a}, {b}") };
            format!(
                "- Observed Behavior: {} decision with {} language\n- Inferred Personality Traits: {}\n- Reason: The wording and the decision in this round point to these traits.",
                p.one(&["cooperative", "defecting"]),
                p.one(&["hesitant", "confident", "friendly"]),
                traits
            )
        }
        PurposeTag::DirectAssess => {
            let mut out = String::from(
                "### My step by step thought process:\nI compared the player's dialogue and decisions across opponents.\n### Player's Personality Traits Rating:\n",
            );
            for name in ["Openness", "Conscientiousness", "Extraversion", "Agreeableness", "Neuroticism"] {
                let score = 1 + p.below(5);
                out.push_str(&format!(
                    "- {name}: {score}, reason: The interaction record supports this rating.\n"
                ));
            }
            out
        }
        PurposeTag::QueAssess => format!(
            "- Rating Process: Weighed the statement against the interaction record.\n- Reason: The player's behavior partly matches the statement.\n- Answer: {}",
            p.one(&["A", "B", "C", "D", "E"])
        ),
        PurposeTag::SimulatedPlayer => {
            if user_text(req).contains("Final Decision") {
                format!("#### Final Decision:\n{}", decision_word(&mut p))
            } else {
                p.one(PLAYER_LINES).to_string()
            }
        }
    }
}

pub fn synthetic_backend(seed: u64) -> MockBackend {
    MockBackend::new(move |req: &ChatRequest| -> Result<String, GatewayError> { Ok(respond(seed, req)) })
}
