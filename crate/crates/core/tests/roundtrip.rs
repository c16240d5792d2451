//! parse(render(x)) = x for every structured response template.

mod common;

use proptest::prelude::*;

use gpa_core::assessment::{parse_direct_response, parse_question_response, render_direct_response, render_question_response};
use gpa_core::cognition::{
    parse_memory_summary, parse_reflection, parse_turn_output, render_memory_summary, render_reflection,
    render_turn_output,
};
use gpa_core::perception::{parse_emotion_response, parse_trait_response, render_emotion_response, render_trait_response};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn memory_summary(x in common::memory_summary()) {
        prop_assert_eq!(parse_memory_summary(&render_memory_summary(&x)), Ok(x));
    }

    #[test]
    fn reflection(x in common::reflection()) {
        prop_assert_eq!(parse_reflection(&render_reflection(&x)), Ok(x));
    }

    #[test]
    fn turn_output(x in common::turn_output()) {
        prop_assert_eq!(parse_turn_output(&render_turn_output(&x)), Ok(x));
    }

    #[test]
    fn emotion_response(x in common::emotion_response()) {
        prop_assert_eq!(parse_emotion_response(&render_emotion_response(&x)), Ok(x));
    }

    #[test]
    fn trait_response(x in common::trait_response()) {
        prop_assert_eq!(parse_trait_response(&render_trait_response(&x)), Ok(x));
    }

    #[test]
    fn direct_response(x in common::direct_response()) {
        prop_assert_eq!(parse_direct_response(&render_direct_response(&x)), Ok(x));
    }

    #[test]
    fn question_response(x in common::question_response()) {
        prop_assert_eq!(parse_question_response(&render_question_response(&x)), Ok(x));
    }
}
