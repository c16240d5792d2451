//! Pins the five assembled role prompts. Regenerate with
//! `GPA_UPDATE_GOLDEN=1 cargo test -p gpa-core --test golden`.

use std::path::PathBuf;

use gpa_core::engine::Assets;
use gpa_core::personas::{RoleSection, TraitId};

fn golden_path(t: TraitId) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("role_{}.txt", t.code()))
}

#[test]
fn role_prompts_match_golden_files() {
    let assets = Assets::bundled().unwrap();
    let update = std::env::var_os("GPA_UPDATE_GOLDEN").is_some();
    for t in TraitId::ALL {
        let prompt = assets.role_prompt(t).unwrap();
        let path = golden_path(t);
        if update {
            std::fs::write(&path, &prompt).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(prompt, want, "role prompt for {} drifted from {}", t.code(), path.display());
    }
}

#[test]
fn role_prompts_are_pure() {
    let a = Assets::bundled().unwrap();
    let b = Assets::bundled().unwrap();
    for t in TraitId::ALL {
        assert_eq!(a.role_prompt(t).unwrap(), b.role_prompt(t).unwrap());
    }
}

#[test]
fn each_role_prompt_has_every_section_once() {
    let assets = Assets::bundled().unwrap();
    for t in TraitId::ALL {
        let prompt = assets.role_prompt(t).unwrap();
        for s in RoleSection::ORDER {
            assert_eq!(prompt.matches(s.heading()).count(), 1, "{} in {}", s.heading(), t.code());
        }
    }
}
