#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use cbf_lp::geometry::{load_environment, Environment};
use cbf_lp::synthesis::{synthesize_all, Gains, SynthesisConfig};

pub fn fixture_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../env/paperlike.json"))
}

pub fn fixture() -> Environment {
    Environment::from_file(&fixture_path()).unwrap()
}

pub fn fixture_gains(env: &Environment) -> BTreeMap<usize, Gains> {
    synthesize_all(env, &SynthesisConfig::new(env.num_landmarks()))
        .unwrap()
        .into_iter()
        .map(|(i, r)| (i, r.gains))
        .collect()
}

/// Square `[0, 10]^2`, exit face `x = 10`, landmarks `(4, 8)` and `(12, 8)`.
pub fn square_env() -> Environment {
    load_environment(
        r#"{
            "dynamics": {"A": [[0, 0], [0, 0]], "B": [[1, 0], [0, 1]]},
            "landmarks": [[4, 8], [12, 8]],
            "cells": [{
                "halfspaces": {"A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [10, 0, 10, 0]},
                "exit_face": 0,
                "next_cell": null
            }]
        }"#,
    )
    .unwrap()
}
