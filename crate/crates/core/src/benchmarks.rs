//! Built-in problems used by the harness, the CLI and the tests.

use crate::error::{Error, Result};
use crate::problem::Problem;

const SOURCES: [(&str, &str); 4] = [
    ("two_phase_1d", include_str!("../problems/two_phase_1d.toml")),
    ("two_phase_1d_lower", include_str!("../problems/two_phase_1d_lower.toml")),
    ("constant_1d", include_str!("../problems/constant_1d.toml")),
    ("zero_corrector_2d", include_str!("../problems/zero_corrector_2d.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<Problem> {
    let text = source(name).ok_or_else(|| Error::Config(format!("unknown benchmark `{name}` (known: {})", names().collect::<Vec<_>>().join(", "))))?;
    Problem::from_toml_str(text, name)
}
