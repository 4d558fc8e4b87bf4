use serde::{Deserialize, Serialize};

/// A single axiom violation: which axiom, where, and what went wrong.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub axiom: String,
    pub location: String,
    pub description: String,
}

/// Outcome of a validator. `passed` holds iff `violations` is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self { violations: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn push(&mut self, axiom: impl Into<String>, location: impl Into<String>, description: impl Into<String>) {
        self.violations.push(Violation {
            axiom: axiom.into(),
            location: location.into(),
            description: description.into(),
        });
    }

    /// Fold another report into this one.
    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            write!(f, "pass")
        } else {
            writeln!(f, "fail ({} violations)", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  [{}] {}: {}", v.axiom, v.location, v.description)?;
            }
            Ok(())
        }
    }
}
