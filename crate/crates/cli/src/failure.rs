//! Exit-status classification and the JSON error record written to stderr.

use std::process::ExitCode;

use microcanon::Error;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    /// Exit status 1.
    Numeric,
    /// Exit status 2.
    Config,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub class: Class,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn config(kind: &'static str, message: String) -> Self {
        Failure { class: Class::Config, kind, message }
    }

    pub fn numeric(kind: &'static str, message: String) -> Self {
        Failure { class: Class::Numeric, kind, message }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self.class {
            Class::Numeric => ExitCode::from(1),
            Class::Config => ExitCode::from(2),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&serde_json::json!({ "error": self })).expect("plain fields serialise")
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidSpec(_) => Failure::config("invalid_spec", message),
            Error::EmptyDomain => Failure::config("empty_domain", message),
            Error::TooFewDegeneracies { .. } => Failure::config("too_few_degeneracies", message),
            Error::BudgetExceeded { .. } => Failure::config("budget_exceeded", message),
            Error::NotRepresentable(_) => Failure::config("not_representable", message),
            Error::InvalidChain(_) => Failure::config("invalid_chain", message),
            Error::WrongKind { .. } => Failure::numeric("wrong_kind", message),
            Error::Domain(_) => Failure::numeric("domain", message),
            Error::NoConvergence { .. } => Failure::numeric("no_convergence", message),
            Error::DegenerateNormal => Failure::numeric("degenerate_normal", message),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_failures_are_numeric() {
        let f: Failure = Error::NoConvergence { method: "newton", residuals: [1.0, 1.0] }.into();
        assert_eq!(f.class, Class::Numeric);
        assert_eq!(f.exit_code(), ExitCode::from(1));
    }

    #[test]
    fn spec_violations_are_config_errors() {
        let f: Failure = Error::InvalidSpec(vec!["weights do not sum to 1".into()]).into();
        assert_eq!(f.class, Class::Config);
        let record: serde_json::Value = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(record["error"]["class"], "config");
        assert_eq!(record["error"]["kind"], "invalid_spec");
    }
}
