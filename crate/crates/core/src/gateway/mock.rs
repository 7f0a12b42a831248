use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, DecisionContext, ProviderError};
use crate::strategies::{PolicyError, ScriptedPolicy};

/// What a mock provider replies with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockScript {
    /// Replies with the localized label of the policy's choice.
    Policy(ScriptedPolicy),
    /// Replies with these strings in order.
    Replies(Vec<String>),
}

/// Deterministic offline provider.
#[derive(Debug)]
pub struct MockProvider {
    script: MockScript,
    cursor: Mutex<usize>,
}

pub fn mock_provider(script: MockScript) -> MockProvider {
    MockProvider { script, cursor: Mutex::new(0) }
}

impl ChatProvider for MockProvider {
    fn complete(
        &self,
        _prompt: &str,
        ctx: Option<&DecisionContext<'_>>,
        labels: &[String; 2],
    ) -> Result<String, ProviderError> {
        match &self.script {
            MockScript::Replies(replies) => {
                let mut cursor = self.cursor.lock().unwrap();
                let reply = replies.get(*cursor).cloned().ok_or(ProviderError::Exhausted)?;
                *cursor += 1;
                Ok(reply)
            }
            MockScript::Policy(policy) => {
                let ctx = ctx.ok_or_else(|| ProviderError::Config("policy mock needs game context".into()))?;
                match policy.decide(&ctx.view) {
                    Ok(s) => Ok(labels[s.index()].clone()),
                    Err(PolicyError::SequenceExhausted(_)) => Err(ProviderError::Exhausted),
                    Err(e) => Err(ProviderError::Config(e.to_string())),
                }
            }
        }
    }

    fn measures_latency(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replies_in_order() {
        let labels = ["A".to_string(), "B".to_string()];
        let m = mock_provider(MockScript::Replies(vec!["A".into(), "B".into()]));
        assert_eq!(m.complete("p", None, &labels).unwrap(), "A");
        assert_eq!(m.complete("p", None, &labels).unwrap(), "B");
        assert_eq!(m.complete("p", None, &labels), Err(ProviderError::Exhausted));
    }

    #[test]
    fn script_config_shapes() {
        let s: MockScript = serde_json::from_str(r#"{"kind":"tit_for_tat"}"#).unwrap();
        assert_eq!(s, MockScript::Policy(ScriptedPolicy::TitForTat));
        let s: MockScript = serde_json::from_str(r#"["A","B"]"#).unwrap();
        assert_eq!(s, MockScript::Replies(vec!["A".into(), "B".into()]));
    }
}
