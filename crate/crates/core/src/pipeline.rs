//! Query → activation → decomposition → grounding → claim → corrected answer.

use serde::Serialize;
use thiserror::Error;

use crate::claim::{
    correct_response, fallback_correct, ground_actions, render_claim, Claim, ClaimError,
    CorrectionRequest, GroundedAction,
};
use crate::decompose::{ActivationResult, IconicAction};
use crate::embed::EmbeddingClient;
use crate::scorer::{merge_rankings, RankedTimestamps, ScorerConfig};
use crate::store::VideoEmbeddingSet;
use crate::transform::{ClientError, TextTransformClient};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Claim(#[from] ClaimError),
}

impl PipelineError {
    /// True for failures of an external service rather than of the inputs.
    pub fn is_service_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Client(_)
                | PipelineError::Claim(ClaimError::Embedding(_))
        )
    }
}

/// Actions decomposed from one event text, grounded together.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundedEvent {
    pub event_text: String,
    pub grounded: Vec<GroundedAction>,
    /// Per-frame best score over the event's actions.
    pub ranking: RankedTimestamps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundingOutcome {
    pub activation: ActivationResult,
    pub events: Vec<GroundedEvent>,
    /// `None` when the query needs no temporal support.
    pub claim: Option<Claim>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    Client,
    /// The configured client failed; the rule fallback produced the answer.
    RuleFallback,
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionOutcome {
    pub corrected: String,
    pub source: CorrectionSource,
    pub grounding: GroundingOutcome,
}

pub struct Pipeline<'a> {
    pub transform: &'a dyn TextTransformClient,
    pub embed: &'a dyn EmbeddingClient,
    pub scorer: ScorerConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        transform: &'a dyn TextTransformClient,
        embed: &'a dyn EmbeddingClient,
        scorer: ScorerConfig,
    ) -> Self {
        Self {
            transform,
            embed,
            scorer,
        }
    }

    /// Decomposes an event text; an empty decomposition falls back to the
    /// event text as a single action.
    pub fn actions_for(&self, event_text: &str) -> Result<Vec<IconicAction>, PipelineError> {
        match self.transform.decompose(event_text) {
            Ok(actions) => Ok(actions),
            Err(ClientError::EmptyDecomposition) => {
                Ok(IconicAction::indexed([event_text.trim().to_string()]))
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn ground_event(
        &self,
        video: &VideoEmbeddingSet,
        event_text: &str,
    ) -> Result<GroundedEvent, PipelineError> {
        let actions = self.actions_for(event_text)?;
        let grounded = ground_actions(video, &actions, self.embed, &self.scorer)?;
        let rankings: Vec<RankedTimestamps> = grounded.iter().map(|g| g.ranking.clone()).collect();
        Ok(GroundedEvent {
            event_text: event_text.to_string(),
            ranking: merge_rankings(&rankings),
            grounded,
        })
    }

    pub fn ground_query(
        &self,
        video: &VideoEmbeddingSet,
        query: &str,
    ) -> Result<GroundingOutcome, PipelineError> {
        if query.trim().is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let activation = self.transform.activate(query)?;
        if !activation.needs_temporal_support {
            return Ok(GroundingOutcome {
                activation,
                events: Vec::new(),
                claim: None,
            });
        }
        let events = activation
            .event_texts
            .iter()
            .map(|e| self.ground_event(video, e))
            .collect::<Result<Vec<_>, _>>()?;
        let grounded: Vec<GroundedAction> = events
            .iter()
            .flat_map(|e| e.grounded.iter().cloned())
            .collect();
        let claim = render_claim(&grounded, video.meta());
        Ok(GroundingOutcome {
            activation,
            events,
            claim: Some(claim),
        })
    }

    /// Grounds the query and rewrites `response` against the claim. A failing
    /// client degrades to the rule fallback and is reported in the outcome.
    pub fn correct(
        &self,
        video: &VideoEmbeddingSet,
        query: &str,
        response: &str,
    ) -> Result<CorrectionOutcome, PipelineError> {
        let grounding = self.ground_query(video, query)?;
        let Some(claim) = grounding.claim.clone().filter(|c| !c.is_empty()) else {
            return Ok(CorrectionOutcome {
                corrected: response.to_string(),
                source: CorrectionSource::Passthrough,
                grounding,
            });
        };
        let req = CorrectionRequest {
            user_query: query.to_string(),
            original_response: response.to_string(),
            claim,
        };
        let (corrected, source) = match correct_response(&req, self.transform) {
            Ok(text) => (text, CorrectionSource::Client),
            Err(_) => (fallback_correct(&req), CorrectionSource::RuleFallback),
        };
        Ok(CorrectionOutcome {
            corrected,
            source,
            grounding,
        })
    }
}
