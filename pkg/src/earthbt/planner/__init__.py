"""Plan generation: prompt assembly, LLM client, HITL refinement and the rule-based oracle."""
from .llm import (AuthMissing, FixtureTransport, HttpError, LlmEndpointConfig, LlmError, NoArtifact,
                  Timeout, UsageRecord, extract_artifact, request, totals)
from .pipeline import (InteractiveHitl, NoHitl, PipelineResult, PlanningError, ScriptedHitl,
                       generate_sequence, generate_trees, make_hitl, plan_scenario)
from .prompts import (BudgetExhausted, HitlFeedback, MissingContext, PromptBundle, Stage, build_prompt,
                      refine, sequence_context, tree_context)
from .rules import UnsupportedScenario, rule_planner

__all__ = [
    "AuthMissing", "BudgetExhausted", "FixtureTransport", "HitlFeedback", "HttpError",
    "InteractiveHitl", "LlmEndpointConfig", "LlmError", "MissingContext", "NoArtifact", "NoHitl",
    "PipelineResult", "PlanningError", "PromptBundle", "ScriptedHitl", "Stage", "Timeout",
    "UnsupportedScenario", "UsageRecord", "build_prompt", "extract_artifact", "generate_sequence",
    "generate_trees", "make_hitl", "plan_scenario", "refine", "request", "rule_planner",
    "sequence_context", "totals", "tree_context",
]
