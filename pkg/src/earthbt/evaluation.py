"""Batch evaluation over a scenario catalog: SR, NN, NRF, TU and GT by category."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources

import jsonschema

from .actionseq import analyze_flags
from .btcompile import plan_stats
from .planner.llm import LlmEndpointConfig, Transport, totals
from .planner.pipeline import make_hitl, plan_scenario
from .scenario import CATEGORIES, Scenario
from .sitesim import DEFAULT_BUDGET, run

# below this success rate the mean node count says little and is shown in parentheses
NN_SR_THRESHOLD = 0.25


@dataclass
class ScenarioResult:
    id: int
    category: str
    provenance: str
    instruction: str
    success: bool = False
    nn: int | None = None
    nrf: int | None = None
    tu: int = 0
    gt: float = 0.0
    tu_estimated: bool = False
    ticks_used: int = 0
    violations: list[str] = field(default_factory=list)
    faults: list[str] = field(default_factory=list)
    error: str | None = None


@dataclass
class EvalReport:
    planner: str
    results: list[ScenarioResult] = field(default_factory=list)

    def aggregate(self, category: str | None = None) -> dict:
        rows = [r for r in self.results if category in (None, r.category)]
        nn = [r.nn for r in rows if r.nn is not None]
        nrf = [r.nrf for r in rows if r.nrf is not None]
        wins = sum(r.success for r in rows)
        return {
            "count": len(rows),
            "successes": wins,
            "sr": wins / len(rows) if rows else None,
            "nn_mean": sum(nn) / len(nn) if nn else None,
            "nrf_mean": sum(nrf) / len(nrf) if nrf else None,
            "tu_total": sum(r.tu for r in rows),
            "gt_total": sum(r.gt for r in rows),
        }

    def to_dict(self) -> dict:
        aggregates = {c: self.aggregate(c) for c in CATEGORIES}
        aggregates["All"] = self.aggregate()
        return {"planner": self.planner, "scenarios": [asdict(r) for r in self.results],
                "aggregates": aggregates}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table(self) -> str:
        head = f"{'Category':<12} {'N':>3} {'SR':>5} {'NRF':>5} {'NN':>8} {'TU':>8} {'GT':>8}"
        lines = [head, "-" * len(head)]
        for cat in (*CATEGORIES, None):
            a = self.aggregate(cat)
            sr = "-" if a["sr"] is None else f"{a['sr']:.2f}"
            nrf = "-" if a["nrf_mean"] is None else f"{a['nrf_mean']:.2f}"
            nn = "-" if a["nn_mean"] is None else f"{a['nn_mean']:.1f}"
            if a["nn_mean"] is not None and (a["sr"] or 0) < NN_SR_THRESHOLD:
                nn = f"({nn})"
            lines.append(f"{cat or 'All':<12} {a['count']:>3} {sr:>5} {nrf:>5} {nn:>8} "
                         f"{a['tu_total']:>8} {a['gt_total']:>8.1f}")
        return "\n".join(lines)


def eval_schema() -> dict:
    return json.loads((resources.files("earthbt") / "data" / "eval_schema.json").read_text())


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, eval_schema())


def evaluate_scenario(scenario: Scenario, planner: str = "rules", hitl: str = "off",
                      config: LlmEndpointConfig | None = None, transport: Transport | None = None,
                      budget: int = DEFAULT_BUDGET, mode: str = "deterministic") -> ScenarioResult:
    out = ScenarioResult(scenario.id, scenario.category, scenario.provenance, scenario.instruction)
    try:
        feedback = make_hitl(hitl, scenario.id)
    except (ValueError, OSError) as exc:
        out.error = f"hitl: {exc}"
        return out
    res = plan_scenario(scenario, planner, config, transport, feedback)
    out.tu, out.gt = totals(res.usage)
    out.tu_estimated = any(u.estimated for u in res.usage)
    if res.sequence is not None:
        try:
            out.nrf = analyze_flags(res.sequence).nrf
        except ValueError:
            out.nrf = None
    if res.error or res.plan is None:
        out.error = res.error or "no plan"
        return out
    out.nn = plan_stats(res.plan)["nn_total"]
    try:
        report = run(res.plan, scenario, budget=budget, mode=mode)
    except ValueError as exc:
        out.error = f"run: {exc}"
        return out
    out.success = report.success
    out.ticks_used = report.ticks_used
    out.violations = [v.kind for v in report.violations]
    out.faults = list(report.faults)
    if not report.success and not out.violations and not out.faults:
        out.error = "goal not met"
    return out


def run_eval(scenarios: list[Scenario], planner: str = "rules", hitl: str = "off",
             config: LlmEndpointConfig | None = None, transport: Transport | None = None,
             jobs: int = 1, budget: int = DEFAULT_BUDGET) -> EvalReport:
    def one(s):
        return evaluate_scenario(s, planner, hitl, config, transport, budget)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(one, scenarios))
    else:
        results = [one(s) for s in scenarios]
    return EvalReport(planner, sorted(results, key=lambda r: r.id))
