import jsonschema
import pytest

from earthbt.evaluation import (NN_SR_THRESHOLD, EvalReport, ScenarioResult, evaluate_scenario, run_eval,
                                validate_report)
from earthbt.planner import FixtureTransport, LlmEndpointConfig


@pytest.fixture(scope="module")
def rules_report(catalog):
    return run_eval(catalog, "rules")


def test_catalog_split(catalog):
    assert len(catalog) == 30
    assert sum(s.category == "Single" for s in catalog) == 15
    assert sum(s.category == "Coordinated" for s in catalog) == 15
    assert sorted(s.id for s in catalog) == list(range(1, 31))


def test_rules_report_aggregates(rules_report):
    doc = rules_report.to_dict()
    validate_report(doc)
    agg = doc["aggregates"]
    assert (agg["Single"]["count"], agg["Coordinated"]["count"]) == (15, 15)
    assert agg["Single"]["sr"] == agg["Coordinated"]["sr"] == 1.0
    assert agg["All"]["nrf_mean"] == 0
    assert agg["All"]["tu_total"] == 0


def test_table_lists_categories(rules_report):
    lines = rules_report.table().splitlines()
    assert [ln.split()[0] for ln in lines[2:]] == ["Single", "Coordinated", "All"]
    assert lines[2].split()[1] == "15" and lines[3].split()[1] == "15"


def test_low_sr_node_count_is_bracketed():
    rows = [ScenarioResult(i, "Single", "derived", "x", success=(i == 1), nn=10) for i in range(1, 6)]
    report = EvalReport("llm", rows)
    assert report.aggregate("Single")["sr"] < NN_SR_THRESHOLD
    assert "(10.0)" in report.table()


def test_schema_rejects_unknown_fields(rules_report):
    doc = rules_report.to_dict()
    doc["scenarios"][0]["bonus"] = 1
    with pytest.raises(jsonschema.ValidationError):
        validate_report(doc)


def test_parallel_jobs_match_serial(catalog, rules_report):
    parallel = run_eval(catalog, "rules", jobs=4)
    strip = [(r.id, r.success, r.nn, r.nrf, r.ticks_used) for r in parallel.results]
    assert strip == [(r.id, r.success, r.nn, r.nrf, r.ticks_used) for r in rules_report.results]


def test_llm_failures_are_scored_not_raised(catalog):
    scen = next(s for s in catalog if s.id == 6)
    transport = FixtureTransport(["no code here"])
    res = evaluate_scenario(scen, "llm", "off", LlmEndpointConfig(auth_env=None), transport)
    assert not res.success and "fenced" in res.error
    assert res.tu > 0 and res.tu_estimated


def test_bad_hitl_spec_is_scored(catalog):
    res = evaluate_scenario(catalog[0], "rules", "scripted:/nonexistent/file.txt")
    assert not res.success and res.error.startswith("hitl")
