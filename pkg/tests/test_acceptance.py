"""Acceptance suite: runs ``reflected-stable validate`` on the default configuration once
and reports each criterion at its stated tolerance."""
import json

import pytest

from reflected_stable.cli import main

CRITERIA = [
    (1, "markov_mass"),
    (2, "series_vs_exp"),
    (3, "chapman_kolmogorov"),
    (4, "poisson_normalization"),
    (5, "exit_time_oracle"),
    (6, "resolvent_suite"),
    (7, "generator_residual"),
    (8, "boundary_trace"),
    (9, "doeblin_and_tv"),
    (10, "stationarity"),
    (11, "mc_cross_validation"),
    (12, "sampler_suite"),
]


@pytest.fixture(scope="session")
def validate_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("validate")
    rc = main(["validate", "--out", str(out)])
    report = {e["check"]: e for e in json.loads((out / "run_report.json").read_text())}
    return rc, report


def test_validate_exits_zero(validate_run):
    rc, report = validate_run
    failed = [name for name, e in report.items() if e["status"] == "fail"]
    assert rc == 0, f"failed checks: {failed}"


def test_every_criterion_has_one_check(validate_run):
    _, report = validate_run
    assert {name for _, name in CRITERIA} <= set(report)


@pytest.mark.parametrize("number,name", CRITERIA, ids=[n for _, n in CRITERIA])
def test_criterion(validate_run, number, name, capsys):
    entry = validate_run[1][name]
    with capsys.disabled():
        print(f"\ncriterion {number:2d} {name}: {entry['status'].upper()} "
              f"value={json.dumps(entry['value'])} tolerance={json.dumps(entry['tolerance'])}")
    assert entry["status"] == "pass", entry["note"]
