import json
from fractions import Fraction

import pytest

from raes.errors import InvalidParameter
from raes.experiment import (
    CSV_COLUMNS,
    ExperimentConfig,
    rows_from_csv,
    rows_to_csv,
    rows_to_json,
    run_experiment,
    summarize,
    thread_cap,
)


def test_config_validation_and_serialization():
    cfg = ExperimentConfig("regular", (20,), 2, Fraction(3, 2), delta=6, trials=3)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    for bad in [
        dict(family="torus", n=(8,), d=1, c=1),
        dict(family="regular", n=(8,), d=1, c=1),
        dict(family="circulant", n=(8,), d=1, c=1),
        dict(family="complete", n=(), d=1, c=1),
        dict(family="complete", n=(8,), d=1, c=1, expansion="magic"),
        dict(family="complete", n=(8,), d=2, c=Fraction(1, 3)),
        dict(family="bipartite", n=(7,), d=1, c=1),
    ]:
        with pytest.raises(InvalidParameter):
            ExperimentConfig(**bad)
    with pytest.raises(InvalidParameter):
        ExperimentConfig.from_dict({"family": "complete", "n": 8, "d": 1, "c": 1, "bogus": 1})


def test_rows_schema_and_bounds():
    cfg = ExperimentConfig("complete", (64,), 4, 4, trials=20)
    rows = run_experiment(cfg, workers=1)
    assert [r.seed for r in rows] == list(range(20))
    text = rows_to_csv(rows)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert text.splitlines()[0].startswith(
        "family,n,delta,d,c,seed,rounds,total_requests,min_deg,max_deg,expansion,expansion_method"
    )
    back = rows_from_csv(text)
    assert [b["total_requests"] for b in back] == [r.total_requests for r in rows]
    (summary,) = summarize(rows, cfg)
    assert summary["max_rounds"] <= summary["round_bound"]
    assert summary["mean_requests"] <= summary["work_bound"]
    doc = json.loads(rows_to_json(rows, cfg))
    assert doc["rows"][0] == rows[0].as_record() and doc["config"]["c"] == "4"


def test_parallel_matches_serial(monkeypatch):
    cfg = ExperimentConfig("regular", (16, 20), 2, 2, delta=8, trials=6, expansion="exact")
    serial = run_experiment(cfg, workers=1)
    monkeypatch.setenv("RAES_THREADS", "3")
    assert thread_cap() == 3
    par = run_experiment(cfg)
    assert rows_to_csv(par) == rows_to_csv(serial)


def test_thread_cap_validation(monkeypatch):
    monkeypatch.setenv("RAES_THREADS", "zero")
    with pytest.raises(InvalidParameter):
        thread_cap()


def test_degenerate_capacity_single_round():
    cfg = ExperimentConfig("complete", (10,), 2, 9, trials=10)
    assert {r.rounds for r in run_experiment(cfg, workers=1)} == {1}


def test_failures_recorded_not_fatal():
    cfg = ExperimentConfig("complete", (16,), 3, Fraction(1, 3), max_rounds=1, trials=2)
    rows = run_experiment(cfg, workers=1)
    assert {r.status for r in rows} == {"not-terminated"}
    cfg = ExperimentConfig("regular", (9,), 1, 2, delta=3, trials=1)
    (row,) = run_experiment(cfg, workers=1)
    assert row.status.startswith("error:")
    cfg = ExperimentConfig("complete", (30,), 1, 2, trials=1, expansion="exact")
    (row,) = run_experiment(cfg, workers=1)
    assert row.expansion is None and row.expansion_method.startswith("failed")


def test_expansion_modes():
    for mode in ("exact", "sampled", "spectral"):
        cfg = ExperimentConfig("circulant", (12,), 2, 2, offsets=(1, 2, 3), trials=2, expansion=mode)
        rows = run_experiment(cfg, workers=1)
        assert all(r.expansion is not None for r in rows)
