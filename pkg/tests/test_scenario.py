import csv
import json

import numpy as np
import pytest

from nearincl.algebra import FdAlgebra, block_algebra
from nearincl.errors import InvalidInputError
from nearincl.scenario import (
    BENCH_COLUMNS,
    PerturbationScenario,
    ScenarioParams,
    bench,
    estimate_gamma,
    generate_scenario,
    kk_distance,
    parse_seeds,
    parse_sweep,
    run_report,
    run_scenario,
    verify_certificate,
)

E12 = np.array([[0, 1], [0, 0]], dtype=complex)


def test_generate_is_deterministic():
    params = ScenarioParams(block_sizes=(2,), ambient_dim=4, strength=1e-3)
    a = json.dumps(generate_scenario(params, 5).to_json())
    b = json.dumps(generate_scenario(params, 5).to_json())
    assert a == b


def test_zero_strength_is_exact_inclusion():
    sc = generate_scenario(ScenarioParams(block_sizes=(2, 1), strength=0.0), 0)
    assert sc.gamma_bracket.upper <= 1e-12


def test_block_diagonal_container_gamma_constant():
    params = ScenarioParams(block_sizes=(2,), ambient_dim=4, container_blocks=(2, 2), strength=1e-3)
    sc = generate_scenario(params, 1)
    assert sc.gamma_bracket.lower <= sc.gamma_bracket.upper <= 4 * 1e-3


def test_gamma_against_planted_similarity():
    s = 1e-4
    sc = generate_scenario(ScenarioParams(block_sizes=(1, 1, 1), strength=s), 2)
    kappa = np.linalg.cond(sc.similarity)
    assert sc.gamma_bracket.upper <= kappa ** 2 * 2 * s * (1 + 1e-3)


def test_invalid_params():
    with pytest.raises(InvalidInputError):
        generate_scenario(ScenarioParams(block_sizes=(2, 2), ambient_dim=3), 0)
    with pytest.raises(InvalidInputError):
        generate_scenario(ScenarioParams(container="nope"), 0)
    with pytest.raises(InvalidInputError):
        generate_scenario(ScenarioParams(block_sizes=(2,), ambient_dim=4, container_blocks=(1, 3)), 0)


def test_estimate_gamma_examples():
    diag = block_algebra([1, 1])
    assert estimate_gamma(diag, block_algebra([1, 1])).upper <= 1e-10
    g = estimate_gamma(FdAlgebra.from_spanning([np.eye(2), E12]), diag)
    assert g.upper >= 1 and g.lower >= 1 - 1e-6


def test_kk_distance():
    diag = block_algebra([1, 1])
    same = kk_distance(diag, diag)
    assert max(same.symmetric) <= 1e-10
    r = kk_distance(diag, FdAlgebra.from_spanning([np.eye(2), E12]))
    assert r.symmetric[1] >= 1
    assert r.symmetric == (max(r.one_sided_a_in_b[0], r.one_sided_b_in_a[0]),
                           max(r.one_sided_a_in_b[1], r.one_sided_b_in_a[1]))


def test_scenario_json_round_trip(tmp_path):
    sc = generate_scenario(ScenarioParams(block_sizes=(2,), ambient_dim=3, strength=1e-4), 0)
    sc.save(tmp_path / "s.json")
    back = PerturbationScenario.load(tmp_path / "s.json")
    assert json.dumps(back.to_json()) == json.dumps(sc.to_json())


@pytest.mark.parametrize("kw,code", [
    (dict(block_sizes=(2,), ambient_dim=4, strength=1e-3), 0),
    (dict(block_sizes=(2, 1), ambient_dim=4, container="upper-block-triangular", strength=1e-5), 0),
    (dict(block_sizes=(1, 1, 1, 1), strength=0.2), 2),
])
def test_run_report_and_verify(tmp_path, kw, code):
    sc = generate_scenario(ScenarioParams(**kw), 3)
    cert, exit_code, paths = run_report(sc, tmp_path)
    assert exit_code == code
    assert all(p.exists() for p in paths.values())
    rep = verify_certificate(paths["certificate"])
    assert rep.matches, rep.details


def test_run_report_is_byte_identical(tmp_path):
    sc = generate_scenario(ScenarioParams(block_sizes=(2, 2), strength=1e-4, unitary=True), 4)
    _, _, p1 = run_report(sc, tmp_path / "a")
    _, _, p2 = run_report(sc, tmp_path / "b")
    assert p1["certificate"].read_bytes() == p2["certificate"].read_bytes()


def test_trivial_scenario_gives_identity():
    cert = run_scenario(generate_scenario(ScenarioParams(block_sizes=(2,), ambient_dim=3, strength=0.0), 0))
    assert cert.exit_code == 0
    assert np.allclose(cert.similarity, np.eye(3), atol=1e-10)


def test_unitary_scenario_is_unitarized():
    cert = run_scenario(generate_scenario(ScenarioParams(block_sizes=(2, 1), strength=1e-5, unitary=True), 0))
    assert cert.passed and cert.unitary is not None and cert.unitary["bound_satisfied"]


def test_verify_detects_tampering(tmp_path):
    sc = generate_scenario(ScenarioParams(block_sizes=(2,), ambient_dim=3, strength=1e-4), 0)
    _, _, paths = run_report(sc, tmp_path)
    obj = json.loads(paths["certificate"].read_text())
    obj["outcome"] = "threshold"
    paths["certificate"].write_text(json.dumps(obj))
    assert not verify_certificate(paths["certificate"]).matches


def test_parse_seeds_and_sweep():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4,7") == [4, 7]
    with pytest.raises(InvalidInputError):
        parse_seeds("3..1")
    name, vals = parse_sweep("strength=logspace(1e-6,1e-2,5)")
    assert name == "strength" and vals[0] == pytest.approx(1e-6) and vals[-1] == pytest.approx(1e-2)
    assert np.allclose(np.diff(np.log10(vals)), 1.0)
    assert parse_sweep("strength=1e-4,1e-3") == ("strength", [1e-4, 1e-3])
    with pytest.raises(InvalidInputError):
        parse_sweep("strength")


def test_bench_writes_csv(tmp_path):
    path = tmp_path / "b.csv"
    rows = bench([0, 1], ScenarioParams(block_sizes=(1, 1), strength=1e-4),
                 sweep=("strength", [1e-5, 0.2]), csv_path=path)
    assert len(rows) == 4
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == BENCH_COLUMNS
    assert [r["outcome"] for r in table] == ["pass", "pass", "threshold", "threshold"]
    with pytest.raises(InvalidInputError):
        bench([0], ScenarioParams(), sweep=("nope", [1]))
