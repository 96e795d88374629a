import json
import os

import numpy as np
import pytest

from curvelayers import cli, harness, scenarios


def test_expression_parser():
    f = scenarios.parse_expression("1 + t**2 + sin(pi*theta)", ("t", "theta"))
    assert abs(f(1.0, 0.5) - 3.0) < 1e-14
    with pytest.raises(ValueError):
        scenarios.parse_expression("__import__('os')", ("t",))
    with pytest.raises(ValueError):
        scenarios.parse_expression("unknown_symbol + t", ("t",))


def test_scenario_roundtrip(tmp_path):
    scn = scenarios.builtin_scenario("flat-channel")
    path = tmp_path / "scn.json"
    scenarios.save_scenario(scn, path)
    again = scenarios.load_scenario(path)
    assert again.name == scn.name
    assert again.epsilons == scn.epsilons
    with pytest.raises(ValueError):
        scenarios.Scenario(name="x", epsilons=(0.05, 0.1))  # not descending
    with pytest.raises(ValueError):
        scenarios.Scenario(name="x", stages=("nope",))


def test_constant_v_flagged_degenerate(tmp_path):
    res = harness.run_scenario("constant-V", str(tmp_path))
    assert res.exit_code != 0
    assert res.summary["stages"]["geodesic"]["nondegenerate"] is False
    # stage isolation: earlier stages unaffected
    assert res.summary["stages"]["profiles"]["passed"]


def test_resonant_epsilon_skips_pde(tmp_path):
    eps5 = float(np.sqrt(3.0 / np.pi**2) / 5.0)
    scn = scenarios.Scenario(
        name="resonant-probe",
        epsilons=(eps5,),
        gap_constant=0.5,
        stages=("profiles", "gap", "pde"),
        pde_eps=eps5,
        f_expr="",
        e_expr="",
    )
    res = harness.run_scenario(scn, str(tmp_path))
    assert res.exit_code != 0
    assert res.summary["stages"]["gap"]["passed"] is False
    assert res.summary["stages"]["pde"].get("skipped") is True


def test_order_study_needs_three(tmp_path):
    scn = scenarios.Scenario(name="short", epsilons=(0.1, 0.05), f_expr="", e_expr="")
    with pytest.raises(ValueError):
        harness.order_study(scn, "interior_sup")
    with pytest.raises(ValueError):
        harness.order_study(scenarios.builtin_scenario("flat-channel"), "no_such_quantity")


def test_order_study_projection_quantity(tmp_path):
    res = harness.order_study(scenarios.builtin_scenario("flat-channel"), "projection", outdir=str(tmp_path), tier=5)
    # the projection defect against the reduced forms shrinks beyond eps^2
    assert res["slope"] > 2.0
    assert len(res["eps"]) == 4


def test_gap_sweep_table(tmp_path):
    rows = harness.gap_sweep(3.0, 0.2, 0.3, n=11, outdir=str(tmp_path))
    assert rows.shape == (11, 3)
    assert os.path.exists(tmp_path / "gap_sweep.txt")


def test_cli_smoke(tmp_path):
    code = cli.main(["gap-sweep", "--p", "3", "--eps-min", "0.2", "--eps-max", "0.3", "--n", "5", "--out", str(tmp_path)])
    assert code == 0
    scn_path = tmp_path / "short.json"
    scenarios.save_scenario(
        scenarios.Scenario(
            name="cli-short",
            epsilons=(0.1,),
            stages=("profiles", "chart", "gap", "geodesic"),
            f_expr="",
            e_expr="",
        ),
        scn_path,
    )
    code = cli.main(["run", str(scn_path), "--out", str(tmp_path)])
    assert code == 0
    summary = json.load(open(tmp_path / "cli-short" / "summary.json"))
    assert summary["ok"] is True


def test_stage_list_override(tmp_path):
    res = harness.run_scenario("flat-channel", str(tmp_path), stages=("profiles", "chart"))
    assert res.exit_code == 0
    assert set(res.summary["stages"]) == {"profiles", "chart"}
