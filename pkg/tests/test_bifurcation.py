import numpy as np
import pytest

from varlab import bifurcation as bf
from varlab import fem

GRID = bf.geometric(0.2, 0.002, 12)


@pytest.fixture(scope="module")
def branch():
    return bf.continue_branch(bf.BranchModel(), GRID)


def test_solve_cubic_sqrt_model():
    pt = bf.solve_plambda(bf.BranchModel(), 0.05)
    assert pt.flag == "ok"
    assert pt.residual <= 1e-8
    assert pt.min_value >= 0.0
    assert np.max(np.abs(pt.u.values)) > 0.0


def test_trivial_branch_from_zero():
    model = bf.BranchModel(g="0")
    pt = bf.solve_plambda(model, 0.05, warm_start=np.zeros(63))
    assert pt.flag == "converged-to-zero"


def test_preconditions():
    with pytest.raises(ValueError):
        bf.BranchModel(q=1.0)
    with pytest.raises(ValueError):
        bf.BranchModel(q=0.0)
    with pytest.raises(ValueError):
        bf.BranchModel(s=1.0)
    with pytest.raises(ValueError):
        bf.solve_plambda(bf.BranchModel(), 0.0)
    with pytest.raises(ValueError):
        bf.continue_branch(bf.BranchModel(), [0.1])
    with pytest.raises(ValueError):
        bf.continue_branch(bf.BranchModel(), np.geomspace(0.002, 0.2, 12))


def test_branch_points_certify(branch):
    assert branch.flag == "ok"
    assert len(branch.converged) == 12
    lams = [p.lam for p in branch.points]
    assert all(b < a for a, b in zip(lams, lams[1:]))
    for p in branch.converged:
        assert p.residual <= 1e-8
        assert p.min_value >= -1e-10


def test_branch_verdicts(branch):
    v = branch.verdicts
    for key in ("energy_negative", "energy_decreasing", "ratio_bounded", "norms_to_zero"):
        assert v[key] == "pass", key
    assert v["applicability"] == "applicable"


def test_energy_map_negative_and_increasing_in_lambda(branch):
    pts = sorted(branch.converged, key=lambda p: p.lam)
    E = np.array([p.energy for p in pts])
    assert np.all(E < 0)
    # smaller lambda, higher (less negative) energy: E decreases as lambda grows
    assert np.all(np.diff(E) < -1e-12 * np.abs(E[1:]))


def test_recertify_from_serialized(branch, tmp_path):
    model = branch.model
    for i, p in enumerate(branch.converged):
        path = tmp_path / f"u_{i}.csv"
        p.u.to_csv(path)
        u = fem.DiscreteFn.from_csv(path)
        re = bf.recertify(model, bf.BranchPoint(p.lam, u, 0, 0, 0, 0, 0, 0))
        assert re["residual"] <= 1e-8
        assert re["min_value"] >= -1e-10
        for key in ("ratio", "energy", "c1proxy"):
            assert re[key] == pytest.approx(getattr(p, key), rel=1e-10, abs=1e-300)


def test_ratio_uses_exponent(branch):
    assert branch.model.exponent == pytest.approx(1.0)
    for p in branch.converged:
        assert p.ratio == pytest.approx(p.c1proxy / p.lam)


def test_evidence(branch):
    ev = bf.bifurcation_evidence(branch)
    assert ev["evidence"] == "yes"
    assert len(ev["table"]) == 12


def test_evidence_constant_norms_and_empty(branch):
    flat = [bf.BranchPoint(p.lam, p.u, 1.0, 1.0, -1.0, 0.0, 0, 0.0) for p in branch.converged]
    assert bf.bifurcation_evidence(flat)["evidence"] == "no"
    assert bf.bifurcation_evidence([])["evidence"] == "inconclusive"


def test_violating_g_collapses():
    br = bf.continue_branch(bf.BranchModel(g="-xi^0.5"), GRID)
    assert br.flag == "branch-lost"
    assert br.verdicts["applicability"].startswith("not-applicable")
    assert br.hypotheses["thm7.iii"] == "fails"


def test_grid_refinement_robustness(branch):
    fine = bf.continue_branch(bf.BranchModel(), bf.geometric(0.2, 0.002, 23))
    coarse = {round(p.lam, 15): p.c1proxy for p in branch.converged}
    matched = 0
    for p in fine.converged:
        key = round(p.lam, 15)
        if key in coarse:
            matched += 1
            assert abs(p.c1proxy - coarse[key]) <= 0.01 * coarse[key]
    assert matched >= 10
