"""End-to-end acceptance criteria A1-A11.

Each test records a one-line outcome; the terminal summary lists them as
``A<n> PASS|FAIL  detail``.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from varlab import bifurcation as bf
from varlab import cli, config, fem, pairs, runs
from varlab import fixedpoint as fp
from varlab import hypotheses as h
from varlab import minhunt as mh
from varlab.pairs import fem_pair
from varlab.varprinciple import lambda_star, phi_of_rho

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_a1_phi_quotient_exactness(criterion):
    pair = pairs.linear_quadratic()
    worst = 0.0
    for rho in (0.25, 1.0, 4.0, 100.0):
        exact = 1.0 / (2.0 * np.sqrt(rho))
        r = np.sqrt(rho)
        xs = np.append(np.arange(-r + 1e-4, r, 1e-4), r * (1 - 1e-12))
        oracle = float(np.min((r - xs) / (rho - xs**2)))
        assert abs(oracle - exact) <= 1e-4
        worst = max(worst, abs(phi_of_rho(pair, rho).phi_hat - exact))
    criterion(f"max |phi_hat - 1/(2 sqrt rho)| = {worst:.2e}")
    assert worst <= 1e-4


def test_a2_linear_fixed_point(criterion):
    spec = fp.linear(1.0)
    rep = fp.find_fixed_point(spec, 4.0)
    criterion(f"phi_hat = {rep.phi_hat:.8f}, x = {rep.point}, |x| = {rep.norm}")
    assert abs(rep.phi_hat - 0.25) <= 1e-4 and rep.phi_hat < 0.5
    assert rep.found and abs(rep.point[0] - 1.0) <= 1e-6 and rep.norm < 2.0


def _fd(fun, c, h=1e-6):
    g = np.empty_like(c)
    for i in range(c.size):
        e = np.zeros_like(c)
        e[i] = h
        g[i] = (fun(c + e) - fun(c - e)) / (2 * h)
    return g


def test_a3_gradient_consistency(criterion):
    worst = {}
    for p, tol in ((2, 1e-6), (3, 1e-4)):
        for n in (8, 32):
            for bc in ("dirichlet", "neumann"):
                if bc == "dirichlet":
                    m = fem.EnergyModel.dirichlet("xi^3", p=p, n_elements=n)
                else:
                    m = fem.EnergyModel.neumann("xi^3 - xi", "xi", "1", "0.5", "1", p=p, n_elements=n)
                mu = 0.8
                E = lambda c, m=m: (fem.assemble_phi(m, fem.DiscreteFn(m.space, c))  # noqa: E731
                                    + mu * fem.assemble_psi(m, fem.DiscreteFn(m.space, c)))
                rng = np.random.default_rng(1000 * p + n)
                err = 0.0
                for _ in range(20):
                    c = rng.standard_normal(m.space.dim)
                    g = fem.grad_energy(m, fem.DiscreteFn(m.space, c), mu)
                    fd = _fd(E, c)
                    err = max(err, float(np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd)))))
                worst[(p, n, bc)] = err
                assert err <= tol, (p, n, bc, err)
    criterion("worst relative error p=2: %.1e, p=3: %.1e" % (
        max(v for k, v in worst.items() if k[0] == 2), max(v for k, v in worst.items() if k[0] == 3)))


def test_a4_linear_fem_oracle(criterion):
    m = fem.EnergyModel.dirichlet("1", p=2, n_elements=64)
    u, ok, _ = fem.newton_solve(m, m.space.zero(), 0.5)
    x = m.space.mesh.nodes
    err = float(np.max(np.abs(u.values - x * (1 - x) / 2)))
    res = fem.residual(m, u, 1.0 / m.mu_scale(0.5))
    criterion(f"nodal error {err:.1e}, residual {res:.1e}")
    assert ok and err <= 1e-8 and res <= 1e-12


def test_a5_lambda_star_zero(criterion):
    pair = pairs.norm_pair()
    lam = lambda_star(pair, {"start": 0.01, "stop": 100.0, "num": 9})
    found = []
    for lam_i in (0.1, 1.0):
        m = mh.minimize_sublevel(pair, lam_i, 10.0, start=np.array([2.0]))
        x = float(m.point[0])
        # subdifferential of x^2 + lam |x| at 0 is [-lam, lam]; elsewhere the gradient
        if x == 0.0 or abs(x) <= 1e-12:
            stationary = abs(2 * x) <= lam_i
        else:
            stationary = abs(2 * x + lam_i * np.sign(x)) <= 1e-8
        grid = np.linspace(-3, 3, 600001)
        global_ok = m.energy <= float(np.min(grid**2 + lam_i * np.abs(grid))) + 1e-12
        found.append((lam_i, x, stationary, global_ok))
        assert stationary and global_ok
    criterion(f"lambda*_hat = {lam:.2e}; minimizers " + ", ".join(f"lam={a}: x={b:.1e}" for a, b, *_ in found))
    assert abs(lam) <= 1e-4


def test_a6_hypothesis_checkers(criterion):
    good = h.check_ar("xi^3", 4, 1)
    bad = [h.check_ar("xi", 3, 1), h.check_ar("xi^3", 5, 1)]
    lz_good, lz_bad = h.check_limit_zero("xi^3"), h.check_limit_zero("xi")
    criterion(f"AR: {good.label} / {bad[0].status} / {bad[1].status}; "
              f"limit: {lz_good.label} / {lz_bad.status}")
    assert good.status == h.HOLDS and lz_good.status == h.HOLDS
    for v in bad + [lz_bad]:
        assert v.status == h.FAILS and v.witnesses and v.replay()


def test_a7_mountain_pass(criterion):
    toy = mh.mountain_pass(pairs.double_well(), 0.0, [-1.0, 0.0], [1.0, 0.0])
    m = fem.EnergyModel.dirichlet("xi^3", p=2, n_elements=32)
    pair = fem_pair(m)
    far = 10.0 * np.sin(np.pi * m.space.mesh.nodes[1:-1])
    res = mh.mountain_pass(pair, 0.5, np.zeros_like(far), far)
    r = fem.residual(m, fem.DiscreteFn(m.space, res.point), 1.0 / m.mu_scale(0.5))
    criterion(f"toy saddle {toy.point} |grad| {toy.grad_norm:.1e}; "
              f"FEM max|u| {np.max(np.abs(res.point)):.3f} residual {r:.1e}")
    assert np.max(np.abs(toy.point)) <= 1e-3 and toy.grad_norm <= 1e-6
    assert res.success and np.max(np.abs(res.point)) > 0 and r <= 1e-4


def test_a8_oscillation_hunt(criterion):
    cfg = config.load(CONFIGS / "hunt_example1.json", "hunt")
    assert cfg.problem.N == 64 and cfg.mu == 1 and len(cfg.ladder.rhos()) >= 6
    pair = config.build_pair(cfg.problem)
    rep = mh.hunt_increasing(pair, cfg.mu, cfg.ladder.rhos(), budget=cfg.budget, seed=cfg.seed,
                             stagnation=cfg.stagnation)
    n = len(rep.accepted)
    criterion(f"{n} accepted minima at Psi = " + ", ".join(f"{m.psi:.6g}" for m in rep.accepted))
    assert n >= 1
    psis = [m.psi for m in rep.accepted]
    assert all(b > a for a, b in zip(psis, psis[1:]))
    for m in rep.accepted:
        assert m.grad_norm <= 1e-6 and m.residual <= 1e-6 and m.psi < m.rho
        assert mh.recertify(pair, m, gtol=1e-6, res_tol=1e-6)
    pts = [m.point for m in rep.accepted]
    for i in range(len(pts)):
        for j in range(i):
            scale = 1 + max(np.max(np.abs(pts[i])), np.max(np.abs(pts[j])))
            assert np.max(np.abs(pts[i] - pts[j])) / scale > 1e-6


def test_a9_bifurcation_branch(criterion):
    br = bf.continue_branch(bf.BranchModel("1", 3.0, "1", 0.5), bf.geometric(0.2, 0.002, 12))
    pts = br.converged
    E = np.array([p.energy for p in sorted(pts, key=lambda p: p.lam)])
    tail = np.array([p.ratio for p in pts])[len(pts) // 2:]
    spread = float(tail.max() / tail.min())
    criterion(f"{len(pts)}/12 converged, max residual {max(p.residual for p in pts):.1e}, "
              f"min value {min(p.min_value for p in pts):.1e}, ratio spread {spread:.2f}")
    assert len(pts) >= 8
    for p in pts:
        assert p.residual <= 1e-8 and p.min_value >= -1e-10
    assert np.all(E < 0) and np.all(np.diff(E) < 0)
    assert spread <= 10.0


def test_a10_straddle_scan(criterion):
    radii = np.geomspace(0.5, 16.0, 40)
    pl = fp.thm5_scan(fp.plateau(2), radii)
    qu = fp.thm5_scan(fp.quadratic(0.25, dim=2), radii)
    criterion(f"plateau tail ratio in [{pl.tail_min:.3f}, {pl.tail_max:.3f}]; "
              f"quarter quadratic [{qu.tail_min:.3f}, {qu.tail_max:.3f}]")
    assert pl.tail_min < 0.48 and pl.tail_max > 0.52 and pl.straddles
    assert not qu.straddles


DETERMINISM = {
    "phi-curve": ["phi_curve_toy", "phi_curve_dirichlet"],
    "hunt": ["hunt_decreasing_toy"],
    "bifurcate": ["bifurcate"],
    "fixed-point": ["fixed_point", "fixed_point_scan"],
    "check": ["check", "check_cubic"],
    "mountain-pass": ["mountain_pass_toy", "mountain_pass_dirichlet"],
    "problem1": ["problem1"],
}

SMALL_EXAMPLE1 = {"command": "hunt", "problem": {"kind": "example1", "p": 2, "N": 16}, "mu": 1,
                  "ladder": {"start": 1000, "levels": 3}, "budget": 4, "seed": 7}


def _artifacts(d):
    # report.json carries the wall clock, and MANIFEST hashes it
    skip = {"report.json", "MANIFEST"}
    return {f.name: f.read_bytes() for f in sorted(Path(d).iterdir()) if f.name not in skip}


def test_a11_determinism(criterion, tmp_path):
    jobs = []
    for command, names in DETERMINISM.items():
        for name in names:
            jobs.append((command, str(CONFIGS / f"{name}.json")))
    small = tmp_path / "small.json"
    small.write_text(json.dumps(SMALL_EXAMPLE1))
    jobs.append(("hunt", str(small)))
    compared = 0
    for i, (command, path) in enumerate(jobs):
        outputs = []
        for rep, j in enumerate(("1", "8", "1", "8")):
            out = tmp_path / f"{i}_{rep}"
            code = cli.main([command, "--config", path, "--out", str(out), "--jobs", j])
            assert code in (0, 4)
            (d,) = runs.list_runs(out)
            outputs.append(_artifacts(d))
        for o in outputs[1:]:
            assert o == outputs[0], path
        compared += sum(name.endswith(".csv") for name in outputs[0])
    criterion(f"{len(jobs)} configs x 4 runs (jobs 1/8), {compared} CSV files byte-identical")
    assert compared > 0
