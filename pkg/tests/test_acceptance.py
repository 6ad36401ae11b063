"""Acceptance criteria 1-8, each printing one PASS/FAIL line."""
import csv
import time
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from ecmodes import cli, dynamics, greens, units
from ecmodes.config import parse_and_validate
from ecmodes.dynamics import EIGEN, RK4, assemble, build_grid
from ecmodes.modes import CHOLESKY, LOWDIN, Emitter, EmitterSet, mode_bases

from . import oracles
from .conftest import NORM_BUDGET, NORM_LOG, lorentzian_amplitude, single_lorentzian

DATA = Path(resources.files("ecmodes") / "data")


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number}] {'PASS' if ok else 'FAIL'} {title}: {detail}")
        assert ok, detail

    return emit


def test_criterion_1_free_space_decay(report):
    start = time.perf_counter()
    prov = greens.FreeSpace([greens.PointSpec("e1", [0, 0, 0])])
    em = EmitterSet([Emitter("e1", 0.1, 2.0)])
    system = assemble(prov, em, build_grid(0.5, 6.0, 4000))
    # fit window kept inside half the recurrence time of the discretised continuum
    t_end = 0.45 * system.grid.recurrence_time
    s = dynamics.propagate(system, dynamics.wigner_weisskopf_initial(system), t_end, propagator=EIGEN, n_samples=300)
    fit = dynamics.fit_decay_rate(s.times, s.emitter_populations[:, 0], 0.1 * t_end, t_end)
    ref = oracles.free_space_rate(2.0, 0.1)
    err = abs(fit - ref) / ref
    wall = time.perf_counter() - start
    report(1, "free-space Wigner-Weisskopf rate", err <= 0.02 and wall < 60,
           f"fit {fit:.8e} 1/fs vs closed form {ref:.8e} (rel err {err:.2e}, {wall:.1f} s)")


def test_criterion_2_lorentzian_damped_rabi(report):
    prov, em = single_lorentzian(g=0.05, kappa=0.05)
    system = assemble(prov, em, build_grid(0.5, 3.5, 1200))
    s = dynamics.propagate(system, dynamics.wigner_weisskopf_initial(system), 200.0, propagator=RK4, n_samples=400)
    ref = oracles.damped_rabi_population(s.times, 0.05, 0.05)
    err = float(np.max(np.abs(s.emitter_populations[:, 0] - ref)))
    report(2, "Lorentzian bath vs damped Rabi", err <= 1e-3, f"max |P - P_exact| = {err:.2e} over [0, 200] fs")


def test_criterion_3_orthogonalization_invariance(report):
    pts = [
        greens.PointSpec("e1", [0, 0, 0]),
        greens.PointSpec("e2", [30, 0, 0]),
        greens.PointSpec("p3", [15, 40, 0]),
    ]
    prov = greens.FreeSpace(pts)
    em = EmitterSet([Emitter("e1", 3.0, 2.0), Emitter("e2", 3.0, 2.0)])
    grid = build_grid(0.5, 6.0, 1000)
    out = {}
    for method in (CHOLESKY, LOWDIN):
        system = assemble(prov, em, grid, method)
        s = dynamics.propagate(system, dynamics.wigner_weisskopf_initial(system, "e1"), 300.0, propagator=EIGEN,
                      n_samples=60)
        dens = np.array([s.continuum_density(k).sum(axis=0) for k in range(s.times.size)])
        field = dynamics.reconstruct_field(s, system, prov, "p3").intensity
        out[method] = (s.emitter_populations, dens, field)
    dp = np.max(np.abs(out[CHOLESKY][0] - out[LOWDIN][0]))
    dd = np.max(np.abs(out[CHOLESKY][1] - out[LOWDIN][1]))
    fi = out[CHOLESKY][2]
    df = np.max(np.abs(fi - out[LOWDIN][2])) / np.max(fi)
    ok = dp <= 1e-9 and dd <= 1e-9 and df <= 1e-9
    report(3, "Cholesky vs Lowdin invariance", ok,
           f"populations {dp:.1e}, continuum density {dd:.1e} 1/eV, |E+|^2 {df:.1e} (relative to peak)")


def test_criterion_4_dicke_limit(report):
    kappa, mu, gamma = 0.3, 0.1, 0.003
    amp = lorentzian_amplitude(np.sqrt(kappa * gamma / 2), kappa, 2.0, mu)
    prov = greens.LorentzianModel(["p"], [greens.LorentzianTerm(2.0, kappa, [[amp]])])
    grid = build_grid(0.5, 3.5, 1500)
    T = 3 * units.HBAR_EVFS / gamma
    one = assemble(prov, EmitterSet([Emitter("a", mu, 2.0, point="p")]), grid)
    s1 = dynamics.propagate(one, dynamics.wigner_weisskopf_initial(one), T, propagator=EIGEN, n_samples=300)
    r1 = dynamics.fit_decay_rate(s1.times, s1.emitter_populations[:, 0], 0.2 * T, T)
    pair = assemble(prov, EmitterSet([Emitter("a", mu, 2.0, point="p"), Emitter("b", mu, 2.0, point="p")]), grid)
    ranks = set(pair.ranks.tolist())
    sym = dynamics.propagate(pair, dynamics.emitter_superposition(pair, [1, 1]), T, propagator=EIGEN, n_samples=300)
    rs = dynamics.fit_decay_rate(sym.times, sym.emitter_populations.sum(axis=1), 0.1 * T, 0.5 * T)
    anti = dynamics.propagate(pair, dynamics.emitter_superposition(pair, [1, -1]), T, propagator=EIGEN, n_samples=300)
    drift = float(np.max(np.abs(anti.emitter_populations.sum(axis=1) - 1.0)))
    ratio = rs / (2 * r1)
    ok = ranks == {1} and abs(ratio - 1) <= 0.03 and drift < 1e-4
    report(4, "Dicke limit", ok,
           f"ranks {sorted(ranks)}, symmetric/2*single rate {ratio:.4f}, antisymmetric drift {drift:.1e} over 3/Gamma")


def test_criterion_5_gram_identity_sweep(report):
    worst_gram = worst_orth = 0.0
    nodes = 0
    for path in sorted(DATA.glob("*.yaml")):
        cfg = parse_and_validate(path)
        omegas = cfg.grid().nodes
        for method in (CHOLESKY, LOWDIN):
            for b in mode_bases(cfg.provider, cfg.emitters, omegas, method, cfg.eps_rank):
                scale = max(float(np.max(b.G)) ** 2, np.finfo(float).tiny)
                worst_gram = max(worst_gram, float(np.max(np.abs(b.g @ b.g.T - b.gram))) / scale)
                act = np.ix_(b.active, b.active)
                Va = b.V[:, b.active]
                if Va.size:
                    worst_orth = max(worst_orth, float(np.max(np.abs(Va @ b.S[act] @ Va.T - np.eye(b.rank)))))
                nodes += 1
    ok = worst_gram <= 1e-10 and worst_orth <= 1e-10
    report(5, "Gram identity sweep", ok,
           f"{nodes} node/method pairs; max |g g^T - G S G| / max G^2 = {worst_gram:.1e}, max |V S V^T - I| = {worst_orth:.1e}")


def test_criterion_6_cholesky_sparsity(report):
    cfg = parse_and_validate(DATA / "hybrid_synthetic.yaml")
    em = EmitterSet([cfg.emitters[0], Emitter("e2", 0.0, 2.0)])  # emitter 2 absent
    system = assemble(cfg.provider, em, cfg.grid(), CHOLESKY)
    s = dynamics.propagate(system, dynamics.wigner_weisskopf_initial(system, "e1"), 100.0, propagator=RK4, n_samples=20)
    j2 = np.array([s.continuum_density(k)[1] for k in range(s.times.size)])
    j1 = np.array([s.continuum_density(k)[0] for k in range(s.times.size)])
    ok = not np.any(j2) and np.any(j1)
    report(6, "Cholesky continuum sparsity", ok,
           f"j=2 density exactly zero: {not np.any(j2)} (max {float(np.max(j2))!r}); j=1 populated: {bool(np.any(j1))}")


def test_criterion_7_norm_conservation(report):
    # representative runs here; conftest checks every undriven run of the suite
    prov, em = single_lorentzian(g=0.05, kappa=0.05)
    system = assemble(prov, em, build_grid(1.0, 3.0, 600))
    init = dynamics.wigner_weisskopf_initial(system)
    drifts = {
        RK4: dynamics.propagate(system, init, 300.0, propagator=RK4, n_samples=30).norm_drift,
        EIGEN: dynamics.propagate(system, init, 300.0, propagator=EIGEN, n_samples=30).norm_drift,
    }
    seen = {p: max([d for q, d in NORM_LOG if q == p], default=0.0) for p in NORM_BUDGET}
    ok = all(drifts[p] <= NORM_BUDGET[p] and seen[p] <= NORM_BUDGET[p] for p in NORM_BUDGET)
    report(7, "norm conservation", ok,
           f"rk4 {drifts[RK4]:.1e} (suite max {seen[RK4]:.1e}, budget 1e-8); "
           f"eigen {drifts[EIGEN]:.1e} (suite max {seen[EIGEN]:.1e}, budget 1e-12); {len(NORM_LOG)} runs checked")


def _read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def test_criterion_8_hybrid_pipeline(report, tmp_path):
    start = time.perf_counter()
    code = cli.main(["--config", str(DATA / "hybrid_synthetic.yaml"), "--out", str(tmp_path), "--dump-spectra"])
    wall = time.perf_counter() - start
    _, pops = _read(tmp_path / "populations.csv")
    P1, P2 = pops[:, 1], pops[:, 2]
    dP2 = np.diff(P2)
    p2_non_monotonic = bool(np.any(dP2 > 1e-12) and np.any(dP2 < -1e-12))
    # back-transfer: emitter 1 regains population after losing it
    back = float(np.max(P1[1:] - np.minimum.accumulate(P1)[:-1]))
    _, cont = _read(tmp_path / "continuum.csv")
    total = cont[:, 1:].sum(axis=1)
    peak = float(cont[np.argmax(total), 0])
    _, fld = _read(tmp_path / "field_p3.csv")
    I = fld[:, 3]
    k = int(np.argmax(I))
    transient = 0 < k < I.size - 1 and I[-1] < 1e-3 * I[k] and I[0] < 1e-3 * I[k]
    _, spec = _read(tmp_path / "spectra.csv")
    ok = (code == 0 and wall < 300 and p2_non_monotonic and back > 1e-3
          and abs(peak - 2.0) < 0.2 and transient and np.ptp(pops[:, -1]) <= 1e-12)
    report(8, "synthetic hybrid pipeline", ok,
           f"{wall:.1f} s, P2 non-monotonic {p2_non_monotonic}, back-transfer {back:.3f}, "
           f"continuum peak {peak:.4f} eV, field peak at {fld[k, 0]:.1f} fs, ranks {sorted({int(r) for r in spec[:, -1]})}")
