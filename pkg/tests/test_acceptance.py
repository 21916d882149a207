"""Acceptance suite: one PASS/FAIL line per check, criteria numbered 1 to 11."""
import math
import time

import numpy as np
import pytest

from conftest import CASES, PATH_MUS, path_pipeline, pipeline
from fieldgen import random_field
from oracles import fd_benard_lambda2, fd_benard_richardson
from taylor_transit import axifield as af
from taylor_transit import centermanifold as cm
from taylor_transit import cli
from taylor_transit import dns
from taylor_transit import fields as fl
from taylor_transit import linstab as ls
from taylor_transit import transition as tr
from taylor_transit.params import make_params
from taylor_transit.radial_ops import DiffOperators, build_gap_grid, build_grid, weighted_inner

case_ids = [f"eta{e}-mu{m}" for e, m in CASES]


# --- 1 ---------------------------------------------------------------------------------

def test_c1_narrow_gap_anchor(verdict):
    t0 = time.perf_counter()
    g = build_gap_grid(128)
    ops = DiffOperators(g)
    crit = ls.find_critical(None, g, ops, coupling=ls.narrowgap_coupling(0.0, g))
    elapsed = time.perf_counter() - t0
    fd = fd_benard_lambda2(crit.a_c, 1000)
    rel = abs(crit.T_c - fd) / fd
    extrap = fd_benard_richardson(crit.a_c)
    ok = (abs(crit.T_c - 1707.762) <= 0.5 and abs(crit.a_c - 3.117) <= 0.005
          and rel < 1e-5 and elapsed < 10)
    verdict("C1", "narrow-gap critical point vs FD oracle", ok,
            f"T_c={crit.T_c:.4f} a_c={crit.a_c:.4f} fd(m=1000)={fd:.4f} rel={rel:.2e} "
            f"(extrapolated rel={abs(crit.T_c - extrap) / extrap:.1e}) time={elapsed:.1f}s")


# --- 2 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("eta,mu", CASES, ids=case_ids)
def test_c2_primal_adjoint(verdict, eta, mu):
    res = pipeline(eta, mu)
    m, adj = res.mode, res.adjoint
    rel = abs(m.lambda0 - adj.lambda0) / m.lambda0
    resid = max(max(m.residuals), max(adj.residuals))
    pos = m.interior_positive() + adj.interior_positive()
    ok = rel < 1e-8 and resid < 1e-8 and all(pos)
    verdict("C2", f"primal/adjoint ({eta}, {mu})", ok,
            f"rel={rel:.1e} residual={resid:.1e} positivity={pos}")


# --- 3 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("eta,mu", CASES, ids=case_ids)
def test_c3_pes(verdict, eta, mu):
    res = pipeline(eta, mu)
    g, ops, p = res.mode.grid, res.ops, res.params
    # rates carry the viscous time unit; multiplying by gap^2 makes them O(1) numbers
    beta = ls.growth_rate(p, res.critical.a_c, res.mode.lambda0, g, ops) * (1 - eta) ** 2
    pes = res.pes
    ok = abs(beta) < 1e-6 and pes.slope_fd > 0 and pes.pairing_value > 0
    verdict("C3", f"exchange of stabilities ({eta}, {mu})", ok,
            f"beta1*gap^2={beta:.1e} slope={pes.slope_fd:.4g} pairing={pes.pairing_value:.4g}")


# --- 4 ---------------------------------------------------------------------------------

def test_c4_trilinear_antisymmetry(verdict):
    g = build_grid(0.8, 48)
    ops = DiffOperators(g)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        a = rng.uniform(0.5, 6.0)
        u, v, w = (random_field(rng, a, g, ops) for _ in range(3))
        s = af.trilinear(u, v, w, ops) + af.trilinear(u, w, v, ops)
        worst = max(worst, abs(s) / (u.norm() * v.norm() * w.norm()))
    verdict("C4", "antisymmetry over 20 random triples", worst < 1e-8, f"worst={worst:.1e}")


# --- 5 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("eta,mu", CASES, ids=case_ids)
def test_c5_solvability(verdict, eta, mu):
    res = pipeline(eta, mu)
    rel = cm.solvability_check(res.mode, res.adjoint, res.mode.grid, res.ops).relative
    verdict("C5", f"solvability ({eta}, {mu})", max(rel) < 1e-8,
            f"cos={rel[0]:.1e} tilde={rel[1]:.1e}")


# --- 6 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("eta,mu", CASES, ids=case_ids)
def test_c6_R_paths_and_gauge(verdict, eta, mu):
    res = pipeline(eta, mu)
    coef = res.coefficient
    c = 1.7
    _, scaled = cm.transition_coefficient(res.params, res.mode.scaled(c), res.adjoint, res.ops)
    homog = abs(scaled.R - c * c * coef.R) / abs(c * c * coef.R)
    ok = coef.rel_diff < 1e-6 and homog < 1e-10
    verdict("C6", f"R dual path and c^2 law ({eta}, {mu})", ok,
            f"R={coef.R:.6g} path_diff={coef.rel_diff:.1e} homogeneity={homog:.1e}")


# --- 7 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("label,get", [
    ("(0.98, 0.95)", lambda: pipeline(0.98, 0.95)),
    *[(f"narrow-gap path mu={m}", (lambda m=m: path_pipeline(m))) for m in PATH_MUS],
])
def test_c7_sign_prediction(verdict, label, get):
    res = get()
    ok = res.coefficient.R < 0 and res.report.type == "TypeI_continuous"
    verdict("C7", f"Type-I prediction {label}", ok,
            f"eta={res.params.eta:.6g} R={res.coefficient.R:.6g} type={res.report.type}")


# --- 8 ---------------------------------------------------------------------------------

def test_c8_normal_form(verdict):
    beta, R = 0.5, -2.0
    closed = 0.0
    for r0 in (0.05, 0.3, 1.5):
        traj = tr.integrate_reduced(r0, 0.0, beta, R, 8.0, 1e-3)
        closed = max(closed, float(np.max(np.abs(traj.radius - tr.closed_form_radius(r0, beta, R, traj.t)))))
    relax = tr.integrate_reduced(0.01, 0.02, 0.04, -1.0, 500.0, 0.05)
    law = abs(relax.radius[-1] - tr.bifurcated_amplitude(0.04, -1.0))
    th = 0.83
    cs, sn = math.cos(th), math.sin(th)
    a = tr.integrate_reduced(0.4, 0.0, beta, R, 3.0, 0.01)
    b = tr.integrate_reduced(0.4 * cs, 0.4 * sn, beta, R, 3.0, 0.01)
    rot = max(np.max(np.abs(b.x - (cs * a.x - sn * a.y))), np.max(np.abs(b.y - (sn * a.x + cs * a.y))))
    ok = closed < 1e-6 and law < 1e-6 and rot < 1e-10
    verdict("C8", "reduced integrator", ok, f"closed_form={closed:.1e} amplitude_law={law:.1e} rotation={rot:.1e}")


# --- 9 ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def dns_setup():
    p = make_params(0.9, 0.0)
    g = build_grid(0.9, 64)
    ops = DiffOperators(g)
    return p, g, ops, ls.find_critical(p, g, ops)


@pytest.mark.slow
@pytest.mark.parametrize("ratio", [0.9, 0.95, 1.05, 1.1])
def test_c9_linear_rates(verdict, dns_setup, ratio):
    p, g, ops, crit = dns_setup
    T = ratio * crit.T_c
    t0 = time.perf_counter()
    cfg = dns.DNSConfig(make_params(0.9, 0.0, T), L=crit.L_c, nr=64, nz=64, t_end=0.02,
                        init_eps=1e-8, sample_every=5)
    res = dns.run(cfg)
    elapsed = time.perf_counter() - t0
    got = dns.measure_rate(res.series)
    ref = ls.growth_rate(p, crit.a_c, math.sqrt(T), g, ops)
    rel = abs(got - ref) / abs(ref)
    verdict("C9", f"linear rate at T/T_c={ratio}", rel < 0.05 and elapsed < 300,
            f"dns={got:.5g} eigen={ref:.5g} rel={rel:.1e} time={elapsed:.1f}s")


@pytest.mark.slow
def test_c9_saturation_exponent(verdict):
    eta, mu = 0.98, 0.95
    res = pipeline(eta, mu)
    crit, R = res.critical, res.coefficient.R
    g, ops = res.mode.grid, res.ops
    runs, sat, lines = [], [], []
    for ratio in (1.02, 1.05, 1.1, 1.2):
        T = ratio * crit.T_c
        beta = ls.growth_rate(res.params, crit.a_c, math.sqrt(T), g, ops)
        pred = tr.bifurcated_amplitude(beta, R)
        cfg = dns.DNSConfig(make_params(eta, mu, T), L=crit.L_c, nr=64, nz=64, t_end=25.0 / beta,
                            init_eps=1e-2 * pred, sample_every=50, adaptive=True)
        out = dns.run(cfg, projection=(res.mode, res.adjoint))
        amp = float(out.series.amplitude[-1])
        runs.append((T, amp))
        sat.append(dns.is_saturated(out.series))
        lines.append(f"{ratio}:{amp / pred - 1:+.2%}")
    expo = dns.measure_exponent(runs, crit.T_c, saturated=sat)
    ok = abs(expo - 0.5) <= 0.1 and all(sat)
    verdict("C9", "saturated amplitude exponent", ok,
            f"exponent={expo:.4f} saturated={sat} amplitude_vs_prediction={' '.join(lines)}")


@pytest.mark.slow
def test_c9_flux_invariance(verdict, dns_setup):
    p, g, ops, crit = dns_setup
    T = 1.1 * crit.T_c
    dt = dns.default_dt(0.9)
    cfg = dns.DNSConfig(make_params(0.9, 0.0, T), L=crit.L_c, nr=64, nz=64, t_end=10_000 * dt,
                        init_eps=1e-1, sample_every=100, adaptive=True)
    out = dns.run(cfg)
    ser = out.series
    worst = float(np.max(np.abs(ser.flux) / ser.norm))
    verdict("C9", "axial flux stays zero over 1e4 steps", worst < 1e-8,
            f"max|flux|/|u|={worst:.1e} samples={len(ser.t)} final amplitude={ser.amplitude[-1]:.3g} "
            f"dt_final={out.final.metadata['dt_final']:.2e}")


# --- 10 --------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def topo():
    p = make_params(0.9, 0.0)
    g = build_grid(0.9, 128)
    ops = DiffOperators(g)
    crit = ls.find_critical(p, g, ops)
    mode = ls.solve_marginal(p, crit.a_c, g, ops)
    return g, ops, mode, fl.reconstruct_eigenfield(mode, nz=64, ops=ops)


def test_c10_eigenfield_topology(verdict, topo):
    g, ops, mode, snap = topo
    d = fl.diagnose_topology(snap, mode, ops=ops)
    ok = d.pattern_class == "fig_9_13" and d.vortex_cells_axial == 2 and d.vortex_cells_radial == 1
    verdict("C10", "eigenfield pattern", ok,
            f"class={d.pattern_class} axial={d.vortex_cells_axial} radial={d.vortex_cells_radial}")


@pytest.mark.parametrize("alpha,cls", [(1e-2, "fig_9_12_a"), (-1e-2, "fig_9_12_b")])
def test_c10_axial_mode_flip(verdict, topo, alpha, cls):
    g, ops, mode, snap = topo
    _, modes = fl.ek_basis(g, ops, 1)
    mixed = fl.FieldSnapshot(snap.r_nodes, snap.z_nodes, snap.u_z + alpha * modes[0][:, None],
                             snap.u_r, snap.u_theta, snap.metadata)
    d = fl.diagnose_topology(mixed, mode, ops=ops)
    verdict("C10", f"alpha1={alpha:+g} flips the class", d.pattern_class == cls,
            f"class={d.pattern_class} flux={d.cross_channel_flux:.3e}")


def test_c10_ek_basis(verdict, topo):
    import scipy.linalg

    g, ops, _, _ = topo
    rho, modes = fl.ek_basis(g, ops, 4)
    gram = np.array([[weighted_inner(u, v, g) for v in modes] for u in modes])
    ortho = float(np.max(np.abs(gram - np.eye(4))))
    t = 1e-4
    prop = scipy.linalg.expm(t * ops.DstarD[1:-1, 1:-1])
    decay = max(float(np.max(np.abs(prop @ e[1:-1] - math.exp(-r * t) * e[1:-1]))) for r, e in zip(rho, modes))
    verdict("C10", "e_k orthonormality and decay", ortho < 1e-6 and decay < 1e-6,
            f"orthonormality={ortho:.1e} decay={decay:.1e}")


# --- 11 --------------------------------------------------------------------------------

def test_c11_byte_identical_reports(verdict, tmp_path, capsys):
    blobs = {}
    for cmd in (["classify", "--nr", "48"], ["classify", "--eta", "0.98", "--mu", "0.95", "--nr", "48"],
                ["critical", "--narrowgap", "full", "--mu", "0.5", "--nr", "48"]):
        outs = []
        for i in range(2):
            f = tmp_path / f"{cmd[0]}{len(blobs)}_{i}.json"
            assert cli.main([*cmd, "--out", str(f)]) == 0
            outs.append(f.read_bytes())
        blobs[" ".join(cmd)] = outs[0] == outs[1]
    capsys.readouterr()
    verdict("C11", "repeated reports byte-identical", all(blobs.values()), str(blobs))


@pytest.mark.parametrize("label,coarse,fine", [
    *[(f"({e}, {m})", (lambda e=e, m=m: pipeline(e, m)), (lambda e=e, m=m: pipeline(e, m, 128)))
      for e, m in CASES],
    *[(f"narrow-gap path mu={m}", (lambda m=m: path_pipeline(m)), (lambda m=m: path_pipeline(m, 128)))
      for m in PATH_MUS],
])
def test_c11_refinement_stability(verdict, label, coarse, fine):
    a, b = coarse(), fine()
    rel = abs(a.coefficient.R - b.coefficient.R) / abs(b.coefficient.R)
    ok = a.report.type == b.report.type
    verdict("C11", f"classification n=64 vs 128 {label}", ok,
            f"{a.report.type} / {b.report.type} R rel change={rel:.1e}")
