import math
from dataclasses import replace

import numpy as np
import pytest

from taylor_transit import dns
from taylor_transit import fields as fl
from taylor_transit import linstab as ls
from taylor_transit.params import make_params
from taylor_transit.radial_ops import DiffOperators, build_grid

ETA = 0.9


@pytest.fixture(scope="module")
def crit():
    g = build_grid(ETA, 32)
    ops = DiffOperators(g)
    return g, ops, ls.find_critical(make_params(ETA, 0.0), g, ops)


def small_cfg(T, crit, **kw):
    base = dict(L=crit[2].L_c, nr=32, nz=16, t_end=0.01, sample_every=5)
    base.update(kw)
    return dns.DNSConfig(make_params(ETA, 0.0, T), **base)


def test_config_validation():
    p = make_params(ETA, 0.0, 1e3)
    with pytest.raises(ValueError):
        dns.DNSConfig(p, nz=15)
    with pytest.raises(ValueError):
        dns.DNSConfig(make_params(ETA, 0.0))
    with pytest.raises(ValueError):
        dns.DNSConfig(p, init="warm")
    assert dns.DNSConfig(p).resolved_dt() == pytest.approx(5e-5)
    assert dns.DNSConfig(p, dt=1e-3).as_dict()["dt"] == 1e-3


def test_physical_roundtrip(crit):
    solver = dns.AxisymmetricSolver(make_params(ETA, 0.0, 1e3), 32, 16, crit[2].L_c, 1e-4)
    s0 = dns._seed(solver, small_cfg(1e3, crit, init="random"), None)
    s0.W = 1e-3 * (1 - ((solver.r - 0.95) / 0.05) ** 2)
    uz, ur, ut, _ = solver.physical(s0)
    s1 = solver.from_physical(uz, ur, ut)
    np.testing.assert_allclose(s1.psi[:, 1:], s0.psi[:, 1:], atol=1e-14)
    np.testing.assert_allclose(s1.v, s0.v, atol=1e-14)
    np.testing.assert_allclose(s1.W, s0.W, atol=1e-16)


def test_random_seed_is_divergence_free(crit):
    g, ops, c = crit
    res = dns.run(small_cfg(1e3, crit, init="random", t_end=1e-4, init_eps=1e-3))
    assert fl.snapshot_divergence(res.final, g, ops) < 1e-8 * res.final.max_abs() * g.size ** 2


def test_energy_decays_without_rotation(crit):
    res = dns.run(small_cfg(0.0, crit, init="random", t_end=5e-3, sample_every=2, seed=4))
    e = res.series.energy
    assert np.all(np.diff(e) < 0)
    assert e[-1] < 0.5 * e[0]


@pytest.mark.parametrize("factor", [0.9, 1.1])
def test_linear_rate_matches_eigenproblem(crit, factor):
    g, ops, c = crit
    T = factor * c.lambda_c ** 2
    res = dns.run(small_cfg(T, crit, t_end=0.02, init_eps=1e-8))
    ref = ls.growth_rate(make_params(ETA, 0.0), c.a_c, math.sqrt(T), g, ops)
    assert dns.measure_rate(res.series) == pytest.approx(ref, rel=1e-3)


def test_flux_stays_zero_for_symmetric_seed(crit):
    c = crit[2]
    res = dns.run(small_cfg(1.1 * c.lambda_c ** 2, crit, t_end=0.005, init_eps=1e-1))
    ser = res.series
    assert np.all(np.abs(ser.flux) <= 1e-12 * ser.norm)


def test_cfl_abort_dumps_state(crit, tmp_path):
    c = crit[2]
    dump = tmp_path / "dump.snap"
    cfg = small_cfg(1.1 * c.lambda_c ** 2, crit, init_eps=1.0, dt=1e-3, cfl_max=0.05, dump_path=str(dump))
    with pytest.raises(dns.DNSError, match="CFL"):
        dns.run(cfg)
    snap = fl.read_snapshot(dump)
    assert snap.metadata["kind"] == "dns-dump" and snap.max_abs() > 0


def test_adaptive_step_survives(crit):
    c = crit[2]
    cfg = small_cfg(1.1 * c.lambda_c ** 2, crit, init_eps=1.0, dt=1e-3, cfl_max=0.05,
                    adaptive=True, t_end=4e-3)
    res = dns.run(cfg)
    assert res.final.metadata["dt_final"] < 1e-3
    assert res.final.metadata["t"] == pytest.approx(4e-3, abs=1e-3)


def test_series_csv(crit, tmp_path):
    res = dns.run(small_cfg(1e3, crit, t_end=5e-4))
    dns.write_series_csv(tmp_path / "s.csv", res.series)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "t,energy,A,Atilde,flux"
    assert len(lines) == 1 + len(res.series.t)


# --- analysis helpers ------------------------------------------------------------------

def test_exponent_of_synthetic_sqrt_law():
    Tc = 1000.0
    Ts = Tc * np.array([1.02, 1.05, 1.1, 1.2])
    runs = [(T, 3.7 * math.sqrt(T - Tc)) for T in Ts]
    assert dns.measure_exponent(runs, Tc) == pytest.approx(0.5, abs=1e-12)


def test_exponent_noise_tolerance():
    Tc = 1000.0
    Ts = Tc * np.array([1.02, 1.05, 1.1, 1.2])
    rng = np.random.default_rng(11)
    for _ in range(20):
        runs = [(T, math.sqrt(T - Tc) * (1 + 0.01 * rng.uniform(-1, 1))) for T in Ts]
        assert abs(dns.measure_exponent(runs, Tc) - 0.5) < 0.02


def test_exponent_skips_unsaturated_and_subcritical():
    runs = [(900.0, 1.0), (1010.0, 1.0), (1040.0, 2.0), (1090.0, 3.0), (1160.0, 4.0)]
    with pytest.raises(dns.DNSError):
        dns.measure_exponent(runs, 1000.0, saturated=[True, True, False, False, True])
    assert dns.measure_exponent(runs[1:], 1000.0) == pytest.approx(0.5, abs=1e-12)


def test_saturation_detector():
    t = np.linspace(0, 10, 200)
    flat = dns.DNSTimeSeries(t, t, 1 - np.exp(-3 * t), 0 * t, 0 * t, t, 0.05)
    growing = dns.DNSTimeSeries(t, t, np.exp(0.1 * t), 0 * t, 0 * t, t, 0.05)
    assert dns.is_saturated(flat) and not dns.is_saturated(growing)


class FakeBranch:
    """Subcritical toy: a finite-amplitude branch survives down to Tstar < Tc."""

    def __init__(self, Tc=1000.0, Tstar=900.0):
        self.Tc, self.Tstar, self.calls = Tc, Tstar, 0

    def __call__(self, cfg, state):
        self.calls += 1
        T = cfg.params.taylor
        if state is None:
            amp = 1.0 if T > self.Tc else 0.1 * cfg.init_eps
        else:
            amp = 1.0 if T > self.Tstar else 0.0
        return amp, ("alive" if amp > 0.5 else None)


def bracket_template():
    return dns.DNSConfig(make_params(ETA, 0.0, 1.0), L=1.0, init_eps=1e-3, t_end=1.0)


def test_bracket_contains_Tstar_and_detects_bistability():
    fake = FakeBranch(Tstar=910.0)
    br = dns.bracket_Tstar(bracket_template(), 850.0, 1050.0, n_levels=9, start_state="alive", runner=fake)
    assert br.low < fake.Tstar <= br.high
    assert br.bistable is True
    assert br.levels[0][0] == 1050.0


def test_bracket_width_halves_with_step():
    widths = []
    for n in (5, 9, 17):
        br = dns.bracket_Tstar(bracket_template(), 850.0, 1050.0, n_levels=n, start_state="alive",
                               runner=FakeBranch(Tstar=901.0), check_bistability=False)
        widths.append(br.high - br.low)
        assert br.bistable is None
    assert widths[1] == pytest.approx(widths[0] / 2)
    assert widths[2] == pytest.approx(widths[1] / 2)


def test_bracket_errors():
    with pytest.raises(dns.DNSError, match="below scan range"):
        dns.bracket_Tstar(bracket_template(), 950.0, 1050.0, start_state="alive", runner=FakeBranch())
    with pytest.raises(dns.DNSError, match="not a saturated"):
        dns.bracket_Tstar(bracket_template(), 850.0, 890.0, start_state="alive", runner=FakeBranch())
    with pytest.raises(ValueError):
        dns.bracket_Tstar(bracket_template(), 1050.0, 850.0, runner=FakeBranch())
