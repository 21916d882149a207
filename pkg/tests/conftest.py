import functools

import pytest

from taylor_transit import transition as tr
from taylor_transit.params import make_params, narrowgap_path_eta

# (eta, mu) cases used across the suite
CASES = [(0.9, 0.0), (0.98, 0.95), (0.7, 0.3)]
PATH_MUS = [0.9, 0.99]


@functools.lru_cache(maxsize=None)
def pipeline(eta: float, mu: float, n: int = 64):
    return tr.analyze(make_params(eta, mu), n)


@functools.lru_cache(maxsize=None)
def path_pipeline(mu: float, n: int = 64):
    return pipeline(narrowgap_path_eta(mu), mu, n)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line (visible even under capture) and assert."""

    def _verdict(criterion: str, label: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[{criterion}] {'PASS' if ok else 'FAIL'}: {label} {detail}".rstrip())
        assert ok, f"{label} {detail}"

    return _verdict
