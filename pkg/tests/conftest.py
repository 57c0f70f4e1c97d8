import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_TITLES = {
    1: "permutation invariance (100 reactions x 10 perturbations, std == 0.0)",
    2: "harness sensitivity (reference predictor std > 0 for >= 95%)",
    3: "symmetric-difference oracle equivalence (50 reactions)",
    4: "cap enforcement on adversarial reactions",
    5: "SE(3) invariance (20 rigid motions, 32/64-bit)",
    6: "gradient check (100 parameters, max rel. error < 1e-4)",
    7: "overfit sanity (train R2 >= 0.95 within 500 epochs)",
    8: "DRFP contract (1024 bits, zero for identical sides, order invariant)",
    9: "pseudo-label pipeline (k-means monotone/deterministic, pretrain loss -30%)",
    10: "ablation switch fidelity",
    11: "SMILES canonicalization (500 molecules x 100 shuffles, round trip)",
}
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(n: int, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[n] = (bool(ok), detail)
        assert ok, f"criterion {n} failed: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        if n in ACCEPTANCE_RESULTS:
            ok, detail = ACCEPTANCE_RESULTS[n]
            status = "PASS" if ok else "FAIL"
        else:
            status, detail = "----", "not run in this session, or errored before its check"
        terminalreporter.write_line(f"[{status}] {n:2d}. {title} :: {detail}")
