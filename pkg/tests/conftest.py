import logging as std_logging

import pytest

from pointnls.propagator import GaussianTerm, GreenTerm, InitialDatum, RegularPart
from pointnls.states import ModelParams, RadialQuadrature, matched_gaussian_datum


@pytest.fixture(autouse=True)
def _preserve_root_logger():
    """Snapshot and restore root-logger state around each test."""
    root = std_logging.getLogger()
    original_handlers = list(root.handlers)
    original_level = root.level
    try:
        yield
    finally:
        for h in list(root.handlers):
            root.removeHandler(h)
            if h not in original_handlers:
                h.close()
        for h in original_handlers:
            root.addHandler(h)
        root.setLevel(original_level)
        std_logging.captureWarnings(False)


@pytest.fixture(scope="session")
def focusing() -> ModelParams:
    return ModelParams(sigma=1.0, beta=1.0)


@pytest.fixture(scope="session")
def defocusing() -> ModelParams:
    return ModelParams(sigma=1.0, beta=-1.0)


@pytest.fixture(scope="session")
def static_quad() -> RadialQuadrature:
    return RadialQuadrature.build()


@pytest.fixture(scope="session")
def gaussian_datum() -> InitialDatum:
    """Unit Gaussian, no charge."""
    return InitialDatum(regular=RegularPart(gaussians=(GaussianTerm(amplitude=1.0, width=1.0),)))


@pytest.fixture(scope="session")
def green_pair_datum() -> InitialDatum:
    """Gaussian plus a Green pair with vanishing coefficient sum, and a charge."""
    regular = RegularPart(
        gaussians=(GaussianTerm(amplitude=0.5 + 0.2j, width=0.8),),
        green_terms=(GreenTerm(coefficient=0.3, pole=2.0), GreenTerm(coefficient=-0.3, pole=0.5)),
    )
    return InitialDatum(regular=regular, q0=0.4 - 0.1j)


@pytest.fixture(scope="session")
def defocusing_matched(defocusing) -> InitialDatum:
    return matched_gaussian_datum(1.0, 1.0, defocusing)


@pytest.fixture(scope="session")
def focusing_matched(focusing) -> InitialDatum:
    """Matched focusing datum that stays bounded on [0, 1]."""
    return matched_gaussian_datum(0.3, 1.0, focusing)
