from __future__ import annotations

import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

# property suites run 10^3 examples each with a fixed derandomized seed
settings.register_profile(
    "artifact",
    max_examples=1000,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("artifact")


_SUITE_CACHE: dict = {}


def suite_outcomes() -> dict:
    """Run every property suite once per session; the property tests and the acceptance run share the result."""
    if not _SUITE_CACHE:
        import property_suites

        for suite in property_suites.SUITES:
            _SUITE_CACHE[suite.__name__] = suite()
    return _SUITE_CACHE
