import math

import pytest

import oracles


@pytest.mark.parametrize("name", sorted(oracles.FROZEN))
def test_frozen_values_match_independent_derivation(name):
    derived = oracles.derive_all()[name]
    frozen = oracles.FROZEN[name]
    if isinstance(frozen, tuple):
        assert len(derived) == len(frozen)
        for d, f in zip(derived, frozen):
            assert math.isclose(d, f, rel_tol=0, abs_tol=1e-12)
    else:
        assert math.isclose(derived, frozen, rel_tol=0, abs_tol=1e-12)
