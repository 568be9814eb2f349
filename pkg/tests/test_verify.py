import pytest

from kincbf import verify
from kincbf.filters import inject_fault


def test_small_suites_pass():
    checks = verify.run_suite("all", seed=3, scale=0.02)
    assert len(checks) == sum(len(v) for v in verify.CHECKS.values())
    assert all(c.passed for c in checks), [c.line() for c in checks if not c.passed]
    assert all(c.line().startswith("PASS ") for c in checks)


def test_fault_is_caught_by_name():
    with inject_fault("psi_sign"):
        checks = verify.run_suite("filters", seed=0, scale=0.02)
    failed = {c.name for c in checks if not c.passed}
    assert {"filters.oracle_explicit_qp", "filters.oracle_torque",
            "filters.oracle_underactuated"} <= failed
    # the kinematic tracking loop never calls the QP kernel
    assert "filters.tracking_envelope" not in failed


def test_unknown_suite():
    with pytest.raises(ValueError, match="unknown suite"):
        verify.run_suite("physics")


def test_empty_check_does_not_pass():
    assert not verify.Check("x", 0, 0, 0.0, 1.0).passed
