"""Reduced-scale runs of the self-test suites (full scale runs in the
acceptance tests)."""

from verblab.checks import (
    check_determinism,
    check_gradients,
    check_kernels,
    check_oracle,
    check_reward_shaping,
)


def test_gradient_suite_reduced():
    result = check_gradients(instances_per_policy=2)
    assert result.passed, result.detail
    assert result.name == "gradient_finite_diff"
    assert "max rel err" in result.detail


def test_kernel_suite():
    result = check_kernels()
    assert result.passed, result.detail
    assert "REINFORCE cosine" in result.detail


def test_reward_shaping_suite():
    result = check_reward_shaping()
    assert result.passed, result.detail
    assert "blend exact" in result.detail


def test_oracle_suite_reduced():
    result = check_oracle(n_vectors=300, n_contexts=100)
    assert result.passed, result.detail
    assert "0 mismatches" in result.detail


def test_determinism_suite():
    result = check_determinism()
    assert result.passed, result.detail


def test_gradient_suite_detects_a_broken_threshold():
    # a negative threshold is unsatisfiable, so the suite must report failure
    result = check_gradients(instances_per_policy=1, threshold=-1.0)
    assert not result.passed
