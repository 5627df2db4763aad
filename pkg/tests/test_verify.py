import pytest

from flora import verify


FAST = ["theorem1", "fa_bound", "momentum_linearity", "momentum_transfer", "accum_identity", "high_rank", "gradcheck", "memory"]


@pytest.mark.parametrize("name", FAST)
def test_check_passes_at_default_seed(name):
    res = verify.run_suite([name])[0]
    assert res.ok, res.detail


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_fast_checks_hold_across_seeds(seed):
    for res in verify.run_suite(FAST, seed=seed):
        assert res.ok, (res.name, res.detail)


def test_fault_injection_is_caught():
    res = verify.run_suite(["momentum_transfer"], fault="momentum-transfer")[0]
    assert not res.ok


def test_unknown_check():
    with pytest.raises(KeyError):
        verify.run_suite(["nope"])


def test_memory_check_detail():
    res = verify.check_memory()
    assert "96x" in res.detail
