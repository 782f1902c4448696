import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from locsparse.admm import SolverParams
from locsparse.experiments import (Region, SweepTable, default_dictionary, default_kernel_size,
                                   default_operator, default_phantom, make_phantom,
                                   support_error, sweep_v)
from locsparse.model import ContractError, norm_l0_inf
from oracles import support_error_loop


def test_empty_and_full_frame():
    ph = make_phantom(4, 5, [])
    assert not ph.U_true.values.any() and np.all(ph.labels == -1)
    ph = make_phantom(4, 5, [Region("rectangle", 3, 0.7, corner=(0, 0), size=(4, 5))])
    assert np.all(ph.U_true.values[:, 3] == 0.7)
    assert norm_l0_inf(ph.U_true) == 1


def test_region_errors():
    with pytest.raises(ContractError):
        Region("triangle", 0, 1.0)
    with pytest.raises(ContractError):
        Region("disk", 0, 0.0)
    with pytest.raises(ContractError):
        make_phantom(8, 8, [Region("disk", 0, 1.0, center=(4, 4), radius=6)])
    with pytest.raises(ContractError):
        make_phantom(8, 8, [Region("rectangle", 0, 1.0, corner=(6, 0), size=(4, 2))])
    with pytest.raises(ContractError):
        make_phantom(8, 8, [Region("rectangle", 9, 1.0, corner=(0, 0), size=(2, 2))])
    overlap = [Region("rectangle", 0, 1.0, corner=(0, 0), size=(4, 4)),
               Region("rectangle", 1, 1.0, corner=(2, 2), size=(4, 4))]
    with pytest.raises(ContractError):
        make_phantom(8, 8, overlap)


def test_default_phantom_layout():
    ph = make_phantom(200, 200, default_phantom(200, 200).regions)
    assert norm_l0_inf(ph.U_true) == 1
    assert set(np.unique(ph.labels)) == {-1, 1, 6}
    small = default_phantom(64, 64)
    labels = small.labels.reshape(64, 64)
    assert labels[32, 32] == 1 and labels[0, 0] == -1
    assert labels[32, 32 + 20] == 6


def test_support_error_examples():
    ph = make_phantom(200, 200, default_phantom(200, 200).regions)
    U = ph.U_true.values.copy()
    assert support_error(U, ph) == {"percent": 0.0, "weighted_percent": 0.0, "wrong_count": 0}
    i = int(np.flatnonzero(ph.labels == 6)[0])
    U[i] = 0.0
    U[i, 4] = 0.2
    err = support_error(U, ph)
    assert err["wrong_count"] == 1
    assert err["weighted_percent"] == pytest.approx(0.005)
    with pytest.raises(ContractError):
        support_error(U[:10], ph)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_support_error_matches_loop(seed):
    rng = np.random.default_rng(seed)
    ph = make_phantom(6, 6, [Region("rectangle", 2, 1.0, corner=(0, 0), size=(3, 6)),
                             Region("disk", 5, 0.5, center=(4, 3), radius=1.2)])
    U = np.abs(rng.normal(size=(36, 8))) * (rng.uniform(size=(36, 1)) < 0.6)
    err = support_error(U, ph, 1e-3)
    pct, wpct = support_error_loop(U, ph.labels, 1e-3)
    assert err["percent"] == pytest.approx(pct)
    assert err["weighted_percent"] == pytest.approx(wpct)
    assert 0 <= err["percent"] <= 100
    assert err["weighted_percent"] >= err["percent"]


def test_default_operator_and_dictionary():
    assert default_kernel_size(200) == 16 and default_kernel_size(64) == 5
    assert default_operator(64, 64).kernel.shape == (5, 5)
    B = default_dictionary()
    assert B.shape == (32, 8)
    np.testing.assert_allclose(np.linalg.norm(B.values, axis=0), 1.0, atol=1e-12)


def test_sweep_small_and_deterministic():
    ph = default_phantom(16, 16)
    A, B = default_operator(16, 16), default_dictionary()
    p = SolverParams(v_cap=1.0, max_iter=400)
    t1 = sweep_v(A, B, ph, 0.01, 3, [1e-2, 1e-3], p)
    t2 = sweep_v(A, B, ph, 0.01, 3, [1e-2, 1e-3], p)
    np.testing.assert_array_equal(t1.as_array(), t2.as_array())
    assert [r["v_cap"] for r in t1.rows] == [1e-2, 1e-3]
    assert SweepTable.HEADER[:2] == ("v_cap", "wrong_pixel_percent")
    with pytest.raises(ContractError):
        sweep_v(A, B, ph, 0.0, 0, [1e-3, 1e-2], p)
    with pytest.raises(ContractError):
        sweep_v(A, B, ph, 0.0, 0, [], p)
