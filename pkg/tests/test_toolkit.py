import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdsekit.errors import FieldOutOfToolkitRange, FingerprintMismatch, FormatError, InvalidParameter
from tdsekit.linalg import unitarity_residual, unitary_exp, herm_eig
from tdsekit.model import build_linear_rotor, build_two_level
from tdsekit.toolkit import (
    AmplitudeGrid,
    bracket,
    build_correctors,
    build_quantified_pairs,
    build_toolkit,
    load_toolkit,
    nearest,
    save_toolkit,
)

UNIT = AmplitudeGrid(0.0, 1.0, 4)


def test_grid_values():
    g = AmplitudeGrid(-1.0, 1.0, 8)
    v = g.values()
    assert len(v) == 9 and v[0] == -1.0 and v[-1] == 1.0 and g.delta == 0.25
    with pytest.raises(InvalidParameter):
        AmplitudeGrid(1.0, 1.0, 4)
    with pytest.raises(InvalidParameter):
        AmplitudeGrid(0.0, 1.0, 0)


def test_from_spacing():
    assert AmplitudeGrid.from_spacing(-1.0, 1.0, 0.25).m == 8
    g = AmplitudeGrid.from_spacing(0.0, 1.0, 0.3)
    assert g.m == 4 and g.eps_max == 1.0 and g.delta == pytest.approx(0.3)


def test_nearest_examples():
    assert nearest(UNIT, 0.6) == 2
    assert nearest(UNIT, 0.625) == 2
    assert nearest(UNIT, 0.75) == 3
    assert nearest(UNIT, 0.0) == 0 and nearest(UNIT, 1.0) == 4
    assert nearest(UNIT, 1.1) == 4
    with pytest.raises(FieldOutOfToolkitRange):
        nearest(UNIT, 1.2)
    with pytest.raises(FieldOutOfToolkitRange):
        nearest(UNIT, -0.2)


def test_bracket_examples():
    level, a, b = bracket(UNIT, 0.6)
    assert level == 2 and a == pytest.approx(0.6, abs=1e-15) and b == pytest.approx(0.4, abs=1e-15)
    assert bracket(UNIT, 0.5) == (2, 1.0, 0.0)
    assert bracket(UNIT, 1.0) == (3, 0.0, 1.0)
    with pytest.raises(FieldOutOfToolkitRange):
        bracket(UNIT, 1.01)


@settings(max_examples=200, deadline=None)
@given(lo=st.floats(-10, 0), width=st.floats(0.01, 20), m=st.integers(1, 300), u=st.floats(0, 1))
def test_nearest_and_bracket_properties(lo, width, m, u):
    g = AmplitudeGrid(lo, lo + width, m)
    eps = min(g.eps_min + u * width, g.eps_max)
    k = g.nearest(eps)
    assert abs(eps - g.value(k)) <= g.delta / 2 * (1 + 1e-12)
    level, a, b = g.bracket(eps)
    assert 0 <= level < m and 0 <= a <= 1 and 0 <= b <= 1 and a + b == pytest.approx(1, abs=1e-15)
    recon = a * g.value(level) + b * g.value(level + 1)
    assert abs(recon - eps) <= 1e-15 * max(abs(eps), abs(g.eps_min), abs(g.eps_max)) * 4


def test_two_level_toolkit():
    s = build_two_level()
    tk = build_toolkit(s, AmplitudeGrid(-1.0, 1.0, 2), 0.1)
    assert tk.m == 2 and len(tk.built_levels) == 3
    free = unitary_exp(herm_eig(s.h0), 0.1)
    assert np.linalg.norm(tk.propagator(1) - free) < 1e-15
    tk1 = build_toolkit(s, AmplitudeGrid(-1.0, 1.0, 1), 0.1)
    assert list(tk1.built_levels) == [0, 1]


def test_rotor_toolkit_unitary_and_reconstructs():
    s = build_linear_rotor(4, 1.0, 1.0)
    tk = build_toolkit(s, AmplitudeGrid(-5.0, 5.0, 16), 0.05)
    for k in range(17):
        assert unitarity_residual(tk.propagator(k)) < 1e-12
        h = s.hamiltonian(tk.grid.value(k))
        assert np.linalg.norm(tk.eig(k).reconstruct() - h) < 1e-11 * np.linalg.norm(h)


def test_parallel_build_is_bit_identical():
    s = build_linear_rotor(5)
    g = AmplitudeGrid(-3.0, 3.0, 12)
    a = build_toolkit(s, g, 0.02, jobs=1)
    b = build_toolkit(s, g, 0.02, jobs=4)
    c = build_toolkit(s, g, 0.02, lazy=True)
    for k in range(13):
        assert np.array_equal(a.propagator(k), b.propagator(k))
        assert np.array_equal(a.propagator(k), c.propagator(k))


def test_power_and_transfer():
    s = build_linear_rotor(3)
    tk = build_toolkit(s, AmplitudeGrid(-2.0, 2.0, 4), 0.1)
    assert np.linalg.norm(tk.power(2, 1.0) - tk.propagator(2)) < 1e-15
    assert np.linalg.norm(tk.power(2, 0.5) @ tk.power(2, 0.5) - tk.propagator(2)) < 1e-14
    w = tk.transfer(1)
    assert np.linalg.norm(tk.eig(2).eigenvectors @ w - tk.eig(1).eigenvectors) < 1e-14


def test_correctors():
    zero_mu = build_two_level(1.0, 0.0)
    c = build_correctors(zero_mu, 0.1)
    assert not np.any(c.omega_gen) and not np.any(c.theta_gen)
    assert np.allclose(c.omega_power(0.7), np.eye(2), atol=1e-15)
    assert np.allclose(c.theta_power(-3.0), np.eye(2), atol=1e-15)
    c = build_correctors(build_two_level(1.0, 1.0), 0.1)
    assert np.allclose(c.omega_gen, (1e-3 / 12) * np.array([[0, -1], [1, 0]]), rtol=1e-14, atol=0)
    for g in (c.omega_gen, c.theta_gen):
        assert np.linalg.norm(g + g.conj().T) <= 1e-12 * np.linalg.norm(g)
    assert np.linalg.norm(c.omega_power(0.0) - np.eye(2)) < 1e-15
    with pytest.raises(InvalidParameter):
        build_correctors(build_two_level(), 0.0)


def test_corrector_power_is_scaled_generator_exponential():
    s = build_linear_rotor(3)
    c = build_correctors(s, 0.3)
    a = 2.5
    taylor = np.eye(4, dtype=complex)
    term = np.eye(4, dtype=complex)
    for k in range(1, 15):
        term = term @ (a * c.omega_gen) / k
        taylor += term
    assert np.linalg.norm(c.omega_power(a) - taylor) < 1e-14


def test_quantified_pairs():
    s = build_linear_rotor(3)
    tk = build_toolkit(s, AmplitudeGrid(-2.0, 2.0, 4), 0.1)
    q2 = build_quantified_pairs(tk, 2)
    for k in range(4):
        assert np.linalg.norm(q2.product(k, 1) - tk.propagator(k)) < 1e-12
        assert np.linalg.norm(q2.product(k, 0) - tk.propagator(k + 1)) < 1e-12
    q = build_quantified_pairs(tk, 100)
    assert q.levels[1] == pytest.approx(1 / 99)
    lazy = build_quantified_pairs(tk, 100, lazy=True)
    for k in range(4):
        for j in (0, 17, 50, 99):
            assert unitarity_residual(q.product(k, j)) < 1e-11
            assert np.linalg.norm(q.product(k, j) - lazy.product(k, j)) < 1e-13
    assert q.quantize(0.5) == 49
    with pytest.raises(InvalidParameter):
        build_quantified_pairs(tk, 1)


@settings(max_examples=200, deadline=None)
@given(alpha=st.floats(0, 1), n=st.integers(2, 10_000))
def test_quantize_error_bound(alpha, n):
    s = build_two_level()
    tk = build_toolkit(s, AmplitudeGrid(-1.0, 1.0, 1), 0.1, lazy=True)
    q = build_quantified_pairs(tk, n, lazy=True)
    k = q.quantize(alpha)
    assert 0 <= k < n
    assert abs(alpha - q.level_value(k)) <= 1 / (2 * (n - 1)) * (1 + 1e-12)


def test_quantize_tie_goes_down():
    tk = build_toolkit(build_two_level(), AmplitudeGrid(-1.0, 1.0, 1), 0.1, lazy=True)
    q = build_quantified_pairs(tk, 3, lazy=True)
    assert q.quantize(0.25) == 0 and q.quantize(0.75) == 1


def test_cache_roundtrip(tmp_path):
    s = build_linear_rotor(4)
    tk = build_toolkit(s, AmplitudeGrid(-3.0, 3.0, 6), 0.05)
    path = tmp_path / "tk.bin"
    save_toolkit(tk, path)
    back = load_toolkit(path, s)
    assert back.grid == tk.grid and back.dt == tk.dt
    for k in range(7):
        assert back.eig(k).eigenvalues.tobytes() == tk.eig(k).eigenvalues.tobytes()
        assert back.eig(k).eigenvectors.tobytes() == tk.eig(k).eigenvectors.tobytes()
        assert back.propagator(k).tobytes() == tk.propagator(k).tobytes()
    save_toolkit(back, tmp_path / "again.bin")
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_cache_errors(tmp_path):
    s = build_linear_rotor(2)
    tk = build_toolkit(s, AmplitudeGrid(-1.0, 1.0, 2), 0.1)
    path = tmp_path / "tk.bin"
    save_toolkit(tk, path)
    data = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(data[:-10])
    with pytest.raises(FormatError):
        load_toolkit(tmp_path / "short.bin", s)
    (tmp_path / "tiny.bin").write_bytes(data[:10])
    with pytest.raises(FormatError):
        load_toolkit(tmp_path / "tiny.bin", s)
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        load_toolkit(tmp_path / "magic.bin", s)
    flipped = bytearray(data)
    flipped[200] ^= 1
    (tmp_path / "flip.bin").write_bytes(bytes(flipped))
    with pytest.raises(FormatError):
        load_toolkit(tmp_path / "flip.bin", s)
    with pytest.raises(FingerprintMismatch):
        load_toolkit(path, build_linear_rotor(2, 1.1))
    with pytest.raises(OSError):
        load_toolkit(tmp_path / "missing.bin", s)
