import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rkhsnet import (
    WeightedGraph,
    delta_expansion,
    dipole,
    dipole_system,
    energy_inner,
    finite_laplacian,
    ladder_graph,
    ladder_kernel,
    ladder_laplacian_apply,
    laplacian_apply,
    load_graph,
    network_kernel,
    psd_check,
    resistance_metric,
)
from rkhsnet.errors import (
    BadConductance,
    BadParameter,
    DegenerateDipole,
    DimensionMismatch,
    Disconnected,
    ParseError,
    SelfLoop,
    UnknownPoint,
)
from randgraphs import random_graph

PATH3 = "0 1 1\n1 2 1\n"
TRIANGLE = "a b 1\nb c 1\nc a 1\n"


def star(m):
    return WeightedGraph.from_edges([("x", f"l{i}", 1.0) for i in range(m)])


def test_load_graph_examples():
    G = load_graph("a b 1\nb c 1")
    assert G.vertices == ("a", "b", "c")
    assert G.conductance("a", "b") == 1.0 and G.conductance("a", "c") == 0.0
    with pytest.raises(Disconnected):
        load_graph("a b 1\nc d 1")
    with pytest.raises(SelfLoop):
        load_graph("a a 1")


def test_load_graph_format_errors():
    G = load_graph("# comment\n\n  u v 2.5\n# another\nv w 1e-1\n")
    assert G.conductance("v", "w") == pytest.approx(0.1)
    with pytest.raises(ParseError) as err:
        load_graph("a b 1\nb c\n")
    assert err.value.line == 2
    with pytest.raises(ParseError) as err:
        load_graph("a b 1\nb a 2\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        load_graph("a b one\n")
    with pytest.raises(ParseError):
        load_graph("# nothing\n")
    with pytest.raises(BadConductance):
        load_graph("a b 0\n")
    with pytest.raises(BadConductance):
        load_graph("a b -2\n")


def test_laplacian_apply_examples():
    G = load_graph("a b 1\nb c 1")
    np.testing.assert_array_equal(laplacian_apply(G, [3.0, 3.0, 3.0]), [0, 0, 0])
    np.testing.assert_array_equal(laplacian_apply(G, {"a": 0, "b": 1, "c": 1}), [-1, 1, 0])
    S = star(5)
    f = np.zeros(len(S))
    f[S.index("x")] = 1.0
    assert laplacian_apply(S, f)[S.index("x")] == 5.0
    with pytest.raises(DimensionMismatch):
        laplacian_apply(G, [1.0, 2.0])


def test_energy_inner_examples():
    G = load_graph("a b 1\nb c 1")
    assert energy_inner(G, [2, 2, 2], [2, 2, 2]) == 0.0
    assert energy_inner(G, [0, 1, 2], [0, 1, 2]) == 2.0
    assert energy_inner(G, [0, 1, 0], [0, 1, 0]) == 2.0 == G.total_conductance("b")


def test_energy_inner_double_sum_form():
    rng = np.random.default_rng(1)
    G = random_graph(rng, 12)
    h, f = rng.standard_normal((2, len(G)))
    C = G.conductance_matrix
    double = 0.5 * np.sum(C * np.subtract.outer(h, h) * np.subtract.outer(f, f))
    assert energy_inner(G, h, f) == pytest.approx(double, rel=1e-12)


def test_dipole_examples():
    G = load_graph(PATH3)
    np.testing.assert_allclose(dipole(G, "0", "1"), [0, 1, 1])
    np.testing.assert_allclose(dipole(G, "0", "2"), [0, 1, 2])
    v1 = dipole(G, "0", "1")
    np.testing.assert_allclose(laplacian_apply(G, v1), [-1, 1, 0], atol=1e-14)
    with pytest.raises(DegenerateDipole):
        dipole(G, "0", "0")
    with pytest.raises(UnknownPoint):
        dipole(G, "0", "9")


def test_dipole_self_energy_equals_value():
    rng = np.random.default_rng(2)
    G = random_graph(rng, 20)
    o = G.vertices[0]
    for x in G.vertices[1:]:
        v = dipole(G, o, x)
        assert v[G.index(o)] == 0.0
        assert energy_inner(G, v, v) == pytest.approx(v[G.index(x)], rel=1e-10)


def test_network_kernel_examples():
    K = network_kernel(load_graph(PATH3), "0")
    assert K.points == ("1", "2")
    np.testing.assert_allclose(K.gram, [[1, 1], [1, 2]], atol=1e-14)
    K = network_kernel(load_graph(TRIANGLE), "a")
    # 1 in parallel with 1 + 1
    np.testing.assert_allclose(np.diag(K.gram), [2 / 3, 2 / 3], atol=1e-15)


def test_network_kernel_ladder_approaches_closed_form():
    R = 0.5
    K = network_kernel(ladder_graph(R, 60, tail=True), "inf")
    ref = ladder_kernel(R, 60)
    np.testing.assert_allclose(K.submatrix(ref.points).gram, ref.gram, atol=1e-13)


def test_delta_expansion_examples():
    G = load_graph(PATH3)
    system = dipole_system(G, "0")
    d = delta_expansion(G, "0", "1")
    assert d.coefficients == {"1": 2.0, "2": -1.0}
    assert d.c_of_x == 2.0
    np.testing.assert_allclose(d.function(system), [0, 1, 0], atol=1e-14)

    S = star(4)
    d = delta_expansion(S, "l0", "x")
    f = d.function(dipole_system(S, "l0"))
    assert d.c_of_x == 4.0
    assert energy_inner(S, f, f) == pytest.approx(4.0)

    G = WeightedGraph.from_edges([("y", "x", 2.5), ("y", "z", 1.0)])
    d = delta_expansion(G, "z", "x")
    assert d.c_of_x == 2.5
    assert d.coefficients == {"x": 2.5, "y": -2.5}


def test_delta_expansion_at_base_is_delta_up_to_constant():
    rng = np.random.default_rng(4)
    G = random_graph(rng, 15)
    o = G.vertices[0]
    f = delta_expansion(G, o, o).function(dipole_system(G, o))
    delta = np.zeros(len(G))
    delta[0] = 1.0
    diff = f - delta
    assert np.ptp(diff) < 1e-10
    assert energy_inner(G, f, f) == pytest.approx(G.total_conductance(o), rel=1e-10)


def test_resistance_examples():
    G = load_graph("a b 1\nb c 1\nc d 1\nd e 1")
    R = resistance_metric(G, "c")
    idx = np.arange(5)
    np.testing.assert_allclose(R.values, np.abs(idx[:, None] - idx[None, :]), atol=1e-13)
    T = resistance_metric(load_graph(TRIANGLE), "a")
    off = T.values[~np.eye(3, dtype=bool)]
    np.testing.assert_allclose(off, 2 / 3, atol=1e-12)
    assert np.all(np.diag(T.values) == 0)
    assert T("a", "c") == pytest.approx(2 / 3)


def series_parallel_oracle():
    # a-b (2) and a-c-b (1 + 3) in parallel: 1 / (1/2 + 1/4) = 4/3
    G = load_graph("a b 0.5\na c 1\nc b 0.3333333333333333\n")
    return G, 4 / 3


def test_resistance_series_parallel():
    G, expected = series_parallel_oracle()
    assert resistance_metric(G, "c")("a", "b") == pytest.approx(expected, rel=1e-12)


def test_ladder_kernel_examples():
    assert ladder_kernel(0.5, 3).gram[1, 1] == pytest.approx(1.0)
    assert ladder_kernel(0.5, 3).gram[2, 3] == pytest.approx(0.25)
    for R in (0.1, 0.7):
        assert ladder_kernel(R, 4).gram[1, 1] == pytest.approx(R / (1 - R))
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(BadParameter):
            ladder_kernel(bad, 3)


def test_ladder_laplacian_examples():
    np.testing.assert_allclose(ladder_laplacian_apply(0.5, np.full(6, 2.0)), 0.0)
    f = np.array([0.0, 1, 1, 1, 1])
    assert ladder_laplacian_apply(0.5, f)[1] == pytest.approx(1.0)
    with pytest.raises(BadParameter):
        ladder_laplacian_apply(1.5, f)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(1, 30), st.integers(0, 2 ** 31))
def test_ladder_laplacian_matches_graph(R, n, seed):
    f = np.random.default_rng(seed).standard_normal(n + 1)
    G = ladder_graph(R, n)
    np.testing.assert_allclose(ladder_laplacian_apply(R, f), laplacian_apply(G, f),
                               rtol=1e-12, atol=1e-12 * R ** (-n))


def test_reproducing_identity_random_graphs():
    rng = np.random.default_rng(5)
    for _ in range(10):
        G = random_graph(rng, 50)
        o = G.vertices[0]
        system = dipole_system(G, o)
        f = rng.standard_normal(len(G))
        f[0] = 0.0
        for x in system.others:
            assert energy_inner(G, system[x], f) == pytest.approx(f[G.index(x)], abs=1e-9)


def test_isometry_random_graphs():
    rng = np.random.default_rng(6)
    for _ in range(10):
        G = random_graph(rng, 25)
        o = G.vertices[-1]
        K = network_kernel(G, o)
        system = dipole_system(G, o)
        xi = rng.standard_normal(len(K))
        f = xi @ system.potentials
        quad = xi @ K.gram @ xi
        assert energy_inner(G, f, f) == pytest.approx(quad, rel=1e-9)


def test_network_kernel_positive_and_green_identity():
    rng = np.random.default_rng(7)
    for _ in range(10):
        G = random_graph(rng, 30)
        o = G.vertices[0]
        K = network_kernel(G, o)
        assert psd_check(K).min_eigenvalue > 0
        np.testing.assert_allclose(finite_laplacian(K), G.grounded_laplacian(o), atol=1e-8)


def test_dipoles_independent_of_order_of_solves():
    rng = np.random.default_rng(8)
    G = random_graph(rng, 20)
    o = G.vertices[3]
    system = dipole_system(G, o)
    for x in G.vertices:
        if x != o:
            np.testing.assert_allclose(system[x], dipole(G, o, x), atol=1e-13)


def test_graph_is_immutable():
    G = load_graph(TRIANGLE)
    with pytest.raises(ValueError):
        G.conductance_matrix[0, 1] = 5.0
