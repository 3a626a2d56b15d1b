import numpy as np
import pytest

from kwcflow import build_grid, load_field, save_field
from kwcflow.grid import bump_field, cosine_field, random_smooth_field


@pytest.fixture(params=[1, 2], ids=["1d", "2d"])
def grid(request):
    if request.param == 1:
        return build_grid(1, [48], [1.0])
    return build_grid(2, [12, 9], [1.0, 1.5])


def test_build_grid_spacing():
    g = build_grid(1, [8], [1.0])
    assert g.spacing == (0.125,)
    g = build_grid(2, [4, 8], [1.0, 2.0])
    assert g.spacing == (0.25, 0.25)
    assert g.n_cells == 32
    assert g.cell_volume == pytest.approx(0.0625)


@pytest.mark.parametrize("bad", [
    dict(dim=3, cells_per_axis=[8, 8, 8], extents=[1, 1, 1]),
    dict(dim=0, cells_per_axis=[], extents=[]),
    dict(dim=1, cells_per_axis=[3], extents=[1.0]),
    dict(dim=1, cells_per_axis=[8], extents=[-1.0]),
    dict(dim=2, cells_per_axis=[8], extents=[1.0, 1.0]),
])
def test_build_grid_rejects(bad):
    with pytest.raises(ValueError):
        build_grid(bad["dim"], bad["cells_per_axis"], bad["extents"])


def test_grad_of_constant_is_zero(grid):
    G = grid.grad(grid.constant(5.0))
    for comp in G:
        assert np.all(comp == 0.0)


def test_grad_linear_field_1d():
    g = build_grid(1, [32], [1.0])
    f = g.centers(0)
    gx = g.grad(f)[0]
    assert np.allclose(gx[1:-1], 1.0)
    assert gx[0] == 0.0 and gx[-1] == 0.0   # mirror ghosts kill the normal component


def test_grad_second_order_accuracy():
    # cosine profile is Neumann-compatible; cell-averaged gradient is O(h^2)
    errs = []
    for n in (64, 128):
        g = build_grid(1, [n], [1.0])
        x = g.centers(0)
        gc = g.grad_cell(np.cos(np.pi * x))[0]
        errs.append(np.max(np.abs(gc + np.pi * np.sin(np.pi * x))))
    assert errs[0] <= 2e-3
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_div_constant_vector_field(grid):
    F = tuple(np.ones(s) for s in grid.face_shapes())
    d = grid.div(F)
    # boundary faces are zeroed, so only wall cells see the jump
    interior = d[tuple(slice(1, -1) for _ in range(grid.dim))]
    assert np.allclose(interior, 0.0)


def test_div_linear_1d():
    g = build_grid(1, [32], [1.0])
    faces = np.arange(33) * g.spacing[0]
    d = g.div((faces,))
    assert np.allclose(d[1:-1], 1.0)


def test_adjointness_random(grid):
    rng = np.random.default_rng(5)
    for _ in range(10):
        w = rng.standard_normal(grid.shape)
        F = tuple(rng.standard_normal(s) for s in grid.face_shapes())
        lhs = grid.inner_faces(F, grid.grad(w))
        rhs = -grid.inner(grid.div(F), w)
        scale = grid.norm_h(w) * max(np.max(np.abs(c)) for c in F) + 1.0
        assert abs(lhs - rhs) <= 1e-12 * scale


def test_laplacian_equals_div_grad(grid):
    rng = np.random.default_rng(6)
    f = rng.standard_normal(grid.shape)
    assert np.array_equal(grid.laplacian(f), grid.div(grid.grad(f)))


def test_laplacian_symmetric_negative_semidefinite(grid):
    rng = np.random.default_rng(7)
    for _ in range(5):
        f = rng.standard_normal(grid.shape)
        h = rng.standard_normal(grid.shape)
        a = grid.inner(grid.laplacian(f), h)
        b = grid.inner(f, grid.laplacian(h))
        assert abs(a - b) <= 1e-12 * (grid.norm_h(f) * grid.norm_h(h) + 1.0)
        # discrete Green identity
        G = grid.grad(f)
        assert grid.inner(grid.laplacian(f), f) == pytest.approx(
            -grid.inner_faces(G, G), rel=1e-12, abs=1e-12)


def test_laplacian_annihilates_constants_exactly(grid):
    assert np.all(grid.laplacian(grid.constant(4.2)) == 0.0)
    # row sums of the operator matrix are zero
    ones = np.ones(grid.n_cells)
    assert np.max(np.abs(grid.stiffness_matrix @ ones)) == 0.0


def test_laplacian_cosine_eigenfunction_second_order():
    errs = []
    for n in (64, 128):
        g = build_grid(1, [n], [1.0])
        x = g.centers(0)
        f = np.cos(np.pi * x)
        errs.append(np.max(np.abs(g.laplacian(f) + np.pi**2 * f)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_norms(grid):
    one = grid.constant(1.0)
    vol = float(np.prod(grid.extents))
    assert grid.norm_h(one) == pytest.approx(np.sqrt(vol))
    # constants are in the Laplacian kernel: H2 surrogate collapses to |c|_H
    assert grid.norm_h2(grid.constant(-2.0)) == pytest.approx(2.0 * np.sqrt(vol))
    rng = np.random.default_rng(8)
    f = rng.standard_normal(grid.shape)
    h = rng.standard_normal(grid.shape)
    assert abs(grid.inner(f, h)) <= grid.norm_h(f) * grid.norm_h(h) + 1e-14
    assert grid.norm_v(f) >= grid.norm_h(f)


def test_norm_h_unit_domain():
    g = build_grid(1, [16], [1.0])
    assert g.norm_h(g.constant(1.0)) == pytest.approx(1.0)


def test_operator_matrices_match_stencils(grid):
    rng = np.random.default_rng(9)
    w = rng.standard_normal(grid.shape)
    G = grid.grad(w)
    for d, M in enumerate(grid.gradient_matrices):
        assert np.allclose((M @ w.ravel()).reshape(grid.face_shapes()[d]), G[d],
                           atol=1e-14)
    assert np.allclose((grid.stiffness_matrix @ w.ravel()).reshape(grid.shape),
                       -grid.laplacian(w), atol=1e-12)
    gc = grid.grad_cell(w)
    assert np.allclose(
        (grid.cell_gradient_matrix @ w.ravel()).reshape((grid.dim,) + grid.shape),
        gc, atol=1e-14)


def test_cell_to_face_is_adjoint_of_face_to_cell(grid):
    rng = np.random.default_rng(10)
    F = tuple(rng.standard_normal(s) for s in grid.face_shapes())
    V = rng.standard_normal((grid.dim,) + grid.shape)
    lhs = grid.inner_faces(grid.cell_to_face(V), F)
    rhs = sum(grid.inner(grid.face_to_cell(F)[d], V[d]) for d in range(grid.dim))
    assert abs(lhs - rhs) <= 1e-12


def test_field_validation(grid):
    with pytest.raises(ValueError):
        grid.check_scalar(np.zeros((3,) * grid.dim))
    bad = grid.zeros()
    bad.flat[0] = np.nan
    with pytest.raises(ValueError):
        grid.check_scalar(bad)
    with pytest.raises(ValueError):
        grid.check_faces(tuple(np.zeros(s) for s in grid.face_shapes())[:-1] + (np.zeros((2, 2)),))


def test_snapshot_roundtrip(tmp_path, grid):
    rng = np.random.default_rng(11)
    f = rng.standard_normal(grid.shape)
    path = tmp_path / "field.csv"
    save_field(path, grid, f)
    g2, f2 = load_field(path)
    assert g2 == grid
    assert np.array_equal(f, f2)
    header = path.read_text().splitlines()[0]
    assert header.startswith("# grid dim=")


def test_field_constructors():
    g = build_grid(1, [64], [1.0])
    f = cosine_field(g, mean=1.0, amplitude=0.5, mode=2)
    assert abs(np.mean(f) - 1.0) < 1e-3
    b = bump_field(g, center=0.5, width=0.1, amplitude=2.0)
    assert np.max(b) == pytest.approx(2.0, rel=1e-2)
    rng = np.random.default_rng(0)
    r1 = random_smooth_field(g, rng, mean=0.0, amplitude=1.0)
    r2 = random_smooth_field(g, np.random.default_rng(0), mean=0.0, amplitude=1.0)
    assert np.array_equal(r1, r2)
    assert np.max(np.abs(r1)) == pytest.approx(1.0)
