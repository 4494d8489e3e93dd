"""Energy terms: values against closed-form oracles, gradients against
central finite differences, projected stencil Hessians PSD."""

import numpy as np
import pytest
from pytest import approx

from srsim.bodies import (
    AffineBody,
    GlobalState,
    Material,
    Shell,
    SoftBody,
    lame_parameters,
)
from srsim.energy import (
    BarrierParams,
    KAPPA_GROWTH_CAP,
    adapt_kappa,
    barrier,
    barrier_sq,
    combine,
    elastic_energy_density,
    elastic_term,
    elastic_value,
    inertia_term,
    inertia_value,
    kappa_init,
    orthogonality_term,
    shell_components,
    shell_term,
    shell_value,
    spd_project,
)
from srsim.energy.terms import _orthogonality_raw
from srsim.geometry.mesh import TetMesh, box_surface, box_tet, cloth_grid


def dense_grad(term, n_dof):
    g = np.zeros(n_dof)
    np.add.at(g, term.gidx, term.gval)
    return g


def dense_hess(term, n_dof):
    import scipy.sparse as sp

    return sp.coo_matrix(
        (term.hval, (term.hrow, term.hcol)), shape=(n_dof, n_dof)
    ).toarray()


def fd_gradient(value_fn, x, step):
    g = np.zeros(len(x))
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (value_fn(xp) - value_fn(xm)) / (2.0 * step)
    return g


def single_tet_body(model="StVK", youngs=1e5, poisson=0.3):
    verts = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    mesh = TetMesh(verts, np.array([[0, 1, 2, 3]]))
    return SoftBody(mesh, Material(model, youngs, poisson, 1000.0))


def small_state():
    soft = SoftBody(box_tet(1.0, divisions=1), Material("StVK", 1e5, 0.3, 500.0))
    aff = AffineBody(box_surface(0.5), density=800.0)
    return GlobalState(soft_bodies=[soft], affine_bodies=[aff])


# =============================================================================
# Inertia
# =============================================================================


class TestInertia:
    def test_zero_at_predictor(self):
        state = small_state()
        x = state.gather()
        term = inertia_term(x, x, state)
        assert term.value == 0.0
        assert dense_grad(term, state.n_dof) == approx(np.zeros(state.n_dof))

    def test_quadratic_value(self):
        # E = 0.5 (x - xhat)^T M (x - xhat) exactly, including affine blocks
        state = small_state()
        rng = np.random.default_rng(11)
        x = state.gather()
        xhat = x + 0.1 * rng.standard_normal(state.n_dof)
        term = inertia_term(x, xhat, state)
        d = x - xhat
        expected = 0.0
        for blk, (off, m) in zip(state.blocks, state.mass_diagonal_blocks()):
            dl = d[off : off + blk.dof]
            if blk.is_affine:
                expected += 0.5 * dl @ m @ dl
            else:
                expected += 0.5 * np.sum(np.repeat(m, 3) * dl * dl)
        assert term.value == approx(expected, rel=1e-12)
        assert inertia_value(x, xhat, state) == approx(expected, rel=1e-12)

    def test_gradient_matches_fd(self):
        state = small_state()
        rng = np.random.default_rng(3)
        x0 = state.gather()
        for _ in range(100):
            x = x0 + 0.05 * rng.standard_normal(state.n_dof)
            xhat = x0 + 0.05 * rng.standard_normal(state.n_dof)
            g = dense_grad(inertia_term(x, xhat, state), state.n_dof)
            fd = fd_gradient(lambda y: inertia_value(y, xhat, state), x, 1e-6)
            assert g == approx(fd, rel=1e-4, abs=1e-9)

    def test_hessian_is_mass_matrix_and_psd(self):
        state = small_state()
        x = state.gather()
        term = inertia_term(x, x + 0.1, state)
        H = dense_hess(term, state.n_dof)
        assert H == approx(H.T)
        assert np.linalg.eigvalsh(H).min() >= -1e-8


# =============================================================================
# Elastic models
# =============================================================================


class TestElastic:
    @pytest.mark.parametrize("model", ["NeoHookean", "StVK", "FixedCorotated"])
    def test_rest_state_zero(self, model):
        body = single_tet_body(model)
        assert elastic_value(body, body.x) == approx(0.0, abs=1e-14)
        term = elastic_term(body, body.x, 0)
        assert dense_grad(term, body.dof) == approx(np.zeros(body.dof), abs=1e-8)

    def test_stvk_uniaxial_small_strain(self):
        # F = diag(1+e, 1-nu e, 1-nu e) stores 0.5 E e^2 per unit volume to
        # leading order (uniaxial stress along x)
        youngs, nu, eps = 1e5, 0.3, 1e-4
        body = single_tet_body("StVK", youngs, nu)
        f = np.diag([1.0 + eps, 1.0 - nu * eps, 1.0 - nu * eps])
        x = body.x @ f.T
        vol = body.rest_volumes.sum()
        assert elastic_value(body, x) == approx(0.5 * youngs * eps**2 * vol, rel=1e-3)

    @pytest.mark.parametrize("model", ["NeoHookean", "StVK", "FixedCorotated"])
    def test_gradient_matches_fd(self, model):
        body = single_tet_body(model)
        rng = np.random.default_rng(17)
        done = 0
        while done < 100:
            x = body.x + 0.1 * rng.standard_normal((4, 3))
            f = np.linalg.det(x[1:] - x[0]) / np.linalg.det(body.x[1:] - body.x[0])
            if f < 0.3:  # keep away from inversion so FD stencils stay feasible
                continue
            g = dense_grad(elastic_term(body, x, 0), body.dof)
            fd = fd_gradient(
                lambda y: elastic_value(body, y.reshape(4, 3)), x.ravel(), 1e-6
            )
            scale = max(np.abs(fd).max(), 1.0)
            assert np.abs(g - fd).max() / scale < 1e-4
            done += 1

    @pytest.mark.parametrize("model", ["NeoHookean", "StVK", "FixedCorotated"])
    def test_stencil_hessian_psd(self, model):
        body = single_tet_body(model)
        rng = np.random.default_rng(29)
        for _ in range(25):
            x = body.x + 0.2 * rng.standard_normal((4, 3))
            if np.linalg.det(x[1:] - x[0]) <= 0.05:
                continue
            H = dense_hess(elastic_term(body, x, 0), body.dof)
            assert np.linalg.eigvalsh((H + H.T) / 2).min() >= -1e-8

    def test_corotated_rotation_invariant(self):
        body = single_tet_body("FixedCorotated")
        theta = 0.7
        rot = np.array(
            [
                [np.cos(theta), -np.sin(theta), 0.0],
                [np.sin(theta), np.cos(theta), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        assert elastic_value(body, body.x @ rot.T) == approx(0.0, abs=1e-10)

    def test_neo_hookean_diverges_on_compression(self):
        body = single_tet_body("NeoHookean")
        scales = [0.5, 0.1, 0.01, 1e-4]
        vals = [elastic_value(body, body.x * s) for s in scales]
        assert all(np.diff(vals) > 0)
        assert vals[-1] > 1e6

    def test_neo_hookean_inverted_reports_infinite(self):
        body = single_tet_body("NeoHookean")
        x = body.x.copy()
        x[3] = [0.0, 0.0, -1.0]  # flip the apex through the base plane
        assert elastic_value(body, x) == np.inf
        with pytest.raises(FloatingPointError):
            elastic_term(body, x, 0)

    def test_multi_tet_assembly(self):
        mesh = box_tet(1.0, divisions=2)
        body = SoftBody(mesh, Material("StVK", 1e5, 0.3, 1000.0))
        rng = np.random.default_rng(5)
        x = body.x + 0.02 * rng.standard_normal(body.x.shape)
        term = elastic_term(body, x, 0)
        g = dense_grad(term, body.dof)
        fd = fd_gradient(
            lambda y: elastic_value(body, y.reshape(-1, 3)), x.ravel(), 1e-6
        )
        assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-4

    def test_density_function_matches_value(self):
        body = single_tet_body("StVK")
        mu, lam = body.material.lame
        rng = np.random.default_rng(8)
        x = body.x + 0.05 * rng.standard_normal((4, 3))
        d = (x[1:] - x[0]).T
        f = (d @ body.dm_inv[0])[None]
        dens = elastic_energy_density(f, "StVK", mu, lam)
        assert elastic_value(body, x) == approx(float(dens[0]) * body.rest_volumes[0])


# =============================================================================
# Shell membrane
# =============================================================================


def flat_shell(nx=4, nz=4, spacing=0.25):
    return Shell(cloth_grid(nx, nz, spacing), stretch_stiffness=1e4,
                 shear_stiffness=1e3)


class TestShell:
    def test_rest_state_zero(self):
        sh = flat_shell()
        stretch, shear = shell_components(sh, sh.x)
        assert stretch == approx(0.0, abs=1e-18)
        assert shear == approx(0.0, abs=1e-18)

    def test_uniform_stretch_isolates_stretch_mode(self):
        # scaling along the u axis leaves frame vectors orthogonal: shear 0
        sh = flat_shell()
        s = 1.2
        x = sh.x.copy()
        x[:, 0] *= s
        stretch, shear = shell_components(sh, x)
        area = sh.rest_areas.sum()
        assert shear == approx(0.0, abs=1e-12)
        assert stretch == approx(0.5 * sh.stretch_stiffness * area * (s - 1.0) ** 2,
                                 rel=1e-9)

    def test_gradient_matches_fd(self):
        sh = flat_shell(3, 3, 0.3)
        rng = np.random.default_rng(23)
        for _ in range(100):
            x = sh.x + 0.03 * rng.standard_normal(sh.x.shape)
            g = dense_grad(shell_term(sh, x, 0), sh.dof)
            fd = fd_gradient(
                lambda y: shell_value(sh, y.reshape(-1, 3)), x.ravel(), 1e-6
            )
            assert np.abs(g - fd).max() / np.abs(fd).max() < 1e-4

    def test_hessian_psd(self):
        sh = flat_shell(3, 3, 0.3)
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = sh.x + 0.05 * rng.standard_normal(sh.x.shape)
            H = dense_hess(shell_term(sh, x, 0), sh.dof)
            assert np.linalg.eigvalsh((H + H.T) / 2).min() >= -1e-8

    def test_degenerate_triangle_skipped(self, caplog):
        sh = flat_shell(2, 2, 0.5)
        x = sh.x.copy()
        x[:] = x[0]  # collapse everything to one point
        import logging

        with caplog.at_level(logging.WARNING):
            term = shell_term(sh, x, 0)
        assert term.value == 0.0
        assert "degenerate" in caplog.text


# =============================================================================
# Orthogonality penalty
# =============================================================================


class TestOrthogonality:
    def test_identity_zero(self):
        v, g, _ = _orthogonality_raw(np.eye(3), 1.0)
        assert v == 0.0
        assert g == approx(np.zeros((3, 3)))

    def test_rotation_zero(self):
        th = 0.9
        rot = np.array(
            [
                [np.cos(th), -np.sin(th), 0.0],
                [np.sin(th), np.cos(th), 0.0],
                [0.0, 0.0, 1.0],
            ]
        )
        v, g, _ = _orthogonality_raw(rot, 1.0)
        assert v == approx(0.0, abs=1e-14)
        assert g == approx(np.zeros((3, 3)), abs=1e-12)

    def test_double_identity_frobenius(self):
        # A = 2I with unit stiffness and volume: |4I - I|_F^2 = 27
        v, _, _ = _orthogonality_raw(2.0 * np.eye(3), 1.0)
        assert v == approx(27.0, rel=1e-12)

    def test_gradient_matches_fd(self):
        state = small_state()
        rng = np.random.default_rng(41)
        x0 = state.gather()
        for _ in range(100):
            x = x0.copy()
            x[-9:] = (np.eye(3) + 0.3 * rng.standard_normal((3, 3))).ravel()
            term = orthogonality_term(x, state)
            g = dense_grad(term, state.n_dof)
            fd = fd_gradient(
                lambda y: orthogonality_term(y, state, derivatives=False).value,
                x,
                1e-6,
            )
            scale = max(np.abs(fd).max(), 1.0)
            assert np.abs(g - fd).max() / scale < 1e-4

    def test_hessian_psd(self):
        state = small_state()
        rng = np.random.default_rng(43)
        x = state.gather()
        x[-9:] = (np.eye(3) + 0.4 * rng.standard_normal((3, 3))).ravel()
        H = dense_hess(orthogonality_term(x, state), state.n_dof)
        assert np.linalg.eigvalsh((H + H.T) / 2).min() >= -1e-8


# =============================================================================
# Barrier
# =============================================================================


class TestBarrier:
    def test_zero_at_dhat(self):
        b, db = barrier(0.01, 0.01)
        assert b == 0.0
        assert db == 0.0

    def test_half_dhat_value(self):
        dhat = 0.02
        b, _ = barrier(dhat / 2.0, dhat)
        assert b == approx((dhat**2 / 4.0) * np.log(2.0), rel=1e-12)

    def test_zero_beyond_dhat(self):
        dhat = 0.01
        d = np.linspace(dhat, 10 * dhat, 50)
        b, db = barrier(d, dhat)
        assert (b == 0.0).all()
        assert (db == 0.0).all()

    def test_strictly_decreasing_and_fd(self):
        dhat = 0.05
        d = np.linspace(0.001 * dhat, 0.999 * dhat, 200)
        b, db = barrier(d, dhat)
        assert (np.diff(b) < 0).all()
        assert (b > 0).all()
        step = 1e-6 * dhat
        fd = (barrier(d + step, dhat)[0] - barrier(d - step, dhat)[0]) / (2 * step)
        assert db == approx(fd, rel=1e-6)

    def test_divergence_near_zero(self):
        assert barrier(1e-12, 0.01)[0] > 1.0e-3

    def test_nonpositive_distance_rejected(self):
        with pytest.raises(ValueError):
            barrier(0.0, 0.01)
        with pytest.raises(ValueError):
            barrier(np.array([0.005, -1.0]), 0.01)

    def test_squared_form_derivatives_fd(self):
        shat = 0.3
        s = np.linspace(0.01 * shat, 0.99 * shat, 100)
        b, db, d2b = barrier_sq(s, shat)
        step = 1e-6 * shat
        fd1 = (barrier_sq(s + step, shat, order=0) - barrier_sq(s - step, shat, order=0)) / (2 * step)
        fd2 = (barrier_sq(s + step, shat, order=1)[1] - barrier_sq(s - step, shat, order=1)[1]) / (2 * step)
        assert db == approx(fd1, rel=1e-6)
        assert d2b == approx(fd2, rel=1e-5)

    def test_kappa_schedule(self):
        k0 = kappa_init(2.0, 0.01)
        assert k0 == approx(1e4 * 2.0 / 1e-4)
        p = BarrierParams(0.01, k0)
        p2 = adapt_kappa(p, 1e-5 * p.dhat, k0)
        assert p2.kappa == approx(2 * k0)
        p3 = adapt_kappa(p, 0.5 * p.dhat, k0)
        assert p3.kappa == k0
        # cap: never beyond 1e8x the initial value
        p_hi = BarrierParams(0.01, KAPPA_GROWTH_CAP * k0)
        assert adapt_kappa(p_hi, 0.0, k0).kappa == KAPPA_GROWTH_CAP * k0

    def test_params_validation(self):
        with pytest.raises(ValueError):
            BarrierParams(-1.0, 1.0)
        with pytest.raises(ValueError):
            BarrierParams(0.01, 0.0)


# =============================================================================
# SPD projection
# =============================================================================


class TestSpdProject:
    def test_psd_input_unchanged(self):
        rng = np.random.default_rng(53)
        a = rng.standard_normal((6, 6))
        H = a @ a.T
        assert spd_project(H) == approx(H, abs=1e-10)

    def test_idempotent(self):
        rng = np.random.default_rng(54)
        H = rng.standard_normal((9, 9))
        H = (H + H.T) / 2
        P = spd_project(H)
        assert spd_project(P) == approx(P, abs=1e-10)

    def test_diagonal_clamp(self):
        assert spd_project(np.diag([1.0, -1.0])) == approx(np.diag([1.0, 0.0]))

    def test_random_symmetric_output_psd(self):
        rng = np.random.default_rng(55)
        for _ in range(50):
            H = rng.standard_normal((12, 12))
            H = (H + H.T) / 2
            assert np.linalg.eigvalsh(spd_project(H)).min() >= -1e-10

    def test_batched_matches_loop(self):
        rng = np.random.default_rng(56)
        hs = rng.standard_normal((7, 5, 5))
        hs = (hs + hs.transpose(0, 2, 1)) / 2
        batch = spd_project(hs)
        for i in range(7):
            assert batch[i] == approx(spd_project(hs[i]))


# =============================================================================
# Assembly plumbing
# =============================================================================


class TestCombine:
    def test_accumulates_duplicates(self):
        from srsim.energy import EnergyTerm

        t1 = EnergyTerm.from_blocks(
            1.0,
            np.array([[0, 1]]),
            np.array([[1.0, 2.0]]),
            np.array([[[1.0, 0.5], [0.5, 2.0]]]),
        )
        t2 = EnergyTerm.from_blocks(
            2.0, np.array([[1, 2]]), np.array([[3.0, 4.0]]), None
        )
        value, grad, (r, c, v) = combine([t1, t2], 3)
        assert value == 3.0
        assert grad == approx([1.0, 5.0, 4.0])
        import scipy.sparse as sp

        H = sp.coo_matrix((v, (r, c)), shape=(3, 3)).toarray()
        assert H == approx(np.array([[1.0, 0.5, 0.0], [0.5, 2.0, 0.0], [0.0, 0.0, 0.0]]))
