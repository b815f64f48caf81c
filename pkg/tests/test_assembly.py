"""Residual/Jacobian assembly: oracles, conservation identities, reduction."""

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from stdd.assembly import (CellProperties, ResolvedWells, StateField,
                           assemble, compute_fluxes, schur_reduce)
from stdd.errors import MissingPrevTrace, ZeroPermeability
from stdd.mesh import Subdomain, build_window
from stdd.physics import (BETA_C, BrooksCoreyModel, FluidModel,
                          FluidRockModel)


def model():
    return FluidRockModel(FluidModel(), BrooksCoreyModel())


def uniform_props(n, k=100.0, phi=0.2):
    return CellProperties(phi=np.full(n, phi), kx=np.full(n, k),
                          ky=np.full(n, k))


def line_window(n=4, h=1.0, dt=1.0, delta_t=None):
    s = Subdomain((0.0, 0.0, n * h, h), (h, h), dt)
    return build_window([s], delta_t or dt, (0.0, 0.0, n * h, h))


def nonmatching_window():
    fine = Subdomain((0.0, 0.0, 1.0, 1.0), (0.5, 0.5), 0.5, 1)
    coarse = Subdomain((1.0, 0.0, 2.0, 1.0), (1.0, 1.0), 1.0, 4)
    return build_window([fine, coarse], 1.0, (0.0, 0.0, 2.0, 1.0))


def random_state(window, seed=0):
    rng = np.random.default_rng(seed)
    return StateField(
        p=rng.uniform(900.0, 1100.0, window.n_st),
        s=rng.uniform(0.25, 0.75, window.n_st),
        trace_p=rng.uniform(900.0, 1100.0, window.n_spatial),
        trace_s=rng.uniform(0.25, 0.75, window.n_spatial))


class TestResidualBasics:
    def test_steady_state_zero_residual(self):
        w = line_window(4)
        state = StateField(
            p=np.full(w.n_st, 1000.0), s=np.full(w.n_st, 0.4),
            trace_p=np.full(w.n_spatial, 1000.0),
            trace_s=np.full(w.n_spatial, 0.4))
        sys_ = assemble(w, state, uniform_props(w.n_spatial),
                        ResolvedWells.none(w.n_spatial), model())
        assert np.all(sys_.residual_full == 0.0)

    def test_single_cell_injector_balance(self):
        w = line_window(1)
        m = model()
        state = StateField(
            p=np.array([1000.0]), s=np.array([0.5]),
            trace_p=np.array([1000.0]), trace_s=np.array([0.3]))
        wells = ResolvedWells(inj_w=np.array([2.0]),
                              prod_wi=np.zeros(1), prod_bhp=np.zeros(1))
        sys_ = assemble(w, state, uniform_props(1), wells, m)
        vol = w.cell_vol[0]
        acc = 0.2 * 64.0 * (0.5 - 0.3) * vol
        assert sys_.r_y[1] == pytest.approx(acc - 2.0 * 1.0, rel=1e-14)

    def test_accumulation_hand_value(self):
        # phi=0.2, incompressible rho_w=64, dS=0.1 -> 1.28 per unit volume
        w = line_window(1, h=1.0)
        m = FluidRockModel(FluidModel(c_o=0.0, c_w=0.0), BrooksCoreyModel())
        state = StateField(
            p=np.array([1000.0]), s=np.array([0.5]),
            trace_p=np.array([1000.0]), trace_s=np.array([0.4]))
        sys_ = assemble(w, state, uniform_props(1),
                        ResolvedWells.none(1), m)
        assert sys_.r_y[1] == pytest.approx(1.28 * w.cell_vol[0], rel=1e-13)

    def test_auxiliary_flux_unit_case(self):
        # two 1 ft cells, K = 1 md, unit face measure, dP = 1 psi
        w = line_window(2, h=1.0, dt=1.0)
        state = StateField(
            p=np.array([1001.0, 1000.0]), s=np.array([0.5, 0.5]),
            trace_p=np.array([1001.0, 1000.0]),
            trace_s=np.array([0.5, 0.5]))
        m = FluidRockModel(FluidModel(), BrooksCoreyModel(),
                           use_capillarity=False)
        fluxes = compute_fluxes(w, state, uniform_props(2, k=1.0), m)
        assert fluxes["aux_o"][0] == pytest.approx(BETA_C, rel=1e-13)

    def test_uniform_pressure_zero_flux(self):
        w = nonmatching_window()
        state = StateField(
            p=np.full(w.n_st, 1000.0), s=np.full(w.n_st, 0.5),
            trace_p=np.full(w.n_spatial, 1000.0),
            trace_s=np.full(w.n_spatial, 0.5))
        m = FluidRockModel(FluidModel(), BrooksCoreyModel(),
                           use_capillarity=False)
        fluxes = compute_fluxes(w, state, uniform_props(w.n_spatial), m)
        for arr in fluxes.values():
            assert np.all(arr == 0.0)

    def test_zero_permeability_rejected(self):
        w = line_window(2)
        props = CellProperties(phi=np.full(2, 0.2), kx=np.array([0.0, 1.0]),
                               ky=np.ones(2))
        with pytest.raises(ZeroPermeability):
            assemble(w, random_state(w), props, ResolvedWells.none(2),
                     model())

    def test_missing_trace_rejected(self):
        w = line_window(4)
        with pytest.raises(MissingPrevTrace):
            StateField.from_trace(w, np.zeros(2), np.zeros(2))

    def test_bhp_producer_zero_drawdown(self):
        w = line_window(1)
        wells = ResolvedWells(inj_w=np.zeros(1), prod_wi=np.array([5.0]),
                              prod_bhp=np.array([1000.0]))
        state = StateField(
            p=np.array([1000.0]), s=np.array([0.5]),
            trace_p=np.array([1000.0]), trace_s=np.array([0.5]))
        sys_ = assemble(w, state, uniform_props(1), wells, model())
        assert np.all(sys_.residual_full == 0.0)


class TestConservationIdentities:
    def test_global_telescoping_conforming(self):
        w = line_window(6, delta_t=2.0, dt=1.0)
        state = random_state(w, seed=3)
        sys_ = assemble(w, state, uniform_props(w.n_spatial),
                        ResolvedWells.none(w.n_spatial), model())
        m = model()
        # sum of water rows == total accumulation difference: fluxes cancel
        total = float(np.sum(sys_.r_y[1::2]))
        acc = 0.0
        for c in range(w.n_st):
            prev = w.st_prev[c]
            sp = w.st_spatial[c]
            rw_c = m.density("w", state.p[c])[0]
            if prev < 0:
                rw_p, s_p = m.density("w", state.trace_p[sp])[0], \
                    state.trace_s[sp]
            else:
                rw_p, s_p = m.density("w", state.p[prev])[0], state.s[prev]
            acc += 0.2 * w.cell_vol[sp] * (rw_c * state.s[c] - rw_p * s_p)
        assert total == pytest.approx(acc, rel=1e-12, abs=1e-10)

    def test_global_telescoping_nonmatching(self):
        w = nonmatching_window()
        state = random_state(w, seed=5)
        props = CellProperties(
            phi=np.full(w.n_spatial, 0.2),
            kx=np.random.default_rng(1).uniform(10, 200, w.n_spatial),
            ky=np.random.default_rng(2).uniform(10, 200, w.n_spatial))
        sys_ = assemble(w, state, props, ResolvedWells.none(w.n_spatial),
                        model())
        m = model()
        total = float(np.sum(sys_.r_y[1::2]))
        acc = 0.0
        for c in range(w.n_st):
            prev = w.st_prev[c]
            sp = w.st_spatial[c]
            rw_c = m.density("w", state.p[c])[0]
            if prev < 0:
                rw_p, s_p = m.density("w", state.trace_p[sp])[0], \
                    state.trace_s[sp]
            else:
                rw_p, s_p = m.density("w", state.p[prev])[0], state.s[prev]
            acc += 0.2 * w.cell_vol[sp] * (rw_c * state.s[c] - rw_p * s_p)
        assert total == pytest.approx(acc, rel=1e-12, abs=1e-10)

    def test_interface_bundle_flux_cancels_exactly(self):
        """Each bundle flux DOF enters the coarse divergence row and one fine
        divergence row with equal and opposite unit weights: the coarse face
        flux minus the sum of its fine fluxes is identically zero."""
        w = nonmatching_window()
        assert w.bundles
        state = random_state(w, seed=7)
        sys_ = assemble(w, state, uniform_props(w.n_spatial),
                        ResolvedWells.none(w.n_spatial), model())
        jac = sys_.jacobian_full.tocsc()
        for b in w.bundles:
            for f in b.faces:
                # the coarse st cell is one endpoint of every bundled face
                end = w.faces.c_left[f] if b.coarse_is_left else \
                    w.faces.c_right[f]
                assert end == b.coarse_cell
                for kind in (2, 3):  # phase flux dofs
                    col = jac[:, w.n_y + 4 * f + kind].toarray().ravel()
                    lrow = 2 * w.faces.c_left[f] + (kind - 2)
                    rrow = 2 * w.faces.c_right[f] + (kind - 2)
                    assert col[lrow] + col[rrow] == 0.0


class TestJacobian:
    def test_matches_central_differences(self):
        w = nonmatching_window()
        rng = np.random.default_rng(0)
        props = CellProperties(phi=np.full(w.n_spatial, 0.2),
                               kx=rng.uniform(0.1, 0.5, w.n_spatial),
                               ky=rng.uniform(0.1, 0.5, w.n_spatial))
        wells = ResolvedWells(
            inj_w=np.where(np.arange(w.n_spatial) == 0, 1.0, 0.0),
            prod_wi=np.where(np.arange(w.n_spatial) == w.n_spatial - 1,
                             0.01, 0.0),
            prod_bhp=np.full(w.n_spatial, 1000.0))
        state = random_state(w, seed=0)
        sys0 = assemble(w, state, props, wells, model())
        fx = {k: v.copy() for k, v in sys0.fluxes.items()}
        x0 = _pack(w, state, fx)
        jac = assemble(w, state, props, wells, model(),
                       fluxes=fx).jacobian_full.toarray()

        def res(x):
            st, fl = _unpack(w, x, state)
            return assemble(w, st, props, wells, model(),
                            fluxes=fl).residual_full

        fd = np.zeros_like(jac)
        for j in range(w.n_dofs):
            h = 1e-6 * max(1.0, abs(x0[j]))
            xp, xm = x0.copy(), x0.copy()
            xp[j] += h
            xm[j] -= h
            fd[:, j] = (res(xp) - res(xm)) / (2 * h)
        denom = np.maximum(1e-12, np.maximum(np.abs(jac), np.abs(fd)))
        assert np.max(np.abs(jac - fd) / denom) <= 1e-6

    def test_column_count_bookkeeping(self):
        w = nonmatching_window()
        sys_ = assemble(w, random_state(w), uniform_props(w.n_spatial),
                        ResolvedWells.none(w.n_spatial), model())
        assert sys_.jacobian_full.shape == (w.n_dofs, w.n_dofs)
        assert w.n_dofs == 2 * w.n_st + 2 * 2 * w.n_faces

    def test_bit_reproducible(self):
        w = nonmatching_window()
        state = random_state(w, seed=11)
        args = (w, state, uniform_props(w.n_spatial),
                ResolvedWells.none(w.n_spatial), model())
        a = assemble(*args)
        b = assemble(*args)
        assert np.array_equal(a.residual_full, b.residual_full)
        assert (a.jacobian_full != b.jacobian_full).nnz == 0


class TestSchurReduction:
    def test_reduced_matches_dense_unreduced(self):
        w = nonmatching_window()
        assert w.n_dofs <= 200
        state = random_state(w, seed=2)
        wells = ResolvedWells(
            inj_w=np.where(np.arange(w.n_spatial) == 0, 1.0, 0.0),
            prod_wi=np.where(np.arange(w.n_spatial) == w.n_spatial - 1,
                             0.5, 0.0),
            prod_bhp=np.full(w.n_spatial, 1000.0))
        sys_ = assemble(w, state, uniform_props(w.n_spatial), wells,
                        model())
        full = np.linalg.solve(sys_.jacobian_full.toarray(),
                               -sys_.residual_full)
        red = schur_reduce(sys_)
        dy = spla.spsolve(red.jacobian.tocsc(), -red.residual)
        df = red.back_substitute(dy)
        got = np.concatenate([dy, df])
        scale = np.max(np.abs(full))
        assert np.max(np.abs(got - full)) <= 1e-10 * scale

    def test_single_cell_reduction_is_identity(self):
        w = line_window(1)
        state = random_state(w)
        sys_ = assemble(w, state, uniform_props(1),
                        ResolvedWells.none(1), model())
        red = schur_reduce(sys_)
        assert red.jacobian.shape == (2, 2)
        assert np.allclose(red.jacobian.toarray(),
                           sys_.A.toarray())

    def test_matching_1d_reduced_sparsity_tridiagonal(self):
        w = line_window(5)
        state = random_state(w, seed=4)
        sys_ = assemble(w, state, uniform_props(5),
                        ResolvedWells.none(5), model())
        red = schur_reduce(sys_).jacobian.toarray()
        # block-tridiagonal in space: no coupling beyond nearest neighbor
        for i in range(5):
            for j in range(5):
                if abs(i - j) > 1:
                    blk = red[2 * i:2 * i + 2, 2 * j:2 * j + 2]
                    assert np.all(blk == 0.0)


class TestBackwardEulerEquivalence:
    """On a conforming grid with ratio 1 the reduced system IS the classic
    cell-centered two-phase backward-Euler discretization.  The oracle here
    is an independent, direct implementation of that scheme."""

    def _oracle_residual(self, p, s, pp, sp, h, area, dt, k, phi, vol, m,
                         dz=1.0):
        n = len(p)
        r = np.zeros(2 * n)
        for i in range(n):
            rw_c, _ = m.density("w", p[i])
            ro_c, _ = m.density("o", p[i])
            rw_p, _ = m.density("w", pp[i])
            ro_p, _ = m.density("o", pp[i])
            mw = phi * vol * (rw_c * s[i] - rw_p * sp[i])
            mo = phi * vol * (ro_c * (1 - s[i]) - ro_p * (1 - sp[i]))
            r[2 * i] += mw + mo
            r[2 * i + 1] += mw
        for i in range(n - 1):
            t = 2.0 * BETA_C * area * dt / (h / k[i] + h / k[i + 1])
            ut_o = t * (p[i] - p[i + 1])
            pc_l, _ = m.pc(s[i])
            pc_r, _ = m.pc(s[i + 1])
            ut_w = t * ((p[i] - pc_l) - (p[i + 1] - pc_r))
            lam_o = m.upwind_mobility("o", ut_o, s[i], s[i + 1],
                                      p[i], p[i + 1])[0]
            lam_w = m.upwind_mobility("w", ut_w, s[i], s[i + 1],
                                      p[i], p[i + 1])[0]
            uo, uw = lam_o * ut_o, lam_w * ut_w
            r[2 * i] += uo + uw
            r[2 * i + 2] -= uo + uw
            r[2 * i + 1] += uw
            r[2 * i + 3] -= uw
        return r

    def test_residual_row_for_row(self):
        n, h, dt = 6, 1.0, 1.0
        w = line_window(n, h=h, dt=dt)
        rng = np.random.default_rng(8)
        k = rng.uniform(10.0, 300.0, n)
        props = CellProperties(phi=np.full(n, 0.2), kx=k, ky=k.copy())
        m = model()
        state = random_state(w, seed=8)
        sys_ = assemble(w, state, props, ResolvedWells.none(n), m)
        red = schur_reduce(sys_)
        oracle = self._oracle_residual(
            state.p, state.s, state.trace_p, state.trace_s,
            h, w.faces.area[0], dt, k, 0.2, w.cell_vol[0], m)
        assert np.max(np.abs(red.residual - oracle)) <= \
            1e-11 * max(1.0, np.max(np.abs(oracle)))

    def test_jacobian_row_for_row(self):
        n, h, dt = 5, 1.0, 1.0
        w = line_window(n, h=h, dt=dt)
        rng = np.random.default_rng(9)
        k = rng.uniform(10.0, 300.0, n)
        props = CellProperties(phi=np.full(n, 0.2), kx=k, ky=k.copy())
        m = model()
        state = random_state(w, seed=9)
        sys_ = assemble(w, state, props, ResolvedWells.none(n), m)
        red = schur_reduce(sys_).jacobian.toarray()

        def oracle(x):
            return self._oracle_residual(
                x[0::2], x[1::2], state.trace_p, state.trace_s,
                h, w.faces.area[0], dt, k, 0.2, w.cell_vol[0], m)

        x0 = np.empty(2 * n)
        x0[0::2], x0[1::2] = state.p, state.s
        fd = np.zeros((2 * n, 2 * n))
        for j in range(2 * n):
            hj = 1e-6 * max(1.0, abs(x0[j]))
            xp, xm = x0.copy(), x0.copy()
            xp[j] += hj
            xm[j] -= hj
            fd[:, j] = (oracle(xp) - oracle(xm)) / (2 * hj)
        denom = np.maximum(1e-7, np.maximum(np.abs(red), np.abs(fd)))
        assert np.max(np.abs(red - fd) / denom) <= 1e-5


class TestDumps:
    def test_matrix_market_and_residual_rows(self, tmp_path):
        w = line_window(3)
        sys_ = assemble(w, random_state(w), uniform_props(3),
                        ResolvedWells.none(3), model())
        path = tmp_path / "jac.mtx"
        sys_.dump_matrix_market(str(path))
        assert path.exists() and path.stat().st_size > 0
        rows = sys_.residual_rows()
        assert len(rows) == 2 * w.n_st


def _pack(w, state, fluxes):
    x = np.empty(w.n_dofs)
    x[0:2 * w.n_st:2] = state.p
    x[1:2 * w.n_st:2] = state.s
    base = 2 * w.n_st
    for k, name in enumerate(("aux_o", "aux_w", "darcy_o", "darcy_w")):
        x[base + k::4] = fluxes[name]
    return x


def _unpack(w, x, template):
    st = StateField(p=x[:2 * w.n_st][0::2].copy(),
                    s=x[:2 * w.n_st][1::2].copy(),
                    trace_p=template.trace_p, trace_s=template.trace_s)
    fl = x[2 * w.n_st:]
    fluxes = {"aux_o": fl[0::4], "aux_w": fl[1::4],
              "darcy_o": fl[2::4], "darcy_w": fl[3::4]}
    return st, fluxes
