"""Simulation driver: resolve a config, march the windows, emit artifacts.

Also provides the comparison report between two finished run directories.
"""

from __future__ import annotations

import math
import os

import numpy as np

from . import output
from .adaptivity import (BaseGrid, IdentifierMap, RefinementTable,
                         Thresholds, Tiling, cell_permeability, classify,
                         decompose, delta_change, final_spatial,
                         residual_indicator, transfer_state)
from .assembly import CellProperties, ResolvedWells, StateField, assemble
from .config import RunConfig
from .errors import MismatchedProblem, NonConvergence, StddError
from .mesh import Subdomain, build_window
from .physics import (BETA_C, OIL, STB_TO_FT3, WATER, BrooksCoreyModel,
                      FluidModel, FluidRockModel, property_curves)
from .permfields import load_permeability, make_field
from .solver import (NewtonConfig, WindowController, march,
                     newton_solve_window)


class Problem:
    """A RunConfig resolved into concrete fields and closures."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.base = BaseGrid(cfg.reservoir, cfg.base_cell, cfg.dz)
        self.tiling = Tiling(cfg.reservoir, cfg.tile[0], cfg.tile[1])
        self.table = RefinementTable(dict(cfg.table))
        self.thresholds = Thresholds(**cfg.thresholds)
        self.model = FluidRockModel(
            fluid=FluidModel(**cfg.fluid),
            relcap=BrooksCoreyModel(**cfg.relcap),
            mobility_model=cfg.mobility_model,
            use_capillarity=cfg.use_capillarity)
        self.phi_base = np.full(self.base.shape, cfg.phi)
        self.kx_base, self.ky_base = self._fields(cfg)
        self._perm_cache = {}

    def _fields(self, cfg):
        p = dict(cfg.permeability)
        kind = p.pop("kind", "uniform")
        if kind == "file":
            layout = p.get("layout", "row-major")
            kx = load_permeability(p["kx_path"], self.base.shape, layout)
            ky_path = p.get("ky_path")
            ky = (load_permeability(ky_path, self.base.shape, layout)
                  if ky_path else kx.copy())
            return kx, ky
        seed = p.pop("seed", 0)
        k = make_field(kind, self.base.shape, seed, **p)
        return k, k.copy()

    # -- per-window closures ----------------------------------------------

    def props_for(self, window):
        phi = self.base.average_to(window, self.phi_base)
        kx, ky = cell_permeability(window, self.base, self.kx_base,
                                   self.ky_base, self.cfg.upscaling,
                                   self._perm_cache)
        return CellProperties(phi=phi, kx=kx, ky=ky)

    def wells_for(self, window):
        cfg = self.cfg
        n = window.n_spatial
        wells = ResolvedWells.none(n)
        rho_w_ref = self.model.fluid.rho_w_ref
        for w in cfg.wells:
            cells = self._well_cells(window, w)
            if w.kind == "rate-water-injector":
                pv = (window.cell_vol[cells]
                      * self.base.average_to(window, self.phi_base)[cells])
                mass_rate = w.value * STB_TO_FT3 * rho_w_ref   # lb/day
                wells.inj_w[cells] += mass_rate * pv / np.sum(pv)
            else:
                kx, ky = cell_permeability(
                    window, self.base, self.kx_base, self.ky_base,
                    self.cfg.upscaling, self._perm_cache)
                # the completion spans the whole tile, so the equivalent
                # radius uses the tile diagonal; this keeps the index
                # positive and independent of the local refinement level
                re = 0.14 * math.hypot(*cfg.tile)
                if re <= w.r_w:
                    raise StddError(
                        f"well radius {w.r_w} ft too large for tile {cfg.tile}")
                area = window.cell_hx[cells] * window.cell_hy[cells]
                wi_tile = (2.0 * math.pi * BETA_C
                           * np.sqrt(kx[cells] * ky[cells]) * cfg.dz
                           / math.log(re / w.r_w))
                wells.prod_wi[cells] += wi_tile * area / np.sum(area)
                wells.prod_bhp[cells] = w.value
        return wells

    def _well_cells(self, window, w):
        """Cells whose centers fall in the well tile, else the enclosing cell."""
        x0, y0, _, _ = self.cfg.reservoir
        i, j = w.tile
        bx0 = x0 + i * self.cfg.tile[0]
        bx1 = bx0 + self.cfg.tile[0]
        by0 = y0 + j * self.cfg.tile[1]
        by1 = by0 + self.cfg.tile[1]
        cx, cy = window.cell_cx, window.cell_cy
        inside = np.nonzero((cx > bx0) & (cx < bx1)
                            & (cy > by0) & (cy < by1))[0]
        if len(inside):
            return inside
        mx, my = (bx0 + bx1) / 2.0, (by0 + by1) / 2.0
        host = np.nonzero(
            (np.abs(cx - mx) <= window.cell_hx / 2.0)
            & (np.abs(cy - my) <= window.cell_hy / 2.0))[0]
        return host[:1]

    # -- decompositions ---------------------------------------------------

    def uniform_subdomains(self, identifier):
        hx, hy, dt = self.table.resolution(identifier)
        return [Subdomain(self.cfg.reservoir, (hx, hy), dt,
                          identifier=identifier)]

    def static_idmap(self):
        """Fine inside the configured box, coarse elsewhere; no buffering."""
        ntx, nty = self.tiling.shape
        ids = np.full((ntx, nty), 4, dtype=int)
        fx0, fy0, fx1, fy1 = self.cfg.static_fine_box
        x0, y0, _, _ = self.cfg.reservoir
        for i in range(ntx):
            for j in range(nty):
                cx = x0 + (i + 0.5) * self.cfg.tile[0]
                cy = y0 + (j + 0.5) * self.cfg.tile[1]
                if fx0 < cx < fx1 and fy0 < cy < fy1:
                    ids[i, j] = 1
        z = np.zeros((ntx, nty))
        return IdentifierMap(ids, z, z.copy(), z.copy())


class DynamicController:
    """Reclassifies the decomposition between windows.

    Indicators for the upcoming window come from a cheap predictor: an
    all-coarse trial window starting at the new time is solved, and the
    predicted saturation deltas say where the front will move *during*
    the window, so refinement leads the front instead of trailing it.
    The trial's warm-start residual provides the residual indicator.
    """

    def __init__(self, problem: Problem, newton_cfg: NewtonConfig):
        self.pb = problem
        self.newton_cfg = newton_cfg
        self.idmap = self._classify_for(0.0, None, None, None)
        self.subs = decompose(self.idmap, problem.tiling, problem.table)
        self.idmaps = [self.idmap]
        self._escalated = False

    def decomposition(self, window_index, t_start):
        return self.subs

    def transfer(self, old_window, final_p, final_s, new_window):
        return transfer_state(old_window, final_p, final_s, new_window,
                              self.pb.base, self.pb.phi_base)

    def _classify_for(self, t_next, window, fin_p, fin_s):
        """Identifier map for the window starting at `t_next`."""
        pb = self.pb
        cfg = pb.cfg
        d_next = min(cfg.delta_t, cfg.horizon - t_next)
        trial = build_window(pb.uniform_subdomains(4), d_next,
                             cfg.reservoir, t_start=t_next, dz=cfg.dz)
        if window is None:
            tp = np.full(trial.n_spatial, cfg.initial_pressure)
            ts = np.full(trial.n_spatial, cfg.initial_saturation)
            s_now = np.full(pb.base.shape, cfg.initial_saturation)
        else:
            tp, ts = transfer_state(window, fin_p, fin_s, trial, pb.base,
                                    pb.phi_base)
            s_now = pb.base.rasterize(window, fin_s)

        trial_state = StateField.from_trace(trial, tp, ts)
        sys_ = assemble(trial, trial_state, pb.props_for(trial),
                        pb.wells_for(trial), pb.model)
        eta = residual_indicator(trial, sys_.r_norm, pb.tiling)

        try:
            sol, _ = newton_solve_window(
                trial, pb.props_for(trial), pb.wells_for(trial), tp, ts,
                pb.model, self.newton_cfg)
            _, pred_s = final_spatial(trial, sol)
            s_pred = pb.base.rasterize(trial, pred_s)
        except NonConvergence:
            # predictor failed: refine everywhere rather than guess
            big = np.full(pb.tiling.shape,
                          pb.thresholds.theta_ds + 1.0)
            return classify(eta, big, big.copy(), pb.thresholds)

        d_s_now, _ = delta_change(s_now, s_now, pb.base, pb.tiling)
        d_s_pred, d_t = delta_change(s_now, s_pred, pb.base, pb.tiling)
        return classify(eta, np.maximum(d_s_now, d_s_pred), d_t,
                        pb.thresholds)

    def after_window(self, window, state, entry):
        cfg = self.pb.cfg
        t_next = window.t_end
        if cfg.horizon - t_next <= 1.0e-9 * max(1.0, cfg.horizon):
            return
        fin_p, fin_s = final_spatial(window, state)
        self.idmap = self._classify_for(t_next, window, fin_p, fin_s)
        self.subs = decompose(self.idmap, self.pb.tiling, self.pb.table)
        self.idmaps.append(self.idmap)
        self._escalated = False

    def escalate(self, window_index, t_start):
        if self._escalated:
            return None
        self._escalated = True
        promote = {1: 1, 2: 1, 3: 1, 4: 2}
        ids = np.vectorize(promote.get)(self.idmap.identifiers)
        self.idmap = IdentifierMap(ids, self.idmap.eta, self.idmap.delta_s,
                                   self.idmap.delta_t)
        self.subs = decompose(self.idmap, self.pb.tiling, self.pb.table)
        self.idmaps[-1] = self.idmap
        return self.subs


def window_mass(window, state, props, wells, model):
    """(injected, produced water, produced oil, water in place at end/start).

    Masses in lb over the window; "in place" values are snapshots at the
    window's final level and entry trace.
    """
    sp_idx = window.st_spatial
    injected = float(np.sum(wells.inj_w[sp_idx] * window.st_dt))
    wi = wells.prod_wi[sp_idx]
    dd = state.p - wells.prod_bhp[sp_idx]
    lw = model.mobility(WATER, state.s, state.p)[0]
    lo = model.mobility(OIL, state.s, state.p)[0]
    produced_w = float(np.sum(wi * lw * dd * window.st_dt))
    produced_o = float(np.sum(wi * lo * dd * window.st_dt))

    def in_place(p, s):
        rho = model.density(WATER, p)[0]
        return float(np.sum(props.phi * rho * s * window.cell_vol))

    fp, fs = final_spatial(window, state)
    return (injected, produced_w, produced_o,
            in_place(fp, fs), in_place(state.trace_p, state.trace_s))


def run(cfg: RunConfig, outdir, *, emit_vtk=True):
    """Execute one configured simulation; returns the summary dict.

    Artifacts: resolved config, property curves, permeability field,
    per-window saturation/pressure snapshots (CSV and VTK), identifier
    maps (adaptive modes), solver ledger, and run_summary.json.  On a
    convergence failure, everything produced so far is flushed alongside
    a FAILED marker before the exception propagates.
    """
    os.makedirs(outdir, exist_ok=True)
    pb = Problem(cfg)
    base = pb.base
    origin = (cfg.reservoir[0], cfg.reservoir[1])

    output.write_summary(os.path.join(outdir, "config.json"), cfg.to_dict())
    output.write_curves_csv(os.path.join(outdir, "curves.csv"),
                            property_curves(pb.model))
    output.write_grid_csv(os.path.join(outdir, "perm_kx.csv"), pb.kx_base,
                          origin, cfg.base_cell, name="kx")

    ncfg = NewtonConfig(tol=cfg.newton.get("tol", 1.0e-6),
                        max_iters=cfg.newton.get("max_iters", 15),
                        damping=cfg.newton.get("damping", True),
                        max_ds=cfg.newton.get("max_ds", 0.2))

    if cfg.mode == "uniform-fine":
        controller = WindowController(pb.uniform_subdomains(1))
        delta_t_run = pb.table.resolution(1)[2]
    elif cfg.mode == "uniform-coarse":
        controller = WindowController(pb.uniform_subdomains(4))
        delta_t_run = pb.table.resolution(4)[2]
    elif cfg.mode == "static-dd":
        subs = decompose(pb.static_idmap(), pb.tiling, pb.table)
        controller = _TransferController(pb, subs)
        delta_t_run = cfg.delta_t
    else:
        controller = DynamicController(pb, ncfg)
        delta_t_run = cfg.delta_t

    def initial_trace(window):
        n = window.n_spatial
        return (np.full(n, cfg.initial_pressure),
                np.full(n, cfg.initial_saturation))

    snapshots = []
    balance = {"injected": 0.0, "produced_w": 0.0, "produced_o": 0.0,
               "initial_w": None, "final_w": 0.0}

    def observer(window, state, entry):
        props = pb.props_for(window)
        wells = pb.wells_for(window)
        inj, pw, po, w_end, w_start = window_mass(window, state, props,
                                                  wells, pb.model)
        balance["injected"] += inj
        balance["produced_w"] += pw
        balance["produced_o"] += po
        if balance["initial_w"] is None:
            balance["initial_w"] = w_start
        balance["final_w"] = w_end

        idx = window.window_index
        fp, fs = final_spatial(window, state)
        s2d = base.rasterize(window, fs)
        p2d = base.rasterize(window, fp)
        sw_name = f"snap_sw_{idx:03d}.csv"
        output.write_grid_csv(os.path.join(outdir, sw_name), s2d, origin,
                              cfg.base_cell, name="sw")
        output.write_grid_csv(os.path.join(outdir, f"snap_p_{idx:03d}.csv"),
                              p2d, origin, cfg.base_cell, name="p")
        if emit_vtk:
            output.write_vtk_rectilinear(
                os.path.join(outdir, f"snap_{idx:03d}.vtk"),
                {"sw": s2d, "p": p2d}, origin, cfg.base_cell,
                title=f"t={window.t_end:g} days")
        if cfg.emit_fine_levels:
            _emit_fine_levels(outdir, window, state, base, origin, cfg)
        snapshots.append({"index": idx, "time": window.t_end,
                          "sw": sw_name, "p": f"snap_p_{idx:03d}.csv"})
        if isinstance(controller, (DynamicController, _TransferController)):
            idmap = (controller.idmaps[idx]
                     if idx < len(controller.idmaps) else None)
            if idmap is not None:
                output.write_idmap_csv(
                    os.path.join(outdir, f"idmap_{idx:03d}.csv"), idmap)

    try:
        ledger, last_window, last_state = march(
            cfg.horizon, delta_t_run, cfg.reservoir, controller, pb.model,
            pb.props_for, pb.wells_for, initial_trace, ncfg,
            observer=observer, dz=cfg.dz)
    except NonConvergence as exc:
        if getattr(exc, "ledger", None) is not None:
            output.write_ledger_csv(os.path.join(outdir, "ledger.csv"),
                                    exc.ledger)
        output.mark_failure(outdir, str(exc))
        raise

    output.write_ledger_csv(os.path.join(outdir, "ledger.csv"), ledger)
    accumulated = balance["final_w"] - balance["initial_w"]
    net = balance["injected"] - balance["produced_w"] - accumulated
    rel = abs(net) / max(abs(balance["injected"]), 1.0e-30)
    summary = {
        "label": cfg.label,
        "mode": cfg.mode,
        "reservoir": list(cfg.reservoir),
        "base_shape": list(base.shape),
        "base_cell": list(cfg.base_cell),
        "horizon": cfg.horizon,
        "delta_t": cfg.delta_t,
        "permeability": cfg.permeability,
        "wells": [{"tile": list(w.tile), "kind": w.kind, "value": w.value}
                  for w in cfg.wells],
        "snapshots": snapshots,
        "windows": len(ledger.entries),
        "iterations": sum(e.iterations for e in ledger.entries),
        "cost_metric": ledger.cost_metric,
        "total_wall_ms": ledger.total_wall_ms,
        "mass_balance": {**balance, "accumulated": accumulated,
                         "relative_error": rel},
    }
    output.write_summary(os.path.join(outdir, "run_summary.json"), summary)
    return summary


class _TransferController(WindowController):
    """Fixed decomposition with base-grid transfer and idmap emission."""

    def __init__(self, problem, subdomains, idmap=None):
        super().__init__(subdomains)
        self.pb = problem
        self.idmaps = [idmap if idmap is not None
                       else problem.static_idmap()]

    def transfer(self, old_window, final_p, final_s, new_window):
        return transfer_state(old_window, final_p, final_s, new_window,
                              self.pb.base, self.pb.phi_base)

    def after_window(self, window, state, entry):
        self.idmaps.append(self.idmaps[-1])


def _emit_fine_levels(outdir, window, state, base, origin, cfg):
    """One saturation raster per distinct interior time of the window."""
    times = np.unique(np.round(window.st_t_end, 9))
    for t in times:
        vals = np.empty(window.n_spatial)
        for c in range(window.n_spatial):
            cells = np.nonzero((window.st_spatial == c)
                               & (window.st_t_end >= t - 1.0e-9))[0]
            vals[c] = state.s[cells[np.argmin(window.st_t_end[cells])]]
        s2d = base.rasterize(window, vals)
        name = f"fine_sw_w{window.window_index:03d}_t{t:09.3f}.csv"
        output.write_grid_csv(os.path.join(outdir, name), s2d, origin,
                              cfg.base_cell, name="sw")


# -- comparison ------------------------------------------------------------

def compare(dir_a, dir_b):
    """Cost and accuracy comparison of two finished runs.

    Both runs must describe the same physical problem (reservoir, base
    grid, horizon, wells, permeability source).  Saturation differences
    are computed at every common snapshot time; L2 is the RMS over base
    cells.
    """
    sa = output.read_summary(os.path.join(dir_a, "run_summary.json"))
    sb = output.read_summary(os.path.join(dir_b, "run_summary.json"))
    for key in ("reservoir", "base_shape", "horizon", "wells",
                "permeability"):
        if sa[key] != sb[key]:
            raise MismatchedProblem(
                f"{key} differs: {sa[key]!r} vs {sb[key]!r}")

    times_a = {round(s["time"], 9): s for s in sa["snapshots"]}
    times_b = {round(s["time"], 9): s for s in sb["snapshots"]}
    common = sorted(set(times_a) & set(times_b))
    diffs = []
    for t in common:
        fa, _, _ = output.read_grid_csv(
            os.path.join(dir_a, times_a[t]["sw"]))
        fb, _, _ = output.read_grid_csv(
            os.path.join(dir_b, times_b[t]["sw"]))
        d = fa - fb
        diffs.append({"time": t,
                      "linf": float(np.max(np.abs(d))),
                      "l2": float(np.sqrt(np.mean(d * d)))})
    return {
        "a": {"label": sa["label"], "mode": sa["mode"],
              "cost_metric": sa["cost_metric"],
              "wall_ms": sa["total_wall_ms"]},
        "b": {"label": sb["label"], "mode": sb["mode"],
              "cost_metric": sb["cost_metric"],
              "wall_ms": sb["total_wall_ms"]},
        "cost_ratio": sa["cost_metric"] / max(sb["cost_metric"], 1),
        "wall_ratio": (sa["total_wall_ms"]
                       / max(sb["total_wall_ms"], 1.0e-9)),
        "saturation_differences": diffs,
    }
