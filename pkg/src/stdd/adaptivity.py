"""Between-window adaptivity: indicators, classification, rebuild, transfer.

Regions are classified on a fixed coarse tiling of the reservoir.  Each tile
receives an identifier selecting its space and time resolution:

    1: fine in space and time        2: fine in space, coarse in time
    3: coarse in space, fine in time 4: coarse in space and time

Classification combines saturation delta-changes in space and time with the
normalized nonlinear residual of a cheap coarse predictor.  Solution
transfer between decompositions goes through the fine base grid with
pore-volume weighting, which preserves total water pore volume exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonIntegerRatio
from .mesh import Subdomain, _int_offset, _int_ratio


@dataclass(frozen=True)
class Tiling:
    """Fixed coarse tiling used as the classification granularity."""

    reservoir: tuple          # (x0, y0, x1, y1) in ft
    tile_hx: float
    tile_hy: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.reservoir
        _int_ratio(x1 - x0, self.tile_hx, NonIntegerRatio, "tiles in x")
        _int_ratio(y1 - y0, self.tile_hy, NonIntegerRatio, "tiles in y")

    @property
    def shape(self):
        x0, y0, x1, y1 = self.reservoir
        return (_int_ratio(x1 - x0, self.tile_hx, NonIntegerRatio, "x"),
                _int_ratio(y1 - y0, self.tile_hy, NonIntegerRatio, "y"))

    def tile_of(self, x, y):
        """Tile indices (ti, tj) containing points (x, y)."""
        x0, y0, _, _ = self.reservoir
        ntx, nty = self.shape
        ti = np.clip((np.asarray(x) - x0) // self.tile_hx, 0, ntx - 1)
        tj = np.clip((np.asarray(y) - y0) // self.tile_hy, 0, nty - 1)
        return ti.astype(int), tj.astype(int)


@dataclass(frozen=True)
class RefinementTable:
    """Identifier -> (hx, hy, dt) map; all ratios must divide the tiling."""

    levels: dict

    def __post_init__(self):
        if set(self.levels) != {1, 2, 3, 4}:
            raise ValueError("table must define identifiers 1..4")

    def resolution(self, identifier):
        return self.levels[identifier]


@dataclass
class IdentifierMap:
    """Per-tile identifiers with the indicator values that produced them."""

    identifiers: np.ndarray   # (ntx, nty) int, values in {1,2,3,4}
    eta: np.ndarray
    delta_s: np.ndarray
    delta_t: np.ndarray

    def rows(self):
        """Flat (tile_i, tile_j, identifier, eta, delta_s, delta_t) rows."""
        ntx, nty = self.identifiers.shape
        out = []
        for i in range(ntx):
            for j in range(nty):
                out.append((i, j, int(self.identifiers[i, j]),
                            float(self.eta[i, j]), float(self.delta_s[i, j]),
                            float(self.delta_t[i, j])))
        return out


@dataclass(frozen=True)
class Thresholds:
    """Classification thresholds in saturation units / normalized residual."""

    theta_ds: float = 0.05
    theta_dt: float = 0.05
    theta_eta: float = 1.0e-5


class BaseGrid:
    """Uniform fine reference grid carrying rock properties.

    All subdomain cells are axis-aligned unions of base cells, so every
    transfer between decompositions can be expressed as rasterize to the
    base grid followed by block averaging.
    """

    def __init__(self, reservoir, cell_size, dz=1.0):
        self.reservoir = tuple(float(v) for v in reservoir)
        self.hx, self.hy = float(cell_size[0]), float(cell_size[1])
        self.dz = float(dz)
        x0, y0, x1, y1 = self.reservoir
        self.nx = _int_ratio(x1 - x0, self.hx, NonIntegerRatio, "base nx")
        self.ny = _int_ratio(y1 - y0, self.hy, NonIntegerRatio, "base ny")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def cell_volume(self):
        return self.hx * self.hy * self.dz

    def block(self, cx, cy, hx, hy):
        """Index slices of the base cells covered by one subdomain cell."""
        x0, y0, _, _ = self.reservoir
        i0 = _int_offset(cx - hx / 2.0 - x0, self.hx, NonIntegerRatio,
                         "cell/base alignment in x")
        j0 = _int_offset(cy - hy / 2.0 - y0, self.hy, NonIntegerRatio,
                         "cell/base alignment in y")
        mi = _int_ratio(hx, self.hx, NonIntegerRatio, "cell/base ratio in x")
        mj = _int_ratio(hy, self.hy, NonIntegerRatio, "cell/base ratio in y")
        return slice(i0, i0 + mi), slice(j0, j0 + mj)

    def rasterize(self, window, values):
        """Spread per-spatial-cell values onto the base grid by injection."""
        out = np.empty(self.shape)
        for c in range(window.n_spatial):
            si, sj = self.block(window.cell_cx[c], window.cell_cy[c],
                                window.cell_hx[c], window.cell_hy[c])
            out[si, sj] = values[c]
        return out

    def average_to(self, window, base_field, weights=None):
        """Weighted block average of a base field onto a window's cells."""
        out = np.empty(window.n_spatial)
        for c in range(window.n_spatial):
            si, sj = self.block(window.cell_cx[c], window.cell_cy[c],
                                window.cell_hx[c], window.cell_hy[c])
            blk = base_field[si, sj]
            if weights is None:
                out[c] = blk.mean()
            else:
                wblk = weights[si, sj]
                out[c] = np.sum(wblk * blk) / np.sum(wblk)
        return out


def final_spatial(window, state):
    """Final-time-level (P, S) of a window as per-spatial-cell arrays."""
    fin = window.final_level_cells()
    p = np.empty(window.n_spatial)
    s = np.empty(window.n_spatial)
    p[window.st_spatial[fin]] = state.p[fin]
    s[window.st_spatial[fin]] = state.s[fin]
    return p, s


def residual_indicator(window, r_norm, tiling: Tiling):
    """Per-tile max of |normalized residual| over cells, levels, equations.

    `r_norm` is the interleaved normalized conservation residual of one
    assembly, taken at the warm start of a coarse trial window.
    """
    ntx, nty = tiling.shape
    eta = np.zeros((ntx, nty))
    cell = window.st_spatial
    ti, tj = tiling.tile_of(window.cell_cx[cell], window.cell_cy[cell])
    mag = np.maximum(np.abs(r_norm[0::2]), np.abs(r_norm[1::2]))
    np.maximum.at(eta, (ti, tj), mag)
    return eta


def delta_change(s_start, s_end, base: BaseGrid, tiling: Tiling):
    """Per-tile saturation deltas on the base grid.

    Returns (delta_s, delta_t): delta_t is the max per-cell change over the
    window; delta_s is the max absolute face difference of the final field,
    counting faces inside the tile and on its boundary.
    """
    ntx, nty = tiling.shape
    mx = _int_ratio(tiling.tile_hx, base.hx, NonIntegerRatio, "tile/base x")
    my = _int_ratio(tiling.tile_hy, base.hy, NonIntegerRatio, "tile/base y")

    def tile_max(field2d):
        v = field2d.reshape(ntx, mx, nty, my)
        return v.max(axis=(1, 3))

    d_t = tile_max(np.abs(s_end - s_start))

    d_s = np.zeros((ntx, nty))
    dx = np.abs(np.diff(s_end, axis=0))        # face between (i, j), (i+1, j)
    dy = np.abs(np.diff(s_end, axis=1))
    ii = np.repeat(np.arange(base.nx - 1), base.ny)
    jj = np.tile(np.arange(base.ny), base.nx - 1)
    np.maximum.at(d_s, (ii // mx, jj // my), dx.ravel())
    np.maximum.at(d_s, ((ii + 1) // mx, jj // my), dx.ravel())
    ii = np.repeat(np.arange(base.nx), base.ny - 1)
    jj = np.tile(np.arange(base.ny - 1), base.nx)
    np.maximum.at(d_s, (ii // mx, jj // my), dy.ravel())
    np.maximum.at(d_s, (ii // mx, (jj + 1) // my), dy.ravel())
    return d_s, d_t


def classify(eta, delta_s, delta_t, thresholds: Thresholds):
    """Assign Table-style identifiers from the per-tile indicators.

    Large delta in both space and time -> 1; space only -> 2; time only
    -> 3; neither -> 4.  A residual indicator above theta_eta forces 1.
    The 8-neighborhood of every identifier-1 tile is promoted to at least
    2 so a moving front cannot leave the fine region within one window.
    """
    big_s = delta_s > thresholds.theta_ds
    big_t = delta_t > thresholds.theta_dt
    ids = np.full(eta.shape, 4, dtype=int)
    ids[big_t] = 3
    ids[big_s] = 2
    ids[big_s & big_t] = 1
    ids[eta > thresholds.theta_eta] = 1

    ones = ids == 1
    near = np.zeros_like(ones)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            src = ones[max(0, -di):ones.shape[0] - max(0, di),
                       max(0, -dj):ones.shape[1] - max(0, dj)]
            near[max(0, di):ones.shape[0] - max(0, -di),
                 max(0, dj):ones.shape[1] - max(0, -dj)] |= src
    ids[near] = np.minimum(ids[near], 2)
    return IdentifierMap(ids, np.asarray(eta, dtype=float),
                         np.asarray(delta_s, dtype=float),
                         np.asarray(delta_t, dtype=float))


def decompose(idmap: IdentifierMap, tiling: Tiling, table: RefinementTable):
    """Tile the reservoir with rectangular subdomains of uniform identifier.

    Greedy maximal rectangles in row-major tile order: extend right while
    the identifier matches, then extend down while the whole span matches.
    """
    ids = idmap.identifiers
    ntx, nty = ids.shape
    taken = np.zeros_like(ids, dtype=bool)
    x0, y0, _, _ = tiling.reservoir
    subs = []
    for j in range(nty):
        for i in range(ntx):
            if taken[i, j]:
                continue
            k = ids[i, j]
            i1 = i + 1
            while i1 < ntx and not taken[i1, j] and ids[i1, j] == k:
                i1 += 1
            j1 = j + 1
            while j1 < nty and np.all(~taken[i:i1, j1]) \
                    and np.all(ids[i:i1, j1] == k):
                j1 += 1
            taken[i:i1, j:j1] = True
            hx, hy, dt = table.resolution(int(k))
            subs.append(Subdomain(
                region=(x0 + i * tiling.tile_hx, y0 + j * tiling.tile_hy,
                        x0 + i1 * tiling.tile_hx, y0 + j1 * tiling.tile_hy),
                cell_size=(hx, hy), dt=dt, identifier=int(k)))
    return subs


def transfer_state(old_window, final_p, final_s, new_window, base: BaseGrid,
                   phi_base):
    """Map a final window state onto a new decomposition's spatial cells.

    Coarse-to-fine is constant injection; fine-to-coarse averages with
    pore-volume weights for saturation (exactly conserving water pore
    volume) and, as a smoothness heuristic, for pressure too.
    """
    pv = phi_base * base.cell_volume
    p_base = base.rasterize(old_window, final_p)
    s_base = base.rasterize(old_window, final_s)
    return (base.average_to(new_window, p_base, pv),
            base.average_to(new_window, s_base, pv))


def upscale_permeability(k_block, hx, hy, direction, method="flow"):
    """Effective directional permeability of one block of fine cells.

    `k_block` is the (mx, my) fine permeability for the flow direction.
    "flow": impose a unit pressure drop across the block in `direction`
    with no-flow lateral boundaries, solve the single-phase two-point flux
    problem, and return the flux-equivalent permeability.  "layered":
    harmonic mean along the direction, arithmetic across it.
    """
    k = np.asarray(k_block, dtype=float)
    if direction == "y":
        return upscale_permeability(k.T, hy, hx, "x", method)
    mx, my = k.shape
    if method == "layered":
        return float(np.mean(mx / np.sum(1.0 / k, axis=0)))
    if method != "flow":
        raise ValueError(f"unknown upscaling method {method!r}")
    if mx == 1:
        return float(np.mean(k))

    # Two-point flux problem: p = 1 on the left edge, 0 on the right,
    # no-flow top/bottom.  Unit conversion constants cancel in K_eff.
    n = mx * my
    idx = np.arange(n).reshape(mx, my)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    rhs = np.zeros(n)

    def add_face(a, b, t):
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((-t, -t))
        diag[a] += t
        diag[b] += t

    tx = (hy / hx) * 2.0 * k[:-1, :] * k[1:, :] / (k[:-1, :] + k[1:, :])
    for i in range(mx - 1):
        for j in range(my):
            add_face(idx[i, j], idx[i + 1, j], tx[i, j])
    ty = (hx / hy) * 2.0 * k[:, :-1] * k[:, 1:] / (k[:, :-1] + k[:, 1:])
    for i in range(mx):
        for j in range(my - 1):
            add_face(idx[i, j], idx[i, j + 1], ty[i, j])
    # half-cell transmissibilities tie the edge columns to the boundary
    tb_l = (hy / hx) * 2.0 * k[0, :]
    tb_r = (hy / hx) * 2.0 * k[-1, :]
    diag[idx[0, :]] += tb_l
    rhs[idx[0, :]] += tb_l * 1.0
    diag[idx[-1, :]] += tb_r

    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    p = spla.spsolve(mat, rhs)
    q_in = float(np.sum(tb_l * (1.0 - p[idx[0, :]])))
    # q = K_eff * (my * hy) * (dp=1) / (mx * hx), same face scaling
    return q_in * (mx * hx) / (my * hy)


@dataclass
class UpscaledField:
    """Per-tile effective (Kx, Ky) with the producing method recorded."""

    kx: np.ndarray
    ky: np.ndarray
    method: str
    tiling: Tiling = None


def upscale_field(base: BaseGrid, kx_base, ky_base, tiling: Tiling,
                  method="flow"):
    """Upscale the base permeability to every tile of the tiling."""
    ntx, nty = tiling.shape
    mx = _int_ratio(tiling.tile_hx, base.hx, NonIntegerRatio, "tile/base x")
    my = _int_ratio(tiling.tile_hy, base.hy, NonIntegerRatio, "tile/base y")
    kx = np.empty((ntx, nty))
    ky = np.empty((ntx, nty))
    for i in range(ntx):
        for j in range(nty):
            si = slice(i * mx, (i + 1) * mx)
            sj = slice(j * my, (j + 1) * my)
            kx[i, j] = upscale_permeability(kx_base[si, sj], base.hx,
                                            base.hy, "x", method)
            ky[i, j] = upscale_permeability(ky_base[si, sj], base.hx,
                                            base.hy, "y", method)
    return UpscaledField(kx, ky, method, tiling)


def cell_permeability(window, base: BaseGrid, kx_base, ky_base,
                      method="flow", cache=None):
    """Per-cell (kx, ky) for a window, upscaling blocks coarser than base.

    `cache` maps block index bounds to computed values so repeated
    decompositions reuse earlier solves.
    """
    kx = np.empty(window.n_spatial)
    ky = np.empty(window.n_spatial)
    if cache is None:
        cache = {}
    for c in range(window.n_spatial):
        si, sj = base.block(window.cell_cx[c], window.cell_cy[c],
                            window.cell_hx[c], window.cell_hy[c])
        if si.stop - si.start == 1 and sj.stop - sj.start == 1:
            kx[c] = kx_base[si.start, sj.start]
            ky[c] = ky_base[si.start, sj.start]
            continue
        key = (si.start, si.stop, sj.start, sj.stop)
        if key not in cache:
            cache[key] = (
                upscale_permeability(kx_base[si, sj], base.hx, base.hy,
                                     "x", method),
                upscale_permeability(ky_base[si, sj], base.hx, base.hy,
                                     "y", method))
        kx[c], ky[c] = cache[key]
    return kx, ky
