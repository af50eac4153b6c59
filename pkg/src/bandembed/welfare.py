"""Weight functions: tiles pay tax to the integer points near tile boundaries.

Every tile W(n) owns the budget u0(n) = |Int_L0 W(n)| / A and every integer point p
needs v0(p) = alpha3(d(p, boundary)).  The tiles are visited along a spiral of
offsets m_1 = 0, m_2, ... and at step l every tile pays its target n + m_l as much
as it can.  The payments are then squashed into weights in [0, 1] by the F and G
maps below.

Everything lives on a finite window of integer points.  Points outside the window
are treated as needing nothing, so the table agrees with the infinite-domain
construction only approximately near the window edges; the properties are asserted
on the safe interior (the window shrunk by 2 R0), where the usual counting argument
still applies verbatim.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convexgeom import inner_parallel

# fixed piecewise-linear ramps


def alpha3(t, L0):
    """3 for t <= L0, 0 for t >= L0 + 1, linear between."""
    return 3.0 * np.clip(L0 + 1.0 - np.asarray(t, dtype=float), 0.0, 1.0)


def alpha4(t, l0):
    """2 l0 for t <= 0, 1 for t >= 1, linear between."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 2.0 * l0 - (2.0 * l0 - 1.0) * t


def alpha5(t):
    """0 for t <= 1, 1 for t >= 2, linear between."""
    return np.clip(np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)


def spiral(k, R0):
    """All m in Z^k with |m| <= R0, ordered by |m|^2 and then lexicographically."""
    r = int(math.floor(R0))
    axes = [np.arange(-r, r + 1)] * k
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    n2 = (grid * grid).sum(axis=1)
    grid, n2 = grid[n2 <= R0 * R0 + 1e-9], n2[n2 <= R0 * R0 + 1e-9]
    order = np.lexsort(tuple(grid[:, j] for j in range(k - 1, -1, -1)) + (n2,))
    return grid[order].astype(np.int64)


def fg_transform(omega, l0=None):
    """G(F(x)) row by row: y_l = alpha4(max_{j>l} y_j) x_l from the top down, then alpha5."""
    x = np.atleast_2d(np.asarray(omega, dtype=float))
    l0 = x.shape[1] if l0 is None else l0
    y = np.zeros_like(x)
    run = np.zeros(len(x))
    for l in range(x.shape[1] - 1, -1, -1):
        y[:, l] = alpha4(run, l0) * x[:, l]
        run = np.maximum(run, y[:, l])
    return alpha5(y), y


def int_volume(P, L0):
    if P.empty:
        return 0.0
    if P.k == 1:
        return max(0.0, P.volume() - 2 * L0)
    inner = inner_parallel(P, L0)
    return 0.0 if inner.empty else float(inner.volume())


class _Grid:
    """The integer points of a box window, flattened in C order."""

    def __init__(self, window):
        lo = np.ceil(window.vertices.min(axis=0) - 1e-9).astype(np.int64)
        hi = np.floor(window.vertices.max(axis=0) + 1e-9).astype(np.int64)
        self.lo, self.hi = lo, hi
        self.shape = tuple(int(v) for v in hi - lo + 1)
        axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
        self.points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))

    def index(self, pts):
        """Flat index of each point, -1 outside."""
        pts = np.asarray(pts, dtype=np.int64).reshape(-1, len(self.lo))
        rel = pts - self.lo
        ok = np.all((rel >= 0) & (rel < np.array(self.shape)), axis=1)
        flat = np.full(len(pts), -1, dtype=np.int64)
        if ok.any():
            flat[ok] = np.ravel_multi_index(tuple(rel[ok].T), self.shape)
        return flat


@dataclass
class WeightTable:
    window: object
    A: float
    L0: float
    R0: float
    l0: int
    spiral: np.ndarray
    keys: np.ndarray          # (T, k) tile labels
    u0: np.ndarray            # (T,)
    points: np.ndarray        # (P, k) integer points of the window
    dist: np.ndarray          # (P,) distance to the tile boundaries
    v0: np.ndarray            # (P,)
    omega: np.ndarray         # (T, l0) payment of tile n to n + m_l at step l
    u_final: np.ndarray
    v_final: np.ndarray
    w: np.ndarray = None      # (T, l0) weights w_{m_l}(n)
    y: np.ndarray = None
    info: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.keys.shape[1]

    def key_index(self):
        if not hasattr(self, "_kmap"):
            self._kmap = {tuple(int(v) for v in row): j for j, row in enumerate(self.keys)}
        return self._kmap

    def point_index(self):
        if not hasattr(self, "_grid"):
            self._grid = _Grid(self.window)
        return self._grid

    def u_trace(self, l):
        """u_l for all tiles (l = 0 .. l0)."""
        return self.u0 - self.omega[:, :l].sum(axis=1)

    def received(self, p, upto=None):
        """Sum over l <= upto of omega_l(p - m_l)."""
        upto = self.l0 if upto is None else upto
        km = self.key_index()
        tot = 0.0
        for l in range(upto):
            j = km.get(tuple(int(v) for v in np.asarray(p) - self.spiral[l]))
            if j is not None:
                tot += self.omega[j, l]
        return tot

    def weight(self, n, m):
        """w_m(x, n); zero for |m| > R0 or n not a tile."""
        j = self.key_index().get(tuple(int(v) for v in np.atleast_1d(n)))
        if j is None:
            return 0.0
        hit = np.flatnonzero((self.spiral == np.asarray(m)).all(axis=1))
        return float(self.w[j, hit[0]]) if len(hit) else 0.0

    def safe_mask(self, pts=None):
        """Integer points at box distance >= 2 R0 from the window edges."""
        pts = self.points if pts is None else np.asarray(pts).reshape(-1, self.k)
        lo = self.window.vertices.min(axis=0) + 2 * self.R0
        hi = self.window.vertices.max(axis=0) - 2 * self.R0
        return np.all((pts >= lo - 1e-9) & (pts <= hi + 1e-9), axis=1)

    def sparse_weights(self):
        out = {}
        for j, n in enumerate(self.keys):
            for l in np.flatnonzero(self.w[j] > 0):
                out[(tuple(int(v) for v in n), tuple(int(v) for v in self.spiral[l]))] = float(self.w[j, l])
        return out

    def to_dict(self):
        return {"A": self.A, "L0": self.L0, "R0": self.R0, "l0": self.l0,
                "keys": self.keys.tolist(), "u0": self.u0.tolist(),
                "weights": [[list(n), list(m), v] for (n, m), v in sorted(self.sparse_weights().items())]}


def boundary_distance(snap, pts):
    return snap.dist_to_boundary(pts)


def allocate(snap, A, L0, R0) -> WeightTable:
    """The tax recursion over the integer points of the snapshot window, then GF."""
    if A <= 0:
        raise ValueError("A must be positive")
    k = snap.k
    grid = _Grid(snap.window)
    keys = np.array(snap.keys(), dtype=np.int64).reshape(-1, k)
    u0 = np.array([int_volume(snap.tiles[tuple(int(v) for v in n)], L0) for n in keys]) / A
    dist = boundary_distance(snap, grid.points)
    return allocate_raw(snap.window, keys, u0, alpha3(dist, L0), R0, A=A, L0=L0, dist=dist)


def allocate_raw(window, keys, u0, v0, R0, A=1.0, L0=0.0, dist=None) -> WeightTable:
    """The recursion from explicit budgets u0 (per key) and needs v0 (per window point)."""
    grid = _Grid(window)
    keys = np.asarray(keys, dtype=np.int64).reshape(-1, len(grid.lo))
    u0 = np.asarray(u0, dtype=float).reshape(len(keys))
    v0 = np.asarray(v0, dtype=float).reshape(len(grid.points))
    sp = spiral(keys.shape[1], R0)
    l0 = len(sp)
    u = u0.copy()
    v = v0.copy()
    omega = np.zeros((len(keys), l0))
    for l in range(l0):
        tgt = grid.index(keys + sp[l])
        ok = tgt >= 0
        if not ok.any():
            continue
        t = tgt[ok]
        pay = np.minimum(u[ok], v[t])
        omega[ok, l] = pay
        u[ok] = u[ok] - pay
        v[t] = v[t] - pay
    if dist is None:
        dist = np.where(v0 >= 3.0, 0.0, np.inf)
    table = WeightTable(window, float(A), float(L0), float(R0), l0, sp, keys, u0, grid.points,
                        np.asarray(dist, dtype=float), v0, omega, u, v)
    table.w, table.y = fg_transform(omega, l0)
    return table


def allocate_reference(snap, A, L0, R0):
    """Straightforward dictionary version of the recursion, for cross-checking."""
    k = snap.k
    grid = _Grid(snap.window)
    keys = [tuple(n) for n in snap.keys()]
    u = {n: int_volume(snap.tiles[n], L0) / A for n in keys}
    dist = boundary_distance(snap, grid.points)
    v = {tuple(int(c) for c in p): float(alpha3(d, L0)) for p, d in zip(grid.points, dist)}
    ms = spiral(k, R0)
    omega = {}
    for l, m in enumerate(ms):
        step = {}
        for n in keys:
            p = tuple(a + int(b) for a, b in zip(n, m))
            if p in v:
                step[n] = min(u[n], v[p])
        for n, pay in step.items():
            omega[(n, l)] = pay
            u[n] -= pay
            p = tuple(a + int(b) for a, b in zip(n, m))
            v[p] -= pay
    return omega, u, v


# R0 schedule

class R0SearchError(RuntimeError):
    def __init__(self, msg, margins):
        super().__init__(msg)
        self.margins = margins


def _ball_sums_1d(pos, val, centres, R):
    order = np.argsort(pos)
    pos, val = pos[order], val[order]
    cs = np.concatenate([[0.0], np.cumsum(val)])
    a = np.searchsorted(pos, centres - R - 1e-9, side="left")
    b = np.searchsorted(pos, centres + R + 1e-9, side="right")
    return cs[b] - cs[a]


def _ball_sums(pos, val, centres, R):
    if pos.shape[1] == 1:
        return _ball_sums_1d(pos[:, 0].astype(float), val, centres[:, 0].astype(float), R)
    out = np.zeros(len(centres))
    for s in range(0, len(centres), 256):
        c = centres[s:s + 256]
        d2 = ((c[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
        out[s:s + 256] = ((d2 <= R * R + 1e-9) * val[None, :]).sum(axis=1)
    return out


def tax_margins(snap, A, L0, R, centres=None):
    """sum_{|n-u|<=R} |Int_L0 W(n)| - A sum_{|n-u|<=2R} alpha3(d(n, boundary)) for each centre u.

    Centres default to every integer point whose 2R-ball fits in the window.
    """
    grid = _Grid(snap.window)
    keys = np.array(snap.keys(), dtype=np.int64).reshape(-1, snap.k)
    vol = np.array([int_volume(snap.tiles[tuple(int(v) for v in n)], L0) for n in keys])
    need = alpha3(boundary_distance(snap, grid.points), L0)
    if centres is None:
        lo = snap.window.vertices.min(axis=0) + 2 * R
        hi = snap.window.vertices.max(axis=0) - 2 * R
        centres = grid.points[np.all((grid.points >= lo - 1e-9) & (grid.points <= hi + 1e-9), axis=1)]
    centres = np.asarray(centres, dtype=np.int64).reshape(-1, snap.k)
    if len(centres) == 0:
        return centres, np.zeros(0)
    rhs = _ball_sums(keys, vol, centres, R)
    lhs = _ball_sums(grid.points, need, centres, 2 * R)
    return centres, rhs - A * lhs


def r0_search(snapshots, A, L0, schedule, centres=None):
    """First R in the schedule for which every sampled centre has a positive margin."""
    tried = []
    for R in schedule:
        worst = math.inf
        ok = True
        for snap in snapshots:
            c, m = tax_margins(snap, A, L0, R, centres)
            if len(m) == 0:
                ok = False
                worst = -math.inf
                break
            worst = min(worst, float(m.min()))
            if worst <= 0:
                ok = False
                break
        tried.append((float(R), worst))
        if ok:
            return float(R), tried
    raise R0SearchError(f"no R0 in the schedule works; best margin {max(t[1] for t in tried):.6g}", tried)


# property checks

@dataclass
class PropertyReport:
    ok: bool
    failures: list
    branches: dict
    checked: dict


def rescue_branch(table: WeightTable, p):
    """Which case of the rescue argument applies at p: ('top', n) or ('earlier', n), or None."""
    km = table.key_index()
    got = []
    for l in range(table.l0):
        j = km.get(tuple(int(v) for v in np.asarray(p) - table.spiral[l]))
        if j is not None and table.omega[j, l] > 0:
            got.append((l, j))
    if not got:
        return None
    l1, j1 = got[-1]
    if table.omega[j1, l1] >= 2:
        return "top", l1, j1
    for l, j in got[:-1]:
        if table.omega[j, l] > 1.0 / (l1 + 1):
            return "earlier", l, j
    return "none", l1, j1


def verify_properties(table: WeightTable, shifted: WeightTable | None = None, shift=None,
                      twin: WeightTable | None = None, tol=1e-6) -> PropertyReport:
    failures = []
    checked = {}
    branches = {"top": 0, "earlier": 0, "none": 0}
    km = table.key_index()
    safe = table.safe_mask()
    # (1) w(T^m x, n) = w(x, n + m), compared on tiles of the shifted table whose
    # translate lies in the safe interior of this one
    if shifted is not None:
        m = np.asarray(shift, dtype=np.int64)
        cnt = 0
        inside = shifted.safe_mask(shifted.keys)
        for j2, n in enumerate(shifted.keys):
            if not inside[j2] or not table.safe_mask((n + m)[None, :])[0]:
                continue
            j = km.get(tuple(int(v) for v in n + m))
            cnt += 1
            if j is None or np.abs(shifted.w[j2] - table.w[j]).max() > tol:
                failures.append(("equivariance", tuple(int(v) for v in n)))
        checked["equivariance"] = cnt
    # (2) identical tilings give identical tables
    if twin is not None:
        same = (np.array_equal(twin.keys, table.keys) and np.array_equal(twin.w, table.w)
                and np.array_equal(twin.omega, table.omega))
        if not same:
            failures.append(("determinism", None))
        checked["determinism"] = 1
    # (3) support bound
    for j, n in enumerate(table.keys):
        cnt = int((table.w[j] > 0).sum())
        if not cnt < 1 + table.u0[j]:
            failures.append(("support", (tuple(int(v) for v in n), cnt, float(table.u0[j]))))
    checked["support"] = len(table.keys)
    # (4) rescue of every needy point in the safe interior
    needy = np.flatnonzero(safe & (table.dist <= table.L0))
    for i in needy:
        p = table.points[i]
        found = False
        for l in range(table.l0):
            j = km.get(tuple(int(v) for v in p - table.spiral[l]))
            if j is not None and table.w[j, l] == 1.0:
                found = True
                break
        if not found:
            failures.append(("rescue", tuple(int(v) for v in p)))
        br = rescue_branch(table, p)
        if br is not None:
            branches[br[0]] += 1
    checked["rescue"] = len(needy)
    # termination on the safe interior
    bad = np.flatnonzero(safe & (table.v_final > 1e-12))
    for i in bad:
        failures.append(("termination", tuple(int(v) for v in table.points[i])))
    return PropertyReport(not failures, failures, branches, checked)


def conservation_error(table: WeightTable):
    """Largest bookkeeping error in the two conservation identities."""
    eu = np.abs(table.omega.sum(axis=1) + table.u_final - table.u0).max(initial=0.0)
    grid = table.point_index()
    recv = np.zeros(len(table.points))
    for l in range(table.l0):
        tgt = grid.index(table.keys + table.spiral[l])
        ok = tgt >= 0
        np.add.at(recv, tgt[ok], table.omega[ok, l])
    ev = np.abs(recv + table.v_final - table.v0).max(initial=0.0)
    return float(max(eu, ev))


def key_step_violations(table: WeightTable):
    """(n, l) where both u_l(n) and v_l(n + m_l) stay positive right after step l."""
    grid = table.point_index()
    v = table.v0.copy()
    u = table.u0.copy()
    bad = []
    for l in range(table.l0):
        tgt = grid.index(table.keys + table.spiral[l])
        ok = np.flatnonzero(tgt >= 0)
        u = u - table.omega[:, l]
        v[tgt[ok]] -= table.omega[ok, l]
        both = ok[(u[ok] > 0) & (v[tgt[ok]] > 0)]
        bad += [(tuple(int(c) for c in table.keys[j]), l) for j in both]
    return bad
