"""Type-1 discriminant scans and Type-2 Kantorovich certification.

The certification works on the fully polynomial closure obtained with the
tan-half substitution ``X = tan(chi/2)``, ``Theta = tan(theta/2)``:

    F_i(Theta_i, X) = (1 + Theta_i^2) * prod_k (1 + X_k^2) * f_i(theta, chi)

which is quadratic in each variable. Its second partial derivatives w.r.t.
``X`` are evaluated in interval arithmetic over the test ball, giving a
rigorous Lipschitz bound for ``dF/dX``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import interval as ia
from .interval import Interval
from .kinematics import (
    DesignParameters,
    KinematicsError,
    _leg_constants,
    igm,
    quadratic_coefficients,
    tan_half_forward,
)

DEG = math.pi / 180


class SingularJacobianAtCenter(ArithmeticError):
    """dF/dX cannot be inverted at the Kantorovich center."""


@dataclass(frozen=True)
class WorkspaceBox:
    """Axis-aligned box in the (bank, elevation) plane at a fixed bearing."""

    chi1_range: tuple[float, float] = (-10 * DEG, 10 * DEG)
    chi2_range: tuple[float, float] = (-50 * DEG, 50 * DEG)
    chi3: float = 0.0
    empty: bool = False

    @classmethod
    def empty_box(cls, chi3: float = 0.0) -> "WorkspaceBox":
        """A box holding no orientation at all."""
        return cls((0.0, 0.0), (0.0, 0.0), chi3, empty=True)

    def __post_init__(self):
        for r in (self.chi1_range, self.chi2_range):
            if r[0] > r[1]:
                raise ValueError(f"empty range {r}: lower > upper")

    def contains(self, chi1, chi2):
        if self.empty:
            return np.zeros(np.broadcast_shapes(np.shape(chi1), np.shape(chi2)), dtype=bool)
        return (
            (self.chi1_range[0] <= chi1) & (chi1 <= self.chi1_range[1])
            & (self.chi2_range[0] <= chi2) & (chi2 <= self.chi2_range[1])
        )


PRESCRIBED_WORKSPACE = WorkspaceBox()
FIGURE_BOX = WorkspaceBox((-90 * DEG, 90 * DEG), (-90 * DEG, 90 * DEG))


# --------------------------------------------------------------------------
# Type-1


def type1_discriminants(p: DesignParameters, chi) -> np.ndarray:
    """Per-leg discriminant ``b^2 - 4ac`` of the IGM quadratic at ``chi``."""
    a, b, c = quadratic_coefficients(p, np.asarray(chi, dtype=float))
    return b * b - 4 * a * c


@dataclass
class ScanResult:
    chi1: np.ndarray  # (n1,)
    chi2: np.ndarray  # (n2,)
    delta: np.ndarray  # (n1, n2, 3)
    kantorovich_pass: np.ndarray  # (n1, n2) bool
    loci: np.ndarray  # (n1-1, n2-1) bool, sign change of some delta_i across the cell
    workspace: WorkspaceBox = PRESCRIBED_WORKSPACE
    min_abs_delta_in_workspace: float = math.nan
    loci_cells_in_workspace: int = 0
    failed_cells: int = 0

    @property
    def shape(self):
        return self.delta.shape[:2]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chi1", "chi2", "delta1", "delta2", "delta3", "kantorovich_pass"])
            for i, c1 in enumerate(self.chi1):
                for j, c2 in enumerate(self.chi2):
                    d = self.delta[i, j]
                    w.writerow([repr(float(c1)), repr(float(c2)), *(repr(float(x)) for x in d),
                                int(self.kantorovich_pass[i, j])])


def _grid(lo, hi, n):
    return np.linspace(lo, hi, n) if n > 1 else np.array([lo])


def _cell_overlaps(box: WorkspaceBox, x0, x1, y0, y1):
    return (
        (x1 >= box.chi1_range[0]) & (x0 <= box.chi1_range[1])
        & (y1 >= box.chi2_range[0]) & (y0 <= box.chi2_range[1])
    )


def scan_type1(
    p: DesignParameters,
    box: WorkspaceBox = FIGURE_BOX,
    n1: int = 200,
    n2: int = 200,
    workspace: WorkspaceBox = PRESCRIBED_WORKSPACE,
    kantorovich: bool = True,
    workers: int = 1,
) -> ScanResult:
    """Evaluate the leg discriminants on an ``n1 x n2`` node grid over ``box``.

    A cell (quad between four nodes) is a locus cell when some discriminant
    changes sign (or vanishes) on its corners. With ``kantorovich`` set,
    every node is also run through the path-tracking certificate.
    """
    if n1 < 2 or n2 < 2:
        raise ValueError("scan grid needs at least 2x2 nodes")
    chi1 = _grid(*box.chi1_range, n1)
    chi2 = _grid(*box.chi2_range, n2)

    def row(c1):
        return [type1_discriminants(p, (c1, c2, box.chi3)) for c2 in chi2]

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, chi1))
    else:
        rows = [row(c1) for c1 in chi1]
    delta = np.asarray(rows)

    sign = np.sign(delta)
    corners = np.stack([sign[:-1, :-1], sign[1:, :-1], sign[:-1, 1:], sign[1:, 1:]])
    loci = np.any((corners.max(axis=0) > 0) & (corners.min(axis=0) < 0) | (corners == 0).any(axis=0), axis=-1)

    overlap = _cell_overlaps(workspace, chi1[:-1, None], chi1[1:, None], chi2[None, :-1], chi2[None, 1:])
    inside = workspace.contains(chi1[:, None], chi2[None, :])
    min_abs = float(np.abs(delta[inside]).min()) if inside.any() else math.nan

    if kantorovich:
        passed = _certify_grid(p, chi1, chi2, box.chi3, radius=None, workers=workers).passed
    else:
        passed = np.zeros((n1, n2), dtype=bool)

    return ScanResult(
        chi1=chi1,
        chi2=chi2,
        delta=delta,
        kantorovich_pass=passed,
        loci=loci,
        workspace=workspace,
        min_abs_delta_in_workspace=min_abs,
        loci_cells_in_workspace=int((loci & overlap).sum()),
        failed_cells=int((~passed).sum()) if kantorovich else 0,
    )


# --------------------------------------------------------------------------
# polynomial closure


def _pmat(axis: str, X: Interval):
    """(1+X^2) R(2 atan X) and its first and second derivatives in X."""
    one = Interval.point(np.ones(X.shape))
    zero = Interval.point(np.zeros(X.shape))
    two = 2.0 * one
    X2 = X.sqr()
    p, m = one + X2, one - X2
    t = 2.0 * X
    if axis == "x":
        P = [[p, zero, zero], [zero, m, -t], [zero, t, m]]
        dP = [[t, zero, zero], [zero, -t, -two], [zero, two, -t]]
        ddP = [[two, zero, zero], [zero, -two, zero], [zero, zero, -two]]
    elif axis == "y":
        P = [[m, zero, t], [zero, p, zero], [-t, zero, m]]
        dP = [[-t, zero, two], [zero, t, zero], [-two, zero, -t]]
        ddP = [[-two, zero, zero], [zero, two, zero], [zero, zero, -two]]
    else:
        P = [[m, -t, zero], [t, m, zero], [zero, zero, p]]
        dP = [[-t, -two, zero], [two, -t, zero], [zero, zero, t]]
        ddP = [[-two, zero, zero], [zero, -two, zero], [zero, zero, two]]
    return tuple(_stack(M) for M in (P, dP, ddP))


def _stack(rows) -> Interval:
    lo = np.stack([np.stack([e.lo for e in r], axis=-1) for r in rows], axis=-2)
    hi = np.stack([np.stack([e.hi for e in r], axis=-1) for r in rows], axis=-2)
    return Interval(lo, hi)


def _widen(arr, delta):
    arr = np.asarray(arr, dtype=float)
    return Interval.around(arr, delta) if delta > 0 else Interval.point(arr)


class _PolySystem:
    """Batched interval evaluation of F, dF/dX and d2F/dX2 for N configurations.

    ``Theta`` is ``(N, 3)`` floats; ``X`` is an ``(N, 3)`` Interval.
    """

    def __init__(self, p: DesignParameters, Theta, X: Interval, inflation: float = 0.0):
        lc = _leg_constants(p)
        N = X.lo.shape[0]
        base = _widen(lc.base, 2 * inflation)
        prox = _widen(lc.prox, inflation)
        plat = _widen(lc.plat, 2 * inflation)
        cos_a2 = _widen(lc.cos_alpha2, inflation)

        Th = Interval.point(np.asarray(Theta, dtype=float))
        # w~_i = base_i @ Pz(Theta_i) @ prox_i   -> (N, 3 legs, 3)
        Pz_th, _, _ = _pmat("z", Th)  # (N, 3, 3, 3): per leg matrix
        inner = ia.matvec(Pz_th, Interval(prox.lo[None], prox.hi[None]))
        self.w = ia.matvec(Interval(base.lo[None], base.hi[None]), inner)
        self.wcoef = cos_a2 * (1.0 + Th.sqr())  # (N, 3)

        self.mats = [_pmat(ax, X[:, k]) for k, ax in enumerate("xyz")]
        self.q = Interval(np.broadcast_to(plat.lo, (N, 3, 3)), np.broadcast_to(plat.hi, (N, 3, 3)))
        self.X = X
        self.X2p1 = [1.0 + X[:, k].sqr() for k in range(3)]

    def _v(self, orders):
        """Pz Py Px q with derivative ``orders[k]`` applied to factor k."""
        v = self.q
        for k in range(3):
            M = self.mats[k][orders[k]]
            v = ia.matvec(Interval(M.lo[:, None], M.hi[:, None]), v)
        return v

    def _g(self, orders):
        """Derivative of prod_k (1 + X_k^2)."""
        out = None
        for k in range(3):
            Xk = self.X[:, k]
            fac = (self.X2p1[k], 2.0 * Xk, Interval.point(np.full(Xk.shape, 2.0)))[orders[k]]
            out = fac if out is None else out * fac
        return out

    def _term(self, orders):
        v = self._v(orders)
        g = self._g(orders)
        return ia.dot(self.w, v) - self.wcoef * Interval(g.lo[:, None], g.hi[:, None])

    def value(self) -> Interval:
        return self._term((0, 0, 0))

    def jacobian(self) -> Interval:
        cols = []
        for k in range(3):
            o = [0, 0, 0]
            o[k] = 1
            cols.append(self._term(tuple(o)))
        return Interval(np.stack([c.lo for c in cols], -1), np.stack([c.hi for c in cols], -1))

    def hessian(self) -> Interval:
        """Enclosure of d2F_i/dX_j dX_k, shape (N, 3, 3, 3) indexed [n, i, j, k]."""
        N = self.X.lo.shape[0]
        lo = np.empty((N, 3, 3, 3))
        hi = np.empty((N, 3, 3, 3))
        for j in range(3):
            for k in range(j, 3):
                o = [0, 0, 0]
                o[j] += 1
                o[k] += 1
                t = self._term(tuple(o))
                lo[:, :, j, k] = lo[:, :, k, j] = t.lo
                hi[:, :, j, k] = hi[:, :, k, j] = t.hi
        return Interval(lo, hi)


def polynomial_closure(p: DesignParameters, Theta, X) -> np.ndarray:
    """Point value of the cleared polynomial closure ``F(Theta, X)``."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = _PolySystem(p, Theta, Interval.point(X)).value().mid()
    return out[0] if out.shape[0] == 1 else out


def polynomial_jacobian(p: DesignParameters, Theta, X) -> np.ndarray:
    """Point value of ``dF/dX``."""
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = _PolySystem(p, Theta, Interval.point(X)).jacobian().mid()
    return out[0] if out.shape[0] == 1 else out


# --------------------------------------------------------------------------
# Kantorovich


@dataclass(frozen=True)
class KantorovichCertificate:
    """Outcome of the Kantorovich test around ``(Theta0, X0)`` on an infinity ball.

    The test runs on ``Y F`` with ``Y`` the floating-point inverse of
    dF/dX(X0). ``B`` bounds ||(Y dF/dX(X0))^-1||, ``eta`` bounds the first
    Newton step and ``L`` is a Lipschitz constant of Y dF/dX over the ball of
    radius ``radius``.
    ``r_exist`` is the radius holding the Newton limit, ``r_unique`` the
    radius in which that root is the only one.
    """

    theta0: np.ndarray
    x0: np.ndarray
    radius: float
    eta: float
    B: float
    L: float
    h: float
    r_exist: float
    r_unique: float
    valid: bool


@dataclass
class _Batch:
    eta: np.ndarray
    B: np.ndarray
    L: np.ndarray
    h: np.ndarray
    r_exist: np.ndarray
    r_unique: np.ndarray
    valid: np.ndarray
    regular: np.ndarray


def _kantorovich_batch(p, Theta0, X0, radius, inflation=0.0) -> _Batch:
    Theta0 = np.asarray(Theta0, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    N = X0.shape[0]
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (N,))

    center = _PolySystem(p, Theta0, Interval.point(X0), inflation)
    A = center.jacobian()
    Fx = center.value()

    Am = A.mid()
    det = np.linalg.det(Am)
    regular = np.isfinite(det) & (np.abs(det) > 1e-300)
    Y = np.zeros_like(Am)
    if regular.any():
        Y[regular] = np.linalg.inv(Am[regular])
    # Work on the preconditioned system Y F = 0 (same roots, same Newton
    # iterates). ||I - Y A|| = delta < 1 proves A invertible and gives
    # ||(Y A)^-1|| <= 1 / (1 - delta).
    Yi = Interval.point(Y)
    E = Interval.point(np.eye(3)) - ia.matmul(Yi, A)
    delta = ia.norm_inf_upper(E)
    regular &= delta < 1.0
    B = np.where(regular, 1.0 / np.where(regular, 1.0 - delta, 1.0), np.inf)
    B = np.nextafter(B, np.inf)
    eta = np.nextafter(ia.matvec(Yi, Fx).mag().max(axis=-1) * B, np.inf)

    ball = _PolySystem(p, Theta0, Interval.around(X0, radius[:, None]), inflation)
    H = ball.hessian()
    # (Y H)[r, j, k] = sum_i Y[r, i] H[i, j, k]
    YH = ia.matvec(
        Interval(Y[:, None, None, :, :], Y[:, None, None, :, :]),
        Interval(np.moveaxis(H.lo, 1, -1), np.moveaxis(H.hi, 1, -1)),
    )  # (N, j, k, r)
    L = YH.mag().reshape(N, 9, 3).sum(axis=1).max(axis=-1)
    L = np.nextafter(L * (1 + 1e-14), np.inf)

    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        h = B * eta * L
        ok = regular & (h <= 0.5)
        root = np.sqrt(np.where(ok, 1 - 2 * h, 0.0))
        r_exist = np.where(ok, 2 * eta / (1 + root), np.inf)
        r_uni = np.where(L > 0, (1 + root) / (B * L), np.inf)
        r_unique = np.where(ok, np.minimum(radius, r_uni), 0.0)
    valid = ok & (r_exist <= radius)
    return _Batch(eta, B, L, h, r_exist, r_unique, valid, regular)


def kantorovich_test(p: DesignParameters, Theta0, X0, r: float, inflation: float = 0.0) -> KantorovichCertificate:
    """Kantorovich certificate for Newton on ``X -> F(Theta0, X)`` from ``X0``.

    Valid when ``h = B * eta * L <= 1/2`` and the existence ball of radius
    ``2 eta / (1 + sqrt(1 - 2h))`` fits in the tested ball ``r``.

    Raises:
        SingularJacobianAtCenter: dF/dX at X0 is not provably invertible.
    """
    Theta0 = np.asarray(Theta0, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    b = _kantorovich_batch(p, Theta0[None], X0[None], r, inflation)
    if not b.regular[0]:
        raise SingularJacobianAtCenter(f"dF/dX singular at X0={X0}, Theta0={Theta0}")
    return KantorovichCertificate(
        theta0=Theta0,
        x0=X0,
        radius=float(r),
        eta=float(b.eta[0]),
        B=float(b.B[0]),
        L=float(b.L[0]),
        h=float(b.h[0]),
        r_exist=float(b.r_exist[0]),
        r_unique=float(b.r_unique[0]),
        valid=bool(b.valid[0]),
    )


@dataclass
class _GridCertification:
    passed: np.ndarray
    h: np.ndarray
    reasons: dict = field(default_factory=dict)


def _certify_grid(p, chi1, chi2, chi3, radius=None, inflation=0.0, workers=1) -> _GridCertification:
    """Path-tracking certification over a node grid.

    Nodes are visited column by column along chi2; the estimate for each node
    is the orientation of its predecessor (previous chi2 node, or for the
    first node of a column, the first node of the previous column). A node
    passes when the certificate at ``(Theta(node), X(predecessor))`` is valid
    and the node's own ``X`` lies in the uniqueness ball, i.e. Newton seeded
    at the predecessor tracks this very solution.
    """
    n1, n2 = len(chi1), len(chi2)
    if n1 == 0 or n2 == 0:
        return _GridCertification(np.zeros((n1, n2), bool), np.zeros((n1, n2)))

    def column(c1):
        out = []
        for c2 in chi2:
            chi = np.array([c1, c2, chi3])
            try:
                th = igm(p, chi)
                out.append((tan_half_forward(th), tan_half_forward(chi), None))
            except (KinematicsError, ValueError) as exc:
                out.append((None, None, exc))
        return out

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            cols = list(ex.map(column, chi1))
    else:
        cols = [column(c1) for c1 in chi1]

    reasons = {}
    idx, Th, Xc, Xp = [], [], [], []
    for i in range(n1):
        for j in range(n2):
            th, x, exc = cols[i][j]
            if exc is not None:
                reasons[(i, j)] = f"igm: {exc}"
                continue
            if j > 0:
                prev = cols[i][j - 1]
            elif i > 0:
                prev = cols[i - 1][0]
            else:
                prev = cols[i][j]
            xp = prev[1] if prev[1] is not None else x
            idx.append((i, j))
            Th.append(th)
            Xc.append(x)
            Xp.append(xp)

    passed = np.zeros((n1, n2), dtype=bool)
    hmap = np.full((n1, n2), np.nan)
    if idx:
        Th, Xc, Xp = np.array(Th), np.array(Xc), np.array(Xp)
        if radius is None:
            d1 = np.diff(chi1).max() if n1 > 1 else 0.0
            d2 = np.diff(chi2).max() if n2 > 1 else 0.0
            radius = max(d1, d2, 1e-6)
        b = _kantorovich_batch(p, Th, Xp, radius, inflation)
        tracked = np.abs(Xc - Xp).max(axis=1) <= b.r_unique
        ok = b.valid & tracked
        for n, (i, j) in enumerate(idx):
            passed[i, j] = ok[n]
            hmap[i, j] = b.h[n]
            if not ok[n]:
                reasons[(i, j)] = "kantorovich: " + (
                    "singular dF/dX" if not b.regular[n]
                    else f"h={b.h[n]:.3g}" if not b.valid[n]
                    else "solution outside uniqueness ball"
                )
    return _GridCertification(passed, hmap, reasons)


@dataclass
class CertificationReport:
    all_pass: bool
    failures: list  # orientations (chi1, chi2, chi3) that failed
    reasons: list
    n_cells: int
    max_h: float


def certify_workspace(
    p: DesignParameters,
    box: WorkspaceBox = PRESCRIBED_WORKSPACE,
    step: float = 1 * DEG,
    radius: float | None = None,
    inflation: float = 0.0,
    workers: int = 1,
) -> CertificationReport:
    """Certify every node of a ``step``-spaced grid over ``box``.

    ``radius`` (tan-half units) defaults to ``step``; it must not be smaller
    than ``step`` so that neighbouring balls overlap.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if radius is None:
        radius = step
    if radius < step:
        raise ValueError("radius must be >= step for overlapping coverage")
    spans = [box.chi1_range[1] - box.chi1_range[0], box.chi2_range[1] - box.chi2_range[0]]
    n1, n2 = (0, 0) if box.empty else (int(math.ceil(s / step - 1e-9)) + 1 for s in spans)
    chi1 = _grid(*box.chi1_range, n1)
    chi2 = _grid(*box.chi2_range, n2)
    res = _certify_grid(p, chi1, chi2, box.chi3, radius=radius, inflation=inflation, workers=workers)
    fails = np.argwhere(~res.passed)
    failures = [(float(chi1[i]), float(chi2[j]), float(box.chi3)) for i, j in fails]
    reasons = [res.reasons.get((int(i), int(j)), "") for i, j in fails]
    hs = res.h[np.isfinite(res.h)]
    return CertificationReport(
        all_pass=not failures,
        failures=failures,
        reasons=reasons,
        n_cells=n1 * n2,
        max_h=float(hs.max()) if hs.size else 0.0,
    )
