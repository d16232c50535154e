"""Sampled 2x2 complex frequency responses and their circuit algebra.

Every response carries the grid it was sampled on plus three tags: the
domain (``dq`` or modified sequence ``pn``), the reference frame (a local
node or the global frame) and the kind (impedance, admittance, loop gain).
Binary operations refuse to combine responses whose tags disagree.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import FrameError, GridMismatchError, InputError, SingularMatrixError

#: |det| below this raises instead of inverting.
SINGULAR_DET = 1e-30


class Domain(enum.Enum):
    DQ = "dq"
    PN = "pn"


class Kind(enum.Enum):
    IMPEDANCE = "impedance"
    ADMITTANCE = "admittance"
    LOOP_GAIN = "loopgain"


@dataclass(frozen=True)
class Frame:
    """Reference frame tag: ``Frame()`` is global, ``Frame("N1")`` is local to N1."""

    node: str | None = None

    @property
    def is_global(self) -> bool:
        return self.node is None

    def __str__(self) -> str:
        return "global" if self.node is None else f"local:{self.node}"

    @classmethod
    def parse(cls, text: str) -> "Frame":
        text = text.strip()
        if text == "global":
            return cls()
        if text.startswith("local:") and len(text) > len("local:"):
            return cls(text[len("local:"):])
        raise InputError(f"bad frame tag {text!r}; expected 'global' or 'local:<node-id>'")


GLOBAL = Frame()


def local(node: str) -> Frame:
    return Frame(str(node))


class FrequencyGrid:
    """Strictly increasing, positive, finite frequency points in Hz."""

    __slots__ = ("_points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float).ravel()
        if pts.size == 0:
            raise InputError("frequency grid is empty")
        if not np.all(np.isfinite(pts)):
            raise InputError("frequency grid contains non-finite values")
        if np.any(pts <= 0):
            raise InputError("frequency grid points must be > 0")
        if pts.size > 1 and np.any(np.diff(pts) <= 0):
            raise InputError("frequency grid must be strictly increasing")
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def s(self) -> np.ndarray:
        """Laplace variable j*2*pi*f at each point."""
        return 2j * np.pi * self._points

    def __len__(self) -> int:
        return self._points.size

    def __iter__(self):
        return iter(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencyGrid):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(
            np.all(self._points.view(np.int64) == other._points.view(np.int64))
        )

    def __hash__(self):
        return hash(self._points.tobytes())

    def __repr__(self) -> str:
        p = self._points
        return f"FrequencyGrid(n={p.size}, {p[0]:g}..{p[-1]:g} Hz)"


def make_log_grid(f_min: float, f_max: float, n: int) -> FrequencyGrid:
    """``n`` logarithmically spaced points from ``f_min`` to ``f_max`` inclusive."""
    if not (np.isfinite(f_min) and np.isfinite(f_max)) or not 0 < f_min < f_max:
        raise InputError(f"need 0 < f_min < f_max, got f_min={f_min}, f_max={f_max}")
    if int(n) != n or n < 2:
        raise InputError(f"need an integer n >= 2, got {n}")
    pts = np.logspace(np.log10(f_min), np.log10(f_max), int(n))
    # pin the ends exactly; logspace round-trips through log10
    pts[0], pts[-1] = f_min, f_max
    return FrequencyGrid(pts)


def make_lin_grid(f_min: float, f_max: float, n: int) -> FrequencyGrid:
    if not 0 < f_min < f_max or int(n) != n or n < 2:
        raise InputError(f"bad linear grid ({f_min}, {f_max}, {n})")
    return FrequencyGrid(np.linspace(f_min, f_max, int(n)))


@dataclass(frozen=True, eq=False)
class FrequencyResponse2x2:
    """A 2x2 complex matrix per grid point, with domain/frame/kind tags.

    ``values`` has shape ``(len(grid), 2, 2)`` and is stored read-only.
    """

    grid: FrequencyGrid
    values: np.ndarray
    domain: Domain = Domain.DQ
    frame: Frame = field(default_factory=Frame)
    kind: Kind = Kind.IMPEDANCE

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != (len(self.grid), 2, 2):
            raise InputError(
                f"values shape {vals.shape} does not match grid of {len(self.grid)} points"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not isinstance(self.frame, Frame):
            object.__setattr__(self, "frame", Frame.parse(str(self.frame)))

    def __len__(self) -> int:
        return len(self.grid)

    def replace(self, **changes) -> "FrequencyResponse2x2":
        kw = dict(grid=self.grid, values=self.values, domain=self.domain,
                  frame=self.frame, kind=self.kind)
        kw.update(changes)
        return FrequencyResponse2x2(**kw)

    def element(self, i: int, j: int) -> np.ndarray:
        return self.values[:, i, j]

    def scaled(self, factor: complex) -> "FrequencyResponse2x2":
        return self.replace(values=self.values * factor)

    def __repr__(self) -> str:
        return (f"FrequencyResponse2x2({self.grid!r}, domain={self.domain.value}, "
                f"frame={self.frame}, kind={self.kind.value})")


def constant(grid: FrequencyGrid, matrix, domain=Domain.DQ, frame=GLOBAL,
             kind=Kind.IMPEDANCE) -> FrequencyResponse2x2:
    """The same matrix at every grid point."""
    m = np.asarray(matrix, dtype=complex).reshape(2, 2)
    return FrequencyResponse2x2(grid, np.broadcast_to(m, (len(grid), 2, 2)), domain, frame, kind)


def identity(grid: FrequencyGrid, domain=Domain.DQ, frame=GLOBAL) -> FrequencyResponse2x2:
    return constant(grid, np.eye(2), domain, frame, Kind.LOOP_GAIN)


def check_compatible(a: FrequencyResponse2x2, b: FrequencyResponse2x2) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid!r} vs {b.grid!r}")
    if a.domain is not b.domain:
        raise FrameError(f"domain mismatch: {a.domain.value} vs {b.domain.value}")
    if a.frame != b.frame:
        raise FrameError(f"frame mismatch: {a.frame} vs {b.frame}")


def _require_impedance(*responses):
    for r in responses:
        if r.kind is not Kind.IMPEDANCE:
            raise FrameError(f"expected an impedance, got {r.kind.value}")


# -- pointwise 2x2 kernels on (n, 2, 2) stacks ---------------------------------

def det2(m: np.ndarray) -> np.ndarray:
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv2(m: np.ndarray, freqs=None) -> np.ndarray:
    """Closed-form inverse of a stack of 2x2 matrices."""
    d = det2(m)
    bad = np.abs(d) < SINGULAR_DET
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad))[0])
        f = float(np.atleast_1d(freqs)[k]) if freqs is not None else float("nan")
        raise SingularMatrixError(f, float(np.abs(np.atleast_1d(d)[k])))
    out = np.empty_like(m, dtype=complex)
    out[..., 0, 0] = m[..., 1, 1] / d
    out[..., 0, 1] = -m[..., 0, 1] / d
    out[..., 1, 0] = -m[..., 1, 0] / d
    out[..., 1, 1] = m[..., 0, 0] / d
    return out


def mul2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.matmul(a, b)


# -- public algebra --------------------------------------------------------------

def series(a: FrequencyResponse2x2, b: FrequencyResponse2x2) -> FrequencyResponse2x2:
    """Series connection: pointwise sum of two impedances."""
    check_compatible(a, b)
    _require_impedance(a, b)
    return a.replace(values=a.values + b.values)


def parallel(a: FrequencyResponse2x2, b: FrequencyResponse2x2) -> FrequencyResponse2x2:
    """Parallel connection ``(a^-1 + b^-1)^-1``.

    Raises :class:`SingularMatrixError` naming the first bad frequency.
    """
    check_compatible(a, b)
    _require_impedance(a, b)
    f = a.grid.points
    return a.replace(values=inv2(inv2(a.values, f) + inv2(b.values, f), f))


_KIND_TOGGLE = {
    Kind.IMPEDANCE: Kind.ADMITTANCE,
    Kind.ADMITTANCE: Kind.IMPEDANCE,
    Kind.LOOP_GAIN: Kind.LOOP_GAIN,
}


def invert(a: FrequencyResponse2x2) -> FrequencyResponse2x2:
    return a.replace(values=inv2(a.values, a.grid.points), kind=_KIND_TOGGLE[a.kind])


def _product_kind(ka: Kind, kb: Kind) -> Kind:
    if ka is Kind.LOOP_GAIN:
        return kb
    if kb is Kind.LOOP_GAIN:
        return ka
    if {ka, kb} == {Kind.IMPEDANCE, Kind.ADMITTANCE}:
        return Kind.LOOP_GAIN
    raise FrameError(f"product of {ka.value} and {kb.value} has no meaning here")


def matmul(a: FrequencyResponse2x2, b: FrequencyResponse2x2) -> FrequencyResponse2x2:
    """Pointwise matrix product ``a @ b``; impedance times admittance is a loop gain."""
    check_compatible(a, b)
    return a.replace(values=mul2(a.values, b.values), kind=_product_kind(a.kind, b.kind))


def eig2(m) -> tuple[complex, complex]:
    """Eigenvalues of one 2x2 complex matrix, largest (real, imag) first.

    Uses the cancellation-free form of the quadratic formula: the root with
    the larger modulus comes from ``tr/2 + sqrt(disc)`` with the sign chosen
    to add constructively, the other from ``det / root``.
    """
    lam = eig2_stack(np.asarray(m, dtype=complex).reshape(1, 2, 2))[0]
    return complex(lam[0]), complex(lam[1])


def eig2_stack(m: np.ndarray) -> np.ndarray:
    """Vectorised :func:`eig2`; returns shape ``(n, 2)``."""
    m = np.asarray(m, dtype=complex)
    half_tr = 0.5 * (m[:, 0, 0] + m[:, 1, 1])
    d = det2(m)
    root = np.sqrt(half_tr * half_tr - d)
    flip = (half_tr.real * root.real + half_tr.imag * root.imag) < 0
    root = np.where(flip, -root, root)
    q = half_tr + root
    nonzero = q != 0
    l1 = q
    l2 = np.where(nonzero, d / np.where(nonzero, q, 1.0), half_tr - root)
    lam = np.stack([l1, l2], axis=1)
    # descending by (real, imag)
    swap = (lam[:, 1].real > lam[:, 0].real) | (
        (lam[:, 1].real == lam[:, 0].real) & (lam[:, 1].imag > lam[:, 0].imag)
    )
    lam[swap] = lam[swap][:, ::-1]
    return lam


def eval_rl_branch(r_ohm: float, l_h: float, omega1: float, grid: FrequencyGrid,
                   frame: Frame = GLOBAL) -> FrequencyResponse2x2:
    """dq impedance of a balanced series R-L branch.

    ``[[R + sL, -w1 L], [w1 L, R + sL]]`` at ``s = j 2 pi f``.
    """
    if r_ohm < 0 or l_h < 0:
        raise InputError(f"R and L must be >= 0 (R={r_ohm}, L={l_h})")
    if r_ohm == 0 and l_h == 0:
        raise InputError("R = L = 0 is a short circuit, not a branch")
    z = r_ohm + grid.s * l_h
    x1 = omega1 * l_h
    vals = np.empty((len(grid), 2, 2), dtype=complex)
    vals[:, 0, 0] = z
    vals[:, 1, 1] = z
    vals[:, 0, 1] = -x1
    vals[:, 1, 0] = x1
    return FrequencyResponse2x2(grid, vals, Domain.DQ, frame, Kind.IMPEDANCE)
