"""Product-space structure on X1 x X2: transforms, the product square
function, H^p seminorms, CMO^p/BMO quantities and the block square function.

Functions on the product grid are (n1, n2) matrices; the product measure is
the weight outer product.  Coefficients carry four channels: wavelet x
wavelet (the H^p theory acts here), the two mixed channels, and scaling x
scaling.  Doubly mean-zero functions live entirely in the ww channel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicSystem, build_system
from .space import FiniteSpace
from .wavelet import BuildingBlockSet, WaveletBasis, build_haar


class ProductSpace:
    def __init__(self, x1: FiniteSpace, x2: FiniteSpace,
                 system1: DyadicSystem | None = None, system2: DyadicSystem | None = None,
                 basis1: WaveletBasis | None = None, basis2: WaveletBasis | None = None,
                 delta: float | None = None, mode: str = "desk"):
        self.x1, self.x2 = x1, x2
        self.systems = (
            system1 if system1 is not None else build_system(x1, delta, mode),
            system2 if system2 is not None else build_system(x2, delta, mode),
        )
        self.bases = (
            basis1 if basis1 is not None else build_haar(self.systems[0]),
            basis2 if basis2 is not None else build_haar(self.systems[1]),
        )
        # eta enters only through p0; the ramp cut-offs are Lipschitz (eta = 1)
        self.eta = (1.0, 1.0)
        self.p0 = max(x1.omega / (x1.omega + self.eta[0]),
                      x2.omega / (x2.omega + self.eta[1]))
        # beta', gamma' test-function parameters: metadata only on finite spaces
        self.test_function_params = {"beta_prime": (0.5, 0.5), "gamma_prime": (0.5, 0.5)}
        self._rect_masks: dict = {}

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x1.n, self.x2.n)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.x1.weight, self.x2.weight)

    def total_measure(self) -> float:
        return self.x1.total_measure * self.x2.total_measure

    def set_measure(self, mask: np.ndarray) -> float:
        return float(self.weights[mask].sum())

    def lq_norm(self, f: np.ndarray, q: float) -> float:
        return float(((np.abs(f) ** q) * self.weights).sum() ** (1.0 / q))

    def rectangle_mask(self, cube1, cube2) -> np.ndarray:
        key = (cube1.id, cube2.id)
        if key not in self._rect_masks:
            m1 = self.systems[0].member_mask(*cube1.id)
            m2 = self.systems[1].member_mask(*cube2.id)
            self._rect_masks[key] = np.outer(m1, m2)
        return self._rect_masks[key]

    def wavelet_rectangle(self, i: int, j: int):
        """Supporting dyadic rectangle of the (i, j) product wavelet pair."""
        c1 = self.systems[0].cube(*self.bases[0].wavelets[i].cube)
        c2 = self.systems[1].cube(*self.bases[1].wavelets[j].cube)
        return c1, c2

    def random_function(self, rng, mean_zero: bool = True) -> np.ndarray:
        f = rng.standard_normal(self.shape)
        return double_center(self, f) if mean_zero else f


def double_center(pspace: ProductSpace, f: np.ndarray) -> np.ndarray:
    """Project onto doubly mean-zero functions (kills all non-ww channels)."""
    w1, w2 = pspace.x1.weight, pspace.x2.weight
    f = f - (w1 @ f)[None, :] / w1.sum()
    f = f - (f @ w2)[:, None] / w2.sum()
    return f


@dataclass
class DyadicRectangle:
    q1: tuple[int, int]          # cube id in system 1
    q2: tuple[int, int]          # cube id in system 2
    measure: float

    @property
    def key(self):
        return self.q1 + self.q2


@dataclass
class ProductCoefficients:
    """Full coefficient matrix, wavelet rows/cols first, scaling last."""

    matrix: np.ndarray           # (n1, n2)
    n_wav: tuple[int, int]

    @property
    def ww(self) -> np.ndarray:
        return self.matrix[: self.n_wav[0], : self.n_wav[1]]

    @property
    def ws(self) -> np.ndarray:
        return self.matrix[: self.n_wav[0], self.n_wav[1]:]

    @property
    def sw(self) -> np.ndarray:
        return self.matrix[self.n_wav[0]:, : self.n_wav[1]]

    @property
    def ss(self) -> np.ndarray:
        return self.matrix[self.n_wav[0]:, self.n_wav[1]:]

    def channel_norms(self) -> dict[str, float]:
        return {c: float(np.sqrt((getattr(self, c) ** 2).sum()))
                for c in ("ww", "ws", "sw", "ss")}

    def entries(self, pspace: ProductSpace, tol: float = 0.0):
        """Sparse view of the ww channel: ((k1, a1, k2, a2), value) tuples."""
        b1, b2 = pspace.bases
        for i in range(self.n_wav[0]):
            for j in range(self.n_wav[1]):
                v = float(self.ww[i, j])
                if abs(v) > tol:
                    yield (b1.wavelets[i].id + b2.wavelets[j].id), v


def product_transform(pspace: ProductSpace, f: np.ndarray) -> ProductCoefficients:
    f = np.asarray(f, dtype=float)
    if f.shape != pspace.shape:
        raise ValueError(f"expected grid shape {pspace.shape}, got {f.shape}")
    b1, b2 = pspace.bases
    mat = (b1.matrix * pspace.x1.weight) @ f @ (b2.matrix * pspace.x2.weight).T
    return ProductCoefficients(matrix=mat, n_wav=(b1.n_wavelets, b2.n_wavelets))


def inverse_product_transform(pspace: ProductSpace, coeffs: ProductCoefficients) -> np.ndarray:
    b1, b2 = pspace.bases
    return b1.matrix.T @ coeffs.matrix @ b2.matrix


def square_function(pspace: ProductSpace, coeffs: ProductCoefficients) -> np.ndarray:
    """Product Littlewood-Paley square function of the ww channel.

    S(f)^2(x1,x2) = sum |<f, psi1 psi2>|^2 chi_Q1(x1) chi_Q2(x2) / (mu(Q1) mu(Q2)),
    the rectangle indicator normalized in L^2 of the product measure.
    """
    u1 = _indicator_over_measure(pspace, 0)
    u2 = _indicator_over_measure(pspace, 1)
    s2 = u1.T @ (coeffs.ww ** 2) @ u2
    return np.sqrt(np.maximum(s2, 0.0))


def _indicator_over_measure(pspace: ProductSpace, axis: int) -> np.ndarray:
    basis = pspace.bases[axis]
    system = pspace.systems[axis]
    out = np.zeros((basis.n_wavelets, basis.space.n))
    for i, w in enumerate(basis.wavelets):
        c = system.cube(*w.cube)
        out[i, c.members] = 1.0 / c.measure
    return out


def hp_seminorm(pspace: ProductSpace, f: np.ndarray, p: float,
                warn: list | None = None) -> float:
    """||S(f)||_{L^p} for p in (0, 1]; defined for p > p0, desk mode warns below."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if p <= pspace.p0 and warn is not None:
        warn.append(f"p = {p} is at or below p0 = {pspace.p0:.6g}; outside the theory's range")
    sf = square_function(pspace, product_transform(pspace, f))
    return float(((sf ** p) * pspace.weights).sum() ** (1.0 / p))


def all_rectangles(pspace: ProductSpace):
    """Every dyadic rectangle (cube pair) of the two systems."""
    s1, s2 = pspace.systems
    return itertools.product(s1.all_cubes(), s2.all_cubes())


def cmo_p(pspace: ProductSpace, coeffs: ProductCoefficients, p: float,
          candidates=None, max_union: int = 3, micro_limit: int = 15) -> float:
    """Lower bound for the CMO^p supremum over a structured candidate family.

    Candidate value: (mu(Omega)^(1-2/p) * sum_{R in Omega} |<f,psi psi>|^2)^(1/2),
    the sum over wavelet rectangles contained in Omega.  Default candidates:
    every single dyadic rectangle, unions of <= max_union maximal rectangles
    of the coefficient support, and -- when at most micro_limit rectangles
    carry nonzero coefficients -- all unions of those rectangles, which makes
    the candidate supremum equal to the exhaustive all-subsets supremum (the
    optimum is always attained at such a union: dropping points outside the
    contained rectangles shrinks mu(Omega) without losing energy).
    """
    from .journe import maximal_rectangles   # local import to avoid a cycle
    from .maximal import OpenSet

    c2 = coeffs.ww ** 2
    rect_of = {}
    for i in range(coeffs.n_wav[0]):
        for j in range(coeffs.n_wav[1]):
            if c2[i, j] > 0:
                key = tuple(pspace.wavelet_rectangle(i, j)[m].id for m in (0, 1))
                rect_of.setdefault(key, 0.0)
                rect_of[key] += c2[i, j]
    masks = {key: pspace.rectangle_mask(pspace.systems[0].cube(*key[0]),
                                        pspace.systems[1].cube(*key[1]))
             for key in rect_of}

    def value(mask: np.ndarray) -> float:
        mu = pspace.set_measure(mask)
        if mu <= 0:
            return 0.0
        energy = sum(e for key, e in rect_of.items()
                     if (masks[key] & ~mask).sum() == 0)
        return math.sqrt(mu ** (1.0 - 2.0 / p) * energy)

    if candidates is None:
        candidates = []
        for c1, c2_ in all_rectangles(pspace):
            candidates.append(pspace.rectangle_mask(c1, c2_))
        if rect_of:
            support = np.zeros(pspace.shape, dtype=bool)
            for key in rect_of:
                support |= masks[key]
            fam = maximal_rectangles(pspace, OpenSet.from_mask(pspace, support), "both").m_all
            fam_masks = [pspace.rectangle_mask(pspace.systems[0].cube(*r.q1),
                                               pspace.systems[1].cube(*r.q2)) for r in fam]
            for r in range(1, min(max_union, len(fam_masks)) + 1):
                for combo in itertools.combinations(range(len(fam_masks)), r):
                    u = np.zeros(pspace.shape, dtype=bool)
                    for c in combo:
                        u |= fam_masks[c]
                    candidates.append(u)
            if len(rect_of) <= micro_limit:
                keys = list(rect_of)
                for r in range(1, len(keys) + 1):
                    for combo in itertools.combinations(keys, r):
                        u = np.zeros(pspace.shape, dtype=bool)
                        for key in combo:
                            u |= masks[key]
                        candidates.append(u)
    else:
        candidates = [np.asarray(c, dtype=bool) for c in candidates]
        for c in candidates:
            if pspace.set_measure(c) <= 0:
                raise ValueError("empty candidate set")

    if not candidates:
        return 0.0
    return max(value(c) for c in candidates)


def cmo_p_exhaustive(pspace: ProductSpace, coeffs: ProductCoefficients, p: float) -> float:
    """All-subsets oracle; only feasible on micro instances (n1*n2 <= ~14)."""
    n1, n2 = pspace.shape
    cells = n1 * n2
    if cells > 16:
        raise ValueError("exhaustive CMO oracle limited to micro instances")
    best = 0.0
    c2 = coeffs.ww ** 2
    rects = []
    for i in range(coeffs.n_wav[0]):
        for j in range(coeffs.n_wav[1]):
            if c2[i, j] > 0:
                r1, r2 = pspace.wavelet_rectangle(i, j)
                rects.append((pspace.rectangle_mask(r1, r2), float(c2[i, j])))
    for bits in range(1, 2 ** cells):
        mask = np.asarray([(bits >> c) & 1 for c in range(cells)],
                          dtype=bool).reshape(n1, n2)
        mu = pspace.set_measure(mask)
        energy = sum(e for rm, e in rects if (rm & ~mask).sum() == 0)
        if energy > 0:
            best = max(best, math.sqrt(mu ** (1.0 - 2.0 / p) * energy))
    return best


def block_square_function(pspace: ProductSpace, g: np.ndarray,
                          blocks1: list[BuildingBlockSet], blocks2: list[BuildingBlockSet],
                          ell1: int, ell2: int, rectangles=None, qprime: float = 2.0):
    """Square function built from building blocks at cell (ell1, ell2).

    Evaluates (sum_R |<phi_{ell1} phi_{ell2}, g>|^2 chi_R / mu(R))^(1/2) over
    the supplied rectangle family (default: all wavelet rectangles, skipping
    wavelets whose block series ended before the requested index) and returns
    the values together with the measured ratio against
    2^(ell1 omega1 + ell2 omega2) ||g||_{q'}.
    """
    if not blocks1 or not blocks2:
        raise ValueError("building blocks missing for one factor")
    g = np.asarray(g, dtype=float)
    w1, w2 = pspace.x1.weight, pspace.x2.weight
    if rectangles is None:
        rectangles = [(i, j) for i in range(len(blocks1)) for j in range(len(blocks2))]
    s2 = np.zeros(pspace.shape)
    for i, j in rectangles:
        b1, b2 = blocks1[i], blocks2[j]
        if ell1 >= b1.n_blocks or ell2 >= b2.n_blocks:
            continue
        inner = float((b1.blocks[ell1] * w1) @ g @ (b2.blocks[ell2] * w2))
        c1, c2 = pspace.wavelet_rectangle(i, j)
        s2 += inner ** 2 / (c1.measure * c2.measure) * pspace.rectangle_mask(c1, c2)
    vals = np.sqrt(s2)
    norm = pspace.lq_norm(vals, qprime)
    gnorm = pspace.lq_norm(g, qprime)
    scale = 2.0 ** (ell1 * pspace.x1.omega + ell2 * pspace.x2.omega)
    ratio = norm / (scale * gnorm) if gnorm > 0 else 0.0
    return vals, {"lq_norm": norm, "g_norm": gnorm, "scale": scale, "ratio": ratio}
