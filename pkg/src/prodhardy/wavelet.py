"""Haar-type orthonormal bases on a dyadic system, plus the machinery that
turns a wavelet into compactly supported mean-zero building blocks.

Each cube with N >= 2 children carries exactly N-1 orthonormal mean-zero
functions spanning the mean-zero span of its child indicators; one global
scaling function (constant mu(X)^{-1/2}) completes the basis.  Haar functions
are exactly supported in their cube, so the size/support/cancellation/
orthonormality facts the downstream theory needs hold with equality rather
than up to exponential tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicSystem
from .space import FiniteSpace


@dataclass
class Wavelet:
    level: int                   # k of the supporting cube
    index: int                   # alpha: position within the basis ordering
    cube: tuple[int, int]        # supporting cube id (k, alpha-in-level)
    center: int                  # y: first child's center
    scale: float                 # delta^k
    values: np.ndarray           # dense per-point values

    @property
    def id(self) -> tuple[int, int]:
        return (self.level, self.index)


class WaveletBasis:
    def __init__(self, system: DyadicSystem, wavelets: list[Wavelet], decay_a: float):
        self.system = system
        self.wavelets = wavelets
        self.decay_a = decay_a          # a = (1 + 2 log2 a0)^-1, metadata only
        self.scaling = np.full(system.space.n, system.space.total_measure ** -0.5)
        rows = [w.values for w in wavelets] + [self.scaling]
        self.matrix = np.vstack(rows)   # (n, n): wavelet rows then scaling
        self.n_wavelets = len(wavelets)

    @property
    def space(self) -> FiniteSpace:
        return self.system.space

    def gram(self) -> np.ndarray:
        return (self.matrix * self.space.weight) @ self.matrix.T

    def support_measure(self, i: int) -> float:
        c = self.wavelets[i].cube
        return self.system.cube(*c).measure

    def kappa(self, i: int) -> float:
        """sqrt(mu(B(y, delta^k))) for wavelet i; normalizes psi to a test function."""
        w = self.wavelets[i]
        mask = self.space.ball_mask(w.center, w.scale)
        return float(np.sqrt(self.space.weight[mask].sum()))


def build_haar(system: DyadicSystem) -> WaveletBasis:
    """Per cube with N children, N-1 nested-difference Haar functions.

    Children are taken in ascending center id; function i is positive on the
    first i children and negative on child i+1, which for two unit-weight
    children gives (1/sqrt2, -1/sqrt2).  Total count over the tree is n - 1.
    """
    space = system.space
    wavelets: list[Wavelet] = []
    for k in range(system.k_min, system.k_max):
        for c in system.cubes[k]:
            kids = sorted((system.cubes[k + 1][b] for b in c.children),
                          key=lambda q: q.center)
            if len(kids) < 2:
                continue
            masses = np.asarray([q.measure for q in kids])
            csum = np.cumsum(masses)
            y = kids[0].center
            for i in range(1, len(kids)):
                mi, m_next = csum[i - 1], masses[i]
                t = math.sqrt(m_next / (mi * (mi + m_next)))
                r = math.sqrt(mi / (m_next * (mi + m_next)))
                vals = np.zeros(space.n)
                for q in kids[:i]:
                    vals[q.members] = t
                vals[kids[i].members] = -r
                wavelets.append(Wavelet(level=k, index=len(wavelets), cube=c.id,
                                        center=y, scale=c.side, values=vals))
    decay_a = 1.0 / (1.0 + 2.0 * math.log2(space.a0)) if space.a0 > 1 else 1.0
    return WaveletBasis(system, wavelets, decay_a)


def transform(basis: WaveletBasis, f: np.ndarray) -> np.ndarray:
    """Weighted pairings <f, psi>; last entry is the scaling coefficient."""
    f = np.asarray(f, dtype=float)
    if f.shape != (basis.space.n,):
        raise ValueError(f"expected {basis.space.n} values, got {f.shape}")
    return basis.matrix @ (f * basis.space.weight)


def inverse_transform(basis: WaveletBasis, coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.space.n,):
        raise ValueError(f"expected {basis.space.n} coefficients, got {coeffs.shape}")
    return basis.matrix.T @ coeffs


def coefficient_triples(basis: WaveletBasis, coeffs, tol: float = 0.0):
    """Coefficient export as (k, alpha, value) triples, scaling keyed as
    ('scaling', 0); inverse of the keying used in the basis export."""
    out = []
    for w, v in zip(basis.wavelets, coeffs):
        if abs(v) > tol:
            out.append((w.level, w.index, float(v)))
    if abs(coeffs[-1]) > tol:
        out.append(("scaling", 0, float(coeffs[-1])))
    return out


@dataclass
class CutoffFunction:
    center: int
    r0: float
    eta: float
    values: np.ndarray
    holder_constant: float       # measured over all pairs

    def __call__(self):
        return self.values


def cutoff(space: FiniteSpace, x0: int, r0: float, eta: float = 1.0) -> CutoffFunction:
    """Ramp cut-off: 1 on B(x0, r0/4), 0 off B(x0, a0^2 r0), linear between.

    h(x) = clamp((a0^2 r0 - d(x, x0)) / (a0^2 r0 - r0/4), 0, 1).  The measured
    Holder constant sup |h(x)-h(y)| (r0/d(x,y))^eta is reported; the ramp is
    Lipschitz, hence eta-Holder for every eta <= 1.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    top = space.a0 ** 2 * r0
    d = space.dist[x0]
    vals = np.clip((top - d) / (top - r0 / 4.0), 0.0, 1.0)
    cst = 0.0
    if space.n > 1:
        off = ~np.eye(space.n, dtype=bool)
        diffs = np.abs(vals[:, None] - vals[None, :])[off]
        cst = float((diffs / (space.dist[off] / r0) ** eta).max())
    return CutoffFunction(center=x0, r0=r0, eta=eta, values=vals, holder_constant=cst)


@dataclass
class BuildingBlockSet:
    """Decomposition of a normalized wavelet into compactly supported blocks.

    psi / kappa = sum_l (cbar 2^l)^(-gamma) phi_l exactly (finite telescoping),
    each phi_l mean-zero with supp phi_l inside B(y, 2 a0^2 cbar 2^l delta^k).
    The intermediates (Lambda_l, a_l, s_l, xi_l) are retained for audit.
    """

    gamma: float
    cbar: float
    eta: float
    center: int
    scale: float
    kappa: float
    blocks: list[np.ndarray]
    lambdas: list[np.ndarray] = field(repr=False, default_factory=list)
    a_ell: list[float] = field(default_factory=list)
    s_ell: list[float] = field(default_factory=list)
    xis: list[np.ndarray] = field(repr=False, default_factory=list)
    support_radii: list[float] = field(default_factory=list)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def weight(self, ell: int) -> float:
        return (self.cbar * 2.0 ** ell) ** -self.gamma

    def recombine(self) -> np.ndarray:
        out = np.zeros_like(self.blocks[0])
        for ell, phi in enumerate(self.blocks):
            out += self.weight(ell) * phi
        return out


def building_blocks(space: FiniteSpace, wavelet: Wavelet, gamma: float,
                    cbar: float, eta: float = 1.0) -> BuildingBlockSet:
    """Split a wavelet into blocks via nested cut-offs (telescoping construction).

    With h_l the ramp cut-off at radius cbar 2^l delta^k centered at the
    wavelet's center:

        Lambda_0 = h_0 psi~,   Lambda_l = (h_l - h_{l-1}) psi~
        a_l = integral of Lambda_l,   s_l = a_0 + ... + a_l
        xi_l = h_l / integral of h_l
        phi_l = (cbar 2^l)^gamma (Lambda_l + s_{l-1} xi_l - s_l xi_{l+1})

    The series stops at the first L with h_L identically 1 on the wavelet's
    support: there s_L = 0 (it equals the integral of h_L psi~ = 0) and the
    trailing xi_{L+1} term is dropped, which keeps the telescoping and the
    per-block cancellation exact in floating point.
    """
    if gamma <= space.omega:
        raise ValueError(f"gamma = {gamma} must exceed the upper dimension {space.omega}")
    if cbar < 1:
        raise ValueError("cbar must be >= 1")
    kappa = float(np.sqrt(space.weight[space.ball_mask(wavelet.center, wavelet.scale)].sum()))
    psi_t = wavelet.values / kappa
    supp = wavelet.values != 0

    hs = []
    L = 0
    while True:
        h = cutoff(space, wavelet.center, cbar * 2.0 ** L * wavelet.scale, eta).values
        hs.append(h)
        if supp.any() and (h[supp] == 1.0).all():
            break
        if not supp.any():
            break
        L += 1
        if L > 300:
            raise RuntimeError("cut-off never saturates the wavelet support")

    lambdas = [hs[0] * psi_t]
    for ell in range(1, L + 1):
        lambdas.append((hs[ell] - hs[ell - 1]) * psi_t)
    a_ell = [float((lam * space.weight).sum()) for lam in lambdas]
    s_ell = list(np.cumsum(a_ell))
    xis = [h / float((h * space.weight).sum()) for h in hs]

    blocks = []
    for ell in range(L + 1):
        lt = lambdas[ell].copy()
        if ell > 0:
            lt += s_ell[ell - 1] * xis[ell]
        if ell < L:
            lt -= s_ell[ell] * xis[ell + 1]
        blocks.append((cbar * 2.0 ** ell) ** gamma * lt)

    radii = [2.0 * space.a0 ** 2 * cbar * 2.0 ** ell * wavelet.scale for ell in range(L + 1)]
    return BuildingBlockSet(gamma=gamma, cbar=cbar, eta=eta, center=wavelet.center,
                            scale=wavelet.scale, kappa=kappa, blocks=blocks,
                            lambdas=lambdas, a_ell=a_ell, s_ell=s_ell, xis=xis,
                            support_radii=radii)


def block_certificates(space: FiniteSpace, bset: BuildingBlockSet) -> dict:
    """Measured boundedness and Holder constants for a block set.

    Boundedness: |phi_l(x)| <= C (cbar 2^l)^omega / mu(B(y, cbar 2^l delta^k)).
    Holder, over pairs with d(x,y) <= delta^k:
    |phi_l(x)-phi_l(y)| <= C (cbar 2^l delta^k)^-eta (cbar 2^l)^omega d(x,y)^eta
                            / mu(B(y, cbar 2^l delta^k)).
    The construction only guarantees such constants exist; the certificate
    pins the realized values.
    """
    c_bound = 0.0
    c_holder = 0.0
    d_y = space.dist[bset.center]
    close = space.dist <= bset.scale
    np.fill_diagonal(close, False)
    for ell, phi in enumerate(bset.blocks):
        t = bset.cbar * 2.0 ** ell
        mu_ball = float(space.weight[d_y < t * bset.scale].sum())
        c_bound = max(c_bound, float(np.abs(phi).max()) * mu_ball / t ** space.omega)
        if close.any():
            i, j = np.nonzero(close)
            num = np.abs(phi[i] - phi[j]) * mu_ball
            den = (t * bset.scale) ** -bset.eta * t ** space.omega * space.dist[i, j] ** bset.eta
            c_holder = max(c_holder, float((num / den).max()))
        # support check is exact: points outside the stated ball carry 0
        outside = d_y >= bset.support_radii[ell]
        if np.abs(phi[outside]).max(initial=0.0) != 0.0:
            raise AssertionError(f"block {ell} leaks outside its support ball")
    return {"boundedness": c_bound, "holder": c_holder}
