"""Product (p,q)-atoms and the constructive atomic decomposition.

Forward direction: a doubly mean-zero grid function is expanded in the
product wavelet basis, its square-function level sets Omega_j are formed,
every coefficient rectangle is classified into the unique B_j where its
majority mass first drops below half, the wavelets are split into building
blocks, and the (j, l1, l2) cells are normalized into atoms with explicit
coefficients.  All sums are finite, so reconstruction is exact rather than
limiting.

Rectangle atoms are indexed by the maximal rectangles of the epsilon_0
enlargement of the placeholder set (the enlargement is the set the
containment proof actually provides; the un-enlarged family does not contain
the classified rectangles in general).

Converse direction: any atom is a grid function, so its H^p seminorm against
the reference wavelet basis is computed directly; corpus runners aggregate
the maximum as the certified uniform constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicSystem, dilate_mask
from .journe import maximal_rectangles
from .maximal import OpenSet, ell_enlarge, enlarge, epsilon0, level_sets
from .product import (ProductSpace, hp_seminorm, product_transform,
                      square_function)
from .wavelet import build_haar, building_blocks


class ChannelError(ValueError):
    """Input is not doubly mean-zero; carries the offending channel norms."""

    def __init__(self, norms: dict):
        self.norms = norms
        super().__init__(f"function has nonzero mixed/scaling channels: {norms}")


@dataclass
class ProductAtom:
    values: np.ndarray
    omega: OpenSet               # placeholder open set
    ell1: int
    ell2: int
    p: float
    q: float
    grids: tuple[DyadicSystem, DyadicSystem]
    rectangle_atoms: dict = field(default_factory=dict)   # (q1,q2) key -> values
    support_set: OpenSet | None = None
    support_lams: tuple[float, float] | None = None


@dataclass
class DecompositionTerm:
    lam: float                   # full coefficient: weight * lam_raw
    lam_raw: float               # lambda_{j, l1, l2}
    weight: float                # 2^(-l1 g1 - l2 g2)
    atom: ProductAtom
    provenance: tuple[int, int, int]     # (j, l1, l2)


@dataclass
class AtomicDecomposition:
    terms: list[DecompositionTerm]
    p: float
    q: float
    gammas: tuple[float, float]
    residual: float
    report: dict = field(default_factory=dict)

    def lam_sum(self) -> float:
        return sum(abs(t.lam) ** self.p for t in self.terms)

    def reconstruct(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        for t in self.terms:
            out += t.lam * t.atom.values
        return out


def default_gammas(pspace: ProductSpace, p: float, q: float) -> tuple[float, float]:
    """gamma_i = omega_i (1/p + 1/q') + 1: unit slack over the constraint."""
    qprime = q / (q - 1.0)
    return (pspace.x1.omega * (1.0 / p + 1.0 / qprime) + 1.0,
            pspace.x2.omega * (1.0 / p + 1.0 / qprime) + 1.0)


def _support_multipliers(pspace: ProductSpace, ell1: int, ell2: int) -> tuple[float, float]:
    # rectangle-atom support constants C_i = 2 a0_i^2, scaled by the cell
    return (2.0 * pspace.x1.a0 ** 2 * 2.0 ** ell1,
            2.0 * pspace.x2.a0 ** 2 * 2.0 ** ell2)


def _sf_restricted(pspace: ProductSpace, pairs, coeff, rect_masks) -> np.ndarray:
    s2 = np.zeros(pspace.shape)
    for (i, j) in pairs:
        rm, mu = rect_masks[(i, j)]
        s2 += coeff[i, j] ** 2 / mu * rm
    return np.sqrt(s2)


def atomic_decompose(pspace: ProductSpace, f: np.ndarray, p: float, q: float,
                     gamma1: float | None = None, gamma2: float | None = None,
                     coeff_tol: float = 1e-14) -> AtomicDecomposition:
    """Decompose f into (p,q)-atoms with explicit coefficients.

    Requires f doubly mean-zero (no mixed channels), p in (0,1], q > 1 and
    gamma_i > omega_i (1/p + 1/q').  The coefficient for cell (j, l1, l2) is

        lambda = 2^(l1 w1 + l2 w2) ||S(f_Bj)||_r
                 ((1 + l1 w1 + l2 w2) 2^(l1 w1 + l2 w2) mu(Omega~_j))^(1/p - 1/r)

    with r = q for q >= 2 and r = 2 for 1 < q < 2, and the atom is the
    block sum over B_j divided by lambda.  Terms assemble back to f exactly
    up to floating point (finite telescoping).
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if q <= 1:
        raise ValueError("q must exceed 1")
    qprime = q / (q - 1.0)
    g1, g2 = default_gammas(pspace, p, q)
    gamma1 = g1 if gamma1 is None else gamma1
    gamma2 = g2 if gamma2 is None else gamma2
    lo1 = pspace.x1.omega * (1.0 / p + 1.0 / qprime)
    lo2 = pspace.x2.omega * (1.0 / p + 1.0 / qprime)
    if gamma1 <= lo1 or gamma2 <= lo2:
        raise ValueError(
            f"gamma constraint violated: need gamma1 > {lo1:.6g} and gamma2 > {lo2:.6g}, "
            f"got ({gamma1:.6g}, {gamma2:.6g})")

    f = np.asarray(f, dtype=float)
    coeffs = product_transform(pspace, f)
    norms = coeffs.channel_norms()
    fscale = max(norms.values())
    if fscale > 0 and max(norms["ws"], norms["sw"], norms["ss"]) > 1e-10 * fscale:
        raise ChannelError(norms)

    dec = AtomicDecomposition(terms=[], p=p, q=q, gammas=(gamma1, gamma2),
                              residual=0.0)
    cw = coeffs.ww
    live = np.argwhere(np.abs(cw) > coeff_tol * max(1.0, np.abs(cw).max()))
    if live.size == 0:
        dec.report = {"n_terms": 0, "lam_sum": 0.0, "sf_p_norm": 0.0}
        return dec

    sf = square_function(pspace, coeffs)
    fam, _ = level_sets(pspace, sf)
    b1, b2 = pspace.bases

    rect_masks = {}
    rect_of_pair = {}
    for i, j in live:
        c1, c2 = pspace.wavelet_rectangle(i, j)
        rect_masks[(i, j)] = (pspace.rectangle_mask(c1, c2), c1.measure * c2.measure)
        rect_of_pair[(i, j)] = (c1, c2)

    # classify each distinct rectangle into its unique B_j
    j_of_rect: dict = {}
    js = fam.js()
    for (i, j), (c1, c2) in rect_of_pair.items():
        key = c1.id + c2.id
        if key in j_of_rect:
            continue
        rm, mu = rect_masks[(i, j)]
        w_in = pspace.weights[rm]
        o_in = [float(w_in[fam.sets[jj].mask[rm]].sum()) for jj in js]
        hits = [jj for jj, m in zip(js, o_in) if m > mu / 2.0]
        if not hits:
            raise AssertionError("nonzero-coefficient rectangle escaped classification")
        j_of_rect[key] = max(hits)
    pairs_by_j: dict[int, list] = {}
    for (i, j), (c1, c2) in rect_of_pair.items():
        pairs_by_j.setdefault(j_of_rect[c1.id + c2.id], []).append((i, j))

    eps0 = epsilon0(pspace)
    blocks1 = [building_blocks(pspace.x1, w, gamma1, cbar=1.0) for w in b1.wavelets]
    blocks2 = [building_blocks(pspace.x2, w, gamma2, cbar=1.0) for w in b2.wavelets]
    kphi1 = {}   # (i, ell) -> kappa_i * phi_ell, zeros row if series ended
    kphi2 = {}

    def kphi(blocks, cache, i, ell, n):
        if (i, ell) not in cache:
            bs = blocks[i]
            cache[(i, ell)] = (bs.kappa * bs.blocks[ell] if ell < bs.n_blocks
                               else np.zeros(n))
        return cache[(i, ell)]

    w1o, w2o = pspace.x1.omega, pspace.x2.omega
    sf_p = float(((sf ** p) * pspace.weights).sum())
    recon = np.zeros(pspace.shape)
    tau_map: dict = {}

    for jj in sorted(pairs_by_j):
        pairs = pairs_by_j[jj]
        omega_j = fam.sets[jj]
        omega_t = enlarge(pspace, omega_j, eps0)
        rects = {}
        for (i, j) in pairs:
            c1, c2 = rect_of_pair[(i, j)]
            rects[c1.id + c2.id] = (c1, c2)
        for key, (c1, c2) in rects.items():
            if (pspace.rectangle_mask(c1, c2) & ~omega_t.mask).any():
                raise AssertionError(f"classified rectangle {key} escapes the enlargement")

        family = maximal_rectangles(pspace, omega_t, "both")
        if q >= 2:
            pool = family.m_all
        else:
            m1keys = {r.key for r in family.m1}
            pool = family.m1 + [r for r in family.m2 if r.key not in m1keys]
        pool_sorted = sorted(pool, key=lambda r: r.key)

        def tau(key):
            # lexicographically smallest maximal rectangle containing the key
            if key not in tau_map:
                q1m = pspace.systems[0].member_mask(*key[:2])
                q2m = pspace.systems[1].member_mask(*key[2:])
                for cand in pool_sorted:
                    c1m = pspace.systems[0].member_mask(*cand.q1)
                    c2m = pspace.systems[1].member_mask(*cand.q2)
                    if not (q1m & ~c1m).any() and not (q2m & ~c2m).any():
                        tau_map[key] = cand.key
                        break
                else:
                    raise AssertionError(f"no maximal rectangle contains {key}")
            return tau_map[key]

        sfb = _sf_restricted(pspace, pairs, cw, rect_masks)
        r = q if q >= 2 else 2.0
        sfb_norm = pspace.lq_norm(sfb, r)
        if sfb_norm == 0.0:
            continue
        Lmax1 = max(blocks1[i].n_blocks for i, _ in pairs)
        Lmax2 = max(blocks2[j].n_blocks for _, j in pairs)
        for ell1 in range(Lmax1):
            for ell2 in range(Lmax2):
                cell = [(i, j) for (i, j) in pairs
                        if blocks1[i].n_blocks > ell1 and blocks2[j].n_blocks > ell2]
                if not cell:
                    continue
                growth = ((1.0 + ell1 * w1o + ell2 * w2o)
                          * 2.0 ** (ell1 * w1o + ell2 * w2o) * omega_t.measure)
                lam_raw = (2.0 ** (ell1 * w1o + ell2 * w2o) * sfb_norm
                           * growth ** (1.0 / p - 1.0 / r))
                weight = 2.0 ** (-ell1 * gamma1 - ell2 * gamma2)
                rect_atoms: dict = {}
                for (i, j) in cell:
                    c1, c2 = rect_of_pair[(i, j)]
                    tkey = tau(c1.id + c2.id)
                    contrib = np.outer(kphi(blocks1, kphi1, i, ell1, pspace.x1.n),
                                       kphi(blocks2, kphi2, j, ell2, pspace.x2.n))
                    contrib = cw[i, j] / lam_raw * contrib
                    if tkey in rect_atoms:
                        rect_atoms[tkey] = rect_atoms[tkey] + contrib
                    else:
                        rect_atoms[tkey] = contrib
                avals = np.zeros(pspace.shape)
                for v in rect_atoms.values():
                    avals += v
                if np.abs(avals).max() == 0.0:
                    continue
                lam1, lam2 = _support_multipliers(pspace, ell1, ell2)
                support, _ = ell_enlarge(pspace, omega_t, ell1, ell2, lam1, lam2)
                atom = ProductAtom(values=avals, omega=omega_j, ell1=ell1, ell2=ell2,
                                   p=p, q=q, grids=pspace.systems,
                                   rectangle_atoms=rect_atoms,
                                   support_set=support, support_lams=(lam1, lam2))
                term = DecompositionTerm(lam=weight * lam_raw, lam_raw=lam_raw,
                                         weight=weight, atom=atom,
                                         provenance=(jj, ell1, ell2))
                dec.terms.append(term)
                recon += term.lam * avals

    fq = pspace.lq_norm(f, q)
    dec.residual = pspace.lq_norm(recon - f, q) / fq if fq > 0 else 0.0
    lam_sum = dec.lam_sum()
    dec.report = {
        "n_terms": len(dec.terms),
        "lam_sum": lam_sum,
        "sf_p_norm": sf_p,
        "lam_sum_constant": lam_sum / sf_p if sf_p > 0 else 0.0,
        "epsilon0": eps0,
        "gammas": (gamma1, gamma2),
    }
    return dec


def _atom_view(pspace: ProductSpace, atom: ProductAtom) -> ProductSpace:
    """Product view whose systems are the atom's own grids."""
    if atom.grids == pspace.systems:
        return pspace
    s1, s2 = atom.grids
    return ProductSpace(pspace.x1, pspace.x2, system1=s1, system2=s2,
                        basis1=build_haar(s1), basis2=build_haar(s2))


def verify_atom(pspace: ProductSpace, atom: ProductAtom,
                deltas=(0.5, 1.0, 2.0), cancel_tol: float = 1e-10) -> dict:
    """Check every (p,q)-atom condition numerically.

    Exact checks (support containments, rectangle-atom indexing, per-variable
    cancellation, decomposition into rectangle atoms) either pass or name the
    failing condition and rectangle; size-type conditions report measured
    constants.  Stretch ratios for the 1 < q < 2 branch are certified at the
    default delta = q/(2p) and at the supplied extra deltas.
    """
    view = _atom_view(pspace, atom)
    p, q = atom.p, atom.q
    failures: list[str] = []
    eps0 = epsilon0(view)
    omega_t = enlarge(view, atom.omega, eps0)
    lam1, lam2 = atom.support_lams or _support_multipliers(view, atom.ell1, atom.ell2)
    support, _ = ell_enlarge(view, omega_t, atom.ell1, atom.ell2, lam1, lam2)

    scale = float(np.abs(atom.values).max())
    if scale > 0 and (np.abs(atom.values) > 1e-14 * scale)[~support.mask].any():
        failures.append("condition (1): support escapes the enlarged open set")

    w1o, w2o = view.x1.omega, view.x2.omega
    growth = ((1.0 + atom.ell1 * w1o + atom.ell2 * w2o)
              * 2.0 ** (atom.ell1 * w1o + atom.ell2 * w2o) * omega_t.measure)
    budget = growth ** (1.0 / q - 1.0 / p)
    a_q = view.lq_norm(atom.values, q)
    c_q_size = a_q / budget if budget > 0 else math.inf

    family = maximal_rectangles(view, omega_t, "both")
    keys_all = {r.key for r in family.m_all}
    keys_m1 = {r.key for r in family.m1}
    keys_m2 = {r.key for r in family.m2}
    allowed = keys_all if q >= 2 else keys_m1 | (keys_m2 - keys_m1)

    total = np.zeros(view.shape)
    sum_q = 0.0
    for key, vals in atom.rectangle_atoms.items():
        total += vals
        sum_q += view.lq_norm(vals, q) ** q
        if key not in allowed:
            failures.append(f"condition (3): rectangle {key} is not in the maximal family")
            continue
        c1 = view.systems[0].cube(*key[:2])
        c2 = view.systems[1].cube(*key[2:])
        box = np.outer(dilate_mask(view.systems[0], c1, lam1),
                       dilate_mask(view.systems[1], c2, lam2))
        vscale = float(np.abs(vals).max())
        if vscale == 0:
            continue
        livemask = np.abs(vals) > 1e-14 * vscale
        if (livemask & ~box).any():
            failures.append(f"condition (3)(i): rectangle atom {key} escapes its dilated box")
        if (livemask & ~support.mask).any():
            failures.append(f"condition (3)(i): rectangle atom {key} escapes the enlargement")
        col = np.abs(view.x1.weight @ vals).max()
        row = np.abs(vals @ view.x2.weight).max()
        if max(col, row) > cancel_tol * vscale:
            failures.append(f"condition (3)(ii): cancellation fails on rectangle {key}")

    if scale > 0 and np.abs(total - atom.values).max() > 1e-12 * scale:
        failures.append("condition (3): rectangle atoms do not sum to the atom")

    cert: dict = {
        "passed": not failures,
        "failures": failures,
        "C_q_size": c_q_size,
        "n_rectangle_atoms": len(atom.rectangle_atoms),
        "epsilon0": eps0,
    }
    if q >= 2:
        cert["C_q_iii_a"] = (sum_q ** (1.0 / q)) / budget if budget > 0 else math.inf
    else:
        ratios = {}
        delta_default = q / (2.0 * p)
        for d in sorted(set(deltas) | {delta_default}):
            s = 0.0
            for key in atom.rectangle_atoms:
                if key in keys_m1:
                    jhat = family.stretch2[key]
                    rho = view.systems[1].delta ** (key[2] - jhat[0])
                elif key in keys_m2:
                    jhat = family.stretch1[key]
                    rho = view.systems[0].delta ** (key[0] - jhat[0])
                else:
                    continue
                s += rho ** d * view.lq_norm(atom.rectangle_atoms[key], q) ** q
            ratios[d] = (s ** (1.0 / q)) / budget if budget > 0 else math.inf
        cert["C_q_delta_iii_b"] = ratios
        cert["delta_default"] = delta_default
    return cert


def atom_hp_bound(pspace: ProductSpace, atom: ProductAtom, p: float) -> float:
    """||S(a)||_{L^p} computed directly with the reference wavelet basis."""
    return hp_seminorm(pspace, atom.values, p)


def generate_atom(pspace: ProductSpace, rng, p: float, q: float,
                  ell1: int, ell2: int,
                  grids: tuple[DyadicSystem, DyadicSystem] | None = None,
                  max_rects: int = 4) -> ProductAtom | None:
    """Random (p,q)-atom: rectangle atoms on the maximal rectangles of a
    random open set's enlargement, per-variable mean-zeroed by projection,
    normalized to the condition-(2) budget (C_q = 1).

    Returns None when the random draw degenerates (single-point boxes cannot
    carry cancellation); callers redraw.
    """
    view = pspace if grids is None else ProductSpace(
        pspace.x1, pspace.x2, system1=grids[0], system2=grids[1],
        basis1=build_haar(grids[0]), basis2=build_haar(grids[1]))
    s1, s2 = view.systems

    cubes1 = [c for c in s1.all_cubes()]
    cubes2 = [c for c in s2.all_cubes()]
    mask = np.zeros(view.shape, dtype=bool)
    for _ in range(int(rng.integers(1, 4))):
        c1 = cubes1[int(rng.integers(len(cubes1)))]
        c2 = cubes2[int(rng.integers(len(cubes2)))]
        mask |= view.rectangle_mask(c1, c2)
    omega = OpenSet.from_mask(view, mask)
    omega_t = enlarge(view, omega, epsilon0(view))

    family = maximal_rectangles(view, omega_t, "both")
    if q >= 2:
        pool = list(family.m_all)
    else:
        m1keys = {r.key for r in family.m1}
        pool = family.m1 + [r for r in family.m2 if r.key not in m1keys]
    if not pool:
        return None
    order = rng.permutation(len(pool))
    pool = [pool[int(i)] for i in order[:max_rects]]

    lam1, lam2 = _support_multipliers(view, ell1, ell2)
    rect_atoms = {}
    values = np.zeros(view.shape)
    for ref in pool:
        c1 = s1.cube(*ref.q1)
        c2 = s2.cube(*ref.q2)
        u = dilate_mask(s1, c1, lam1)
        v = dilate_mask(s2, c2, lam2)
        if u.sum() < 2 or v.sum() < 2:
            continue
        block = rng.standard_normal((int(u.sum()), int(v.sum())))
        wu, wv = view.x1.weight[u], view.x2.weight[v]
        block = block - np.outer(np.ones(len(wu)), wu @ block) / wu.sum()
        block = block - np.outer(block @ wv, np.ones(len(wv))) / wv.sum()
        vals = np.zeros(view.shape)
        vals[np.ix_(u, v)] = block
        key = ref.key
        rect_atoms[key] = rect_atoms.get(key, 0.0) + vals
        values = values + vals
    if not rect_atoms or np.abs(values).max() == 0.0:
        return None

    w1o, w2o = view.x1.omega, view.x2.omega
    growth = ((1.0 + ell1 * w1o + ell2 * w2o)
              * 2.0 ** (ell1 * w1o + ell2 * w2o) * omega_t.measure)
    budget = growth ** (1.0 / q - 1.0 / p)
    norm = view.lq_norm(values, q)
    scale = budget / norm
    values = values * scale
    rect_atoms = {k: v * scale for k, v in rect_atoms.items()}
    support, _ = ell_enlarge(view, omega_t, ell1, ell2, lam1, lam2)
    return ProductAtom(values=values, omega=omega, ell1=ell1, ell2=ell2, p=p, q=q,
                       grids=view.systems, rectangle_atoms=rect_atoms,
                       support_set=support, support_lams=(lam1, lam2))


def equivalence_report(pspace: ProductSpace, corpus, p: float, q: float) -> dict:
    """Two-sided comparison of the H^p seminorm with atomic coefficient sums.

    Per corpus function: upper ratio sum|lam|^p / ||f||_Hp^p from the forward
    construction, lower ratio its reciprocal certified through the converse
    uniform bound max ||S(a)||_p over the produced atoms.
    """
    rows = []
    if not list(corpus):
        raise ValueError("empty corpus")
    for f in corpus:
        dec = atomic_decompose(pspace, f, p, q)
        hp_p = hp_seminorm(pspace, f, p) ** p
        lam_sum = dec.lam_sum()
        sa_max = max((atom_hp_bound(pspace, t.atom, p) for t in dec.terms), default=0.0)
        rows.append({
            "hp_p": hp_p,
            "lam_sum": lam_sum,
            "upper_ratio": lam_sum / hp_p if hp_p > 0 else 0.0,
            "lower_ratio": hp_p / lam_sum if lam_sum > 0 else 0.0,
            "residual": dec.residual,
            "max_sa_p": sa_max,
        })
    ups = [r["upper_ratio"] for r in rows if r["upper_ratio"] > 0]
    los = [r["lower_ratio"] for r in rows if r["lower_ratio"] > 0]
    return {
        "per_function": rows,
        "upper_ratio_range": (min(ups), max(ups)) if ups else (0.0, 0.0),
        "lower_ratio_range": (min(los), max(los)) if los else (0.0, 0.0),
        "max_sa_p": max(r["max_sa_p"] for r in rows),
        "all_finite": all(math.isfinite(r["upper_ratio"]) and math.isfinite(r["lower_ratio"])
                          for r in rows),
    }
