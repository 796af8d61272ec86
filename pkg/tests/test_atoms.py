import math

import numpy as np
import pytest

from prodhardy import (ChannelError, OpenSet, atom_hp_bound, atomic_decompose,
                       enlarge, epsilon0, equivalence_report, generate_atom,
                       hp_seminorm, level_sets, product_transform,
                       square_function, verify_atom)
from prodhardy.atoms import ProductAtom, _support_multipliers
from prodhardy.dyadic import build_system


def product_pair(pspace, i, j):
    return np.outer(pspace.bases[0].wavelets[i].values,
                    pspace.bases[1].wavelets[j].values)


def test_zero_function_empty_decomposition(pspace8):
    dec = atomic_decompose(pspace8, np.zeros(pspace8.shape), 1.0, 2.0)
    assert not dec.terms and dec.residual == 0.0
    assert dec.lam_sum() == 0.0


def test_single_wavelet_hand_trace(pspace8):
    f = product_pair(pspace8, 1, 3)
    dec = atomic_decompose(pspace8, f, 1.0, 2.0)
    # one classified rectangle, one j-shell: provenance j identical across terms
    js = {t.provenance[0] for t in dec.terms}
    assert len(js) == 1
    c1, c2 = pspace8.wavelet_rectangle(1, 3)
    mu = c1.measure * c2.measure
    # the j-shell is the largest j with 2^j < mu^(-1/2)
    (jstar,) = js
    assert 2.0 ** jstar < mu ** -0.5 <= 2.0 ** (jstar + 1)
    # reconstruction is exact and the lambda-sum compares to ||Sf||_p^p = mu^(1-p/2)
    assert dec.residual <= 1e-12
    assert dec.report["sf_p_norm"] == pytest.approx(mu ** 0.5, rel=1e-12)
    assert 0 < dec.lam_sum() < math.inf
    for t in dec.terms:
        assert verify_atom(pspace8, t.atom)["passed"]


def test_random_functions_reconstruct_and_verify(pspace8):
    rng = np.random.default_rng(0)
    for _ in range(5):
        f = pspace8.random_function(rng)
        dec = atomic_decompose(pspace8, f, 1.0, 2.0)
        assert dec.residual <= 1e-8
        assert math.isfinite(dec.report["lam_sum_constant"])
        for t in dec.terms:
            cert = verify_atom(pspace8, t.atom)
            assert cert["passed"], cert["failures"]


@pytest.mark.parametrize("q", [1.5, 3.0])
def test_both_q_branches(pspace8, q):
    rng = np.random.default_rng(1)
    for _ in range(3):
        f = pspace8.random_function(rng)
        dec = atomic_decompose(pspace8, f, 1.0, q)
        assert dec.residual <= 1e-8
        for t in dec.terms:
            cert = verify_atom(pspace8, t.atom)
            assert cert["passed"], cert["failures"]
            if q < 2:
                assert "C_q_delta_iii_b" in cert
                assert cert["delta_default"] == pytest.approx(q / 2.0)
            else:
                assert "C_q_iii_a" in cert


def test_gamma_constraint_rejected(pspace8):
    f = product_pair(pspace8, 0, 0)
    lo = pspace8.x1.omega * (1.0 + 0.5)
    with pytest.raises(ValueError, match="gamma constraint"):
        atomic_decompose(pspace8, f, 1.0, 2.0, gamma1=lo, gamma2=lo)


def test_non_mean_zero_rejected(pspace8):
    f = np.ones(pspace8.shape)
    with pytest.raises(ChannelError) as exc:
        atomic_decompose(pspace8, f, 1.0, 2.0)
    assert "ss" in exc.value.norms


def test_classification_membership_facts(pspace8):
    """Independent re-derivation: majority mass in Omega_j, not in Omega_{j+1},
    mu(R \\ Omega_{j+1}) >= mu(R)/2, and R inside the eps0 enlargement."""
    rng = np.random.default_rng(2)
    f = pspace8.random_function(rng)
    co = product_transform(pspace8, f)
    sf = square_function(pspace8, co)
    fam, _ = level_sets(pspace8, sf)
    eps0 = epsilon0(pspace8)
    js = fam.js()
    seen = set()
    for i in range(co.n_wav[0]):
        for j in range(co.n_wav[1]):
            if abs(co.ww[i, j]) < 1e-12:
                continue
            c1, c2 = pspace8.wavelet_rectangle(i, j)
            if c1.id + c2.id in seen:
                continue
            seen.add(c1.id + c2.id)
            rm = pspace8.rectangle_mask(c1, c2)
            mu = c1.measure * c2.measure
            w = pspace8.weights
            hits = [jj for jj in js if w[rm & fam.sets[jj].mask].sum() > mu / 2.0]
            assert hits, "every nonzero rectangle must classify"
            jstar = max(hits)
            nxt = fam.sets[jstar + 1].mask if jstar + 1 in fam.sets else np.zeros_like(rm)
            inside_next = w[rm & nxt].sum()
            assert inside_next <= mu / 2.0            # unique B_j
            assert mu - inside_next >= mu / 2.0       # mu(R minus Omega_{j+1}) >= mu(R)/2
            om_t = enlarge(pspace8, fam.sets[jstar], eps0)
            assert not (rm & ~om_t.mask).any()        # R inside the enlargement


def test_reconstruction_matches_ww_channel_only(pspace8):
    rng = np.random.default_rng(3)
    f = pspace8.random_function(rng)
    dec = atomic_decompose(pspace8, f, 1.0, 2.0)
    recon = dec.reconstruct(pspace8.shape)
    assert pspace8.lq_norm(recon - f, 2.0) <= 1e-10 * pspace8.lq_norm(f, 2.0)


def test_scaling_homogeneity_power_of_two(pspace8):
    rng = np.random.default_rng(4)
    f = pspace8.random_function(rng)
    base = atomic_decompose(pspace8, f, 1.0, 2.0)
    hp = hp_seminorm(pspace8, f, 1.0)
    for t in (4.0, 1024.0):
        dec = atomic_decompose(pspace8, t * f, 1.0, 2.0)
        assert dec.lam_sum() == pytest.approx(t * base.lam_sum(), rel=1e-10)
        assert hp_seminorm(pspace8, t * f, 1.0) == pytest.approx(t * hp, rel=1e-12)


def test_verify_hand_built_single_rectangle_atom(pspace8):
    rng = np.random.default_rng(5)
    s1, s2 = pspace8.systems
    c1, c2 = s1.cube(-1, 0), s2.cube(-1, 1)
    om = OpenSet.from_mask(pspace8, pspace8.rectangle_mask(c1, c2))
    om_t = enlarge(pspace8, om, epsilon0(pspace8))
    from prodhardy import maximal_rectangles
    ref = sorted(maximal_rectangles(pspace8, om_t, "both").m_all,
                 key=lambda r: r.key)[0]
    lam1, lam2 = _support_multipliers(pspace8, 0, 0)
    from prodhardy.dyadic import dilate_mask
    u = dilate_mask(s1, s1.cube(*ref.q1), lam1)
    v = dilate_mask(s2, s2.cube(*ref.q2), lam2)
    block = rng.standard_normal((int(u.sum()), int(v.sum())))
    wu, wv = pspace8.x1.weight[u], pspace8.x2.weight[v]
    block -= np.outer(np.ones(len(wu)), wu @ block) / wu.sum()
    block -= np.outer(block @ wv, np.ones(len(wv))) / wv.sum()
    vals = np.zeros(pspace8.shape)
    vals[np.ix_(u, v)] = block
    atom = ProductAtom(values=vals, omega=om, ell1=0, ell2=0, p=1.0, q=2.0,
                       grids=pspace8.systems, rectangle_atoms={ref.key: vals})
    cert = verify_atom(pspace8, atom)
    assert cert["passed"], cert["failures"]
    growth = om_t.measure      # ell = 0: growth factor 1
    assert cert["C_q_size"] == pytest.approx(
        pspace8.lq_norm(vals, 2.0) / growth ** (0.5 - 1.0), rel=1e-12)


def test_verify_zero_atom(pspace8):
    om = OpenSet.from_pairs(pspace8, [(0, 0)])
    atom = ProductAtom(values=np.zeros(pspace8.shape), omega=om, ell1=0, ell2=0,
                       p=1.0, q=2.0, grids=pspace8.systems, rectangle_atoms={})
    cert = verify_atom(pspace8, atom)
    assert cert["passed"] and cert["C_q_size"] == 0.0


def test_verify_detects_broken_cancellation(pspace8):
    rng = np.random.default_rng(6)
    atom = None
    while atom is None:
        atom = generate_atom(pspace8, rng, 1.0, 2.0, 0, 0)
    key, vals = next(iter(atom.rectangle_atoms.items()))
    bad = vals.copy()
    bad[vals != 0] += np.abs(vals).max()
    atom.rectangle_atoms[key] = bad
    atom.values = atom.values - vals + bad
    cert = verify_atom(pspace8, atom)
    assert not cert["passed"]
    assert any("(3)(ii)" in f for f in cert["failures"])


def test_atom_hp_bound_zero(pspace8):
    om = OpenSet.from_pairs(pspace8, [(0, 0)])
    atom = ProductAtom(values=np.zeros(pspace8.shape), omega=om, ell1=0, ell2=0,
                       p=1.0, q=2.0, grids=pspace8.systems, rectangle_atoms={})
    assert atom_hp_bound(pspace8, atom, 1.0) == 0.0


def test_atom_hp_bound_single_wavelet_two_paths(pspace8):
    lam = 3.7
    f = product_pair(pspace8, 2, 2)
    om = OpenSet.from_pairs(pspace8, [(0, 0)])
    atom = ProductAtom(values=f / lam, omega=om, ell1=0, ell2=0, p=1.0, q=2.0,
                       grids=pspace8.systems, rectangle_atoms={})
    got = atom_hp_bound(pspace8, atom, 1.0)
    # path 1: the module's seminorm of f, normalized
    assert got == pytest.approx(hp_seminorm(pspace8, f, 1.0) / lam, rel=1e-12)
    # path 2: closed form for a single term, mu(R)^(1/p - 1/2) / lam
    c1, c2 = pspace8.wavelet_rectangle(2, 2)
    mu = c1.measure * c2.measure
    assert got == pytest.approx(mu ** 0.5 / lam, rel=1e-12)


def test_generated_atom_corpus_uniform_bound(pspace8):
    rng = np.random.default_rng(7)
    alt1 = build_system(pspace8.x1, 0.25, order_seed=5)
    alt2 = build_system(pspace8.x2, 0.25, order_seed=9)
    worst = 0.0
    made = 0
    while made < 25:
        l1, l2 = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        grids = (alt1, alt2) if made % 3 == 0 else None
        atom = generate_atom(pspace8, rng, 1.0, 2.0, l1, l2, grids=grids)
        if atom is None:
            continue
        made += 1
        cert = verify_atom(pspace8, atom)
        assert cert["passed"], cert["failures"]
        assert cert["C_q_size"] == pytest.approx(1.0, rel=1e-10)   # budget-normalized
        worst = max(worst, atom_hp_bound(pspace8, atom, 1.0))
    assert math.isfinite(worst) and worst > 0


def test_generated_atom_q_small_branch(pspace8):
    rng = np.random.default_rng(8)
    atom = None
    while atom is None:
        atom = generate_atom(pspace8, rng, 1.0, 1.5, 1, 0)
    cert = verify_atom(pspace8, atom)
    assert cert["passed"], cert["failures"]
    assert set(cert["C_q_delta_iii_b"]) >= {0.5, 1.0, 2.0, 0.75}


def test_c_q_regression_guard(pspace8):
    """Condition-(2) constants: corpus-level max is seed-stable within 2x.

    Individual atoms spread wider (observed up to ~3x between single corpus
    functions); the guard is on the seeded-corpus aggregate plus an absolute
    band pinned from the observed runs.
    """
    maxima = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        cqs = []
        for _ in range(10):
            f = pspace8.random_function(rng)
            dec = atomic_decompose(pspace8, f, 1.0, 2.0)
            cqs.extend(verify_atom(pspace8, t.atom)["C_q_size"] for t in dec.terms)
        maxima.append(max(cqs))
        assert all(0.05 < c < 10.0 for c in cqs)
    assert max(maxima) / min(maxima) <= 2.0


def test_gamma_degradation_monotone(pspace8):
    """lambda-sum constant grows monotonically as gamma drops to the bound."""
    rng = np.random.default_rng(11)
    f = pspace8.random_function(rng)
    lo = pspace8.x1.omega * (1.0 + 0.5)      # p = 1, q = 2: omega (1/p + 1/q')
    cs = []
    for g in (lo + 0.05, lo + 0.3, lo + 1.0, lo + 2.0):
        dec = atomic_decompose(pspace8, f, 1.0, 2.0, gamma1=g, gamma2=g)
        assert dec.residual <= 1e-8
        cs.append(dec.report["lam_sum_constant"])
    print("gamma degradation toward the constraint boundary:", cs)
    assert all(a >= b for a, b in zip(cs, cs[1:]))


def test_equivalence_report(pspace8):
    rng = np.random.default_rng(9)
    corpus = [product_pair(pspace8, 0, 1)] + [pspace8.random_function(rng)
                                              for _ in range(3)]
    rep = equivalence_report(pspace8, corpus, 1.0, 2.0)
    assert rep["all_finite"]
    lo, hi = rep["upper_ratio_range"]
    assert 0 < lo <= hi < math.inf
    assert math.isfinite(rep["max_sa_p"])
    with pytest.raises(ValueError, match="empty corpus"):
        equivalence_report(pspace8, [], 1.0, 2.0)


def test_atoms_on_alternate_grid_verify_against_their_own_grids(pspace8):
    rng = np.random.default_rng(10)
    alt1 = build_system(pspace8.x1, 0.5, order_seed=1)
    alt2 = build_system(pspace8.x2, 0.5, order_seed=2)
    atom = None
    while atom is None:
        atom = generate_atom(pspace8, rng, 1.0, 2.0, 0, 1, grids=(alt1, alt2))
    assert atom.grids == (alt1, alt2)
    cert = verify_atom(pspace8, atom)
    assert cert["passed"], cert["failures"]
    assert math.isfinite(atom_hp_bound(pspace8, atom, 1.0))
