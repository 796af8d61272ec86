import json

import numpy as np
import pytest

from prodhardy.cli import main


@pytest.fixture()
def space_file(tmp_path):
    pts = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
    doc = {"matrix": [[abs(a - b) for b in pts] for a in pts]}
    path = tmp_path / "line8.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run(args):
    return main(args)


def test_build_deterministic(space_file, tmp_path, capsys):
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert run(["build", "--space", space_file, "--delta", "0.25",
                "--seed", "3", "--out", str(out1)]) == 0
    assert run(["build", "--space", space_file, "--delta", "0.25",
                "--seed", "3", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = json.loads(out1.read_text())
    fac = doc["factors"][0]
    assert "parents" in fac["system"]
    assert fac["verification"]["C1_certified"] == 2.0
    assert len(fac["basis"]["wavelets"]) == 7


def test_build_one_point_space(tmp_path):
    path = tmp_path / "one.json"
    path.write_text(json.dumps({"matrix": [[0.0]]}))
    out = tmp_path / "out.json"
    assert run(["build", "--space", str(path), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["factors"][0]["basis"]["wavelets"] == []


def test_decompose_zero_function(space_file, tmp_path):
    fpath = tmp_path / "zero.json"
    fpath.write_text(json.dumps({"dense": [[0.0] * 8 for _ in range(8)]}))
    out = tmp_path / "dec.json"
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--function", str(fpath), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["terms"] == [] and doc["residual"] == 0.0


def test_decompose_seeded_random(space_file, tmp_path):
    out = tmp_path / "dec.json"
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--seed", "1", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["all_certificates_pass"]
    assert doc["residual"] <= 1e-8
    assert all(t["certificate"]["passed"] for t in doc["terms"])


def test_decompose_triples_function(space_file, tmp_path):
    # a doubly mean-zero bump over a 2x2 corner
    tri = [[0, 0, 1.0], [0, 1, -1.0], [1, 0, -1.0], [1, 1, 1.0]]
    fpath = tmp_path / "f.json"
    fpath.write_text(json.dumps({"triples": tri}))
    out = tmp_path / "dec.json"
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--function", str(fpath), "--out", str(out)]) == 0


def test_decompose_broken_gamma_exits_nonzero(space_file, capsys):
    rc = run(["decompose", "--space", space_file, "--delta", "0.25",
              "--gamma1", "0.1", "--gamma2", "0.1"])
    assert rc == 2
    assert "gamma constraint" in capsys.readouterr().err


def test_build_export_matches_tree_oracle(tmp_path):
    # canonical 4-point line: the exported parent arrays must equal the
    # in-process construction's (the hand-traced {0,1,2} | {10} split)
    pts = [0.0, 1.0, 2.0, 10.0]
    path = tmp_path / "canon.json"
    path.write_text(json.dumps({"matrix": [[abs(a - b) for b in pts] for a in pts]}))
    out = tmp_path / "build.json"
    assert run(["build", "--space", str(path), "--delta", "0.25",
                "--out", str(out)]) == 0
    from conftest import line_space
    from prodhardy import build_system, export_system
    expected = json.loads(export_system(build_system(line_space(pts), 0.25)))
    got = json.loads(out.read_text())["factors"][0]["system"]
    assert got["parents"] == expected["parents"]
    assert got["nets"] == expected["nets"]


def test_decompose_single_wavelet_matches_module_trace(space_file, tmp_path):
    from conftest import line_space
    from prodhardy import ProductSpace, atomic_decompose
    import numpy as np
    sp = line_space(np.arange(8.0))
    ps = ProductSpace(sp, sp, delta=0.25)
    f = np.outer(ps.bases[0].wavelets[1].values, ps.bases[1].wavelets[3].values)
    fpath = tmp_path / "wavelet.json"
    fpath.write_text(json.dumps({"dense": f.tolist()}))
    out = tmp_path / "dec.json"
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--function", str(fpath), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    dec = atomic_decompose(ps, f, 1.0, 2.0)
    assert len(doc["terms"]) == len(dec.terms)
    for got, want in zip(doc["terms"], dec.terms):
        assert got["lambda"] == pytest.approx(want.lam, rel=1e-12)
        assert (got["j"], got["ell1"], got["ell2"]) == want.provenance


def test_certify_default_corpus(tmp_path):
    out = tmp_path / "cert.json"
    assert run(["certify", "--seed", "0", "--delta", "0.25",
                "--corpus", "10", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["all_exact_pass"]
    assert doc["checks"]["basis"]["exact_pass"]
    assert doc["checks"]["journe"]["exact_pass"]


def test_certify_seed_changes_constants_not_exactness(tmp_path):
    outs = []
    for seed in (0, 1):
        out = tmp_path / f"cert{seed}.json"
        assert run(["certify", "--seed", str(seed), "--delta", "0.25",
                    "--corpus", "6", "--out", str(out)]) == 0
        outs.append(json.loads(out.read_text()))
    assert all(doc["all_exact_pass"] for doc in outs)


def test_certify_byte_identical_reports(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(["certify", "--seed", "2", "--delta", "0.25",
                    "--corpus", "5", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_certify_empty_corpus_rejected(capsys):
    assert run(["certify", "--corpus", "0"]) == 2
    assert "corpus" in capsys.readouterr().err


def test_bad_space_document(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"matrix": [[0.0, 1.0], [2.0, 0.0]]}))
    assert run(["build", "--space", str(path)]) == 2
    assert "asymmetric" in capsys.readouterr().err


def test_invalid_p_rejected(space_file, capsys):
    assert run(["decompose", "--space", space_file, "--p", "1.5"]) == 2


def test_hardy_threads_env(space_file, tmp_path, monkeypatch):
    monkeypatch.setenv("HARDY_THREADS", "2")
    out = tmp_path / "dec.json"
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--seed", "1", "--out", str(out)]) == 0
    base = tmp_path / "dec1.json"
    monkeypatch.setenv("HARDY_THREADS", "1")
    assert run(["decompose", "--space", space_file, "--delta", "0.25",
                "--seed", "1", "--out", str(base)]) == 0
    assert out.read_bytes() == base.read_bytes()   # cap never changes results
