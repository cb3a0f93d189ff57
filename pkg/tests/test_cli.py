import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cwass.cli import DistanceMatrixReport, RunManifest, main, mds_embed, run
from cwass.density import load_density, save_density, synthesize
from cwass.errors import InvalidInputError, InvalidParameterError
from cwass.flatten import disk_mesh, write_off

FAST = {"sigma_grid": 16, "quad_angular": 48, "quad_radial": 12}


@pytest.fixture
def inputs(tmp_path):
    paths = []
    for name, seed in (("a", 1), ("b", 1), ("c", 2)):
        p = tmp_path / f"{name}.json"
        save_density(synthesize("multi-bump", seed=seed, n=16), p)
        paths.append(p.name)
    return tmp_path, paths


def manifest(base, paths, **kw):
    return RunManifest(paths, cfg=dict(FAST), n_points=8, base_dir=str(base), **kw)


class TestMDS:
    def test_equilateral(self):
        D = 1.0 - np.eye(3)
        X, info = mds_embed(D)
        dists = [np.linalg.norm(X[i] - X[j]) for i, j in ((0, 1), (0, 2), (1, 2))]
        assert np.allclose(dists, 1.0, atol=1e-12)
        assert np.allclose(X.mean(0), 0.0, atol=1e-12)
        assert info["negative"] == []

    def test_two_points(self):
        X, _ = mds_embed([[0.0, 3.0], [3.0, 0.0]])
        assert sorted(X[:, 0]) == pytest.approx([-1.5, 1.5])
        assert np.allclose(X[:, 1], 0.0)

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=8, unique=True))
    def test_line_metric_is_one_dimensional(self, xs):
        x = np.array(xs)
        D = np.abs(x[:, None] - x[None, :])
        X, info = mds_embed(D)
        assert abs(info["eigenvalues"][1]) < 1e-9 * max(1.0, info["eigenvalues"][0])
        assert np.allclose(np.abs(X[:, 0]), np.abs(x - x.mean()), atol=1e-7)

    def test_non_euclidean_reports_negative(self):
        # the path metric of a 4-cycle plus a long chord is not Euclidean
        D = np.array([[0, 1, 2, 1], [1, 0, 1, 2], [2, 1, 0, 1], [1, 2, 1, 0]], float)
        D[0, 2] = D[2, 0] = 1.0
        assert mds_embed(D)[1]["negative"]

    @pytest.mark.parametrize("D", [np.zeros((3, 3)), np.ones((2, 3)),
                                   [[0.0, math.nan], [math.nan, 0.0]], [[0.0, 1.0], [2.0, 0.0]]])
    def test_rejects(self, D):
        with pytest.raises(InvalidInputError):
            mds_embed(D)


class TestManifest:
    def test_validation(self):
        with pytest.raises(InvalidParameterError):
            RunManifest(["a"])
        with pytest.raises(InvalidParameterError):
            RunManifest(["a", "b"], method="gromov")
        with pytest.raises(InvalidParameterError):
            RunManifest(["a", "b"], cfg={"R": -1.0})

    def test_load(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"inputs": ["x.json", "y.off"],
                                                     "method": "quotient", "seed": 3}))
        man = RunManifest.load(tmp_path / "m.json")
        assert man.names == ["x", "y"] and man.config.seed == 3
        assert man.resolve("x.json") == tmp_path / "x.json"


class TestRun:
    def test_matrix(self, inputs):
        base, paths = inputs
        rep = run(manifest(base, paths), workers=1)
        M = rep.matrix
        assert rep.ok and M.shape == (3, 3)
        assert np.all(np.diag(M) == 0) and np.array_equal(M, M.T)
        assert M[0, 1] < 1e-9  # identical inputs
        assert M[0, 2] > 1e-3 and M[0, 2] == pytest.approx(M[1, 2], abs=1e-12)
        assert set(rep.pairs) == {"0_1", "0_2", "1_2"}
        assert (base / "out" / "pair_0_2.json").exists()

    def test_byte_identical_rerun(self, inputs):
        base, paths = inputs
        run(manifest(base, paths, output="r1"), workers=1)
        run(manifest(base, paths, output="r2"), workers=2)
        a = (base / "r1" / "matrix.json").read_bytes()
        b = (base / "r2" / "matrix.json").read_bytes()
        assert a.replace(b"r1", b"r2") == b

    def test_report_roundtrip(self, inputs):
        base, paths = inputs
        rep = run(manifest(base, paths), workers=1)
        back = DistanceMatrixReport.from_json(rep.to_json())
        assert np.array_equal(back.matrix, rep.matrix) and back.labels == ["a", "b", "c"]

    def test_missing_input_is_recorded(self, inputs):
        base, paths = inputs
        rep = run(manifest(base, paths + ["nope.json"]), workers=1)
        assert not rep.ok and "input_3" in rep.failures
        assert np.isnan(rep.matrix[3, 0]) and np.isfinite(rep.matrix[0, 2])
        doc = json.loads((base / "out" / "matrix.json").read_text())
        assert doc["matrix"][3][0] is None

    def test_mesh_input(self, tmp_path):
        m = disk_mesh(4)
        write_off(tmp_path / "d.off", m.vertices, m.faces)
        save_density(synthesize("flat-disk", n=16), tmp_path / "f.json")
        rep = run(RunManifest(["d.off", "f.json"], cfg=dict(FAST), n_points=8,
                              base_dir=str(tmp_path)), workers=1, write=False)
        assert rep.ok and np.isfinite(rep.matrix[0, 1])


class TestMain:
    def test_synth_and_flatten(self, tmp_path, capsys):
        assert main(["synth", "gaussian-bump", "-n", "20", "--params", '{"height": 1.5}',
                     "-o", str(tmp_path / "g.json")]) == 0
        assert len(load_density(tmp_path / "g.json").points) == 20
        m = disk_mesh(3)
        write_off(tmp_path / "d.off", m.vertices, m.faces)
        assert main(["flatten", str(tmp_path / "d.off"), "-o", str(tmp_path / "d.json"),
                     "--obj", str(tmp_path / "flat.obj")]) == 0
        quality = json.loads(capsys.readouterr().out)
        assert quality["flipped"] == 0
        assert load_density(tmp_path / "d.json").meta["quality"]["n_faces"] == m.n_faces

    def test_dist_mds_corr(self, inputs):
        base, paths = inputs
        (base / "m.json").write_text(json.dumps({"inputs": paths, "cfg": FAST, "n_points": 8}))
        assert main(["dist", "--manifest", str(base / "m.json"), "-o", str(base / "o"),
                     "--workers", "1"]) == 0
        assert main(["mds", str(base / "o" / "matrix.json"), "-o", str(base / "x.csv")]) == 0
        rows = (base / "x.csv").read_text().strip().split("\n")
        assert rows[0] == "label,x0,x1" and len(rows) == 4
        assert main(["corr", str(base / "o" / "pair_0_1.json"), "-o", str(base / "c.csv")]) == 0
        lines = (base / "c.csv").read_text().strip().split("\n")
        assert lines[0] == "source,target,mass" and len(lines) == 9
        # identical inputs match each sample with itself
        assert all(r.split(",")[0] == r.split(",")[1] for r in lines[1:])

    def test_exit_codes(self, inputs):
        base, paths = inputs
        (base / "m.json").write_text(json.dumps({"inputs": paths[:2] + ["gone.json"],
                                                 "cfg": FAST, "n_points": 8}))
        assert main(["dist", "--manifest", str(base / "m.json"), "--workers", "1"]) == 1
        assert main(["mds", str(base / "out" / "matrix.json"), "-o", str(base / "x.csv")]) == 2
        assert main(["synth", "flat-disk", "-o", str(base / "no" / "such" / "dir.json")]) == 2
        assert main(["dist", "--manifest", str(base / "missing.json")]) == 2
