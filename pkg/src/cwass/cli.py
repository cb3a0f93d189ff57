"""Batch front end: flattening, pairwise distance matrices, MDS and correspondences.

Commands::

    cwass flatten mesh.off -o density.json [--obj flat.obj]
    cwass synth gaussian-bump --seed 3 -o density.json
    cwass dist --method trd --manifest run.json -o out/
    cwass mds out/matrix.json --dim 2 -o embed.csv
    cwass corr out/pair_0_1.json -o corr.csv
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .density import ConformalDensity, load_density, save_density, synthesize
from .errors import CwassError, InvalidInputError, InvalidParameterError
from .flatten import flatten_to_disk, load_mesh, mobius_normalize
from .localcost import CostConfig, default_workers
from .quotient import QuotientConfig, quotient_distance
from .transport import TransportPlan, correspondence_csv, generalized_distance

log = logging.getLogger("cwass")

METHODS = ("trd", "quotient")
MESH_SUFFIXES = (".off", ".obj")


@dataclass
class RunManifest:
    """Pairwise run description.

    ``cfg`` holds overrides of :class:`CostConfig` (method ``trd``) or
    :class:`QuotientConfig` (method ``quotient``). Relative input paths are
    resolved against ``base_dir``.
    """

    inputs: list
    method: str = "trd"
    cfg: dict = field(default_factory=dict)
    output: str = "out"
    seed: int = 0
    n_points: int | None = 64
    labels: list | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if len(self.inputs) < 2:
            raise InvalidParameterError("a pairwise run needs at least two inputs")
        if self.labels is not None and len(self.labels) != len(self.inputs):
            raise InvalidParameterError("labels and inputs differ in length")
        if self.n_points is not None and int(self.n_points) < 1:
            raise InvalidParameterError("n_points must be positive")
        self.config  # validate early

    @property
    def config(self):
        if self.method == "trd":
            return CostConfig.from_dict(self.cfg)
        return QuotientConfig.from_dict({"seed": self.seed, **self.cfg})

    @property
    def names(self) -> list:
        return list(self.labels) if self.labels else [Path(p).stem for p in self.inputs]

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict) or "inputs" not in doc:
            raise InvalidInputError("manifest must be a JSON object with an 'inputs' list")
        known = {k: doc[k] for k in ("inputs", "method", "cfg", "output", "seed", "n_points", "labels")
                 if k in doc}
        return cls(base_dir=str(path.parent), **known)

    def to_dict(self) -> dict:
        return {"inputs": [str(p) for p in self.inputs], "method": self.method,
                "cfg": self.config.to_dict(), "output": self.output, "seed": self.seed,
                "n_points": self.n_points, "labels": self.names}


@dataclass
class DistanceMatrixReport:
    labels: list
    matrix: np.ndarray
    asymmetry: np.ndarray
    pairs: dict
    failures: dict
    manifest: dict
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        def clean(a):
            return [[None if not math.isfinite(v) else float(v) for v in row] for row in a]

        return {
            "labels": self.labels,
            "matrix": clean(self.matrix),
            "asymmetry": clean(self.asymmetry),
            "max_asymmetry": float(np.nanmax(self.asymmetry)) if np.any(np.isfinite(self.asymmetry)) else None,
            "pairs": {k: self.pairs[k] for k in sorted(self.pairs)},
            "failures": {k: self.failures[k] for k in sorted(self.failures)},
            "manifest": self.manifest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DistanceMatrixReport":
        doc = json.loads(text)
        unclean = lambda a: np.array([[math.nan if v is None else v for v in row] for row in a],  # noqa: E731
                                     dtype=float)
        return cls(doc["labels"], unclean(doc["matrix"]), unclean(doc["asymmetry"]),
                   doc.get("pairs", {}), doc.get("failures", {}), doc.get("manifest", {}))


def load_input(path, interp: str = "pwl-decay") -> ConformalDensity:
    """Read a density file, or flatten and centre a mesh file."""
    path = Path(path)
    if path.suffix.lower() in MESH_SUFFIXES:
        return mobius_normalize(flatten_to_disk(load_mesh(path), interp=interp)).density
    return load_density(path)


def _pair_distance(mu, nu, man: RunManifest, workers: int):
    cfg = man.config
    if man.method == "trd":
        return generalized_distance(mu, nu, cfg, n_points=man.n_points, seed=man.seed, workers=workers)
    res = quotient_distance(mu, nu, cfg, workers=workers)
    plan = TransportPlan(res.plan.coupling, res.plan.objective, res.plan.is_permutation,
                         meta={**res.plan.meta, "m_star": list(res.m_star.params())})
    return res.distance, plan


def run(man: RunManifest, workers: int | None = None, write: bool = True) -> DistanceMatrixReport:
    """Compute every pairwise distance, in both directions, and symmetrize.

    Failures of single inputs or pairs are recorded and leave ``nan`` in the
    matrix; the remaining pairs are still computed.
    """
    names = man.names
    n = len(man.inputs)
    failures: dict = {}
    dens: list = [None] * n
    for i, p in enumerate(man.inputs):
        try:
            dens[i] = load_input(man.resolve(p))
        except (CwassError, OSError, ValueError) as exc:
            failures[f"input_{i}"] = f"{type(exc).__name__}: {exc}"
            log.warning("input %s failed: %s", p, exc)

    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(i, j) for i in range(n) for j in range(n) if i != j
            and dens[i] is not None and dens[j] is not None]
    inner = 1 if workers > 1 and len(jobs) > 1 else workers

    def job(ij):
        i, j = ij
        t0 = time.perf_counter()
        try:
            d, plan = _pair_distance(dens[i], dens[j], man, inner)
            return ij, d, plan, None, time.perf_counter() - t0
        except (CwassError, ValueError, RuntimeError) as exc:
            log.debug("%s", traceback.format_exc())
            return ij, math.nan, None, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, jobs))
    else:
        results = [job(ij) for ij in jobs]

    D = np.full((n, n), math.nan)
    plans = {}
    timings = {}
    for (i, j), d, plan, err, dt in sorted(results, key=lambda r: r[0]):
        D[i, j] = d
        timings[f"{i}_{j}"] = dt
        if err is not None:
            failures[f"pair_{i}_{j}"] = err
        else:
            plans[(i, j)] = plan
    for i in range(n):
        if dens[i] is not None:
            D[i, i] = 0.0
    M = 0.5 * (D + D.T)
    A = np.abs(D - D.T)
    pairs = {}
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in plans:
                p = plans[(i, j)]
                pairs[f"{i}_{j}"] = {"d_ij": float(D[i, j]), "d_ji": float(D[j, i]),
                                     "is_permutation": bool(p.is_permutation),
                                     "support": list(p.shape)}
    rep = DistanceMatrixReport(names, M, A, pairs, failures, man.to_dict(), timings)
    if write:
        out = man.resolve(man.output) if not Path(man.output).is_absolute() else Path(man.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "matrix.json").write_text(rep.to_json() + "\n")
        (out / "timings.json").write_text(json.dumps(timings, indent=1, sort_keys=True) + "\n")
        for (i, j), plan in sorted(plans.items()):
            doc = json.loads(plan.to_json())
            doc.update({"source": names[i], "target": names[j], "distance": float(D[i, j])})
            (out / f"pair_{i}_{j}.json").write_text(json.dumps(doc, sort_keys=True) + "\n")
    return rep


def mds_embed(report, dim: int = 2) -> tuple[np.ndarray, dict]:
    """Classical (Torgerson) MDS.

    Parameters
    ----------
    report : DistanceMatrixReport or array_like
        Symmetric distance matrix (or a report holding one).
    dim : int
        Embedding dimension.

    Returns
    -------
    coords : ndarray, shape (n, dim)
    info : dict
        ``eigenvalues`` of the double-centred Gram matrix (descending) and
        ``negative`` listing the negative ones that were truncated.
    """
    D = np.asarray(report.matrix if isinstance(report, DistanceMatrixReport) else report, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InvalidInputError("distance matrix must be square")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("distance matrix has missing entries")
    if dim < 1:
        raise InvalidParameterError("dim must be positive")
    if np.max(np.abs(D - D.T)) > 1e-9 * max(1.0, np.max(np.abs(D))):
        raise InvalidInputError("distance matrix must be symmetric")
    if not np.any(D):
        raise InvalidInputError("all distances are zero; the embedding is degenerate")
    n = len(D)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    w, V = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    k = min(dim, n)
    lam = np.clip(w[:k], 0.0, None)
    X = np.zeros((n, dim))
    X[:, :k] = V[:, :k] * np.sqrt(lam)
    # fix the sign of each axis for reproducible output
    for c in range(k):
        col = X[:, c]
        if col[np.argmax(np.abs(col))] < 0:
            X[:, c] = -col
    scale = max(1.0, float(np.max(np.abs(w))))
    neg = [float(v) for v in w if v < -1e-12 * scale]
    if neg:
        log.info("MDS truncated %d negative eigenvalues (most negative %.3g)", len(neg), min(neg))
    return X, {"eigenvalues": w.tolist(), "negative": neg}


def export_correspondence(plan: TransportPlan, use_support: bool = True) -> str:
    """CSV rows ``source,target,mass``.

    When the plan records the sample indices of its supports, those indices
    are written instead of positions within the support.
    """
    rs = plan.meta.get("row_support") if use_support else None
    cs = plan.meta.get("col_support") if use_support else None
    if rs is None and cs is None:
        return correspondence_csv(plan)
    lines = ["source,target,mass"]
    for i, j, w in plan.triplets():
        lines.append(f"{rs[i] if rs else i},{cs[j] if cs else j},{w!r}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------------- CLI

def _cmd_flatten(a) -> int:
    res = flatten_to_disk(load_mesh(a.mesh), relax=not a.no_relax, interp=a.interp)
    if not a.no_normalize:
        res = mobius_normalize(res)
    dens = res.density.with_samples(meta={**res.density.meta, "quality": res.quality})
    save_density(dens, a.output)
    if a.obj:
        res.write_obj(a.obj)
    print(json.dumps(res.quality, sort_keys=True))
    return 0


def _cmd_synth(a) -> int:
    params = json.loads(a.params) if a.params else {}
    save_density(synthesize(a.kind, seed=a.seed, n=a.n, **params), a.output)
    return 0


def _cmd_dist(a) -> int:
    man = RunManifest.load(a.manifest)
    cfg = dict(man.cfg)
    for key in ("R", "sigma_grid", "ot_points"):
        v = getattr(a, key)
        if v is not None:
            cfg[key] = v
    man = RunManifest(man.inputs, a.method or man.method, cfg,
                      str(Path(a.output).resolve()) if a.output else man.output,
                      man.seed if a.seed is None else a.seed,
                      man.n_points if a.n_points is None else a.n_points,
                      man.labels, man.base_dir)
    rep = run(man, workers=a.workers)
    for k, v in sorted(rep.failures.items()):
        print(f"failed {k}: {v}", file=sys.stderr)
    return 0 if rep.ok else 1


def _cmd_mds(a) -> int:
    rep = DistanceMatrixReport.from_json(Path(a.matrix).read_text())
    X, info = mds_embed(rep, a.dim)
    lines = ["label," + ",".join(f"x{k}" for k in range(a.dim))]
    lines += [f"{lab}," + ",".join(repr(float(v)) for v in row) for lab, row in zip(rep.labels, X)]
    Path(a.output).write_text("\n".join(lines) + "\n")
    if info["negative"]:
        print(f"truncated {len(info['negative'])} negative eigenvalue(s): {info['negative']}",
              file=sys.stderr)
    return 0


def _cmd_corr(a) -> int:
    plan = TransportPlan.from_json(Path(a.pair).read_text())
    Path(a.output).write_text(export_correspondence(plan, not a.local_indices))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cwass", description="Conformal Wasserstein distances between disk-type surfaces.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("flatten", help="flatten a disk-type mesh to a density file")
    f.add_argument("mesh")
    f.add_argument("-o", "--output", required=True)
    f.add_argument("--obj", help="also write the flattened mesh")
    f.add_argument("--interp", default="pwl-decay", choices=("pwl", "pwl-decay"))
    f.add_argument("--no-relax", action="store_true", help="skip the corrective boundary pass")
    f.add_argument("--no-normalize", action="store_true", help="keep the raw flattening (no centring)")
    f.set_defaults(func=_cmd_flatten)

    s = sub.add_parser("synth", help="write a synthetic density")
    s.add_argument("kind", choices=("flat-disk", "gaussian-bump", "multi-bump"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-n", type=int, default=64)
    s.add_argument("--params", help="JSON object of generator parameters")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=_cmd_synth)

    d = sub.add_parser("dist", help="pairwise distance matrix over a manifest")
    d.add_argument("--manifest", required=True)
    d.add_argument("--method", choices=METHODS)
    d.add_argument("-o", "--output")
    d.add_argument("--seed", type=int)
    d.add_argument("--n-points", type=int)
    d.add_argument("--R", type=float)
    d.add_argument("--sigma-grid", type=int)
    d.add_argument("--ot-points", type=int)
    d.add_argument("--workers", type=int)
    d.set_defaults(func=_cmd_dist)

    m = sub.add_parser("mds", help="classical MDS of a matrix report")
    m.add_argument("matrix")
    m.add_argument("--dim", type=int, default=2, choices=(2, 3))
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=_cmd_mds)

    c = sub.add_parser("corr", help="correspondence CSV from a pair file")
    c.add_argument("pair")
    c.add_argument("-o", "--output", required=True)
    c.add_argument("--local-indices", action="store_true",
                   help="write support positions instead of sample indices")
    c.set_defaults(func=_cmd_corr)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CwassError, OSError, json.JSONDecodeError) as exc:
        print(f"cwass: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
