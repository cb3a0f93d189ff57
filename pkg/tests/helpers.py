import math

import numpy as np

from cwass.hyperbolic import MobiusTransform


def random_mobius(rng, a_max=0.5) -> MobiusTransform:
    r = a_max * math.sqrt(rng.uniform())
    a = r * np.exp(2j * math.pi * rng.uniform())
    return MobiusTransform(complex(a), float(rng.uniform(0.0, 2.0 * math.pi)))


def random_disk_point(rng, r_max=0.6) -> complex:
    r = r_max * math.sqrt(rng.uniform())
    return complex(r * np.exp(2j * math.pi * rng.uniform()))


def silhouette(X, labels) -> float:
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    D = np.linalg.norm(X[:, None] - X[None, :], axis=-1)
    s = []
    for i in range(len(X)):
        same = (labels == labels[i])
        same[i] = False
        a = D[i, same].mean()
        b = min(D[i, labels == c].mean() for c in set(labels.tolist()) if c != labels[i])
        s.append((b - a) / max(a, b))
    return float(np.mean(s))
