"""Random problem instances shared by the screening, KKT and descent
checks."""

import numpy as np
import scipy.sparse as sp

from sglpath import GroupStructure

ALPHAS = (0.0, 0.05, 0.5, 0.95, 1.0)


def random_groups(rng, p, G):
    # G contiguous non-empty blocks with random sizes
    cuts = np.sort(rng.choice(np.arange(1, p), size=G - 1, replace=False))
    labels = np.zeros(p, dtype=int)
    labels[cuts] = 1
    return GroupStructure.from_labels(np.cumsum(labels) + 1)


def instance(seed):
    """One corpus problem: ``(X, y, groups, kwargs for fit_path)``.

    n <= 200, p <= 500, G <= 50; alpha cycles through ALPHAS; every fourth
    instance is binomial and every third uses a sparse design.
    """
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(20, 201))
    p = int(rng.integers(10, 501))
    G = int(rng.integers(2, min(50, p) + 1))
    groups = random_groups(rng, p, G)
    if seed % 3 == 2:
        X = sp.random(n, p, density=0.1, format="csc", random_state=rng,
                      data_rvs=rng.standard_normal)
        Xd = X.toarray()
    else:
        Xd = rng.standard_normal((n, p))
        X = Xd
    beta = np.zeros(p)
    for g in rng.choice(G, size=max(1, G // 5), replace=False):
        c0, c1 = groups.ranges[g]
        beta[c0:c1] = rng.standard_normal(c1 - c0)
    eta = Xd @ beta
    binomial = seed % 4 == 3
    if binomial:
        y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(float)
        if np.unique(y).size < 2:
            y[:2] = [0.0, 1.0]
    else:
        y = eta + rng.standard_normal(n)
    kw = dict(alpha=ALPHAS[seed % len(ALPHAS)], nlambda=30,
              family="binomial" if binomial else "gaussian")
    return X, y, groups, kw
