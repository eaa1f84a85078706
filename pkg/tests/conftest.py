"""Shared fixtures and independent reference implementations.

The brute-force functions here deliberately use naive quadruple/triple loops
so the production kernels are checked against code with no shared structure.
"""

import numpy as np
import pytest

from uhet.data import Stratum, StratifiedDataset
from uhet.ustat import kernel_phi


def brute_force_pair(yt_p, yc_p, wt_p, wc_p, yt_q, yc_q, wt_q, wc_q):
    """Weighted four-sample U-statistic by explicit quadruple loop.

    Returns (u, sphi) where sphi maps group key 'tp'/'cp'/'tq'/'cq' to the
    per-subject sums of weighted kernel values over tuples containing that
    subject (own weight included).
    """
    num = 0.0
    den = 0.0
    sphi = {
        "tp": np.zeros(len(yt_p)),
        "cp": np.zeros(len(yc_p)),
        "tq": np.zeros(len(yt_q)),
        "cq": np.zeros(len(yc_q)),
    }
    for i in range(len(yt_p)):
        for j in range(len(yc_p)):
            for k in range(len(yt_q)):
                for l in range(len(yc_q)):
                    w = wt_p[i] * wc_p[j] * wt_q[k] * wc_q[l]
                    phi = kernel_phi(yt_p[i], yc_p[j], yt_q[k], yc_q[l])
                    num += w * phi
                    den += w
                    sphi["tp"][i] += w * phi
                    sphi["cp"][j] += w * phi
                    sphi["tq"][k] += w * phi
                    sphi["cq"][l] += w * phi
    return num / den, sphi


def random_pair_instance(gen, max_n=6, ties=False):
    """Random weighted pair instance: outcome arrays and positive weights."""
    sizes = gen.integers(2, max_n + 1, 4)
    if ties:
        pool = gen.integers(0, 4, 40) / 2.0
        ys = [pool[gen.integers(0, len(pool), n)] for n in sizes]
    else:
        ys = [gen.standard_normal(n) for n in sizes]
    ws = [gen.uniform(0.2, 3.0, n) for n in sizes]
    return ys, ws


def make_null_stratum(gen, label, n=100, gamma=1.0):
    """One stratum with a confounder in both models and no effect contrast."""
    for _ in range(100):
        z = gen.standard_normal(n)
        e = 1.0 / (1.0 + np.exp(-gamma * z))
        t = (gen.random(n) < e).astype(int)
        if 2 <= t.sum() <= n - 2:
            y = 1.0 + t + z + gen.standard_normal(n)
            x = np.column_stack([np.ones(n), z])
            return Stratum(id=label, outcomes=y, treatment=t, covariates=x)
    raise RuntimeError("degenerate draw")


def make_null_dataset(gen, s=2, n=100, gammas=None):
    gammas = gammas or [1.0, -1.0, 1.0, -1.0][:s]
    strata = [make_null_stratum(gen, f"g{i}", n=n, gamma=gammas[i]) for i in range(s)]
    return StratifiedDataset(strata=tuple(strata))


@pytest.fixture
def gen():
    return np.random.default_rng(20260826)
