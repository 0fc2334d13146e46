import itertools
import math
from collections import Counter

import numpy as np
import pytest

from vecagg import instances
from vecagg.gf import FieldSpec
from vecagg.linalg import MatrixGF
from vecagg.scheme import AggregationSpec, construct


@pytest.fixture(scope="session")
def ex1():
    return construct(instances.example1())


@pytest.fixture(scope="session")
def ex2():
    return construct(instances.example2())


def random_instance(rng, q, K, max_states=None, need_cond=False):
    """Random full-row-rank F without zero columns, full-row-rank G."""
    from vecagg.linalg import conditional_rank, rank

    f = FieldSpec(q)
    for _ in range(1000):
        M = int(rng.integers(1, K + 1))
        N = int(rng.integers(1, K + 1))
        F = MatrixGF(f, rng.integers(0, q, size=(M, K)))
        G = MatrixGF(f, rng.integers(0, q, size=(N, K)))
        if rank(F) != M or rank(G) != N or not F.array.any(axis=0).all():
            continue
        r = conditional_rank(F, G)
        if need_cond and r < 1:
            continue
        if max_states is not None and q ** (K + r) > max_states:
            continue
        return AggregationSpec(f, K, F, G)
    raise RuntimeError("no instance found")


def brute_entropies(scheme):
    """Reference entropies (float, nats->q-ary) by walking every (W, S) with plain Python.

    Independent of the oracle module: no packing, no numpy tables.
    """
    q, K, L = scheme.q, scheme.K, scheme.L
    nk = scheme.n_keys
    F = scheme.spec.F.tolist()
    G = scheme.spec.G.tolist()
    masks = [m.tolist() for m in scheme.masks]
    c = {name: Counter() for name in ("f", "fg", "fx", "fgx", "x", "w", "wx")}
    for wflat in itertools.product(range(q), repeat=K * L):
        W = [wflat[k * L : (k + 1) * L] for k in range(K)]
        f = tuple(sum(F[i][k] * W[k][l] for k in range(K)) % q for i in range(len(F)) for l in range(L))
        g = tuple(sum(G[i][k] * W[k][l] for k in range(K)) % q for i in range(len(G)) for l in range(L))
        for sflat in itertools.product(range(q), repeat=nk * L):
            S = [sflat[i * L : (i + 1) * L] for i in range(nk)]
            x = tuple(
                (W[k][l] + sum(masks[l][k][i] * S[i][l] for i in range(nk))) % q for k in range(K) for l in range(L)
            )
            c["f"][f] += 1
            c["fg"][f, g] += 1
            c["fx"][f, x] += 1
            c["fgx"][f, g, x] += 1
            c["x"][x] += 1
            c["w"][wflat] += 1
            c["wx"][wflat, x] += 1
    total = q ** ((K + nk) * L)

    def H(name):
        return -sum(n / total * math.log(n / total, q) for n in c[name].values())

    return {name: H(name) for name in c}
