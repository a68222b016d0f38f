"""Independent reference computations used by the tests (no shared code paths with the package)."""
import numpy as np


def torus_dist(a, b):
    d = np.abs(np.asarray(a, float) - np.asarray(b, float)) % 1.0
    return float(np.sqrt(np.sum(np.minimum(d, 1.0 - d) ** 2)))


def brute_force_kappa(P, Q, eps):
    """Exhaustive search over projections: largest c such that every q-point gets exactly c distinct p-points."""
    nP, m = len(P), len(Q)
    adm = [[all(torus_dist(P[(a + i) % nP], Q[(b + i) % m]) < eps for i in range(m)) for b in range(m)]
           for a in range(nP)]
    best = 0
    for c in range(1, nP // m + 1):
        cnt = [0] * m

        def bt(a, need):
            if need == 0:
                return True
            if nP - a < need:
                return False
            for b in range(m):
                if adm[a][b] and cnt[b] < c:
                    cnt[b] += 1
                    if bt(a + 1, need - 1):
                        return True
                    cnt[b] -= 1
            return bt(a + 1, need)

        if bt(0, c * m):
            best = c
    return best * m / nP


def random_goodness_instance(rng, dim=2):
    """Noisy copy of a q-orbit traversal, so admissible pairs are neither empty nor complete."""
    m = int(rng.integers(1, 9))
    nP = int(rng.integers(m, 25))
    Q = rng.random((m, dim))
    P = (Q[(np.arange(nP) + rng.integers(0, m)) % m] + rng.normal(0, 0.05, (nP, dim))) % 1
    return P, Q, float(rng.uniform(0.02, 0.2))


def weak_star_terms(mu_atoms, mu_w, nu_atoms, nu_w, N):
    """Direct term-by-term evaluation with an independently generated frequency list."""
    dim = mu_atoms.shape[1]
    ks = []
    r = 1
    while len(ks) < N:
        shell = []
        for k in np.ndindex(*([2 * r + 1] * dim)):
            k = tuple(c - r for c in k)
            if sum(abs(c) for c in k) == r and next(c for c in k if c) > 0:
                shell.append(k)
        ks.extend(sorted(shell))
        r += 1
    funcs = [lambda x: np.ones(len(x))]
    for k in ks:
        kv = np.array(k, float)
        funcs.append(lambda x, kv=kv: np.cos(2 * np.pi * x @ kv))
        funcs.append(lambda x, kv=kv: np.sin(2 * np.pi * x @ kv))
    total = 0.0
    for n in range(1, N + 1):
        f = funcs[n - 1]
        total += abs(mu_w @ f(mu_atoms) - nu_w @ f(nu_atoms)) / (2.0 ** n * 2.0)
    return total
