"""Independent reference implementations used by the unit and acceptance tests."""
import itertools

import numpy as np
import torch


def fd_check(fn, inputs, params=(), eps=1e-5, max_elems=40, seed=0, stats=None, rtol=1e-5, atol=1e-10):
    """Relative error between autograd and central differences.

    ``fn`` maps the input tensors to an output tensor; it is reduced to a
    scalar with a fixed random weighting. At most ``max_elems`` entries of
    each tensor are probed. Returns the worst relative error (vector norm
    over the probed entries of each tensor).

    ReLU and max are not differentiable everywhere. A probe whose stencil
    straddles such a kink gives central differences that depend on the step,
    so each probe is evaluated at ``eps`` and ``eps / 4``; when the two
    disagree the probe is dropped and counted in ``stats["kinks"]``.
    """
    gen = torch.Generator().manual_seed(seed)
    for t in inputs:
        t.requires_grad_(True)
    tensors = [t for t in inputs] + [p for p in params]
    out = fn(*inputs)
    w = torch.randn(out.shape, generator=gen, dtype=out.dtype)

    def scalar():
        with torch.no_grad():
            return float((fn(*inputs) * w).sum())

    def central(flat, i, h):
        old = flat[i].item()
        flat[i] = old + h
        hi = scalar()
        flat[i] = old - h
        lo = scalar()
        flat[i] = old
        return (hi - lo) / (2 * h)

    for t in tensors:
        t.grad = None
    (fn(*inputs) * w).sum().backward()
    worst = 0.0
    for t in tensors:
        analytic = t.grad.detach().reshape(-1).clone() if t.grad is not None else torch.zeros(t.numel(), dtype=t.dtype)
        picks = torch.randperm(t.numel(), generator=gen)[:max_elems].tolist()
        flat = t.data.view(-1)
        num, kept = [], []
        for i in picks:
            coarse, fine = central(flat, i, eps), central(flat, i, eps / 4)
            if abs(coarse - fine) > rtol * max(abs(coarse), abs(fine)) + atol:
                if stats is not None:
                    stats["kinks"] = stats.get("kinks", 0) + 1
                continue
            num.append(fine)
            kept.append(i)
        if stats is not None:
            stats["probes"] = stats.get("probes", 0) + len(picks)
        if not kept:
            continue
        num = torch.tensor(num, dtype=torch.float64)
        a = analytic[kept].to(torch.float64)
        scale = max(float(num.norm()), float(a.norm()), 1e-10)
        worst = max(worst, float((a - num).norm()) / scale)
    return worst


def simplex_projection_enum(z):
    """Projection onto the simplex by enumerating candidate supports (small dims)."""
    z = np.asarray(z, dtype=float)
    n = len(z)
    best, best_d = None, np.inf
    for r in range(1, n + 1):
        for support in itertools.combinations(range(n), r):
            s = list(support)
            tau = (z[s].sum() - 1.0) / r
            x = np.zeros(n)
            x[s] = z[s] - tau
            if np.any(x[s] < -1e-12):
                continue
            d = np.sum((x - z) ** 2)
            if d < best_d:
                best, best_d = x, d
    return np.clip(best, 0, None)


def simplex_projection_bisect(z, iters=200):
    """Projection via bisection on the threshold of ``sum(max(z - tau, 0)) = 1``."""
    z = np.asarray(z, dtype=float)
    lo, hi = z.min() - 1.0, z.max()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(z - mid, 0, None).sum() > 1.0:
            lo = mid
        else:
            hi = mid
    return np.clip(z - 0.5 * (lo + hi), 0, None)


def brute_force_assignment(cost):
    """Minimum total cost assigning every row to a distinct column (rows <= cols)."""
    n_rows, n_cols = cost.shape
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(n_cols), n_rows):
        c = sum(cost[i, j] for i, j in enumerate(perm))
        if c < best - 1e-12:
            best, best_perm = c, perm
    return best, np.array(best_perm)


def perfect_matchings(items):
    items = list(items)
    if not items:
        yield []
        return
    first = items[0]
    for k in range(1, len(items)):
        rest = items[1:k] + items[k + 1:]
        for m in perfect_matchings(rest):
            yield [(first, items[k])] + m


def min_distance_matching(points):
    """Perfect matching of an even point set minimising the summed distances."""
    best, best_m = np.inf, None
    for m in perfect_matchings(range(len(points))):
        c = sum(np.linalg.norm(points[i] - points[j]) for i, j in m)
        if c < best:
            best, best_m = c, m
    return sorted(tuple(sorted(p)) for p in best_m)


def all_matchings(edges):
    """Every matching (set of disjoint pairs) drawn from ``edges``."""
    edges = list(edges)

    def rec(i, used, acc):
        if i == len(edges):
            yield list(acc)
            return
        yield from rec(i + 1, used, acc)
        a, b = edges[i]
        if a not in used and b not in used:
            acc.append(edges[i])
            yield from rec(i + 1, used | {a, b}, acc)
            acc.pop()

    yield from rec(0, frozenset(), [])


def max_probability_matching(probs, threshold=0.5):
    """Matching over pairs with ``p > threshold`` maximising the summed probability."""
    n = probs.shape[0]
    cand = [(i, j) for i in range(n) for j in range(i + 1, n) if probs[i, j] > threshold]
    best, best_m = -1.0, []
    for m in all_matchings(cand):
        s = sum(probs[i, j] for i, j in m)
        if s > best:
            best, best_m = s, m
    return sorted(best_m)
