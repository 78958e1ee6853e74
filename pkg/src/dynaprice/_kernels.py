"""Compiled backward-induction kernels.

Every kernel evaluates the same one-step expectation

    q(a, n) = (a - c) * E[min(n, I)] + disc * sum_{i<n} P(i) * V[n - i] - n * hold

so maximization and policy evaluation produce bit-identical numbers for the
same action. Candidate arrays are sorted by increasing price; ties within
``tol`` go to the larger price.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _emin(pmf, sf, n):
    # E[min(n, I)]
    e = sf[n] * n
    for i in range(n):
        e += pmf[i] * i
    return e


@njit(cache=True, inline="always")
def _q_split(emin, pmf, margin, v_next, n, disc, hold):
    acc = 0.0
    for i in range(n):
        acc += pmf[i] * v_next[n - i]
    return margin * emin + disc * acc - n * hold


@njit(cache=True, inline="always")
def _q(pmf, sf, margin, v_next, n, disc, hold):
    return _q_split(_emin(pmf, sf, n), pmf, margin, v_next, n, disc, hold)


@njit(cache=True, inline="always")
def _pick(q, count, tol):
    best = q[0]
    for j in range(1, count):
        if q[j] > best:
            best = q[j]
    for j in range(count - 1, -1, -1):
        if q[j] >= best - tol:
            return j
    return 0


@njit(cache=True)
def sticky_backward(prices, pmf, sf, cost, hold, disc, steps, N, tol):
    """Time-homogeneous recursion indexed by remaining steps ``r``.

    Returns ``V[r, n]`` and ``pol[r, n]`` (candidate index, -1 where undefined).
    """
    C = prices.shape[0]
    V = np.zeros((steps + 1, N + 1))
    pol = -np.ones((steps + 1, N + 1), dtype=np.int64)
    q = np.empty(C)
    for r in range(1, steps + 1):
        vn = V[r - 1]
        for n in range(1, N + 1):
            for j in range(C):
                q[j] = _q(pmf[j], sf[j], prices[j] - cost, vn, n, disc, hold)
            k = _pick(q, C, tol)
            pol[r, n] = k
            V[r, n] = q[k]
    return V, pol


@njit(cache=True)
def sticky_groups(group, first, prices, pmf, sf, cost, hold, disc, N, tol):
    """One sticky solve per distinct situation on a grid of ``G`` update steps.

    Step ``s`` belongs to situation ``group[s]``; ``first`` holds each
    situation's first step. Situation ``k`` needs ``G - first[k]`` recursion
    steps, and for every step ``s`` of it the policy at ``G - s`` remaining
    steps is stored in ``out[s, n]`` as an index into ``prices[k]``. Rows of
    ``prices`` may be padded by repeating their top price.
    """
    G = group.shape[0]
    C = prices.shape[1]
    out = -np.ones((G, N + 1), dtype=np.int64)
    base = np.empty((N + 1, C))
    pt = np.empty((N + 1, C))
    q = np.empty(C)
    v_prev = np.zeros(N + 1)
    v_cur = np.zeros(N + 1)
    for k in range(first.shape[0]):
        for j in range(C):
            margin = prices[k, j] - cost
            for n in range(N + 1):
                base[n, j] = margin * _emin(pmf[k, j], sf[k, j], n)
                pt[n, j] = pmf[k, j, n]
        for n in range(N + 1):
            v_prev[n] = 0.0
        for r in range(1, G - first[k] + 1):
            v_cur[0] = 0.0
            record = group[G - r] == k
            for n in range(1, N + 1):
                for j in range(C):
                    q[j] = 0.0
                for i in range(n):
                    w = v_prev[n - i]
                    for j in range(C):
                        q[j] += pt[i, j] * w
                for j in range(C):
                    q[j] = base[n, j] + disc * q[j] - n * hold
                b = _pick(q, C, tol)
                v_cur[n] = q[b]
                if record:
                    out[G - r, n] = b
            for n in range(N + 1):
                v_prev[n] = v_cur[n]
    return out


@njit(cache=True)
def trajectory_backward(prices, counts, pmf, sf, cost, hold, disc, N, tol):
    """Optimal recursion along a known step function of situations.

    ``prices[s, j]`` are the candidate actions at step ``s``.
    """
    S = prices.shape[0]
    Cmax = prices.shape[1]
    V = np.zeros((S + 1, N + 1))
    pol = -np.ones((S, N + 1), dtype=np.int64)
    q = np.empty(Cmax)
    for s in range(S - 1, -1, -1):
        C = counts[s]
        for n in range(1, N + 1):
            for j in range(C):
                q[j] = _q(pmf[s, j], sf[s, j], prices[s, j] - cost, V[s + 1], n, disc, hold)
            b = _pick(q, C, tol)
            pol[s, n] = b
            V[s, n] = q[b]
    return V, pol


@njit(cache=True)
def trajectory_evaluate(price, pmf, sf, cost, hold, disc, N):
    """Value of a fixed price map ``price[s, n]``; ``pmf[s, n]`` belongs to that price."""
    S = price.shape[0]
    V = np.zeros((S + 1, N + 1))
    for s in range(S - 1, -1, -1):
        for n in range(1, N + 1):
            V[s, n] = _q(pmf[s, n], sf[s, n], price[s, n] - cost, V[s + 1], n, disc, hold)
    return V


@njit(cache=True)
def fixed_price_values(prices, pmf, sf, cost, hold, disc, N):
    """Start values ``W[m, n]`` of holding price ``prices[m]`` for the whole trajectory.

    ``pmf[s, m]`` is the sales distribution of price ``m`` at step ``s``.
    """
    S = pmf.shape[0]
    M = prices.shape[0]
    out = np.zeros((M, N + 1))
    v = np.zeros(N + 1)
    w = np.zeros(N + 1)
    for m in range(M):
        for n in range(N + 1):
            v[n] = 0.0
        margin = prices[m] - cost
        for s in range(S - 1, -1, -1):
            w[0] = 0.0
            for n in range(1, N + 1):
                w[n] = _q(pmf[s, m], sf[s, m], margin, v, n, disc, hold)
            for n in range(N + 1):
                v[n] = w[n]
        for n in range(N + 1):
            out[m, n] = v[n]
    return out


@njit(cache=True)
def held_price_backward(prices, counts, pmf, sf, cost, hold, disc, N, H, tol):
    """Recursion where prices may change only every ``H`` steps.

    ``prices[k, j]`` are the candidates of period ``k``; ``pmf[s, j]`` is the
    distribution of candidate ``j`` of period ``s // H`` under the situation at
    step ``s``. Returns ``W[s, j, n]`` (value at step ``s`` holding candidate
    ``j``; at period starts this is the free-choice value for every ``j``) and
    the period policy ``pol[k, n]``.
    """
    S = pmf.shape[0]
    Cmax = prices.shape[1]
    P = prices.shape[0]
    W = np.zeros((S + 1, Cmax, N + 1))
    free = np.zeros(N + 1)
    pol = -np.ones((P, N + 1), dtype=np.int64)
    q = np.empty(Cmax)
    for s in range(S - 1, -1, -1):
        k = s // H
        C = counts[k]
        next_is_free = (s + 1) % H == 0
        for j in range(C):
            margin = prices[k, j] - cost
            for n in range(1, N + 1):
                if next_is_free:
                    W[s, j, n] = _q(pmf[s, j], sf[s, j], margin, free, n, disc, hold)
                else:
                    W[s, j, n] = _q(pmf[s, j], sf[s, j], margin, W[s + 1, j], n, disc, hold)
        if s % H == 0:
            for n in range(1, N + 1):
                for j in range(C):
                    q[j] = W[s, j, n]
                b = _pick(q, C, tol)
                pol[k, n] = b
                free[n] = q[b]
            for j in range(Cmax):
                for n in range(N + 1):
                    W[s, j, n] = free[n]
    return W, pol


@njit(cache=True)
def adjustment_backward(prices, pmf, sf, cost, hold, disc, z, T, N, tol):
    """Sticky recursion with a fixed penalty ``z`` for changing the price.

    State index ``m = 0`` means no previous price, ``m = j + 1`` means the
    previous price was ``prices[j]``. Returns ``V[t, n, m]`` and the chosen
    action index ``pol[t, n, m]``.
    """
    C = prices.shape[0]
    V = np.zeros((T + 1, N + 1, C + 1))
    pol = -np.ones((T, N + 1, C + 1), dtype=np.int64)
    q = np.empty(C)
    for t in range(T - 1, -1, -1):
        for n in range(1, N + 1):
            for j in range(C):
                q[j] = _q(pmf[j], sf[j], prices[j] - cost, V[t + 1, :, j + 1], n, disc, hold)
            b = _pick(q, C, tol)
            V[t, n, 0] = q[b]
            pol[t, n, 0] = b
            for j in range(C):
                keep = q[j]
                switch = q[b] - z
                if j == b:
                    V[t, n, j + 1] = keep
                    pol[t, n, j + 1] = j
                elif keep > switch + tol or (keep >= switch - tol and j > b):
                    V[t, n, j + 1] = keep
                    pol[t, n, j + 1] = j
                else:
                    V[t, n, j + 1] = switch
                    pol[t, n, j + 1] = b
    return V, pol


@njit(cache=True)
def duopoly_backward(prices, pmf, sf, succ, cost, hold, disc, T, N, tol, maximize, policy):
    """Recursion over (n, competitor price index) with a deterministic reaction.

    ``pmf[p, a]`` is the period sales distribution when we post ``a`` facing
    ``p``; ``succ[p, a]`` is the competitor index next period. With
    ``maximize`` false the fixed ``policy[t, n, p]`` is evaluated instead.
    """
    M = prices.shape[0]
    V = np.zeros((T + 1, N + 1, M))
    pol = -np.ones((T, N + 1, M), dtype=np.int64)
    q = np.empty(M)
    v = np.empty(N + 1)
    for t in range(T - 1, -1, -1):
        for p in range(M):
            for n in range(1, N + 1):
                if maximize:
                    for a in range(M):
                        nxt = succ[p, a]
                        for m in range(N + 1):
                            v[m] = V[t + 1, m, nxt]
                        q[a] = _q(pmf[p, a], sf[p, a], prices[a] - cost, v, n, disc, hold)
                    b = _pick(q, M, tol)
                    pol[t, n, p] = b
                    V[t, n, p] = q[b]
                else:
                    a = policy[t, n, p]
                    nxt = succ[p, a]
                    for m in range(N + 1):
                        v[m] = V[t + 1, m, nxt]
                    V[t, n, p] = _q(pmf[p, a], sf[p, a], prices[a] - cost, v, n, disc, hold)
                    pol[t, n, p] = a
    return V, pol


@njit(cache=True)
def duopoly_sticky(prices, pmf, sf, cost, hold, disc, T, N, tol):
    """Recursion that treats the competitor price as frozen (no reaction)."""
    M = prices.shape[0]
    V = np.zeros((T + 1, N + 1, M))
    pol = -np.ones((T, N + 1, M), dtype=np.int64)
    q = np.empty(M)
    for t in range(T - 1, -1, -1):
        for p in range(M):
            for n in range(1, N + 1):
                for a in range(M):
                    q[a] = _q(pmf[p, a], sf[p, a], prices[a] - cost, V[t + 1, :, p], n, disc, hold)
                b = _pick(q, M, tol)
                pol[t, n, p] = b
                V[t, n, p] = q[b]
    return V, pol


@njit(cache=True)
def floor_walk(p0, adjust, jumps, floor):
    """Competitor random walks ``p[s+1] = max(floor, p[s] + adjust * jump)``."""
    S = adjust.shape[0]
    K = p0.shape[0]
    out = np.empty((S, K))
    for k in range(K):
        out[0, k] = p0[k]
    for s in range(S - 1):
        for k in range(K):
            x = out[s, k]
            if adjust[s, k]:
                x = x + jumps[s, k]
            out[s + 1, k] = x if x > floor else floor
    return out


@njit(cache=True)
def poisson_rows(mu, cap):
    """Poisson pmf ``P(I = i)``, ``i <= cap``, and survival ``P(I >= n)``, ``n <= cap``."""
    M = mu.shape[0]
    pmf = np.zeros((M, cap + 1))
    sf = np.zeros((M, cap + 1))
    for r in range(M):
        m = mu[r]
        p = np.exp(-m)
        acc = 0.0
        for i in range(cap + 1):
            if i > 0:
                p = p * m / i
            pmf[r, i] = p
            tail = 1.0 - acc
            sf[r, i] = tail if tail > 0.0 else 0.0
            acc += p
    return pmf, sf


@njit(cache=True, inline="always")
def _expected_left(lam, N):
    # E[(N - D)+] for D ~ Poisson(lam)
    p = np.exp(-lam)
    e = N * p
    for k in range(1, N):
        p = p * lam / k
        e += (N - k) * p
    return e


@njit(cache=True)
def fixed_price_start_values(prices, P, label, scale, cost, hold, disc, N):
    """Start value with ``N`` units of posting ``prices[m]`` at every step.

    Step ``s`` has sales mean ``scale * P[label[s], m]``. Inventory after
    ``s`` steps is ``(N - D_s)+`` with ``D_s`` Poisson, so expected leftovers
    suffice. Passing a column that belongs to a lower price than ``prices[m]``
    yields an upper bound whenever demand falls with the price.
    """
    S = label.shape[0]
    M = prices.shape[0]
    out = np.empty(M)
    for m in range(M):
        margin = prices[m] - cost
        lam = 0.0
        x = float(N)
        w = 1.0
        v = 0.0
        for s in range(S):
            lam += scale * P[label[s], m]
            x_next = _expected_left(lam, N)
            v += w * (margin * (x - x_next) - hold * x)
            x = x_next
            w *= disc
        out[m] = v
    return out


# feature codes for the builtin regressors
F_INTERCEPT, F_RANK, F_GAP, F_COUNT, F_AVERAGE, F_TIME = 0, 1, 2, 3, 4, 5


@njit(cache=True, inline="always")
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def builtin_probabilities(prices, comp, times, codes, beta, a1, a2, tie):
    """Logit sale probabilities for builtin regressors.

    ``prices`` is ``(R, M)``, ``comp`` is ``(R, K)`` with NaN for absent firms.
    Competitor sums run left to right so every caller gets identical bits.
    """
    R, M = prices.shape
    K = comp.shape[1]
    F = codes.shape[0]
    out = np.empty((R, M))
    buf = np.empty(K)
    for r in range(R):
        k = 0
        total = 0.0
        low = np.inf
        for j in range(K):
            p = comp[r, j]
            if p == p:
                buf[k] = p
                k += 1
                total += p
                if p < low:
                    low = p
        tp = a1 * times[r] ** a2
        for m in range(M):
            a = prices[r, m]
            z = 0.0
            for f in range(F):
                c = codes[f]
                if c == F_INTERCEPT:
                    x = 1.0
                elif c == F_RANK:
                    below = 0
                    ties = 0
                    for j in range(k):
                        if buf[j] < a - tie:
                            below += 1
                        elif abs(buf[j] - a) <= tie:
                            ties += 1
                    x = 1.0 + below + 0.5 * ties
                elif c == F_GAP:
                    x = a - low
                elif c == F_COUNT:
                    x = float(k)
                elif c == F_AVERAGE:
                    x = (a + total) / (1.0 + k)
                else:
                    x = tp
                if f == 0:
                    z = beta[f] * x
                else:
                    z = z + beta[f] * x
            out[r, m] = _expit(z)
    return out
