"""Compiled inner loops for the gap-process engine.

Everything here works on flat arrays so numba can compile it; the public
wrappers live in :mod:`excloud.engine`.

Layout
------
``eta[k]``   occupancy of queue ``k`` for ``k = 1..cap`` (slot 0 unused)
``tree``     Fenwick tree over ``mu[k] * (eta[k] > 0)``; ``cap`` is a power of
             two so ``tree[cap]`` is the total weight
``istate``   integer counters, see the ``I_*`` indices
``fstate``   clock and the pending event time, see the ``F_*`` indices
"""

from __future__ import annotations

import numpy as np
from numba import njit

# istate slots
I_X1 = 0
I_TOTAL = 1
I_ENTERED = 2
I_EXITED = 3
I_FRONTIER = 4
I_NEVENTS = 5
I_NOCC = 6
I_LOGN = 7
I_SINCE_REBUILD = 8
I_BOUNDARY_IN = 9
I_BOUNDARY_OUT = 10
N_ISTATE = 11

# fstate slots
F_T = 0
F_NEXT = 1
F_HAS_NEXT = 2
N_FSTATE = 3

# return codes
DONE = 0
GROW = 1
LOG_FULL = 2
ABORT = 3
EVENT_LIMIT = 4

# boundary modes
SEMI = 0
LOWER = 1  # right routing at queue N leaves the system
UPPER = 2  # as LOWER, plus arrivals into queue N at rate b_{N+1}

_REBUILD_EVERY = 1 << 20


@njit(cache=True, inline="always", error_model="numpy")
def fen_add(tree, cap, k, d):
    while k <= cap:
        tree[k] += d
        k += k & (-k)


@njit(cache=True, error_model="numpy")
def fen_build(tree, eta, mu, cap):
    tree[:] = 0.0
    for k in range(1, cap + 1):
        if eta[k] > 0:
            tree[k] += mu[k]
        j = k + (k & (-k))
        if j <= cap:
            tree[j] += tree[k]


@njit(cache=True, inline="always", error_model="numpy")
def fen_find(tree, cap, u):
    """Smallest ``k`` whose prefix weight exceeds ``u``, and the remainder."""
    pos = 0
    step = cap
    while step > 0:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= u:
            pos = nxt
            u -= tree[nxt]
        step >>= 1
    return pos + 1, u


@njit(cache=True, inline="always", error_model="numpy")
def _touch(k, t, eta, hist, last):
    # close the holding interval of queue k before its value changes
    if k < hist.shape[0]:
        m = eta[k]
        top = hist.shape[1] - 1
        if m > top:
            m = top
        hist[k, m] += t - last[k]
        last[k] = t


@njit(cache=True, inline="always", error_model="numpy")
def _inc(k, t, eta, tree, mu, cap, istate, hist, last, hist_on):
    if hist_on:
        _touch(k, t, eta, hist, last)
    eta[k] += 1
    if eta[k] == 1:
        fen_add(tree, cap, k, mu[k])
        istate[I_NOCC] += 1
        if k > istate[I_FRONTIER]:
            istate[I_FRONTIER] = k


@njit(cache=True, inline="always", error_model="numpy")
def _dec(k, t, eta, tree, mu, cap, istate, hist, last, hist_on):
    if hist_on:
        _touch(k, t, eta, hist, last)
    eta[k] -= 1
    if eta[k] == 0:
        fen_add(tree, cap, k, -mu[k])
        istate[I_NOCC] -= 1
        if k == istate[I_FRONTIER]:
            f = k
            while f > 0 and eta[f] == 0:
                f -= 1
            istate[I_FRONTIER] = f


@njit(cache=True, error_model="numpy")
def advance(eta, tree, a, b, mu, istate, fstate, t_end, mode, N, cust_cap,
            hard_cap, hist, last, hist_on, logt, logx, log_on, ev_limit, rng):
    """Run events until ``t_end`` or until the caller must intervene.

    Returns one of DONE, GROW (semi-infinite arrays too small; no randomness
    consumed), LOG_FULL (x1 log buffer full), ABORT (frontier beyond
    ``hard_cap``) or EVENT_LIMIT (``istate[I_NEVENTS]`` reached ``ev_limit``).
    """
    cap = tree.shape[0] - 1
    while True:
        if ev_limit >= 0 and istate[I_NEVENTS] >= ev_limit:
            return EVENT_LIMIT
        if mode == SEMI and istate[I_FRONTIER] >= cap:
            return GROW
        if log_on and istate[I_LOGN] >= logt.shape[0]:
            return LOG_FULL
        if istate[I_SINCE_REBUILD] >= _REBUILD_EVERY:
            fen_build(tree, eta, mu, cap)
            istate[I_SINCE_REBUILD] = 0

        room = cust_cap < 0 or istate[I_TOTAL] < cust_cap
        lam1 = a[1] if room else 0.0
        lam_n = b[N + 1] if (mode == UPPER and room) else 0.0
        wq = tree[cap] if istate[I_NOCC] > 0 else 0.0
        if wq < 0.0:
            wq = 0.0
        total = lam1 + lam_n + wq
        if total <= 0.0:
            fstate[F_T] = t_end
            return DONE

        if fstate[F_HAS_NEXT] == 0.0:
            fstate[F_NEXT] = fstate[F_T] + rng.exponential() / total
            fstate[F_HAS_NEXT] = 1.0
        if fstate[F_NEXT] > t_end:
            fstate[F_T] = t_end
            return DONE
        t = fstate[F_NEXT]
        fstate[F_T] = t
        fstate[F_HAS_NEXT] = 0.0

        u = rng.random() * total
        if u < lam1:
            _inc(1, t, eta, tree, mu, cap, istate, hist, last, hist_on)
            istate[I_TOTAL] += 1
            istate[I_X1] -= 1
            istate[I_ENTERED] += 1
            if log_on:
                n = istate[I_LOGN]
                logt[n] = t
                logx[n] = istate[I_X1]
                istate[I_LOGN] = n + 1
        elif u < lam1 + lam_n:
            _inc(N, t, eta, tree, mu, cap, istate, hist, last, hist_on)
            istate[I_TOTAL] += 1
            istate[I_BOUNDARY_IN] += 1
        else:
            u -= lam1 + lam_n
            k, rem = fen_find(tree, cap, u)
            while k > cap or eta[k] == 0 or rem >= mu[k]:
                # accumulated rounding in the tree; rebuild and redraw
                fen_build(tree, eta, mu, cap)
                istate[I_SINCE_REBUILD] = 0
                k, rem = fen_find(tree, cap, rng.random() * tree[cap])
            # fill the target before emptying the source so the frontier
            # scan in _dec stops at the target
            if rem < b[k]:
                if k > 1:
                    _inc(k - 1, t, eta, tree, mu, cap, istate, hist, last, hist_on)
                _dec(k, t, eta, tree, mu, cap, istate, hist, last, hist_on)
                if k == 1:
                    istate[I_TOTAL] -= 1
                    istate[I_X1] += 1
                    istate[I_EXITED] += 1
                    if log_on:
                        n = istate[I_LOGN]
                        logt[n] = t
                        logx[n] = istate[I_X1]
                        istate[I_LOGN] = n + 1
            else:
                if mode != SEMI and k == N:
                    istate[I_TOTAL] -= 1
                    istate[I_BOUNDARY_OUT] += 1
                else:
                    _inc(k + 1, t, eta, tree, mu, cap, istate, hist, last, hist_on)
                _dec(k, t, eta, tree, mu, cap, istate, hist, last, hist_on)
        istate[I_NEVENTS] += 1
        istate[I_SINCE_REBUILD] += 1
        if hard_cap >= 0 and istate[I_FRONTIER] > hard_cap:
            return ABORT


@njit(cache=True, error_model="numpy")
def batch_final(eta0, a, b, mu, t_end, mode, N, cust_cap, hard_cap, out, rng):
    """Independent replicates from ``eta0`` to ``t_end``; final gaps into ``out``.

    ``out`` has shape ``(n_rep, W)`` and receives ``eta[1..W]``.  Returns -1 on
    success, else the index of the replicate that hit GROW or ABORT.
    """
    cap = eta0.shape[0] - 2
    eta = eta0.copy()
    tree = np.zeros(cap + 1)
    istate = np.zeros(N_ISTATE, np.int64)
    fstate = np.zeros(N_FSTATE)
    hist = np.zeros((1, 1))
    last = np.zeros(1)
    logt = np.zeros(1)
    logx = np.zeros(1, np.int64)
    W = out.shape[1]
    tot0 = 0
    occ0 = 0
    fr0 = 0
    for k in range(1, cap + 1):
        if eta0[k] > 0:
            tot0 += eta0[k]
            occ0 += 1
            fr0 = k
    for r in range(out.shape[0]):
        eta[:] = eta0
        fen_build(tree, eta, mu, cap)
        istate[:] = 0
        istate[I_TOTAL] = tot0
        istate[I_NOCC] = occ0
        istate[I_FRONTIER] = fr0
        fstate[:] = 0.0
        code = advance(eta, tree, a, b, mu, istate, fstate, t_end, mode, N,
                       cust_cap, hard_cap, hist, last, False, logt, logx,
                       False, -1, rng)
        if code != DONE:
            return r
        for j in range(W):
            out[r, j] = eta[j + 1]
    return -1
