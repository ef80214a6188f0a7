"""Compiled array representation of a tree ensemble and the Gibbs kernels.

Each tree lives in a fixed block of node slots. Slot 0 is the root and a
slot is free when its canonical label is 0. Every node owns a contiguous
run ``order[m, start:end]`` of observation indices, sorted ascending; a
node's run is the concatenation of its children's runs, so a grow is a
stable partition and a prune is a merge of two adjacent sorted runs.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba as nb
import numpy as np

from .graph import _split_network

NEG_INF = -np.inf
MAX_DEPTH = 60

# indices into the hyper-parameter vector
H_ALPHA, H_BETA, H_TAU, H_MU0, H_QGROW = 0, 1, 2, 3, 4

# move statistics counters
S_GROW_PROP, S_GROW_ACC, S_PRUNE_PROP, S_PRUNE_ACC, S_NO_RULE, S_SSM_BAD, S_FULL = range(7)


class Forest(NamedTuple):
    nid: np.ndarray
    par: np.ndarray
    lchild: np.ndarray
    rchild: np.ndarray
    var: np.ndarray
    cut: np.ndarray
    side: np.ndarray
    mu: np.ndarray
    start: np.ndarray
    end: np.ndarray
    order: np.ndarray
    hw: np.ndarray


class Design(NamedTuple):
    xc: np.ndarray
    xk: np.ndarray
    nlev: np.ndarray
    var_ok: np.ndarray
    grid: np.ndarray
    glen: np.ndarray
    strategy: np.ndarray
    net_indptr: np.ndarray
    net_indices: np.ndarray


def new_forest(n_trees: int, capacity: int, kmax: int, n: int) -> Forest:
    f = Forest(
        nid=np.zeros((n_trees, capacity), dtype=np.int64),
        par=np.full((n_trees, capacity), -1, dtype=np.int64),
        lchild=np.full((n_trees, capacity), -1, dtype=np.int64),
        rchild=np.full((n_trees, capacity), -1, dtype=np.int64),
        var=np.full((n_trees, capacity), -1, dtype=np.int64),
        cut=np.zeros((n_trees, capacity)),
        side=np.zeros((n_trees, capacity, max(kmax, 1)), dtype=np.int8),
        mu=np.zeros((n_trees, capacity)),
        start=np.zeros((n_trees, capacity), dtype=np.int64),
        end=np.zeros((n_trees, capacity), dtype=np.int64),
        order=np.zeros((n_trees, n), dtype=np.int64),
        hw=np.ones(n_trees, dtype=np.int64),
    )
    for m in range(n_trees):
        reset_tree(f, m, n)
    return f


@nb.njit(cache=True)
def reset_tree(F, m, n):
    # slots at or above the high-water mark are re-initialized by birth
    for s in range(F.hw[m]):
        F.nid[m, s] = 0
        F.par[m, s] = -1
        F.lchild[m, s] = -1
        F.rchild[m, s] = -1
        F.var[m, s] = -1
        F.cut[m, s] = 0.0
        F.mu[m, s] = 0.0
        F.side[m, s, :] = 0
    F.nid[m, 0] = 1
    F.start[m, 0] = 0
    F.end[m, 0] = n
    for i in range(n):
        F.order[m, i] = i
    F.hw[m] = 1


@nb.njit(cache=True)
def node_depth(label):
    d = 0
    while label > 1:
        label >>= 1
        d += 1
    return d


@nb.njit(cache=True)
def count_leaves_nogs(F, m):
    nleaf = 0
    nnog = 0
    for s in range(F.hw[m]):
        if F.nid[m, s] == 0:
            continue
        if F.var[m, s] < 0:
            nleaf += 1
        elif F.var[m, F.lchild[m, s]] < 0 and F.var[m, F.rchild[m, s]] < 0:
            nnog += 1
    return nleaf, nnog


@nb.njit(cache=True)
def _pick_leaf(F, m, k):
    c = 0
    for s in range(F.hw[m]):
        if F.nid[m, s] != 0 and F.var[m, s] < 0:
            if c == k:
                return s
            c += 1
    return -1


@nb.njit(cache=True)
def _pick_nog(F, m, k):
    c = 0
    for s in range(F.hw[m]):
        if F.nid[m, s] != 0 and F.var[m, s] >= 0:
            if F.var[m, F.lchild[m, s]] < 0 and F.var[m, F.rchild[m, s]] < 0:
                if c == k:
                    return s
                c += 1
    return -1


@nb.njit(cache=True)
def _free_slots(F, m, want):
    C = F.nid.shape[1]
    got = 0
    for s in range(1, C):
        if F.nid[m, s] == 0:
            got += 1
            if got == want:
                return True
    return False


@nb.njit(cache=True)
def _alloc_slot(F, m):
    C = F.nid.shape[1]
    for s in range(1, C):
        if F.nid[m, s] == 0:
            if s + 1 > F.hw[m]:
                F.hw[m] = s + 1
            return s
    return -1


# ---------------------------------------------------------------------------
# available sets and rule draws


@nb.njit(cache=True)
def available_cont(F, m, s, j):
    lo = 0.0
    hi = 1.0
    child = s
    p = F.par[m, s]
    while p >= 0:
        if F.var[m, p] == j:
            if F.lchild[m, p] == child:
                hi = min(hi, F.cut[m, p])
            else:
                lo = max(lo, F.cut[m, p])
        child = p
        p = F.par[m, p]
    return lo, hi


@nb.njit(cache=True)
def available_cat(F, m, s, j, k, out):
    """Fill ``out[:k]`` with availability of each level of variable ``j``; returns the count."""
    for a in range(k):
        out[a] = True
    child = s
    p = F.par[m, s]
    while p >= 0:
        if F.var[m, p] == j:
            want = 1 if F.lchild[m, p] == child else 2
            for a in range(k):
                if F.side[m, p, a] != want:
                    out[a] = False
        child = p
        p = F.par[m, p]
    c = 0
    for a in range(k):
        c += out[a]
    return c


@nb.njit(cache=True)
def _grid_count(D, j, lo, hi):
    c = 0
    for g in range(D.glen[j]):
        v = D.grid[j, g]
        if lo < v < hi:
            c += 1
    return c


@nb.njit(cache=True)
def draw_rule(F, m, s, D, rng, side_buf):
    """Draw a rule for slot ``s`` from the prior.

    Returns ``(ok, var, cut)``; categorical assignments are written to
    ``side_buf`` (1 left, 2 right, 0 unavailable). ``ok`` is False when no
    variable can be split at this node.
    """
    pc = D.xc.shape[1]
    pk = D.nlev.shape[0]
    p = pc + pk
    kmax = side_buf.shape[0]
    avail = np.zeros(kmax, dtype=np.bool_)
    eligible = np.zeros(p, dtype=np.bool_)
    n_elig = 0
    for j in range(p):
        if not D.var_ok[j]:
            continue
        if j < pc:
            lo, hi = available_cont(F, m, s, j)
            if D.glen[j] > 0:
                ok = _grid_count(D, j, lo, hi) > 0
            else:
                ok = hi > lo
        else:
            ok = available_cat(F, m, s, j, D.nlev[j - pc], avail) >= 2
        if ok:
            eligible[j] = True
            n_elig += 1
    if n_elig == 0:
        return False, -1, 0.0
    pick = rng.integers(0, n_elig)
    j = -1
    for jj in range(p):
        if eligible[jj]:
            if pick == 0:
                j = jj
                break
            pick -= 1
    if j < pc:
        lo, hi = available_cont(F, m, s, j)
        if D.glen[j] > 0:
            r = rng.integers(0, _grid_count(D, j, lo, hi))
            for g in range(D.glen[j]):
                v = D.grid[j, g]
                if lo < v < hi:
                    if r == 0:
                        return True, j, v
                    r -= 1
        return True, j, lo + (hi - lo) * rng.random()
    c = j - pc
    k = D.nlev[c]
    na = available_cat(F, m, s, j, k, avail)
    verts = np.empty(na, dtype=np.int64)
    a = 0
    for v in range(k):
        if avail[v]:
            verts[a] = v
            a += 1
    mask, ok = _split_network(
        D.strategy[c], D.net_indptr[c, : k + 1], D.net_indices[c], verts, rng
    )
    if not ok:
        return False, -1, 0.0
    side_buf[:] = 0
    for a in range(na):
        side_buf[verts[a]] = 1 if mask[a] else 2
    return True, j, 0.0


@nb.njit(cache=True)
def goes_left(xc, xk, i, var, cut, side_row):
    pc = xc.shape[1]
    if var < pc:
        return xc[i, var] < cut
    return side_row[xk[i, var - pc]] == 1


# ---------------------------------------------------------------------------
# marginal likelihood and acceptance ratios


@nb.njit(cache=True)
def log_marginal(count, rsum, sigma2, tau, mu0):
    """Per-leaf log evidence, dropping factors shared by every candidate tree."""
    prec = count / sigma2 + 1.0 / (tau * tau)
    theta = rsum / sigma2 + mu0 / (tau * tau)
    return -math.log(tau) - 0.5 * math.log(prec) + theta * theta / (2.0 * prec) - mu0 * mu0 / (2.0 * tau * tau)


@nb.njit(cache=True)
def _log_split_prob(alpha, beta, d):
    return math.log(alpha) - beta * math.log(1.0 + d)


@nb.njit(cache=True)
def _log_nosplit_prob(alpha, beta, d):
    return math.log1p(-alpha * (1.0 + d) ** (-beta))


@nb.njit(cache=True)
def grow_log_ratio(d, nleaf, nnog_star, alpha, beta, q_grow, lm_left, lm_right, lm_parent):
    """Log MH ratio for growing a depth-``d`` leaf of a tree with ``nleaf`` leaves.

    ``nnog_star`` counts no-grandchild nodes in the grown tree. Growing a
    stump is the only legal move, so its grow probability is 1.
    """
    q_g = 1.0 if nleaf == 1 else q_grow
    q_p = 1.0 - q_grow
    out = math.log(q_p / nnog_star) - math.log(q_g / nleaf)
    out += _log_split_prob(alpha, beta, d) + 2.0 * _log_nosplit_prob(alpha, beta, d + 1)
    out -= _log_nosplit_prob(alpha, beta, d)
    return out + lm_left + lm_right - lm_parent


@nb.njit(cache=True)
def prune_log_ratio(d, nleaf, nnog, alpha, beta, q_grow, lm_left, lm_right, lm_parent):
    """Log MH ratio for pruning a depth-``d`` no-grandchild node; exact inverse of the grow ratio."""
    nleaf_star = nleaf - 1
    q_g = 1.0 if nleaf_star == 1 else q_grow
    q_p = 1.0 - q_grow
    out = math.log(q_g / nleaf_star) - math.log(q_p / nnog)
    out -= _log_split_prob(alpha, beta, d) + 2.0 * _log_nosplit_prob(alpha, beta, d + 1)
    out += _log_nosplit_prob(alpha, beta, d)
    return out + lm_parent - lm_left - lm_right


@nb.njit(cache=True)
def grow_proposal(F, m, s, var, cut, side_buf, D, resid, sigma2, hyper, min_leaf):
    """Log acceptance ratio for growing slot ``s`` with the given rule."""
    n_l = 0
    n_all = 0
    sum_l = 0.0
    sum_all = 0.0
    for k in range(F.start[m, s], F.end[m, s]):
        i = F.order[m, k]
        r = resid[i]
        n_all += 1
        sum_all += r
        if goes_left(D.xc, D.xk, i, var, cut, side_buf):
            n_l += 1
            sum_l += r
    n_r = n_all - n_l
    if min_leaf > 0 and (n_l < min_leaf or n_r < min_leaf):
        return NEG_INF
    nleaf, nnog = count_leaves_nogs(F, m)
    if s == 0:
        nnog_star = 1
    else:
        p = F.par[m, s]
        sib = F.rchild[m, p] if F.lchild[m, p] == s else F.lchild[m, p]
        nnog_star = nnog if F.var[m, sib] < 0 else nnog + 1
    tau = hyper[H_TAU]
    mu0 = hyper[H_MU0]
    return grow_log_ratio(
        node_depth(F.nid[m, s]), nleaf, nnog_star, hyper[H_ALPHA], hyper[H_BETA], hyper[H_QGROW],
        log_marginal(n_l, sum_l, sigma2, tau, mu0),
        log_marginal(n_r, sum_all - sum_l, sigma2, tau, mu0),
        log_marginal(n_all, sum_all, sigma2, tau, mu0),
    )


@nb.njit(cache=True)
def _segment_sum(F, m, s, resid):
    t = 0.0
    for k in range(F.start[m, s], F.end[m, s]):
        t += resid[F.order[m, k]]
    return t


@nb.njit(cache=True)
def prune_proposal(F, m, s, resid, sigma2, hyper):
    l = F.lchild[m, s]
    r = F.rchild[m, s]
    n_l = F.end[m, l] - F.start[m, l]
    n_r = F.end[m, r] - F.start[m, r]
    sum_l = _segment_sum(F, m, l, resid)
    sum_r = _segment_sum(F, m, r, resid)
    nleaf, nnog = count_leaves_nogs(F, m)
    tau = hyper[H_TAU]
    mu0 = hyper[H_MU0]
    return prune_log_ratio(
        node_depth(F.nid[m, s]), nleaf, nnog, hyper[H_ALPHA], hyper[H_BETA], hyper[H_QGROW],
        log_marginal(n_l, sum_l, sigma2, tau, mu0),
        log_marginal(n_r, sum_r, sigma2, tau, mu0),
        log_marginal(n_l + n_r, sum_l + sum_r, sigma2, tau, mu0),
    )


# ---------------------------------------------------------------------------
# structural edits


@nb.njit(cache=True)
def birth(F, m, s, var, cut, side_buf, xc, xk, tmp):
    """Attach two leaf children to slot ``s``; stable-partition its run."""
    a = _alloc_slot(F, m)
    F.nid[m, a] = 2 * F.nid[m, s]
    b = _alloc_slot(F, m)
    F.nid[m, b] = 2 * F.nid[m, s] + 1
    lo = F.start[m, s]
    hi = F.end[m, s]
    nl = 0
    nr = 0
    for k in range(lo, hi):
        i = F.order[m, k]
        if goes_left(xc, xk, i, var, cut, side_buf):
            F.order[m, lo + nl] = i
            nl += 1
        else:
            tmp[nr] = i
            nr += 1
    for k in range(nr):
        F.order[m, lo + nl + k] = tmp[k]
    F.var[m, s] = var
    F.cut[m, s] = cut
    F.side[m, s, :] = side_buf
    F.lchild[m, s] = a
    F.rchild[m, s] = b
    for c in (a, b):
        F.par[m, c] = s
        F.lchild[m, c] = -1
        F.rchild[m, c] = -1
        F.var[m, c] = -1
        F.cut[m, c] = 0.0
        F.mu[m, c] = 0.0
        F.side[m, c, :] = 0
    F.start[m, a] = lo
    F.end[m, a] = lo + nl
    F.start[m, b] = lo + nl
    F.end[m, b] = hi


@nb.njit(cache=True)
def death(F, m, s, tmp):
    """Remove the two leaf children of slot ``s``; merge their sorted runs."""
    l = F.lchild[m, s]
    r = F.rchild[m, s]
    lo = F.start[m, s]
    mid = F.end[m, l]
    hi = F.end[m, s]
    a = lo
    b = mid
    k = 0
    while a < mid and b < hi:
        if F.order[m, a] <= F.order[m, b]:
            tmp[k] = F.order[m, a]
            a += 1
        else:
            tmp[k] = F.order[m, b]
            b += 1
        k += 1
    while a < mid:
        tmp[k] = F.order[m, a]
        a += 1
        k += 1
    while b < hi:
        tmp[k] = F.order[m, b]
        b += 1
        k += 1
    for q in range(hi - lo):
        F.order[m, lo + q] = tmp[q]
    for c in (l, r):
        F.nid[m, c] = 0
        F.par[m, c] = -1
        F.var[m, c] = -1
        F.side[m, c, :] = 0
    F.var[m, s] = -1
    F.cut[m, s] = 0.0
    F.side[m, s, :] = 0
    F.lchild[m, s] = -1
    F.rchild[m, s] = -1
    while F.hw[m] > 1 and F.nid[m, F.hw[m] - 1] == 0:
        F.hw[m] -= 1


# ---------------------------------------------------------------------------
# routing and checks


@nb.njit(cache=True)
def leaf_slot_of(F, m, xc, xk, i):
    s = 0
    while F.var[m, s] >= 0:
        if goes_left(xc, xk, i, F.var[m, s], F.cut[m, s], F.side[m, s]):
            s = F.lchild[m, s]
        else:
            s = F.rchild[m, s]
    return s


@nb.njit(cache=True)
def predict_forest(F, xc, xk, out):
    n = xc.shape[0]
    M = F.nid.shape[0]
    for i in range(n):
        t = 0.0
        for m in range(M):
            t += F.mu[m, leaf_slot_of(F, m, xc, xk, i)]
        out[i] = t


@nb.njit(cache=True)
def tree_fit(F, m, n, out):
    """Fit of tree ``m`` at the training points, read from the leaf runs."""
    for s in range(F.hw[m]):
        if F.nid[m, s] != 0 and F.var[m, s] < 0:
            mu = F.mu[m, s]
            for k in range(F.start[m, s], F.end[m, s]):
                out[F.order[m, k]] = mu


@nb.njit(cache=True)
def check_runs(F, m, xc, xk):
    """Count observations whose stored leaf differs from a fresh traversal.

    Also flags unsorted runs and runs that fail to tile ``0..n-1``.
    """
    n = xc.shape[0]
    bad = 0
    covered = 0
    seen = np.zeros(n, dtype=np.bool_)
    for s in range(F.hw[m]):
        if F.nid[m, s] == 0 or F.var[m, s] >= 0:
            continue
        covered += F.end[m, s] - F.start[m, s]
        for k in range(F.start[m, s], F.end[m, s]):
            i = F.order[m, k]
            if seen[i]:
                bad += 1
            seen[i] = True
            if k > F.start[m, s] and F.order[m, k - 1] >= i:
                bad += 1
            if leaf_slot_of(F, m, xc, xk, i) != s:
                bad += 1
    if covered != n:
        bad += abs(n - covered)
    return bad


# ---------------------------------------------------------------------------
# Gibbs updates


@nb.njit(cache=True)
def draw_jumps_posterior(F, m, resid, sigma2, hyper, rng):
    tau = hyper[H_TAU]
    mu0 = hyper[H_MU0]
    for s in range(F.hw[m]):
        if F.nid[m, s] == 0 or F.var[m, s] >= 0:
            continue
        cnt = F.end[m, s] - F.start[m, s]
        rsum = _segment_sum(F, m, s, resid)
        prec = cnt / sigma2 + 1.0 / (tau * tau)
        theta = rsum / sigma2 + mu0 / (tau * tau)
        F.mu[m, s] = theta / prec + rng.normal() / math.sqrt(prec)


@nb.njit(cache=True)
def _shift_fit(F, m, allfit, resid, sign):
    for s in range(F.hw[m]):
        if F.nid[m, s] == 0 or F.var[m, s] >= 0:
            continue
        mu = sign * F.mu[m, s]
        for k in range(F.start[m, s], F.end[m, s]):
            i = F.order[m, k]
            allfit[i] += mu
            resid[i] -= mu


@nb.njit(cache=True)
def update_tree(F, m, D, allfit, resid, sigma, hyper, min_leaf, rng, side_buf, tmp, stats, check):
    """One grow/prune MH step for tree ``m`` followed by a conjugate jump refresh."""
    sigma2 = sigma * sigma
    _shift_fit(F, m, allfit, resid, -1.0)
    nleaf, nnog = count_leaves_nogs(F, m)
    grow = nleaf == 1 or rng.random() < hyper[H_QGROW]
    if grow:
        stats[S_GROW_PROP] += 1
        s = _pick_leaf(F, m, rng.integers(0, nleaf))
        ok, var, cut = draw_rule(F, m, s, D, rng, side_buf)
        if not ok:
            stats[S_NO_RULE] += 1
        elif node_depth(F.nid[m, s]) >= MAX_DEPTH or not _free_slots(F, m, 2):
            stats[S_FULL] += 1
        else:
            lr = grow_proposal(F, m, s, var, cut, side_buf, D, resid, sigma2, hyper, min_leaf)
            if lr >= 0.0 or math.log(rng.random()) < lr:
                birth(F, m, s, var, cut, side_buf, D.xc, D.xk, tmp)
                stats[S_GROW_ACC] += 1
                if check:
                    stats[S_SSM_BAD] += check_runs(F, m, D.xc, D.xk)
    else:
        stats[S_PRUNE_PROP] += 1
        s = _pick_nog(F, m, rng.integers(0, nnog))
        lr = prune_proposal(F, m, s, resid, sigma2, hyper)
        if lr >= 0.0 or math.log(rng.random()) < lr:
            death(F, m, s, tmp)
            stats[S_PRUNE_ACC] += 1
            if check:
                stats[S_SSM_BAD] += check_runs(F, m, D.xc, D.xk)
    draw_jumps_posterior(F, m, resid, sigma2, hyper, rng)
    _shift_fit(F, m, allfit, resid, 1.0)


@nb.njit(cache=True)
def draw_sigma(resid, nu, lam, rng):
    """Scaled-inverse-chi-square posterior draw of the noise sd."""
    n = resid.shape[0]
    sse = 0.0
    for i in range(n):
        sse += resid[i] * resid[i]
    return math.sqrt((nu * lam + sse) / rng.chisquare(nu + n))


@nb.njit(cache=True)
def _rtnorm_lower(a, rng):
    """Standard normal truncated to ``[a, inf)``."""
    if a <= 0.0:
        while True:
            z = rng.normal()
            if z >= a:
                return z
    alpha = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        z = a + rng.standard_exponential() / alpha
        if math.log(rng.random()) <= -0.5 * (z - alpha) ** 2:
            return z


@nb.njit(cache=True)
def probit_augment(y01, allfit, z, resid, rng):
    for i in range(y01.shape[0]):
        f = allfit[i]
        if y01[i] > 0.5:
            z[i] = f + _rtnorm_lower(-f, rng)
        else:
            z[i] = f - _rtnorm_lower(f, rng)
        resid[i] = z[i] - f


@nb.njit(cache=True)
def sweep(F, D, allfit, resid, sigma_box, hyper, min_leaf, nu, lam, fixed_sigma,
          probit, y01, z, rng, side_buf, tmp, stats, check):
    M = F.nid.shape[0]
    for m in range(M):
        update_tree(F, m, D, allfit, resid, sigma_box[0], hyper, min_leaf, rng, side_buf, tmp, stats, check)
    if probit:
        probit_augment(y01, allfit, z, resid, rng)
    elif not fixed_sigma:
        sigma_box[0] = draw_sigma(resid, nu, lam, rng)


# ---------------------------------------------------------------------------
# prior draws


@nb.njit(cache=True)
def draw_prior_tree(F, m, D, hyper, rng, side_buf, draw_rules):
    """Branching-process tree with prior rules and jumps, written into tree ``m``.

    Nodes that cannot be split (no eligible variable, depth or capacity
    limit) stay leaves. With ``draw_rules`` False only the shape is drawn.
    """
    n = F.order.shape[1]
    reset_tree(F, m, n)
    C = F.nid.shape[1]
    stack = np.empty(C, dtype=np.int64)
    stack[0] = 0
    top = 1
    alpha = hyper[H_ALPHA]
    beta = hyper[H_BETA]
    while top > 0:
        top -= 1
        s = stack[top]
        d = node_depth(F.nid[m, s])
        if rng.random() >= alpha * (1.0 + d) ** (-beta):
            continue
        if d >= MAX_DEPTH or not _free_slots(F, m, 2):
            continue
        if draw_rules:
            ok, var, cut = draw_rule(F, m, s, D, rng, side_buf)
            if not ok:
                continue
        else:
            var, cut = 0, 0.5
            side_buf[:] = 0
        birth(F, m, s, var, cut, side_buf, D.xc, D.xk, np.empty(n, dtype=np.int64))
        stack[top] = F.rchild[m, s]
        stack[top + 1] = F.lchild[m, s]
        top += 2
    for s in range(F.hw[m]):
        if F.nid[m, s] != 0 and F.var[m, s] < 0:
            F.mu[m, s] = hyper[H_MU0] + hyper[H_TAU] * rng.normal()


@nb.njit(cache=True)
def prior_ensemble_draws(F, D, probe_xc, probe_xk, hyper, rng, side_buf, n_draws, out):
    """``out[r, a]``: sum-of-trees value at probe ``a`` for the ``r``-th prior ensemble."""
    M = F.nid.shape[0]
    K = probe_xc.shape[0]
    for r in range(n_draws):
        for m in range(M):
            draw_prior_tree(F, m, D, hyper, rng, side_buf, True)
        for a in range(K):
            t = 0.0
            for m in range(M):
                t += F.mu[m, leaf_slot_of(F, m, probe_xc, probe_xk, a)]
            out[r, a] = t


@nb.njit(cache=True)
def coclustering_counts(F, D, probe_xc, probe_xk, hyper, rng, side_buf, n_draws, counts):
    """Accumulate, over prior tree draws, how often each probe pair shares a leaf."""
    K = probe_xc.shape[0]
    leaf = np.empty(K, dtype=np.int64)
    for _ in range(n_draws):
        draw_prior_tree(F, 0, D, hyper, rng, side_buf, True)
        for a in range(K):
            leaf[a] = leaf_slot_of(F, 0, probe_xc, probe_xk, a)
        for a in range(K):
            for b in range(K):
                if leaf[a] == leaf[b]:
                    counts[a, b] += 1
