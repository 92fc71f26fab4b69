"""Compiled hot path: drafting, credit matrices, objectives, simulation rounds.

Everything here operates on dense universe indices (see
``rankings.intern_inputs``) and an explicit splitmix64 RNG state, so results
are reproducible bit-for-bit for a given seed regardless of threading.  The
public modules wrap these kernels; the click simulator calls them in a tight
loop.  Scratch arrays are caller-provided so a simulation round performs no
per-click allocation.

Codes used throughout:
  credit: 0 = inverse, 1 = negative rank, 2 = personalization
  method: 0 = team draft, 1 = greedy optimized
"""

from __future__ import annotations

import hashlib

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
_U64 = np.uint64

CREDIT_INVERSE = 0
CREDIT_NEGATIVE_RANK = 1
CREDIT_PERSONALIZATION = 2

METHOD_TDM = 0
METHOD_GOM = 1


def seed_state(seed: int) -> np.ndarray:
    """One-element uint64 array holding the splitmix64 counter."""
    return np.array([seed & MASK64], dtype=np.uint64)


def derive_seed(root: int, *parts: int | str) -> int:
    """Stable 64-bit sub-stream seed from a root seed and mixed-type labels."""
    h = root & MASK64
    for part in parts:
        if isinstance(part, str):
            part = int.from_bytes(hashlib.blake2b(part.encode(), digest_size=8).digest(), "big")
        h = (h ^ (part & MASK64)) & MASK64
        h = (h + 0x9E3779B97F4A7C15) & MASK64
        z = h
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        h = (z ^ (z >> 31)) & MASK64
    return h


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] += _U64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
    return z ^ (z >> _U64(31))


@njit(cache=True, nogil=True)
def rand_below(state, n):
    """Uniform int in [0, n). Modulo bias is negligible for n << 2**64."""
    return np.int64(_next_u64(state) % _U64(n))


@njit(cache=True, nogil=True)
def shuffle(state, arr):
    for i in range(arr.shape[0] - 1, 0, -1):
        j = rand_below(state, i + 1)
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


@njit(cache=True, nogil=True)
def positions_into(rank_mat, lengths, pos):
    """Effective 1-based rank of every universe item in every ranking.

    Items absent from ranking j get the virtual rank lengths[j] + 1.
    pos has shape (n, universe_size).
    """
    n = rank_mat.shape[0]
    for j in range(n):
        absent = lengths[j] + 1
        for u in range(pos.shape[1]):
            pos[j, u] = absent
        for p in range(lengths[j]):
            pos[j, rank_mat[j, p]] = p + 1


@njit(cache=True, nogil=True)
def credit_matrix_into(pos, lengths, credit_code, delta):
    """delta[u, j] = credit of item u for ranking j, for all universe items."""
    n = pos.shape[0]
    size = pos.shape[1]
    for u in range(size):
        if credit_code == CREDIT_PERSONALIZATION:
            for j in range(n):
                rj = pos[j, u]
                if rj > lengths[j]:
                    delta[u, j] = -np.float64(lengths[j] + 1)
                else:
                    c = 0
                    for j2 in range(n):
                        if pos[j2, u] <= rj:
                            c += 1
                    delta[u, j] = -np.float64(c)
        elif credit_code == CREDIT_INVERSE:
            for j in range(n):
                delta[u, j] = 1.0 / np.float64(pos[j, u])
        else:
            for j in range(n):
                delta[u, j] = -np.float64(pos[j, u])


@njit(cache=True, nogil=True)
def weighted_sums_into(out_idx, delta, f, sums):
    """Per-ranker position-weighted credit sums of an output ranking.

    Returns (sigma_squared, mu): the spread of the per-ranker sums around
    their mean, and the mean itself.
    """
    n = delta.shape[1]
    for j in range(n):
        s = 0.0
        for i in range(out_idx.shape[0]):
            s += f[i] * delta[out_idx[i], j]
        sums[j] = s
    mu = 0.0
    for j in range(n):
        mu += sums[j]
    mu /= n
    s2 = 0.0
    for j in range(n):
        d = sums[j] - mu
        s2 += d * d
    return s2, mu


@njit(cache=True, nogil=True)
def bias_lambdas_into(out_idx, delta, prefix, lambdas):
    """Per-depth worst-case credit gap under uniform clicks.

    lambdas[r-1] = max_j prefix_j(r) - min_j prefix_j(r) with unweighted
    credit prefix sums; returns the sum over depths.
    """
    n = delta.shape[1]
    for j in range(n):
        prefix[j] = 0.0
    total = 0.0
    for i in range(out_idx.shape[0]):
        hi = -1e300
        lo = 1e300
        for j in range(n):
            prefix[j] += delta[out_idx[i], j]
            if prefix[j] > hi:
                hi = prefix[j]
            if prefix[j] < lo:
                lo = prefix[j]
        lambdas[i] = hi - lo
        total += hi - lo
    return total


@njit(cache=True, nogil=True)
def tdm_draft_into(rank_mat, lengths, l_out, state, used, ptrs, order, out_idx, team_of_item):
    """Team-draft construction: random ranker order per round, each ranker in
    turn contributes its highest-ranked unused item and claims it."""
    n = rank_mat.shape[0]
    for u in range(used.shape[0]):
        used[u] = False
        team_of_item[u] = -1
    for j in range(n):
        ptrs[j] = 0
    filled = 0
    while filled < l_out:
        for j in range(n):
            order[j] = j
        shuffle(state, order)
        for oj in range(n):
            j = order[oj]
            p = ptrs[j]
            while p < lengths[j] and used[rank_mat[j, p]]:
                p += 1
            ptrs[j] = p
            if p >= lengths[j]:
                continue
            item = rank_mat[j, p]
            used[item] = True
            out_idx[filled] = item
            team_of_item[item] = j
            filled += 1
            if filled == l_out:
                break


@njit(cache=True, nogil=True)
def draft_candidates_into(rank_mat, lengths, l_out, state, used, ptrs, cands):
    """Randomized draft pool: at every position an input ranking is drawn
    uniformly (exhausted ones are redrawn) and contributes its top unused
    item.  Fills cands of shape (m, l_out); duplicates are kept."""
    n = rank_mat.shape[0]
    m = cands.shape[0]
    for k in range(m):
        for u in range(used.shape[0]):
            used[u] = False
        for j in range(n):
            ptrs[j] = 0
        for i in range(l_out):
            while True:
                j = rand_below(state, n)
                p = ptrs[j]
                while p < lengths[j] and used[rank_mat[j, p]]:
                    p += 1
                ptrs[j] = p
                if p < lengths[j]:
                    break
            item = rank_mat[j, ptrs[j]]
            used[item] = True
            cands[k, i] = item


@njit(cache=True, nogil=True)
def select_best(cands, delta, f, alpha, sums, prefix, lambdas):
    """Greedy objective minimization over a candidate pool.

    objective(k) = alpha * sum_r lambda_r(k) + sigma_k^2; ties keep the
    earliest-generated candidate.  Returns (index, objective, sigma2, mu).
    """
    best_k = 0
    best_obj = 1e300
    best_s2 = 0.0
    best_mu = 0.0
    for k in range(cands.shape[0]):
        s2, mu = weighted_sums_into(cands[k], delta, f, sums)
        obj = s2
        if alpha > 0.0:
            obj = alpha * bias_lambdas_into(cands[k], delta, prefix, lambdas) + s2
        if obj < best_obj:
            best_obj = obj
            best_k = k
            best_s2 = s2
            best_mu = mu
    return best_k, best_obj, best_s2, best_mu


@njit(cache=True, nogil=True)
def simulate_round_into(
    n,
    l,
    numclick,
    m,
    pref,
    x_count,
    method_code,
    credit_code,
    alpha,
    f,
    collect_stats,
    identical_inputs,
    state,
    credit_out,
    trace_items,
    trace_pos,
):
    """One evaluation round of the personalized click simulation.

    Every click iteration draws fresh input rankings as independent shuffles
    of an l-item universe, multileaves them, clicks an item from the top
    x_count positions of the preferred ranker's list (restricted to displayed
    items), and accumulates credit for every ranker (team rule for TDM).

    Returns (insens_sum, insens_count, bias_sum, bias_sq_sum, bias_count)
    where each insensitivity sample is sigma^2/mu^2 of the shown ranking and
    each bias sample is mean_r lambda_r / (n * l).
    """
    rank_mat = np.empty((n, l), dtype=np.int32)
    lengths = np.full(n, l, dtype=np.int32)
    pos = np.empty((n, l), dtype=np.int32)
    delta = np.empty((l, n), dtype=np.float64)
    cands = np.empty((m, l), dtype=np.int32)
    out_idx = np.empty(l, dtype=np.int32)
    team_of_item = np.empty(l, dtype=np.int32)
    used = np.empty(l, dtype=np.bool_)
    ptrs = np.empty(n, dtype=np.int32)
    order = np.empty(n, dtype=np.int32)
    sums = np.empty(n, dtype=np.float64)
    prefix = np.empty(n, dtype=np.float64)
    lambdas = np.empty(l, dtype=np.float64)

    for j in range(n):
        credit_out[j] = 0.0

    insens_sum = 0.0
    insens_count = 0
    bias_sum = 0.0
    bias_sq_sum = 0.0
    bias_count = 0

    for click in range(numclick):
        if identical_inputs:
            for i in range(l):
                rank_mat[0, i] = i
            shuffle(state, rank_mat[0])
            for j in range(1, n):
                for i in range(l):
                    rank_mat[j, i] = rank_mat[0, i]
        else:
            for j in range(n):
                for i in range(l):
                    rank_mat[j, i] = i
                shuffle(state, rank_mat[j])
        positions_into(rank_mat, lengths, pos)

        need_delta = method_code == METHOD_GOM or collect_stats
        if need_delta:
            credit_matrix_into(pos, lengths, credit_code, delta)

        if method_code == METHOD_TDM:
            tdm_draft_into(rank_mat, lengths, l, state, used, ptrs, order, out_idx, team_of_item)
            if collect_stats:
                s2, mu = weighted_sums_into(out_idx, delta, f, sums)
            else:
                s2 = 0.0
                mu = 1.0
        else:
            draft_candidates_into(rank_mat, lengths, l, state, used, ptrs, cands)
            k, obj, s2, mu = select_best(cands, delta, f, alpha, sums, prefix, lambdas)
            for i in range(l):
                out_idx[i] = cands[k, i]

        if collect_stats:
            if mu != 0.0:
                insens_sum += s2 / (mu * mu)
            insens_count += 1
            lam_total = bias_lambdas_into(out_idx, delta, prefix, lambdas)
            b = (lam_total / l) / (n * l)
            bias_sum += b
            bias_sq_sum += b * b
            bias_count += 1

        # click: uniform over displayed items within the preferred ranker's
        # top x_count positions.  The output always shows all l universe
        # items here, so the displayed-only restriction never filters.
        idx = rand_below(state, x_count)
        item = rank_mat[pref, idx]
        trace_items[click] = item
        pos_in_out = -1
        for i in range(l):
            if out_idx[i] == item:
                pos_in_out = i + 1
                break
        trace_pos[click] = pos_in_out

        if method_code == METHOD_TDM:
            credit_out[team_of_item[item]] += 1.0
        else:
            for j in range(n):
                credit_out[j] += delta[item, j]

    return insens_sum, insens_count, bias_sum, bias_sq_sum, bias_count


@njit(cache=True, nogil=True)
def bias_generation_into(n, l, m, credit_code, alpha, f, identical_inputs, state, samples):
    """Bias statistic of freshly generated greedy-optimized rankings.

    Each generation draws new shuffled inputs, constructs the ranking, and
    records mean_r lambda_r / (n * l).  Fills ``samples`` in place.
    """
    rank_mat = np.empty((n, l), dtype=np.int32)
    lengths = np.full(n, l, dtype=np.int32)
    pos = np.empty((n, l), dtype=np.int32)
    delta = np.empty((l, n), dtype=np.float64)
    cands = np.empty((m, l), dtype=np.int32)
    used = np.empty(l, dtype=np.bool_)
    ptrs = np.empty(n, dtype=np.int32)
    sums = np.empty(n, dtype=np.float64)
    prefix = np.empty(n, dtype=np.float64)
    lambdas = np.empty(l, dtype=np.float64)

    for g in range(samples.shape[0]):
        if identical_inputs:
            for i in range(l):
                rank_mat[0, i] = i
            shuffle(state, rank_mat[0])
            for j in range(1, n):
                for i in range(l):
                    rank_mat[j, i] = rank_mat[0, i]
        else:
            for j in range(n):
                for i in range(l):
                    rank_mat[j, i] = i
                shuffle(state, rank_mat[j])
        positions_into(rank_mat, lengths, pos)
        credit_matrix_into(pos, lengths, credit_code, delta)
        draft_candidates_into(rank_mat, lengths, l, state, used, ptrs, cands)
        k, obj, s2, mu = select_best(cands, delta, f, alpha, sums, prefix, lambdas)
        lam_total = bias_lambdas_into(cands[k], delta, prefix, lambdas)
        samples[g] = (lam_total / l) / (n * l)
