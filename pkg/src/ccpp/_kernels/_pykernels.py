"""Pure-Python implementations of the hot search loops.

Both backends share one calling convention; every array argument is a numpy
array and results are returned as numpy arrays. Ties in the priority queue
are broken by the lower vertex id.
"""
from heapq import heappop, heappush

import numpy as np

INF = float("inf")
EPS = 1e-9


def dijkstra(indptr, indices, weights, src_v, src_c, allowed=None,
             targets=None, n_stop=0, max_cost=INF):
    """Multi-source Dijkstra over a CSR graph.

    ``n_stop`` > 0 halts the search right after that many distinct target
    vertices have been settled. ``allowed`` (uint8 mask) restricts which
    vertices may be entered; sources are always admitted.
    """
    n = len(indptr) - 1
    cost = np.full(n, INF)
    parent = np.full(n, -1, dtype=np.intp)
    tent = [INF] * n
    done = [False] * n
    heap = []
    for v, c in zip(src_v.tolist(), src_c.tolist()):
        if c < tent[v]:
            tent[v] = c
            heappush(heap, (c, v, -1))

    ip = indptr.tolist()
    ix = indices.tolist()
    wt = weights.tolist()
    ok = allowed.tolist() if allowed is not None else None
    tg = targets.tolist() if targets is not None else None
    hits = 0
    while heap:
        c, v, p = heappop(heap)
        if done[v] or c > tent[v]:
            continue
        done[v] = True
        cost[v] = c
        parent[v] = p
        if tg is not None and tg[v]:
            hits += 1
            if n_stop and hits >= n_stop:
                break
        for e in range(ip[v], ip[v + 1]):
            u = ix[e]
            if done[u] or (ok is not None and not ok[u]):
                continue
            nc = c + wt[e]
            if nc > max_cost + EPS:
                continue
            if nc < tent[u]:
                tent[u] = nc
                heappush(heap, (nc, u, v))
    return cost, parent


def _witness_complete(c, sorted_costs, counts, min_result, window):
    """Witness check when every vertex pair is within range.

    Only costs matter then, so each earlier agent's opened costs are searched
    as a sorted array.
    """
    deficit = INF
    for a in range(len(counts)):
        if min_result[a] <= c + EPS:
            return True, 0.0
        row = sorted_costs[a, :counts[a]]
        i = int(np.searchsorted(row, c - window - EPS, side="left"))
        if i < counts[a] and row[i] <= c + window + EPS:
            return True, 0.0
        if i > 0:
            deficit = min(deficit, c - window - row[i - 1])
    return False, deficit


def follower_pass(indptr, indices, weights, comm_indptr, comm_indices,
                  complete, earlier_cost, earlier_result, sorted_costs,
                  counts, min_result, window, horizon, seed_v, seed_c,
                  seed_p, cost, parent):
    """One witness-validated best-first pass of a follower search.

    ``cost``/``parent`` hold already settled nodes and are updated in place.
    Seeds are trusted (re-inserted frontier or init nodes) and skip the
    witness check. Returns the discarded children as four arrays
    (parent, child, cost, deficit).
    """
    n = len(indptr) - 1
    ip = indptr.tolist()
    ix = indices.tolist()
    wt = weights.tolist()
    settled = cost.tolist()
    par = parent.tolist()
    cip = comm_indptr.tolist() if not complete else None
    cix = comm_indices.tolist() if not complete else None
    ecost = earlier_cost.tolist()
    eres = earlier_result.tolist()
    k = earlier_cost.shape[1]
    bad = [-1.0] * n
    heap = []
    for v, c, p in zip(seed_v.tolist(), seed_c.tolist(), seed_p.tolist()):
        heappush(heap, (c, v, p, True))
    d_par, d_child, d_cost, d_def = [], [], [], []

    def witness(v, c):
        if complete:
            return _witness_complete(c, sorted_costs, counts, min_result,
                                     window)
        deficit = INF
        for e in range(cip[v], cip[v + 1]):
            u = cix[e]
            row = ecost[u]
            for a in range(k):
                cu = row[a]
                if cu == INF:
                    continue
                if abs(cu - c) <= window + EPS:
                    return True, 0.0
                if cu <= c + EPS and eres[u][a]:
                    return True, 0.0
                if cu < c - window:
                    d = c - window - cu
                    if d < deficit:
                        deficit = d
        return False, deficit

    while heap:
        c, v, p, trusted = heappop(heap)
        if settled[v] != INF:
            continue
        if not trusted:
            if c <= bad[v] + EPS:
                continue
            valid, deficit = witness(v, c)
            if not valid:
                bad[v] = c
                d_par.append(p)
                d_child.append(v)
                d_cost.append(c)
                d_def.append(deficit)
                continue
        settled[v] = c
        par[v] = p
        for e in range(ip[v], ip[v + 1]):
            u = ix[e]
            if settled[u] != INF:
                continue
            nc = c + wt[e]
            if nc > horizon + EPS:
                d_par.append(v)
                d_child.append(u)
                d_cost.append(nc)
                d_def.append(nc - horizon)
                continue
            heappush(heap, (nc, u, v, False))
    cost[:] = settled
    parent[:] = par
    return (np.asarray(d_par, dtype=np.intp), np.asarray(d_child, dtype=np.intp),
            np.asarray(d_cost, dtype=float), np.asarray(d_def, dtype=float))
