# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot search loops (see _pykernels for semantics)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libcpp.vector cimport vector

cnp.import_array()

cdef double EPS = 1e-9

cdef struct Entry:
    double cost
    Py_ssize_t v
    Py_ssize_t p
    int trusted


cdef inline bint _less(const Entry& a, const Entry& b) noexcept nogil:
    if a.cost != b.cost:
        return a.cost < b.cost
    if a.v != b.v:
        return a.v < b.v
    if a.p != b.p:
        return a.p < b.p
    return a.trusted < b.trusted


cdef inline void _push(vector[Entry]& h, Entry e) noexcept nogil:
    cdef Py_ssize_t i, j
    h.push_back(e)
    i = h.size() - 1
    while i > 0:
        j = (i - 1) >> 1
        if _less(h[i], h[j]):
            h[i], h[j] = h[j], h[i]
            i = j
        else:
            break


cdef inline Entry _pop(vector[Entry]& h) noexcept nogil:
    cdef Entry top = h[0]
    cdef Py_ssize_t n, i, l, r, m
    h[0] = h[h.size() - 1]
    h.pop_back()
    n = h.size()
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < n and _less(h[l], h[m]):
            m = l
        if r < n and _less(h[r], h[m]):
            m = r
        if m == i:
            break
        h[i], h[m] = h[m], h[i]
        i = m
    return top


def dijkstra(const cnp.intp_t[::1] indptr, const cnp.intp_t[::1] indices,
             const double[::1] weights, const cnp.intp_t[::1] src_v,
             const double[::1] src_c,
             allowed=None, targets=None, Py_ssize_t n_stop=0,
             double max_cost=INFINITY):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cost_arr = np.full(n, np.inf)
    parent_arr = np.full(n, -1, dtype=np.intp)
    tent_arr = np.full(n, np.inf)
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef double[::1] cost = cost_arr
    cdef cnp.intp_t[::1] parent = parent_arr
    cdef double[::1] tent = tent_arr
    cdef cnp.uint8_t[::1] done = done_arr
    cdef const cnp.uint8_t[::1] ok
    cdef const cnp.uint8_t[::1] tg
    cdef bint use_ok = allowed is not None
    cdef bint use_tg = targets is not None
    if use_ok:
        ok = allowed
    if use_tg:
        tg = targets
    cdef vector[Entry] heap
    cdef Entry e, top
    cdef Py_ssize_t i, k, u, v, hits = 0
    cdef double c, nc
    for i in range(src_v.shape[0]):
        v = src_v[i]
        if src_c[i] < tent[v]:
            tent[v] = src_c[i]
            e.cost = src_c[i]; e.v = v; e.p = -1; e.trusted = 0
            _push(heap, e)
    with nogil:
        while heap.size() > 0:
            top = _pop(heap)
            v = top.v
            c = top.cost
            if done[v] or c > tent[v]:
                continue
            done[v] = 1
            cost[v] = c
            parent[v] = top.p
            if use_tg and tg[v]:
                hits += 1
                if n_stop > 0 and hits >= n_stop:
                    break
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                if done[u] or (use_ok and not ok[u]):
                    continue
                nc = c + weights[k]
                if nc > max_cost + EPS:
                    continue
                if nc < tent[u]:
                    tent[u] = nc
                    e.cost = nc; e.v = u; e.p = v; e.trusted = 0
                    _push(heap, e)
    return cost_arr, parent_arr


cdef inline Py_ssize_t _lower_bound(const double* row, Py_ssize_t n,
                                    double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if row[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def follower_pass(const cnp.intp_t[::1] indptr, const cnp.intp_t[::1] indices,
                  const double[::1] weights, const cnp.intp_t[::1] comm_indptr,
                  const cnp.intp_t[::1] comm_indices, bint complete,
                  const double[:, ::1] earlier_cost,
                  const cnp.uint8_t[:, ::1] earlier_result,
                  const double[:, ::1] sorted_costs, const cnp.intp_t[::1] counts,
                  const double[::1] min_result, double window, double horizon,
                  const cnp.intp_t[::1] seed_v, const double[::1] seed_c,
                  const cnp.intp_t[::1] seed_p, double[::1] cost,
                  cnp.intp_t[::1] parent):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t k = earlier_cost.shape[1]
    bad_arr = np.full(n, -1.0)
    cdef double[::1] bad = bad_arr
    cdef vector[Entry] heap
    cdef vector[Py_ssize_t] d_par, d_child
    cdef vector[double] d_cost, d_def
    cdef Entry e, top
    cdef Py_ssize_t i, j, a, u, v, idx
    cdef double c, nc, cu, deficit
    cdef bint valid
    for i in range(seed_v.shape[0]):
        e.cost = seed_c[i]; e.v = seed_v[i]; e.p = seed_p[i]; e.trusted = 1
        _push(heap, e)
    with nogil:
        while heap.size() > 0:
            top = _pop(heap)
            v = top.v
            c = top.cost
            if cost[v] != INFINITY:
                continue
            if not top.trusted:
                if c <= bad[v] + EPS:
                    continue
                valid = False
                deficit = INFINITY
                if complete:
                    for a in range(k):
                        if min_result[a] <= c + EPS:
                            valid = True
                            break
                        idx = _lower_bound(&sorted_costs[a, 0], counts[a],
                                           c - window - EPS)
                        if idx < counts[a] and sorted_costs[a, idx] <= c + window + EPS:
                            valid = True
                            break
                        if idx > 0 and c - window - sorted_costs[a, idx - 1] < deficit:
                            deficit = c - window - sorted_costs[a, idx - 1]
                else:
                    for j in range(comm_indptr[v], comm_indptr[v + 1]):
                        u = comm_indices[j]
                        for a in range(k):
                            cu = earlier_cost[u, a]
                            if cu == INFINITY:
                                continue
                            if fabs(cu - c) <= window + EPS:
                                valid = True
                                break
                            if cu <= c + EPS and earlier_result[u, a]:
                                valid = True
                                break
                            if cu < c - window and c - window - cu < deficit:
                                deficit = c - window - cu
                        if valid:
                            break
                if not valid:
                    bad[v] = c
                    d_par.push_back(top.p)
                    d_child.push_back(v)
                    d_cost.push_back(c)
                    d_def.push_back(deficit)
                    continue
            cost[v] = c
            parent[v] = top.p
            for j in range(indptr[v], indptr[v + 1]):
                u = indices[j]
                if cost[u] != INFINITY:
                    continue
                nc = c + weights[j]
                if nc > horizon + EPS:
                    d_par.push_back(v)
                    d_child.push_back(u)
                    d_cost.push_back(nc)
                    d_def.push_back(nc - horizon)
                    continue
                e.cost = nc; e.v = u; e.p = v; e.trusted = 0
                _push(heap, e)

    m = d_par.size()
    out_par = np.empty(m, dtype=np.intp)
    out_child = np.empty(m, dtype=np.intp)
    out_cost = np.empty(m, dtype=float)
    out_def = np.empty(m, dtype=float)
    cdef cnp.intp_t[::1] op = out_par
    cdef cnp.intp_t[::1] oc = out_child
    cdef double[::1] ocost = out_cost
    cdef double[::1] od = out_def
    for i in range(<Py_ssize_t>m):
        op[i] = d_par[i]
        oc[i] = d_child[i]
        ocost[i] = d_cost[i]
        od[i] = d_def[i]
    return out_par, out_child, out_cost, out_def


# -- joint-state search (second stage) ---------------------------------------
# Mirrors ccpp.stage2.run_epoch_search node for node: same priority tuple,
# same closed-set key, same wait and speculation rules.

from libc.math cimport nearbyint, NAN, isnan
from libc.stdint cimport int64_t, int32_t
from libcpp.string cimport string
from libcpp.unordered_set cimport unordered_set
import time as _time


cdef struct QItem:
    double h
    double lt
    double st
    Py_ssize_t node


cdef class _Arena:
    cdef Py_ssize_t n
    cdef vector[int32_t] pos
    cdef vector[double] times
    cdef vector[double] arr
    cdef vector[cnp.uint8_t] wait
    cdef vector[double] stamp
    cdef vector[double] h
    cdef vector[int64_t] parent
    cdef vector[int32_t] act_agent
    cdef vector[int32_t] act_from
    cdef vector[int32_t] act_to
    cdef vector[double] act_dep
    cdef vector[double] act_arr


cdef inline bint _qless(const int32_t* pos, Py_ssize_t n, const QItem& a,
                        const QItem& b) noexcept nogil:
    cdef Py_ssize_t i
    cdef const int32_t* pa
    cdef const int32_t* pb
    if a.h != b.h:
        return a.h < b.h
    if a.lt != b.lt:
        return a.lt < b.lt
    if a.st != b.st:
        return a.st < b.st
    pa = pos + a.node * n
    pb = pos + b.node * n
    for i in range(n):
        if pa[i] != pb[i]:
            return pa[i] < pb[i]
    return a.node < b.node


cdef inline void _qpush(vector[QItem]& q, const int32_t* pos, Py_ssize_t n,
                        QItem e) noexcept nogil:
    cdef Py_ssize_t i, j
    q.push_back(e)
    i = q.size() - 1
    while i > 0:
        j = (i - 1) >> 1
        if _qless(pos, n, q[i], q[j]):
            q[i], q[j] = q[j], q[i]
            i = j
        else:
            break


cdef inline QItem _qpop(vector[QItem]& q, const int32_t* pos, Py_ssize_t n) noexcept nogil:
    cdef QItem top = q[0]
    cdef Py_ssize_t k, i, l, r, m
    q[0] = q[q.size() - 1]
    q.pop_back()
    k = q.size()
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < k and _qless(pos, n, q[l], q[m]):
            m = l
        if r < k and _qless(pos, n, q[r], q[m]):
            m = r
        if m == i:
            break
        q[i], q[m] = q[m], q[i]
        i = m
    return top


cdef inline double _snap(double t) noexcept nogil:
    return nearbyint(t * 1e9) / 1e9


cdef bint _connected(const int32_t* p, Py_ssize_t n, const double[:, ::1] xy,
                     double sq, int* stack, cnp.uint8_t* seen) noexcept nogil:
    cdef Py_ssize_t i, j, top = 1, count = 1
    cdef double dx, dy
    for i in range(n):
        seen[i] = 0
    seen[0] = 1
    stack[0] = 0
    while top > 0:
        top -= 1
        i = stack[top]
        for j in range(n):
            if not seen[j]:
                dx = xy[p[i], 0] - xy[p[j], 0]
                dy = xy[p[i], 1] - xy[p[j], 1]
                if dx * dx + dy * dy <= sq:
                    seen[j] = 1
                    count += 1
                    stack[top] = j
                    top += 1
    return count == n


cdef string _key(const int32_t* p, const double* t, const cnp.uint8_t* w,
                 Py_ssize_t n, double release):
    cdef string k
    cdef double m = t[0]
    cdef Py_ssize_t i
    cdef int64_t r
    for i in range(1, n):
        if t[i] < m:
            m = t[i]
    k.append(<const char*>p, n * sizeof(int32_t))
    for i in range(n):
        r = <int64_t>nearbyint((t[i] - m) * 1e6)
        k.append(<const char*>&r, sizeof(int64_t))
    k.append(<const char*>w, n)
    k.push_back(b'\x01' if m < release - EPS else b'\x00')
    return k


cdef int _normalize(double* t, cnp.uint8_t* w, Py_ssize_t n, double release) noexcept nogil:
    """0 = unchanged or advanced, -1 = pointless wait (discard)."""
    cdef Py_ssize_t i
    cdef bint anyw = False, anyfree = False
    cdef double m = t[0], mf = INFINITY
    for i in range(n):
        if t[i] < m:
            m = t[i]
        if w[i]:
            anyw = True
        else:
            anyfree = True
            if t[i] < mf:
                mf = t[i]
    if not anyw:
        return 0
    if not anyfree:
        if m < release - EPS:
            for i in range(n):
                if t[i] < release:
                    t[i] = release
                w[i] = 0
            return 0
        return -1
    if mf <= m + EPS:
        return 0
    for i in range(n):
        if w[i] and t[i] < mf:
            t[i] = mf
        w[i] = 0
    return 0


def composite_search(const cnp.intp_t[::1] indptr, const cnp.intp_t[::1] indices,
                     const double[::1] weights, const cnp.uint8_t[::1] leader_ok,
                     const double[:, ::1] terms, const double[:, ::1] coords,
                     double range_sq, Py_ssize_t leader, Py_ssize_t goal,
                     pos0, times0, arr0, double release,
                     long long node_budget, deadline=None):
    """Greedy best-first joint search of one epoch.

    Returns ``(status, expansions, terminal, arena)``; status 0 found,
    1 budget exhausted, 2 deadline passed, 3 open list exhausted.
    """
    cdef Py_ssize_t n = len(pos0)
    cdef _Arena ar = _Arena()
    ar.n = n
    cdef vector[QItem] q
    cdef unordered_set[string] seen
    cdef vector[int32_t] cp = vector[int32_t](n)
    cdef vector[double] ct = vector[double](n)
    cdef vector[double] ca = vector[double](n)
    cdef vector[cnp.uint8_t] cw = vector[cnp.uint8_t](n)
    cdef vector[int] stack = vector[int](n)
    cdef vector[cnp.uint8_t] mark = vector[cnp.uint8_t](n)
    cdef Py_ssize_t i, a, e, s, base, cur
    cdef int32_t here, u
    cdef double t, h0, hh, stamp, m, arrv, st
    cdef long long expansions = 0
    cdef bint clash, has_deadline = deadline is not None
    cdef double dl = deadline if has_deadline else 0.0
    cdef QItem item
    cdef int status = 3
    cdef Py_ssize_t terminal = -1

    hh = 0.0
    for i in range(n):
        ar.pos.push_back(pos0[i])
        ar.times.push_back(times0[i])
        ar.arr.push_back(arr0[i])
        ar.wait.push_back(0)
        hh += terms[i, <Py_ssize_t>pos0[i]]
    ar.stamp.push_back(NAN)
    ar.h.push_back(hh)
    ar.parent.push_back(-1)
    ar.act_agent.push_back(-1)
    ar.act_from.push_back(-1)
    ar.act_to.push_back(-1)
    ar.act_dep.push_back(0.0)
    ar.act_arr.push_back(0.0)
    seen.insert(_key(&ar.pos[0], &ar.times[0], &ar.wait[0], n, release))
    st = 0.0
    for i in range(n):
        st += ar.times[i]
    item.h = hh; item.lt = terms[leader, ar.pos[leader]]; item.st = st; item.node = 0
    _qpush(q, ar.pos.data(), n, item)

    while q.size() > 0:
        item = _qpop(q, ar.pos.data(), n)
        s = item.node
        base = s * n
        if (ar.pos[base + leader] == goal and isnan(ar.stamp[s])
                and ar.times[base + leader] >= release - EPS):
            status = 0
            terminal = s
            break
        expansions += 1
        if expansions > node_budget:
            status = 1
            break
        if has_deadline and expansions % 1024 == 0 and _time.perf_counter() > dl:
            status = 2
            break
        # acting agent: lowest clock among non-waiting, first index on ties
        a = -1
        for i in range(n):
            if not ar.wait[base + i] and (a < 0 or ar.times[base + i] < ar.times[base + a] - EPS):
                a = i
        if a < 0:
            continue
        here = ar.pos[base + a]
        t = ar.times[base + a]
        h0 = ar.h[s] - terms[a, here]
        for e in range(indptr[here], indptr[here + 1]):
            if a == leader and not leader_ok[e]:
                continue
            u = <int32_t>indices[e]
            clash = False
            for i in range(n):
                if ar.pos[base + i] == u:
                    clash = True
                    break
            if clash:
                continue
            arrv = _snap(t + weights[e])
            for i in range(n):
                cp[i] = ar.pos[base + i]
                ct[i] = ar.times[base + i]
                ca[i] = ar.arr[base + i]
                cw[i] = ar.wait[base + i]
            cp[a] = u
            ct[a] = arrv
            ca[a] = arrv
            _normalize(&ct[0], &cw[0], n, 0.0)
            if _connected(&cp[0], n, coords, range_sq, &stack[0], &mark[0]):
                stamp = NAN
            else:
                stamp = ar.stamp[s] if not isnan(ar.stamp[s]) else t
                m = ct[0]
                for i in range(1, n):
                    if ct[i] < m:
                        m = ct[i]
                if m > stamp + EPS:
                    continue
            if not seen.insert(_key(&cp[0], &ct[0], &cw[0], n, release)).second:
                continue
            cur = ar.stamp.size()
            st = 0.0
            for i in range(n):
                ar.pos.push_back(cp[i])
                ar.times.push_back(ct[i])
                ar.arr.push_back(ca[i])
                ar.wait.push_back(cw[i])
                st += ct[i]
            ar.stamp.push_back(stamp)
            ar.h.push_back(h0 + terms[a, u])
            ar.parent.push_back(s)
            ar.act_agent.push_back(a)
            ar.act_from.push_back(here)
            ar.act_to.push_back(u)
            ar.act_dep.push_back(t)
            ar.act_arr.push_back(arrv)
            item.h = h0 + terms[a, u]; item.lt = terms[leader, cp[leader]]; item.st = st
            item.node = cur
            _qpush(q, ar.pos.data(), n, item)
        # wait child
        for i in range(n):
            cp[i] = ar.pos[base + i]
            ct[i] = ar.times[base + i]
            cw[i] = ar.wait[base + i]
        cw[a] = 1
        if _normalize(&ct[0], &cw[0], n, release) < 0:
            continue
        if _connected(&cp[0], n, coords, range_sq, &stack[0], &mark[0]):
            stamp = NAN
        else:
            stamp = ar.stamp[s] if not isnan(ar.stamp[s]) else t
            m = ct[0]
            for i in range(1, n):
                if ct[i] < m:
                    m = ct[i]
            if m > stamp + EPS:
                continue
        if not seen.insert(_key(&cp[0], &ct[0], &cw[0], n, release)).second:
            continue
        cur = ar.stamp.size()
        st = 0.0
        for i in range(n):
            ar.pos.push_back(cp[i])
            ar.times.push_back(ct[i])
            ar.arr.push_back(ar.arr[base + i])
            ar.wait.push_back(cw[i])
            st += ct[i]
        ar.stamp.push_back(stamp)
        ar.h.push_back(ar.h[s])
        ar.parent.push_back(s)
        ar.act_agent.push_back(-1)
        ar.act_from.push_back(-1)
        ar.act_to.push_back(-1)
        ar.act_dep.push_back(t)
        ar.act_arr.push_back(t)
        item.h = ar.h[s]; item.lt = terms[leader, cp[leader]]; item.st = st; item.node = cur
        _qpush(q, ar.pos.data(), n, item)

    arena = _export(ar, ar.stamp.size(), n)
    return status, expansions, terminal, arena


cdef dict _export(_Arena ar, Py_ssize_t N, Py_ssize_t n):
    cdef Py_ssize_t i
    pos = np.empty(N * n, dtype=np.int32)
    times = np.empty(N * n)
    arr = np.empty(N * n)
    wait = np.empty(N * n, dtype=np.uint8)
    cdef int32_t[::1] vp = pos
    cdef double[::1] vt = times
    cdef double[::1] va = arr
    cdef cnp.uint8_t[::1] vw = wait
    for i in range(N * n):
        vp[i] = ar.pos[i]
        vt[i] = ar.times[i]
        va[i] = ar.arr[i]
        vw[i] = ar.wait[i]
    stamp = np.empty(N)
    parent = np.empty(N, dtype=np.int64)
    agent = np.empty(N, dtype=np.int32)
    frm = np.empty(N, dtype=np.int32)
    to = np.empty(N, dtype=np.int32)
    dep = np.empty(N)
    arrv = np.empty(N)
    cdef double[::1] vs = stamp
    cdef int64_t[::1] vpar = parent
    cdef int32_t[::1] vag = agent
    cdef int32_t[::1] vf = frm
    cdef int32_t[::1] vto = to
    cdef double[::1] vd = dep
    cdef double[::1] vr = arrv
    for i in range(N):
        vs[i] = ar.stamp[i]
        vpar[i] = ar.parent[i]
        vag[i] = ar.act_agent[i]
        vf[i] = ar.act_from[i]
        vto[i] = ar.act_to[i]
        vd[i] = ar.act_dep[i]
        vr[i] = ar.act_arr[i]
    return {"positions": pos.reshape(N, n), "times": times.reshape(N, n),
            "arrivals": arr.reshape(N, n), "waiting": wait.reshape(N, n).astype(bool),
            "speculative_since": stamp, "parent": parent, "agent": agent,
            "from": frm, "to": to, "depart": dep, "arrive": arrv}
