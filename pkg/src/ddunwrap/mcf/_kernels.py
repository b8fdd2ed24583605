"""Compiled min-cost flow kernels.

Both kernels take nonnegative integer costs, no self-loops, and node supplies
summing to zero. They return ``(flow, potentials, feasible, stats)``.
"""
import numpy as np
from numba import njit

LOWER = 1
UPPER = -1
TREE = 0
UP = 1
DOWN = -1


@njit(cache=True, nogil=True)
def cost_scaling(n, tail, head, cap, cost, supply, alpha):
    m = tail.shape[0]
    hub = n
    N = n + 1
    n_art = 0
    for v in range(n):
        if supply[v] != 0:
            n_art += 1
    A = m + n_art
    t = np.empty(A, np.int64)
    h = np.empty(A, np.int64)
    u = np.empty(A, np.int64)
    c = np.empty(A, np.int64)
    maxc = 0
    for a in range(m):
        t[a] = tail[a]
        h[a] = head[a]
        u[a] = cap[a]
        c[a] = cost[a]
        if cost[a] > maxc:
            maxc = cost[a]
    big = (maxc + 1) * N
    k = m
    for v in range(n):
        if supply[v] > 0:
            t[k] = v
            h[k] = hub
            u[k] = supply[v]
            c[k] = big
            k += 1
        elif supply[v] < 0:
            t[k] = hub
            h[k] = v
            u[k] = -supply[v]
            c[k] = big
            k += 1

    R = 2 * A
    to = np.empty(R, np.int64)
    frm = np.empty(R, np.int64)
    rescap = np.empty(R, np.int64)
    C = np.empty(R, np.int64)
    maxC = 0
    for a in range(m):
        if c[a] * N > maxC:
            maxC = c[a] * N
    for a in range(A):
        to[2 * a] = h[a]
        frm[2 * a] = t[a]
        rescap[2 * a] = u[a]
        C[2 * a] = c[a] * N
        to[2 * a + 1] = t[a]
        frm[2 * a + 1] = h[a]
        rescap[2 * a + 1] = 0
        C[2 * a + 1] = -c[a] * N

    first = np.zeros(N + 1, np.int64)
    for r in range(R):
        first[frm[r] + 1] += 1
    for v in range(N):
        first[v + 1] += first[v]
    fill = first[:N].copy()
    adj = np.empty(R, np.int64)
    for r in range(R):
        adj[fill[frm[r]]] = r
        fill[frm[r]] += 1

    excess = np.zeros(N, np.int64)
    for v in range(n):
        excess[v] = supply[v]
    price = np.zeros(N, np.int64)
    current = np.empty(N, np.int64)
    queue = np.empty(N + 1, np.int64)
    inq = np.zeros(N, np.bool_)

    pushes = 0
    relabels = 0
    phases = 0
    # zero flow is 0-optimal on the real arcs; hub arcs are never negative in the residual
    eps = maxC * alpha
    while True:
        eps = eps // alpha
        if eps < 1:
            eps = 1
        phases += 1
        # saturate arcs with negative reduced cost
        for r in range(R):
            if rescap[r] > 0 and C[r] + price[frm[r]] - price[to[r]] < 0:
                d = rescap[r]
                rescap[r] = 0
                rescap[r ^ 1] += d
                excess[frm[r]] -= d
                excess[to[r]] += d
        qh = 0
        qt = 0
        for v in range(N):
            current[v] = first[v]
            if excess[v] > 0:
                queue[qt] = v
                qt += 1
                inq[v] = True
        qcap = N + 1
        while qh != qt:
            v = queue[qh]
            qh += 1
            if qh == qcap:
                qh = 0
            inq[v] = False
            while excess[v] > 0:
                i = current[v]
                end = first[v + 1]
                pv = price[v]
                while i < end:
                    r = adj[i]
                    if rescap[r] > 0:
                        w = to[r]
                        if C[r] + pv - price[w] < 0:
                            d = excess[v]
                            if rescap[r] < d:
                                d = rescap[r]
                            rescap[r] -= d
                            rescap[r ^ 1] += d
                            excess[v] -= d
                            excess[w] += d
                            pushes += 1
                            if excess[w] > 0 and not inq[w]:
                                queue[qt] = w
                                qt += 1
                                if qt == qcap:
                                    qt = 0
                                inq[w] = True
                            if excess[v] == 0:
                                break
                    i += 1
                current[v] = i
                if excess[v] > 0:
                    best = np.iinfo(np.int64).min
                    for j in range(first[v], end):
                        r = adj[j]
                        if rescap[r] > 0:
                            val = price[to[r]] - C[r]
                            if val > best:
                                best = val
                    price[v] = best - eps
                    current[v] = first[v]
                    relabels += 1
        if eps == 1:
            break

    flow = np.empty(m, np.int64)
    for a in range(m):
        flow[a] = u[a] - rescap[2 * a]
    feasible = True
    for a in range(m, A):
        if u[a] - rescap[2 * a] != 0:
            feasible = False
    stats = np.array([pushes, relabels, phases, N], np.int64)
    return flow, price, feasible, stats


@njit(cache=True, nogil=True)
def _rebuild_tree(N, root, parent, pred, pred_dir, cst, pi, depth, cnt, start, child, stack):
    for v in range(N + 1):
        cnt[v] = 0
    for v in range(N):
        if v != root:
            cnt[parent[v] + 1] += 1
    for v in range(N):
        cnt[v + 1] += cnt[v]
    for v in range(N):
        start[v] = cnt[v]
    for v in range(N):
        if v != root:
            p = parent[v]
            child[start[p]] = v
            start[p] += 1
    top = 0
    stack[0] = root
    top = 1
    depth[root] = 0
    pi[root] = 0
    while top > 0:
        top -= 1
        p = stack[top]
        for i in range(cnt[p], cnt[p + 1]):
            v = child[i]
            e = pred[v]
            if pred_dir[v] == UP:
                pi[v] = pi[p] - cst[e]
            else:
                pi[v] = pi[p] + cst[e]
            depth[v] = depth[p] + 1
            stack[top] = v
            top += 1


@njit(cache=True, nogil=True)
def network_simplex(n, tail, head, cap, cost, supply):
    m = tail.shape[0]
    root = n
    N = n + 1
    A = m + n
    src = np.empty(A, np.int64)
    tgt = np.empty(A, np.int64)
    capa = np.empty(A, np.int64)
    cst = np.empty(A, np.int64)
    flow = np.zeros(A, np.int64)
    state = np.empty(A, np.int64)
    maxc = 0
    total = 0
    for a in range(m):
        src[a] = tail[a]
        tgt[a] = head[a]
        capa[a] = cap[a]
        cst[a] = cost[a]
        state[a] = LOWER
        if cost[a] > maxc:
            maxc = cost[a]
    for v in range(n):
        total += abs(supply[v])
    art = (maxc + 1) * N
    inf = total + 1
    parent = np.empty(N, np.int64)
    pred = np.full(N, -1, np.int64)
    pred_dir = np.zeros(N, np.int64)
    pi = np.zeros(N, np.int64)
    depth = np.zeros(N, np.int64)
    parent[root] = -1
    for v in range(n):
        e = m + v
        parent[v] = root
        pred[v] = e
        state[e] = TREE
        capa[e] = inf
        depth[v] = 1
        if supply[v] >= 0:
            pred_dir[v] = UP
            src[e] = v
            tgt[e] = root
            flow[e] = supply[v]
            cst[e] = 0
            pi[v] = 0
        else:
            pred_dir[v] = DOWN
            src[e] = root
            tgt[e] = v
            flow[e] = -supply[v]
            cst[e] = art
            pi[v] = art

    cnt = np.zeros(N + 1, np.int64)
    start = np.zeros(N, np.int64)
    child = np.zeros(N, np.int64)
    stack = np.zeros(N, np.int64)

    block = int(np.sqrt(A))
    if block < 10:
        block = 10
    next_arc = 0
    pivots = 0
    while True:
        in_arc = -1
        min_val = 0
        count = block
        e = next_arc
        for _ in range(A):
            if state[e] != TREE:
                val = state[e] * (cst[e] + pi[src[e]] - pi[tgt[e]])
                if val < min_val:
                    min_val = val
                    in_arc = e
            e += 1
            if e == A:
                e = 0
            count -= 1
            if count == 0:
                if in_arc >= 0:
                    break
                count = block
        if in_arc < 0:
            break
        next_arc = e
        pivots += 1

        a = src[in_arc]
        b = tgt[in_arc]
        while a != b:
            if depth[a] > depth[b]:
                a = parent[a]
            elif depth[b] > depth[a]:
                b = parent[b]
            else:
                a = parent[a]
                b = parent[b]
        join = a

        if state[in_arc] == LOWER:
            first = src[in_arc]
            second = tgt[in_arc]
        else:
            first = tgt[in_arc]
            second = src[in_arc]
        delta = capa[in_arc]
        result = 0
        u_out = -1
        x = first
        while x != join:
            e = pred[x]
            d = flow[e]
            if pred_dir[x] == DOWN:
                d = capa[e] - d
            if d < delta:
                delta = d
                u_out = x
                result = 1
            x = parent[x]
        x = second
        while x != join:
            e = pred[x]
            d = flow[e]
            if pred_dir[x] == UP:
                d = capa[e] - d
            if d <= delta:
                delta = d
                u_out = x
                result = 2
            x = parent[x]

        if delta > 0:
            val = state[in_arc] * delta
            flow[in_arc] += val
            x = src[in_arc]
            while x != join:
                flow[pred[x]] -= pred_dir[x] * val
                x = parent[x]
            x = tgt[in_arc]
            while x != join:
                flow[pred[x]] += pred_dir[x] * val
                x = parent[x]

        if result == 0:
            state[in_arc] = -state[in_arc]
            continue

        out_arc = pred[u_out]
        if flow[out_arc] == 0:
            state[out_arc] = LOWER
        else:
            state[out_arc] = UPPER
        state[in_arc] = TREE
        if result == 1:
            u_in = first
            v_in = second
        else:
            u_in = second
            v_in = first
        prev_node = v_in
        prev_arc = in_arc
        x = u_in
        while True:
            nxt = parent[x]
            nxt_arc = pred[x]
            parent[x] = prev_node
            pred[x] = prev_arc
            if src[prev_arc] == x:
                pred_dir[x] = UP
            else:
                pred_dir[x] = DOWN
            if x == u_out:
                break
            prev_node = x
            prev_arc = nxt_arc
            x = nxt
        _rebuild_tree(N, root, parent, pred, pred_dir, cst, pi, depth, cnt, start, child, stack)

    feasible = True
    for v in range(n):
        if flow[m + v] != 0:
            feasible = False
    stats = np.array([pivots, 0, 0, N], np.int64)
    return flow[:m].copy(), pi, feasible, stats
