"""Maximum-weight matching on general graphs (Edmonds' blossom algorithm).

O(n^3) primal-dual formulation after Galil / van Rantwijk, operating on flat
integer arrays so it compiles under numba.  The recursive helpers of the
textbook presentation are replaced by explicit stacks; sub-blossom
augmentations touch disjoint state, so their order does not matter.

Endpoint ``p`` of edge ``k`` is ``2k`` (the ``i`` end) or ``2k + 1`` (the
``j`` end); ``endpoint[p ^ 1]`` is the opposite end.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["max_weight_matching"]


@njit(cache=True)
def _leaves(b, nv, childs, nch, out):
    """Vertices inside blossom ``b`` written to ``out``; returns the count."""
    if b < nv:
        out[0] = b
        return 1
    stack = np.empty(2 * nv, np.int64)
    top = 0
    stack[top] = b
    top += 1
    cnt = 0
    while top > 0:
        top -= 1
        x = stack[top]
        if x < nv:
            out[cnt] = x
            cnt += 1
        else:
            for c in range(nch[x] - 1, -1, -1):
                stack[top] = childs[x, c]
                top += 1
    return cnt


@njit(cache=True)
def _matching(nv, ei, ej, wt, maxcard):
    ne = len(ei)
    endpoint = np.empty(2 * ne, np.int64)
    for k in range(ne):
        endpoint[2 * k] = ei[k]
        endpoint[2 * k + 1] = ej[k]
    deg = np.zeros(nv + 1, np.int64)
    for k in range(ne):
        deg[ei[k] + 1] += 1
        deg[ej[k] + 1] += 1
    nbptr = np.cumsum(deg)
    nbend = np.empty(2 * ne, np.int64)
    fill = nbptr[:-1].copy()
    for k in range(ne):
        nbend[fill[ei[k]]] = 2 * k + 1
        fill[ei[k]] += 1
        nbend[fill[ej[k]]] = 2 * k
        fill[ej[k]] += 1

    maxw = 0.0
    for k in range(ne):
        if wt[k] > maxw:
            maxw = wt[k]
    nb = 2 * nv
    mate = np.full(nv, -1, np.int64)
    label = np.zeros(nb, np.int64)
    labelend = np.full(nb, -1, np.int64)
    inblossom = np.arange(nv)
    bparent = np.full(nb, -1, np.int64)
    childs = np.full((nb, nv + 1), -1, np.int64)
    endps = np.full((nb, nv + 1), -1, np.int64)
    nch = np.zeros(nb, np.int64)
    bbase = np.full(nb, -1, np.int64)
    bbase[:nv] = np.arange(nv)
    bestedge = np.full(nb, -1, np.int64)
    bbest = np.full((nb, nb), -1, np.int64)
    nbbest = np.full(nb, -1, np.int64)  # -1: no list stored
    unused = np.arange(nv, nb)
    nunused = nv
    dual = np.zeros(nb)
    dual[:nv] = maxw
    allow = np.zeros(ne, np.bool_)
    queue = np.empty(2 * nb, np.int64)
    qn = 0
    leafbuf = np.empty(nv, np.int64)
    bestto = np.full(nb, -1, np.int64)
    tmp = np.empty(nv + 1, np.int64)
    astack = np.empty((nb * 2, 2), np.int64)
    estack = np.empty(nb, np.int64)

    for _stage in range(nv):
        label[:] = 0
        bestedge[:] = -1
        nbbest[nv:] = -1
        allow[:] = False
        qn = 0
        for v in range(nv):
            if mate[v] == -1 and label[inblossom[v]] == 0:
                qn = _assign(v, 1, -1, nv, endpoint, mate, label, labelend, inblossom, childs, nch, bbase,
                             bestedge, queue, qn, leafbuf)
        augmented = False
        while True:
            while qn > 0 and not augmented:
                qn -= 1
                v = queue[qn]
                for ip in range(nbptr[v], nbptr[v + 1]):
                    p = nbend[ip]
                    k = p // 2
                    w = endpoint[p]
                    if inblossom[v] == inblossom[w]:
                        continue
                    kslack = 0.0
                    if not allow[k]:
                        kslack = dual[ei[k]] + dual[ej[k]] - 2 * wt[k]
                        if kslack <= 0:
                            allow[k] = True
                    if allow[k]:
                        if label[inblossom[w]] == 0:
                            qn = _assign(w, 2, p ^ 1, nv, endpoint, mate, label, labelend, inblossom, childs,
                                         nch, bbase, bestedge, queue, qn, leafbuf)
                        elif label[inblossom[w]] == 1:
                            # scan for a blossom or an augmenting path
                            path = tmp
                            npath = 0
                            base = -1
                            sv, sw = v, w
                            while sv != -1 or sw != -1:
                                b = inblossom[sv]
                                if label[b] & 4:
                                    base = bbase[b]
                                    break
                                path[npath] = b
                                npath += 1
                                label[b] = 5
                                if labelend[b] == -1:
                                    sv = -1
                                else:
                                    sv = endpoint[labelend[b]]
                                    b = inblossom[sv]
                                    sv = endpoint[labelend[b]]
                                if sw != -1:
                                    sv, sw = sw, sv
                            for x in range(npath):
                                label[path[x]] = 1
                            if base >= 0:
                                nunused, qn = _add_blossom(
                                    base, k, nv, ei, ej, wt, endpoint, nbptr, nbend, mate, label, labelend,
                                    inblossom, bparent, childs, endps, nch, bbase, bestedge, bbest, nbbest,
                                    unused, nunused, dual, queue, qn, leafbuf, bestto,
                                )
                            else:
                                _augment_matching(
                                    k, nv, ei, ej, endpoint, mate, label, labelend, inblossom, bparent,
                                    childs, endps, nch, bbase, astack, tmp,
                                )
                                augmented = True
                                break
                        elif label[w] == 0:
                            label[w] = 2
                            labelend[w] = p ^ 1
                    elif label[inblossom[w]] == 1:
                        b = inblossom[v]
                        if bestedge[b] == -1 or kslack < _slack(bestedge[b], ei, ej, wt, dual):
                            bestedge[b] = k
                    elif label[w] == 0:
                        if bestedge[w] == -1 or kslack < _slack(bestedge[w], ei, ej, wt, dual):
                            bestedge[w] = k
            if augmented:
                break
            deltatype = -1
            delta = 0.0
            deltaedge = -1
            deltablossom = -1
            if not maxcard:
                deltatype = 1
                delta = dual[:nv].min()
            for v in range(nv):
                if label[inblossom[v]] == 0 and bestedge[v] != -1:
                    d = _slack(bestedge[v], ei, ej, wt, dual)
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 2
                        deltaedge = bestedge[v]
            for b in range(nb):
                if bparent[b] == -1 and label[b] == 1 and bestedge[b] != -1:
                    d = _slack(bestedge[b], ei, ej, wt, dual) / 2.0
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 3
                        deltaedge = bestedge[b]
            for b in range(nv, nb):
                if bbase[b] >= 0 and bparent[b] == -1 and label[b] == 2 and (deltatype == -1 or dual[b] < delta):
                    delta = dual[b]
                    deltatype = 4
                    deltablossom = b
            if deltatype == -1:
                deltatype = 1
                delta = max(0.0, dual[:nv].min())
            for v in range(nv):
                lb = label[inblossom[v]]
                if lb == 1:
                    dual[v] -= delta
                elif lb == 2:
                    dual[v] += delta
            for b in range(nv, nb):
                if bbase[b] >= 0 and bparent[b] == -1:
                    if label[b] == 1:
                        dual[b] += delta
                    elif label[b] == 2:
                        dual[b] -= delta
            if deltatype == 1:
                break
            elif deltatype == 2:
                allow[deltaedge] = True
                i, j = ei[deltaedge], ej[deltaedge]
                if label[inblossom[i]] == 0:
                    i, j = j, i
                queue[qn] = i
                qn += 1
            elif deltatype == 3:
                allow[deltaedge] = True
                queue[qn] = ei[deltaedge]
                qn += 1
            else:
                nunused, qn = _expand_blossom(
                    deltablossom, False, nv, endpoint, mate, label, labelend, inblossom, bparent, childs, endps,
                    nch, bbase, bestedge, nbbest, unused, nunused, dual, allow, queue, qn, leafbuf, estack,
                )
        if not augmented:
            break
        for b in range(nv, nb):
            if bparent[b] == -1 and bbase[b] >= 0 and label[b] == 1 and dual[b] == 0:
                nunused, qn = _expand_blossom(
                    b, True, nv, endpoint, mate, label, labelend, inblossom, bparent, childs, endps,
                    nch, bbase, bestedge, nbbest, unused, nunused, dual, allow, queue, qn, leafbuf, estack,
                )
    out = np.full(nv, -1, np.int64)
    for v in range(nv):
        if mate[v] >= 0:
            out[v] = endpoint[mate[v]]
    return out


@njit(cache=True)
def _slack(k, ei, ej, wt, dual):
    return dual[ei[k]] + dual[ej[k]] - 2 * wt[k]


@njit(cache=True)
def _add_blossom(base, k, nv, ei, ej, wt, endpoint, nbptr, nbend, mate, label, labelend, inblossom, bparent,
                 childs, endps, nch, bbase, bestedge, bbest, nbbest, unused, nunused, dual, queue, qn, leafbuf,
                 bestto):
    v, w = ei[k], ej[k]
    bb = inblossom[base]
    bv = inblossom[v]
    bw = inblossom[w]
    nunused -= 1
    b = unused[nunused]
    bbase[b] = base
    bparent[b] = -1
    bparent[bb] = b
    # trace back from v to the base, then reverse
    n = 0
    while bv != bb:
        bparent[bv] = b
        childs[b, n] = bv
        endps[b, n] = labelend[bv]
        n += 1
        v = endpoint[labelend[bv]]
        bv = inblossom[v]
    childs[b, n] = bb
    n += 1
    childs[b, :n] = childs[b, :n][::-1].copy()
    endps[b, : n - 1] = endps[b, : n - 1][::-1].copy()
    endps[b, n - 1] = 2 * k
    while bw != bb:
        bparent[bw] = b
        childs[b, n] = bw
        endps[b, n] = labelend[bw] ^ 1
        n += 1
        w = endpoint[labelend[bw]]
        bw = inblossom[w]
    nch[b] = n
    label[b] = 1
    labelend[b] = labelend[bb]
    dual[b] = 0.0
    c = _leaves(b, nv, childs, nch, leafbuf)
    for x in range(c):
        u = leafbuf[x]
        if label[inblossom[u]] == 2:
            queue[qn] = u
            qn += 1
        inblossom[u] = b
    bestto[:] = -1
    inner = np.empty(nv, np.int64)
    for ci in range(n):
        sb = childs[b, ci]
        if nbbest[sb] == -1:
            cnt = _leaves(sb, nv, childs, nch, inner)
            for x in range(cnt):
                u = inner[x]
                for ip in range(nbptr[u], nbptr[u + 1]):
                    kk = nbend[ip] // 2
                    i, j = ei[kk], ej[kk]
                    if inblossom[j] == b:
                        i, j = j, i
                    bj = inblossom[j]
                    if bj != b and label[bj] == 1 and (
                        bestto[bj] == -1 or _slack(kk, ei, ej, wt, dual) < _slack(bestto[bj], ei, ej, wt, dual)
                    ):
                        bestto[bj] = kk
        else:
            for x in range(nbbest[sb]):
                kk = bbest[sb, x]
                i, j = ei[kk], ej[kk]
                if inblossom[j] == b:
                    i, j = j, i
                bj = inblossom[j]
                if bj != b and label[bj] == 1 and (
                    bestto[bj] == -1 or _slack(kk, ei, ej, wt, dual) < _slack(bestto[bj], ei, ej, wt, dual)
                ):
                    bestto[bj] = kk
        nbbest[sb] = -1
        bestedge[sb] = -1
    m = 0
    for x in range(len(bestto)):
        if bestto[x] != -1:
            bbest[b, m] = bestto[x]
            m += 1
    nbbest[b] = m
    bestedge[b] = -1
    for x in range(m):
        kk = bbest[b, x]
        if bestedge[b] == -1 or _slack(kk, ei, ej, wt, dual) < _slack(bestedge[b], ei, ej, wt, dual):
            bestedge[b] = kk
    return nunused, qn


@njit(cache=True)
def _assign(w, t, p, nv, endpoint, mate, label, labelend, inblossom, childs, nch, bbase, bestedge, queue, qn,
            leafbuf):
    while True:
        b = inblossom[w]
        label[w] = t
        label[b] = t
        labelend[w] = p
        labelend[b] = p
        bestedge[w] = -1
        bestedge[b] = -1
        if t == 1:
            c = _leaves(b, nv, childs, nch, leafbuf)
            for x in range(c):
                queue[qn] = leafbuf[x]
                qn += 1
            return qn
        base = bbase[b]
        w = endpoint[mate[base]]
        t = 1
        p = mate[base] ^ 1


@njit(cache=True)
def _expand_blossom(b0, endstage, nv, endpoint, mate, label, labelend, inblossom, bparent, childs, endps, nch,
                    bbase, bestedge, nbbest, unused, nunused, dual, allow, queue, qn, leafbuf, estack):
    top = 0
    estack[top] = b0
    top += 1
    while top > 0:
        top -= 1
        b = estack[top]
        for ci in range(nch[b]):
            s = childs[b, ci]
            bparent[s] = -1
            if s < nv:
                inblossom[s] = s
            elif endstage and dual[s] == 0:
                estack[top] = s
                top += 1
            else:
                c = _leaves(s, nv, childs, nch, leafbuf)
                for x in range(c):
                    inblossom[leafbuf[x]] = s
        if (not endstage) and label[b] == 2:
            n = nch[b]
            entry = inblossom[endpoint[labelend[b] ^ 1]]
            j = 0
            while childs[b, j] != entry:
                j += 1
            if j & 1:
                j -= n
                jstep = 1
                endptrick = 0
            else:
                jstep = -1
                endptrick = 1
            p = labelend[b]
            while j != 0:
                label[endpoint[p ^ 1]] = 0
                label[endpoint[endps[b, (j - endptrick) % n] ^ endptrick ^ 1]] = 0
                qn = _assign(endpoint[p ^ 1], 2, p, nv, endpoint, mate, label, labelend, inblossom, childs, nch,
                             bbase, bestedge, queue, qn, leafbuf)
                allow[endps[b, (j - endptrick) % n] // 2] = True
                j += jstep
                p = endps[b, (j - endptrick) % n] ^ endptrick
                allow[p // 2] = True
                j += jstep
            bv = childs[b, j % n]
            label[endpoint[p ^ 1]] = 2
            label[bv] = 2
            labelend[endpoint[p ^ 1]] = p
            labelend[bv] = p
            bestedge[bv] = -1
            j += jstep
            while childs[b, j % n] != entry:
                bv = childs[b, j % n]
                if label[bv] == 1:
                    j += jstep
                    continue
                c = _leaves(bv, nv, childs, nch, leafbuf)
                found = -1
                for x in range(c):
                    if label[leafbuf[x]] != 0:
                        found = leafbuf[x]
                        break
                if found >= 0:
                    label[found] = 0
                    label[endpoint[mate[bbase[bv]]]] = 0
                    qn = _assign(found, 2, labelend[found], nv, endpoint, mate, label, labelend, inblossom,
                                 childs, nch, bbase, bestedge, queue, qn, leafbuf)
                j += jstep
        label[b] = -1
        labelend[b] = -1
        nch[b] = 0
        bbase[b] = -1
        nbbest[b] = -1
        bestedge[b] = -1
        unused[nunused] = b
        nunused += 1
    return nunused, qn


@njit(cache=True)
def _augment_blossom(b0, v0, nv, endpoint, mate, bparent, childs, endps, nch, bbase, astack, tmp):
    top = 0
    astack[top, 0] = b0
    astack[top, 1] = v0
    top += 1
    while top > 0:
        top -= 1
        b = astack[top, 0]
        v = astack[top, 1]
        t = v
        while bparent[t] != b:
            t = bparent[t]
        if t >= nv:
            astack[top, 0] = t
            astack[top, 1] = v
            top += 1
        n = nch[b]
        i = 0
        while childs[b, i] != t:
            i += 1
        j = i
        if i & 1:
            j -= n
            jstep = 1
            endptrick = 0
        else:
            jstep = -1
            endptrick = 1
        while j != 0:
            j += jstep
            t = childs[b, j % n]
            p = endps[b, (j - endptrick) % n] ^ endptrick
            if t >= nv:
                astack[top, 0] = t
                astack[top, 1] = endpoint[p]
                top += 1
            j += jstep
            t = childs[b, j % n]
            if t >= nv:
                astack[top, 0] = t
                astack[top, 1] = endpoint[p ^ 1]
                top += 1
            mate[endpoint[p]] = p ^ 1
            mate[endpoint[p ^ 1]] = p
        for x in range(n):
            tmp[x] = childs[b, (i + x) % n]
        childs[b, :n] = tmp[:n]
        for x in range(n):
            tmp[x] = endps[b, (i + x) % n]
        endps[b, :n] = tmp[:n]
        bbase[b] = v


@njit(cache=True)
def _augment_matching(k, nv, ei, ej, endpoint, mate, label, labelend, inblossom, bparent, childs, endps, nch,
                      bbase, astack, tmp):
    for side in range(2):
        if side == 0:
            s = ei[k]
            p = 2 * k + 1
        else:
            s = ej[k]
            p = 2 * k
        while True:
            bs = inblossom[s]
            if bs >= nv:
                _augment_blossom(bs, s, nv, endpoint, mate, bparent, childs, endps, nch, bbase, astack, tmp)
            mate[s] = p
            if labelend[bs] == -1:
                break
            t = endpoint[labelend[bs]]
            bt = inblossom[t]
            s = endpoint[labelend[bt]]
            j = endpoint[labelend[bt] ^ 1]
            if bt >= nv:
                _augment_blossom(bt, j, nv, endpoint, mate, bparent, childs, endps, nch, bbase, astack, tmp)
            mate[j] = labelend[bt]
            p = labelend[bt] ^ 1


def max_weight_matching(num_vertices: int, edges_i, edges_j, weights, maxcardinality: bool = True) -> np.ndarray:
    """Mate array (``-1`` when unmatched) of a maximum-weight matching.

    With ``maxcardinality`` the matching has maximum weight among those of
    maximum cardinality.
    """
    ei = np.ascontiguousarray(edges_i, dtype=np.int64)
    ej = np.ascontiguousarray(edges_j, dtype=np.int64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    if num_vertices == 0 or len(ei) == 0:
        return np.full(num_vertices, -1, np.int64)
    if np.any(ei == ej):
        raise ValueError("self-loops are not allowed")
    return _matching(int(num_vertices), ei, ej, w, bool(maxcardinality))
