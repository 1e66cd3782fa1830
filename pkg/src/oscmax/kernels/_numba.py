"""Compiled per-shape loops. Arrays are padded to 3 axes (leading singletons);
boxes are (m, 3, 2) half-open index ranges."""

import numpy as np
from numba import njit

_opts = dict(cache=True, nogil=True)
# reassociation lets LLVM vectorise the inner sums; infinities stay legal
_sum_opts = dict(cache=True, nogil=True, fastmath={"reassoc", "contract", "nsz"})


@njit(**_opts)
def box_min_scan(V, boxes):
    m = boxes.shape[0]
    out = np.empty(m)
    for s in range(m):
        best = np.inf
        k0 = boxes[s, 2, 0]
        k1 = boxes[s, 2, 1]
        for i in range(boxes[s, 0, 0], boxes[s, 0, 1]):
            for j in range(boxes[s, 1, 0], boxes[s, 1, 1]):
                row = V[i, j]
                for k in range(k0, k1):
                    if row[k] < best:
                        best = row[k]
        out[s] = best
    return out


@njit(**_sum_opts)
def box_absdev(V, boxes, means, p):
    """Sum over each box of |V - mean|^p."""
    m = boxes.shape[0]
    out = np.empty(m)
    for s in range(m):
        mu = means[s]
        acc = 0.0
        k0 = boxes[s, 2, 0]
        k1 = boxes[s, 2, 1]
        for i in range(boxes[s, 0, 0], boxes[s, 0, 1]):
            for j in range(boxes[s, 1, 0], boxes[s, 1, 1]):
                row = V[i, j]
                if p == 1.0:
                    for k in range(k0, k1):
                        acc += abs(row[k] - mu)
                elif p == 2.0:
                    for k in range(k0, k1):
                        d = row[k] - mu
                        acc += d * d
                else:
                    for k in range(k0, k1):
                        acc += abs(row[k] - mu) ** p
        out[s] = acc
    return out


@njit(**_opts)
def stamp_boxes(out, boxes, vals):
    for s in range(boxes.shape[0]):
        v = vals[s]
        for i in range(boxes[s, 0, 0], boxes[s, 0, 1]):
            for j in range(boxes[s, 1, 0], boxes[s, 1, 1]):
                for k in range(boxes[s, 2, 0], boxes[s, 2, 1]):
                    if v > out[i, j, k]:
                        out[i, j, k] = v
    return out


@njit(**_opts)
def _window_max_line(src, e, n_out, dst, g, h):
    # dst[x] = max(src[x - e + 1 .. x]) over valid indices of src (len(src) = n_out - e + 1)
    m = src.shape[0]
    L = n_out + e - 1
    nb = (L + e - 1) // e
    for b in range(nb):
        base = b * e
        run = -np.inf
        for t in range(e):
            q = base + t - (e - 1)
            v = src[q] if 0 <= q < m else -np.inf
            if v > run:
                run = v
            g[base + t] = run
        run = -np.inf
        for t in range(e - 1, -1, -1):
            q = base + t - (e - 1)
            v = src[q] if 0 <= q < m else -np.inf
            if v > run:
                run = v
            h[base + t] = run
    for x in range(n_out):
        a = h[x]
        b = g[x + e - 1]
        dst[x] = a if a > b else b


@njit(**_opts)
def dilate_boxes(out, A, e0, e1, e2):
    """out[x] = max(out[x], max{A[c] : c <= x < c + e}) for one extent class."""
    N0, N1, N2 = out.shape
    L = max(N0, N1, N2) + max(e0, e1, e2) + 2 * max(e0, e1, e2)
    g = np.empty(L)
    h = np.empty(L)
    B0 = np.empty((N0, A.shape[1], A.shape[2]))
    col = np.empty(N0)
    for j in range(A.shape[1]):
        for k in range(A.shape[2]):
            _window_max_line(A[:, j, k].copy(), e0, N0, col, g, h)
            B0[:, j, k] = col
    B1 = np.empty((N0, N1, A.shape[2]))
    row = np.empty(N1)
    for i in range(N0):
        for k in range(A.shape[2]):
            _window_max_line(B0[i, :, k].copy(), e1, N1, row, g, h)
            B1[i, :, k] = row
    dep = np.empty(N2)
    for i in range(N0):
        for j in range(N1):
            _window_max_line(B1[i, j, :].copy(), e2, N2, dep, g, h)
            for k in range(N2):
                if dep[k] > out[i, j, k]:
                    out[i, j, k] = dep[k]
    return out


@njit(**_opts)
def _inside(i, j, k, c, r, pn, ax):
    # cell centre (i+.5, j+.5, k+.5) in the open p-ball over the flagged axes
    d0 = abs(i + 0.5 - c[0]) if ax[0] else 0.0
    d1 = abs(j + 0.5 - c[1]) if ax[1] else 0.0
    d2 = abs(k + 0.5 - c[2]) if ax[2] else 0.0
    if pn == np.inf:
        return max(d0, max(d1, d2)) < r
    if pn == 2.0:
        return d0 * d0 + d1 * d1 + d2 * d2 < r * r
    if pn == 1.0:
        return d0 + d1 + d2 < r
    return d0**pn + d1**pn + d2**pn < r**pn


@njit(**_opts)
def mask_stats(V, centers, radii, pn, ax, bboxes):
    """Per masked shape: (count, sum, sumsq, min) of V."""
    m = bboxes.shape[0]
    cnt = np.zeros(m)
    s1 = np.zeros(m)
    s2 = np.zeros(m)
    mn = np.full(m, np.inf)
    for s in range(m):
        c = centers[s]
        r = radii[s]
        for i in range(bboxes[s, 0, 0], bboxes[s, 0, 1]):
            for j in range(bboxes[s, 1, 0], bboxes[s, 1, 1]):
                for k in range(bboxes[s, 2, 0], bboxes[s, 2, 1]):
                    if _inside(i, j, k, c, r, pn, ax):
                        v = V[i, j, k]
                        cnt[s] += 1.0
                        s1[s] += v
                        s2[s] += v * v
                        if v < mn[s]:
                            mn[s] = v
    return cnt, s1, s2, mn


@njit(**_opts)
def mask_absdev(V, centers, radii, pn, ax, bboxes, means, p):
    m = bboxes.shape[0]
    out = np.zeros(m)
    for s in range(m):
        c = centers[s]
        r = radii[s]
        mu = means[s]
        acc = 0.0
        for i in range(bboxes[s, 0, 0], bboxes[s, 0, 1]):
            for j in range(bboxes[s, 1, 0], bboxes[s, 1, 1]):
                for k in range(bboxes[s, 2, 0], bboxes[s, 2, 1]):
                    if _inside(i, j, k, c, r, pn, ax):
                        d = abs(V[i, j, k] - mu)
                        if p == 1.0:
                            acc += d
                        elif p == 2.0:
                            acc += d * d
                        else:
                            acc += d**p
        out[s] = acc
    return out


@njit(**_opts)
def stamp_masks(out, centers, radii, pn, ax, bboxes, vals):
    for s in range(bboxes.shape[0]):
        c = centers[s]
        r = radii[s]
        v = vals[s]
        for i in range(bboxes[s, 0, 0], bboxes[s, 0, 1]):
            for j in range(bboxes[s, 1, 0], bboxes[s, 1, 1]):
                for k in range(bboxes[s, 2, 0], bboxes[s, 2, 1]):
                    if v > out[i, j, k] and _inside(i, j, k, c, r, pn, ax):
                        out[i, j, k] = v
    return out


@njit(**_opts)
def rec_k2(G, ptr1, idx1, ptr2, idx2, mode):
    """Two-factor rectangular statistics for every product shape.

    mode 0: mean |G - rowmean - colmean + mean|
    mode 1: mean [G - max(min over factor-1 slice, min over factor-2 slice)]
    mode 2: mean |G - min_2 - min_1 + min over the product|
    """
    m1 = ptr1.shape[0] - 1
    m2 = ptr2.shape[0] - 1
    out = np.empty((m1, m2))
    w1 = 0
    for a in range(m1):
        w1 = max(w1, ptr1[a + 1] - ptr1[a])
    w2 = 0
    for b in range(m2):
        w2 = max(w2, ptr2[b + 1] - ptr2[b])
    along2 = np.empty(w1)  # per factor-1 cell: aggregate over S2
    along1 = np.empty(w2)  # per factor-2 cell: aggregate over S1
    for a in range(m1):
        i0 = ptr1[a]
        n1 = ptr1[a + 1] - i0
        for b in range(m2):
            j0 = ptr2[b]
            n2 = ptr2[b + 1] - j0
            if mode == 0:
                for y in range(n2):
                    along1[y] = 0.0
                tot = 0.0
                for x in range(n1):
                    gx = idx1[i0 + x]
                    acc = 0.0
                    for y in range(n2):
                        v = G[gx, idx2[j0 + y]]
                        acc += v
                        along1[y] += v
                    along2[x] = acc / n2
                    tot += acc
                tot /= n1 * n2
                for y in range(n2):
                    along1[y] /= n1
                acc = 0.0
                for x in range(n1):
                    gx = idx1[i0 + x]
                    rx = along2[x]
                    for y in range(n2):
                        acc += abs(G[gx, idx2[j0 + y]] - rx - along1[y] + tot)
                out[a, b] = acc / (n1 * n2)
            else:
                for y in range(n2):
                    along1[y] = np.inf
                lo = np.inf
                for x in range(n1):
                    gx = idx1[i0 + x]
                    mn = np.inf
                    for y in range(n2):
                        v = G[gx, idx2[j0 + y]]
                        if v < mn:
                            mn = v
                        if v < along1[y]:
                            along1[y] = v
                    along2[x] = mn
                    if mn < lo:
                        lo = mn
                acc = 0.0
                for x in range(n1):
                    gx = idx1[i0 + x]
                    cx = along2[x]
                    for y in range(n2):
                        v = G[gx, idx2[j0 + y]]
                        if mode == 1:
                            ry = along1[y]
                            acc += v - (ry if ry > cx else cx)
                        else:
                            acc += abs(v - cx - along1[y] + lo)
                out[a, b] = acc / (n1 * n2)
    return out


@njit(**_opts)
def rec_blo_k3(G, ptr1, idx1, ptr2, idx2, ptr3, idx3):
    m1 = ptr1.shape[0] - 1
    m2 = ptr2.shape[0] - 1
    m3 = ptr3.shape[0] - 1
    w = np.zeros(3, dtype=np.int64)
    for a in range(m1):
        w[0] = max(w[0], ptr1[a + 1] - ptr1[a])
    for b in range(m2):
        w[1] = max(w[1], ptr2[b + 1] - ptr2[b])
    for c in range(m3):
        w[2] = max(w[2], ptr3[c + 1] - ptr3[c])
    mn1 = np.empty((w[1], w[2]))
    mn2 = np.empty((w[0], w[2]))
    mn3 = np.empty((w[0], w[1]))
    out = np.empty((m1, m2, m3))
    for a in range(m1):
        i0 = ptr1[a]
        n1 = ptr1[a + 1] - i0
        for b in range(m2):
            j0 = ptr2[b]
            n2 = ptr2[b + 1] - j0
            for c in range(m3):
                k0 = ptr3[c]
                n3 = ptr3[c + 1] - k0
                mn1[:n2, :n3] = np.inf
                mn2[:n1, :n3] = np.inf
                mn3[:n1, :n2] = np.inf
                for x in range(n1):
                    gx = idx1[i0 + x]
                    for y in range(n2):
                        gy = idx2[j0 + y]
                        for z in range(n3):
                            v = G[gx, gy, idx3[k0 + z]]
                            if v < mn1[y, z]:
                                mn1[y, z] = v
                            if v < mn2[x, z]:
                                mn2[x, z] = v
                            if v < mn3[x, y]:
                                mn3[x, y] = v
                acc = 0.0
                for x in range(n1):
                    gx = idx1[i0 + x]
                    for y in range(n2):
                        gy = idx2[j0 + y]
                        for z in range(n3):
                            t = max(mn1[y, z], max(mn2[x, z], mn3[x, y]))
                            acc += G[gx, gy, idx3[k0 + z]] - t
                out[a, b, c] = acc / (n1 * n2 * n3)
    return out


@njit(**_opts)
def _fit_start(lo, hi, t, N, align, stride, c2):
    """Start of a length-t interval covering [lo, hi) inside [0, N), or -1."""
    if t < hi - lo or t > N:
        return -1
    if align == 0:
        return min(lo, N - t)
    if align == 3:
        if (c2 - t) % 2 != 0:
            return -1
        st = (c2 - t) // 2
        if st <= lo and st + t >= hi and st >= 0 and st + t <= N:
            return st
        return -1
    m = t if align == 1 else stride
    st = (min(lo, N - t) // m) * m
    if st >= 0 and st + t >= hi:
        return st
    return -1


@njit(**_opts)
def _smallest_cover(ulo, uhi, res, ndim, cube, sides, align, stride, c2, tb):
    """Smallest family member containing the box [ulo, uhi); writes it to tb.

    Returns its cell count, or -1.0 when no member contains the box.
    """
    for a in range(3):
        tb[a, 0] = 0
        tb[a, 1] = 1
    lead = 3 - ndim
    if cube:
        need = 0
        for a in range(lead, 3):
            need = max(need, uhi[a] - ulo[a])
        for q in range(sides.shape[0]):
            t = sides[q]
            if t < need:
                continue
            ok = True
            for a in range(lead, 3):
                st = _fit_start(ulo[a], uhi[a], t, res[a], align, stride, c2[a])
                if st < 0:
                    ok = False
                    break
                tb[a, 0] = st
                tb[a, 1] = st + t
            if ok:
                return float(t) ** ndim
        return -1.0
    vol = 1.0
    for a in range(lead, 3):
        found = False
        for q in range(sides.shape[0]):
            t = sides[q]
            if t < uhi[a] - ulo[a]:
                continue
            st = _fit_start(ulo[a], uhi[a], t, res[a], align, stride, c2[a])
            if st >= 0:
                tb[a, 0] = st
                tb[a, 1] = st + t
                vol *= t
                found = True
                break
        if not found:
            return -1.0
    return vol


@njit(**_opts)
def engulf_boxes(S, St, T, ii, jj, exhaustive, res, ndim, cube, sides, align, stride, c2):
    """Worst |Tbar|/|T| over qualifying pairs (S meets T, T leaves S~).

    Returns (worst ratio, worst s index, worst t index, qualifying count).
    """
    ulo = np.empty(3, dtype=np.int64)
    uhi = np.empty(3, dtype=np.int64)
    tb = np.empty((3, 2), dtype=np.int64)
    worst = 0.0
    ws = -1
    wt = -1
    count = 0
    m = S.shape[0]
    npairs = m * m if exhaustive else ii.shape[0]
    for q in range(npairs):
        if exhaustive:
            s = q // m
            t = q % m
        else:
            s = ii[q]
            t = jj[q]
        meets = True
        leaves = False
        for a in range(3):
            if max(S[s, a, 0], T[t, a, 0]) >= min(S[s, a, 1], T[t, a, 1]):
                meets = False
                break
            if T[t, a, 0] < St[s, a, 0] or T[t, a, 1] > St[s, a, 1]:
                leaves = True
        if not (meets and leaves):
            continue
        count += 1
        for a in range(3):
            ulo[a] = min(St[s, a, 0], T[t, a, 0])
            uhi[a] = max(St[s, a, 1], T[t, a, 1])
        vol = _smallest_cover(ulo, uhi, res, ndim, cube, sides, align, stride, c2, tb)
        tvol = 1.0
        for a in range(3):
            tvol *= T[t, a, 1] - T[t, a, 0]
        ratio = np.inf if vol < 0 else vol / tvol
        if ratio > worst:
            worst = ratio
            ws = s
            wt = t
    return worst, ws, wt, count


@njit(**_opts)
def smallest_cover(ulo, uhi, res, ndim, cube, sides, align, stride, c2):
    tb = np.empty((3, 2), dtype=np.int64)
    vol = _smallest_cover(ulo, uhi, res, ndim, cube, sides, align, stride, c2, tb)
    return vol, tb
