"""Pure-numpy versions of the compiled kernels.

Loops run over shapes in Python; work inside each shape is vectorised.
Signatures and results match ``_numba`` exactly (up to summation order).
"""

import numpy as np


def _sl(b):
    return tuple(slice(int(b[a, 0]), int(b[a, 1])) for a in range(3))


def box_min_scan(V, boxes):
    return np.array([V[_sl(b)].min() for b in boxes], dtype=np.float64)


def box_absdev(V, boxes, means, p):
    out = np.empty(len(boxes))
    for s, b in enumerate(boxes):
        d = np.abs(V[_sl(b)] - means[s])
        out[s] = d.sum() if p == 1.0 else (d * d).sum() if p == 2.0 else (d**p).sum()
    return out


def stamp_boxes(out, boxes, vals):
    for b, v in zip(boxes, vals):
        view = out[_sl(b)]
        np.maximum(view, v, out=view)
    return out


def _window_max(A, e, n_out, axis):
    """Trailing window max along ``axis``: r[x] = max A[x-e+1 .. x] (van Herk)."""
    A = np.moveaxis(A, axis, -1)
    L = n_out + e - 1
    nb = -(-L // e)
    P = np.full(A.shape[:-1] + (nb * e,), -np.inf)
    P[..., e - 1 : e - 1 + A.shape[-1]] = A
    blocks = P.reshape(A.shape[:-1] + (nb, e))
    g = np.maximum.accumulate(blocks, axis=-1).reshape(P.shape)
    h = np.maximum.accumulate(blocks[..., ::-1], axis=-1)[..., ::-1].reshape(P.shape)
    r = np.maximum(h[..., :n_out], g[..., e - 1 : e - 1 + n_out])
    return np.moveaxis(r, -1, axis)


def dilate_boxes(out, A, e0, e1, e2):
    B = _window_max(A, e0, out.shape[0], 0)
    B = _window_max(B, e1, out.shape[1], 1)
    B = _window_max(B, e2, out.shape[2], 2)
    np.maximum(out, B, out=out)
    return out


def _mask(b, c, r, pn, ax):
    grids = np.meshgrid(
        *[np.arange(b[a, 0], b[a, 1]) + 0.5 - c[a] for a in range(3)], indexing="ij"
    )
    d = [np.abs(g) if ax[a] else np.zeros_like(g) for a, g in enumerate(grids)]
    if pn == np.inf:
        return np.maximum(np.maximum(d[0], d[1]), d[2]) < r
    if pn == 2.0:
        return d[0] * d[0] + d[1] * d[1] + d[2] * d[2] < r * r
    if pn == 1.0:
        return d[0] + d[1] + d[2] < r
    return d[0] ** pn + d[1] ** pn + d[2] ** pn < r**pn


def mask_stats(V, centers, radii, pn, ax, bboxes):
    m = len(bboxes)
    cnt, s1, s2 = np.zeros(m), np.zeros(m), np.zeros(m)
    mn = np.full(m, np.inf)
    for s in range(m):
        vals = V[_sl(bboxes[s])][_mask(bboxes[s], centers[s], radii[s], pn, ax)]
        if vals.size:
            cnt[s], s1[s], s2[s], mn[s] = vals.size, vals.sum(), (vals * vals).sum(), vals.min()
    return cnt, s1, s2, mn


def mask_absdev(V, centers, radii, pn, ax, bboxes, means, p):
    out = np.zeros(len(bboxes))
    for s in range(len(bboxes)):
        vals = V[_sl(bboxes[s])][_mask(bboxes[s], centers[s], radii[s], pn, ax)]
        d = np.abs(vals - means[s])
        out[s] = d.sum() if p == 1.0 else (d * d).sum() if p == 2.0 else (d**p).sum()
    return out


def stamp_masks(out, centers, radii, pn, ax, bboxes, vals):
    for s in range(len(bboxes)):
        view = out[_sl(bboxes[s])]
        mk = _mask(bboxes[s], centers[s], radii[s], pn, ax)
        view[mk] = np.maximum(view[mk], vals[s])
    return out


def rec_k2(G, ptr1, idx1, ptr2, idx2, mode):
    m1, m2 = len(ptr1) - 1, len(ptr2) - 1
    out = np.empty((m1, m2))
    for a in range(m1):
        rows = G[idx1[ptr1[a] : ptr1[a + 1]]]
        for b in range(m2):
            B = rows[:, idx2[ptr2[b] : ptr2[b + 1]]]
            if mode == 0:
                r = B.mean(axis=1, keepdims=True)
                c = B.mean(axis=0, keepdims=True)
                out[a, b] = np.abs(B - r - c + B.mean()).mean()
            else:
                along2 = B.min(axis=1, keepdims=True)
                along1 = B.min(axis=0, keepdims=True)
                if mode == 1:
                    out[a, b] = (B - np.maximum(along1, along2)).mean()
                else:
                    out[a, b] = np.abs(B - along2 - along1 + B.min()).mean()
    return out


def rec_blo_k3(G, ptr1, idx1, ptr2, idx2, ptr3, idx3):
    m1, m2, m3 = len(ptr1) - 1, len(ptr2) - 1, len(ptr3) - 1
    out = np.empty((m1, m2, m3))
    for a in range(m1):
        A = G[idx1[ptr1[a] : ptr1[a + 1]]]
        for b in range(m2):
            AB = A[:, idx2[ptr2[b] : ptr2[b + 1]]]
            for c in range(m3):
                B = AB[:, :, idx3[ptr3[c] : ptr3[c + 1]]]
                t = np.maximum(
                    np.maximum(B.min(axis=0, keepdims=True), B.min(axis=1, keepdims=True)),
                    B.min(axis=2, keepdims=True),
                )
                out[a, b, c] = (B - t).mean()
    return out


def _fit_start(lo, hi, t, N, align, stride, c2):
    if t < hi - lo or t > N:
        return -1
    if align == 0:
        return min(lo, N - t)
    if align == 3:
        if (c2 - t) % 2:
            return -1
        st = (c2 - t) // 2
        return st if (st <= lo and st + t >= hi and st >= 0 and st + t <= N) else -1
    m = t if align == 1 else stride
    st = (min(lo, N - t) // m) * m
    return st if (st >= 0 and st + t >= hi) else -1


def smallest_cover(ulo, uhi, res, ndim, cube, sides, align, stride, c2):
    tb = np.zeros((3, 2), dtype=np.int64)
    tb[:, 1] = 1
    axes = range(3 - ndim, 3)
    if cube:
        need = max(int(uhi[a] - ulo[a]) for a in axes)
        for t in sides:
            if t < need:
                continue
            starts = {a: _fit_start(ulo[a], uhi[a], int(t), res[a], align, stride, c2[a]) for a in axes}
            if min(starts.values()) >= 0:
                for a, st in starts.items():
                    tb[a] = (st, st + t)
                return float(t) ** ndim, tb
        return -1.0, tb
    vol = 1.0
    for a in axes:
        for t in sides:
            if t < uhi[a] - ulo[a]:
                continue
            st = _fit_start(ulo[a], uhi[a], int(t), res[a], align, stride, c2[a])
            if st >= 0:
                tb[a] = (st, st + t)
                vol *= t
                break
        else:
            return -1.0, tb
    return vol, tb


def _fit_start_vec(lo, hi, t, N, align, stride, c2):
    """Vectorised ``_fit_start`` over arrays ``lo``, ``hi`` for one length t."""
    ok = (t >= hi - lo) & (t <= N)
    if align == 0:
        st = np.minimum(lo, N - t)
    elif align == 3:
        st = (c2 - t) // 2
        ok &= ((c2 - t) % 2 == 0) & (st <= lo) & (st + t >= hi) & (st >= 0) & (st + t <= N)
    else:
        m = t if align == 1 else stride
        st = (np.minimum(lo, N - t) // m) * m
        ok &= (st >= 0) & (st + t >= hi)
    return np.where(ok, st, -1)


def _cover_vols(ulo, uhi, res, ndim, cube, sides, align, stride, c2):
    q = len(ulo)
    axes = range(3 - ndim, 3)
    if cube:
        vol = np.full(q, -1.0)
        need = (uhi[:, 3 - ndim :] - ulo[:, 3 - ndim :]).max(axis=1)
        for t in sides:
            todo = (vol < 0) & (need <= t)
            if not todo.any():
                continue
            ok = todo.copy()
            for a in axes:
                ok &= _fit_start_vec(ulo[:, a], uhi[:, a], int(t), res[a], align, stride, c2[a]) >= 0
            vol[ok] = float(t) ** ndim
        return vol
    vol = np.ones(q)
    for a in axes:
        got = np.full(q, -1.0)
        for t in sides:
            todo = got < 0
            if not todo.any():
                break
            st = _fit_start_vec(ulo[:, a], uhi[:, a], int(t), res[a], align, stride, c2[a])
            got[todo & (st >= 0)] = float(t)
        vol = np.where((vol < 0) | (got < 0), -1.0, vol * got)
    return vol


def engulf_boxes(S, St, T, ii, jj, exhaustive, res, ndim, cube, sides, align, stride, c2):
    m = len(S)
    if exhaustive:
        groups = ((s, np.arange(len(T))) for s in range(m))
    else:
        order = np.argsort(ii, kind="stable")
        ii_s, jj_s = ii[order], jj[order]
        cuts = np.flatnonzero(np.diff(ii_s)) + 1
        groups = ((int(a[0]), b) for a, b in zip(np.split(ii_s, cuts), np.split(jj_s, cuts)) if len(a))
    worst, ws, wt, count = 0.0, -1, -1, 0
    tvols = np.prod(T[:, :, 1] - T[:, :, 0], axis=1).astype(np.float64)
    for s, ts in groups:
        Tb = T[ts]
        meets = np.all(np.maximum(S[s, :, 0], Tb[:, :, 0]) < np.minimum(S[s, :, 1], Tb[:, :, 1]), axis=1)
        leaves = np.any((Tb[:, :, 0] < St[s, :, 0]) | (Tb[:, :, 1] > St[s, :, 1]), axis=1)
        ts = ts[meets & leaves]
        if not len(ts):
            continue
        count += len(ts)
        ulo = np.minimum(St[s, :, 0], T[ts, :, 0])
        uhi = np.maximum(St[s, :, 1], T[ts, :, 1])
        vol = _cover_vols(ulo, uhi, res, ndim, cube, sides, align, stride, c2)
        ratio = np.where(vol < 0, np.inf, vol / tvols[ts])
        k = int(np.argmax(ratio))
        if ratio[k] > worst:
            worst, ws, wt = float(ratio[k]), s, int(ts[k])
    return worst, ws, wt, count
