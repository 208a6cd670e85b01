# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``.

Same signatures, same status codes; the circulant solve is a direct
convolution instead of an FFT, so results agree to round-off.
"""
import numpy as np

from libc.math cimport ceil, floor, fabs, isfinite, rint, sqrt, INFINITY

BACKEND = "compiled"

RUNNING, CONVERGED, STALLED, DIVERGED = 0, 1, 2, 3


cdef inline double _bilinear(const double[:, ::1] img, double x, double y) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    cdef Py_ssize_t x0, y0
    cdef double fx, fy
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = <Py_ssize_t>floor(x)
    y0 = <Py_ssize_t>floor(y)
    if x0 > w - 2:
        x0 = w - 2
    if y0 > h - 2:
        y0 = h - 2
    fx = x - x0
    fy = y - y0
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x0 + 1]
            + (1 - fx) * fy * img[y0 + 1, x0] + fx * fy * img[y0 + 1, x0 + 1])


cdef double _energy(const double[:, ::1] xy, const double[:, ::1] field,
                    double alpha, double beta) noexcept nogil:
    cdef Py_ssize_t n = xy.shape[0], i, ip, im
    cdef double e1 = 0.0, e2 = 0.0, ext = 0.0, dx, dy
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        im = i - 1 if i > 0 else n - 1
        dx = xy[ip, 0] - xy[i, 0]
        dy = xy[ip, 1] - xy[i, 1]
        e1 += dx * dx + dy * dy
        dx = xy[ip, 0] - 2 * xy[i, 0] + xy[im, 0]
        dy = xy[ip, 1] - 2 * xy[i, 1] + xy[im, 1]
        e2 += dx * dx + dy * dy
        ext += _bilinear(field, xy[i, 0], xy[i, 1])
    return alpha * e1 + beta * e2 + ext


def snake_energy(xy, field, double alpha, double beta):
    cdef const double[:, ::1] pts = np.ascontiguousarray(xy, dtype=np.float64)
    cdef const double[:, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    return _energy(pts, f, alpha, beta)


def snake_descent(xy, field, gx, gy, double alpha, double beta, taus, kern,
                  double trust, double tol, int n_iters):
    """Run up to ``n_iters`` backtracking descent iterations.

    Returns ``(xy, energies, status, iterations_done)``.
    """
    cdef double[:, ::1] cur = np.array(xy, dtype=np.float64, order="C")
    cdef const double[:, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef const double[:, ::1] fgx = np.ascontiguousarray(gx, dtype=np.float64)
    cdef const double[:, ::1] fgy = np.ascontiguousarray(gy, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(taus, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(kern, dtype=np.float64)
    cdef Py_ssize_t n = cur.shape[0], h = f.shape[0], w = f.shape[1]
    cdef Py_ssize_t ntau = tv.shape[0], it, j, i, k, src
    cdef double[:, ::1] g = np.empty((n, 2))
    cdef double[:, ::1] rhs = np.empty((n, 2))
    cdef double[:, ::1] cand = np.empty((n, 2))
    cdef double[::1] energies = np.empty(max(n_iters, 0))
    cdef double e0, e1 = 0.0, step = 0.0, sx, sy, d, tau
    cdef bint accepted, finite
    e0 = _energy(cur, f, alpha, beta)
    for it in range(n_iters):
        for i in range(n):
            g[i, 0] = _bilinear(fgx, cur[i, 0], cur[i, 1])
            g[i, 1] = _bilinear(fgy, cur[i, 0], cur[i, 1])
        accepted = False
        for j in range(ntau):
            tau = tv[j]
            for i in range(n):
                rhs[i, 0] = cur[i, 0] - tau * g[i, 0]
                rhs[i, 1] = cur[i, 1] - tau * g[i, 1]
            finite = True
            step = 0.0
            for i in range(n):
                sx = 0.0
                sy = 0.0
                for k in range(n):
                    src = i - k
                    if src < 0:
                        src += n
                    sx += kv[j, k] * rhs[src, 0]
                    sy += kv[j, k] * rhs[src, 1]
                if not (isfinite(sx) and isfinite(sy)):
                    finite = False
                    break
                if sx < 0.0:
                    sx = 0.0
                elif sx > w - 1.0:
                    sx = w - 1.0
                if sy < 0.0:
                    sy = 0.0
                elif sy > h - 1.0:
                    sy = h - 1.0
                cand[i, 0] = sx
                cand[i, 1] = sy
                d = (sx - cur[i, 0]) ** 2 + (sy - cur[i, 1]) ** 2
                if d > step:
                    step = d
            if not finite:
                return np.asarray(cur).copy(), np.asarray(energies[:it]).copy(), DIVERGED, it
            step = sqrt(step)
            if step > trust:
                continue
            e1 = _energy(cand, f, alpha, beta)
            if e1 <= e0:
                accepted = True
                break
        if not accepted:
            return np.asarray(cur).copy(), np.asarray(energies[:it]).copy(), STALLED, it
        cur[:, :] = cand
        e0 = e1
        energies[it] = e1
        if step < tol:
            return (np.asarray(cur).copy(), np.asarray(energies[:it + 1]).copy(),
                    CONVERGED, it + 1)
    return np.asarray(cur).copy(), np.asarray(energies).copy(), RUNNING, n_iters


def smo_solve(K, y, double C, double tol, long max_iter):
    """Soft-margin SVM dual by pairwise updates; see ``_pykernels.smo_solve``."""
    cdef const double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64).copy()
    cdef Py_ssize_t n = yv.shape[0], t, i, j
    alpha_arr = np.zeros(n)
    G_arr = -np.ones(n)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef double[::1] QD = np.empty(n)
    cdef double eps_tau = 1e-12
    cdef double gmax, gmin, yG, b, a, score, best, Qij, quad, delta, diff, total
    cdef double ai, aj, ni, nj, dai, daj
    cdef bint up, low, any_up, any_low
    cdef long it = 0
    for t in range(n):
        QD[t] = Kv[t, t]
    while it < max_iter:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        any_up = False
        any_low = False
        for t in range(n):
            yG = -yv[t] * G[t]
            up = (yv[t] > 0 and alpha[t] < C) or (yv[t] < 0 and alpha[t] > 0)
            low = (yv[t] > 0 and alpha[t] > 0) or (yv[t] < 0 and alpha[t] < C)
            if up:
                any_up = True
                if yG > gmax:
                    gmax = yG
                    i = t
            if low:
                any_low = True
                if yG < gmin:
                    gmin = yG
        if not any_up or not any_low:
            break
        if gmax - gmin < tol:
            break
        j = 0
        best = INFINITY
        for t in range(n):
            low = (yv[t] > 0 and alpha[t] > 0) or (yv[t] < 0 and alpha[t] < C)
            if not low:
                continue
            b = gmax - (-yv[t] * G[t])
            if b <= 0:
                continue
            a = QD[i] + QD[t] - 2.0 * Kv[i, t]
            if not a > 0:
                a = eps_tau
            score = -(b * b) / a
            if score < best:
                best = score
                j = t
        ai = alpha[i]
        aj = alpha[j]
        Qij = yv[i] * yv[j] * Kv[i, j]
        if yv[i] != yv[j]:
            quad = QD[i] + QD[j] + 2.0 * Qij
            if quad <= 0:
                quad = eps_tau
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni = ai + delta
            nj = aj + delta
            if diff > 0:
                if nj < 0:
                    nj = 0.0
                    ni = diff
            else:
                if ni < 0:
                    ni = 0.0
                    nj = -diff
            if diff > 0:
                if ni > C:
                    ni = C
                    nj = C - diff
            else:
                if nj > C:
                    nj = C
                    ni = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qij
            if quad <= 0:
                quad = eps_tau
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni = ai - delta
            nj = aj + delta
            if total > C:
                if ni > C:
                    ni = C
                    nj = total - C
            else:
                if nj < 0:
                    nj = 0.0
                    ni = total
            if total > C:
                if nj > C:
                    nj = C
                    ni = total - C
            else:
                if ni < 0:
                    ni = 0.0
                    nj = total
        alpha[i] = ni
        alpha[j] = nj
        dai = ni - ai
        daj = nj - aj
        for t in range(n):
            G[t] = G[t] + ((yv[i] * yv[t] * Kv[i, t]) * dai + (yv[j] * yv[t] * Kv[j, t]) * daj)
        it += 1
    return alpha_arr, G_arr, it


def fill_polygon(xs, ys, Py_ssize_t height, Py_ssize_t width):
    """Even-odd fill; a pixel is set when its center is inside or on an edge."""
    cdef const double[::1] px = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] py = np.ascontiguousarray(ys, dtype=np.float64)
    out_arr = np.zeros((height, width), dtype=bool)
    cdef Py_ssize_t n = px.shape[0]
    if n < 3 or height == 0 or width == 0:
        return out_arr
    cdef unsigned char[:, ::1] out = out_arr.view(np.uint8)
    cdef double[::1] xc = np.empty(n)
    cdef Py_ssize_t r, k, m, q, a, b, c, c_lo, c_hi, r_lo, r_hi
    cdef double x0, y0, x1, y1, lo, hi, row, t, v, xa, xb, ya, yb, xx
    for r in range(height):
        row = <double>r
        m = 0
        for k in range(n):
            x0 = px[k]
            y0 = py[k]
            x1 = px[k + 1] if k + 1 < n else px[0]
            y1 = py[k + 1] if k + 1 < n else py[0]
            lo = y0 if y0 < y1 else y1
            hi = y1 if y0 < y1 else y0
            # half-open rule for parity: an edge counts on rows lo <= y < hi
            if row >= lo and row < hi:
                t = (row - y0) / (y1 - y0)
                xc[m] = x0 + t * (x1 - x0)
                m += 1
        # insertion sort of the few crossings on this row
        for k in range(1, m):
            v = xc[k]
            q = k - 1
            while q >= 0 and xc[q] > v:
                xc[q + 1] = xc[q]
                q -= 1
            xc[q + 1] = v
        k = 0
        while k + 1 < m:
            a = <Py_ssize_t>ceil(xc[k] - 1e-9)
            b = <Py_ssize_t>floor(xc[k + 1] + 1e-9)
            if a < 0:
                a = 0
            if b > width - 1:
                b = width - 1
            for c in range(a, b + 1):
                out[r, c] = 1
            k += 2
    # pixel centers lying exactly on an edge (horizontal edges, vertices, ...)
    for k in range(n):
        xa = px[k]
        ya = py[k]
        xb = px[k + 1] if k + 1 < n else px[0]
        yb = py[k + 1] if k + 1 < n else py[0]
        r_lo = <Py_ssize_t>ceil((ya if ya < yb else yb) - 1e-9)
        r_hi = <Py_ssize_t>floor((yb if ya < yb else ya) + 1e-9)
        if r_lo < 0:
            r_lo = 0
        if r_hi > height - 1:
            r_hi = height - 1
        if r_lo > r_hi:
            continue
        if fabs(yb - ya) < 1e-12:
            c_lo = <Py_ssize_t>ceil((xa if xa < xb else xb) - 1e-9)
            c_hi = <Py_ssize_t>floor((xb if xa < xb else xa) + 1e-9)
            if c_lo < 0:
                c_lo = 0
            if c_hi > width - 1:
                c_hi = width - 1
            if c_lo <= c_hi and fabs(ya - rint(ya)) < 1e-9:
                for c in range(c_lo, c_hi + 1):
                    out[r_lo, c] = 1
            continue
        for r in range(r_lo, r_hi + 1):
            xx = xa + (r - ya) / (yb - ya) * (xb - xa)
            if fabs(xx - rint(xx)) < 1e-9:
                c = <Py_ssize_t>rint(xx)
                if c >= 0 and c < width:
                    out[r, c] = 1
    return out_arr
