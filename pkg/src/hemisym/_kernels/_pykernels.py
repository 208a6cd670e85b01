"""Reference numpy implementations of the hot kernels.

Each function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics; results agree to floating-point round-off.
"""
import numpy as np

BACKEND = "python"

# status codes returned by snake_descent
RUNNING, CONVERGED, STALLED, DIVERGED = 0, 1, 2, 3


def _bilinear(img, xy):
    h, w = img.shape
    x = np.clip(xy[:, 0], 0.0, w - 1.0)
    y = np.clip(xy[:, 1], 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2)
    fx = x - x0
    fy = y - y0
    return ((1 - fx) * (1 - fy) * img[y0, x0] + fx * (1 - fy) * img[y0, x0 + 1]
            + (1 - fx) * fy * img[y0 + 1, x0] + fx * fy * img[y0 + 1, x0 + 1])


def snake_energy(xy, field, alpha, beta):
    d1 = np.roll(xy, -1, axis=0) - xy
    d2 = np.roll(xy, -1, axis=0) - 2 * xy + np.roll(xy, 1, axis=0)
    return (alpha * np.sum(d1 * d1) + beta * np.sum(d2 * d2)
            + np.sum(_bilinear(field, xy)))


def snake_descent(xy, field, gx, gy, alpha, beta, taus, kern, trust, tol, n_iters):
    """Run up to ``n_iters`` backtracking descent iterations.

    ``kern[j]`` is the first row of the circulant ``(I + taus[j] * A)^-1``
    where ``A`` is the Hessian of the internal energy.  A trial step for
    ``taus[j]`` is ``kern[j] (*) (xy - taus[j] * grad_ext)``; the first trial
    that moves no vertex farther than ``trust`` and does not raise the energy
    is accepted.

    Returns ``(xy, energies, status, iterations_done)``.
    """
    xy = np.array(xy, dtype=float)
    h, w = field.shape
    n = xy.shape[0]
    spectra = np.fft.rfft(kern, axis=1)
    energies = []
    e0 = snake_energy(xy, field, alpha, beta)
    for it in range(n_iters):
        g = np.stack([_bilinear(gx, xy), _bilinear(gy, xy)], axis=1)
        accepted = False
        for j in range(len(taus)):
            rhs = xy - taus[j] * g
            cand = np.fft.irfft(np.fft.rfft(rhs, axis=0) * spectra[j][:, None], n=n, axis=0)
            if not np.all(np.isfinite(cand)):
                return xy, np.array(energies), DIVERGED, it
            np.clip(cand[:, 0], 0.0, w - 1.0, out=cand[:, 0])
            np.clip(cand[:, 1], 0.0, h - 1.0, out=cand[:, 1])
            step = np.sqrt(np.max(np.sum((cand - xy) ** 2, axis=1)))
            if step > trust:
                continue
            e1 = snake_energy(cand, field, alpha, beta)
            if e1 <= e0:
                accepted = True
                break
        if not accepted:
            return xy, np.array(energies), STALLED, it
        xy, e0 = cand, e1
        energies.append(e1)
        if step < tol:
            return xy, np.array(energies), CONVERGED, it + 1
    return xy, np.array(energies), RUNNING, n_iters


def smo_solve(K, y, C, tol, max_iter):
    """Soft-margin SVM dual by pairwise (SMO) updates, second-order working-set selection.

    Minimizes ``0.5 a'Qa - sum(a)`` with ``Q = (y y') * K``, ``0 <= a <= C``,
    ``y'a = 0``.  Stops when the maximal KKT violation drops below ``tol``.
    Returns ``(alpha, grad, iterations)`` where ``grad = Q a - 1``.
    """
    n = y.shape[0]
    y = y.astype(float)
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    eps_tau = 1e-12
    it = 0
    while it < max_iter:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        gmax = yG[i]
        gmin = np.min(np.where(low, yG, np.inf))
        if gmax - gmin < tol:
            break
        b = gmax - yG
        a = QD[i] + QD - 2.0 * K[i]
        a = np.where(a > 0, a, eps_tau)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        Qi = y[i] * y * K[i]
        Qj = y[j] * y * K[j]
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qi[j]
            if quad <= 0:
                quad = eps_tau
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            else:
                if ni < 0:
                    ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            else:
                if nj > C:
                    nj, ni = C, C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qi[j]
            if quad <= 0:
                quad = eps_tau
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            else:
                if nj < 0:
                    nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            else:
                if ni < 0:
                    ni, nj = 0.0, total
        alpha[i], alpha[j] = ni, nj
        G += Qi * (ni - ai) + Qj * (nj - aj)
        it += 1
    return alpha, G, it


def fill_polygon(xs, ys, height, width):
    """Even-odd fill; a pixel is set when its center is inside or on an edge."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    out = np.zeros((height, width), dtype=bool)
    n = xs.size
    if n < 3 or height == 0 or width == 0:
        return out
    x0, y0 = xs, ys
    x1, y1 = np.roll(xs, -1), np.roll(ys, -1)
    rows = np.arange(height, dtype=float)[:, None]
    lo = np.minimum(y0, y1)
    hi = np.maximum(y0, y1)
    # half-open rule for parity: an edge counts on rows lo <= y < hi
    active = (rows >= lo) & (rows < hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rows - y0) / (y1 - y0)
    xcross = np.where(active, x0 + t * (x1 - x0), np.inf)
    xcross.sort(axis=1)
    counts = active.sum(axis=1)
    for r in np.nonzero(counts)[0]:
        xc = xcross[r, :counts[r]]
        for k in range(0, counts[r] - 1, 2):
            a = int(np.ceil(xc[k] - 1e-9))
            b = int(np.floor(xc[k + 1] + 1e-9))
            a, b = max(a, 0), min(b, width - 1)
            if a <= b:
                out[r, a:b + 1] = True
    # pixel centers lying exactly on an edge (horizontal edges, vertices, ...)
    for k in range(n):
        ya, yb = y0[k], y1[k]
        xa, xb = x0[k], x1[k]
        r_lo = max(int(np.ceil(min(ya, yb) - 1e-9)), 0)
        r_hi = min(int(np.floor(max(ya, yb) + 1e-9)), height - 1)
        if r_lo > r_hi:
            continue
        if abs(yb - ya) < 1e-12:
            c_lo = max(int(np.ceil(min(xa, xb) - 1e-9)), 0)
            c_hi = min(int(np.floor(max(xa, xb) + 1e-9)), width - 1)
            if c_lo <= c_hi and abs(ya - round(ya)) < 1e-9:
                out[r_lo, c_lo:c_hi + 1] = True
            continue
        rr = np.arange(r_lo, r_hi + 1)
        xx = xa + (rr - ya) / (yb - ya) * (xb - xa)
        on = np.abs(xx - np.round(xx)) < 1e-9
        cc = np.round(xx[on]).astype(int)
        keep = (cc >= 0) & (cc < width)
        out[rr[on][keep], cc[keep]] = True
    return out
