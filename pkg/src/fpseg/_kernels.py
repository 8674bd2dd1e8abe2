"""Numba kernels for the piecewise-convex function algebra.

A piecewise function is a packed float64 array of shape (n_pieces, 8); each
row is one piece of

    square:   f(p) = A p^2 + B p + C          (p is the mean)
    poisson:  f(p) = A e^p + B p + C          (p is the log mean)

on [COL_LO, COL_HI], plus decoding metadata. Rows are sorted and contiguous
(COL_HI of row i equals COL_LO of row i+1); the lower limit of the first row
may be -inf for the poisson family. COL_PREV_MEAN is +inf ("equality
active", the previous segment shares this piece's argument), NaN (no
backpointer yet) or the previous segment's argument. COL_TAG tells the
decoder which change/edge produced the piece (-1 for none).

All kernels treat their inputs as immutable unless the name says otherwise.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

COL_LO = 0
COL_HI = 1
COL_A = 2
COL_B = 3
COL_C = 4
COL_PREV_END = 5
COL_PREV_MEAN = 6
COL_TAG = 7
NCOL = 8

LOSS_SQUARE = 0
LOSS_POISSON = 1

EQUALITY_ACTIVE = math.inf

# crossing points closer than this (in the argument) are merged
MERGE_TOL = 1e-10
# residual target for iterative root finding (tighter than the 1e-12 contract)
ROOT_ATOL = 1e-13


@njit(cache=True)
def piece_value(a, b, c, p, loss):
    """Evaluate one piece at p; p may be +-inf (limits taken)."""
    v = c
    if loss == LOSS_SQUARE:
        if a != 0.0:
            v += a * p * p
        if b != 0.0:
            v += b * p
    else:
        if a != 0.0:
            v += a * math.exp(p)
        if b != 0.0:
            v += b * p
    return v


@njit(cache=True)
def piece_argmin(a, b, c, lo, hi, loss):
    """Minimizer of one piece on [lo, hi] and the value there.

    Flat directions resolve to lo (smallest argument wins ties).
    """
    if loss == LOSS_SQUARE:
        if a > 0.0:
            p = -b / (2.0 * a)
            if p < lo:
                p = lo
            elif p > hi:
                p = hi
        elif b > 0.0:
            p = lo
        elif b < 0.0:
            p = hi
        else:
            p = lo
    else:
        if a > 0.0 and b < 0.0:
            p = math.log(-b / a)
            if p < lo:
                p = lo
            elif p > hi:
                p = hi
        elif b < 0.0:
            p = hi
        else:
            # increasing (a>0, b>=0) or flat
            p = lo
    return p, piece_value(a, b, c, p, loss)


@njit(cache=True)
def _roots_square(a, b, c, d):
    """Real solutions of a p^2 + b p + c = d, ascending. Returns (n, r1, r2)."""
    cc = c - d
    if a == 0.0:
        if b == 0.0:
            return 0, 0.0, 0.0
        r = -cc / b
        return 1, r, r
    disc = b * b - 4.0 * a * cc
    if disc < 0.0:
        return 0, 0.0, 0.0
    s = math.sqrt(disc)
    if b >= 0.0:
        q = -0.5 * (b + s)
    else:
        q = -0.5 * (b - s)
    r1 = q / a
    if q != 0.0:
        r2 = cc / q
    else:
        r2 = r1
    if r1 <= r2:
        return 2, r1, r2
    return 2, r2, r1


@njit(cache=True)
def _root_exp(a, b, c, xlo, xhi, xinit):
    """Root of a*e^x + b*x + c on a sign-changing bracket [xlo, xhi].

    Newton from xinit, falling back to bisection whenever the step leaves
    the bracket. The bracket endpoints must be finite.
    """
    flo = a * math.exp(xlo) + b * xlo + c
    x = xinit
    if not (xlo < x < xhi):
        x = 0.5 * (xlo + xhi)
    for _ in range(200):
        fx = a * math.exp(x) + b * x + c
        if abs(fx) <= ROOT_ATOL:
            return x
        if (fx > 0.0) == (flo > 0.0):
            xlo = x
            flo = fx
        else:
            xhi = x
        if xhi - xlo <= 1e-15 * (1.0 + abs(x)):
            return x
        dfx = a * math.exp(x) + b
        if dfx != 0.0:
            xn = x - fx / dfx
        else:
            xn = math.nan
        if not (xlo < xn < xhi):
            xn = 0.5 * (xlo + xhi)
        x = xn
    return x


@njit(cache=True)
def _root_loglin(a, b, c, mlo, mhi, minit):
    """Root of a*m + b*log(m) + c on a sign-changing bracket [mlo, mhi] > 0."""
    flo = a * mlo + b * math.log(mlo) + c
    m = minit
    if not (mlo < m < mhi):
        m = 0.5 * (mlo + mhi)
    for _ in range(200):
        fm = a * m + b * math.log(m) + c
        if abs(fm) <= ROOT_ATOL:
            return m
        if (fm > 0.0) == (flo > 0.0):
            mlo = m
            flo = fm
        else:
            mhi = m
        if mhi - mlo <= 1e-15 * (1.0 + abs(m)):
            return m
        dfm = a + b / m
        if dfm != 0.0:
            mn = m - fm / dfm
        else:
            mn = math.nan
        if not (mlo < mn < mhi):
            mn = 0.5 * (mlo + mhi)
        m = mn
    return m


@njit(cache=True)
def _roots_poisson(a, b, c, d):
    """Solutions of a e^p + b p + c = d for a cost piece (a >= 0, b <= 0).

    Returns (n, p1, p2) ascending in p (log-mean space). The smaller root is
    found in p-space, the larger in mean space, both by safeguarded Newton
    started where the relevant asymptote crosses d.
    """
    cc = c - d
    if a == 0.0:
        if b == 0.0:
            return 0, 0.0, 0.0
        r = -cc / b
        return 1, r, r
    if b == 0.0:
        # a e^p = -cc has one solution when -cc > 0
        if -cc <= 0.0:
            return 0, 0.0, 0.0
        r = math.log(-cc / a)
        return 1, r, r
    pm = math.log(-b / a)
    vm = a * math.exp(pm) + b * pm + c
    if vm > d:
        return 0, 0.0, 0.0
    if vm == d:
        return 1, pm, pm
    # smaller root, p-space: bracket leftward until positive
    step = 1.0
    xlo = pm - step
    for _ in range(300):
        if a * math.exp(xlo) + b * xlo + cc > 0.0:
            break
        step *= 2.0
        xlo -= step
    p1 = _root_exp(a, b, cc, xlo, pm, -cc / b)
    # larger root, mean space: bracket rightward until positive
    mm = -b / a
    mhi = 2.0 * mm + 1.0
    for _ in range(300):
        if a * mhi + b * math.log(mhi) + cc > 0.0:
            break
        mhi = 2.0 * mhi
    p2 = math.log(_root_loglin(a, b, cc, mm, mhi, -cc / a))
    return 2, p1, p2


@njit(cache=True)
def piece_roots(a, b, c, d, loss):
    """Solutions of piece(p) = d, ascending. Returns (n, r1, r2)."""
    if loss == LOSS_SQUARE:
        return _roots_square(a, b, c, d)
    return _roots_poisson(a, b, c, d)


@njit(cache=True)
def _emit(out, no, lo, hi, a, b, c, prev_end, prev_mean, tag):
    out[no, COL_LO] = lo
    out[no, COL_HI] = hi
    out[no, COL_A] = a
    out[no, COL_B] = b
    out[no, COL_C] = c
    out[no, COL_PREV_END] = prev_end
    out[no, COL_PREV_MEAN] = prev_mean
    out[no, COL_TAG] = tag
    return no + 1


@njit(cache=True)
def min_less_kernel(pieces, t_prev, tag, domain_hi, loss):
    """Running minimum from the left: out(p) = min_{x <= p} f(x).

    Scans left to right alternating between a "tracking" state (the running
    minimum equals f itself; pieces are copied with the equality flag) and a
    "level" state (the minimum so far is a constant carrying the minimizer).
    The output extends to domain_hi with the final level. All output pieces
    get prev_end = t_prev and the given tag.
    """
    m = pieces.shape[0]
    out = np.empty((2 * m + 2, NCOL))
    no = 0
    tracking = True
    level = math.inf
    level_at = math.nan
    level_start = math.nan
    fp = float(t_prev)
    ft = float(tag)
    for i in range(m):
        lo = pieces[i, COL_LO]
        hi = pieces[i, COL_HI]
        a = pieces[i, COL_A]
        b = pieces[i, COL_B]
        c = pieces[i, COL_C]
        cursor = lo
        for _ in range(8):
            if cursor >= hi:
                break
            if tracking:
                pm, vm = piece_argmin(a, b, c, cursor, hi, loss)
                if pm >= hi:
                    # still decreasing through the whole remainder
                    no = _emit(out, no, cursor, hi, a, b, c, fp,
                               EQUALITY_ACTIVE, ft)
                    cursor = hi
                else:
                    if pm > cursor:
                        no = _emit(out, no, cursor, pm, a, b, c, fp,
                                   EQUALITY_ACTIVE, ft)
                    tracking = False
                    level = vm
                    level_at = pm
                    level_start = pm
                    cursor = pm
            else:
                pm, vm = piece_argmin(a, b, c, cursor, hi, loss)
                if vm < level:
                    # f dips back under the level: descending crossing
                    n, r1, r2 = piece_roots(a, b, c, level, loss)
                    r = r1
                    if r < cursor:
                        r = cursor
                    elif r > pm:
                        r = pm
                    if r > level_start:
                        no = _emit(out, no, level_start, r, 0.0, 0.0, level,
                                   fp, level_at, ft)
                    tracking = True
                    cursor = r
                else:
                    cursor = hi
    if not tracking and domain_hi > level_start:
        no = _emit(out, no, level_start, domain_hi, 0.0, 0.0, level,
                   fp, level_at, ft)
    return out, no


@njit(cache=True)
def min_more_kernel(pieces, t_prev, tag, domain_lo, loss):
    """Running minimum from the right: out(p) = min_{x >= p} f(x).

    Mirror image of min_less_kernel: scans right to left, crossings use the
    larger root, and the final level extends down to domain_lo. Output rows
    are produced in descending order and reversed before returning.
    """
    m = pieces.shape[0]
    buf = np.empty((2 * m + 2, NCOL))
    no = 0
    tracking = True
    level = math.inf
    level_at = math.nan
    level_end = math.nan
    fp = float(t_prev)
    ft = float(tag)
    for i in range(m - 1, -1, -1):
        lo = pieces[i, COL_LO]
        hi = pieces[i, COL_HI]
        a = pieces[i, COL_A]
        b = pieces[i, COL_B]
        c = pieces[i, COL_C]
        cursor = hi
        for _ in range(8):
            if cursor <= lo:
                break
            if tracking:
                pm, vm = piece_argmin(a, b, c, lo, cursor, loss)
                if pm <= lo:
                    no = _emit(buf, no, lo, cursor, a, b, c, fp,
                               EQUALITY_ACTIVE, ft)
                    cursor = lo
                else:
                    if pm < cursor:
                        no = _emit(buf, no, pm, cursor, a, b, c, fp,
                                   EQUALITY_ACTIVE, ft)
                    tracking = False
                    level = vm
                    level_at = pm
                    level_end = pm
                    cursor = pm
            else:
                pm, vm = piece_argmin(a, b, c, lo, cursor, loss)
                if vm < level:
                    n, r1, r2 = piece_roots(a, b, c, level, loss)
                    r = r2
                    if r > cursor:
                        r = cursor
                    elif r < pm:
                        r = pm
                    if r < level_end:
                        no = _emit(buf, no, r, level_end, 0.0, 0.0, level,
                                   fp, level_at, ft)
                    tracking = True
                    cursor = r
                else:
                    cursor = lo
    if not tracking and domain_lo < level_end:
        no = _emit(buf, no, domain_lo, level_end, 0.0, 0.0, level,
                   fp, level_at, ft)
    out = np.empty((no, NCOL))
    for j in range(no):
        for k in range(NCOL):
            out[j, k] = buf[no - 1 - j, k]
    return out, no


@njit(cache=True)
def global_argmin_kernel(pieces, loss):
    """Minimum over all pieces: (piece index, argument, value).

    Ties resolve to the smallest argument (first piece scanned, lo-clamped
    minimizers within pieces).
    """
    best_i = 0
    best_p = math.nan
    best_v = math.inf
    for i in range(pieces.shape[0]):
        p, v = piece_argmin(pieces[i, COL_A], pieces[i, COL_B],
                            pieces[i, COL_C], pieces[i, COL_LO],
                            pieces[i, COL_HI], loss)
        if v < best_v:
            best_i = i
            best_p = p
            best_v = v
    return best_i, best_p, best_v


@njit(cache=True)
def min_const_kernel(pieces, t_prev, tag, domain_lo, domain_hi, loss):
    """Unconstrained-change operator: the global minimum as a single
    constant piece over the full domain, carrying the minimizer."""
    i, p, v = global_argmin_kernel(pieces, loss)
    out = np.empty((1, NCOL))
    _emit(out, 0, domain_lo, domain_hi, 0.0, 0.0, v,
          float(t_prev), p, float(tag))
    return out, 1


@njit(cache=True)
def scale_add_loss_kernel(pieces, scale, y, w, loss):
    """In place: pieces <- scale * pieces + w * loss(y, .)."""
    for i in range(pieces.shape[0]):
        a = scale * pieces[i, COL_A]
        b = scale * pieces[i, COL_B]
        c = scale * pieces[i, COL_C]
        if loss == LOSS_SQUARE:
            a += w
            b -= 2.0 * w * y
            c += w * y * y
        else:
            a += w
            b -= w * y
        pieces[i, COL_A] = a
        pieces[i, COL_B] = b
        pieces[i, COL_C] = c


@njit(cache=True)
def add_constant_kernel(pieces, v):
    """In place: pieces <- pieces + v (penalty terms)."""
    for i in range(pieces.shape[0]):
        pieces[i, COL_C] += v


@njit(cache=True)
def shift_clip_kernel(pieces, delta, domain_lo, domain_hi):
    """p -> f(p - delta) clipped to [domain_lo, domain_hi]; square only.

    Pieces shifted entirely outside the domain are dropped; the result may
    cover only part of the domain (the rest is infeasible / +inf).
    """
    m = pieces.shape[0]
    out = np.empty((m, NCOL))
    no = 0
    for i in range(m):
        nlo = pieces[i, COL_LO] + delta
        nhi = pieces[i, COL_HI] + delta
        if nhi <= domain_lo or nlo >= domain_hi:
            continue
        if nlo < domain_lo:
            nlo = domain_lo
        if nhi > domain_hi:
            nhi = domain_hi
        if nhi <= nlo:
            continue
        a = pieces[i, COL_A]
        b = pieces[i, COL_B]
        c = pieces[i, COL_C]
        no = _emit(out, no, nlo, nhi,
                   a, b - 2.0 * a * delta, a * delta * delta - b * delta + c,
                   pieces[i, COL_PREV_END], pieces[i, COL_PREV_MEAN],
                   pieces[i, COL_TAG])
    return out, no


@njit(cache=True)
def _interior(x0, x1):
    """A finite point strictly inside (x0, x1); x0 may be -inf."""
    if x0 == -math.inf:
        return x1 - 1.0
    return 0.5 * (x0 + x1)


@njit(cache=True)
def _diff_roots(da, db, dc, x0, x1, loss):
    """Roots of the piece difference da*basis + db*p + dc inside (x0, x1).

    The difference has at most one extremum for either family, so at most
    two roots. x0 may be -inf (poisson); x1 is finite. Returns (n, r1, r2).
    """
    if loss == LOSS_SQUARE:
        n, r1, r2 = _roots_square(da, db, dc, 0.0)
        k = 0
        o1 = 0.0
        o2 = 0.0
        if n >= 1 and x0 < r1 < x1:
            o1 = r1
            k = 1
        if n == 2 and r2 != r1 and x0 < r2 < x1:
            if k == 0:
                o1 = r2
            else:
                o2 = r2
            k += 1
        return k, o1, o2
    # poisson-basis difference: da e^p + db p + dc, arbitrary signs
    k = 0
    o1 = 0.0
    o2 = 0.0
    pe = math.nan
    if da != 0.0 and -db / da > 0.0:
        pe = math.log(-db / da)
    # split into monotone stretches
    n_cuts = 0
    cuts = np.empty(3)
    cuts[0] = x0
    n_cuts = 1
    if pe == pe and x0 < pe < x1:
        cuts[n_cuts] = pe
        n_cuts += 1
    cuts[n_cuts] = x1
    n_cuts += 1
    for j in range(n_cuts - 1):
        u0 = cuts[j]
        u1 = cuts[j + 1]
        v0 = piece_value(da, db, dc, u0, LOSS_POISSON)
        v1 = piece_value(da, db, dc, u1, LOSS_POISSON)
        if not ((v0 > 0.0 and v1 < 0.0) or (v0 < 0.0 and v1 > 0.0)):
            continue
        w0 = u0
        if w0 == -math.inf:
            # walk left from u1 until the sign matches the limit
            step = 1.0
            w0 = u1 - step
            for _ in range(300):
                vv = piece_value(da, db, dc, w0, LOSS_POISSON)
                if (vv > 0.0) == (v0 > 0.0) and vv != 0.0:
                    break
                step *= 2.0
                w0 -= step
        r = _root_exp(da, db, dc, w0, u1, 0.5 * (w0 + u1))
        if x0 < r < x1:
            if k == 0:
                o1 = r
            else:
                o2 = r
            k += 1
    if k == 2 and o2 < o1:
        t = o1
        o1 = o2
        o2 = t
    return k, o1, o2


@njit(cache=True)
def min_of_two_kernel(f1, f2, prefer_second, loss):
    """Pointwise minimum of two piecewise functions on a shared domain.

    Coverage may differ (clipped inputs); where only one input is defined it
    wins outright. On ties (identical coefficients, or a vanishing
    difference at the probe point) the flagged input wins. Winner rows copy
    all metadata; rows cut from the same source piece are re-merged.
    """
    m1 = f1.shape[0]
    m2 = f2.shape[0]
    # merged, deduplicated breakpoints of both functions
    b1 = np.empty(m1 + 1)
    for i in range(m1):
        b1[i] = f1[i, COL_LO]
    if m1 > 0:
        b1[m1] = f1[m1 - 1, COL_HI]
    b2 = np.empty(m2 + 1)
    for i in range(m2):
        b2[i] = f2[i, COL_LO]
    if m2 > 0:
        b2[m2] = f2[m2 - 1, COL_HI]
    n1 = m1 + 1 if m1 > 0 else 0
    n2 = m2 + 1 if m2 > 0 else 0
    xs = np.empty(n1 + n2)
    nx = 0
    i1 = 0
    i2 = 0
    while i1 < n1 or i2 < n2:
        v1 = b1[i1] if i1 < n1 else math.inf
        v2 = b2[i2] if i2 < n2 else math.inf
        if v1 <= v2:
            v = v1
            i1 += 1
            if v1 == v2:
                i2 += 1
        else:
            v = v2
            i2 += 1
        if nx == 0 or v > xs[nx - 1]:
            xs[nx] = v
            nx += 1
    cap = 3 * (nx + 2)
    out = np.empty((cap, NCOL))
    src_fn = np.empty(cap, dtype=np.int64)
    src_ix = np.empty(cap, dtype=np.int64)
    no = 0
    i1 = 0
    i2 = 0
    for j in range(nx - 1):
        x0 = xs[j]
        x1 = xs[j + 1]
        if x1 <= x0:
            continue
        while i1 < m1 and f1[i1, COL_HI] <= x0:
            i1 += 1
        while i2 < m2 and f2[i2, COL_HI] <= x0:
            i2 += 1
        has1 = i1 < m1 and f1[i1, COL_LO] <= x0 and x1 <= f1[i1, COL_HI]
        has2 = i2 < m2 and f2[i2, COL_LO] <= x0 and x1 <= f2[i2, COL_HI]
        if not has1 and not has2:
            continue
        if has1 and not has2:
            no = _emit(out, no, x0, x1, f1[i1, COL_A], f1[i1, COL_B],
                       f1[i1, COL_C], f1[i1, COL_PREV_END],
                       f1[i1, COL_PREV_MEAN], f1[i1, COL_TAG])
            src_fn[no - 1] = 1
            src_ix[no - 1] = i1
            continue
        if has2 and not has1:
            no = _emit(out, no, x0, x1, f2[i2, COL_A], f2[i2, COL_B],
                       f2[i2, COL_C], f2[i2, COL_PREV_END],
                       f2[i2, COL_PREV_MEAN], f2[i2, COL_TAG])
            src_fn[no - 1] = 2
            src_ix[no - 1] = i2
            continue
        da = f1[i1, COL_A] - f2[i2, COL_A]
        db = f1[i1, COL_B] - f2[i2, COL_B]
        dc = f1[i1, COL_C] - f2[i2, COL_C]
        cut0 = x0
        cut1 = x1
        cut2 = x1
        if da != 0.0 or db != 0.0 or dc != 0.0:
            nr, r1, r2 = _diff_roots(da, db, dc, x0, x1, loss)
            if nr >= 1 and r1 - x0 > MERGE_TOL and x1 - r1 > MERGE_TOL:
                cut1 = r1
            if (nr == 2 and r2 - x0 > MERGE_TOL and x1 - r2 > MERGE_TOL
                    and r2 - cut1 > MERGE_TOL):
                cut2 = r2
        lo_cur = cut0
        for seg in range(3):
            if seg == 0:
                hi_cur = cut1
            elif seg == 1:
                hi_cur = cut2
            else:
                hi_cur = x1
            if hi_cur <= lo_cur:
                continue
            mid = _interior(lo_cur, hi_cur)
            dmid = piece_value(da, db, dc, mid, loss)
            if dmid == 0.0:
                # the probe can land on an isolated zero of the difference
                # (a tangency at the exact midpoint, say); the difference has
                # at most two roots, so two more samples settle the sign
                dmid = piece_value(da, db, dc, _interior(lo_cur, mid), loss)
                if dmid == 0.0:
                    dmid = piece_value(da, db, dc, _interior(mid, hi_cur),
                                       loss)
            take2 = dmid > 0.0 or (dmid == 0.0 and prefer_second)
            if take2:
                no = _emit(out, no, lo_cur, hi_cur, f2[i2, COL_A],
                           f2[i2, COL_B], f2[i2, COL_C],
                           f2[i2, COL_PREV_END], f2[i2, COL_PREV_MEAN],
                           f2[i2, COL_TAG])
                src_fn[no - 1] = 2
                src_ix[no - 1] = i2
            else:
                no = _emit(out, no, lo_cur, hi_cur, f1[i1, COL_A],
                           f1[i1, COL_B], f1[i1, COL_C],
                           f1[i1, COL_PREV_END], f1[i1, COL_PREV_MEAN],
                           f1[i1, COL_TAG])
                src_fn[no - 1] = 1
                src_ix[no - 1] = i1
            lo_cur = hi_cur
    # re-merge rows cut from the same source piece
    w = 0
    for r in range(no):
        if (w > 0 and src_fn[w - 1] == src_fn[r] and src_ix[w - 1] == src_ix[r]
                and out[w - 1, COL_HI] == out[r, COL_LO]):
            out[w - 1, COL_HI] = out[r, COL_HI]
            continue
        if w != r:
            for k in range(NCOL):
                out[w, k] = out[r, k]
            src_fn[w] = src_fn[r]
            src_ix[w] = src_ix[r]
        w += 1
    return out, w


@njit(cache=True)
def eval_many(pieces, ps, loss):
    """Evaluate the piecewise function at sorted-or-not points ps.

    Points outside the covered span evaluate to +inf.
    """
    m = pieces.shape[0]
    out = np.empty(ps.shape[0])
    for j in range(ps.shape[0]):
        p = ps[j]
        if m == 0 or p < pieces[0, COL_LO] or p > pieces[m - 1, COL_HI]:
            out[j] = math.inf
            continue
        lo = 0
        hi = m - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if pieces[mid, COL_HI] >= p:
                hi = mid
            else:
                lo = mid + 1
        out[j] = piece_value(pieces[lo, COL_A], pieces[lo, COL_B],
                             pieces[lo, COL_C], p, loss)
    return out
