#cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Hot loops only: the per-step dissemination realization, the paired-move
connection trials, and the two-time position sampler. Each mirrors the
pure-Python implementation draw for draw (see ``core.RawStream`` and
``mobility`` for the protocol), so results are bit-identical across
backends for any seed.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.stdint cimport int32_t, int64_t, uint64_t
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t

import numpy as np

from floodsim.core import agent_streams
from floodsim.mobility import levy_table

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil
    int __builtin_ctzll(unsigned long long) nogil

cdef double INV_2_53 = 1.0 / 9007199254740992.0

BACKEND_NAME = "compiled"

# C-level policy codes, usable inside nogil sections.
cdef enum:
    K_RW = 0
    K_WAYPOINT = 1
    K_LEVY = 2

# Python-visible mirror, shared with the pure-Python engine.
POLICY_RW = K_RW
POLICY_WAYPOINT = K_WAYPOINT
POLICY_LEVY = K_LEVY


# ---------------------------------------------------------------------------
# draw primitives (contract shared with core.RawStream)
# ---------------------------------------------------------------------------

cdef inline uint64_t _next(bitgen_t *bg) nogil:
    return bg.next_uint64(bg.state)


cdef inline uint64_t _bounded(bitgen_t *bg, uint64_t k) nogil:
    cdef uint64_t mask, v
    if k <= 1:
        return 0
    mask = k - 1
    mask |= mask >> 1
    mask |= mask >> 2
    mask |= mask >> 4
    mask |= mask >> 8
    mask |= mask >> 16
    mask |= mask >> 32
    while True:
        v = _next(bg) & mask
        if v < k:
            return v


cdef inline double _unit(bitgen_t *bg) nogil:
    return <double>(_next(bg) >> 11) * INV_2_53


cdef inline bitgen_t *_state(object bit_generator):
    return <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )


# ---------------------------------------------------------------------------
# move construction
# ---------------------------------------------------------------------------

cdef struct CMove:
    int ox, oy            # origin node
    int tx, ty            # destination node
    int d1x, d1y, l1      # first leg: unit step and length
    int d2x, d2y, l2      # second leg (length 0 for single-leg moves)
    long long start
    long long dur


cdef struct LevyTab:
    const double *cum
    const int64_t *counts
    const int64_t *cstart
    const int32_t *offx
    const int32_t *offy
    int k


cdef inline void _axis_leg(bitgen_t *bg, int raw, int n, int *sgn, int *length) nogil:
    cdef int back
    if raw == 0:
        sgn[0] = 0
        length[0] = 0
        return
    back = n - raw
    if raw == back:
        sgn[0] = 1 if _bounded(bg, 2) == 0 else -1
        length[0] = raw
    elif raw < back:
        sgn[0] = 1
        length[0] = raw
    else:
        sgn[0] = -1
        length[0] = back


cdef inline void _build_move(bitgen_t *bg, int n, int px, int py, int policy,
                             LevyTab *lt, long long t, CMove *mv) nogil:
    cdef long long idx, sf
    cdef int k, last, tx, ty, raw_x, raw_y, two, leg_bit
    cdef int sx = 0, lx = 0, sy = 0, ly = 0
    cdef double target
    if policy == K_LEVY:
        target = _unit(bg) * lt.cum[lt.k - 1]
        k = 0
        last = lt.k - 1
        while k < last and target >= lt.cum[k]:
            k += 1
        idx = lt.cstart[k] + <long long>_bounded(bg, <uint64_t>lt.counts[k])
        tx = px + lt.offx[idx]
        if tx >= n:
            tx -= n
        ty = py + lt.offy[idx]
        if ty >= n:
            ty -= n
    else:
        idx = <long long>_bounded(bg, <uint64_t>(n * n - 1))
        sf = px * n + py
        if idx >= sf:
            idx += 1
        tx = <int>(idx / n)
        ty = <int>(idx - tx * n)

    raw_x = tx - px
    if raw_x < 0:
        raw_x += n
    raw_y = ty - py
    if raw_y < 0:
        raw_y += n
    two = raw_x != 0 and raw_y != 0
    leg_bit = 0
    if two:
        leg_bit = <int>_bounded(bg, 2)
    _axis_leg(bg, raw_x, n, &sx, &lx)
    _axis_leg(bg, raw_y, n, &sy, &ly)

    mv.ox = px
    mv.oy = py
    mv.tx = tx
    mv.ty = ty
    mv.start = t
    mv.dur = lx + ly
    if two and leg_bit == 1:
        mv.d1x = 0; mv.d1y = sy; mv.l1 = ly
        mv.d2x = sx; mv.d2y = 0; mv.l2 = lx
    elif two:
        mv.d1x = sx; mv.d1y = 0; mv.l1 = lx
        mv.d2x = 0; mv.d2y = sy; mv.l2 = ly
    elif lx > 0:
        mv.d1x = sx; mv.d1y = 0; mv.l1 = lx
        mv.d2x = 0; mv.d2y = 0; mv.l2 = 0
    else:
        mv.d1x = 0; mv.d1y = sy; mv.l1 = ly
        mv.d2x = 0; mv.d2y = 0; mv.l2 = 0


cdef inline int _tdist(int ax, int ay, int bx, int by, int n) nogil:
    cdef int dx = ax - bx
    cdef int dy = ay - by
    if dx < 0:
        dx = -dx
    if n - dx < dx:
        dx = n - dx
    if dy < 0:
        dy = -dy
    if n - dy < dy:
        dy = n - dy
    return dx + dy


# ---------------------------------------------------------------------------
# union-find over agents touched in the current step
# ---------------------------------------------------------------------------

cdef struct Share:
    int32_t *parent
    int64_t *tstamp
    int32_t *touched
    int ntouched
    int64_t stamp


cdef inline void _touch(Share *sh, int a) nogil:
    if sh.tstamp[a] != sh.stamp:
        sh.tstamp[a] = sh.stamp
        sh.parent[a] = a
        sh.touched[sh.ntouched] = a
        sh.ntouched += 1


cdef inline int _find(Share *sh, int a) nogil:
    while sh.parent[a] != a:
        sh.parent[a] = sh.parent[sh.parent[a]]
        a = sh.parent[a]
    return a


cdef inline void _union(Share *sh, int a, int b) nogil:
    cdef int ra, rb
    _touch(sh, a)
    _touch(sh, b)
    ra = _find(sh, a)
    rb = _find(sh, b)
    if ra != rb:
        sh.parent[rb] = ra


# ---------------------------------------------------------------------------
# realization loop
# ---------------------------------------------------------------------------

def run_grid_realization(int n, int m, int policy, double alpha, int radius,
                         long long max_steps, object seed):
    """Compiled twin of ``_engine_py.run_grid_realization``."""
    cdef int ncell, nn
    if radius > 0:
        ncell = n // radius
        if ncell < 1:
            ncell = 1
        nn = ncell * ncell
    else:
        ncell = 0
        nn = n * n

    bitgens = agent_streams(seed, m)
    cdef bitgen_t **gens = <bitgen_t **> malloc(m * sizeof(void *))
    if gens == NULL:
        raise MemoryError
    cdef int i
    for i in range(m):
        gens[i] = _state(bitgens[i])

    # Distance-decay tables (dummy one-element arrays when unused).
    if policy == K_LEVY:
        tab = levy_table(n, alpha)
        cum_a = np.ascontiguousarray(tab.cum_weights, dtype=np.float64)
        counts_a = np.ascontiguousarray(tab.counts, dtype=np.int64)
        cstart_a = np.ascontiguousarray(tab.class_start, dtype=np.int64)
        offx_a = np.ascontiguousarray(tab.off_x, dtype=np.int32)
        offy_a = np.ascontiguousarray(tab.off_y, dtype=np.int32)
    else:
        cum_a = np.ones(1)
        counts_a = np.ones(1, dtype=np.int64)
        cstart_a = np.zeros(2, dtype=np.int64)
        offx_a = np.zeros(1, dtype=np.int32)
        offy_a = np.zeros(1, dtype=np.int32)
    cdef const double[::1] cum_v = cum_a
    cdef const int64_t[::1] counts_v = counts_a
    cdef const int64_t[::1] cstart_v = cstart_a
    cdef const int32_t[::1] offx_v = offx_a
    cdef const int32_t[::1] offy_v = offy_a
    cdef LevyTab lt
    lt.cum = &cum_v[0]
    lt.counts = &counts_v[0]
    lt.cstart = &cstart_v[0]
    lt.offx = &offx_v[0]
    lt.offy = &offy_v[0]
    lt.k = cum_a.shape[0]

    cdef int W = (m + 63) >> 6
    px_a = np.zeros(m, dtype=np.int32)
    py_a = np.zeros(m, dtype=np.int32)
    qx_a = np.zeros(m, dtype=np.int32)
    qy_a = np.zeros(m, dtype=np.int32)
    d1x_a = np.zeros(m, dtype=np.int32)
    d1y_a = np.zeros(m, dtype=np.int32)
    r1_a = np.zeros(m, dtype=np.int32)
    d2x_a = np.zeros(m, dtype=np.int32)
    d2y_a = np.zeros(m, dtype=np.int32)
    r2_a = np.zeros(m, dtype=np.int32)
    info_a = np.zeros((m, W), dtype=np.uint64)
    knower_a = np.zeros(m, dtype=np.int32)
    bts_a = np.full(m, -1, dtype=np.int64)
    comp_a = np.zeros(W, dtype=np.uint64)

    chead_a = np.zeros(nn, dtype=np.int32)
    cstamp_a = np.zeros(nn, dtype=np.int64)
    ccnt_a = np.zeros(nn, dtype=np.int32)
    cnext_a = np.zeros(m, dtype=np.int32)
    phead_a = np.zeros(nn, dtype=np.int32)
    pstamp_a = np.zeros(nn, dtype=np.int64)
    pnext_a = np.zeros(m, dtype=np.int32)

    parent_a = np.zeros(m, dtype=np.int32)
    tstamp_a = np.zeros(m, dtype=np.int64)
    touched_a = np.zeros(m, dtype=np.int32)
    rhead_a = np.zeros(m, dtype=np.int32)
    rnext_a = np.zeros(m, dtype=np.int32)
    rstamp_a = np.zeros(m, dtype=np.int64)
    rootlist_a = np.zeros(m, dtype=np.int32)

    cdef int32_t[::1] px = px_a, py = py_a, qx = qx_a, qy = qy_a
    cdef int32_t[::1] d1x = d1x_a, d1y = d1y_a, r1 = r1_a
    cdef int32_t[::1] d2x = d2x_a, d2y = d2y_a, r2 = r2_a
    cdef uint64_t[:, ::1] info = info_a
    cdef int32_t[::1] knower = knower_a
    cdef int64_t[::1] bts = bts_a
    cdef uint64_t[::1] comp = comp_a
    cdef int32_t[::1] chead = chead_a, ccnt = ccnt_a, cnext = cnext_a
    cdef int64_t[::1] cstamp = cstamp_a
    cdef int32_t[::1] phead = phead_a, pnext = pnext_a
    cdef int64_t[::1] pstamp = pstamp_a
    cdef int32_t[::1] parent = parent_a, touched = touched_a
    cdef int64_t[::1] tstamp = tstamp_a
    cdef int32_t[::1] rhead = rhead_a, rnext = rnext_a, rootlist = rootlist_a
    cdef int64_t[::1] rstamp = rstamp_a

    cdef Share sh
    sh.parent = &parent[0]
    sh.tstamp = &tstamp[0]
    sh.touched = &touched[0]
    sh.ntouched = 0
    sh.stamp = 0

    cdef long long t = 0, flood = -1, steps_run = 0, contacts = 0
    cdef long long total_known = m, target_known = <long long> m * m
    cdef int j, b, c, c2, a, root, nroots, ri, w, cx, cy, ddx, ddy, nseen, dup
    cdef int d
    cdef uint64_t diff, word
    cdef CMove mv
    cdef int64_t seen[9]
    cdef bint flooded = False

    try:
        with nogil:
            for i in range(m):
                px[i] = <int>_bounded(gens[i], <uint64_t>n)
                py[i] = <int>_bounded(gens[i], <uint64_t>n)
                info[i, i >> 6] = (<uint64_t>1) << (i & 63)
                knower[i] = 1
            if m == 1:
                bts[0] = 0
                flood = 0
                flooded = True

            while not flooded:
                # --- contact detection at time t ---
                sh.stamp += 1
                sh.ntouched = 0
                if radius == 0:
                    for i in range(m):
                        c = px[i] * n + py[i]
                        if cstamp[c] != sh.stamp:
                            cstamp[c] = sh.stamp
                            chead[c] = -1
                            ccnt[c] = 0
                        if ccnt[c] > 0:
                            contacts += ccnt[c]
                            _union(&sh, i, chead[c])
                        chead[c] = i
                        ccnt[c] += 1
                    if t > 0:
                        # swaps: b finished where i started and vice versa
                        for i in range(m):
                            c = qx[i] * n + qy[i]
                            if pstamp[c] != sh.stamp:
                                pstamp[c] = sh.stamp
                                phead[c] = -1
                            pnext[i] = phead[c]
                            phead[c] = i
                        for i in range(m):
                            c = px[i] * n + py[i]
                            if pstamp[c] == sh.stamp:
                                j = phead[c]
                                while j != -1:
                                    if j > i and px[j] == qx[i] and py[j] == qy[i]:
                                        contacts += 1
                                        _union(&sh, i, j)
                                    j = pnext[j]
                else:
                    for i in range(m):
                        c = (px[i] * ncell // n) * ncell + (py[i] * ncell // n)
                        if cstamp[c] != sh.stamp:
                            cstamp[c] = sh.stamp
                            chead[c] = -1
                        cnext[i] = chead[c]
                        chead[c] = i
                    for i in range(m):
                        cx = px[i] * ncell // n
                        cy = py[i] * ncell // n
                        nseen = 0
                        for ddx in range(-1, 2):
                            for ddy in range(-1, 2):
                                c2 = (
                                    ((cx + ddx + ncell) % ncell) * ncell
                                    + ((cy + ddy + ncell) % ncell)
                                )
                                dup = 0
                                for w in range(nseen):
                                    if seen[w] == c2:
                                        dup = 1
                                        break
                                if dup:
                                    continue
                                seen[nseen] = c2
                                nseen += 1
                                if cstamp[c2] != sh.stamp:
                                    continue
                                j = chead[c2]
                                while j != -1:
                                    if j < i and _tdist(
                                        px[i], py[i], px[j], py[j], n
                                    ) <= radius:
                                        contacts += 1
                                        _union(&sh, i, j)
                                    j = cnext[j]

                # --- share within contact components ---
                if sh.ntouched > 0:
                    nroots = 0
                    for ri in range(sh.ntouched):
                        a = touched[ri]
                        root = _find(&sh, a)
                        if rstamp[root] != sh.stamp:
                            rstamp[root] = sh.stamp
                            rhead[root] = -1
                            rootlist[nroots] = root
                            nroots += 1
                        rnext[a] = rhead[root]
                        rhead[root] = a
                    for ri in range(nroots):
                        root = rootlist[ri]
                        for w in range(W):
                            comp[w] = 0
                        a = rhead[root]
                        while a != -1:
                            for w in range(W):
                                comp[w] |= info[a, w]
                            a = rnext[a]
                        a = rhead[root]
                        while a != -1:
                            for w in range(W):
                                diff = comp[w] & ~info[a, w]
                                if diff != 0:
                                    total_known += __builtin_popcountll(diff)
                                    while diff != 0:
                                        b = (w << 6) + __builtin_ctzll(diff)
                                        knower[b] += 1
                                        if knower[b] == m:
                                            bts[b] = t
                                        diff &= diff - 1
                                    info[a, w] = comp[w]
                            a = rnext[a]
                    if total_known == target_known:
                        flood = t
                        flooded = True

                if flooded or t >= max_steps:
                    break

                # --- advance every agent one step ---
                t += 1
                for i in range(m):
                    qx[i] = px[i]
                    qy[i] = py[i]
                for i in range(m):
                    if policy == K_RW:
                        d = <int>_bounded(gens[i], 4)
                        if d == 0:
                            px[i] += 1
                        elif d == 1:
                            px[i] -= 1
                        elif d == 2:
                            py[i] += 1
                        else:
                            py[i] -= 1
                    else:
                        if r1[i] == 0 and r2[i] == 0:
                            _build_move(
                                gens[i], n, px[i], py[i], policy, &lt, t - 1, &mv
                            )
                            d1x[i] = mv.d1x
                            d1y[i] = mv.d1y
                            r1[i] = mv.l1
                            d2x[i] = mv.d2x
                            d2y[i] = mv.d2y
                            r2[i] = mv.l2
                        if r1[i] > 0:
                            px[i] += d1x[i]
                            py[i] += d1y[i]
                            r1[i] -= 1
                        else:
                            px[i] += d2x[i]
                            py[i] += d2y[i]
                            r2[i] -= 1
                    if px[i] >= n:
                        px[i] -= n
                    elif px[i] < 0:
                        px[i] += n
                    if py[i] >= n:
                        py[i] -= n
                    elif py[i] < 0:
                        py[i] += n

            steps_run = flood if flooded else max_steps
    finally:
        free(gens)

    return int(flood), bts_a, int(contacts), int(steps_run)


# ---------------------------------------------------------------------------
# paired-move connection trials
# ---------------------------------------------------------------------------

cdef inline void _at_doubled(CMove *mv, long long t, int n2,
                             int *x, int *y, int *rem1, int *rem2) nogil:
    cdef long long u = 2 * (t - mv.start)
    cdef long long a1 = u
    if a1 > 2 * mv.l1:
        a1 = 2 * mv.l1
    cdef long long a2 = u - a1
    cdef long long vx = 2 * mv.ox + mv.d1x * a1 + mv.d2x * a2
    cdef long long vy = 2 * mv.oy + mv.d1y * a1 + mv.d2y * a2
    vx %= n2
    if vx < 0:
        vx += n2
    vy %= n2
    if vy < 0:
        vy += n2
    x[0] = <int>vx
    y[0] = <int>vy
    rem1[0] = <int>(2 * mv.l1 - a1)
    rem2[0] = <int>(2 * mv.l2 - a2)


cdef inline int _collocate(CMove *a, CMove *b, long long w0, long long w1,
                           int n) nogil:
    """1 iff the two agents share a node or cross mid-edge in [w0, w1)."""
    cdef int n2 = 2 * n
    cdef long long nsteps = 2 * (w1 - w0), s
    if nsteps <= 0:
        return 0
    cdef int xa, ya, ra1, ra2, xb, yb, rb1, rb2
    _at_doubled(a, w0, n2, &xa, &ya, &ra1, &ra2)
    _at_doubled(b, w0, n2, &xb, &yb, &rb1, &rb2)
    for s in range(nsteps):
        if xa == xb and ya == yb:
            return 1
        if ra1 > 0:
            xa += a.d1x
            ya += a.d1y
            ra1 -= 1
        elif ra2 > 0:
            xa += a.d2x
            ya += a.d2y
            ra2 -= 1
        if xa >= n2:
            xa -= n2
        elif xa < 0:
            xa += n2
        if ya >= n2:
            ya -= n2
        elif ya < 0:
            ya += n2
        if rb1 > 0:
            xb += b.d1x
            yb += b.d1y
            rb1 -= 1
        elif rb2 > 0:
            xb += b.d2x
            yb += b.d2y
            rb2 -= 1
        if xb >= n2:
            xb -= n2
        elif xb < 0:
            xb += n2
        if yb >= n2:
            yb -= n2
        elif yb < 0:
            yb += n2
    return 0


cdef inline int _pair_trial(bitgen_t *bg, int n) nogil:
    cdef CMove ma, mb, mb2
    cdef int px, py
    cdef long long t, si, ei, seg1_end, w0, w1

    # first agent: its first move starting at or after n steps of burn-in
    px = <int>_bounded(bg, <uint64_t>n)
    py = <int>_bounded(bg, <uint64_t>n)
    t = 0
    while True:
        _build_move(bg, n, px, py, K_WAYPOINT, NULL, t, &ma)
        if t >= n:
            break
        t += ma.dur
        px = ma.tx
        py = ma.ty
    si = ma.start
    ei = si + ma.dur

    # second agent: the move active when the first one's starts, then the next
    px = <int>_bounded(bg, <uint64_t>n)
    py = <int>_bounded(bg, <uint64_t>n)
    _build_move(bg, n, px, py, K_WAYPOINT, NULL, 0, &mb)
    while mb.start + mb.dur <= si:
        px = mb.tx
        py = mb.ty
        _build_move(bg, n, px, py, K_WAYPOINT, NULL, mb.start + mb.dur, &mb)
    px = mb.tx
    py = mb.ty
    _build_move(bg, n, px, py, K_WAYPOINT, NULL, mb.start + mb.dur, &mb2)

    seg1_end = si + ma.l1
    if mb.start + mb.dur >= seg1_end:
        w0 = si
        w1 = ei if ei < mb.start + mb.dur else mb.start + mb.dur
        return _collocate(&ma, &mb, w0, w1, n)
    w0 = mb2.start if mb2.start > si else si
    w1 = ei if ei < mb2.start + mb2.dur else mb2.start + mb2.dur
    return _collocate(&ma, &mb2, w0, w1, n)


def pair_connection_trials(int n, long long trials, object bit_generator):
    """Count trials in which two agents with strongly overlapping moves meet."""
    cdef bitgen_t *bg = _state(bit_generator)
    cdef long long hits = 0, k
    with nogil:
        for k in range(trials):
            hits += _pair_trial(bg, n)
    return int(hits)


# ---------------------------------------------------------------------------
# two-time position sampler
# ---------------------------------------------------------------------------

def mrwp_two_time_positions(int n, long long t1, long long t2,
                            long long trials, object bit_generator):
    """Positions of one waypoint agent at absolute times t1 and t2 (t1 <= t2).

    Returns an int32 array of shape (trials, 4): x(t1), y(t1), x(t2), y(t2).
    """
    if t2 < t1:
        raise ValueError("t2 must be >= t1")
    out_a = np.empty((trials, 4), dtype=np.int32)
    cdef int32_t[:, ::1] out = out_a
    cdef bitgen_t *bg = _state(bit_generator)
    cdef long long k, t, target, u, a1, a2
    cdef int px, py, have, phase
    cdef long long rx, ry
    cdef CMove mv
    with nogil:
        for k in range(trials):
            px = <int>_bounded(bg, <uint64_t>n)
            py = <int>_bounded(bg, <uint64_t>n)
            t = 0
            have = 0
            for phase in range(2):
                target = t1 if phase == 0 else t2
                while True:
                    if have == 0:
                        _build_move(bg, n, px, py, K_WAYPOINT, NULL, t, &mv)
                        have = 1
                    if t + mv.dur > target:
                        break
                    t += mv.dur
                    px = mv.tx
                    py = mv.ty
                    have = 0
                u = target - t
                a1 = u if u < mv.l1 else mv.l1
                a2 = u - a1
                rx = (mv.ox + mv.d1x * a1 + mv.d2x * a2) % n
                if rx < 0:
                    rx += n
                ry = (mv.oy + mv.d1y * a1 + mv.d2y * a2) % n
                if ry < 0:
                    ry += n
                out[k, 2 * phase] = <int32_t>rx
                out[k, 2 * phase + 1] = <int32_t>ry
    return out_a


# ---------------------------------------------------------------------------
# draw-contract probes (used by the cross-backend tests)
# ---------------------------------------------------------------------------

def bounded_draws(object bit_generator, unsigned long long k, long long count):
    out_a = np.empty(count, dtype=np.uint64)
    cdef uint64_t[::1] out = out_a
    cdef bitgen_t *bg = _state(bit_generator)
    cdef long long i
    with nogil:
        for i in range(count):
            out[i] = _bounded(bg, k)
    return out_a


def unit_draws(object bit_generator, long long count):
    out_a = np.empty(count, dtype=np.float64)
    cdef double[::1] out = out_a
    cdef bitgen_t *bg = _state(bit_generator)
    cdef long long i
    with nogil:
        for i in range(count):
            out[i] = _unit(bg)
    return out_a
