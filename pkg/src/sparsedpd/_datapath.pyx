# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of sparsedpd.datapath.FixedPointDatapath.run.

Same integer semantics as the pure-Python kernel; every intermediate fits
comfortably in int64.  Arithmetic right shifts on negative values rely on
the (universal in practice) sign-extending behaviour of C compilers.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64

cdef i64 ACT_MAX = 8191
cdef i64 ACT_MIN = -8192
cdef i64 ACC_MAX = (1 << 14) - 1
cdef i64 ACC_MIN = -(1 << 14)
cdef i64 OUT_MAX = (1 << 28) - 1
cdef i64 OUT_MIN = -(1 << 28)


cdef inline i64 sat(i64 v, i64 lo, i64 hi) nogil:
    if v > hi:
        return hi
    if v < lo:
        return lo
    return v


cdef inline int msb_pos(i64 v) nogil:
    cdef int p = -1
    while v:
        v >>= 1
        p += 1
    return p


def run_stream(i64[::1] i_in, i64[::1] q_in,
               i64[::1] fc_ptr, i64[::1] fc_col, i64[::1] fc_w, i64[::1] b_fc,
               i64[::1] out_ptr, i64[::1] out_col, i64[::1] out_w, i64[::1] b_out,
               i64[::1] s1_tab, i64[::1] s3_tab,
               int m, int lbits, int sf, int iters, int zf,
               int n, int hidden,
               i64[::1] ki, i64[::1] kq, i64[::1] a_hist, i64[::1] a3_hist):
    """Process a whole stream; delay-line arrays are updated in place.

    Returns (out_i, out_q, overflow_count).
    """
    cdef Py_ssize_t t_len = i_in.shape[0]
    cdef cnp.ndarray[i64, ndim=1] out_i = np.empty(t_len, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] out_q = np.empty(t_len, dtype=np.int64)
    cdef i64[::1] oi = out_i
    cdef i64[::1] oq = out_q

    cdef int fc_in = 4 * n + 2
    cdef int out_in = fc_in + hidden
    cdef i64[64] x_vec  # fc inputs then hidden activations; fits n<=7, hidden<=36
    if out_in > 64:
        raise ValueError("model too large for the compiled kernel")

    cdef Py_ssize_t t, j, d
    cdef int p_msb, s, e, it
    cdef i64 i_raw, q_raw, z, zn, x, tt, w, a, a3, p_i, p_q
    cdef i64 acc, i_out, q_out, iy, qy, v
    cdef i64 overflow = 0

    for t in range(t_len):
        i_raw = i_in[t]
        q_raw = q_in[t]
        z = i_raw * i_raw + q_raw * q_raw
        if z == 0:
            p_i = ACT_MAX
            p_q = 0
            a = 0
            a3 = 0
        else:
            p_msb = msb_pos(z)
            s = p_msb - (m - 1)
            if s & 1:
                s += 1
            if s > 0:
                zn = z >> s
            else:
                zn = z << (-s)
            x = s1_tab[zn >> (m - lbits)]
            if iters == 0:
                x = (2 * x) // 3
            else:
                x = x - ((s3_tab[zn >> (m - lbits)] * zn) >> m)
                for it in range(iters - 1):
                    tt = (x * x) >> sf
                    w = (tt * zn) >> m
                    x = (x * ((<i64>3 << sf) - w)) >> (sf + 1)
            e = ((zf - m) >> 1) - (s >> 1)
            a = (zn * x) >> (zf + sf - 13 - s - e)
            if a > ACT_MAX:
                a = ACT_MAX
            a3 = (zn * a) >> (zf - s)
            if a3 > ACT_MAX:
                a3 = ACT_MAX
            p_i = sat((i_raw * x) >> (sf - e), ACT_MIN, ACT_MAX)
            p_q = sat((-q_raw * x) >> (sf - e), ACT_MIN, ACT_MAX)

        # phase-normalized delayed inputs, then amplitude features
        for d in range(n):
            x_vec[d] = sat((ki[d] * p_i - kq[d] * p_q) >> 13, ACT_MIN, ACT_MAX)
            x_vec[n + d] = sat((ki[d] * p_q + kq[d] * p_i) >> 13, ACT_MIN, ACT_MAX)
        x_vec[2 * n] = a
        for d in range(n):
            x_vec[2 * n + 1 + d] = a_hist[d]
        x_vec[3 * n + 1] = a3
        for d in range(n):
            x_vec[3 * n + 2 + d] = a3_hist[d]

        # first FC layer with ReLU, concatenated after the inputs
        for j in range(hidden):
            acc = b_fc[j] << 13
            for d in range(fc_ptr[j], fc_ptr[j + 1]):
                acc += fc_w[d] * x_vec[fc_col[d]]
            acc >>= 13
            if acc > ACC_MAX or acc < ACC_MIN:
                overflow += 1
            v = sat(acc, ACT_MIN, ACT_MAX)
            x_vec[fc_in + j] = v if v > 0 else 0

        # output layer
        acc = b_out[0] << 13
        for d in range(out_ptr[0], out_ptr[1]):
            acc += out_w[d] * x_vec[out_col[d]]
        acc >>= 13
        if acc > ACC_MAX or acc < ACC_MIN:
            overflow += 1
        i_out = sat(acc, ACT_MIN, ACT_MAX)
        acc = b_out[1] << 13
        for d in range(out_ptr[1], out_ptr[2]):
            acc += out_w[d] * x_vec[out_col[d]]
        acc >>= 13
        if acc > ACC_MAX or acc < ACC_MIN:
            overflow += 1
        q_out = sat(acc, ACT_MIN, ACT_MAX)

        iy = sat((i_out * p_i + q_out * p_q) << 1, OUT_MIN, OUT_MAX)
        qy = sat((q_out * p_i - i_out * p_q) << 1, OUT_MIN, OUT_MAX)
        oi[t] = iy
        oq[t] = qy

        for d in range(n - 1, 0, -1):
            ki[d] = ki[d - 1]
            kq[d] = kq[d - 1]
            a_hist[d] = a_hist[d - 1]
            a3_hist[d] = a3_hist[d - 1]
        ki[0] = i_raw
        kq[0] = q_raw
        a_hist[0] = a
        a3_hist[0] = a3

    return out_i, out_q, int(overflow)
