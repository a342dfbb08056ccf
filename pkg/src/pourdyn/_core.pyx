# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recurrent-layer kernels over a whole padded batch.

Arrays are time-major: inputs ``(T, B, input_dim)``, hidden states
``(T, B, units)``. Sequences are sorted by decreasing length, so at step ``t``
the live sequences are the first ``nact[t]`` rows; rows past a sequence's
length stay zero and are never read by the recurrence.

Weights use the packed layout from :mod:`pourdyn.backends`: input kernels
``(input_dim, G*units)`` and recurrent kernels ``(units, G*units)`` with gates
side by side, plus their transposes for the backward pass. All products go
through ``gemm_acc`` / ``gemm_tn_ragged``, which accumulate every element in
ascending index order, so a sequence's forward result does not depend on
which other sequences share its batch.
"""

import numpy as np

from libc.math cimport fabs


cdef extern from "_gemm.h" nogil:
    void gemm_acc(Py_ssize_t M, Py_ssize_t N, Py_ssize_t K,
                  const double* A, Py_ssize_t lda, const double* B, Py_ssize_t ldb,
                  double* C, Py_ssize_t ldc)
    int gemm_tn_ragged(Py_ssize_t M, Py_ssize_t N, Py_ssize_t T, Py_ssize_t R,
                       const long long* nact,
                       const double* A, Py_ssize_t lda, Py_ssize_t tsa,
                       const double* B, Py_ssize_t ldb, Py_ssize_t tsb,
                       double* C, Py_ssize_t ldc)


cdef inline void _zero(double* p, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        p[i] = 0.0


cdef void _project_inputs(const double* X, const long long* nact, Py_ssize_t T, Py_ssize_t B,
                          Py_ssize_t nin, const double* wx, Py_ssize_t n, double* AX) noexcept nogil:
    cdef Py_ssize_t t
    for t in range(T):
        if nact[t] > 0:
            gemm_acc(nact[t], n, nin, X + t * B * nin, nin, wx, n, AX + t * B * n, n)


cdef int _weight_grads(const double* X, const double* H, const long long* nact,
                       Py_ssize_t T, Py_ssize_t B, Py_ssize_t nin, Py_ssize_t u,
                       const double* dA, const double* dAh, Py_ssize_t n,
                       double* gwx, double* gwh) noexcept nogil:
    # gwx += X^T dA over live (t, b) rows; gwh += H[t-1]^T dAh[t] for t >= 1
    cdef int err = gemm_tn_ragged(nin, n, T, B, nact, X, nin, B * nin, dA, n, B * n, gwx, n)
    if T > 1:
        err |= gemm_tn_ragged(u, n, T - 1, B, nact + 1, H, u, B * u, dAh + B * n, n, B * n, gwh, n)
    return err


cdef _check_alloc(int err):
    if err:
        raise MemoryError("could not allocate a packing buffer")


cdef void _col_sums(const double* D, const long long* nact, Py_ssize_t T, Py_ssize_t B,
                    Py_ssize_t n, double* out) noexcept nogil:
    cdef Py_ssize_t t, r, j
    cdef const double* row
    for t in range(T):
        for r in range(nact[t]):
            row = D + (t * B + r) * n
            for j in range(n):
                out[j] += row[j]


cdef void _input_grads(const double* dA, const long long* nact, Py_ssize_t T, Py_ssize_t B,
                       Py_ssize_t n, const double* wxT, Py_ssize_t nin, double* dX) noexcept nogil:
    cdef Py_ssize_t t
    for t in range(T):
        if nact[t] > 0:
            gemm_acc(nact[t], nin, n, dA + t * B * n, n, wxT, nin, dX + t * B * nin, nin)


cdef inline void _act_exp(object buf, Py_ssize_t n):
    # in-place SIMD exp over the first n entries of a flat scratch array
    v = buf[:n]
    np.exp(v, out=v)


cdef inline void _act_tanh(object buf, Py_ssize_t n):
    v = buf[:n]
    np.tanh(v, out=v)


cdef inline double _sig_from(double x, double e) noexcept nogil:
    # sigmoid(x) given e = exp(-|x|); written as a select so it stays branch-free
    cdef double s = 1.0 / (1.0 + e)
    return s if x >= 0 else e * s


def _dims(X, H):
    return X.shape[0], X.shape[1], X.shape[2], H.shape[2]


def simple_forward(const double[:, :, ::1] X, const long long[::1] nact,
                   const double[:, ::1] wx, const double[:, ::1] wh, const double[::1] b,
                   double[:, :, ::1] H):
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef double[:, :, ::1] AX = np.zeros((T, B, u))
    cdef object Nbuf = np.zeros(B * u)
    cdef double[::1] N = Nbuf
    cdef Py_ssize_t t, i, j, nb
    cdef double* ax
    cdef double* pre
    with nogil:
        _project_inputs(&X[0, 0, 0], &nact[0], T, B, nin, &wx[0, 0], u, &AX[0, 0, 0])
    for t in range(T):
        nb = nact[t]
        if nb == 0:
            break
        with nogil:
            _zero(&N[0], nb * u)
            if t > 0:
                gemm_acc(nb, u, u, &H[t - 1, 0, 0], u, &wh[0, 0], u, &N[0], u)
            for i in range(nb):
                ax = &AX[t, i, 0]
                pre = &N[i * u]
                for j in range(u):
                    pre[j] = (ax[j] + pre[j]) + b[j]
        _act_tanh(Nbuf, nb * u)
        with nogil:
            for i in range(nb):
                for j in range(u):
                    H[t, i, j] = N[i * u + j]


def simple_backward(const double[:, :, ::1] X, const double[:, :, ::1] H,
                    const long long[::1] nact, const double[:, ::1] wxT, const double[:, ::1] whT,
                    const double[:, :, ::1] dH, double[:, :, ::1] dX, bint need_dx,
                    double[:, ::1] gwx, double[:, ::1] gwh, double[::1] gb):
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef double[:, :, ::1] dA = np.zeros((T, B, u))
    cdef double[:, ::1] carry = np.zeros((B, u))
    cdef Py_ssize_t t, i, j, nb
    cdef int err = 0
    cdef double h
    with nogil:
        for t in range(T - 1, -1, -1):
            nb = nact[t]
            if nb == 0:
                continue
            for i in range(nb):
                for j in range(u):
                    h = H[t, i, j]
                    dA[t, i, j] = (dH[t, i, j] + carry[i, j]) * (1.0 - h * h)
                    carry[i, j] = 0.0
            if t > 0:
                gemm_acc(nb, u, u, &dA[t, 0, 0], u, &whT[0, 0], u, &carry[0, 0], u)
        _col_sums(&dA[0, 0, 0], &nact[0], T, B, u, &gb[0])
        err = _weight_grads(&X[0, 0, 0], &H[0, 0, 0], &nact[0], T, B, nin, u, &dA[0, 0, 0], &dA[0, 0, 0], u,
                      &gwx[0, 0], &gwh[0, 0])
        if need_dx:
            _input_grads(&dA[0, 0, 0], &nact[0], T, B, u, &wxT[0, 0], nin, &dX[0, 0, 0])
    _check_alloc(err)


def lstm_forward(const double[:, :, ::1] X, const long long[::1] nact,
                 const double[:, ::1] wx, const double[:, ::1] wh, const double[::1] b,
                 double[:, :, ::1] H, double[:, :, ::1] cache):
    # cache columns: i | f | g | o | c | tanh(c)
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n = 4 * u
    cdef double[:, :, ::1] AX = np.zeros((T, B, n))
    cdef double[:, ::1] AH = np.zeros((B, n))
    cdef object Ebuf = np.zeros(B * n)
    cdef object Nbuf = np.zeros(B * u)
    cdef double[::1] E = Ebuf
    cdef double[::1] N = Nbuf
    cdef Py_ssize_t t, i, j, nb
    cdef double x, cp
    cdef double* ax
    cdef double* ah
    cdef double* cc
    cdef double* e
    with nogil:
        _project_inputs(&X[0, 0, 0], &nact[0], T, B, nin, &wx[0, 0], n, &AX[0, 0, 0])
    for t in range(T):
        nb = nact[t]
        if nb == 0:
            break
        with nogil:
            _zero(&AH[0, 0], nb * n)
            if t > 0:
                gemm_acc(nb, n, u, &H[t - 1, 0, 0], u, &wh[0, 0], n, &AH[0, 0], n)
            for i in range(nb):
                ax = &AX[t, i, 0]
                ah = &AH[i, 0]
                cc = &cache[t, i, 0]
                e = &E[i * n]
                for j in range(n):
                    x = (ax[j] + ah[j]) + b[j]
                    cc[j] = x
                    e[j] = -fabs(x)
                for j in range(u):
                    N[i * u + j] = cc[2 * u + j]
        _act_exp(Ebuf, nb * n)
        _act_tanh(Nbuf, nb * u)
        with nogil:
            for i in range(nb):
                cc = &cache[t, i, 0]
                e = &E[i * n]
                for j in range(u):
                    cc[j] = _sig_from(cc[j], e[j])
                    cc[u + j] = _sig_from(cc[u + j], e[u + j])
                    cc[2 * u + j] = N[i * u + j]
                    cc[3 * u + j] = _sig_from(cc[3 * u + j], e[3 * u + j])
                    cp = cache[t - 1, i, 4 * u + j] if t > 0 else 0.0
                    cc[4 * u + j] = cc[u + j] * cp + cc[j] * cc[2 * u + j]
                    N[i * u + j] = cc[4 * u + j]
        _act_tanh(Nbuf, nb * u)
        with nogil:
            for i in range(nb):
                cc = &cache[t, i, 0]
                for j in range(u):
                    cc[5 * u + j] = N[i * u + j]
                    H[t, i, j] = cc[3 * u + j] * cc[5 * u + j]


def lstm_backward(const double[:, :, ::1] X, const double[:, :, ::1] H,
                  const double[:, :, ::1] cache, const long long[::1] nact,
                  const double[:, ::1] wxT, const double[:, ::1] whT,
                  const double[:, :, ::1] dH, double[:, :, ::1] dX, bint need_dx,
                  double[:, ::1] gwx, double[:, ::1] gwh, double[::1] gb):
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n = 4 * u
    cdef double[:, :, ::1] dA = np.zeros((T, B, n))
    cdef double[:, ::1] carry = np.zeros((B, u))
    cdef double[:, ::1] carry_c = np.zeros((B, u))
    cdef Py_ssize_t t, i, j, nb
    cdef int err = 0
    cdef double gi, gf, gg, go, cp, tc, dh, dc
    cdef double* da
    with nogil:
        for t in range(T - 1, -1, -1):
            nb = nact[t]
            if nb == 0:
                continue
            for i in range(nb):
                da = &dA[t, i, 0]
                for j in range(u):
                    gi = cache[t, i, j]
                    gf = cache[t, i, u + j]
                    gg = cache[t, i, 2 * u + j]
                    go = cache[t, i, 3 * u + j]
                    cp = cache[t - 1, i, 4 * u + j] if t > 0 else 0.0
                    tc = cache[t, i, 5 * u + j]
                    dh = dH[t, i, j] + carry[i, j]
                    dc = carry_c[i, j] + dh * go * (1.0 - tc * tc)
                    da[j] = dc * gg * gi * (1.0 - gi)
                    da[u + j] = dc * cp * gf * (1.0 - gf)
                    da[2 * u + j] = dc * gi * (1.0 - gg * gg)
                    da[3 * u + j] = dh * tc * go * (1.0 - go)
                    carry_c[i, j] = dc * gf
                    carry[i, j] = 0.0
            if t > 0:
                gemm_acc(nb, u, n, &dA[t, 0, 0], n, &whT[0, 0], u, &carry[0, 0], u)
        _col_sums(&dA[0, 0, 0], &nact[0], T, B, n, &gb[0])
        err = _weight_grads(&X[0, 0, 0], &H[0, 0, 0], &nact[0], T, B, nin, u, &dA[0, 0, 0], &dA[0, 0, 0], n,
                      &gwx[0, 0], &gwh[0, 0])
        if need_dx:
            _input_grads(&dA[0, 0, 0], &nact[0], T, B, n, &wxT[0, 0], nin, &dX[0, 0, 0])
    _check_alloc(err)


def gru_after_forward(const double[:, :, ::1] X, const long long[::1] nact,
                      const double[:, ::1] wx, const double[:, ::1] wh,
                      const double[::1] bx, const double[::1] bh,
                      double[:, :, ::1] H, double[:, :, ::1] cache):
    # cache columns: z | r | n | recurrent candidate pre-activation incl. bias
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n3 = 3 * u
    cdef Py_ssize_t n2 = 2 * u
    cdef double[:, :, ::1] AX = np.zeros((T, B, n3))
    cdef double[:, ::1] AH = np.zeros((B, n3))
    cdef object Ebuf = np.zeros(B * n2)
    cdef object Nbuf = np.zeros(B * u)
    cdef double[::1] E = Ebuf
    cdef double[::1] N = Nbuf
    cdef Py_ssize_t t, i, j, nb
    cdef double x, z, hp
    cdef double* ax
    cdef double* ah
    cdef double* cc
    cdef double* e
    with nogil:
        _project_inputs(&X[0, 0, 0], &nact[0], T, B, nin, &wx[0, 0], n3, &AX[0, 0, 0])
    for t in range(T):
        nb = nact[t]
        if nb == 0:
            break
        with nogil:
            _zero(&AH[0, 0], nb * n3)
            if t > 0:
                gemm_acc(nb, n3, u, &H[t - 1, 0, 0], u, &wh[0, 0], n3, &AH[0, 0], n3)
            for i in range(nb):
                ax = &AX[t, i, 0]
                ah = &AH[i, 0]
                cc = &cache[t, i, 0]
                e = &E[i * n2]
                for j in range(n2):
                    x = (ax[j] + bx[j]) + (ah[j] + bh[j])
                    cc[j] = x
                    e[j] = -fabs(x)
        _act_exp(Ebuf, nb * n2)
        with nogil:
            for i in range(nb):
                ax = &AX[t, i, 0]
                ah = &AH[i, 0]
                cc = &cache[t, i, 0]
                e = &E[i * n2]
                for j in range(n2):
                    cc[j] = _sig_from(cc[j], e[j])
                for j in range(u):
                    cc[3 * u + j] = ah[2 * u + j] + bh[2 * u + j]
                    N[i * u + j] = (ax[2 * u + j] + bx[2 * u + j]) + cc[u + j] * cc[3 * u + j]
        _act_tanh(Nbuf, nb * u)
        with nogil:
            for i in range(nb):
                cc = &cache[t, i, 0]
                for j in range(u):
                    z = cc[j]
                    cc[2 * u + j] = N[i * u + j]
                    hp = H[t - 1, i, j] if t > 0 else 0.0
                    H[t, i, j] = (1.0 - z) * hp + z * cc[2 * u + j]


def gru_after_backward(const double[:, :, ::1] X, const double[:, :, ::1] H,
                       const double[:, :, ::1] cache, const long long[::1] nact,
                       const double[:, ::1] wxT, const double[:, ::1] whT,
                       const double[:, :, ::1] dH, double[:, :, ::1] dX, bint need_dx,
                       double[:, ::1] gwx, double[:, ::1] gwh,
                       double[::1] gbx, double[::1] gbh):
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n3 = 3 * u
    cdef double[:, :, ::1] dAX = np.zeros((T, B, n3))
    cdef double[:, :, ::1] dAH = np.zeros((T, B, n3))
    cdef double[:, ::1] carry = np.zeros((B, u))
    cdef Py_ssize_t t, i, j, nb
    cdef int err = 0
    cdef double z, r, cand, hn, hp, dh, dan, dar, daz
    cdef double* dax
    cdef double* dah
    with nogil:
        for t in range(T - 1, -1, -1):
            nb = nact[t]
            if nb == 0:
                continue
            for i in range(nb):
                dax = &dAX[t, i, 0]
                dah = &dAH[t, i, 0]
                for j in range(u):
                    z = cache[t, i, j]
                    r = cache[t, i, u + j]
                    cand = cache[t, i, 2 * u + j]
                    hn = cache[t, i, 3 * u + j]
                    hp = H[t - 1, i, j] if t > 0 else 0.0
                    dh = dH[t, i, j] + carry[i, j]
                    dan = dh * z * (1.0 - cand * cand)
                    dar = dan * hn * r * (1.0 - r)
                    daz = dh * (cand - hp) * z * (1.0 - z)
                    dax[j] = daz
                    dax[u + j] = dar
                    dax[2 * u + j] = dan
                    dah[j] = daz
                    dah[u + j] = dar
                    dah[2 * u + j] = dan * r
                    carry[i, j] = dh * (1.0 - z)
            if t > 0:
                gemm_acc(nb, u, n3, &dAH[t, 0, 0], n3, &whT[0, 0], u, &carry[0, 0], u)
        _col_sums(&dAX[0, 0, 0], &nact[0], T, B, n3, &gbx[0])
        _col_sums(&dAH[0, 0, 0], &nact[0], T, B, n3, &gbh[0])
        err = _weight_grads(&X[0, 0, 0], &H[0, 0, 0], &nact[0], T, B, nin, u, &dAX[0, 0, 0], &dAH[0, 0, 0], n3,
                      &gwx[0, 0], &gwh[0, 0])
        if need_dx:
            _input_grads(&dAX[0, 0, 0], &nact[0], T, B, n3, &wxT[0, 0], nin, &dX[0, 0, 0])
    _check_alloc(err)


def gru_before_forward(const double[:, :, ::1] X, const long long[::1] nact,
                       const double[:, ::1] wx, const double[:, ::1] wh, const double[::1] b,
                       double[:, :, ::1] H, double[:, :, ::1] cache):
    # cache columns: z | r | n | r * h_prev
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n3 = 3 * u
    cdef Py_ssize_t n2 = 2 * u
    cdef double[:, :, ::1] AX = np.zeros((T, B, n3))
    cdef double[:, ::1] AH = np.zeros((B, n3))
    cdef object Ebuf = np.zeros(B * n2)
    cdef object Nbuf = np.zeros(B * u)
    cdef double[::1] E = Ebuf
    cdef double[::1] N = Nbuf
    cdef Py_ssize_t t, i, j, nb
    cdef double x, z, hp
    cdef double* ax
    cdef double* ah
    cdef double* cc
    cdef double* e
    with nogil:
        _project_inputs(&X[0, 0, 0], &nact[0], T, B, nin, &wx[0, 0], n3, &AX[0, 0, 0])
    for t in range(T):
        nb = nact[t]
        if nb == 0:
            break
        with nogil:
            _zero(&AH[0, 0], nb * n3)
            if t > 0:
                gemm_acc(nb, n2, u, &H[t - 1, 0, 0], u, &wh[0, 0], n3, &AH[0, 0], n3)
            for i in range(nb):
                ax = &AX[t, i, 0]
                ah = &AH[i, 0]
                cc = &cache[t, i, 0]
                e = &E[i * n2]
                for j in range(n2):
                    x = (ax[j] + ah[j]) + b[j]
                    cc[j] = x
                    e[j] = -fabs(x)
        _act_exp(Ebuf, nb * n2)
        with nogil:
            for i in range(nb):
                cc = &cache[t, i, 0]
                e = &E[i * n2]
                for j in range(n2):
                    cc[j] = _sig_from(cc[j], e[j])
                for j in range(u):
                    hp = H[t - 1, i, j] if t > 0 else 0.0
                    cc[3 * u + j] = cc[u + j] * hp
            if t > 0:
                gemm_acc(nb, u, u, &cache[t, 0, 3 * u], 4 * u, &wh[0, 2 * u], n3,
                         &AH[0, 2 * u], n3)
            for i in range(nb):
                ax = &AX[t, i, 0]
                ah = &AH[i, 0]
                for j in range(u):
                    N[i * u + j] = (ax[2 * u + j] + ah[2 * u + j]) + b[2 * u + j]
        _act_tanh(Nbuf, nb * u)
        with nogil:
            for i in range(nb):
                cc = &cache[t, i, 0]
                for j in range(u):
                    z = cc[j]
                    cc[2 * u + j] = N[i * u + j]
                    hp = H[t - 1, i, j] if t > 0 else 0.0
                    H[t, i, j] = (1.0 - z) * hp + z * cc[2 * u + j]


def gru_before_backward(const double[:, :, ::1] X, const double[:, :, ::1] H,
                        const double[:, :, ::1] cache, const long long[::1] nact,
                        const double[:, ::1] wxT, const double[:, ::1] whT,
                        const double[:, :, ::1] dH, double[:, :, ::1] dX, bint need_dx,
                        double[:, ::1] gwx, double[:, ::1] gwh, double[::1] gb):
    cdef Py_ssize_t T, B, nin, u
    T, B, nin, u = _dims(X, H)
    cdef Py_ssize_t n3 = 3 * u
    cdef double[:, :, ::1] dA = np.zeros((T, B, n3))
    cdef double[:, ::1] carry = np.zeros((B, u))
    cdef double[:, ::1] drh = np.zeros((B, u))
    cdef Py_ssize_t t, i, j, nb
    cdef int err = 0
    cdef double z, r, cand, hp, dh
    cdef double* da
    with nogil:
        for t in range(T - 1, -1, -1):
            nb = nact[t]
            if nb == 0:
                continue
            for i in range(nb):
                da = &dA[t, i, 0]
                for j in range(u):
                    z = cache[t, i, j]
                    cand = cache[t, i, 2 * u + j]
                    hp = H[t - 1, i, j] if t > 0 else 0.0
                    dh = dH[t, i, j] + carry[i, j]
                    da[j] = dh * (cand - hp) * z * (1.0 - z)
                    da[2 * u + j] = dh * z * (1.0 - cand * cand)
                    carry[i, j] = dh * (1.0 - z)
            if t > 0:
                # gradient w.r.t. r * h_prev through the candidate's recurrent kernel
                _zero(&drh[0, 0], nb * u)
                gemm_acc(nb, u, u, &dA[t, 0, 2 * u], n3, &whT[2 * u, 0], u, &drh[0, 0], u)
                for i in range(nb):
                    for j in range(u):
                        r = cache[t, i, u + j]
                        dA[t, i, u + j] = drh[i, j] * H[t - 1, i, j] * r * (1.0 - r)
                        carry[i, j] += drh[i, j] * r
                gemm_acc(nb, u, 2 * u, &dA[t, 0, 0], n3, &whT[0, 0], u, &carry[0, 0], u)
        _col_sums(&dA[0, 0, 0], &nact[0], T, B, n3, &gb[0])
        err = gemm_tn_ragged(nin, n3, T, B, &nact[0], &X[0, 0, 0], nin, B * nin,
                             &dA[0, 0, 0], n3, B * n3, &gwx[0, 0], n3)
        if T > 1:
            err |= gemm_tn_ragged(u, 2 * u, T - 1, B, &nact[1], &H[0, 0, 0], u, B * u,
                                  &dA[1, 0, 0], n3, B * n3, &gwh[0, 0], n3)
            err |= gemm_tn_ragged(u, u, T - 1, B, &nact[1], &cache[1, 0, 3 * u], 4 * u, 4 * B * u,
                                  &dA[1, 0, 2 * u], n3, B * n3, &gwh[0, 2 * u], n3)
        if need_dx:
            _input_grads(&dA[0, 0, 0], &nact[0], T, B, n3, &wxT[0, 0], nin, &dX[0, 0, 0])
    _check_alloc(err)
