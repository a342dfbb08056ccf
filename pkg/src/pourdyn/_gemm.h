/* Row-independent dense product kernels.
 *
 * gemm_acc computes C[i, j] += sum_k A[i, k] * B[k, j] with k visited in
 * ascending order for every element. The register-blocked path and the tail
 * paths perform the same per-element operation sequence, so a row's result
 * does not depend on how many rows are processed together.
 *
 * Accumulators are GCC/Clang vector types so they stay in registers when the
 * sizes are only known at run time.
 */
#ifndef POURDYN_GEMM_H
#define POURDYN_GEMM_H

#include <stddef.h>
#include <stdlib.h>
#include <string.h>

typedef double pd_v4 __attribute__((vector_size(32)));

static inline pd_v4 pd_load(const double *p)
{
    pd_v4 v;
    memcpy(&v, p, sizeof v);
    return v;
}

static inline void pd_store(double *p, pd_v4 v)
{
    memcpy(p, &v, sizeof v);
}

static inline pd_v4 pd_splat(double a)
{
    pd_v4 v = {a, a, a, a};
    return v;
}

/* 4 rows x 16 columns */
static void pd_block(ptrdiff_t K, const double *A, ptrdiff_t lda,
                     const double *B, ptrdiff_t ldb, double *C, ptrdiff_t ldc)
{
    double *C1 = C + ldc, *C2 = C + 2 * ldc, *C3 = C + 3 * ldc;
    const double *A1 = A + lda, *A2 = A + 2 * lda, *A3 = A + 3 * lda;
    pd_v4 c00 = pd_load(C), c01 = pd_load(C + 4), c02 = pd_load(C + 8), c03 = pd_load(C + 12);
    pd_v4 c10 = pd_load(C1), c11 = pd_load(C1 + 4), c12 = pd_load(C1 + 8), c13 = pd_load(C1 + 12);
    pd_v4 c20 = pd_load(C2), c21 = pd_load(C2 + 4), c22 = pd_load(C2 + 8), c23 = pd_load(C2 + 12);
    pd_v4 c30 = pd_load(C3), c31 = pd_load(C3 + 4), c32 = pd_load(C3 + 8), c33 = pd_load(C3 + 12);
    for (ptrdiff_t k = 0; k < K; k++) {
        const double *b = B + k * ldb;
        pd_v4 b0 = pd_load(b), b1 = pd_load(b + 4), b2 = pd_load(b + 8), b3 = pd_load(b + 12);
        pd_v4 a;
        a = pd_splat(A[k]);
        c00 += a * b0; c01 += a * b1; c02 += a * b2; c03 += a * b3;
        a = pd_splat(A1[k]);
        c10 += a * b0; c11 += a * b1; c12 += a * b2; c13 += a * b3;
        a = pd_splat(A2[k]);
        c20 += a * b0; c21 += a * b1; c22 += a * b2; c23 += a * b3;
        a = pd_splat(A3[k]);
        c30 += a * b0; c31 += a * b1; c32 += a * b2; c33 += a * b3;
    }
    pd_store(C, c00); pd_store(C + 4, c01); pd_store(C + 8, c02); pd_store(C + 12, c03);
    pd_store(C1, c10); pd_store(C1 + 4, c11); pd_store(C1 + 8, c12); pd_store(C1 + 12, c13);
    pd_store(C2, c20); pd_store(C2 + 4, c21); pd_store(C2 + 8, c22); pd_store(C2 + 12, c23);
    pd_store(C3, c30); pd_store(C3 + 4, c31); pd_store(C3 + 8, c32); pd_store(C3 + 12, c33);
}

/* one row x 16 columns */
static void pd_row_block(ptrdiff_t K, const double *A, const double *B, ptrdiff_t ldb, double *C)
{
    pd_v4 c0 = pd_load(C), c1 = pd_load(C + 4), c2 = pd_load(C + 8), c3 = pd_load(C + 12);
    for (ptrdiff_t k = 0; k < K; k++) {
        const double *b = B + k * ldb;
        pd_v4 a = pd_splat(A[k]);
        c0 += a * pd_load(b);
        c1 += a * pd_load(b + 4);
        c2 += a * pd_load(b + 8);
        c3 += a * pd_load(b + 12);
    }
    pd_store(C, c0); pd_store(C + 4, c1); pd_store(C + 8, c2); pd_store(C + 12, c3);
}

/* any rows x fewer than 16 columns: 4-wide chunks, then scalars */
static void pd_tail(ptrdiff_t M, ptrdiff_t N, ptrdiff_t K, const double *A, ptrdiff_t lda,
                    const double *B, ptrdiff_t ldb, double *C, ptrdiff_t ldc)
{
    for (ptrdiff_t i = 0; i < M; i++) {
        double *ci = C + i * ldc;
        const double *ai = A + i * lda;
        ptrdiff_t j = 0;
        for (; j + 4 <= N; j += 4) {
            pd_v4 c = pd_load(ci + j);
            for (ptrdiff_t k = 0; k < K; k++)
                c += pd_splat(ai[k]) * pd_load(B + k * ldb + j);
            pd_store(ci + j, c);
        }
        for (; j < N; j++) {
            double c = ci[j];
            for (ptrdiff_t k = 0; k < K; k++)
                c += ai[k] * B[k * ldb + j];
            ci[j] = c;
        }
    }
}

static void gemm_acc(ptrdiff_t M, ptrdiff_t N, ptrdiff_t K,
                     const double *A, ptrdiff_t lda,
                     const double *B, ptrdiff_t ldb,
                     double *C, ptrdiff_t ldc)
{
    ptrdiff_t j0 = 0;
    for (; j0 + 16 <= N; j0 += 16) {
        ptrdiff_t i0 = 0;
        for (; i0 + 4 <= M; i0 += 4)
            pd_block(K, A + i0 * lda, lda, B + j0, ldb, C + i0 * ldc + j0, ldc);
        for (; i0 < M; i0++)
            pd_row_block(K, A + i0 * lda, B + j0, ldb, C + i0 * ldc + j0);
    }
    if (j0 < N)
        pd_tail(M, N - j0, K, A, lda, B + j0, ldb, C + j0, ldc);
}

#define PD_KC 256

/* C[i, j] += sum_k A[k, i] * B[k, j] over the live rows of a time-major
 * (T, R, .) pair: the contraction runs over rows (t, r) with r < nact[t], in (t, r) order.
 * Live rows of both operands are packed into panels so padding costs nothing. */
static int gemm_tn_ragged(ptrdiff_t M, ptrdiff_t N, ptrdiff_t T, ptrdiff_t R,
                          const long long *nact,
                          const double *A, ptrdiff_t lda, ptrdiff_t tsa,
                          const double *B, ptrdiff_t ldb, ptrdiff_t tsb,
                          double *C, ptrdiff_t ldc)
{
    double *pa = (double *)malloc(sizeof(double) * (size_t)(M * PD_KC + 1));
    double *pb = (double *)malloc(sizeof(double) * (size_t)(N * PD_KC + 1));
    if (pa == NULL || pb == NULL) {
        free(pa);
        free(pb);
        return -1;
    }
    ptrdiff_t t = 0, r = 0;
    for (;;) {
        ptrdiff_t kc = 0;
        double *fill = pb;
        while (kc < PD_KC && t < T) {
            if (r >= nact[t]) {
                t++;
                r = 0;
                continue;
            }
            const double *a = A + t * tsa + r * lda;
            memcpy(fill, B + t * tsb + r * ldb, sizeof(double) * (size_t)N);
            fill += N;
            for (ptrdiff_t i = 0; i < M; i++)
                pa[i * PD_KC + kc] = a[i];
            kc++;
            r++;
        }
        if (kc == 0)
            break;
        gemm_acc(M, N, kc, pa, PD_KC, pb, N, C, ldc);
    }
    free(pa);
    free(pb);
    return 0;
}

#endif
