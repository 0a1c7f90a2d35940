"""Compiled inner loops on raw CSR arrays."""

import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True}


@nb.njit(**_jit)
def gs_forward(indptr, indices, data, diag, x, b):
    n = x.size
    for i in range(n):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def gs_backward(indptr, indices, data, diag, x, b):
    n = x.size
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def _grow(a, size):
    out = np.empty(max(2 * a.size, size), dtype=a.dtype)
    out[:a.size] = a
    return out


@nb.njit(**_jit)
def ilut(indptr, indices, data, n, tau, pivot_floor, pivot_shift):
    """IKJ threshold ILU.

    Entries of the original pattern are always kept; a fill entry ``e`` of
    row ``i`` is dropped when ``|e| < tau * ||K[i, :]||_2`` (for the strictly
    lower part the test is applied to the multiplier). Returns CSR arrays of
    the unit lower factor (diagonal implicit), the strictly upper factor, the
    pivots and the number of shifted pivots.
    """
    cap = 4 * data.size + n
    l_ptr = np.zeros(n + 1, dtype=np.int64)
    u_ptr = np.zeros(n + 1, dtype=np.int64)
    l_idx = np.empty(cap, dtype=np.int64)
    l_val = np.empty(cap, dtype=np.float64)
    u_idx = np.empty(cap, dtype=np.int64)
    u_val = np.empty(cap, dtype=np.float64)
    piv = np.empty(n, dtype=np.float64)
    w = np.zeros(n, dtype=np.float64)
    in_row = np.full(n, -1, dtype=np.int64)
    orig = np.full(n, -1, dtype=np.int64)
    cols = np.empty(n, dtype=np.int64)
    shifts = 0
    nl = 0
    nu = 0
    for i in range(n):
        nc = 0
        norm2 = 0.0
        lo = i
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            w[j] = data[k]
            in_row[j] = i
            orig[j] = i
            cols[nc] = j
            nc += 1
            norm2 += data[k] * data[k]
            if j < lo:
                lo = j
        if in_row[i] != i:
            w[i] = 0.0
            in_row[i] = i
            cols[nc] = i
            nc += 1
        thr = tau * np.sqrt(norm2)
        # fill only appears right of the pivot column, so an ascending scan
        # visits the lower part in elimination order
        for k in range(lo, i):
            if in_row[k] != i or w[k] == 0.0:
                continue
            mult = w[k] / piv[k]
            if orig[k] != i and abs(mult) < thr:
                w[k] = 0.0
                continue
            w[k] = mult
            for t in range(u_ptr[k], u_ptr[k + 1]):
                j = u_idx[t]
                if in_row[j] != i:
                    in_row[j] = i
                    w[j] = 0.0
                    cols[nc] = j
                    nc += 1
                w[j] -= mult * u_val[t]
        row = np.sort(cols[:nc])
        if nl + nc > l_idx.size:
            l_idx = _grow(l_idx, nl + nc)
            l_val = _grow(l_val, nl + nc)
        if nu + nc > u_idx.size:
            u_idx = _grow(u_idx, nu + nc)
            u_val = _grow(u_val, nu + nc)
        for j in row:
            v = w[j]
            if j < i:
                if v != 0.0:
                    l_idx[nl] = j
                    l_val[nl] = v
                    nl += 1
            elif j == i:
                if abs(v) <= pivot_floor:
                    v = v + pivot_shift if v >= 0.0 else v - pivot_shift
                    shifts += 1
                piv[i] = v
            elif v != 0.0 and (orig[j] == i or abs(v) >= thr):
                u_idx[nu] = j
                u_val[nu] = v
                nu += 1
            w[j] = 0.0
        l_ptr[i + 1] = nl
        u_ptr[i + 1] = nu
    return (l_ptr, l_idx[:nl].copy(), l_val[:nl].copy(),
            u_ptr, u_idx[:nu].copy(), u_val[:nu].copy(), piv, shifts)


@nb.njit(**_jit)
def lu_solve(l_ptr, l_idx, l_val, u_ptr, u_idx, u_val, piv, b):
    n = b.size
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(l_ptr[i], l_ptr[i + 1]):
            s -= l_val[k] * y[l_idx[k]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(u_ptr[i], u_ptr[i + 1]):
            s -= u_val[k] * y[u_idx[k]]
        y[i] = s / piv[i]
    return y
