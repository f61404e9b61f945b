"""Compiled inner loops for the master-equation propagators (RK4 and Chebyshev).

The density matrix is carried as separate real and imaginary planes so that
every inner loop is a real axpy. The generator is evaluated as

    out = -i(X - X^dag) + sum_o (a_o rho a_o^dag),   X = Heff @ rho

with Heff in CSR form (split into real and imaginary data). Every collapse
operator in this model is a constant index shift with a real per-row weight,
``a[i, i + s] = w_i``, so ``(a rho a^dag)_ij = w_i w_j rho[i + s, j + s]``.
Only the upper triangle of the Hermitian output is computed, then mirrored.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_TILE = 16


@nb.njit(cache=True, fastmath=True)
def _apply_generator(R, I, outR, outI, XR, XI, indptr, indices, hr, hi, shifts, weights, rows, offs):
    d = R.shape[0]
    for i in range(d):
        for c in range(d):
            XR[i, c] = 0.0
            XI[i, c] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            a = hr[p]
            b = hi[p]
            if a != 0.0:
                for c in range(d):
                    XR[i, c] += a * R[j, c]
                    XI[i, c] += a * I[j, c]
            if b != 0.0:
                for c in range(d):
                    XR[i, c] -= b * I[j, c]
                    XI[i, c] += b * R[j, c]
    # -i(X - X^dag): real part XI + XI^T, imaginary part -(XR - XR^T)
    for bi in range(0, d, _TILE):
        for bj in range(bi, d, _TILE):
            for i in range(bi, min(bi + _TILE, d)):
                for j in range(max(i, bj), min(bj + _TILE, d)):
                    outR[i, j] = XI[i, j] + XI[j, i]
                    outI[i, j] = XR[j, i] - XR[i, j]
    for o in range(shifts.shape[0]):
        s = shifts[o]
        w = weights[o]
        for a in range(offs[o], offs[o + 1]):
            i = rows[a]
            wi = w[i]
            for j in range(i, d - s):
                ww = wi * w[j]
                outR[i, j] += ww * R[i + s, j + s]
                outI[i, j] += ww * I[i + s, j + s]
    for bi in range(0, d, _TILE):
        for bj in range(bi, d, _TILE):
            for i in range(bi, min(bi + _TILE, d)):
                for j in range(max(i + 1, bj), min(bj + _TILE, d)):
                    outR[j, i] = outR[i, j]
                    outI[j, i] = -outI[i, j]


@nb.njit(cache=True, fastmath=True)
def _rk4_planes(R, I, h, n, indptr, indices, hr, hi, shifts, weights, rows, offs):
    d = R.shape[0]
    XR = np.empty_like(R)
    XI = np.empty_like(R)
    kR = np.empty_like(R)
    kI = np.empty_like(R)
    tR = np.empty_like(R)
    tI = np.empty_like(R)
    aR = np.empty_like(R)
    aI = np.empty_like(R)
    args = (indptr, indices, hr, hi, shifts, weights, rows, offs)
    h2 = 0.5 * h
    h3 = h / 3.0
    h6 = h / 6.0
    for _ in range(n):
        _apply_generator(R, I, kR, kI, XR, XI, *args)
        for i in range(d):
            for j in range(d):
                tR[i, j] = R[i, j] + h2 * kR[i, j]
                tI[i, j] = I[i, j] + h2 * kI[i, j]
                aR[i, j] = R[i, j] + h6 * kR[i, j]
                aI[i, j] = I[i, j] + h6 * kI[i, j]
        _apply_generator(tR, tI, kR, kI, XR, XI, *args)
        for i in range(d):
            for j in range(d):
                tR[i, j] = R[i, j] + h2 * kR[i, j]
                tI[i, j] = I[i, j] + h2 * kI[i, j]
                aR[i, j] += h3 * kR[i, j]
                aI[i, j] += h3 * kI[i, j]
        _apply_generator(tR, tI, kR, kI, XR, XI, *args)
        for i in range(d):
            for j in range(d):
                tR[i, j] = R[i, j] + h * kR[i, j]
                tI[i, j] = I[i, j] + h * kI[i, j]
                aR[i, j] += h3 * kR[i, j]
                aI[i, j] += h3 * kI[i, j]
        _apply_generator(tR, tI, kR, kI, XR, XI, *args)
        # final combination, re-symmetrized: real part symmetric, imaginary antisymmetric
        for bi in range(0, d, _TILE):
            for bj in range(bi, d, _TILE):
                for i in range(bi, min(bi + _TILE, d)):
                    for j in range(max(i, bj), min(bj + _TILE, d)):
                        r = 0.5 * (aR[i, j] + h6 * kR[i, j] + aR[j, i] + h6 * kR[j, i])
                        m = 0.5 * (aI[i, j] + h6 * kI[i, j] - aI[j, i] - h6 * kI[j, i])
                        R[i, j] = r
                        R[j, i] = r
                        I[i, j] = m
                        I[j, i] = -m
    return R, I


@nb.njit(cache=True, fastmath=True)
def _chebyshev_planes(R, I, coeffs, damp, shift, scale, n_chunks, indptr, indices, hr, hi,
                      shifts, weights, rows, offs):
    d = R.shape[0]
    XR = np.empty_like(R)
    XI = np.empty_like(R)
    gR = np.empty_like(R)
    gI = np.empty_like(R)
    pR = np.empty_like(R)  # V_{k-1} rho
    pI = np.empty_like(R)
    cR = np.empty_like(R)  # V_k rho
    cI = np.empty_like(R)
    aR = np.empty_like(R)
    aI = np.empty_like(R)
    K = coeffs.shape[0]
    for _ in range(n_chunks):
        # V_1 rho = B rho with B = (L + shift) * scale
        _apply_generator(R, I, gR, gI, XR, XI, indptr, indices, hr, hi, shifts, weights, rows, offs)
        for i in range(d):
            for j in range(d):
                pR[i, j] = R[i, j]
                pI[i, j] = I[i, j]
                cR[i, j] = scale * (gR[i, j] + shift * R[i, j])
                cI[i, j] = scale * (gI[i, j] + shift * I[i, j])
                aR[i, j] = coeffs[0] * R[i, j] + coeffs[1] * cR[i, j]
                aI[i, j] = coeffs[0] * I[i, j] + coeffs[1] * cI[i, j]
        for k in range(2, K):
            ck = coeffs[k]
            _apply_generator(cR, cI, gR, gI, XR, XI, indptr, indices, hr, hi, shifts, weights, rows, offs)
            # V_{k+1} = 2 B V_k + V_{k-1}, written over V_{k-1}
            for i in range(d):
                for j in range(d):
                    nr = 2.0 * scale * (gR[i, j] + shift * cR[i, j]) + pR[i, j]
                    ni = 2.0 * scale * (gI[i, j] + shift * cI[i, j]) + pI[i, j]
                    pR[i, j] = nr
                    pI[i, j] = ni
                    aR[i, j] += ck * nr
                    aI[i, j] += ck * ni
            pR, cR = cR, pR
            pI, cI = cI, pI
        for bi in range(0, d, _TILE):
            for bj in range(bi, d, _TILE):
                for i in range(bi, min(bi + _TILE, d)):
                    for j in range(max(i, bj), min(bj + _TILE, d)):
                        r = 0.5 * damp * (aR[i, j] + aR[j, i])
                        m = 0.5 * damp * (aI[i, j] - aI[j, i])
                        R[i, j] = r
                        R[j, i] = r
                        I[i, j] = m
                        I[j, i] = -m
    return R, I


def chebyshev_steps(rho, coeffs, damp, shift, scale, n_chunks, indptr, indices, hr, hi,
                    shifts, weights, rows, offs):
    """Apply ``n_chunks`` times ``damp * sum_k coeffs[k] V_k(B) rho``.

    ``B = (L + shift) * scale`` and ``V_0 = 1, V_1 = B, V_{k+1} = 2 B V_k + V_{k-1}``;
    ``V_k(B) = i^k T_k(-i B)`` keeps every iterate Hermitian.
    """
    R = np.ascontiguousarray(rho.real, dtype=np.float64)
    I = np.ascontiguousarray(rho.imag, dtype=np.float64)
    R, I = _chebyshev_planes(R, I, np.ascontiguousarray(coeffs, dtype=np.float64), float(damp),
                             float(shift), float(scale), int(n_chunks), indptr, indices, hr, hi,
                             shifts, weights, rows, offs)
    return R + 1j * I


def rk4_steps(rho, h, n, indptr, indices, hr, hi, shifts, weights, rows, offs):
    """``n`` classical RK4 steps of size ``h`` on a complex ``rho``; returns a new array."""
    R = np.ascontiguousarray(rho.real, dtype=np.float64)
    I = np.ascontiguousarray(rho.imag, dtype=np.float64)
    R, I = _rk4_planes(R, I, float(h), int(n), indptr, indices, hr, hi, shifts, weights, rows, offs)
    return R + 1j * I


def jump_maps(rates_and_ops, dim):
    """Encode collapse operators as (shifts, weights, rows, offsets).

    Each ``(rate, a)`` contributes ``2 * rate * a rho a^dag``; ``a`` must have
    the form ``a[i, i + s] = w_i`` with a single shift ``s > 0`` and real ``w``.
    """
    shifts, weights, rows, offs = [], [], [], [0]
    for rate, a in rates_and_ops:
        if rate == 0:
            continue
        r, c = np.nonzero(a)
        s = np.unique(c - r)
        if len(s) != 1 or s[0] <= 0:
            raise ValueError("collapse operator is not a single positive index shift")
        vals = a[r, c]
        if np.abs(vals.imag).max() > 0:
            raise ValueError("collapse operator weights must be real")
        w = np.zeros(dim)
        w[r] = np.sqrt(2.0 * rate) * vals.real
        shifts.append(int(s[0]))
        weights.append(w)
        rows.extend(sorted(r.tolist()))
        offs.append(len(rows))
    return (
        np.asarray(shifts, dtype=np.int64),
        np.array(weights, dtype=np.float64).reshape(len(shifts), dim),
        np.asarray(rows, dtype=np.int64),
        np.asarray(offs, dtype=np.int64),
    )
