"""Numba kernels for the hot paths: policy evaluation and greedy stitching.

Every policy evaluation in the package funnels through these kernels (single
state, batch, and inside the stitcher) so that results are bitwise identical
across code paths; numpy's SIMD exp differs from libm by ULPs, which would
otherwise leak into the stitching argmin and break exact-recovery checks.

Accumulations are plain sequential loops; keep them that way, the pure-numpy
fallback in mfmc.py mirrors the same order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

POLICY_RBF = 0
POLICY_INVDIST = 1


@njit(cache=True)
def _eval_one(kind, phi, centers, width, eps, pol_scale, act_lo, act_hi, s, out):
    M = centers.shape[0]
    d_s = centers.shape[1]
    d_a = phi.shape[1]
    for j in range(d_a):
        out[j] = 0.0
    for i in range(M):
        r2 = 0.0
        for d in range(d_s):
            z = pol_scale[d] * (s[d] - centers[i, d])
            r2 += z * z
        if kind == POLICY_RBF:
            w = np.exp(-width * r2)
        else:
            r = np.sqrt(r2)
            if r < eps:
                r = eps
            w = 1.0 / r
        for j in range(d_a):
            out[j] += phi[i, j] * w
    for j in range(d_a):
        if out[j] < act_lo[j]:
            out[j] = act_lo[j]
        elif out[j] > act_hi[j]:
            out[j] = act_hi[j]


@njit(cache=True)
def policy_eval_batch(kind, phi, centers, width, eps, pol_scale, act_lo, act_hi, states):
    """Evaluate a basis-function policy on a (B, d_S) batch -> (B, d_A)."""
    B = states.shape[0]
    d_a = phi.shape[1]
    out = np.empty((B, d_a))
    for b in range(B):
        _eval_one(kind, phi, centers, width, eps, pol_scale, act_lo, act_hi, states[b], out[b])
    return out


@njit(cache=True)
def stitch_kernel(
    S, A, SN, mask,
    start, T, n_tilde,
    ws, wa,
    kind, phi, centers, width, eps, pol_scale, act_lo, act_hi,
):
    """Greedily stitch n_tilde episodes from the pool, consuming transitions.

    At each step the available transition minimizing
        ||s_i - s~||_ws + ||a_i - a~||_wa   (weighted Euclidean norms)
    is selected; ties go to the lowest index.  The mask is shared across all
    episodes of the call.  Also records the unmasked minimum for the
    depleted-pool vs full-pool diagnostic.
    """
    n = S.shape[0]
    d_s = S.shape[1]
    d_a = A.shape[1]
    states = np.empty((n_tilde, T + 1, d_s))
    actions = np.empty((n_tilde, T, d_a))
    deltas = np.empty((n_tilde, T))
    full_deltas = np.empty((n_tilde, T))
    chosen = np.empty((n_tilde, T), dtype=np.int64)
    act = np.empty(d_a)
    for ep in range(n_tilde):
        for d in range(d_s):
            states[ep, 0, d] = start[d]
        for t in range(T):
            _eval_one(kind, phi, centers, width, eps, pol_scale, act_lo, act_hi,
                      states[ep, t], act)
            for j in range(d_a):
                actions[ep, t, j] = act[j]
            best = np.inf
            best_i = -1
            full_best = np.inf
            for i in range(n):
                ds2 = 0.0
                for d in range(d_s):
                    z = ws[d] * (S[i, d] - states[ep, t, d])
                    ds2 += z * z
                da2 = 0.0
                for j in range(d_a):
                    z = wa[j] * (A[i, j] - act[j])
                    da2 += z * z
                dist = np.sqrt(ds2) + np.sqrt(da2)
                if dist < full_best:
                    full_best = dist
                if mask[i] and dist < best:
                    best = dist
                    best_i = i
            if best_i < 0:
                # pool exhausted; caller pre-checks capacity, keep a sentinel
                chosen[ep, t] = -1
                deltas[ep, t] = np.nan
                return states, actions, deltas, full_deltas, chosen
            mask[best_i] = False
            chosen[ep, t] = best_i
            deltas[ep, t] = best
            full_deltas[ep, t] = full_best
            for d in range(d_s):
                states[ep, t + 1, d] = SN[best_i, d]
    return states, actions, deltas, full_deltas, chosen
