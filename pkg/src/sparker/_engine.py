"""Compiled training loop.

Single-threaded per training run (bit-reproducible); the GIL is released so
independent runs can execute concurrently from a thread pool.  Semantics are
identical to the pure-numpy reference stepper in ``training.py``; the two are
cross-checked in the test suite.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOSS_NP = 0
LOSS_BCE = 1
LOSS_MSE = 2

STATUS_OK = 0
STATUS_NONFINITE = 1

# contributions smaller than exp(-45) of the dominant kernel are dropped
_NEGLIGIBLE = -45.0
# below this log value every kernel value is a hard zero in double precision
_ALL_UNDERFLOW = -745.0


# restricted fastmath: 'nnan'/'ninf' would constant-fold the divergence
# checks, and 'contract' would fma the width interpolation away from the
# schedule formula
@njit(cache=True, nogil=True, fastmath={"arcp", "reassoc", "nsz"})
def _run(X, is_data, pweights, w_ref, mu0, a0, sigma0, sigmaT, n_steps,
         eta, l2, clip, loss_code, use_softmax, ckpt_sigmas, traj_stride,
         update_locations):
    N, d = X.shape
    M = mu0.shape[0]
    mu = mu0.copy()
    a = a0.copy()

    n_ckpt = ckpt_sigmas.shape[0]
    ck_a = np.zeros((n_ckpt, M))
    ck_mu = np.zeros((n_ckpt, M, d))
    ck_step = np.full(n_ckpt, -1, dtype=np.int64)

    loss_hist = np.zeros(n_steps + 1)

    if traj_stride > 0:
        cap = n_steps // traj_stride + 2
    else:
        cap = 1
    traj_step = np.zeros(cap, dtype=np.int64)
    traj_sigma = np.zeros(cap)
    traj_a = np.zeros((cap, M))
    traj_mu = np.zeros((cap, M, d))
    n_traj = 0

    z = np.empty(M)
    k = np.empty(M)
    p = np.empty(M)
    ga = np.empty(M)
    gmu = np.empty((M, d))

    status = STATUS_OK
    fail_step = -1

    ci = 0
    while ci < n_ckpt and sigma0 <= ckpt_sigmas[ci]:
        ck_a[ci, :] = a
        ck_mu[ci, :, :] = mu
        ck_step[ci] = 0
        ci += 1
    if traj_stride > 0:
        traj_step[0] = 0
        traj_sigma[0] = sigma0
        traj_a[0, :] = a
        traj_mu[0, :, :] = mu
        n_traj = 1

    for t in range(n_steps + 1):
        if n_steps > 0:
            sigma = sigma0 - (sigma0 - sigmaT) * (t / n_steps)
        else:
            sigma = sigma0
        half = 0.5 / (sigma * sigma)
        inv_s2 = 1.0 / (sigma * sigma)

        loss = 0.0
        for i in range(M):
            ga[i] = 0.0
            for j in range(d):
                gmu[i, j] = 0.0

        for n in range(N):
            zmax = -np.inf
            for i in range(M):
                s = 0.0
                for j in range(d):
                    diff = X[n, j] - mu[i, j]
                    s += diff * diff
                zi = -s * half
                z[i] = zi
                if zi > zmax:
                    zmax = zi

            w = pweights[n]
            if is_data[n]:
                w_signed = -w
            else:
                w = w * w_ref
                w_signed = w

            if zmax < _ALL_UNDERFLOW:
                # every kernel value is exactly zero here: f = 0 and all
                # gradients vanish, but the surrogate losses still pay
                # their constant at f = 0
                if loss_code == LOSS_BCE:
                    loss += w * 0.6931471805599453
                elif loss_code == LOSS_MSE:
                    loss += w * 0.25
                continue

            f = 0.0
            if use_softmax:
                ssum = 0.0
                for i in range(M):
                    dz = z[i] - zmax
                    if dz < _NEGLIGIBLE:
                        p[i] = 0.0
                        k[i] = 0.0
                    else:
                        e = math.exp(dz)
                        p[i] = e
                        ssum += e
                ezmax = math.exp(zmax)
                for i in range(M):
                    if p[i] != 0.0:
                        p[i] /= ssum
                        k[i] = ezmax * p[i] * ssum  # = exp(z[i])
                        f += a[i] * p[i] * k[i]
            else:
                for i in range(M):
                    dz = z[i] - zmax
                    if dz < _NEGLIGIBLE:
                        k[i] = 0.0
                        p[i] = 0.0
                    else:
                        k[i] = math.exp(z[i])
                        p[i] = 1.0
                        f += a[i] * k[i]

            # per-point loss term and gradient multiplier g
            if loss_code == LOSS_NP:
                if is_data[n]:
                    loss += w_signed * f  # w_signed = -w
                    g = w_signed
                else:
                    ef = math.exp(f)
                    loss += w * (ef - 1.0)
                    g = w * ef
            elif loss_code == LOSS_BCE:
                if f >= 0.0:
                    sig = 1.0 / (1.0 + math.exp(-f))
                    sp_pos = f + math.log1p(math.exp(-f))
                    sp_neg = math.log1p(math.exp(-f))
                else:
                    ef = math.exp(f)
                    sig = ef / (1.0 + ef)
                    sp_pos = math.log1p(ef)
                    sp_neg = -f + math.log1p(ef)
                if is_data[n]:
                    loss += w * sp_neg
                    g = w_signed * (1.0 - sig)
                else:
                    loss += w * sp_pos
                    g = w * sig
            else:  # MSE
                if f >= 0.0:
                    sig = 1.0 / (1.0 + math.exp(-f))
                else:
                    ef = math.exp(f)
                    sig = ef / (1.0 + ef)
                if is_data[n]:
                    cm = 1.0 - sig
                    loss += w * cm * cm
                    g = w_signed * 2.0 * sig * cm * cm
                else:
                    loss += w * sig * sig
                    g = w * 2.0 * sig * sig * (1.0 - sig)

            if t == n_steps:
                continue  # final pass records the loss only

            if use_softmax:
                for i in range(M):
                    pki = p[i] * k[i]
                    if pki == 0.0 and p[i] == 0.0:
                        continue
                    ga[i] += g * pki
                    if update_locations:
                        coeff = g * inv_s2 * (2.0 * a[i] * k[i] - f) * p[i]
                        if coeff != 0.0:
                            for j in range(d):
                                gmu[i, j] += coeff * (X[n, j] - mu[i, j])
            else:
                for i in range(M):
                    ki = k[i]
                    if ki == 0.0:
                        continue
                    ga[i] += g * ki
                    if update_locations:
                        coeff = g * inv_s2 * a[i] * ki
                        for j in range(d):
                            gmu[i, j] += coeff * (X[n, j] - mu[i, j])

        loss_hist[t] = loss
        if not math.isfinite(loss):
            status = STATUS_NONFINITE
            fail_step = t
            break
        if t == n_steps:
            break

        ok = True
        for i in range(M):
            a[i] -= eta * (ga[i] + 2.0 * l2 * a[i])
            if clip < np.inf:
                if a[i] > clip:
                    a[i] = clip
                elif a[i] < -clip:
                    a[i] = -clip
            if not math.isfinite(a[i]):
                ok = False
            if update_locations:
                for j in range(d):
                    mu[i, j] -= eta * gmu[i, j]
                    if not math.isfinite(mu[i, j]):
                        ok = False
        if not ok:
            status = STATUS_NONFINITE
            fail_step = t
            break

        if n_steps > 0:
            sigma_next = sigma0 - (sigma0 - sigmaT) * ((t + 1) / n_steps)
        else:
            sigma_next = sigma0
        while ci < n_ckpt and sigma_next <= ckpt_sigmas[ci]:
            ck_a[ci, :] = a
            ck_mu[ci, :, :] = mu
            ck_step[ci] = t + 1
            ci += 1
        if traj_stride > 0 and ((t + 1) % traj_stride == 0 or t + 1 == n_steps):
            traj_step[n_traj] = t + 1
            traj_sigma[n_traj] = sigma_next
            traj_a[n_traj, :] = a
            traj_mu[n_traj, :, :] = mu
            n_traj += 1

    if status == STATUS_OK:
        # close any checkpoints missed by floating-point rounding of the
        # final width
        while ci < n_ckpt:
            ck_a[ci, :] = a
            ck_mu[ci, :, :] = mu
            ck_step[ci] = n_steps
            ci += 1

    return (a, mu, loss_hist, ck_a, ck_mu, ck_step,
            traj_step[:n_traj], traj_sigma[:n_traj],
            traj_a[:n_traj], traj_mu[:n_traj], status, fail_step)


def run_training(X, is_data, pweights, w_ref, mu0, a0, sigma0, sigmaT,
                 n_steps, eta, l2, clip, loss_code, use_softmax,
                 ckpt_sigmas, traj_stride, update_locations=True):
    """Typed wrapper around the compiled loop."""
    return _run(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(is_data, dtype=np.bool_),
        np.ascontiguousarray(pweights, dtype=np.float64),
        float(w_ref),
        np.ascontiguousarray(mu0, dtype=np.float64),
        np.ascontiguousarray(a0, dtype=np.float64),
        float(sigma0), float(sigmaT), int(n_steps),
        float(eta), float(l2), float(clip),
        int(loss_code), bool(use_softmax),
        np.ascontiguousarray(ckpt_sigmas, dtype=np.float64),
        int(traj_stride), bool(update_locations),
    )
