"""Hot recurrent-sequence kernels.

Both the per-agent trajectory encoder and the global-state encoder unroll a
GRU over whole padded episode batches, which makes the time loop the single
hottest spot in training.  The input-side projections are plain BLAS matmuls
and stay outside; these kernels only run the sequential part:

    gh_t = h_{t-1} @ Whh.T + bhh
    r    = sigmoid(gi_r + gh_r)
    z    = sigmoid(gi_z + gh_z)
    n    = tanh(gi_n + r * gh_n)
    h_t  = (1 - z) * n + z * h_{t-1}

with gate order (r, z, n) and ``gi = x @ Wih.T + bih`` precomputed for all
timesteps at once.  Each kernel exists as a numba ``@njit`` build and a
vectorized numpy fallback; `acorm.backend` picks which one runs.
"""

import numpy as np

from . import backend


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------


def gru_seq_forward_numpy(gi, h0, whh_t, bhh):
    """Run the recurrence. gi: (T,B,3H), h0: (B,H), whh_t: (H,3H), bhh: (3H,).

    Returns (h, r, z, n, ghn), each (T,B,H); ghn caches the hidden-side
    candidate pre-activation needed by the backward pass.
    """
    T, B, H3 = gi.shape
    H = H3 // 3
    h = np.empty((T, B, H))
    r = np.empty((T, B, H))
    z = np.empty((T, B, H))
    n = np.empty((T, B, H))
    ghn = np.empty((T, B, H))
    hp = h0
    for t in range(T):
        gh = hp @ whh_t + bhh
        rt = _sigmoid(gi[t, :, :H] + gh[:, :H])
        zt = _sigmoid(gi[t, :, H : 2 * H] + gh[:, H : 2 * H])
        gn = gh[:, 2 * H :]
        nt = np.tanh(gi[t, :, 2 * H :] + rt * gn)
        hp = (1.0 - zt) * nt + zt * hp
        r[t] = rt
        z[t] = zt
        n[t] = nt
        ghn[t] = gn
        h[t] = hp
    return h, r, z, n, ghn


def gru_seq_backward_numpy(dh_out, h, r, z, n, ghn, h0, whh):
    """Backward through the recurrence.

    dh_out: (T,B,H) upstream gradient injected at every step.  Returns
    (dgi, dgh, dh0) where dgi/dgh are the gate pre-activation gradients
    (T,B,3H) for the outer input/hidden weight GEMMs.
    """
    T, B, H = dh_out.shape
    dgi = np.empty((T, B, 3 * H))
    dgh = np.empty((T, B, 3 * H))
    carry = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        hp = h[t - 1] if t > 0 else h0
        dh = carry + dh_out[t]
        rt, zt, nt, gn = r[t], z[t], n[t], ghn[t]
        dn = dh * (1.0 - zt)
        dz = dh * (hp - nt)
        dnp = dn * (1.0 - nt * nt)
        dghn = dnp * rt
        dr = dnp * gn
        drp = dr * rt * (1.0 - rt)
        dzp = dz * zt * (1.0 - zt)
        dgi[t, :, :H] = drp
        dgi[t, :, H : 2 * H] = dzp
        dgi[t, :, 2 * H :] = dnp
        dgh[t, :, :H] = drp
        dgh[t, :, H : 2 * H] = dzp
        dgh[t, :, 2 * H :] = dghn
        carry = dh * zt + dgh[t] @ whh
    return dgi, dgh, carry


# ---------------------------------------------------------------------------
# numba build
# ---------------------------------------------------------------------------

if backend.HAS_NUMBA:
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def _gru_seq_forward_numba(gi, h0, whh_t, bhh, h, r, z, n, ghn):
        T, B, H3 = gi.shape
        H = H3 // 3
        hp = h0.copy()
        for t in range(T):
            gh = np.dot(hp, whh_t)
            for b in prange(B):
                for k in range(H):
                    rr = 1.0 / (1.0 + np.exp(-(gi[t, b, k] + gh[b, k] + bhh[k])))
                    zz = 1.0 / (1.0 + np.exp(-(gi[t, b, H + k] + gh[b, H + k] + bhh[H + k])))
                    gn = gh[b, 2 * H + k] + bhh[2 * H + k]
                    nn = np.tanh(gi[t, b, 2 * H + k] + rr * gn)
                    hn = (1.0 - zz) * nn + zz * hp[b, k]
                    r[t, b, k] = rr
                    z[t, b, k] = zz
                    n[t, b, k] = nn
                    ghn[t, b, k] = gn
                    h[t, b, k] = hn
                    hp[b, k] = hn

    @njit(cache=True, parallel=True)
    def _gru_seq_backward_numba(dh_out, h, r, z, n, ghn, h0, whh, dgi, dgh):
        T, B, H = dh_out.shape
        carry = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            for b in prange(B):
                for k in range(H):
                    hp = h[t - 1, b, k] if t > 0 else h0[b, k]
                    dh = carry[b, k] + dh_out[t, b, k]
                    rt = r[t, b, k]
                    zt = z[t, b, k]
                    nt = n[t, b, k]
                    dn = dh * (1.0 - zt)
                    dz = dh * (hp - nt)
                    dnp = dn * (1.0 - nt * nt)
                    dghn = dnp * rt
                    dr = dnp * ghn[t, b, k]
                    drp = dr * rt * (1.0 - rt)
                    dzp = dz * zt * (1.0 - zt)
                    dgi[t, b, k] = drp
                    dgi[t, b, H + k] = dzp
                    dgi[t, b, 2 * H + k] = dnp
                    dgh[t, b, k] = drp
                    dgh[t, b, H + k] = dzp
                    dgh[t, b, 2 * H + k] = dghn
                    carry[b, k] = dh * zt
            carry = carry + np.dot(dgh[t], whh)
        return carry

else:  # pragma: no cover - exercised only when numba is absent
    _gru_seq_forward_numba = None
    _gru_seq_backward_numba = None


def gru_seq_forward(gi, h0, whh_t, bhh):
    if backend.use_numba():
        T, B, H3 = gi.shape
        H = H3 // 3
        h = np.empty((T, B, H))
        r = np.empty((T, B, H))
        z = np.empty((T, B, H))
        n = np.empty((T, B, H))
        ghn = np.empty((T, B, H))
        _gru_seq_forward_numba(gi, h0, whh_t, bhh, h, r, z, n, ghn)
        return h, r, z, n, ghn
    return gru_seq_forward_numpy(gi, h0, whh_t, bhh)


def gru_seq_backward(dh_out, h, r, z, n, ghn, h0, whh):
    if backend.use_numba():
        T, B, H = dh_out.shape
        dgi = np.empty((T, B, 3 * H))
        dgh = np.empty((T, B, 3 * H))
        dh0 = _gru_seq_backward_numba(dh_out, h, r, z, n, ghn, h0, whh, dgi, dgh)
        return dgi, dgh, dh0
    return gru_seq_backward_numpy(dh_out, h, r, z, n, ghn, h0, whh)
