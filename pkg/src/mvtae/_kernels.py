"""Compiled inner loop for LSTM backpropagation through time.

Arrays are time-major: cs (N+1, B, H), acts and dz_all (N, B, 4H).
Gate order inside each 4H block is input, forget, cell-candidate, output.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def lstm_backward(grad_hs, dh_next, dc_next, wh, cs, acts, tanh_c, dz_all):
    """Fill ``dz_all`` with pre-activation gradients; updates dh_next/dc_next in place."""
    n, b, h4 = acts.shape
    hsz = h4 // 4
    for t in range(n - 1, -1, -1):
        for r in range(b):
            for j in range(hsz):
                i = acts[t, r, j]
                f = acts[t, r, hsz + j]
                g = acts[t, r, 2 * hsz + j]
                o = acts[t, r, 3 * hsz + j]
                tc = tanh_c[t, r, j]
                dh = dh_next[r, j] + grad_hs[t, r, j]
                dc = dc_next[r, j] + dh * o * (1.0 - tc * tc)
                dz_all[t, r, j] = dc * g * i * (1.0 - i)
                dz_all[t, r, hsz + j] = dc * cs[t, r, j] * f * (1.0 - f)
                dz_all[t, r, 2 * hsz + j] = dc * i * (1.0 - g * g)
                dz_all[t, r, 3 * hsz + j] = dh * tc * o * (1.0 - o)
                dc_next[r, j] = dc * f
        dh_next[:, :] = np.dot(dz_all[t], wh)
