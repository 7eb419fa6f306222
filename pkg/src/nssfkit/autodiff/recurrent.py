"""Recurrent layers: LSTM / BLSTM and a complex-valued GRU.

Each layer exists twice. The ``*_cell`` functions are written with the
autodiff primitives and serve as the reference. The ``*_scan`` functions run
a whole sequence as a single graph node with hand-written backpropagation
through time, which is what the models use; the test-suite checks both
against each other and against finite differences.

Complex quantities are (real, imag) pairs. Gates act part-wise on the real
and imaginary components ("split" activations), which keeps every component
of the complex GRU state inside (-1, 1) when the candidate uses split tanh.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import ShapeError
from . import tensor as ad
from .tensor import Tensor, _sigmoid, as_tensor, make

MODRELU_EPS = 1e-12

_scan_dtype = [np.float64]


@contextmanager
def scan_precision(dtype):
    """Run LSTM scans in ``dtype`` (e.g. float32 for faster training).

    Inputs and outputs of the graph node stay float64; only the recurrence
    itself is computed at the lower precision.
    """
    prev = _scan_dtype[0]
    _scan_dtype[0] = np.dtype(dtype).type
    try:
        yield
    finally:
        _scan_dtype[0] = prev


# --------------------------------------------------------------------------
# parameter initialisation


def init_lstm(n_in: int, n_hidden: int, rng) -> dict:
    bound = 1.0 / np.sqrt(n_hidden)
    return {
        "W": Tensor(rng.uniform(-bound, bound, (n_in + n_hidden, 4 * n_hidden)), requires_grad=True),
        "b": Tensor(rng.uniform(-bound, bound, 4 * n_hidden), requires_grad=True),
    }


def init_cgru(n_in: int, n_hidden: int, rng, activation: str = "split_tanh") -> dict:
    bx = 1.0 / np.sqrt(2 * n_in)
    bh = 1.0 / np.sqrt(2 * n_hidden)

    def u(b, shape):
        return Tensor(rng.uniform(-b, b, shape), requires_grad=True)

    p = {
        "Wx_re": u(bx, (n_in, 3 * n_hidden)), "Wx_im": u(bx, (n_in, 3 * n_hidden)),
        "Wh_re": u(bh, (n_hidden, 3 * n_hidden)), "Wh_im": u(bh, (n_hidden, 3 * n_hidden)),
        "bx_re": u(bh, 3 * n_hidden), "bx_im": u(bh, 3 * n_hidden),
        "bh_re": u(bh, 3 * n_hidden), "bh_im": u(bh, 3 * n_hidden),
    }
    if activation == "modrelu":
        p["b_mod"] = Tensor(np.zeros(n_hidden), requires_grad=True)
    return p


# --------------------------------------------------------------------------
# LSTM


def lstm_cell(x, h_prev, c_prev, params):
    """Single LSTM step on (B, I) input; gate order i, f, g, o."""
    x, h_prev, c_prev = as_tensor(x), as_tensor(h_prev), as_tensor(c_prev)
    W, b = params["W"], params["b"]
    H = h_prev.shape[-1]
    if W.shape != (x.shape[-1] + H, 4 * H):
        raise ShapeError(f"lstm_cell: weight {W.shape} does not fit input {x.shape[-1]} / hidden {H}")
    z = ad.concat([x, h_prev], axis=-1) @ W + b
    i = ad.sigmoid(z[..., :H])
    f = ad.sigmoid(z[..., H:2 * H])
    g = ad.tanh(z[..., 2 * H:3 * H])
    o = ad.sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * ad.tanh(c)
    return h, c


def _gate_scale(H: int, dt):
    # sigmoid(x) = (1 + tanh(x / 2)) / 2, so one tanh call covers all gates
    scale = np.full(4 * H, 0.5, dtype=dt)
    scale[2 * H:3 * H] = 1.0
    return scale, 1.0 - scale


def _lstm_forward(zs: np.ndarray, Ws: np.ndarray, scale, offset):
    """Recurrence over pre-scaled projections ``zs`` (L, B, 4H), in step order."""
    L, B, H4 = zs.shape
    H = H4 // 4
    dt = zs.dtype
    hs = np.zeros((L + 1, B, H), dtype=dt)
    cs = np.zeros((L + 1, B, H), dtype=dt)
    gates = np.empty((L, 4, B, H), dtype=dt)  # gate-major keeps every update contiguous
    tc = np.empty((L, B, H), dtype=dt)
    tmp = np.empty((B, H), dtype=dt)
    z = np.empty((B, H4), dtype=dt)
    z_gates = z.reshape(B, 4, H).transpose(1, 0, 2)
    for t in range(L):
        np.matmul(hs[t], Ws, out=z)
        z += zs[t]
        np.tanh(z, out=z)
        z *= scale
        z += offset
        g = gates[t]
        g[...] = z_gates
        np.multiply(g[1], cs[t], out=cs[t + 1])
        np.multiply(g[0], g[2], out=tmp)
        cs[t + 1] += tmp
        np.tanh(cs[t + 1], out=tc[t])
        np.multiply(g[3], tc[t], out=hs[t + 1])
    return hs, cs, gates, tc


def _lstm_backward(dout: np.ndarray, W: np.ndarray, hs, cs, gates, tc):
    """BPTT in step order; returns d(pre-activation) (L, B, 4H) and d(Wh)."""
    L, _, B, H = gates.shape
    H4 = 4 * H
    dt = gates.dtype
    i, f, gg, o = gates[:, 0], gates[:, 1], gates[:, 2], gates[:, 3]
    # local derivatives that do not depend on the incoming gradient
    fac = np.empty_like(gates)
    fac[:, 0] = gg * i * (1.0 - i)
    fac[:, 1] = cs[:-1] * f * (1.0 - f)
    fac[:, 2] = i * (1.0 - gg * gg)
    fac[:, 3] = tc * o * (1.0 - o)
    d_c = o * (1.0 - tc * tc)
    dzg = np.empty_like(gates)
    dz = np.empty((B, 4, H), dtype=dt)
    dz_gates, dz_flat = dz.transpose(1, 0, 2), dz.reshape(B, H4)
    dh = np.zeros((B, H), dtype=dt)
    dc = np.zeros((B, H), dtype=dt)
    tmp = np.empty((B, H), dtype=dt)
    WT = np.ascontiguousarray(W.T)
    for t in range(L - 1, -1, -1):
        dh += dout[t]
        np.multiply(dh, d_c[t], out=tmp)
        dc += tmp
        d = dzg[t]
        np.multiply(dc, fac[t, :3], out=d[:3])
        np.multiply(dh, fac[t, 3], out=d[3])
        dc *= f[t]
        dz_gates[...] = d
        np.matmul(dz_flat, WT, out=dh)
    dzx = dzg.transpose(0, 2, 1, 3).reshape(L, B, H4)
    dW = hs[:-1].reshape(-1, H).T @ dzx.reshape(-1, H4)
    return dzx, dW


def lstm_scan(zx, Wh) -> Tensor:
    """Run LSTM recurrences over precomputed input projections.

    ``zx`` is (L, B, 4H) and already contains the input term and bias,
    ``Wh`` is (H, 4H). Initial state is zero. Returns hidden states (L, B, H).
    """
    zx, Wh = as_tensor(zx), as_tensor(Wh)
    if zx.ndim != 3:
        raise ShapeError(f"lstm_scan expects (L, B, 4H) projections, got {zx.shape}")
    L, B, H4 = zx.shape
    H = H4 // 4
    if Wh.shape != (H, H4):
        raise ShapeError(f"lstm_scan: recurrent weight {Wh.shape} does not fit {H} units")
    dt = _scan_dtype[0]
    W = Wh.data.astype(dt)
    scale, offset = _gate_scale(H, dt)
    state = _lstm_forward(zx.data.astype(dt) * scale, W * scale, scale, offset)

    def back(dout):
        dzx, dW = _lstm_backward(dout.astype(dt, copy=False), W, *state)
        return dzx.astype(np.float64), dW.astype(np.float64)

    return make(state[0][1:].astype(np.float64), (zx, Wh), back, "lstm_scan")


def lstm_layer(x, params, reverse: bool = False) -> Tensor:
    """Unidirectional LSTM over (L, B, I); returns (L, B, H).

    Input projection, bias and recurrence form one graph node so that the
    whole layer runs at the scan precision.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"lstm_layer expects (L, B, I) input, got {x.shape}")
    L, B, n_in = x.shape
    W, b = params["W"], params["b"]
    H4 = W.shape[1]
    H = H4 // 4
    if W.shape != (n_in + H, H4) or b.shape != (H4,):
        raise ShapeError(f"lstm_layer: weight {W.shape} does not fit input size {n_in}")
    dt = _scan_dtype[0]
    Wd = W.data.astype(dt)
    scale, offset = _gate_scale(H, dt)
    xd = x.data.astype(dt)
    if reverse:
        xd = xd[::-1]
    zs = (xd.reshape(L * B, n_in) @ (Wd[:n_in] * scale) + b.data.astype(dt) * scale).reshape(L, B, H4)
    state = _lstm_forward(zs, Wd[n_in:] * scale, scale, offset)
    out = state[0][1:]

    def back(dout):
        dout = dout.astype(dt, copy=False)
        dzx, dWh = _lstm_backward(dout[::-1] if reverse else dout, Wd[n_in:], *state)
        flat = dzx.reshape(L * B, H4)
        dWx = xd.reshape(L * B, n_in).T @ flat
        dx = (flat @ Wd[:n_in].T).reshape(L, B, n_in)
        if reverse:
            dx = dx[::-1]
        dW = np.concatenate([dWx, dWh]).astype(np.float64)
        return dx.astype(np.float64), dW, flat.sum(axis=0).astype(np.float64)

    return make((out[::-1] if reverse else out).astype(np.float64), (x, W, b), back, "lstm_layer")


def bilstm_layer(x, params_fwd, params_bwd) -> Tensor:
    """Bidirectional LSTM; output (L, B, 2H) = [forward | backward]."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ShapeError("bilstm_layer expects a non-empty (L, B, I) sequence")
    return ad.concat([lstm_layer(x, params_fwd), lstm_layer(x, params_bwd, reverse=True)], axis=-1)


# --------------------------------------------------------------------------
# complex activations


def split_tanh(z):
    return ad.tanh(z[0]), ad.tanh(z[1])


def split_sigmoid(z):
    return ad.sigmoid(z[0]), ad.sigmoid(z[1])


def modrelu(z, bias):
    """relu(|z| + b) * z / |z| on a (real, imag) pair."""
    re, im = z
    mag = ad.sqrt(ad.square(re) + ad.square(im) + MODRELU_EPS)
    scale = ad.clip(mag + bias, 0.0, np.inf) / mag
    return re * scale, im * scale


def _modrelu_np(re, im, bias):
    mag = np.sqrt(re ** 2 + im ** 2 + MODRELU_EPS)
    act = np.maximum(mag + bias, 0.0)
    s = act / mag
    return re * s, im * s, mag, s, (mag + bias) >= 0


def _modrelu_back(gr, gi, re, im, mag, s, on):
    k = (on - s) / mag / mag       # (d scale / d mag) / mag
    cross = re * im * k
    dre = gr * (s + re * re * k) + gi * cross
    dim = gr * cross + gi * (s + im * im * k)
    dbias = on * (gr * re + gi * im) / mag
    return dre, dim, dbias


# --------------------------------------------------------------------------
# complex GRU


def gru_cell_complex(x, h_prev, params, activation: str = "split_tanh"):
    """One complex GRU step; ``x`` (B, I) and ``h_prev`` (B, H) are pairs.

    Pre-activations use complex matrix products. The update gate z and
    reset gate r are split sigmoids applied part-wise, the candidate uses
    split tanh or modReLU, and h = n + z * (h_prev - n) part-wise.
    """
    xr, xi = as_tensor(x[0]), as_tensor(x[1])
    hr, hi = as_tensor(h_prev[0]), as_tensor(h_prev[1])
    H = hr.shape[-1]
    if params["Wh_re"].shape != (H, 3 * H) or params["Wx_re"].shape[0] != xr.shape[-1]:
        raise ShapeError("gru_cell_complex: parameter shapes do not fit the input")
    ar, ai = ad.complex_matmul((xr, xi), (params["Wx_re"], params["Wx_im"]))
    ar, ai = ar + params["bx_re"], ai + params["bx_im"]
    ur, ui = ad.complex_matmul((hr, hi), (params["Wh_re"], params["Wh_im"]))
    ur, ui = ur + params["bh_re"], ui + params["bh_im"]
    zr, zi = split_sigmoid((ar[..., :H] + ur[..., :H], ai[..., :H] + ui[..., :H]))
    rr, ri = split_sigmoid((ar[..., H:2 * H] + ur[..., H:2 * H], ai[..., H:2 * H] + ui[..., H:2 * H]))
    npre = (ar[..., 2 * H:] + rr * ur[..., 2 * H:], ai[..., 2 * H:] + ri * ui[..., 2 * H:])
    if activation == "split_tanh":
        nr, ni = split_tanh(npre)
    elif activation == "modrelu":
        nr, ni = modrelu(npre, params["b_mod"])
    else:
        raise ValueError(f"unknown candidate activation {activation!r}")
    return nr + zr * (hr - nr), ni + zi * (hi - ni)


def cgru_scan(a, params, activation: str = "split_tanh") -> Tensor:
    """Complex GRU over precomputed input projections.

    ``a`` is a pair of (L, B, 3H) tensors holding x @ Wx + bx. Initial state
    is zero. Returns (L, B, 2H) with real parts first, then imaginary parts.
    """
    ar, ai = as_tensor(a[0]), as_tensor(a[1])
    L, B, H3 = ar.shape
    H = H3 // 3
    Whr, Whi = params["Wh_re"], params["Wh_im"]
    bhr, bhi = params["bh_re"], params["bh_im"]
    if Whr.shape != (H, H3) or ai.shape != ar.shape:
        raise ShapeError("cgru_scan: parameter shapes do not fit the input")
    use_mod = activation == "modrelu"
    if not use_mod and activation != "split_tanh":
        raise ValueError(f"unknown candidate activation {activation!r}")
    bm = params["b_mod"] if use_mod else None
    Wr, Wi = Whr.data, Whi.data

    hr = np.zeros((L + 1, B, H))
    hi = np.zeros((L + 1, B, H))
    zs = np.empty((2, L, B, H))
    rs = np.empty((2, L, B, H))
    un = np.empty((2, L, B, H))
    nn = np.empty((2, L, B, H))
    npre = np.empty((2, L, B, H))
    mod_cache = []
    for t in range(L):
        ur = hr[t] @ Wr - hi[t] @ Wi + bhr.data
        ui = hr[t] @ Wi + hi[t] @ Wr + bhi.data
        zs[0, t] = _sigmoid(ar.data[t, :, :H] + ur[:, :H])
        zs[1, t] = _sigmoid(ai.data[t, :, :H] + ui[:, :H])
        rs[0, t] = _sigmoid(ar.data[t, :, H:2 * H] + ur[:, H:2 * H])
        rs[1, t] = _sigmoid(ai.data[t, :, H:2 * H] + ui[:, H:2 * H])
        un[0, t] = ur[:, 2 * H:]
        un[1, t] = ui[:, 2 * H:]
        npre[0, t] = ar.data[t, :, 2 * H:] + rs[0, t] * un[0, t]
        npre[1, t] = ai.data[t, :, 2 * H:] + rs[1, t] * un[1, t]
        if use_mod:
            nr_, ni_, mag, s, on = _modrelu_np(npre[0, t], npre[1, t], bm.data)
            nn[0, t], nn[1, t] = nr_, ni_
            mod_cache.append((mag, s, on))
        else:
            nn[0, t] = np.tanh(npre[0, t])
            nn[1, t] = np.tanh(npre[1, t])
        hr[t + 1] = nn[0, t] + zs[0, t] * (hr[t] - nn[0, t])
        hi[t + 1] = nn[1, t] + zs[1, t] * (hi[t] - nn[1, t])

    def back(dout):
        dar = np.empty((L, B, H3))
        dai = np.empty((L, B, H3))
        dWr = np.zeros_like(Wr)
        dWi = np.zeros_like(Wi)
        dbr = np.zeros(H3)
        dbi = np.zeros(H3)
        dbm = np.zeros(H) if use_mod else None
        cr = np.zeros((B, H))
        ci = np.zeros((B, H))
        WrT, WiT = Wr.T, Wi.T
        for t in range(L - 1, -1, -1):
            gr = cr + dout[t, :, :H]
            gi = ci + dout[t, :, H:]
            zr, zi = zs[0, t], zs[1, t]
            dnr = gr * (1.0 - zr)
            dni = gi * (1.0 - zi)
            dzr = gr * (hr[t] - nn[0, t]) * zr * (1.0 - zr)
            dzi = gi * (hi[t] - nn[1, t]) * zi * (1.0 - zi)
            cr = gr * zr
            ci = gi * zi
            if use_mod:
                mag, s, on = mod_cache[t]
                dpr, dpi, db = _modrelu_back(dnr, dni, npre[0, t], npre[1, t], mag, s, on)
                dbm += db.sum(axis=0)
            else:
                dpr = dnr * (1.0 - nn[0, t] ** 2)
                dpi = dni * (1.0 - nn[1, t] ** 2)
            rr, ri = rs[0, t], rs[1, t]
            drr = dpr * un[0, t] * rr * (1.0 - rr)
            dri = dpi * un[1, t] * ri * (1.0 - ri)
            dar[t, :, :H], dai[t, :, :H] = dzr, dzi
            dar[t, :, H:2 * H], dai[t, :, H:2 * H] = drr, dri
            dar[t, :, 2 * H:], dai[t, :, 2 * H:] = dpr, dpi
            dur = np.concatenate([dzr, drr, dpr * rr], axis=1)
            dui = np.concatenate([dzi, dri, dpi * ri], axis=1)
            dWr += hr[t].T @ dur + hi[t].T @ dui
            dWi += hr[t].T @ dui - hi[t].T @ dur
            dbr += dur.sum(axis=0)
            dbi += dui.sum(axis=0)
            cr = cr + dur @ WrT + dui @ WiT
            ci = ci + dui @ WrT - dur @ WiT
        grads = (dar, dai, dWr, dWi, dbr, dbi)
        return grads + ((dbm,) if use_mod else ())

    parents = (ar, ai, Whr, Whi, bhr, bhi) + ((bm,) if use_mod else ())
    out = np.concatenate([hr[1:], hi[1:]], axis=-1)
    return make(out, parents, back, "cgru_scan")


def cgru_layer(x, params, activation: str = "split_tanh"):
    """Complex GRU over a (L, B, I) pair; returns a (L, B, H) pair."""
    xr, xi = as_tensor(x[0]), as_tensor(x[1])
    L, B, n_in = xr.shape
    H3 = params["Wx_re"].shape[1]
    flat = (xr.reshape(L * B, n_in), xi.reshape(L * B, n_in))
    ar, ai = ad.complex_matmul(flat, (params["Wx_re"], params["Wx_im"]))
    ar = (ar + params["bx_re"]).reshape(L, B, H3)
    ai = (ai + params["bx_im"]).reshape(L, B, H3)
    out = cgru_scan((ar, ai), params, activation)
    H = H3 // 3
    return out[..., :H], out[..., H:]
