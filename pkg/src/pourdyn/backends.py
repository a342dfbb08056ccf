"""Kernel backends for the recurrent stack.

``CompiledBackend`` drives the Cython kernels in ``_core``; ``PythonBackend``
loops over the reference cells in :mod:`pourdyn.cells`. Both process one
padded batch through every recurrent layer and return the top layer's
outputs as a ``(B, T, units)`` array that is zero past each sequence's
length. The dense head, dropout and loss live in :mod:`pourdyn.model`.

The default is chosen at import: the compiled core when it was built, else
the Python kernels. ``POURDYN_BACKEND=python`` forces the fallback.
"""

import os

import numpy as np

from .cells import GATES, CellKind, CellParams, CellState, GruVariant, cell_backward, step_forward

try:
    from . import _core
except ImportError:  # extension not built
    _core = None


class PythonBackend:
    name = "python"

    def prepare(self, params):
        return params.layers

    def forward(self, layers, inputs, lengths):
        B = len(lengths)
        T = int(max(lengths, default=0))
        top = np.zeros((B, T, layers[-1].units))
        seqs = []
        for b in range(B):
            inp = np.asarray(inputs[b, :lengths[b]], dtype=np.float64)
            record = []
            for p in layers:
                state = CellState.zeros(p.kind, p.units)
                H = np.empty((inp.shape[0], p.units))
                tapes = []
                for t in range(inp.shape[0]):
                    state, tape = step_forward(inp[t], state, p)
                    H[t] = state.h
                    tapes.append(tape)
                record.append((inp, H, tapes))
                inp = H
            top[b, :lengths[b]] = inp
            seqs.append(record)
        return {"seqs": seqs, "lengths": list(lengths), "top": top}

    def top(self, record):
        return record["top"]

    def grad_buffer(self, layers):
        return [CellParams.zeros(p.kind, p.input_dim, p.units, p.gru_variant) for p in layers]

    def backward(self, layers, record, d_top, buf):
        for b, seq in enumerate(record["seqs"]):
            dH = d_top[b, :record["lengths"][b]]
            for p, g, (inp, H, tapes) in reversed(list(zip(layers, buf, seq))):
                dX = np.zeros_like(inp)
                dh = np.zeros(p.units)
                dc = np.zeros(p.units) if p.kind is CellKind.LSTM else None
                for t in range(len(tapes) - 1, -1, -1):
                    dx, dprev, gp = cell_backward(tapes[t], dH[t] + dh, dc, p)
                    for acc, step in zip(g.arrays(), gp.arrays()):
                        acc += step
                    dX[t] = dx
                    dh, dc = dprev.h, dprev.c
                dH = dX

    def collect(self, layers, buf, grad):
        for g, out in zip(buf, grad.layers):
            for src, dst in zip(g.arrays(), out.arrays()):
                dst += src


class _Packed:
    """One layer's weights rearranged for the compiled kernels."""

    __slots__ = ("kind", "variant", "units", "input_dim", "wx", "wh", "wxT", "whT", "bx", "bh")

    def __init__(self, p):
        gates = GATES[p.kind]
        self.kind = p.kind
        self.variant = p.gru_variant
        self.units = p.units
        self.input_dim = p.input_dim
        self.wxT = np.ascontiguousarray(np.concatenate([p.wx[g] for g in gates], axis=0))
        self.whT = np.ascontiguousarray(np.concatenate([p.wh[g] for g in gates], axis=0))
        self.wx = np.ascontiguousarray(self.wxT.T)
        self.wh = np.ascontiguousarray(self.whT.T)
        self.bx = np.concatenate([p.bx[g] for g in gates])
        self.bh = np.concatenate([p.bh[g] for g in gates]) if p.bh else None

    @property
    def after(self):
        return self.kind is CellKind.GRU and self.variant is GruVariant.RESET_AFTER


_CACHE_WIDTH = {CellKind.SIMPLE: 0, CellKind.LSTM: 6, CellKind.GRU: 4}


class CompiledBackend:
    name = "cython"

    def __init__(self):
        if _core is None:
            raise RuntimeError("pourdyn._core is not built; reinstall with a C compiler available")

    def prepare(self, params):
        return [_Packed(p) for p in params.layers]

    def forward(self, packed, inputs, lengths):
        lengths = np.asarray(lengths, dtype=np.int64)
        B = len(lengths)
        # longest first, so the live rows at every step form a prefix
        order = np.argsort(-lengths, kind="stable")
        T = int(lengths.max()) if B else 0
        record = {"order": order, "T": T, "B": B, "layers": []}
        if T == 0:
            record["top"] = np.zeros((B, 0, packed[-1].units))
            return record
        nact = np.ascontiguousarray(
            (lengths[order][None, :] > np.arange(T)[:, None]).sum(axis=1), dtype=np.int64)
        record["nact"] = nact
        X = np.ascontiguousarray(np.asarray(inputs, dtype=np.float64)[order, :T].transpose(1, 0, 2))
        X[np.arange(B)[None, :] >= nact[:, None]] = 0.0
        for q in packed:
            H = np.zeros((T, B, q.units))
            cache = np.zeros((T, B, _CACHE_WIDTH[q.kind] * q.units))
            if q.kind is CellKind.SIMPLE:
                _core.simple_forward(X, nact, q.wx, q.wh, q.bx, H)
            elif q.kind is CellKind.LSTM:
                _core.lstm_forward(X, nact, q.wx, q.wh, q.bx, H, cache)
            elif q.after:
                _core.gru_after_forward(X, nact, q.wx, q.wh, q.bx, q.bh, H, cache)
            else:
                _core.gru_before_forward(X, nact, q.wx, q.wh, q.bx, H, cache)
            record["layers"].append((X, H, cache))
            X = H
        top = np.zeros((B, T, packed[-1].units))
        top[order] = X.transpose(1, 0, 2)
        record["top"] = top
        return record

    def top(self, record):
        return record["top"]

    def grad_buffer(self, packed):
        buf = []
        for q in packed:
            buf.append({
                "wx": np.zeros_like(q.wx),
                "wh": np.zeros_like(q.wh),
                "bx": np.zeros_like(q.bx),
                "bh": None if q.bh is None else np.zeros_like(q.bh),
            })
        return buf

    def backward(self, packed, record, d_top, buf):
        T, B, order = record["T"], record["B"], record["order"]
        if T == 0:
            return
        nact = record["nact"]
        dH = np.ascontiguousarray(np.asarray(d_top, dtype=np.float64)[order, :T].transpose(1, 0, 2))
        for depth in range(len(packed) - 1, -1, -1):
            q, g = packed[depth], buf[depth]
            X, H, cache = record["layers"][depth]
            need_dx = depth > 0
            dX = np.zeros_like(X) if need_dx else np.zeros((1, 1, 1))
            if q.kind is CellKind.SIMPLE:
                _core.simple_backward(X, H, nact, q.wxT, q.whT, dH, dX, need_dx,
                                      g["wx"], g["wh"], g["bx"])
            elif q.kind is CellKind.LSTM:
                _core.lstm_backward(X, H, cache, nact, q.wxT, q.whT, dH, dX, need_dx,
                                    g["wx"], g["wh"], g["bx"])
            elif q.after:
                _core.gru_after_backward(X, H, cache, nact, q.wxT, q.whT, dH, dX, need_dx,
                                         g["wx"], g["wh"], g["bx"], g["bh"])
            else:
                _core.gru_before_backward(X, H, cache, nact, q.wxT, q.whT, dH, dX, need_dx,
                                          g["wx"], g["wh"], g["bx"])
            dH = dX

    def collect(self, packed, buf, grad):
        for q, g, out in zip(packed, buf, grad.layers):
            u = q.units
            for n, gate in enumerate(GATES[q.kind]):
                cols = slice(n * u, (n + 1) * u)
                out.wx[gate] += g["wx"][:, cols].T
                out.wh[gate] += g["wh"][:, cols].T
                out.bx[gate] += g["bx"][cols]
                if g["bh"] is not None:
                    out.bh[gate] += g["bh"][cols]


def available():
    names = ["python"]
    if _core is not None:
        names.insert(0, "cython")
    return names


def get_backend(name=None):
    """Return a backend instance by name, or the import-time default."""
    if name is None:
        return DEFAULT
    if not isinstance(name, str):
        return name
    if name == "python":
        return PythonBackend()
    if name == "cython":
        return CompiledBackend()
    raise ValueError(f"unknown backend {name!r}; choose from {available()}")


def _default():
    forced = os.environ.get("POURDYN_BACKEND")
    if forced:
        return get_backend(forced)
    return CompiledBackend() if _core is not None else PythonBackend()


DEFAULT = _default()
