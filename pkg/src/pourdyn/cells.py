"""Reference single-step forward/backward for the three recurrent cells.

These functions are the readable definition of the math. The compiled
kernels in ``_core`` fuse the same steps over a whole sequence; the
pure-Python backend loops over these functions directly.

Conventions, per gate ``g``: an input kernel ``wx[g]`` of shape
``(units, input_dim)``, a recurrent kernel ``wh[g]`` of shape
``(units, units)``, a bias ``bx[g]`` and, for reset-after GRUs only, a second
recurrent-side bias ``bh[g]``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .numerics import ShapeError, matvec, sigmoid, sigmoid_deriv, tanh_act, tanh_deriv


class CellKind(str, Enum):
    SIMPLE = "simple"
    LSTM = "lstm"
    GRU = "gru"


class GruVariant(str, Enum):
    RESET_BEFORE = "reset_before"
    RESET_AFTER = "reset_after"


GATES = {
    CellKind.SIMPLE: ("h",),
    CellKind.LSTM: ("i", "f", "c", "o"),
    CellKind.GRU: ("z", "r", "h"),
}


def has_recurrent_bias(kind, variant):
    return kind is CellKind.GRU and variant is GruVariant.RESET_AFTER


def layer_param_count(kind, input_dim, units, variant=GruVariant.RESET_AFTER):
    kind, variant = CellKind(kind), GruVariant(variant)
    per_gate = units * (input_dim + units) + units
    if has_recurrent_bias(kind, variant):
        per_gate += units
    return len(GATES[kind]) * per_gate


@dataclass
class CellParams:
    kind: CellKind
    input_dim: int
    units: int
    wx: dict
    wh: dict
    bx: dict
    bh: dict = field(default_factory=dict)
    gru_variant: GruVariant = GruVariant.RESET_AFTER

    @property
    def gates(self):
        return GATES[self.kind]

    def arrays(self):
        """Yield every parameter array in flat (gate, then row) order."""
        for g in self.gates:
            yield self.wx[g]
            yield self.wh[g]
            yield self.bx[g]
            if g in self.bh:
                yield self.bh[g]

    @property
    def size(self):
        return layer_param_count(self.kind, self.input_dim, self.units, self.gru_variant)

    @classmethod
    def from_flat(cls, kind, input_dim, units, variant, buf):
        """Build a parameter set whose arrays are views into ``buf``."""
        kind, variant = CellKind(kind), GruVariant(variant)
        expected = layer_param_count(kind, input_dim, units, variant)
        if buf.shape != (expected,):
            raise ShapeError(f"{kind.value} layer needs {expected} values, got {buf.shape}")
        wx, wh, bx, bh = {}, {}, {}, {}
        pos = 0

        def take(*shape):
            nonlocal pos
            n = int(np.prod(shape))
            view = buf[pos:pos + n].reshape(shape)
            pos += n
            return view

        for g in GATES[kind]:
            wx[g] = take(units, input_dim)
            wh[g] = take(units, units)
            bx[g] = take(units)
            if has_recurrent_bias(kind, variant):
                bh[g] = take(units)
        return cls(kind, input_dim, units, wx, wh, bx, bh, variant)

    @classmethod
    def zeros(cls, kind, input_dim, units, variant=GruVariant.RESET_AFTER):
        n = layer_param_count(kind, input_dim, units, variant)
        return cls.from_flat(kind, input_dim, units, variant, np.zeros(n))

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray = None

    @classmethod
    def zeros(cls, kind, units):
        c = np.zeros(units) if CellKind(kind) is CellKind.LSTM else None
        return cls(np.zeros(units), c)


@dataclass
class CellTape:
    kind: CellKind
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    cache: dict
    h: np.ndarray
    c: np.ndarray = None


def _check(x, prev, p, kind):
    if p.kind is not kind:
        raise ShapeError(f"expected {kind.value} parameters, got {p.kind.value}")
    if x.shape != (p.input_dim,):
        raise ShapeError(f"input {x.shape} does not match input_dim {p.input_dim}")
    if prev.h.shape != (p.units,):
        raise ShapeError(f"state {prev.h.shape} does not match units {p.units}")
    if kind is CellKind.LSTM and (prev.c is None or prev.c.shape != (p.units,)):
        raise ShapeError("LSTM needs a cell state of length units")


def simple_forward(x, prev, p):
    x = np.asarray(x, dtype=np.float64)
    _check(x, prev, p, CellKind.SIMPLE)
    h = tanh_act((matvec(p.wx["h"], x) + matvec(p.wh["h"], prev.h)) + p.bx["h"])
    return CellState(h), CellTape(CellKind.SIMPLE, x, prev.h, None, {}, h)


def lstm_forward(x, prev, p):
    x = np.asarray(x, dtype=np.float64)
    _check(x, prev, p, CellKind.LSTM)

    def pre(g):
        return (matvec(p.wx[g], x) + matvec(p.wh[g], prev.h)) + p.bx[g]

    i = sigmoid(pre("i"))
    f = sigmoid(pre("f"))
    g = tanh_act(pre("c"))
    o = sigmoid(pre("o"))
    c = f * prev.c + i * g
    h = o * tanh_act(c)
    tape = CellTape(CellKind.LSTM, x, prev.h, prev.c, {"i": i, "f": f, "c": g, "o": o}, h, c)
    return CellState(h, c), tape


def gru_forward(x, prev, p):
    x = np.asarray(x, dtype=np.float64)
    _check(x, prev, p, CellKind.GRU)
    hp = prev.h
    if p.gru_variant is GruVariant.RESET_AFTER:
        z = sigmoid((matvec(p.wx["z"], x) + p.bx["z"]) + (matvec(p.wh["z"], hp) + p.bh["z"]))
        r = sigmoid((matvec(p.wx["r"], x) + p.bx["r"]) + (matvec(p.wh["r"], hp) + p.bh["r"]))
        hn = matvec(p.wh["h"], hp) + p.bh["h"]
        n = tanh_act((matvec(p.wx["h"], x) + p.bx["h"]) + r * hn)
        cache = {"z": z, "r": r, "h": n, "hn": hn}
    else:
        z = sigmoid((matvec(p.wx["z"], x) + matvec(p.wh["z"], hp)) + p.bx["z"])
        r = sigmoid((matvec(p.wx["r"], x) + matvec(p.wh["r"], hp)) + p.bx["r"])
        n = tanh_act((matvec(p.wx["h"], x) + matvec(p.wh["h"], r * hp)) + p.bx["h"])
        cache = {"z": z, "r": r, "h": n}
    h = (1.0 - z) * hp + z * n
    return CellState(h), CellTape(CellKind.GRU, x, hp, None, cache, h)


FORWARD = {
    CellKind.SIMPLE: simple_forward,
    CellKind.LSTM: lstm_forward,
    CellKind.GRU: gru_forward,
}


def step_forward(x, prev, p):
    return FORWARD[p.kind](x, prev, p)


def cell_backward(tape, grad_h, grad_c, p):
    """Backpropagate one step.

    ``grad_h`` (and ``grad_c`` for LSTMs, may be None) are the total upstream
    gradients with respect to this step's outputs. Returns
    ``(grad_x, CellState(grad_h_prev, grad_c_prev), CellParams gradient)``.
    """
    if tape.kind is not p.kind:
        raise ShapeError(f"tape is {tape.kind.value} but parameters are {p.kind.value}")
    grad_h = np.asarray(grad_h, dtype=np.float64)
    grads = CellParams.zeros(p.kind, p.input_dim, p.units, p.gru_variant)
    x, hp = tape.x, tape.h_prev
    dx = np.zeros(p.input_dim)
    dhp = np.zeros(p.units)
    dcp = None

    def add_gate(g, da_x, da_h, h_in):
        # da_x feeds the input kernel and bias; da_h feeds the recurrent kernel
        nonlocal dx, dhp
        grads.wx[g][...] = np.outer(da_x, x)
        grads.bx[g][...] = da_x
        grads.wh[g][...] = np.outer(da_h, h_in)
        if g in grads.bh:
            grads.bh[g][...] = da_h
        dx = dx + matvec(p.wx[g].T, da_x)
        return matvec(p.wh[g].T, da_h)

    if p.kind is CellKind.SIMPLE:
        da = grad_h * tanh_deriv(tape.h)
        dhp = add_gate("h", da, da, hp)
    elif p.kind is CellKind.LSTM:
        c = tape.cache
        tc = tanh_act(tape.c)
        dc = (np.zeros(p.units) if grad_c is None else np.asarray(grad_c, dtype=np.float64))
        dc = dc + grad_h * c["o"] * tanh_deriv(tc)
        da = {
            "i": dc * c["c"] * sigmoid_deriv(c["i"]),
            "f": dc * tape.c_prev * sigmoid_deriv(c["f"]),
            "c": dc * c["i"] * tanh_deriv(c["c"]),
            "o": grad_h * tc * sigmoid_deriv(c["o"]),
        }
        for g in p.gates:
            dhp = dhp + add_gate(g, da[g], da[g], hp)
        dcp = dc * c["f"]
    else:
        c = tape.cache
        z, r, n = c["z"], c["r"], c["h"]
        dn = grad_h * z * tanh_deriv(n)
        dz = grad_h * (n - hp) * sigmoid_deriv(z)
        direct = grad_h * (1.0 - z)
        if p.gru_variant is GruVariant.RESET_AFTER:
            dr = dn * c["hn"] * sigmoid_deriv(r)
            dhp = add_gate("z", dz, dz, hp) + add_gate("r", dr, dr, hp) + add_gate("h", dn, dn * r, hp)
        else:
            # gradient w.r.t. the reset-scaled state r * h_prev
            drh = add_gate("h", dn, dn, r * hp)
            dr = drh * hp * sigmoid_deriv(r)
            dhp = add_gate("z", dz, dz, hp) + add_gate("r", dr, dr, hp) + drh * r
        dhp = dhp + direct
    return dx, CellState(dhp, dcp), grads
