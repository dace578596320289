"""Building RBMs without training.

Directly-calculated models place one hidden unit per valid assignment of a
truth table: the unit's weight column is ``c * (2x - 1)`` and its bias
``c * (1/2 - |x|_1)``, so its pre-activation at visible state v is exactly
``c * (1/2 - d_H(v, x))``.  The unit fires with margin c/2 on its own row
and is suppressed everywhere else; as c grows the visible marginal
converges to uniform over the table rows.

On top of that sit circuit generators: logic gates, the 5-gate full adder,
ripple-carry adders of arbitrary width, and shift-and-add multipliers
assembled from narrower multipliers plus adders.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .merge import MergedModel, Netlist, compose
from .model import Rbm

DEFAULT_SHARPNESS = 12.0

# Largest multiplier width realized as a single truth table; wider ones are
# composed recursively from four half-width multipliers and three adders.
MULT_DIRECT_MAX = 4


@dataclass(frozen=True)
class TruthTable:
    """Valid assignments of ``arity`` named binary terminals."""

    arity: int
    rows: tuple[tuple[int, ...], ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if not self.rows:
            raise ValueError("truth table needs at least one row")
        if len(self.names) != self.arity:
            raise ValueError("names length must equal arity")
        if len(set(self.rows)) != len(self.rows):
            raise ValueError("truth table rows must be distinct")
        for row in self.rows:
            if len(row) != self.arity or any(b not in (0, 1) for b in row):
                raise ValueError(f"bad truth table row {row!r}")


def rbm_from_truth_table(table: TruthTable, sharpness: float = DEFAULT_SHARPNESS) -> Rbm:
    """Directly-calculated RBM with one hidden unit per table row."""
    c = float(sharpness)
    if not c > 0:
        raise ValueError("sharpness must be positive")
    rows = np.array(table.rows, dtype=np.float64)
    weights = c * (2.0 * rows - 1.0).T  # (arity, n_rows)
    hidden_bias = c * (0.5 - rows.sum(axis=1))
    visible_bias = np.zeros(table.arity)
    return Rbm(weights, visible_bias, hidden_bias, table.names)


def bit_names(prefix: str, width: int) -> list[str]:
    """Terminal names for a ``width``-bit operand; plain name when width 1."""
    if width == 1:
        return [prefix]
    return [f"{prefix}{j}" for j in range(width)]


GATE_FUNCTIONS = {
    "and": lambda a, b: a & b,
    "or": lambda a, b: a | b,
    "xor": lambda a, b: a ^ b,
    "nand": lambda a, b: 1 - (a & b),
}


def gate_table(kind: str) -> TruthTable:
    kind = kind.lower()
    if kind in GATE_FUNCTIONS:
        fn = GATE_FUNCTIONS[kind]
        rows = tuple((a, b, fn(a, b)) for a in (0, 1) for b in (0, 1))
        return TruthTable(3, rows, ("in1", "in2", "out"))
    if kind == "not":
        return TruthTable(2, ((0, 1), (1, 0)), ("in1", "out"))
    if kind == "copy":
        return TruthTable(2, ((0, 0), (1, 1)), ("in1", "out"))
    raise ValueError(f"unknown gate kind {kind!r}")


def gate(kind: str, sharpness: float = DEFAULT_SHARPNESS) -> Rbm:
    """Directly-calculated logic gate over terminals in1[, in2], out."""
    return rbm_from_truth_table(gate_table(kind), sharpness)


def full_adder_table() -> TruthTable:
    """All 8 valid (A, B, Cin, S, Cout) assignments of a full adder."""
    rows = []
    for a in (0, 1):
        for b in (0, 1):
            for cin in (0, 1):
                total = a + b + cin
                rows.append((a, b, cin, total & 1, total >> 1))
    return TruthTable(5, tuple(rows), ("A", "B", "Cin", "S", "Cout"))


def adder_table(n_bits: int) -> TruthTable:
    """Joint table of n-bit addition: A + B + Cin = S + 2^n * Cout."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    if n_bits == 1:
        return full_adder_table()
    names = tuple(
        bit_names("A", n_bits) + bit_names("B", n_bits) + ["Cin"]
        + bit_names("S", n_bits) + ["Cout"]
    )
    rows = []
    for a in range(2**n_bits):
        for b in range(2**n_bits):
            for cin in (0, 1):
                total = a + b + cin
                s, cout = total % 2**n_bits, total >> n_bits
                rows.append(
                    tuple(a >> i & 1 for i in range(n_bits))
                    + tuple(b >> i & 1 for i in range(n_bits))
                    + (cin,)
                    + tuple(s >> i & 1 for i in range(n_bits))
                    + (cout,)
                )
    return TruthTable(3 * n_bits + 2, tuple(rows), names)


def multiplier_table(n_bits: int) -> TruthTable:
    """Joint table of n-bit multiplication: A * B = P, P over 2n bits."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    names = tuple(
        bit_names("A", n_bits) + bit_names("B", n_bits) + bit_names("P", 2 * n_bits)
    )
    rows = []
    for a in range(2**n_bits):
        for b in range(2**n_bits):
            p = a * b
            rows.append(
                tuple(a >> i & 1 for i in range(n_bits))
                + tuple(b >> i & 1 for i in range(n_bits))
                + tuple(p >> i & 1 for i in range(2 * n_bits))
            )
    return TruthTable(4 * n_bits, tuple(rows), names)


def full_adder_netlist(sharpness: float = DEFAULT_SHARPNESS) -> Netlist:
    """Standard 5-gate full adder: S = A^B^Cin, Cout = AB + (A^B)Cin.

    Internal wires t1 = A^B, t2 = AB, t3 = t1*Cin stay as unexported
    visible units of the composed model.
    """
    xor = gate("xor", sharpness)
    and_ = gate("and", sharpness)
    or_ = gate("or", sharpness)
    return Netlist(
        components=[
            ("xor1", xor),
            ("xor2", xor),
            ("and1", and_),
            ("and2", and_),
            ("or1", or_),
        ],
        connections=[
            ("xor1.in1", "and1.in1"),  # A fans out
            ("xor1.in2", "and1.in2"),  # B fans out
            ("xor1.out", "xor2.in1"),  # t1
            ("xor1.out", "and2.in1"),  # t1 fans out
            ("xor2.in2", "and2.in2"),  # Cin fans out
            ("and1.out", "or1.in1"),   # t2
            ("and2.out", "or1.in2"),   # t3
        ],
        exports={
            "xor1.in1": "A",
            "xor1.in2": "B",
            "xor2.in2": "Cin",
            "xor2.out": "S",
            "or1.out": "Cout",
        },
    )


def _as_component(base) -> "Rbm | MergedModel":
    if isinstance(base, Netlist):
        return compose(base)
    if isinstance(base, (Rbm, MergedModel)):
        return base
    raise TypeError(f"expected Rbm, Netlist or MergedModel, got {type(base).__name__}")


def _public_names(component) -> list[str]:
    rbm = component.rbm if isinstance(component, MergedModel) else component
    return [n for n in rbm.visible_names if "." not in n]


def operand_width(names: Iterable[str], prefix: str) -> int:
    """Width of an operand group: plain ``prefix`` counts as width 1."""
    names = set(names)
    if prefix in names:
        return 1
    indices = sorted(
        int(m.group(1))
        for n in names
        if (m := re.fullmatch(re.escape(prefix) + r"(\d+)", n))
    )
    if not indices:
        raise KeyError(f"no terminals for operand {prefix!r}")
    if indices != list(range(len(indices))):
        raise ValueError(f"operand {prefix!r} has gaps in bit indices: {indices}")
    return len(indices)


def _slice_name(prefix: str, j: int, width: int) -> str:
    return prefix if width == 1 else f"{prefix}{j}"


def adder_slice_width(base) -> int:
    """Operand width of an adder slice; validates its terminal interface."""
    names = _public_names(_as_component(base))
    w = operand_width(names, "A")
    for prefix in ("B", "S"):
        if operand_width(names, prefix) != w:
            raise ValueError(f"adder slice operands A/{prefix} have mismatched widths")
    for t in ("Cin", "Cout"):
        if t not in names:
            raise KeyError(f"adder slice missing terminal {t!r}")
    return w


def build_adder(n_bits: int, base) -> MergedModel:
    """Ripple adder over n bits: chained copies of ``base``, Cout into Cin.

    ``base`` is an adder slice (Rbm, Netlist or MergedModel) whose width
    must divide n_bits.  Exports A0..A{n-1}, B0.., S0.., Cin, Cout; the
    inter-slice carries remain internal.
    """
    comp = _as_component(base)
    w = adder_slice_width(comp)
    if n_bits < 1 or n_bits % w != 0:
        raise ValueError(f"slice width {w} does not divide {n_bits}")
    k = n_bits // w
    components = [(f"fa{i}", comp) for i in range(k)]
    connections = [(f"fa{i}.Cout", f"fa{i + 1}.Cin") for i in range(k - 1)]
    exports = {"fa0.Cin": "Cin", f"fa{k - 1}.Cout": "Cout"}
    for i in range(k):
        for j in range(w):
            for prefix in ("A", "B", "S"):
                exports[f"fa{i}.{_slice_name(prefix, j, w)}"] = f"{prefix}{i * w + j}"
    return compose(Netlist(components, connections, exports))


def multiplier_width(base) -> int:
    names = _public_names(_as_component(base))
    w = operand_width(names, "A")
    if operand_width(names, "B") != w:
        raise ValueError("multiplier operands A/B have mismatched widths")
    if operand_width(names, "P") != 2 * w:
        raise ValueError("multiplier product must be twice the input width")
    return w


def build_multiplier(n_bits: int, base_mult, base_adder) -> MergedModel:
    """Shift-and-add multiplier with n-bit inputs and a 2n-bit product.

    Four copies of the half-width ``base_mult`` produce the partial
    products A_L*B_L, A_L*B_H, A_H*B_L, A_H*B_H; three ripple adders of
    width 2n accumulate them, with the 2^{n/2} and 2^n shifts realized
    purely by wiring.  Pad bits and internal carries are recorded in the
    result's ``constants`` and must be clamped to 0 during inference.
    """
    if n_bits < 2 or n_bits % 2 != 0:
        raise ValueError("n_bits must be even and >= 2")
    m = n_bits // 2
    mult = _as_component(base_mult)
    if multiplier_width(mult) != m:
        raise ValueError(f"base multiplier width {multiplier_width(mult)} != {m}")

    adder = _as_component(base_adder)
    aw = adder_slice_width(adder)
    if aw == 2 * n_bits:
        adder2n = adder
    elif 2 * n_bits % aw == 0:
        adder2n = build_adder(2 * n_bits, adder)
    else:
        raise ValueError(f"adder width {aw} incompatible with {2 * n_bits}-bit sums")

    n, nn = n_bits, 2 * n_bits
    components = [
        ("mLL", mult), ("mLH", mult), ("mHL", mult), ("mHH", mult),
        ("add1", adder2n), ("add2", adder2n), ("add3", adder2n),
    ]

    def mt(cid, prefix, j):  # multiplier-local terminal
        width = m if prefix in ("A", "B") else 2 * m
        return f"{cid}.{_slice_name(prefix, j, width)}"

    connections = []
    for j in range(m):
        connections += [
            (mt("mLL", "A", j), mt("mLH", "A", j)),  # shared A_L
            (mt("mHL", "A", j), mt("mHH", "A", j)),  # shared A_H
            (mt("mLL", "B", j), mt("mHL", "B", j)),  # shared B_L
            (mt("mLH", "B", j), mt("mHH", "B", j)),  # shared B_H
        ]
    # add1: LL + (LH << m); add2: += HL << m; add3: += HH << n.
    for j in range(n):
        connections.append((f"add1.A{j}", mt("mLL", "P", j)))
        connections.append((f"add1.B{j + m}", mt("mLH", "P", j)))
        connections.append((f"add2.B{j + m}", mt("mHL", "P", j)))
        connections.append((f"add3.B{j + n}", mt("mHH", "P", j)))
    for j in range(nn):
        connections.append((f"add2.A{j}", f"add1.S{j}"))
        connections.append((f"add3.A{j}", f"add2.S{j}"))

    exports = {}
    for j in range(m):
        exports[mt("mLL", "A", j)] = f"A{j}"
        exports[mt("mHL", "A", j)] = f"A{j + m}"
        exports[mt("mLL", "B", j)] = f"B{j}"
        exports[mt("mLH", "B", j)] = f"B{j + m}"
    for j in range(nn):
        exports[f"add3.S{j}"] = f"P{j}"

    zero_pads = (
        [f"add1.A{j}" for j in range(n, nn)]
        + [f"add1.B{j}" for j in range(m)]
        + [f"add1.B{j}" for j in range(m + n, nn)]
        + [f"add2.B{j}" for j in range(m)]
        + [f"add2.B{j}" for j in range(m + n, nn)]
        + [f"add3.B{j}" for j in range(n)]
        + [f"{cid}.{t}" for cid in ("add1", "add2", "add3") for t in ("Cin", "Cout")]
    )

    merged = compose(Netlist(components, connections, exports))
    constants = dict(merged.constants)
    for term in zero_pads:
        constants[merged.rbm.visible_names[merged.terminal_map[term]]] = 0
    return MergedModel(merged.rbm, merged.terminal_map, constants)


_GENERATOR_RE = re.compile(r"(adder|mult|fa)(\d+)$")


def builtin_model(name: str, sharpness: float = DEFAULT_SHARPNESS):
    """Resolve a builtin component name to a model.

    Accepted: gate names (and/or/xor/nand/not/copy), "fa1" (the gate-built
    full adder), "adder<n>" / "fa<n>" (direct-unit ripple adders), and
    "mult<n>" (direct tables up to width 4, composed above that).
    """
    key = name.strip().lower()
    if key in ("and", "or", "xor", "nand", "not", "copy"):
        return gate(key, sharpness)
    if key == "fa1":
        return compose(full_adder_netlist(sharpness))
    m = _GENERATOR_RE.fullmatch(key)
    if not m:
        raise KeyError(f"unknown builtin model {name!r}")
    kind, width = m.group(1), int(m.group(2))
    if kind in ("adder", "fa"):
        if width == 1:
            return rbm_from_truth_table(full_adder_table(), sharpness)
        return build_adder(width, rbm_from_truth_table(full_adder_table(), sharpness))
    if width <= MULT_DIRECT_MAX:
        return rbm_from_truth_table(multiplier_table(width), sharpness)
    half = builtin_model(f"mult{width // 2}", sharpness)
    slice_fa = rbm_from_truth_table(full_adder_table(), sharpness)
    return build_multiplier(width, half, slice_fa)
