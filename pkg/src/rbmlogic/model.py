"""Core RBM data model and elementary energy/probability computations.

An RBM here is a bipartite Markov random field over binary visible and
hidden units with energy

    E(v, h) = -v^T W h - a^T h - b^T v

where ``W`` is the visible-by-hidden weight matrix, ``b`` the visible bias
and ``a`` the hidden bias.  Visible units carry unique string names
("terminals") so that models can be wired together by unit identity rather
than by position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit


def _as_bits(x, length: int, what: str) -> np.ndarray:
    arr = np.asarray(x)
    if arr.shape != (length,):
        raise ValueError(f"{what} has shape {arr.shape}, expected ({length},)")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{what} entries must be 0 or 1")
    return arr.astype(np.float64)


@dataclass(frozen=True)
class Rbm:
    """Immutable RBM parameters plus named visible terminals.

    ``weights`` has shape (n_visible, n_hidden); row i holds visible unit
    i's connections.  ``n_hidden == 0`` is legal and gives a pure bias
    model.  All parameters must be finite; terminal names must be unique.
    """

    weights: np.ndarray
    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    visible_names: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.visible_bias, dtype=np.float64)
        a = np.asarray(self.hidden_bias, dtype=np.float64)
        names = tuple(str(n) for n in self.visible_names)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {w.shape}")
        nv, nh = w.shape
        if nv < 1:
            raise ValueError("need at least one visible unit")
        if b.shape != (nv,):
            raise ValueError(f"visible_bias shape {b.shape} != ({nv},)")
        if a.shape != (nh,):
            raise ValueError(f"hidden_bias shape {a.shape} != ({nh},)")
        if len(names) != nv:
            raise ValueError(f"{len(names)} terminal names for {nv} visible units")
        if len(set(names)) != nv:
            raise ValueError("visible terminal names must be unique")
        for arr, what in ((w, "weights"), (b, "visible_bias"), (a, "hidden_bias")):
            if arr.size and not np.isfinite(arr).all():
                raise ValueError(f"{what} contains non-finite entries")
        w.setflags(write=False)
        b.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "visible_bias", b)
        object.__setattr__(self, "hidden_bias", a)
        object.__setattr__(self, "visible_names", names)

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    def terminal_index(self, name: str) -> int:
        try:
            return self.visible_names.index(name)
        except ValueError:
            raise KeyError(f"unknown terminal {name!r}") from None

    def terminal_indices(self, names: Iterable[str]) -> np.ndarray:
        return np.array([self.terminal_index(n) for n in names], dtype=np.intp)

    def renamed(self, mapping: dict[str, str]) -> "Rbm":
        """Return a copy with terminals renamed via ``mapping`` (partial ok)."""
        names = tuple(mapping.get(n, n) for n in self.visible_names)
        return Rbm(self.weights, self.visible_bias, self.hidden_bias, names)

    def with_prefix(self, prefix: str) -> "Rbm":
        return Rbm(
            self.weights,
            self.visible_bias,
            self.hidden_bias,
            tuple(f"{prefix}{n}" for n in self.visible_names),
        )

    def to_json_dict(self) -> dict:
        return {
            "visible": [
                {"name": n, "bias": float(b)}
                for n, b in zip(self.visible_names, self.visible_bias)
            ],
            "hidden_bias": [float(x) for x in self.hidden_bias],
            "weights": [[float(x) for x in row] for row in self.weights],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Rbm":
        names = tuple(u["name"] for u in d["visible"])
        b = np.array([u["bias"] for u in d["visible"]], dtype=np.float64)
        a = np.array(d["hidden_bias"], dtype=np.float64)
        w = np.array(d["weights"], dtype=np.float64)
        if w.size == 0:
            w = w.reshape(len(names), len(a))
        return cls(w, b, a, names)

    def save(self, path) -> None:
        Path(path).write_text(dumps_model(self))

    @classmethod
    def load(cls, path) -> "Rbm":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def dumps_model(rbm: Rbm) -> str:
    """Serialize to the canonical JSON layout; round-trips doubles exactly."""
    return json.dumps(rbm.to_json_dict(), indent=1, allow_nan=False)


def loads_model(text: str) -> Rbm:
    return Rbm.from_json_dict(json.loads(text))


@dataclass
class BinaryState:
    """A joint (visible, hidden) bit assignment for one RBM."""

    visible: np.ndarray
    hidden: np.ndarray

    @classmethod
    def checked(cls, rbm: Rbm, visible, hidden) -> "BinaryState":
        return cls(
            _as_bits(visible, rbm.n_visible, "visible state"),
            _as_bits(hidden, rbm.n_hidden, "hidden state"),
        )


def energy(rbm: Rbm, state: BinaryState) -> float:
    """E(v, h) = -v^T W h - a^T h - b^T v."""
    v = _as_bits(state.visible, rbm.n_visible, "visible state")
    h = _as_bits(state.hidden, rbm.n_hidden, "hidden state")
    return float(-(v @ rbm.weights @ h) - rbm.hidden_bias @ h - rbm.visible_bias @ v)


def free_energy(rbm: Rbm, v) -> float:
    """F(v) = -b^T v - sum_j log(1 + exp(a_j + (W^T v)_j)).

    exp(-F(v)) equals the sum over all hidden states of exp(-E(v, h)); the
    softplus accumulation stays finite for arbitrarily large weights.
    """
    v = _as_bits(v, rbm.n_visible, "visible state")
    act = rbm.hidden_bias + rbm.weights.T @ v
    return float(-(rbm.visible_bias @ v) - np.logaddexp(0.0, act).sum())


def free_energy_batch(rbm: Rbm, V: np.ndarray) -> np.ndarray:
    """Vectorized ``free_energy`` over rows of V (shape (N, n_visible))."""
    V = np.asarray(V, dtype=np.float64)
    act = V @ rbm.weights + rbm.hidden_bias
    return -(V @ rbm.visible_bias) - np.logaddexp(0.0, act).sum(axis=1)


def hidden_conditional(rbm: Rbm, v) -> np.ndarray:
    """p(h_j = 1 | v) for every hidden unit; factorizes across units."""
    v = _as_bits(v, rbm.n_visible, "visible state")
    return expit(rbm.hidden_bias + rbm.weights.T @ v)


def visible_conditional(rbm: Rbm, h) -> np.ndarray:
    """p(v_i = 1 | h) for every visible unit."""
    h = _as_bits(h, rbm.n_hidden, "hidden state")
    return expit(rbm.visible_bias + rbm.weights @ h)
