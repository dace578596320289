"""Exact enumeration tools for small models.

Everything here is brute force over binary state spaces and therefore
gated by explicit size limits.  Free visible units are enumerated
little-endian: free unit i toggles with bit i of the state index.  Joint
states are indexed as ``v_index + (h_index << n_free)``.

The convergence bound implemented by :func:`convergence_bound` contracts
the L1 distance between an initial distribution and the stationary one by
``(1 - exp(-2 * delta))`` per sweep, where delta is the energy range of
the model.  The returned value is in total-variation units (half L1), so
``initial_l1`` may be at most 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .merge import MergedModel
from .model import Rbm, free_energy_batch

MAX_FREE_UNITS = 24
MAX_HIDDEN_UNITS = 30
MAX_JOINT_UNITS = 20
MAX_MATRIX_UNITS = 14


def _resolve_model(model) -> tuple[Rbm, dict[str, int]]:
    """Split a model into its Rbm and the constant clamps it carries."""
    if isinstance(model, MergedModel):
        return model.rbm, dict(model.constants)
    if isinstance(model, Rbm):
        return model, {}
    raise TypeError(f"expected Rbm or MergedModel, got {type(model).__name__}")


def resolve_clamp(model, clamp: Mapping[str, int] | None) -> dict[str, int]:
    """Normalize a clamp mapping and fold in MergedModel constants."""
    rbm, assignments = _resolve_model(model)
    for name, value in dict(clamp or {}).items():
        rbm.terminal_index(name)  # raises on unknown terminals
        if value not in (0, 1):
            raise ValueError(f"clamp value for {name!r} must be 0 or 1, got {value!r}")
        if name in assignments and assignments[name] != value:
            raise ValueError(f"clamp for {name!r} conflicts with model constant")
        assignments[name] = int(value)
    return assignments


def _clamp_arrays(rbm: Rbm, assignments: Mapping[str, int]):
    idx = np.array(sorted(rbm.terminal_index(n) for n in assignments), dtype=np.intp)
    by_index = {rbm.terminal_index(n): v for n, v in assignments.items()}
    vals = np.array([by_index[i] for i in idx], dtype=np.float64)
    free = np.array([i for i in range(rbm.n_visible) if i not in by_index], dtype=np.intp)
    return idx, vals, free


def _bit_grid(n: int) -> np.ndarray:
    """All 2^n bit vectors; row k holds bit i of k at column i."""
    ks = np.arange(2**n, dtype=np.uint32)
    return ((ks[:, None] >> np.arange(n, dtype=np.uint32)[None, :]) & 1).astype(np.float64)


@dataclass(frozen=True)
class ExactDistribution:
    """Exact probabilities over the free visible units of a model.

    ``support`` row k is the assignment of ``names`` (the free terminals)
    with index k; ``clamped`` records the fixed assignment the
    distribution is conditioned on.  ``log_partition`` is log Z of the
    clamped model, summed over hidden units as well.
    """

    names: tuple[str, ...]
    support: np.ndarray
    probabilities: np.ndarray
    log_partition: float
    clamped: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.support.shape != (len(self.probabilities), len(self.names)):
            raise ValueError("support shape does not match names/probabilities")
        if np.any(self.probabilities < 0):
            raise ValueError("negative probability")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def partition_function(self) -> float:
        return float(np.exp(self.log_partition))

    def index_of(self, bits: Sequence[int]) -> int:
        key = np.asarray(bits, dtype=np.uint8)
        matches = np.nonzero((self.support == key).all(axis=1))[0]
        if matches.size != 1:
            raise KeyError(f"assignment {tuple(bits)} not in support")
        return int(matches[0])

    def prob_of(self, bits: Sequence[int]) -> float:
        return float(self.probabilities[self.index_of(bits)])

    def mass(self, rows: Iterable[Sequence[int]]) -> float:
        return float(sum(self.prob_of(r) for r in rows))

    def marginal(self, names: Sequence[str]) -> "ExactDistribution":
        cols = [self.names.index(n) for n in names]
        sub = self.support[:, cols]
        k = len(cols)
        index = sub.astype(np.int64) @ (1 << np.arange(k, dtype=np.int64))
        probs = np.bincount(index, weights=self.probabilities, minlength=2**k)
        return ExactDistribution(
            names=tuple(names),
            support=_bit_grid(k).astype(np.uint8),
            probabilities=probs,
            log_partition=self.log_partition,
            clamped=dict(self.clamped),
        )


def exact_visible_distribution(
    model,
    clamp: Mapping[str, int] | None = None,
    max_free: int = MAX_FREE_UNITS,
    max_hidden: int = MAX_HIDDEN_UNITS,
) -> ExactDistribution:
    """Enumerate p(v_free | clamp) by summing out the hidden layer."""
    rbm, assignments = _resolve_model(model)
    assignments = resolve_clamp(model, clamp)
    idx, vals, free = _clamp_arrays(rbm, assignments)
    if free.size > max_free:
        raise ValueError(f"{free.size} free units exceed limit {max_free}")
    if rbm.n_hidden > max_hidden:
        raise ValueError(f"{rbm.n_hidden} hidden units exceed limit {max_hidden}")

    n_states = 2 ** int(free.size)
    neg_f = np.empty(n_states)
    chunk = max(1, min(n_states, 1 << 16))
    template = np.zeros(rbm.n_visible)
    template[idx] = vals
    for start in range(0, n_states, chunk):
        ks = np.arange(start, min(start + chunk, n_states), dtype=np.int64)
        V = np.broadcast_to(template, (ks.size, rbm.n_visible)).copy()
        V[:, free] = (ks[:, None] >> np.arange(free.size)[None, :]) & 1
        neg_f[start : start + ks.size] = -free_energy_batch(rbm, V)
    log_z = float(logsumexp(neg_f))
    probs = np.exp(neg_f - log_z)
    support = ((np.arange(n_states)[:, None] >> np.arange(free.size)[None, :]) & 1).astype(np.uint8)
    names = tuple(rbm.visible_names[i] for i in free)
    return ExactDistribution(names, support, probs, log_z, dict(assignments))


def kl_divergence(q, p) -> float:
    """KL(q || p) for distributions on identical supports.

    Accepts probability arrays or ExactDistribution instances.  Requires
    q to vanish wherever p does.
    """
    if isinstance(q, ExactDistribution) and isinstance(p, ExactDistribution):
        if q.names != p.names or not np.array_equal(q.support, p.support):
            raise ValueError("distributions have different supports")
        q, p = q.probabilities, p.probabilities
    q = np.asarray(q, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if q.shape != p.shape:
        raise ValueError("distributions have different supports")
    live = q > 0
    if np.any(p[live] <= 0):
        raise ValueError("q is not absolutely continuous with respect to p")
    return float(np.sum(q[live] * (np.log(q[live]) - np.log(p[live]))))


def tv_distance(p, q) -> float:
    """Total variation distance, i.e. half the L1 distance."""
    return 0.5 * l1_distance(p, q)


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions have different supports")
    return float(np.abs(p - q).sum())


def _joint_log_weights(rbm: Rbm, assignments: Mapping[str, int], max_joint: int):
    """Log e^{-E} over (hidden, free-visible) grids, hidden as rows."""
    idx, vals, free = _clamp_arrays(rbm, assignments)
    if free.size + rbm.n_hidden > max_joint:
        raise ValueError(
            f"{free.size} free + {rbm.n_hidden} hidden units exceed limit {max_joint}"
        )
    V = np.zeros((2 ** int(free.size), rbm.n_visible))
    V[:, idx] = vals
    V[:, free] = _bit_grid(int(free.size))
    H = _bit_grid(rbm.n_hidden)
    # -E(v,h) = b.v + a.h + v W h
    log_w = (V @ rbm.weights) @ H.T + (V @ rbm.visible_bias)[:, None]
    log_w += (H @ rbm.hidden_bias)[None, :]
    return log_w.T, V, H, free  # (2^nh, 2^nf)


def exact_joint_distribution(model, clamp: Mapping[str, int] | None = None,
                             max_joint: int = MAX_JOINT_UNITS):
    """Joint p(h, v_free) grid and log partition function."""
    rbm, _ = _resolve_model(model)
    assignments = resolve_clamp(model, clamp)
    log_w, _, _, _ = _joint_log_weights(rbm, assignments, max_joint)
    log_z = float(logsumexp(log_w))
    return np.exp(log_w - log_z), log_z


def delta_exact(model, clamp: Mapping[str, int] | None = None,
                max_joint: int = MAX_JOINT_UNITS) -> float:
    """Exact energy range max E - min E over all joint states."""
    rbm, _ = _resolve_model(model)
    assignments = resolve_clamp(model, clamp)
    log_w, _, _, _ = _joint_log_weights(rbm, assignments, max_joint)
    return float(log_w.max() - log_w.min())


def delta_bound(model) -> float:
    """Cheap upper bound on the energy range: sum of |W|, |a|, |b|."""
    rbm, _ = _resolve_model(model)
    return float(
        np.abs(rbm.weights).sum()
        + np.abs(rbm.hidden_bias).sum()
        + np.abs(rbm.visible_bias).sum()
    )


def convergence_bound(delta: float, initial_l1: float, n_sweeps) -> np.ndarray | float:
    """Worst-case TV distance from stationarity after n block-Gibbs sweeps.

    ``initial_l1`` is the L1 distance (at most 2) between the start
    distribution and the stationary one; the bound halves it into TV
    units and contracts by (1 - exp(-2 delta)) per sweep.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not 0.0 <= initial_l1 <= 2.0:
        raise ValueError("initial_l1 must lie in [0, 2]")
    n = np.asarray(n_sweeps)
    if np.any(n < 0) or not np.issubdtype(n.dtype, np.integer):
        raise ValueError("n_sweeps must be nonnegative integers")
    rate = -np.expm1(-2.0 * delta)  # 1 - exp(-2 delta), in [0, 1)
    out = 0.5 * initial_l1 * rate**n
    return float(out) if out.ndim == 0 else out


def _conditional_tables(rbm: Rbm, assignments: Mapping[str, int], max_units: int):
    """Per-state conditionals p(h'|v) and p(v_free'|h) for all states."""
    log_w, V, H, free = _joint_log_weights(rbm, assignments, max_units)
    act_h = V @ rbm.weights + rbm.hidden_bias  # (2^nf, nh)
    log_ph = act_h @ H.T - np.logaddexp(0.0, act_h).sum(axis=1, keepdims=True)
    act_v = (H @ rbm.weights.T + rbm.visible_bias)[:, free]  # (2^nh, nf)
    Vf = V[:, free]
    log_pv = act_v @ Vf.T - np.logaddexp(0.0, act_v).sum(axis=1, keepdims=True)
    return np.exp(log_ph), np.exp(log_pv)  # (2^nf, 2^nh), (2^nh, 2^nf)


def gibbs_transition_matrix(model, clamp: Mapping[str, int] | None = None,
                            max_units: int = MAX_MATRIX_UNITS) -> np.ndarray:
    """Dense transition matrix of one sweep: hidden update then visible.

    State ``v_index + (h_index << n_free)`` indexes rows and columns.
    Rows sum to 1; the exact joint distribution is stationary.
    """
    rbm, _ = _resolve_model(model)
    assignments = resolve_clamp(model, clamp)
    ph_tab, pv_tab = _conditional_tables(rbm, assignments, max_units)
    nf_states, nh_states = ph_tab.shape
    p_h = np.zeros((nh_states, nf_states, nh_states, nf_states))
    for v in range(nf_states):
        p_h[:, v, :, v] = ph_tab[v][None, :]
    p_v = np.zeros_like(p_h)
    for h in range(nh_states):
        p_v[h, :, h, :] = pv_tab[h][None, :]
    n = nh_states * nf_states
    return p_h.reshape(n, n) @ p_v.reshape(n, n)


def propagate_distribution(model, mu0: np.ndarray, n_sweeps: int,
                           clamp: Mapping[str, int] | None = None,
                           max_joint: int = MAX_JOINT_UNITS) -> np.ndarray:
    """Exact mu P^n over joint states without forming the dense matrix.

    ``mu0`` is flat in the same ``v_index + (h_index << n_free)`` order
    as gibbs_transition_matrix; returns the flat distribution after
    ``n_sweeps`` full sweeps.
    """
    rbm, _ = _resolve_model(model)
    assignments = resolve_clamp(model, clamp)
    ph_tab, pv_tab = _conditional_tables(rbm, assignments, max_joint)
    nf_states, nh_states = ph_tab.shape
    mu = np.asarray(mu0, dtype=np.float64).reshape(nh_states, nf_states).copy()
    for _ in range(int(n_sweeps)):
        over_v = mu.sum(axis=0)  # collapse h: p(v)
        mu = (ph_tab * over_v[:, None]).T  # resample h from v
        over_h = mu.sum(axis=1)  # collapse v: p(h)
        mu = over_h[:, None] * pv_tab  # resample v_free from h
    return mu.reshape(-1)
