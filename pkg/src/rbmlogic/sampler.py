"""Clamped block Gibbs sampling.

One sweep samples the whole hidden layer given the visible layer, then
all free visible units given the hidden layer; clamped visible units
never change.  Chains are reproducible: a chain consumes, per sweep,
first n_hidden then n_visible uniforms from its own PCG64 generator
(clamped positions burn draws too, so the stream does not depend on the
clamp pattern), after n_visible initialization draws.

multistart with seeds [s, s+1, ...] pools exactly the histograms that
run_chain would produce for each seed individually.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .exact import resolve_clamp
from .merge import MergedModel
from .model import BinaryState, Rbm, free_energy_batch


def _resolve_rbm(model) -> Rbm:
    return model.rbm if isinstance(model, MergedModel) else model


@dataclass(frozen=True)
class ClampMask:
    """Visible units held fixed during sampling, by terminal name."""

    assignments: dict[str, int]

    def __post_init__(self):
        for name, value in self.assignments.items():
            if value not in (0, 1):
                raise ValueError(f"clamp value for {name!r} must be 0 or 1")

    def arrays(self, rbm: Rbm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(clamped indices, their values, free indices) for one model."""
        index = {rbm.terminal_index(n): v for n, v in self.assignments.items()}
        idx = np.array(sorted(index), dtype=np.intp)
        vals = np.array([index[i] for i in idx], dtype=np.float64)
        free = np.array([i for i in range(rbm.n_visible) if i not in index], dtype=np.intp)
        return idx, vals, free


def _normalize_clamp(model, clamp) -> ClampMask:
    if isinstance(clamp, ClampMask):
        clamp = clamp.assignments
    return ClampMask(resolve_clamp(model, clamp))


@dataclass
class Histogram:
    """Counts of recorded assignments of ``names``."""

    names: tuple[str, ...]
    counts: dict[tuple[int, ...], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, key: tuple[int, ...], weight: int = 1) -> None:
        self.counts[key] = self.counts.get(key, 0) + weight

    def __add__(self, other: "Histogram") -> "Histogram":
        if self.names != other.names:
            raise ValueError("histograms cover different terminals")
        merged = dict(self.counts)
        for key, n in other.counts.items():
            merged[key] = merged.get(key, 0) + n
        return Histogram(self.names, merged)

    def frequency(self, key: tuple[int, ...]) -> float:
        total = self.total
        return self.counts.get(tuple(key), 0) / total if total else 0.0

    def marginal(self, names: Sequence[str]) -> "Histogram":
        cols = [self.names.index(n) for n in names]
        out = Histogram(tuple(names))
        for key, n in self.counts.items():
            out.add(tuple(key[c] for c in cols), n)
        return out

    def top(self, k: int) -> list[tuple[tuple[int, ...], int]]:
        return sorted(self.counts.items(), key=lambda item: (-item[1], item[0]))[:k]


def mode_estimate(histogram: Histogram) -> tuple[tuple[int, ...], int]:
    """Most frequent assignment; ties break to the lexicographically least."""
    if not histogram.counts:
        raise ValueError("empty histogram has no mode")
    best = min(histogram.counts, key=lambda key: (-histogram.counts[key], key))
    return best, histogram.counts[best]


@dataclass(frozen=True)
class ChainTrace:
    """Recorded visible states of one chain, in sweep order."""

    names: tuple[str, ...]
    samples: np.ndarray  # (n_recorded, n_visible) uint8
    free_energy: np.ndarray  # (n_recorded,)
    seed: int
    burn_in: int
    thin: int

    def series(self, name: str) -> np.ndarray:
        return self.samples[:, self.names.index(name)].astype(np.float64)


def _chain_sweeps(rbm: Rbm, mask: ClampMask, seeds: Sequence[int], n_sweeps: int):
    """Yield the visible matrix after every sweep of a batch of chains."""
    idx, vals, free = mask.arrays(rbm)
    gens = [np.random.default_rng(int(s)) for s in seeds]
    n_chains = len(gens)
    w, vb, hb = rbm.weights, rbm.visible_bias, rbm.hidden_bias
    v = np.empty((n_chains, rbm.n_visible))
    for c, gen in enumerate(gens):
        v[c] = gen.random(rbm.n_visible) < 0.5
    v[:, idx] = vals
    for _ in range(n_sweeps):
        p_h = expit(v @ w + hb)
        u = np.stack([gen.random(rbm.n_hidden) for gen in gens])
        h = (u < p_h).astype(np.float64)
        p_v = expit(h @ w.T + vb)
        u = np.stack([gen.random(rbm.n_visible) for gen in gens])
        if free.size:
            v[:, free] = (u < p_v)[:, free]
        yield v


def _record_indices(rbm: Rbm, record_terminals) -> tuple[np.ndarray, tuple[str, ...]]:
    if record_terminals is None:
        return np.arange(rbm.n_visible, dtype=np.intp), rbm.visible_names
    idx = np.array([rbm.terminal_index(n) for n in record_terminals], dtype=np.intp)
    return idx, tuple(record_terminals)


def run_chain(
    model,
    clamp: Mapping[str, int] | ClampMask | None = None,
    n_sweeps: int = 1000,
    burn_in: int = 0,
    thin: int = 1,
    seed: int = 0,
    record_terminals: Sequence[str] | None = None,
) -> tuple[ChainTrace, Histogram]:
    """Run one chain; record every ``thin``-th sweep after ``burn_in``."""
    rbm = _resolve_rbm(model)
    if n_sweeps < 1 or burn_in < 0 or thin < 1 or burn_in >= n_sweeps:
        raise ValueError("need n_sweeps >= 1, 0 <= burn_in < n_sweeps, thin >= 1")
    mask = _normalize_clamp(model, clamp)
    rec_idx, rec_names = _record_indices(rbm, record_terminals)
    kept = []
    hist = Histogram(rec_names)
    for t, v in enumerate(_chain_sweeps(rbm, mask, [seed], n_sweeps)):
        if t >= burn_in and (t - burn_in) % thin == 0:
            kept.append(v[0].copy())
            hist.add(tuple(int(b) for b in v[0, rec_idx]))
    samples = np.array(kept)
    trace = ChainTrace(
        names=rbm.visible_names,
        samples=samples.astype(np.uint8),
        free_energy=free_energy_batch(rbm, samples),
        seed=int(seed),
        burn_in=burn_in,
        thin=thin,
    )
    return trace, hist


def gibbs_sweep(model, state: BinaryState, clamp=None, rng=None) -> BinaryState:
    """One sweep from an explicit state; draws h then v from ``rng``."""
    rbm = _resolve_rbm(model)
    mask = _normalize_clamp(model, clamp)
    idx, vals, free = mask.arrays(rbm)
    rng = np.random.default_rng() if rng is None else rng
    state = BinaryState.checked(rbm, state.visible, state.hidden)
    v = np.asarray(state.visible, dtype=np.float64).copy()
    if idx.size and not np.array_equal(v[idx], vals):
        raise ValueError("state disagrees with clamped values")
    p_h = expit(v @ rbm.weights + rbm.hidden_bias)
    h = (rng.random(rbm.n_hidden) < p_h).astype(np.float64)
    p_v = expit(h @ rbm.weights.T + rbm.visible_bias)
    u = rng.random(rbm.n_visible)
    if free.size:
        v[free] = (u < p_v)[free]
    return BinaryState(v.astype(np.uint8), h.astype(np.uint8))


def multistart(
    model,
    clamp: Mapping[str, int] | ClampMask | None = None,
    n_chains: int = 4,
    n_sweeps: int = 1000,
    burn_in: int = 0,
    thin: int = 1,
    seed: int = 0,
    seeds: Sequence[int] | None = None,
    record_terminals: Sequence[str] | None = None,
) -> Histogram:
    """Pool histograms from independent chains seeded seed, seed+1, ..."""
    rbm = _resolve_rbm(model)
    if n_sweeps < 1 or burn_in < 0 or thin < 1 or burn_in >= n_sweeps:
        raise ValueError("need n_sweeps >= 1, 0 <= burn_in < n_sweeps, thin >= 1")
    if seeds is None:
        seeds = [seed + c for c in range(n_chains)]
    elif len(seeds) != n_chains:
        raise ValueError("seeds length must equal n_chains")
    mask = _normalize_clamp(model, clamp)
    rec_idx, rec_names = _record_indices(rbm, record_terminals)
    hist = Histogram(rec_names)
    for t, v in enumerate(_chain_sweeps(rbm, mask, list(seeds), n_sweeps)):
        if t >= burn_in and (t - burn_in) % thin == 0:
            for c in range(len(seeds)):
                hist.add(tuple(int(b) for b in v[c, rec_idx]))
    return hist


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized autocorrelations at lags 0..max_lag (FFT-based)."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or len(x) <= max_lag or max_lag < 1:
        raise ValueError("need a 1-d series longer than max_lag >= 1")
    x = x - x.mean()
    if not x.any():
        raise ValueError("series is constant; autocorrelation undefined")
    n = len(x)
    padded = np.fft.rfft(x, 2 * n)
    acov = np.fft.irfft(padded * np.conj(padded))[: max_lag + 1] / n
    return acov / acov[0]


def integrated_autocorrelation_time(series: np.ndarray, max_lag: int | None = None) -> float:
    """1 + 2 * sum of autocorrelations up to the first nonpositive lag."""
    x = np.asarray(series, dtype=np.float64)
    if max_lag is None:
        max_lag = len(x) // 2
    rho = autocorrelation(x, max_lag)
    tau = 1.0
    for k in range(1, len(rho)):
        if rho[k] <= 0:
            break
        tau += 2.0 * rho[k]
    return float(tau)


def success_curve(
    model,
    tasks: Sequence,
    checkpoints: Sequence[int],
    n_chains: int = 4,
    seed: int = 0,
    burn_in: int = 0,
) -> list[tuple[int, float]]:
    """Fraction of tasks whose pooled mode is correct at each sample budget.

    Chains for task i use seeds seed + i * n_chains + [0..n_chains); the
    pooled sample count after sweep t is n_chains * (t - burn_in).
    """
    from .tasks import answer_mode, answer_terminals, assignment_checker, clamp_assignments

    checkpoints = sorted(int(c) for c in checkpoints)
    if not checkpoints or checkpoints[0] < 1:
        raise ValueError("checkpoints must be positive sample counts")
    rbm = _resolve_rbm(model)
    successes = np.zeros(len(checkpoints))
    for i, task in enumerate(tasks):
        mask = ClampMask(clamp_assignments(model, task))
        rec_idx, rec_names = _record_indices(rbm, answer_terminals(model, task))
        check = assignment_checker(model, task)
        hist = Histogram(rec_names)
        milestones = [(c + n_chains - 1) // n_chains + burn_in for c in checkpoints]
        seeds = [seed + i * n_chains + c for c in range(n_chains)]
        next_mark = 0
        for t, v in enumerate(_chain_sweeps(rbm, mask, seeds, milestones[-1])):
            if t >= burn_in:
                for c in range(n_chains):
                    hist.add(tuple(int(b) for b in v[c, rec_idx]))
            while next_mark < len(milestones) and t + 1 == milestones[next_mark]:
                bits, _ = answer_mode(model, task, hist)
                if check(dict(zip(rec_names, bits))):
                    successes[next_mark] += 1.0
                next_mark += 1
    return [(c, float(s) / len(tasks)) for c, s in zip(checkpoints, successes)]
