"""Contrastive-divergence training of arithmetic units.

The schedule trains in stages: each stage runs a fixed number of epochs
of CD-k with learning rate 1, evaluates task accuracy, then increments
k.  Training stops once accuracy has failed to improve for ``patience``
consecutive stages, k would exceed ``k_max``, or accuracy reaches 1;
the parameters from the best stage are returned.

An epoch presents ``copies_per_epoch`` copies of the state space (or of
a fresh random sample of it when the space is too large to enumerate
and ``dataset_cap`` is set).  Small tables train full-batch, one update
per copy; larger datasets are shuffled and sliced into minibatches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .model import Rbm
from .synthesis import adder_table, bit_names, multiplier_table
from .tasks import TaskSpec, answer_terminals, assignment_checker, clamp_assignments
from . import exact, sampler

# Hidden-layer sizes known to train well for specific units.
KNOWN_HIDDEN = {("adder", 1): 6, ("adder", 2): 28, ("adder", 4): 64,
                ("mult", 1): 4, ("mult", 2): 12, ("mult", 4): 64}

ENUMERATION_LIMIT = 2**20

# Tables at or below this row count train full-batch by default.
FULL_BATCH_LIMIT = 64

# Evaluation enumerates the answer distribution exactly when
# 2^(free units) * hidden units stays below this work bound.
EXACT_EVAL_WORK = 2**22


@dataclass(frozen=True)
class TrainConfig:
    k_initial: int = 2
    k_max: int = 10
    learning_rate: float = 1.0
    epochs_per_stage: int = 10
    copies_per_epoch: int = 4
    batch_size: int | None = None
    weight_decay: float = 1e-4
    patience: int = 2
    dataset_cap: int | None = None
    init_scale: float = 0.1
    seed: int = 0
    eval_instances: int = 64
    eval_chains: int = 2
    eval_sweeps: int = 500

    def __post_init__(self):
        if self.k_initial < 1 or self.k_max < self.k_initial:
            raise ValueError("need 1 <= k_initial <= k_max")
        if min(self.epochs_per_stage, self.copies_per_epoch, self.patience,
               self.eval_instances, self.eval_chains, self.eval_sweeps) <= 0:
            raise ValueError("config counts must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1 (or None for automatic)")
        if self.weight_decay < 0 or self.init_scale < 0:
            raise ValueError("weight_decay and init_scale must be nonnegative")


def parse_task(task) -> tuple[str, int]:
    """Normalize a task name like "adder4" or ("mult", 2)."""
    if isinstance(task, (tuple, list)) and len(task) == 2:
        kind, width = task
    elif isinstance(task, str):
        for prefix in ("adder", "mult"):
            if task.startswith(prefix) and task[len(prefix):].isdigit():
                kind, width = prefix, int(task[len(prefix):])
                break
        else:
            raise ValueError(f"cannot parse task {task!r}")
    else:
        raise TypeError(f"bad task spec {task!r}")
    kind = {"multiplier": "mult", "adder": "adder", "mult": "mult"}[kind]
    if width < 1:
        raise ValueError("task width must be >= 1")
    return kind, int(width)


def task_layout(task) -> tuple[str, int, tuple[str, ...]]:
    kind, width = parse_task(task)
    if kind == "adder":
        names = tuple(bit_names("A", width) + bit_names("B", width) + ["Cin"]
                      + bit_names("S", width) + ["Cout"])
    else:
        names = tuple(bit_names("A", width) + bit_names("B", width)
                      + bit_names("P", 2 * width))
    return kind, width, names


def dataset_size(task) -> int:
    """Number of distinct valid rows: one per input combination."""
    kind, width = parse_task(task)
    return 2 ** (2 * width + 1) if kind == "adder" else 2 ** (2 * width)


def _row(kind: str, width: int, inputs: tuple[int, ...]) -> tuple[int, ...]:
    if kind == "adder":
        a, b, cin = inputs
        total = a + b + cin
        return (
            tuple(a >> i & 1 for i in range(width))
            + tuple(b >> i & 1 for i in range(width))
            + (cin,)
            + tuple(total >> i & 1 for i in range(width))
            + (total >> width,)
        )
    a, b = inputs
    p = a * b
    return (
        tuple(a >> i & 1 for i in range(width))
        + tuple(b >> i & 1 for i in range(width))
        + tuple(p >> i & 1 for i in range(2 * width))
    )


def generate_dataset(task, cap: int | None = None,
                     rng: np.random.Generator | None = None) -> tuple[np.ndarray, tuple[str, ...]]:
    """All valid rows of a unit's truth table, or ``cap`` random ones.

    Refuses to enumerate state spaces above 2^20 rows; pass ``cap`` to
    sample instead (with replacement, from ``rng``).
    """
    kind, width, names = task_layout(task)
    total = dataset_size(task)
    if cap is None:
        if total > ENUMERATION_LIMIT:
            raise ValueError(
                f"task has {total} rows; pass cap= to sample instead of enumerating"
            )
        table = adder_table(width) if kind == "adder" else multiplier_table(width)
        return np.array(table.rows, dtype=np.uint8), table.names
    if cap < 1:
        raise ValueError("cap must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    rows = np.empty((cap, len(names)), dtype=np.uint8)
    for i in range(cap):
        if kind == "adder":
            inputs = (int(rng.integers(2**width)), int(rng.integers(2**width)),
                      int(rng.integers(2)))
        else:
            inputs = (int(rng.integers(2**width)), int(rng.integers(2**width)))
        rows[i] = _row(kind, width, inputs)
    return rows, names


def cd_step(rbm: Rbm, batch: np.ndarray, config: TrainConfig,
            rng: np.random.Generator, k: int | None = None) -> Rbm:
    """One CD-k parameter update from a batch of visible rows.

    Draw order per step: the initial hidden sample, then alternating
    visible and hidden samples.  The final step's reconstruction
    statistics use activation probabilities on both layers instead of
    samples; at learning rate 1 the sampled version injects enough
    gradient noise that small tables never converge.
    """
    k = config.k_initial if k is None else k
    if k < 1:
        raise ValueError("k must be >= 1")
    v0 = np.asarray(batch, dtype=np.float64)
    if v0.ndim != 2 or v0.shape[1] != rbm.n_visible:
        raise ValueError(f"batch shape {v0.shape} does not match "
                         f"{rbm.n_visible} visible units")
    n = len(v0)
    w, vb, hb = rbm.weights, rbm.visible_bias, rbm.hidden_bias
    ph0 = expit(v0 @ w + hb)
    h = (rng.random(ph0.shape) < ph0).astype(np.float64)
    for step in range(k):
        pv = expit(h @ w.T + vb)
        if step < k - 1:
            v = (rng.random(pv.shape) < pv).astype(np.float64)
            ph = expit(v @ w + hb)
            h = (rng.random(ph.shape) < ph).astype(np.float64)
    ph_k = expit(pv @ w + hb)
    lr = config.learning_rate
    new_w = w + lr * ((v0.T @ ph0 - pv.T @ ph_k) / n - config.weight_decay * w)
    new_vb = vb + lr * (v0 - pv).mean(axis=0)
    new_hb = hb + lr * (ph0 - ph_k).mean(axis=0)
    return Rbm(new_w, new_vb, new_hb, rbm.visible_names)


def reconstruction_error(rbm: Rbm, data: np.ndarray) -> float:
    """Mean squared error of the deterministic one-step reconstruction."""
    v = np.asarray(data, dtype=np.float64)
    ph = expit(v @ rbm.weights + rbm.hidden_bias)
    pv = expit(ph @ rbm.weights.T + rbm.visible_bias)
    return float(np.mean((v - pv) ** 2))


def _instances(kind: str, width: int, limit: int, seed: int) -> list[tuple[int, ...]]:
    if kind == "adder":
        all_inputs = [(a, b, cin) for a in range(2**width)
                      for b in range(2**width) for cin in (0, 1)]
    else:
        all_inputs = [(a, b) for a in range(2**width) for b in range(2**width)]
    if len(all_inputs) <= limit:
        return all_inputs
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(all_inputs), size=limit, replace=False)
    return [all_inputs[i] for i in sorted(picks)]


def _instance_task(kind: str, width: int, inputs: tuple[int, ...]) -> TaskSpec:
    if kind == "adder":
        a, b, cin = inputs
        return TaskSpec("add", width, {"A": a, "B": b, "Cin": cin})
    a, b = inputs
    return TaskSpec("multiply", width, {"A": a, "B": b})


def _exact_eval_feasible(model, spec) -> bool:
    rbm, _ = exact._resolve_model(model)
    free = rbm.n_visible - len(exact.resolve_clamp(model, clamp_assignments(model, spec)))
    return free <= exact.MAX_FREE_UNITS and 2**free * max(rbm.n_hidden, 1) <= EXACT_EVAL_WORK


def evaluate_accuracy(model, task, n_instances: int = 64, n_chains: int = 2,
                      n_sweeps: int = 500, seed: int = 0,
                      method: str = "auto") -> float:
    """Fraction of input combinations whose inferred mode is correct.

    The answer mode comes from the exact clamped distribution when the
    model is small enough to enumerate ("auto"), otherwise from the
    pooled histogram of ``n_chains`` Gibbs chains.  Pass
    ``method="sample"`` or ``"exact"`` to force either path.
    """
    if method not in ("auto", "exact", "sample"):
        raise ValueError(f"unknown method {method!r}")
    kind, width, _ = task_layout(task)
    instances = _instances(kind, width, n_instances, seed)
    use_exact = method == "exact" or (
        method == "auto"
        and _exact_eval_feasible(model, _instance_task(kind, width, instances[0]))
    )
    correct = 0
    for i, inputs in enumerate(instances):
        spec = _instance_task(kind, width, inputs)
        clamp = clamp_assignments(model, spec)
        record = answer_terminals(model, spec)
        if use_exact:
            dist = exact.exact_visible_distribution(
                model, clamp=clamp, max_hidden=2**20).marginal(record)
            bits = dist.support[int(np.argmax(dist.probabilities))]
        else:
            hist = sampler.multistart(
                model, clamp, n_chains=n_chains, n_sweeps=n_sweeps,
                seed=seed + 1000 * i, record_terminals=record,
            )
            bits, _ = sampler.mode_estimate(hist)
        if assignment_checker(model, spec)(dict(zip(record, bits))):
            correct += 1
    return correct / len(instances)


def train(task, n_hidden: int | None = None,
          config: TrainConfig = TrainConfig()) -> tuple[Rbm, list[dict]]:
    """Train a unit with the staged CD schedule; returns best model + log."""
    kind, width, names = task_layout(task)
    if n_hidden is None:
        n_hidden = KNOWN_HIDDEN.get((kind, width), 4 * len(names))
    rng = np.random.default_rng(config.seed)
    rbm = Rbm(
        rng.normal(0.0, config.init_scale, (len(names), n_hidden)),
        np.zeros(len(names)),
        np.zeros(n_hidden),
        names,
    )
    total = dataset_size(task)
    full_rows = None
    if config.dataset_cap is None:
        full_rows, _ = generate_dataset(task)  # raises if too large to enumerate

    full_batch = (full_rows is not None and config.batch_size is None
                  and len(full_rows) <= FULL_BATCH_LIMIT)
    batch_size = config.batch_size if config.batch_size is not None else 32

    metrics: list[dict] = []
    best_acc, best_rbm, stale = -1.0, rbm, 0
    k = config.k_initial
    stage = 0
    while True:
        for epoch in range(config.epochs_per_stage):
            try:
                if full_batch:
                    data = full_rows
                    for _ in range(config.copies_per_epoch):
                        rbm = cd_step(rbm, data, config, rng, k=k)
                else:
                    if full_rows is not None:
                        data = np.tile(full_rows, (config.copies_per_epoch, 1))
                    else:
                        data, _ = generate_dataset(
                            task, cap=config.dataset_cap * config.copies_per_epoch,
                            rng=rng,
                        )
                    data = data[rng.permutation(len(data))]
                    for start in range(0, len(data), batch_size):
                        rbm = cd_step(rbm, data[start : start + batch_size],
                                      config, rng, k=k)
            except ValueError as exc:
                # Rbm construction rejects non-finite parameters.
                if "non-finite" not in str(exc):
                    raise
                raise FloatingPointError(
                    f"training diverged at stage {stage} epoch {epoch} (k={k})"
                ) from exc
            metrics.append({
                "stage": stage, "k": k, "epoch": epoch,
                "recon_error": reconstruction_error(rbm, data),
                "accuracy": None,
            })
        acc = evaluate_accuracy(
            rbm, task, n_instances=config.eval_instances,
            n_chains=config.eval_chains, n_sweeps=config.eval_sweeps,
            seed=config.seed,
        )
        metrics.append({"stage": stage, "k": k, "epoch": None,
                        "recon_error": None, "accuracy": acc})
        if acc > best_acc:
            best_acc, best_rbm, stale = acc, rbm, 0
        else:
            stale += 1
        if acc >= 1.0 or stale >= config.patience or k >= config.k_max:
            break
        k += 1
        stage += 1
    return best_rbm, metrics
