"""RBM logic circuits: merge small Boltzmann machines into invertible ones.

Binary arithmetic units (gates, adders, multipliers) are realized as
restricted Boltzmann machines whose low-energy states are exactly the
valid rows of the unit's truth table.  Merging models by summing shared
visible units composes circuits whose joint distribution still
concentrates on valid assignments, so the same model runs forward
(multiply) or backward (divide, factor) depending on which terminals the
Gibbs sampler clamps.
"""

from .model import (
    BinaryState,
    Rbm,
    energy,
    free_energy,
    free_energy_batch,
    hidden_conditional,
    visible_conditional,
)
from .merge import MergedModel, Netlist, compose, disjoint_union, merge_pair, tie_terminals
from .synthesis import (
    DEFAULT_SHARPNESS,
    TruthTable,
    adder_table,
    build_adder,
    build_multiplier,
    builtin_model,
    full_adder_netlist,
    full_adder_table,
    gate,
    multiplier_table,
    rbm_from_truth_table,
)
from .exact import (
    ExactDistribution,
    convergence_bound,
    delta_bound,
    delta_exact,
    exact_joint_distribution,
    exact_visible_distribution,
    gibbs_transition_matrix,
    kl_divergence,
    l1_distance,
    propagate_distribution,
    tv_distance,
)
from .sampler import (
    ChainTrace,
    ClampMask,
    Histogram,
    autocorrelation,
    gibbs_sweep,
    integrated_autocorrelation_time,
    mode_estimate,
    multistart,
    run_chain,
    success_curve,
)
from .training import TrainConfig, cd_step, evaluate_accuracy, generate_dataset, train
from .tasks import (
    SolveResult,
    SolveSettings,
    TaskSpec,
    decode_int,
    encode_int,
    random_task,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryState", "Rbm", "energy", "free_energy", "free_energy_batch",
    "hidden_conditional", "visible_conditional",
    "MergedModel", "Netlist", "compose", "disjoint_union", "merge_pair",
    "tie_terminals",
    "DEFAULT_SHARPNESS", "TruthTable", "adder_table", "build_adder",
    "build_multiplier", "builtin_model", "full_adder_netlist",
    "full_adder_table", "gate", "multiplier_table", "rbm_from_truth_table",
    "ExactDistribution", "convergence_bound", "delta_bound", "delta_exact",
    "exact_joint_distribution", "exact_visible_distribution",
    "gibbs_transition_matrix", "kl_divergence", "l1_distance",
    "propagate_distribution", "tv_distance",
    "ChainTrace", "ClampMask", "Histogram", "autocorrelation", "gibbs_sweep",
    "integrated_autocorrelation_time", "mode_estimate", "multistart",
    "run_chain", "success_curve",
    "TrainConfig", "cd_step", "evaluate_accuracy", "generate_dataset", "train",
    "SolveResult", "SolveSettings", "TaskSpec", "decode_int", "encode_int",
    "random_task", "solve",
]
