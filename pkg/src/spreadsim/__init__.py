"""Deterministic simulation of stochastic spreading processes on networks.

Two tau-leaping engines (memoryless Markovian and age-dependent renewal),
exact event-driven references, CSR graph tooling with degree-aware
traversal dispatch, and a validation/analysis harness.
"""

from .analysis import (
    FidelityReport,
    epsilon_sweep,
    fidelity,
    multi_topology_sweep,
    parity_check,
    run_ensemble,
    slope_regression,
)
from .exact import gillespie_markov, gillespie_renewal_seir
from .graph import (
    CsrGraph,
    DegreeStats,
    Strategy,
    build_csr,
    build_outgoing,
    degree_stats,
    gen_barabasi_albert,
    gen_erdos_renyi,
    gen_fixed_degree,
    load_graph,
    read_edge_list,
    save_graph,
    select_strategy,
    transpose,
)
from .hazards import (
    LogNormalParams,
    Shedding,
    erfcx_stable,
    lognormal_from_mean_median,
    lognormal_hazard,
    shedding,
)
from .markov import MarkovConfig, influence_gather, markov_step, run_markov
from .models import (
    Holding,
    ModelSpec,
    infectivity_value,
    nodal_rate,
    seir_standard,
    sir_model,
    sis_model,
)
from .renewal import (
    ActiveSet,
    RenewalConfig,
    RenewalState,
    init_renewal_state,
    pressure_gather,
    refresh_active,
    renewal_step,
    run_batch,
    run_renewal,
    set_mixed_precision,
)
from .rng import RngKey, derive_seed, sample_lognormal, uniform
from .trajectory import TrajectoryRecord

__version__ = "0.1.0"
