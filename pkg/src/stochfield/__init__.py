"""Objective-driven stochastic fields on finite directed graphs."""

from .algebra import IndexSpace, expm_apply, make_index_space, null_space_dim, solve_on_delta
from .dynamics import Chain, StationaryReport, apply_S, averaged_state, evolve, phi_operator, stationary
from .exceptions import FieldError
from .generators import (LocalGeneratorTable, action_operator, assemble_system, commutator_norm, embed_local,
                         lift, project_pi, table_from_triples, validate_local)
from .gradient import GradientTable, fd_gradient, grad_local, grad_system
from .learning import (StrategySet, TrainerConfig, build_random_search, project_to_generator,
                       train_gradient_descent)
from .objective import (ObjectiveOperator, build_objective, check_locality, expected_signal_quadrature,
                        objective_value)
from .propagation import (AdjacencyWeights, PropagationNetwork, Propagator, build_network, check_uniform_value,
                          compose_q, make_pq, propagated_local_gradient, solve_effective_objectives)
from .topology import FieldTopology, agree_on, build_topology, restrict
from .trajectories import (Path, PathStats, entropy_bound_check, field_lagrangian_terms, mc_expected_signal,
                           mc_transition_prob, path_log_weight, sample_path)

__version__ = "0.1.0"
