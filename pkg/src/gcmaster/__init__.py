"""Grand-canonical master equation: generator, spectrum, relaxation."""
from .errors import GcmasterError
from .thermo import (
    ModelSpec,
    PartitionSum,
    TruncationPolicy,
    WeightedVector,
    Witness,
    equilibrium_distribution,
    partition_function,
    weight_sequence,
    weighted_inner_product,
)
from .generator import (
    GeneratorMatrix,
    SymmetricGenerator,
    build_generator,
    symmetrize,
    transition_rate,
    verify_detailed_balance,
)
from .spectral import SpectralDecomposition, decompose, dense_eig_oracle, solve_eigenvalues
from .evolution import InitialData, TrajectoryRecord, evolve, propagate_ode, propagate_spectral
from .decay_lab import DecaySpec, EnvelopeReport, run_decay_experiment

__version__ = "0.1.0"
