"""Exact uniform samplers for decomposable combinatorial structures.

Three exchangeable methods (hard Boltzmann rejection, deterministic
second half, and divide-and-conquer with table-driven completion) over
assemblies, multisets and selections, with brute-force oracles and a
rejection-cost benchmark harness.
"""

from .randomness import LazyUniform, SampleRng
from .structures import (ComponentVector, Stage1Sampler, StructureSpec,
                         TiltedDistribution, component_distribution,
                         distinct_partitions, partitions, sample_component,
                         sample_stage1, set_partitions, tilt_distinct,
                         tilt_set_partition, tilt_unrestricted)
from .tables import (CountTable, build_bell, build_distinct_table,
                     build_partition_table, build_restricted_table,
                     euler_sample, realize_set_partition, unrank_distinct,
                     unrank_partition, unrank_partition_with_rank,
                     unrank_restricted, unrank_restricted_with_rank)
from .oracle import (CensusMismatchError, NonUniformLawError, ObjectCensus,
                     chi_square_two_sample, chi_square_uniformity,
                     enumerate_objects, exact_conditional_law)
from .pdc import (AcceptanceFunction, BudgetExhaustedError, DshSampler,
                  EulerSampler, HardRejectionSampler, PdcRecursiveSampler,
                  RejectionStats, accept_test, boost_factor, choose_index_set,
                  hard_rejection, make_sampler, pdc_dsh, pdc_recursive)
from .bench import (BenchCell, CostReport, predict_cost, run_benchmark,
                    spec_for, write_csv)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
