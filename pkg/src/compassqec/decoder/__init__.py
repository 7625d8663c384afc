"""Matching decoders with optional per-shot soft information."""

from .batch import DecodeReport, data_measurements, decode_batch, measurement_posteriors
from .blossom import max_weight_matching
from .bp import BPResult, bp_marginals, bp_reweight, incidence
from .graph import MatchingGraph, MechanismTable, edge_weight
from .matching import DecodeResult, Decoder, InfeasibleSyndrome, exhaustive_min_weight, min_weight_pairing
from .ml import JointTable, TooManyMechanisms, failure_rate, joint_table, joint_table_enumerated, ml_oracle
from .soft import VARIANTS, SoftConfig, abort_scan, mechanism_rates, postselect, reweight_shot, soft_rate
