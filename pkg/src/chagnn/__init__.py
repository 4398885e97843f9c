"""Graph injection attacks on GCNs and a homophily-restoring edge-cleaning defense."""
from .attacks import AttackBudget, PoisonedDataset, fga_inject, heuristic_inject, mga_inject, verify_injection_constraints
from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset, save_dataset
from .defense import DefenseConfig, baseline_adaedge, baseline_jaccard, chagnn_run, identify_heterophilous, js_divergence
from .errors import ChagnnError, ConfigError, DegenerateScenarioError, FormatError, InputError, UndefinedRatioError
from .experiment import ExperimentConfig, ResultRecord, run_experiment
from .graph import SparseGraph, build_graph, homophily_ratio, normalize_adjacency, spmm
from .models import GcnParams, TrainConfig, fine_tune, predict, train
from .theory import TheoremScenario, optimal_weights, theorem1_check, theorem2_check

__version__ = "0.1.0"
