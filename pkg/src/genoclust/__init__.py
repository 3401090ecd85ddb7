"""Model-based clustering of diploid multi-allelic genotypes with locus selection."""
from .data import AlleleIndex, GenotypeDataset, GenotypeFormatError, genotype_counts, parse_genotypes, read_genotypes
from .em import EmConfig, FitResult, e_step, estimate_beta, m_step, map_assign, run_em
from .estimator import GenotypeMixture
from .likelihood import MixtureParams, ModelSpec, bic, dataset_loglik, hwe_genotype_prob, individual_loglik, model_dimension
from .selection import SelectionConfig, SelectionResult, identifiability_check, k_max_bound, select_model
from .simulate import SimScenario, bundled_scenario, score_recovery, simulate_dataset

__all__ = [
    "AlleleIndex", "GenotypeDataset", "GenotypeFormatError", "genotype_counts", "parse_genotypes",
    "read_genotypes", "EmConfig", "FitResult", "e_step", "estimate_beta", "m_step", "map_assign",
    "run_em", "GenotypeMixture", "MixtureParams", "ModelSpec", "bic", "dataset_loglik",
    "hwe_genotype_prob", "individual_loglik", "model_dimension", "SelectionConfig",
    "SelectionResult", "identifiability_check", "k_max_bound", "select_model", "SimScenario",
    "bundled_scenario", "score_recovery", "simulate_dataset",
]
__version__ = "0.1.0"
