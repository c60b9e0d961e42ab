"""Pointer-generator summarizer with copy/generate switch analysis and probing."""

from .analysis import (correlation_contributions, ngram_novelty, normalized_entropy, pearson_r,
                       pgen_mass_report, split_correlations)
from .decode import DecodeConfig, DecodeTrace, TokenStep, beam_search_decode, read_traces, write_traces
from .features import FeatureMatrix, build_feature_matrix
from .kn import KnTrigramModel, train_kn_trigram
from .model import ModelConfig, ModelParams, clamp_pgen, decode_step, encode
from .probe import RegressionReport, feature_set_report, nested_anova, ols_fit
from .train import SyntheticTaskSpec, TrainConfig, make_synthetic_corpus, train_model
from .vocab import Vocabulary
from .weights import load_weights, save_weights

__version__ = "0.1.0"
