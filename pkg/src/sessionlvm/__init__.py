"""Latent-state session recommender.

A session-level Gaussian state pushed through a softmax over items, with an
analytic variational bound plus fixed-point EM for online inference, sampled
(reparameterized) training, amortized encoders, next-item prediction, and an
evaluation harness with popularity and item-KNN baselines.
"""

from .baselines import fit_itemknn, fit_popularity, predict_itemknn
from .bouchard import BouchardState, bouchard_bound, em_infer, lambda_jj
from .data import (
    ItemCatalog,
    Session,
    SessionSet,
    load_sessions,
    read_labels,
    split_by_session,
    to_counts,
    write_sessions,
)
from .encoders import Encoder, encode, init_encoder, load_encoder, save_encoder
from .errors import NumericError, SessionDataError, TrainingError
from .metrics import EvalConfig, dcg_at_k, evaluate_baseline, evaluate_lvm, recall_at_k
from .model import (
    ModelParams,
    Posterior,
    elbo_mc,
    load_params,
    log_joint,
    log_marginal_is,
    log_softmax_probs,
    save_params,
)
from .predict import predict_mc, predict_mean, top_k
from .simulator import GroundTruth, case_study_fixture, random_ground_truth, simulate
from .training import RMSProp, TrainConfig, gradients, session_objective, train

__version__ = "0.1.0"
