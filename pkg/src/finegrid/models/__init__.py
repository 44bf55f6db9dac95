"""The three interchangeable regressors behind one predictor contract."""

from .features import FeatureSpace, neighbor_search, raw_features
from .forest import Forest, RfConfig, Tree, rf_fit, rf_predict, tune_mtry
from .hyppo import HyppoConfig, fit_polynomial, hyppo_predict, hyppo_select_degree
from .knn import KnnConfig, knn_predict
