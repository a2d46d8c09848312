"""Stochastic grammar over triangulated polygons: prior sampling and exact
depth-bounded posterior sampling given a grayscale image."""
from .dp import (InferenceConfig, InferenceError, Posterior, PosteriorSampler, build_posterior,
                 compute_backward_weights, root_marginal, sample_posterior)
from .geometry import (GeometryError, Triangle, TriangulatedPolygon, log_anisotropy, polygon_boundary,
                       shape_score)
from .grammar import (GrammarError, GrammarParams, expected_counts, params_from_expectations,
                      validate_params)
from .grid import Grid
from .likelihood import (EdgeScoreTable, GrayImage, LikelihoodConfig, edge_integral, load_image,
                         precompute_edge_table, smooth_gradient, triangle_log_likelihood)
from .prior import SamplerConfig, empirical_stats, sample_shape, sample_structure

__version__ = "0.1.0"
