"""Gromov-Wasserstein transport, free-support barycenters and drivers.

Core objects are gauged measure spaces (:class:`~gwbary.gmspace.GmSpace`),
transport plans (:class:`~gwbary.ot_solvers.Coupling`) and sparse
multi-marginal plans (:class:`~gwbary.coupling_algebra.MultiCoupling`).
The barycenter engine lives in :mod:`gwbary.barycenter`.
"""

from ._kernels import HAVE_NUMBA
from .gmspace import (GaugeKind, GmSpace, from_graph, from_mesh, from_points,
                      load_mesh, load_space, normalize_diameter, save_space,
                      validate)
from .ot_solvers import (Coupling, NonConvergenceError, OtMethod, OtOptions,
                         solve_exact, solve_kl_prox, solve_sinkhorn)
from .coupling_algebra import (Gluing, MultiCoupling, bimarginal, glue_nw,
                               max_rule_without_replacement, melt,
                               nw_corner_coupling)
from .gw_solver import (GwOptions, GwResult, brute_force_gw, gw_functional,
                        local_cost, pairwise_matrix, solve_gw)
from .barycenter import (BarycenterState, BaryOptions, GaussianSpace,
                         GlueRule, StopRule, gaussian_barycenter,
                         gaussian_multi_plan, gwb_loss, iterate, lgw_matrix,
                         mean_gauge, mgw_functional, reweigh)
from .geometry_embed import (EmbeddedBarycenter, euclid_embed, pca_project,
                             transfer_faces)
from .metrics import mre_pcc, nn_confusion, node_correctness

__version__ = "0.1.0"

__all__ = [
    "BarycenterState", "BaryOptions", "Coupling", "EmbeddedBarycenter",
    "GaugeKind", "GaussianSpace", "GlueRule", "Gluing", "GmSpace",
    "GwOptions", "GwResult", "HAVE_NUMBA", "MultiCoupling",
    "NonConvergenceError", "OtMethod", "OtOptions", "StopRule",
    "bimarginal", "brute_force_gw", "euclid_embed", "from_graph",
    "from_mesh", "from_points", "gaussian_barycenter", "gaussian_multi_plan",
    "glue_nw", "gw_functional", "gwb_loss", "iterate", "lgw_matrix",
    "load_mesh", "load_space", "local_cost", "max_rule_without_replacement",
    "mean_gauge", "melt", "mgw_functional", "mre_pcc", "nn_confusion",
    "node_correctness", "normalize_diameter", "nw_corner_coupling",
    "pairwise_matrix", "pca_project", "reweigh", "save_space", "solve_exact",
    "solve_gw", "solve_kl_prox", "solve_sinkhorn", "transfer_faces",
    "validate",
]
